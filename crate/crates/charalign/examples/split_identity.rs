//! Probes what the encoder does when one character is split in two: in the
//! f1/f2 corpus variant every `f` on the rewritten side becomes the token
//! pair `200 201`. After training, the mean vector of the pair fed together
//! is compared against each half alone and against the other letters.
//!
//!     cargo run --example split_identity

use charalign::analysis::{cosine, Alphabet};
use charalign::corpus::SetupId;
use charalign::model::{char_embedding, joint_representation};
use charalign::pipeline::{prepare, train_run, PrepareOptions, Settings};
use charalign::samples::{write_sample, SampleLang};
use charalign::vocab::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_split_identity");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 8000, 41, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeF1F2, &input, dir.join("corpus"));
    popts.seed = 43;
    popts.max_lines = Some(1500);
    let corpus = prepare(&popts)?;

    let settings = Settings {
        layers: 2,
        hidden: 64,
        heads: 2,
        feed_forward: 256,
        epochs: 6,
        batch_size: 32,
        learning_rate: 1e-3,
        ..Settings::default()
    };
    println!("training a reduced model on {} lines...", corpus.train_lines);
    let ckpt = dir.join("model.ckpt");
    let (model, _, files) = train_run(&corpus.out_dir, &ckpt, &settings, 13, 14)?;
    let vocab = Vocabulary::load(&files.vocab_copy)?;

    let f = char_embedding(&model, &vocab, "f", 0, false)?;
    let f1 = char_embedding(&model, &vocab, "200", 0, false)?;
    let f2 = char_embedding(&model, &vocab, "201", 0, false)?;
    let joint = joint_representation(&model, &vocab, &["200".into(), "201".into()], 0)?;

    println!("\ncosine to the source letter f:");
    println!("  f1 alone      {:.3}", cosine(&f, &f1)?);
    println!("  f2 alone      {:.3}", cosine(&f, &f2)?);
    println!("  f1,f2 jointly {:.3}", cosine(&f, &joint)?);

    // Rank the joint vector against every target character's vector.
    let tgt = Alphabet::fake_lower_f1f2(100);
    let mut scored: Vec<(String, f32)> = Vec::new();
    for (label, token) in tgt.labels().iter().zip(tgt.tokens()) {
        let v = char_embedding(&model, &vocab, token, 0, false)?;
        scored.push((label.clone(), cosine(&joint, &v)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("\nclosest target characters to the joint f1,f2 vector:");
    for (label, sim) in scored.iter().take(5) {
        println!("  {:<3} {:.3}", label, sim);
    }
    Ok(())
}
