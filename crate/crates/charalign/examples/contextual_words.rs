//! Aligns the characters of two words position by position using contextual
//! vectors: each word is fed through the encoder as one bracketed sequence,
//! and every source character is matched to its most similar target
//! character at a chosen layer.
//!
//!     cargo run --example contextual_words

use charalign::analysis::context_align;
use charalign::corpus::{CharLine, SetupId};
use charalign::model::checkpoint;
use charalign::pipeline::{prepare, train_run, PrepareOptions, Settings};
use charalign::samples::{write_sample, SampleLang};
use charalign::vocab::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_contextual_words");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 6000, 29, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    popts.seed = 31;
    popts.max_lines = Some(1200);
    let corpus = prepare(&popts)?;

    let settings = Settings {
        layers: 2,
        hidden: 64,
        heads: 2,
        feed_forward: 256,
        epochs: 5,
        batch_size: 32,
        learning_rate: 1e-3,
        ..Settings::default()
    };
    println!("training a reduced model on {} lines...", corpus.train_lines);
    let ckpt = dir.join("model.ckpt");
    let (model, _, files) = train_run(&corpus.out_dir, &ckpt, &settings, 9, 10)?;
    let vocab = Vocabulary::load(&files.vocab_copy)?;

    // "water" against its pseudo-character rewrite: w->122, a->100, t->119,
    // e->104, r->117. A perfect contextual alignment pairs equal offsets.
    let src = CharLine::word("water".chars().map(|c| c.to_string()));
    let tgt = CharLine::word(["122", "100", "119", "104", "117"].map(String::from));
    let layer = model.cfg.layers; // after the final layer norm
    let report = context_align(&model, &vocab, &src, &tgt, layer, true)?;

    println!("\nper-character best match at layer {layer}:");
    for (i, row) in report.rows.iter().enumerate() {
        println!(
            "  pos {i}: {:>3} -> {:<3}  cos {:.3}",
            row.source, row.target, row.similarity
        );
    }

    // The same characters without context, for contrast.
    let single = checkpoint::load(&files.checkpoint)?;
    let rep = charalign::pipeline::alignment_accuracy(&single, &vocab, SetupId::EngFakeBase, 0)?;
    if let (Some(c), Some(a)) = (rep.correct_count, rep.accuracy) {
        println!("\nwhole-alphabet accuracy without context: {}/{} = {:.3}", c, rep.rows.len(), a);
    }
    Ok(())
}
