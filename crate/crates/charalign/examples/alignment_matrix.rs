//! Measures how well two alphabets line up in a trained encoder's embedding
//! space: builds the cosine-similarity matrix between source and target
//! character representations, picks each source character's best match, and
//! scores the matches against the known character correspondence.
//!
//!     cargo run --example alignment_matrix

use charalign::corpus::SetupId;
use charalign::pipeline::{align_run, prepare, train_run, AlignOptions, PrepareOptions, Settings};
use charalign::samples::{write_sample, SampleLang};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_alignment_matrix");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 8000, 17, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    popts.seed = 23;
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
    train_run(&corpus.out_dir, &ckpt, &settings, 3, 4)?;

    let mut aopts = AlignOptions::new(&ckpt, SetupId::EngFakeBase, dir.join("align"));
    aopts.layer = 0;
    let out = align_run(&aopts)?;

    println!("\nbest match per source character (+ marks a correct one):");
    for row in &out.report.rows {
        let mark = if row.correct == Some(true) { '+' } else { ' ' };
        println!(
            "  {mark} {:>2} -> {:<3}  cos {:.3}",
            row.source, row.target, row.similarity
        );
    }
    if let (Some(c), Some(a)) = (out.report.correct_count, out.report.accuracy) {
        println!("\naccuracy: {}/{} = {:.3}", c, out.report.rows.len(), a);
    }
    println!("matrix csv: {}", out.csv_path.display());
    println!("matrix pgm: {}", out.pgm_path.display());
    println!("report:     {}", out.report_path.display());
    Ok(())
}
