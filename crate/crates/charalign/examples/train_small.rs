//! Trains a reduced encoder with masked-character prediction on a small
//! interleaved corpus and prints the per-epoch record.
//!
//!     cargo run --example train_small

use charalign::corpus::SetupId;
use charalign::pipeline::{prepare, train_run, PrepareOptions, Settings};
use charalign::samples::{write_sample, SampleLang};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_train_small");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 3000, 3, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    popts.seed = 5;
    popts.max_lines = Some(600);
    let corpus = prepare(&popts)?;
    println!(
        "corpus: {} train / {} dev lines, vocab {}",
        corpus.train_lines, corpus.dev_lines, corpus.vocab_size
    );

    // A fraction of the default size so the run finishes in seconds.
    let settings = Settings {
        layers: 2,
        hidden: 64,
        heads: 2,
        feed_forward: 256,
        epochs: 3,
        batch_size: 32,
        learning_rate: 3e-4,
        ..Settings::default()
    };
    let ckpt = dir.join("model.ckpt");
    let (model, record, files) = train_run(&corpus.out_dir, &ckpt, &settings, 1, 2)?;

    println!("parameters: {}", model.param_count());
    println!("epoch  train_loss  dev_loss  dev_acc  seconds");
    for e in &record.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>7.4}  {:>7.1}",
            e.epoch, e.train_loss, e.dev_loss, e.dev_accuracy, e.seconds
        );
    }
    println!("\ncheckpoint: {}", files.checkpoint.display());
    println!("run record: {}", files.run_record_path.display());
    Ok(())
}
