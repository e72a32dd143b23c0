//! Compares corruption policies for masked-character training at toy scale.
//! Each policy triple gives the percentage of selected positions that are
//! replaced by the mask token, kept unchanged, or replaced by a random
//! character; every variant trains from the same seeds on the same corpus.
//!
//!     cargo run --example masking_ablation

use charalign::corpus::SetupId;
use charalign::pipeline::{ablate_masking, prepare, PrepareOptions, Settings};
use charalign::samples::{write_sample, SampleLang};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_masking_ablation");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 5000, 53, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    popts.seed = 59;
    popts.max_lines = Some(1000);
    let corpus = prepare(&popts)?;

    let settings = Settings {
        layers: 2,
        hidden: 64,
        heads: 2,
        feed_forward: 256,
        epochs: 4,
        batch_size: 32,
        learning_rate: 1e-3,
        ..Settings::default()
    };
    println!(
        "training one reduced model per policy on {} lines...",
        corpus.train_lines
    );
    let report = ablate_masking(
        &corpus.out_dir,
        SetupId::EngFakeBase,
        &settings,
        &["80/10/10", "80/20/0", "60/20/20", "50/50/0"],
        17,
        18,
        &dir,
    )?;

    println!("\nmask/keep/random  dev_acc  alignment");
    for row in &report.rows {
        println!(
            "{:>16}  {:>7.4}  {:>2}/{} = {:.3}",
            row.variant,
            row.dev_accuracy,
            row.alignment_correct,
            row.alignment_total,
            row.alignment_accuracy
        );
    }
    Ok(())
}
