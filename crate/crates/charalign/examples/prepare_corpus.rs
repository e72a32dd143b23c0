//! Builds a character-level training corpus from raw text: synthesizes a
//! small English sample, splits it into two halves, rewrites the second
//! half's letters as integer pseudo-characters, and interleaves the sides.
//!
//!     cargo run --example prepare_corpus

use charalign::corpus::SetupId;
use charalign::pipeline::{prepare, PrepareOptions};
use charalign::samples::{write_sample, SampleLang};
use std::fs;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_prepare_corpus");
    fs::create_dir_all(&dir)?;

    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 4000, 7, &input)?;
    println!("input text: {}", input.display());

    let mut opts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    opts.seed = 11;
    opts.max_lines = Some(800);
    let out = prepare(&opts)?;

    println!("corpus dir: {}", out.out_dir.display());
    println!(
        "lines: {} train / {} dev (side a {}, side b {})",
        out.train_lines, out.dev_lines, out.lines_side_a, out.lines_side_b
    );
    println!("vocabulary: {} tokens", out.vocab_size);
    if out.dropped_long > 0 {
        println!("dropped {} over-long lines", out.dropped_long);
    }

    let train = fs::read_to_string(&out.train_path)?;
    println!("\nfirst lines (sides alternate):");
    for line in train.lines().take(6) {
        println!("  {line}");
    }

    let manifest = fs::read_to_string(&out.manifest_path)?;
    println!("\nmanifest excerpt:");
    for line in manifest.lines().take(12) {
        println!("  {line}");
    }
    Ok(())
}
