//! Trains skip-gram character vectors with negative sampling on the same
//! interleaved lines the encoder sees, then scores their cross-alphabet
//! alignment. A sanity floor for the contextual model: static co-occurrence
//! alone already aligns related alphabets to some degree.
//!
//!     cargo run --example static_baseline

use charalign::analysis::{max_align, score_alignment, Alphabet};
use charalign::baseline::{static_similarity_matrix, train_static, StaticConfig};
use charalign::corpus::SetupId;
use charalign::pipeline::{gold_for_setup, load_corpus_dir, prepare, PrepareOptions};
use charalign::samples::{write_sample, SampleLang};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("charalign_static_baseline");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("english.txt");
    write_sample(SampleLang::English, 20000, 61, &input)?;

    let mut popts = PrepareOptions::new(SetupId::EngFakeBase, &input, dir.join("corpus"));
    popts.seed = 67;
    let corpus_out = prepare(&popts)?;
    let corpus = load_corpus_dir(&corpus_out.out_dir)?;

    let mut lines = corpus.train.clone();
    lines.extend(corpus.dev.iter().cloned());
    println!("training static vectors on {} lines...", lines.len());
    let cfg = StaticConfig {
        seed: 71,
        ..StaticConfig::default()
    };
    let table = train_static(&lines, &cfg)?;
    println!("table: {} tokens x {} dims", table.len(), table.dim());

    let src = Alphabet::latin_lower();
    let tgt = Alphabet::fake_lower(100);
    let matrix = static_similarity_matrix(&table, &src, &tgt)?;
    let rows = max_align(&matrix);
    let gold = gold_for_setup(SetupId::EngFakeBase);
    let report = score_alignment(&rows, &gold)?;

    println!("\nbest match per source character (+ marks a correct one):");
    for row in &report.rows {
        let mark = if row.correct == Some(true) { '+' } else { ' ' };
        println!(
            "  {mark} {:>2} -> {:<3}  cos {:.3}",
            row.source, row.target, row.similarity
        );
    }
    if let (Some(c), Some(a)) = (report.correct_count, report.accuracy) {
        println!("\naccuracy: {}/{} = {:.3}", c, report.rows.len(), a);
    }
    Ok(())
}
