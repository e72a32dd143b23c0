//! Builds every pinned measurement run into `experiments/` (override with
//! CHARALIGN_EXPERIMENTS): the full-scale identity alignment, the f1/f2
//! split probe, the matched language-proximity trio, the trigram
//! restriction, the static baseline, and the repeatability pair. Hours of
//! CPU time from scratch; finished runs are skipped, so it can be
//! interrupted and resumed.
//!
//!     cargo run --release --example full_study

use charalign::analysis::AlignmentReport;
use charalign::study;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = study::study_root();
    println!("building runs under {}", root.display());
    study::build_all(&root)?;

    println!("\nalignment summary:");
    let mut specs = vec![study::MAIN, study::F1F2];
    specs.extend(study::MATCHED);
    for spec in specs {
        let bundle = study::RunBundle::at(&root, spec.name);
        let report = AlignmentReport::load_json(&bundle.report)?;
        if let (Some(c), Some(a)) = (report.correct_count, report.accuracy) {
            println!(
                "  {:<16} {:>2}/{} = {:.3}",
                spec.name,
                c,
                report.rows.len(),
                a
            );
        }
    }
    Ok(())
}
