//! Command-line front end: prepare corpora, train encoders, evaluate
//! cross-alphabet alignment, inspect contextual alignments, and run the
//! ablation suite. Exit codes: 0 success, 2 usage or configuration error,
//! 3 numeric failure, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use charalign::analysis::AnalysisError;
use charalign::baseline::StaticConfig;
use charalign::corpus::SetupId;
use charalign::model::checkpoint::CheckpointError;
use charalign::pipeline::{
    self, ablate_masking, ablate_paired, ablate_static, align_run, prepare, AlignOptions,
    PipelineError, PrepareOptions, Settings,
};
use charalign::trainer::TrainError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "charalign",
    version,
    about = "Character-level MLM encoders and cross-alphabet embedding alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings file plus the flag overrides shared by training commands.
/// Flags win over the file; the file wins over built-in defaults.
#[derive(Args, Clone)]
struct SettingsArgs {
    /// JSON settings file; any subset of fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// MASK/keep/random percentages, e.g. 80/10/10
    #[arg(long)]
    masking: Option<String>,
    #[arg(long)]
    select_prob: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    feed_forward: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

impl SettingsArgs {
    fn resolve(&self) -> Result<Settings, PipelineError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { s.$field = v.clone(); })*
            };
        }
        take!(epochs, batch_size, learning_rate, masking, select_prob);
        take!(layers, hidden, heads, feed_forward, max_len, dropout);
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build train/dev line files, vocabulary, and manifest for a setup
    Prepare {
        /// One of: EngFake_base, EngFake_f1f2, EngFake_overlap3,
        /// EngFake_trigram, EngDeu, EngEll, DeuEll
        #[arg(long)]
        setup: String,
        /// First (or only) input text file
        #[arg(long)]
        input_a: PathBuf,
        /// Second input text file; required for EngDeu, EngEll, DeuEll
        #[arg(long)]
        input_b: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Corpus seed: controls the dev holdout draw
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on processed lines per side
        #[arg(long)]
        max_lines: Option<usize>,
        #[arg(long, default_value_t = 0.30)]
        dev_fraction: f64,
        /// Lines longer than this many tokens are dropped
        #[arg(long, default_value_t = 64)]
        max_len: usize,
    },
    /// Train an encoder on a prepared corpus directory
    Train {
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Checkpoint output path
        #[arg(long)]
        out: PathBuf,
        /// Model seed: controls parameter initialization
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        /// Train seed: controls shuffling, masking, and dropout
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Not supported; training always starts from scratch
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Score character alignment between two alphabets from a checkpoint
    Align {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary path; defaults to the checkpoint's sibling vocab
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Setup name; chooses the alphabets and the default gold map
        #[arg(long)]
        setup: String,
        /// Trace layer to read embeddings from (0 = embedding layer)
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// Gold map TSV overriding the setup default
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Source alphabet overriding the setup default: latin_lower,
        /// latin_all, greek_lower, fake_lower, fake_all, or fake_f1f2.
        /// Without --gold, overrides score against identity gold.
        #[arg(long)]
        src_alphabet: Option<String>,
        /// Target alphabet overriding the setup default; same names
        #[arg(long)]
        tgt_alphabet: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Feed each character as <s> c </s> instead of alone
        #[arg(long)]
        bracket: bool,
    },
    /// Align the characters of one word pair using contextual vectors
    Context {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        src_word: String,
        #[arg(long)]
        tgt_word: String,
        #[arg(long, default_value_t = 5)]
        layer: usize,
        /// Drop positional embeddings from the forward pass
        #[arg(long)]
        no_positions: bool,
        /// Report JSON path; a manifest is written beside it
        #[arg(long, default_value = "context.json")]
        out: PathBuf,
    },
    /// Run one ablation end to end and report accuracy deltas
    Ablate {
        #[arg(long, value_enum)]
        which: Ablation,
        /// Prepared base corpus directory
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Prepared variant corpus directory (trigram, overlap3)
        #[arg(long)]
        variant_dir: Option<PathBuf>,
        /// Existing encoder checkpoint (static)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Base setup for alphabets and gold
        #[arg(long, default_value = "EngFake_base")]
        setup: String,
        /// Masking triples to sweep, comma separated
        #[arg(long, default_value = "80/20/0,60/20/20,50/50/0")]
        triples: String,
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where intermediate checkpoints go; defaults to the out dir
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Report JSON path
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: SettingsArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Masking,
    Overlap3,
    Trigram,
    Static,
}

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_class(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Train(TrainError::NonFinite { .. }) => EXIT_NUMERIC,
        PipelineError::Io { .. } => EXIT_IO,
        PipelineError::Checkpoint(CheckpointError::Io(_)) => EXIT_IO,
        PipelineError::Vocab(charalign::vocab::VocabError::Io(_)) => EXIT_IO,
        PipelineError::Analysis(AnalysisError::Io(_)) => EXIT_IO,
        PipelineError::Baseline(charalign::baseline::BaselineError::Io(_)) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn parse_setup(name: &str) -> Result<SetupId, PipelineError> {
    Ok(name.parse().map_err(charalign::corpus::CorpusError::from)?)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Prepare {
            setup,
            input_a,
            input_b,
            out_dir,
            seed,
            max_lines,
            dev_fraction,
            max_len,
        } => {
            let opts = PrepareOptions {
                setup: parse_setup(&setup)?,
                input_a,
                input_b,
                out_dir,
                seed,
                max_lines,
                dev_fraction,
                max_len,
            };
            let out = prepare(&opts)?;
            println!(
                "prepared {}: {} train lines, {} dev lines, vocab {}, sides {}/{}, dropped {}",
                opts.setup,
                out.train_lines,
                out.dev_lines,
                out.vocab_size,
                out.lines_side_a,
                out.lines_side_b,
                out.dropped_long
            );
            println!("manifest: {}", out.manifest_path.display());
            Ok(())
        }
        Command::Train {
            corpus_dir,
            out,
            model_seed,
            seed,
            resume,
            settings,
        } => {
            if resume.is_some() {
                eprintln!("error: resuming from a checkpoint is not supported; training always starts from scratch");
                std::process::exit(EXIT_USAGE as i32);
            }
            let s = settings.resolve()?;
            let (_, record, outputs) = pipeline::train_run(&corpus_dir, &out, &s, model_seed, seed)?;
            if let Some(last) = record.epochs.last() {
                println!(
                    "trained {} epochs; final train loss {:.4}, dev loss {:.4}, dev accuracy {:.4}",
                    record.epochs.len(),
                    last.train_loss,
                    last.dev_loss,
                    last.dev_accuracy
                );
            }
            println!("checkpoint: {}", outputs.checkpoint.display());
            println!("manifest: {}", outputs.manifest_path.display());
            Ok(())
        }
        Command::Align {
            checkpoint,
            vocab,
            setup,
            layer,
            gold,
            src_alphabet,
            tgt_alphabet,
            out_dir,
            bracket,
        } => {
            let opts = AlignOptions {
                checkpoint,
                vocab,
                setup: parse_setup(&setup)?,
                layer,
                gold,
                src_alphabet,
                tgt_alphabet,
                out_dir,
                bracket,
            };
            let out = align_run(&opts)?;
            let report = &out.report;
            for row in &report.rows {
                let mark = match row.correct {
                    Some(true) => " +",
                    Some(false) => "  ",
                    None => "  ",
                };
                println!("{}{} -> {}  {:.4}", mark, row.source, row.target, row.similarity);
            }
            println!(
                "accuracy: {}/{}",
                report.correct_count.unwrap_or(0),
                report.rows.len()
            );
            println!("report: {}", out.report_path.display());
            Ok(())
        }
        Command::Context {
            checkpoint,
            vocab,
            src_word,
            tgt_word,
            layer,
            no_positions,
            out,
        } => {
            let (report, manifest_path) = pipeline::context_run_to(
                &checkpoint,
                vocab.as_deref(),
                &src_word,
                &tgt_word,
                layer,
                !no_positions,
                &out,
            )?;
            for row in &report.rows {
                println!("{} -> {}  {:.2}", row.source, row.target, row.similarity);
            }
            println!("report: {}", out.display());
            println!("manifest: {}", manifest_path.display());
            Ok(())
        }
        Command::Ablate {
            which,
            corpus_dir,
            variant_dir,
            checkpoint,
            setup,
            triples,
            model_seed,
            seed,
            work_dir,
            out,
            settings,
        } => {
            let s = settings.resolve()?;
            let setup = parse_setup(&setup)?;
            let work = work_dir.unwrap_or_else(|| {
                out.parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or(Path::new("."))
                    .to_path_buf()
            });
            std::fs::create_dir_all(&work).map_err(|e| PipelineError::Io {
                path: work.clone(),
                source: e,
            })?;
            fn need(opt: Option<PathBuf>, flag: &str) -> PathBuf {
                opt.unwrap_or_else(|| {
                    eprintln!("error: --{flag} is required for this ablation");
                    std::process::exit(EXIT_USAGE as i32);
                })
            }
            let mut manifest_inputs = vec![corpus_dir.join("manifest.json")];
            if let Some(dir) = &variant_dir {
                manifest_inputs.push(dir.join("manifest.json"));
            }
            if let Some(ckpt) = &checkpoint {
                manifest_inputs.push(ckpt.clone());
            }
            let which_name = match which {
                Ablation::Masking => "masking",
                Ablation::Trigram => "trigram",
                Ablation::Overlap3 => "overlap3",
                Ablation::Static => "static",
            };
            let report = match which {
                Ablation::Masking => {
                    let list: Vec<&str> = triples.split(',').map(str::trim).collect();
                    ablate_masking(&corpus_dir, setup, &s, &list, model_seed, seed, &work)?
                }
                Ablation::Trigram => ablate_paired(
                    "trigram",
                    &corpus_dir,
                    setup,
                    &need(variant_dir, "variant-dir"),
                    SetupId::EngFakeTrigram,
                    &s,
                    model_seed,
                    seed,
                    &work,
                )?,
                Ablation::Overlap3 => ablate_paired(
                    "overlap3",
                    &corpus_dir,
                    setup,
                    &need(variant_dir, "variant-dir"),
                    SetupId::EngFakeOverlap3,
                    &s,
                    model_seed,
                    seed,
                    &work,
                )?,
                Ablation::Static => ablate_static(
                    &corpus_dir,
                    setup,
                    &need(checkpoint, "checkpoint"),
                    &StaticConfig {
                        seed,
                        ..StaticConfig::default()
                    },
                )?,
            };
            for row in &report.rows {
                println!(
                    "{:<12} alignment {}/{} ({:.3})  dev accuracy {:.3}",
                    row.variant,
                    row.alignment_correct,
                    row.alignment_total,
                    row.alignment_accuracy,
                    row.dev_accuracy
                );
            }
            report.save_json(&out)?;
            let manifest_path = pipeline::write_ablation_manifest(
                &out,
                which_name,
                setup,
                serde_json::json!({
                    "settings": serde_json::to_value(&s)?,
                    "triples": triples,
                }),
                &[("model", model_seed), ("train", seed)],
                &manifest_inputs,
            )?;
            println!("report: {}", out.display());
            println!("manifest: {}", manifest_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}
