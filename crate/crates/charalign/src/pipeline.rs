//! End-to-end orchestration shared by the command-line tool, the examples,
//! and the integration tests: corpus preparation, training runs, alignment
//! evaluation, contextual alignment, ablations, and the run manifests that
//! pin every artifact to its inputs and seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    self, export_csv, export_pgm, max_align, score_alignment, similarity_matrix, Alphabet,
    AlignmentReport, AnalysisError, GoldMap,
};
use crate::baseline::{static_similarity_matrix, train_static, BaselineError, StaticConfig};
use crate::corpus::{
    build_fake_mapping, english_alphabet, interleave, make_f1f2_table, make_overlap3_table,
    normalize_german, normalize_greek, split_dev, split_to_char_lines, strip_digits, trigramize,
    CharLine, CorpusError, MappingTable, SetupId,
};
use crate::model::checkpoint::{self, CheckpointError};
use crate::model::{EncoderModel, ModelConfig, ModelError};
use crate::trainer::{
    evaluate_dev, train, MaskingPolicy, RunRecord, TrainConfig, TrainError,
};
use crate::vocab::{VocabError, Vocabulary};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Embedded default gold map for Latin↔Greek setups.
pub const LATIN_GREEK_GOLD: &str = include_str!("../data/gold/eng_ell.tsv");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("setup {0} needs a second input file")]
    MissingInputB(SetupId),
    #[error("input produced no usable lines")]
    EmptyCorpus,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown alphabet {0:?} (expected latin_lower, latin_all, greek_lower, fake_lower, fake_all, or fake_f1f2)")]
    UnknownAlphabet(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// All tunable knobs of a run, in the shape used for config files. Every
/// field has a default, so a config file may state only what it overrides.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Settings {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub feed_forward: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_frac: f64,
    pub select_prob: f64,
    /// MASK/keep/random percentages, e.g. "80/10/10".
    pub masking: String,
    pub dev_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let m = ModelConfig::default_with_vocab(6);
        let t = TrainConfig::default();
        let p = MaskingPolicy::default();
        Self {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            feed_forward: m.feed_forward,
            max_len: m.max_len,
            dropout: m.dropout,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            warmup_frac: t.warmup_frac,
            select_prob: p.select_prob,
            masking: "80/10/10".to_string(),
            dev_fraction: 0.30,
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn model_config(&self, vocab_size: usize, model_seed: u64) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            heads: self.heads,
            feed_forward: self.feed_forward,
            max_len: self.max_len,
            vocab_size,
            dropout: self.dropout,
            seed: model_seed,
        }
    }

    pub fn train_config(&self, train_seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            warmup_frac: self.warmup_frac,
            seed: train_seed,
            ..TrainConfig::default()
        }
    }

    pub fn masking_policy(&self) -> Result<MaskingPolicy, TrainError> {
        let mut p = MaskingPolicy::parse_triple(&self.masking)?;
        p.select_prob = self.select_prob;
        p.validate()?;
        Ok(p)
    }
}

/// Size and checksum of one file an operation read or wrote.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileStamp {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileStamp {
    pub fn of(path: &Path) -> Result<Self, PipelineError> {
        let data = std::fs::read(path).map_err(io_err(path))?;
        let mut hasher = Sha256::new();
        hasher.update(&data);
        Ok(Self {
            path: path.to_string_lossy().into_owned(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", hasher.finalize()),
        })
    }
}

/// Reproducibility record written next to every command's outputs: the
/// seeds, the config snapshot, and checksums of all inputs and outputs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub setup: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            setup: None,
            seeds: BTreeMap::new(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Inputs to corpus preparation.
#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub setup: SetupId,
    pub input_a: PathBuf,
    /// Required for two-input setups, ignored otherwise.
    pub input_b: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Cap on processed lines per side.
    pub max_lines: Option<usize>,
    pub dev_fraction: f64,
    pub max_len: usize,
}

impl PrepareOptions {
    pub fn new(setup: SetupId, input_a: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            setup,
            input_a: input_a.into(),
            input_b: None,
            out_dir: out_dir.into(),
            seed: 0,
            max_lines: None,
            dev_fraction: 0.30,
            max_len: ModelConfig::default_with_vocab(6).max_len,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrepareOutputs {
    pub out_dir: PathBuf,
    pub train_path: PathBuf,
    pub dev_path: PathBuf,
    pub vocab_path: PathBuf,
    pub manifest_path: PathBuf,
    pub train_lines: usize,
    pub dev_lines: usize,
    pub vocab_size: usize,
    pub lines_side_a: usize,
    pub lines_side_b: usize,
    pub dropped_long: usize,
}

#[derive(Clone, Copy)]
enum Lang {
    Eng,
    Deu,
    Ell,
}

impl Lang {
    fn normalize(self, text: &str) -> String {
        match self {
            Lang::Eng => text.to_string(),
            Lang::Deu => normalize_german(text),
            Lang::Ell => normalize_greek(text),
        }
    }
}

fn side_languages(setup: SetupId) -> (Lang, Lang) {
    match setup {
        SetupId::EngFakeBase
        | SetupId::EngFakeF1F2
        | SetupId::EngFakeOverlap3
        | SetupId::EngFakeTrigram => (Lang::Eng, Lang::Eng),
        SetupId::EngDeu => (Lang::Eng, Lang::Deu),
        SetupId::EngEll => (Lang::Eng, Lang::Ell),
        SetupId::DeuEll => (Lang::Deu, Lang::Ell),
    }
}

/// The substitution applied to the second side, when the sides share script.
pub fn mapping_for_setup(setup: SetupId) -> Result<Option<MappingTable>, CorpusError> {
    if !setup.uses_mapping() {
        return Ok(None);
    }
    let base = build_fake_mapping(&english_alphabet(), 100)?;
    Ok(Some(match setup {
        SetupId::EngFakeF1F2 => make_f1f2_table(&base),
        SetupId::EngFakeOverlap3 => make_overlap3_table(&base),
        _ => base,
    }))
}

fn read_side(path: &Path, lang: Lang) -> Result<Vec<CharLine>, PipelineError> {
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(split_to_char_lines(&lang.normalize(&strip_digits(&raw))))
}

/// Runs the full preparation for one setup: read and normalize inputs,
/// synthesize or map the second side, interleave, hold out the dev fraction,
/// build the vocabulary, and write all artifacts plus a manifest.
pub fn prepare(opts: &PrepareOptions) -> Result<PrepareOutputs, PipelineError> {
    let setup = opts.setup;
    let (lang_a, lang_b) = side_languages(setup);

    let (mut side_a, mut side_b) = if setup.single_input() {
        let mut all = read_side(&opts.input_a, lang_a)?;
        let second = all.split_off(all.len() / 2);
        (all, second)
    } else {
        let b_path = opts
            .input_b
            .as_ref()
            .ok_or(PipelineError::MissingInputB(setup))?;
        (read_side(&opts.input_a, lang_a)?, read_side(b_path, lang_b)?)
    };

    if let Some(table) = mapping_for_setup(setup)? {
        side_b = side_b.iter().map(|l| table.apply(l)).collect();
    }
    if setup == SetupId::EngFakeTrigram {
        side_a = side_a.iter().flat_map(trigramize).collect();
        side_b = side_b.iter().flat_map(trigramize).collect();
    }

    let mut dropped_long = 0usize;
    let mut finish = |mut side: Vec<CharLine>| {
        side.retain(|l| {
            let fits = l.tokens.len() <= opts.max_len;
            dropped_long += usize::from(!fits);
            fits
        });
        if let Some(cap) = opts.max_lines {
            side.truncate(cap);
        }
        side
    };
    let side_a = finish(side_a);
    let side_b = finish(side_b);
    let (lines_side_a, lines_side_b) = (side_a.len(), side_b.len());
    if lines_side_a == 0 || lines_side_b == 0 {
        return Err(PipelineError::EmptyCorpus);
    }

    let all = interleave(side_a, side_b);
    let vocab = Vocabulary::build(&all);
    let (train_lines, dev_lines) = split_dev(all, opts.dev_fraction, opts.seed)?;

    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let train_path = opts.out_dir.join("train.txt");
    let dev_path = opts.out_dir.join("dev.txt");
    let vocab_path = opts.out_dir.join("vocab.json");
    let manifest_path = opts.out_dir.join("manifest.json");

    let write_lines = |path: &Path, lines: &[CharLine]| -> Result<(), PipelineError> {
        let mut text = String::new();
        for l in lines {
            text.push_str(&l.to_string());
            text.push('\n');
        }
        std::fs::write(path, text).map_err(io_err(path))
    };
    write_lines(&train_path, &train_lines)?;
    write_lines(&dev_path, &dev_lines)?;
    vocab.save(&vocab_path)?;

    let mut manifest = Manifest::new("prepare");
    manifest.setup = Some(setup.name().to_string());
    manifest.seeds.insert("corpus".into(), opts.seed);
    manifest.config = serde_json::json!({
        "dev_fraction": opts.dev_fraction,
        "max_lines": opts.max_lines,
        "max_len": opts.max_len,
    });
    manifest.inputs.push(FileStamp::of(&opts.input_a)?);
    if let Some(b) = &opts.input_b {
        if !setup.single_input() {
            manifest.inputs.push(FileStamp::of(b)?);
        }
    }
    for p in [&train_path, &dev_path, &vocab_path] {
        manifest.outputs.push(FileStamp::of(p)?);
    }
    manifest.notes.insert(
        "greek_deaccented".into(),
        serde_json::json!(matches!(lang_a, Lang::Ell) || matches!(lang_b, Lang::Ell)),
    );
    manifest
        .notes
        .insert("mapping".into(), serde_json::json!(setup.uses_mapping()));
    manifest
        .notes
        .insert("lines_side_a".into(), serde_json::json!(lines_side_a));
    manifest
        .notes
        .insert("lines_side_b".into(), serde_json::json!(lines_side_b));
    manifest
        .notes
        .insert("dropped_long_lines".into(), serde_json::json!(dropped_long));
    manifest
        .notes
        .insert("vocab_size".into(), serde_json::json!(vocab.len()));
    manifest.save(&manifest_path)?;

    Ok(PrepareOutputs {
        out_dir: opts.out_dir.clone(),
        train_path,
        dev_path,
        vocab_path,
        manifest_path,
        train_lines: train_lines.len(),
        dev_lines: dev_lines.len(),
        vocab_size: vocab.len(),
        lines_side_a,
        lines_side_b,
        dropped_long,
    })
}

/// A prepared corpus directory loaded back into memory.
pub struct PreparedCorpus {
    pub train: Vec<CharLine>,
    pub dev: Vec<CharLine>,
    pub vocab: Vocabulary,
}

pub fn read_lines_file(path: &Path) -> Result<Vec<CharLine>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(CharLine::parse)
        .collect())
}

pub fn load_corpus_dir(dir: &Path) -> Result<PreparedCorpus, PipelineError> {
    Ok(PreparedCorpus {
        train: read_lines_file(&dir.join("train.txt"))?,
        dev: read_lines_file(&dir.join("dev.txt"))?,
        vocab: Vocabulary::load(&dir.join("vocab.json"))?,
    })
}

pub fn encode_lines(vocab: &Vocabulary, lines: &[CharLine]) -> Vec<Vec<u32>> {
    lines.iter().map(|l| vocab.encode(l)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub vocab_copy: PathBuf,
    pub run_record_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Trains a fresh model on a prepared corpus directory and writes the
/// checkpoint, a copy of the vocabulary beside it, the per-epoch record, and
/// a manifest. Returns the in-memory model for immediate analysis.
pub fn train_run(
    corpus_dir: &Path,
    out_checkpoint: &Path,
    settings: &Settings,
    model_seed: u64,
    train_seed: u64,
) -> Result<(EncoderModel, RunRecord, TrainOutputs), PipelineError> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let mut model = EncoderModel::init(settings.model_config(corpus.vocab.len(), model_seed))?;
    let train_ids = encode_lines(&corpus.vocab, &corpus.train);
    let dev_ids = encode_lines(&corpus.vocab, &corpus.dev);
    let tc = settings.train_config(train_seed);
    let policy = settings.masking_policy()?;
    let record = train(
        &mut model,
        &train_ids,
        &dev_ids,
        &tc,
        &policy,
        &corpus.vocab,
    )?;

    if let Some(parent) = out_checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    checkpoint::save(&model, out_checkpoint)?;
    let vocab_copy = out_checkpoint.with_extension("vocab.json");
    corpus.vocab.save(&vocab_copy)?;
    let run_record_path = out_checkpoint.with_extension("run.jsonl");
    record.save_jsonl(&run_record_path)?;

    let mut manifest = Manifest::new("train");
    manifest.seeds.insert("model".into(), model_seed);
    manifest.seeds.insert("train".into(), train_seed);
    manifest.config = serde_json::to_value(settings)?;
    for name in ["train.txt", "dev.txt", "vocab.json"] {
        manifest.inputs.push(FileStamp::of(&corpus_dir.join(name))?);
    }
    manifest.outputs.push(FileStamp::of(out_checkpoint)?);
    manifest.outputs.push(FileStamp::of(&vocab_copy)?);
    manifest.notes.insert(
        "parameters".into(),
        serde_json::json!(model.param_count()),
    );
    manifest.notes.insert(
        "final_dev_accuracy".into(),
        serde_json::json!(record.epochs.last().map(|e| e.dev_accuracy)),
    );
    let manifest_path = out_checkpoint.with_extension("manifest.json");
    manifest.save(&manifest_path)?;

    Ok((
        model,
        record,
        TrainOutputs {
            checkpoint: out_checkpoint.to_path_buf(),
            vocab_copy,
            run_record_path,
            manifest_path,
        },
    ))
}

/// Evaluation alphabets for a setup: sources on rows, targets on columns.
pub fn alphabets_for_setup(setup: SetupId) -> (Alphabet, Alphabet) {
    match setup {
        SetupId::EngFakeBase | SetupId::EngFakeTrigram | SetupId::EngFakeOverlap3 => {
            (Alphabet::latin_lower(), Alphabet::fake_lower(100))
        }
        SetupId::EngFakeF1F2 => (Alphabet::latin_lower(), Alphabet::fake_lower_f1f2(100)),
        // the second side is fake-mapped, so its letters live at 100..126
        SetupId::EngDeu => (Alphabet::latin_lower(), Alphabet::fake_lower(100)),
        SetupId::EngEll | SetupId::DeuEll => (Alphabet::latin_lower(), Alphabet::greek_lower()),
    }
}

/// Default gold map for a setup: identity for mapped same-script pairs, the
/// shipped conventional table for Latin↔Greek, widened images for the f1f2
/// and overlap3 perturbations.
pub fn gold_for_setup(setup: SetupId) -> GoldMap {
    let letters: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
    match setup {
        SetupId::EngFakeBase | SetupId::EngFakeTrigram | SetupId::EngDeu => {
            GoldMap::identity(letters)
        }
        SetupId::EngFakeF1F2 => {
            let mut gold = GoldMap::identity(letters);
            gold.insert("f", &["f1", "f2"]);
            gold
        }
        SetupId::EngFakeOverlap3 => {
            let mut gold = GoldMap::default();
            let block: Vec<char> = ('a'..='z').collect();
            for (i, &c) in block.iter().enumerate() {
                let images: Vec<String> = (0..3)
                    .map(|s| block[(i + s) % block.len()].to_string())
                    .collect();
                let refs: Vec<&str> = images.iter().map(String::as_str).collect();
                gold.insert(&c.to_string(), &refs);
            }
            gold
        }
        SetupId::EngEll | SetupId::DeuEll => {
            GoldMap::parse_tsv(LATIN_GREEK_GOLD).expect("embedded gold map parses")
        }
    }
}

/// Looks up one of the named alphabets accepted on the command line. Fake
/// alphabets use the standard mapping base 100.
pub fn named_alphabet(name: &str) -> Option<Alphabet> {
    match name {
        "latin_lower" => Some(Alphabet::latin_lower()),
        "latin_all" => Some(Alphabet::latin_all()),
        "greek_lower" => Some(Alphabet::greek_lower()),
        "fake_lower" => Some(Alphabet::fake_lower(100)),
        "fake_all" => Some(Alphabet::fake_all(100)),
        "fake_f1f2" => Some(Alphabet::fake_lower_f1f2(100)),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct AlignOptions {
    pub checkpoint: PathBuf,
    /// Defaults to `<checkpoint stem>.vocab.json`, then `vocab.json` in the
    /// checkpoint's directory.
    pub vocab: Option<PathBuf>,
    pub setup: SetupId,
    pub layer: usize,
    pub gold: Option<PathBuf>,
    /// Named alphabet replacing the setup's source side; see [`named_alphabet`].
    pub src_alphabet: Option<String>,
    /// Named alphabet replacing the setup's target side.
    pub tgt_alphabet: Option<String>,
    pub out_dir: PathBuf,
    pub bracket: bool,
}

impl AlignOptions {
    pub fn new(
        checkpoint: impl Into<PathBuf>,
        setup: SetupId,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            vocab: None,
            setup,
            layer: 0,
            gold: None,
            src_alphabet: None,
            tgt_alphabet: None,
            out_dir: out_dir.into(),
            bracket: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignOutputs {
    pub csv_path: PathBuf,
    pub pgm_path: PathBuf,
    pub report_path: PathBuf,
    pub manifest_path: PathBuf,
    pub report: AlignmentReport,
}

fn sibling_vocab(checkpoint: &Path) -> PathBuf {
    let with_stem = checkpoint.with_extension("vocab.json");
    if with_stem.exists() {
        return with_stem;
    }
    checkpoint
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("vocab.json")
}

/// Loads a checkpoint, builds the setup's similarity matrix, scores it
/// against the gold map, and writes CSV + PGM + JSON report + manifest.
pub fn align_run(opts: &AlignOptions) -> Result<AlignOutputs, PipelineError> {
    let (mut src, mut tgt) = alphabets_for_setup(opts.setup);
    let mut overridden = false;
    if let Some(name) = &opts.src_alphabet {
        src = named_alphabet(name).ok_or_else(|| PipelineError::UnknownAlphabet(name.clone()))?;
        overridden = true;
    }
    if let Some(name) = &opts.tgt_alphabet {
        tgt = named_alphabet(name).ok_or_else(|| PipelineError::UnknownAlphabet(name.clone()))?;
        overridden = true;
    }
    // With custom alphabets the setup's gold may not cover the labels, so the
    // default drops back to identity over the source side.
    let gold = match &opts.gold {
        Some(path) => GoldMap::load_tsv(path)?,
        None if overridden => GoldMap::identity(src.labels().iter().cloned()),
        None => gold_for_setup(opts.setup),
    };
    let model = checkpoint::load(&opts.checkpoint)?;
    let vocab_path = opts
        .vocab
        .clone()
        .unwrap_or_else(|| sibling_vocab(&opts.checkpoint));
    let vocab = Vocabulary::load(&vocab_path)?;

    let mut sm = similarity_matrix(&model, &vocab, &src, &tgt, opts.layer, opts.bracket)?;
    sm.meta.setup = Some(opts.setup.name().to_string());
    sm.meta.checkpoint = Some(opts.checkpoint.to_string_lossy().into_owned());
    let report = score_alignment(&max_align(&sm), &gold)?;

    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let csv_path = opts.out_dir.join("similarity.csv");
    let pgm_path = opts.out_dir.join("similarity.pgm");
    let report_path = opts.out_dir.join("alignment.json");
    export_csv(&sm, &csv_path)?;
    export_pgm(&sm, &pgm_path)?;
    report.save_json(&report_path)?;

    let mut manifest = Manifest::new("align");
    manifest.setup = Some(opts.setup.name().to_string());
    manifest.config = serde_json::json!({
        "layer": opts.layer,
        "bracket": opts.bracket,
        "gold": opts.gold.as_ref().map(|p| p.to_string_lossy().into_owned()),
        "src_alphabet": opts.src_alphabet,
        "tgt_alphabet": opts.tgt_alphabet,
    });
    manifest.inputs.push(FileStamp::of(&opts.checkpoint)?);
    manifest.inputs.push(FileStamp::of(&vocab_path)?);
    for p in [&csv_path, &pgm_path, &report_path] {
        manifest.outputs.push(FileStamp::of(p)?);
    }
    manifest.notes.insert(
        "accuracy".into(),
        serde_json::json!(report.accuracy),
    );
    let manifest_path = opts.out_dir.join("align.manifest.json");
    manifest.save(&manifest_path)?;

    Ok(AlignOutputs {
        csv_path,
        pgm_path,
        report_path,
        manifest_path,
        report,
    })
}

/// Contextual alignment of one word pair from in-word vectors at `layer`.
pub fn context_run(
    checkpoint: &Path,
    vocab: Option<&Path>,
    src_word: &str,
    tgt_word: &str,
    layer: usize,
    use_positions: bool,
) -> Result<AlignmentReport, PipelineError> {
    let model = checkpoint::load(checkpoint)?;
    let vocab_path = vocab
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling_vocab(checkpoint));
    let vocab = Vocabulary::load(&vocab_path)?;
    let to_line = |w: &str| CharLine::word(w.chars().map(|c| c.to_string()));
    let mut report = analysis::context_align(
        &model,
        &vocab,
        &to_line(src_word),
        &to_line(tgt_word),
        layer,
        use_positions,
    )?;
    report.meta.checkpoint = Some(checkpoint.to_string_lossy().into_owned());
    Ok(report)
}

/// [`context_run`] plus artifacts: the report JSON at `out` and a manifest at
/// `<out stem>.manifest.json` beside it.
pub fn context_run_to(
    checkpoint: &Path,
    vocab: Option<&Path>,
    src_word: &str,
    tgt_word: &str,
    layer: usize,
    use_positions: bool,
    out: &Path,
) -> Result<(AlignmentReport, PathBuf), PipelineError> {
    let report = context_run(checkpoint, vocab, src_word, tgt_word, layer, use_positions)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    report.save_json(out)?;

    let vocab_path = vocab
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling_vocab(checkpoint));
    let mut manifest = Manifest::new("context");
    manifest.config = serde_json::json!({
        "src_word": src_word,
        "tgt_word": tgt_word,
        "layer": layer,
        "use_positions": use_positions,
    });
    manifest.inputs.push(FileStamp::of(checkpoint)?);
    manifest.inputs.push(FileStamp::of(&vocab_path)?);
    manifest.outputs.push(FileStamp::of(out)?);
    let manifest_path = out.with_extension("manifest.json");
    manifest.save(&manifest_path)?;
    Ok((report, manifest_path))
}

/// Manifest for an ablation run, written beside the report as
/// `<report stem>.manifest.json`. `inputs` lists files the run read; missing
/// ones are skipped rather than stamped.
pub fn write_ablation_manifest(
    report_path: &Path,
    which: &str,
    setup: SetupId,
    config: serde_json::Value,
    seeds: &[(&str, u64)],
    inputs: &[PathBuf],
) -> Result<PathBuf, PipelineError> {
    let mut manifest = Manifest::new("ablate");
    manifest.setup = Some(setup.name().to_string());
    manifest.config = config;
    manifest
        .notes
        .insert("which".into(), serde_json::json!(which));
    for (name, value) in seeds {
        manifest.seeds.insert((*name).to_string(), *value);
    }
    for path in inputs {
        if path.is_file() {
            manifest.inputs.push(FileStamp::of(path)?);
        }
    }
    manifest.outputs.push(FileStamp::of(report_path)?);
    let manifest_path = report_path.with_extension("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

/// Accuracy of a trained model on its setup's default alignment task,
/// without writing anything.
pub fn alignment_accuracy(
    model: &EncoderModel,
    vocab: &Vocabulary,
    setup: SetupId,
    layer: usize,
) -> Result<AlignmentReport, PipelineError> {
    let (src, tgt) = alphabets_for_setup(setup);
    let sm = similarity_matrix(model, vocab, &src, &tgt, layer, false)?;
    Ok(score_alignment(&max_align(&sm), &gold_for_setup(setup))?)
}

/// One ablation row: a named variant and its scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub dev_accuracy: f64,
    pub alignment_correct: usize,
    pub alignment_total: usize,
    pub alignment_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub which: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn save_json(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }
}

fn row_from_run(
    variant: &str,
    model: &EncoderModel,
    vocab: &Vocabulary,
    record: &RunRecord,
    setup: SetupId,
) -> Result<AblationRow, PipelineError> {
    let report = alignment_accuracy(model, vocab, setup, 0)?;
    Ok(AblationRow {
        variant: variant.to_string(),
        dev_accuracy: record.epochs.last().map_or(0.0, |e| e.dev_accuracy),
        alignment_correct: report.correct_count.unwrap_or(0),
        alignment_total: report.rows.len(),
        alignment_accuracy: report.accuracy.unwrap_or(0.0),
    })
}

/// Trains one model per masking triple on the same prepared corpus and
/// reports dev and alignment accuracy side by side.
pub fn ablate_masking(
    corpus_dir: &Path,
    setup: SetupId,
    settings: &Settings,
    triples: &[&str],
    model_seed: u64,
    train_seed: u64,
    work_dir: &Path,
) -> Result<AblationReport, PipelineError> {
    let mut rows = Vec::new();
    for triple in triples {
        let mut s = settings.clone();
        s.masking = triple.to_string();
        let ckpt = work_dir.join(format!("masking_{}.ckpt", triple.replace('/', "-")));
        let (model, record, _) = train_run(corpus_dir, &ckpt, &s, model_seed, train_seed)?;
        let vocab = Vocabulary::load(&ckpt.with_extension("vocab.json"))?;
        rows.push(row_from_run(triple, &model, &vocab, &record, setup)?);
    }
    Ok(AblationReport {
        which: "masking".to_string(),
        rows,
    })
}

/// Trains on a base corpus and a variant corpus with the same budget and
/// reports both, base first.
pub fn ablate_paired(
    which: &str,
    base_dir: &Path,
    base_setup: SetupId,
    variant_dir: &Path,
    variant_setup: SetupId,
    settings: &Settings,
    model_seed: u64,
    train_seed: u64,
    work_dir: &Path,
) -> Result<AblationReport, PipelineError> {
    let mut rows = Vec::new();
    for (name, dir, setup) in [
        ("base", base_dir, base_setup),
        (which, variant_dir, variant_setup),
    ] {
        let ckpt = work_dir.join(format!("{which}_{name}.ckpt"));
        let (model, record, _) = train_run(dir, &ckpt, settings, model_seed, train_seed)?;
        let vocab = Vocabulary::load(&ckpt.with_extension("vocab.json"))?;
        rows.push(row_from_run(name, &model, &vocab, &record, setup)?);
    }
    Ok(AblationReport {
        which: which.to_string(),
        rows,
    })
}

/// Compares an existing encoder checkpoint against a static skip-gram
/// baseline trained on the unchanged corpus lines.
pub fn ablate_static(
    corpus_dir: &Path,
    setup: SetupId,
    encoder_checkpoint: &Path,
    static_cfg: &StaticConfig,
) -> Result<AblationReport, PipelineError> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let model = checkpoint::load(encoder_checkpoint)?;
    let vocab = Vocabulary::load(&sibling_vocab(encoder_checkpoint))?;
    let encoder_report = alignment_accuracy(&model, &vocab, setup, 0)?;

    let mut all_lines = corpus.train.clone();
    all_lines.extend(corpus.dev.iter().cloned());
    let table = train_static(&all_lines, static_cfg)?;
    let (src, tgt) = alphabets_for_setup(setup);
    let sm = static_similarity_matrix(&table, &src, &tgt)?;
    let static_report = score_alignment(&max_align(&sm), &gold_for_setup(setup))?;

    let to_row = |variant: &str, r: &AlignmentReport| AblationRow {
        variant: variant.to_string(),
        dev_accuracy: f64::NAN,
        alignment_correct: r.correct_count.unwrap_or(0),
        alignment_total: r.rows.len(),
        alignment_accuracy: r.accuracy.unwrap_or(0.0),
    };
    Ok(AblationReport {
        which: "static".to_string(),
        rows: vec![
            to_row("encoder", &encoder_report),
            to_row("static", &static_report),
        ],
    })
}

/// Dev metrics of a stored checkpoint on a prepared corpus, for inspection.
pub fn dev_metrics(
    model: &EncoderModel,
    corpus: &PreparedCorpus,
    policy: &MaskingPolicy,
    seed: u64,
    batch_size: usize,
) -> Result<(f64, f64), PipelineError> {
    let dev_ids = encode_lines(&corpus.vocab, &corpus.dev);
    Ok(evaluate_dev(
        model,
        &dev_ids,
        policy,
        &corpus.vocab,
        seed,
        batch_size,
    )?)
}
