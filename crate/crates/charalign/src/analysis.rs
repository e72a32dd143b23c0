//! Downstream analysis of a trained model: cosine similarity matrices over
//! alphabet pairs, max-alignment scoring against gold maps, joint
//! representations for multi-token characters, contextual word alignment,
//! and heatmap export (CSV and PGM).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CharLine;
use crate::model::{char_embedding, contextual_embeddings, EncoderModel, ModelError};
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("character {0:?} missing from the gold map")]
    GoldMissing(String),
    #[error("gold map entry for {0:?} has an empty image set")]
    GoldEmptyImage(String),
    #[error("alphabet must pair one token per label")]
    BadAlphabet,
    #[error("heatmap I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse heatmap CSV: {0}")]
    BadCsv(String),
    #[error("cannot parse gold map line {0:?}")]
    BadGoldLine(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Cosine similarity with f64 accumulation; zero vectors are an error rather
/// than a silent 0.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32, AnalysisError> {
    if u.len() != v.len() {
        return Err(AnalysisError::LengthMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += a as f64 * a as f64;
        nv += b as f64 * b as f64;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(AnalysisError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())) as f32)
}

/// An evaluation alphabet: display labels paired with the vocabulary tokens
/// that realize them (identical for natural scripts, integer strings for the
/// fake languages).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
    tokens: Vec<String>,
}

impl Alphabet {
    pub fn new(labels: Vec<String>, tokens: Vec<String>) -> Result<Self, AnalysisError> {
        if labels.len() != tokens.len() || labels.is_empty() {
            return Err(AnalysisError::BadAlphabet);
        }
        Ok(Self { labels, tokens })
    }

    /// Lowercase Latin a-z, tokens are the characters themselves.
    pub fn latin_lower() -> Self {
        let labels: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        Self {
            tokens: labels.clone(),
            labels,
        }
    }

    /// The 24 lowercase Greek letters (final sigma folded away).
    pub fn greek_lower() -> Self {
        let labels: Vec<String> = "αβγδεζηθικλμνξοπρστυφχψω"
            .chars()
            .map(|c| c.to_string())
            .collect();
        Self {
            tokens: labels.clone(),
            labels,
        }
    }

    /// Full 52-letter Latin alphabet in mapping order: a-z then A-Z.
    pub fn latin_all() -> Self {
        let labels: Vec<String> = ('a'..='z')
            .chain('A'..='Z')
            .map(|c| c.to_string())
            .collect();
        Self {
            tokens: labels.clone(),
            labels,
        }
    }

    /// Fake-language tokens for lowercase a-z: labels are the source letters,
    /// tokens are the mapped integer strings starting at `base`.
    pub fn fake_lower(base: u32) -> Self {
        let labels: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        let tokens = (0..26).map(|i| (base + i).to_string()).collect();
        Self { labels, tokens }
    }

    /// Fake-language tokens for all 52 Latin letters, a-z then A-Z, following
    /// the same mapping order.
    pub fn fake_all(base: u32) -> Self {
        let labels: Vec<String> = ('a'..='z')
            .chain('A'..='Z')
            .map(|c| c.to_string())
            .collect();
        let tokens = (0..52).map(|i| (base + i).to_string()).collect();
        Self { labels, tokens }
    }

    /// Fake lowercase alphabet with 'f' replaced by the two perturbation
    /// tokens, labeled f1 and f2 (27 entries).
    pub fn fake_lower_f1f2(base: u32) -> Self {
        let mut labels = Vec::with_capacity(27);
        let mut tokens = Vec::with_capacity(27);
        for (i, c) in ('a'..='z').enumerate() {
            if c == 'f' {
                labels.push("f1".to_string());
                tokens.push("200".to_string());
                labels.push("f2".to_string());
                tokens.push("201".to_string());
            } else {
                labels.push(c.to_string());
                tokens.push((base + i as u32).to_string());
            }
        }
        Self { labels, tokens }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Provenance attached to exported matrices and reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MatrixMeta {
    pub setup: Option<String>,
    pub layer: usize,
    pub checkpoint: Option<String>,
    pub use_positions: bool,
    pub bracketed: bool,
}

/// |source alphabet| × |target alphabet| grid of cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub src_labels: Vec<String>,
    pub tgt_labels: Vec<String>,
    /// Row-major, rows = source labels.
    pub values: Vec<f32>,
    pub meta: MatrixMeta,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.tgt_labels.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.tgt_labels.len();
        &self.values[i * w..(i + 1) * w]
    }
}

/// Builds a similarity matrix from precomputed per-label vectors.
pub fn similarity_from_embeddings(
    src_labels: Vec<String>,
    src_vecs: &[Vec<f32>],
    tgt_labels: Vec<String>,
    tgt_vecs: &[Vec<f32>],
    meta: MatrixMeta,
) -> Result<SimilarityMatrix, AnalysisError> {
    let mut values = Vec::with_capacity(src_vecs.len() * tgt_vecs.len());
    for s in src_vecs {
        for t in tgt_vecs {
            values.push(cosine(s, t)?);
        }
    }
    Ok(SimilarityMatrix {
        src_labels,
        tgt_labels,
        values,
        meta,
    })
}

/// Cosine matrix between two alphabets' character embeddings at a layer.
pub fn similarity_matrix(
    model: &EncoderModel,
    vocab: &Vocabulary,
    src: &Alphabet,
    tgt: &Alphabet,
    layer: usize,
    bracket: bool,
) -> Result<SimilarityMatrix, AnalysisError> {
    let embed = |alphabet: &Alphabet| -> Result<Vec<Vec<f32>>, AnalysisError> {
        alphabet
            .tokens
            .iter()
            .map(|tok| Ok(char_embedding(model, vocab, tok, layer, bracket)?))
            .collect()
    };
    let src_vecs = embed(src)?;
    let tgt_vecs = embed(tgt)?;
    similarity_from_embeddings(
        src.labels.clone(),
        &src_vecs,
        tgt.labels.clone(),
        &tgt_vecs,
        MatrixMeta {
            layer,
            bracketed: bracket,
            use_positions: true,
            ..MatrixMeta::default()
        },
    )
}

/// One aligned source character.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlignmentRow {
    pub source: String,
    pub target: String,
    pub similarity: f32,
    /// Present only after scoring against a gold map.
    pub correct: Option<bool>,
}

/// Per-source argmax alignments, optionally scored for accuracy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlignmentReport {
    pub rows: Vec<AlignmentRow>,
    pub correct_count: Option<usize>,
    pub accuracy: Option<f64>,
    pub meta: MatrixMeta,
}

impl AlignmentReport {
    pub fn save_json(&self, path: &Path) -> Result<(), AnalysisError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, AnalysisError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Argmax target per source row; ties break to the lowest target index.
pub fn max_align(sm: &SimilarityMatrix) -> AlignmentReport {
    let rows = sm
        .src_labels
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let row = sm.row(i);
            let mut best = 0usize;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            AlignmentRow {
                source: src.clone(),
                target: sm.tgt_labels[best].clone(),
                similarity: row[best],
                correct: None,
            }
        })
        .collect();
    AlignmentReport {
        rows,
        correct_count: None,
        accuracy: None,
        meta: sm.meta.clone(),
    }
}

/// Maps each source character to its set of acceptable target characters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldMap {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl GoldMap {
    /// Identity map over a label set.
    pub fn identity<I: IntoIterator<Item = String>>(labels: I) -> Self {
        let map = labels
            .into_iter()
            .map(|l| (l.clone(), BTreeSet::from([l])))
            .collect();
        Self { map }
    }

    pub fn insert(&mut self, src: &str, targets: &[&str]) {
        self.map.insert(
            src.to_string(),
            targets.iter().map(|t| t.to_string()).collect(),
        );
    }

    pub fn targets(&self, src: &str) -> Option<&BTreeSet<String>> {
        self.map.get(src)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Two-column text format: `src<TAB>tgt1[,tgt2…]`, one source per line;
    /// blank lines and `#` comments ignored.
    pub fn load_tsv(path: &Path) -> Result<Self, AnalysisError> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn parse_tsv(text: &str) -> Result<Self, AnalysisError> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (src, rest) = line
                .split_once('\t')
                .ok_or_else(|| AnalysisError::BadGoldLine(line.to_string()))?;
            let targets: BTreeSet<String> = rest
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            if targets.is_empty() {
                return Err(AnalysisError::GoldEmptyImage(src.to_string()));
            }
            map.insert(src.trim().to_string(), targets);
        }
        Ok(Self { map })
    }

    pub fn save_tsv(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut out = String::new();
        for (src, targets) in &self.map {
            out.push_str(src);
            out.push('\t');
            let joined: Vec<&str> = targets.iter().map(String::as_str).collect();
            out.push_str(&joined.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Marks each alignment row correct iff its argmax target is in the gold
/// image set, and attaches accuracy = correct / |source alphabet|.
pub fn score_alignment(
    report: &AlignmentReport,
    gold: &GoldMap,
) -> Result<AlignmentReport, AnalysisError> {
    let mut rows = Vec::with_capacity(report.rows.len());
    let mut correct_count = 0usize;
    for row in &report.rows {
        let targets = gold
            .targets(&row.source)
            .ok_or_else(|| AnalysisError::GoldMissing(row.source.clone()))?;
        if targets.is_empty() {
            return Err(AnalysisError::GoldEmptyImage(row.source.clone()));
        }
        let correct = targets.contains(&row.target);
        correct_count += usize::from(correct);
        rows.push(AlignmentRow {
            correct: Some(correct),
            ..row.clone()
        });
    }
    let n = rows.len();
    Ok(AlignmentReport {
        rows,
        correct_count: Some(correct_count),
        accuracy: Some(correct_count as f64 / n as f64),
        meta: report.meta.clone(),
    })
}

/// Aligns each source character of one word against the characters of a
/// target word using contextual (in-word) representations at `layer`.
pub fn context_align(
    model: &EncoderModel,
    vocab: &Vocabulary,
    src_word: &CharLine,
    tgt_word: &CharLine,
    layer: usize,
    use_positions: bool,
) -> Result<AlignmentReport, AnalysisError> {
    let src_vecs = contextual_embeddings(model, vocab, src_word, layer, use_positions)?;
    let tgt_vecs = contextual_embeddings(model, vocab, tgt_word, layer, use_positions)?;
    let sm = similarity_from_embeddings(
        src_word.inner_tokens().to_vec(),
        &src_vecs,
        tgt_word.inner_tokens().to_vec(),
        &tgt_vecs,
        MatrixMeta {
            layer,
            use_positions,
            bracketed: true,
            ..MatrixMeta::default()
        },
    )?;
    Ok(max_align(&sm))
}

/// Writes the matrix as CSV: header of quoted target labels, then one row
/// per source label. Values carry six decimals, lossless within 1e-6.
pub fn export_csv(sm: &SimilarityMatrix, path: &Path) -> Result<(), AnalysisError> {
    std::fs::write(path, to_csv(sm))?;
    Ok(())
}

pub fn to_csv(sm: &SimilarityMatrix) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut out = String::new();
    out.push_str("\"\"");
    for t in &sm.tgt_labels {
        out.push(',');
        out.push_str(&quote(t));
    }
    out.push('\n');
    for (i, s) in sm.src_labels.iter().enumerate() {
        out.push_str(&quote(s));
        for j in 0..sm.tgt_labels.len() {
            out.push(',');
            out.push_str(&format!("{:.6}", sm.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn import_csv(path: &Path) -> Result<SimilarityMatrix, AnalysisError> {
    from_csv(&std::fs::read_to_string(path)?)
}

fn split_csv_line(line: &str) -> Result<Vec<String>, AnalysisError> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if !quoted && cur.is_empty() => quoted = true,
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    quoted = false;
                }
            }
            ',' if !quoted => {
                fields.push(std::mem::take(&mut cur));
            }
            _ => cur.push(c),
        }
    }
    if quoted {
        return Err(AnalysisError::BadCsv(format!("unterminated quote in {line:?}")));
    }
    fields.push(cur);
    Ok(fields)
}

pub fn from_csv(text: &str) -> Result<SimilarityMatrix, AnalysisError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| AnalysisError::BadCsv("empty file".into()))?;
    let header_fields = split_csv_line(header)?;
    if header_fields.is_empty() {
        return Err(AnalysisError::BadCsv("empty header".into()));
    }
    let tgt_labels: Vec<String> = header_fields[1..].to_vec();
    let mut src_labels = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let fields = split_csv_line(line)?;
        if fields.len() != tgt_labels.len() + 1 {
            return Err(AnalysisError::BadCsv(format!(
                "row {:?} has {} fields, expected {}",
                fields.first().map(String::as_str).unwrap_or(""),
                fields.len(),
                tgt_labels.len() + 1
            )));
        }
        src_labels.push(fields[0].clone());
        for f in &fields[1..] {
            values.push(
                f.parse::<f32>()
                    .map_err(|_| AnalysisError::BadCsv(format!("bad value {f:?}")))?,
            );
        }
    }
    Ok(SimilarityMatrix {
        src_labels,
        tgt_labels,
        values,
        meta: MatrixMeta::default(),
    })
}

/// Writes an 8-bit binary PGM (P5): pixel = round(255·(sim+1)/2), plus a
/// JSON sidecar `<path>.json` carrying labels and metadata.
pub fn export_pgm(sm: &SimilarityMatrix, path: &Path) -> Result<(), AnalysisError> {
    let (w, h) = (sm.tgt_labels.len(), sm.src_labels.len());
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(pgm_pixels(sm));
    std::fs::write(path, bytes)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        src_labels: &'a [String],
        tgt_labels: &'a [String],
        meta: &'a MatrixMeta,
        encoding: &'static str,
    }
    let sidecar = Sidecar {
        src_labels: &sm.src_labels,
        tgt_labels: &sm.tgt_labels,
        meta: &sm.meta,
        encoding: "value = round(255 * (similarity + 1) / 2)",
    };
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn pgm_pixels(sm: &SimilarityMatrix) -> Vec<u8> {
    sm.values
        .iter()
        .map(|&v| {
            let scaled = 255.0 * (f64::from(v) + 1.0) / 2.0;
            scaled.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}
