//! Static-embedding control: skip-gram with negative sampling over the same
//! character-token lines the encoder trains on. Single-threaded and
//! deterministic per seed.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{similarity_from_embeddings, Alphabet, MatrixMeta, SimilarityMatrix};
use crate::corpus::CharLine;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("corpus has no lines with at least two tokens")]
    EmptyCorpus,
    #[error("token {0:?} missing from the embedding table")]
    MissingToken(String),
    #[error("table I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse embedding table: {0}")]
    BadTable(String),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

#[derive(Debug, Clone)]
pub struct StaticConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            dimension: 100,
            window: 2,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl StaticConfig {
    fn validate(&self) {
        assert!(self.window >= 1, "window must be at least 1");
        assert!(self.dimension >= 2, "dimension must be at least 2");
    }
}

/// Token → dense vector, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Text format: first line "N D", then one token and D floats per line.
    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{} {}", self.tokens.len(), self.dim)?;
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}")?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
        let header = lines
            .next()
            .ok_or_else(|| BaselineError::BadTable("empty file".into()))??;
        let mut parts = header.split_whitespace();
        let bad = |m: &str| BaselineError::BadTable(m.to_string());
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad count"))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad dimension"))?;
        let mut tokens = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n * dim);
        for line in lines {
            let line = line?;
            let mut fields = line.split_whitespace();
            let tok = fields.next().ok_or_else(|| bad("missing token"))?;
            tokens.push(tok.to_string());
            let mut got = 0usize;
            for f in fields {
                vectors.push(f.parse().map_err(|_| bad("bad float"))?);
                got += 1;
            }
            if got != dim {
                return Err(bad(&format!("row {tok:?} has {got} values, expected {dim}")));
            }
        }
        if tokens.len() != n {
            return Err(bad(&format!("{} rows, header said {n}", tokens.len())));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            tokens,
            index,
            dim,
            vectors,
        })
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling; fixed symmetric window, unigram^0.75
/// negative distribution, learning rate decaying linearly over all
/// (epoch, line) pairs.
pub fn train_static(
    lines: &[CharLine],
    cfg: &StaticConfig,
) -> Result<EmbeddingTable, BaselineError> {
    cfg.validate();
    let usable: Vec<&CharLine> = lines.iter().filter(|l| l.tokens.len() >= 2).collect();
    if usable.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let encoded: Vec<Vec<usize>> = usable
        .iter()
        .map(|line| {
            line.tokens
                .iter()
                .map(|t| {
                    let id = *index.entry(t.clone()).or_insert_with(|| {
                        tokens.push(t.clone());
                        counts.push(0);
                        tokens.len() - 1
                    });
                    counts[id] += 1;
                    id
                })
                .collect()
        })
        .collect();
    let vocab = tokens.len();
    let dim = cfg.dimension;

    // cumulative unigram^0.75 table for negative draws
    let mut cumulative = Vec::with_capacity(vocab);
    let mut acc = 0.0f64;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_mass = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = 1.0 / dim as f32;
    let mut w_in: Vec<f32> = (0..vocab * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) * span)
        .collect();
    let mut w_out = vec![0.0f32; vocab * dim];

    let draw_negative = |rng: &mut ChaCha8Rng| -> usize {
        let x = rng.gen::<f64>() * total_mass;
        cumulative.partition_point(|&c| c <= x).min(vocab - 1)
    };

    let total_lines = (cfg.epochs * encoded.len()) as f64;
    let mut processed = 0f64;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut grad = vec![0.0f32; dim];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &li in &order {
            let lr = (cfg.learning_rate * (1.0 - (processed / total_lines) as f32))
                .max(cfg.learning_rate * 1e-4);
            processed += 1.0;
            let line = &encoded[li];
            for (i, &center) in line.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(line.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let ctx = line[j];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let wc = center * dim;
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0f32)
                        } else {
                            (draw_negative(&mut rng), 0.0f32)
                        };
                        let to = target * dim;
                        let mut dot = 0.0f32;
                        for d in 0..dim {
                            dot += w_in[wc + d] * w_out[to + d];
                        }
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * w_out[to + d];
                            w_out[to + d] += g * w_in[wc + d];
                        }
                    }
                    for d in 0..dim {
                        w_in[wc + d] += grad[d];
                    }
                }
            }
        }
    }

    Ok(EmbeddingTable {
        index,
        tokens,
        dim,
        vectors: w_in,
    })
}

/// Cosine matrix over the static table; same layout contract as the
/// encoder-derived matrices. Every alphabet token must be in the table.
pub fn static_similarity_matrix(
    table: &EmbeddingTable,
    src: &Alphabet,
    tgt: &Alphabet,
) -> Result<SimilarityMatrix, BaselineError> {
    let collect = |alphabet: &Alphabet| -> Result<Vec<Vec<f32>>, BaselineError> {
        alphabet
            .tokens()
            .iter()
            .map(|t| {
                table
                    .get(t)
                    .map(<[f32]>::to_vec)
                    .ok_or_else(|| BaselineError::MissingToken(t.clone()))
            })
            .collect()
    };
    let src_vecs = collect(src)?;
    let tgt_vecs = collect(tgt)?;
    Ok(similarity_from_embeddings(
        src.labels().to_vec(),
        &src_vecs,
        tgt.labels().to_vec(),
        &tgt_vecs,
        MatrixMeta::default(),
    )?)
}
