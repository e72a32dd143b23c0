//! Masked-language-model training: masking policy, Adam with linear warmup
//! and gradient clipping, per-epoch shuffling, and dev evaluation.
//!
//! All randomness flows from one training seed, fanned out into independent
//! streams (shuffle, masking, dropout, dev masking) so that runs are
//! bit-reproducible and the dev set is masked identically at every epoch.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{forward_graph, EncoderModel, ModelError, PackedBatch};
use crate::tensor::kernels::IGNORE_LABEL;
use crate::tensor::Graph;
use crate::vocab::{Vocabulary, MASK, SPECIALS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("replacement fractions {0}/{1}/{2} do not sum to 1")]
    BadReplacementTriple(f64, f64, f64),
    #[error("selection probability {0} outside (0,1)")]
    BadSelectProb(f64),
    #[error("cannot parse masking triple {0:?}; expected MASK/keep/random percentages like 80/10/10")]
    UnparseableTriple(String),
    #[error("loss became non-finite ({loss}) at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize, loss: f32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("run record I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("run record JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which tokens get selected for prediction and what replaces them.
///
/// Each non-special position is selected independently with `select_prob`;
/// a selected token is replaced by the mask token, kept unchanged, or
/// replaced by a random non-special token according to the triple.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MaskingPolicy {
    pub select_prob: f64,
    pub mask_frac: f64,
    pub keep_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            select_prob: 0.15,
            mask_frac: 0.8,
            keep_frac: 0.1,
            random_frac: 0.1,
        }
    }
}

impl MaskingPolicy {
    pub fn with_triple(mask: f64, keep: f64, random: f64) -> Result<Self, TrainError> {
        let p = Self {
            mask_frac: mask,
            keep_frac: keep,
            random_frac: random,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    /// Parses "80/10/10"-style percentages, read as MASK/keep/random.
    pub fn parse_triple(s: &str) -> Result<Self, TrainError> {
        let parts: Vec<f64> = s
            .split('/')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| TrainError::UnparseableTriple(s.to_string()))?;
        if parts.len() != 3 {
            return Err(TrainError::UnparseableTriple(s.to_string()));
        }
        Self::with_triple(parts[0] / 100.0, parts[1] / 100.0, parts[2] / 100.0)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let sum = self.mask_frac + self.keep_frac + self.random_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TrainError::BadReplacementTriple(
                self.mask_frac,
                self.keep_frac,
                self.random_frac,
            ));
        }
        if !(self.select_prob > 0.0 && self.select_prob < 1.0) {
            return Err(TrainError::BadSelectProb(self.select_prob));
        }
        Ok(())
    }
}

/// Replaces selected tokens per the policy and emits labels: the original id
/// at selected positions, [`IGNORE_LABEL`] elsewhere. Special tokens are
/// never selected; random replacements are drawn uniformly from the
/// non-special vocabulary.
pub fn mask_tokens(
    ids: &[u32],
    policy: &MaskingPolicy,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Vec<u32>) {
    let first_content = SPECIALS.len() as u32;
    let v = vocab.len() as u32;
    let mut masked = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for &id in ids {
        if id < first_content || rng.gen::<f64>() >= policy.select_prob {
            masked.push(id);
            labels.push(IGNORE_LABEL);
            continue;
        }
        labels.push(id);
        let u = rng.gen::<f64>();
        if u < policy.mask_frac {
            masked.push(MASK);
        } else if u < policy.mask_frac + policy.keep_frac {
            masked.push(id);
        } else {
            masked.push(rng.gen_range(first_content..v));
        }
    }
    (masked, labels)
}

/// Optimization schedule. Adam with bias correction, global-norm clipping,
/// and a linear warmup to the base learning rate over the first
/// `warmup_frac` of total steps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub warmup_frac: f64,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            warmup_frac: 0.05,
            shuffle: true,
            seed: 0,
        }
    }
}

/// One completed epoch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    pub seconds: f64,
}

/// Full training history, one record per epoch.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
}

impl RunRecord {
    /// JSON lines, one epoch per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { epochs })
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(model: &EncoderModel, tc: &TrainConfig) -> Self {
        let m = model
            .store
            .ids()
            .map(|id| vec![0.0f32; model.store.get(id).len()])
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            m,
            v,
            t: 0,
            beta1: tc.beta1,
            beta2: tc.beta2,
            eps: tc.adam_eps,
        }
    }

    fn step(&mut self, model: &mut EncoderModel, grads: &[Vec<f32>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_scale = (lr / bc1) as f32;
        let denom_scale = (1.0 / bc2.sqrt()) as f32;
        let eps = self.eps as f32;
        let ids: Vec<_> = model.store.ids().collect();
        for (pi, id) in ids.into_iter().enumerate() {
            let g = &grads[pi];
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            let w = model.store.get_mut(id);
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                w[i] -= step_scale * m[i] / ((v[i] * denom_scale * denom_scale).sqrt() + eps);
            }
        }
    }
}

/// Global L2 norm over all gradients, accumulated in f64 in parameter order.
fn global_norm(grads: &[Vec<f32>]) -> f64 {
    let mut acc = 0.0f64;
    for g in grads {
        for &x in g {
            acc += (x as f64) * (x as f64);
        }
    }
    acc.sqrt()
}

/// Derived seeds for the independent random streams of one run.
struct Streams {
    shuffle: ChaCha8Rng,
    mask: ChaCha8Rng,
    dropout: ChaCha8Rng,
    dev_seed: u64,
}

impl Streams {
    fn derive(seed: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        Self {
            shuffle: ChaCha8Rng::seed_from_u64(root.gen()),
            mask: ChaCha8Rng::seed_from_u64(root.gen()),
            dropout: ChaCha8Rng::seed_from_u64(root.gen()),
            dev_seed: root.gen(),
        }
    }
}

/// Trains in place for `tc.epochs` epochs and reports per-epoch metrics.
/// Deterministic per (model, corpus, `tc.seed`); aborts if the loss leaves
/// the finite range.
pub fn train(
    model: &mut EncoderModel,
    train_lines: &[Vec<u32>],
    dev_lines: &[Vec<u32>],
    tc: &TrainConfig,
    policy: &MaskingPolicy,
    vocab: &Vocabulary,
) -> Result<RunRecord, TrainError> {
    policy.validate()?;
    let mut streams = Streams::derive(tc.seed);
    let batches_per_epoch = train_lines.len().div_ceil(tc.batch_size);
    let total_steps = (tc.epochs * batches_per_epoch).max(1);
    let warmup_steps = ((total_steps as f64 * tc.warmup_frac).ceil() as u64).max(1);
    let mut adam = Adam::new(model, tc);
    let mut record = RunRecord::default();
    let mut global_step = 0u64;

    for epoch in 0..tc.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_lines.len()).collect();
        if tc.shuffle {
            order.shuffle(&mut streams.shuffle);
        }
        let mut loss_sum = 0.0f64;
        let mut sel_sum = 0usize;
        for (step, chunk) in order.chunks(tc.batch_size).enumerate() {
            let lines: Vec<Vec<u32>> = chunk.iter().map(|&i| train_lines[i].clone()).collect();
            let batch = PackedBatch::new(&lines, model.cfg.max_len)?;
            let (masked, labels) = mask_tokens(&batch.ids, policy, vocab, &mut streams.mask);
            let masked_batch = PackedBatch {
                ids: masked,
                positions: batch.positions,
                segments: batch.segments,
            };
            let mut g = Graph::new(&model.store, true);
            let out = forward_graph(
                &mut g,
                &model.layout,
                &model.cfg,
                &masked_batch,
                true,
                Some(&mut streams.dropout),
            );
            let (loss_v, n_sel) = g.cross_entropy_masked(out.logits, &labels);
            let loss = g.scalar(loss_v);
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, step, loss });
            }
            if n_sel == 0 {
                continue;
            }
            loss_sum += loss as f64 * n_sel as f64;
            sel_sum += n_sel;
            g.backward(loss_v);
            let grads: Vec<Vec<f32>> = model
                .store
                .ids()
                .map(|id| {
                    g.param_grad(id)
                        .map(|s| s.to_vec())
                        .unwrap_or_else(|| vec![0.0; model.store.get(id).len()])
                })
                .collect();
            drop(g);
            let mut grads = grads;
            let norm = global_norm(&grads);
            if norm > tc.clip_norm {
                let scale = (tc.clip_norm / norm) as f32;
                for g in &mut grads {
                    for x in g {
                        *x *= scale;
                    }
                }
            }
            global_step += 1;
            let lr = tc.learning_rate * (global_step as f64 / warmup_steps as f64).min(1.0);
            adam.step(model, &grads, lr);
        }
        let train_loss = if sel_sum > 0 {
            loss_sum / sel_sum as f64
        } else {
            0.0
        };
        let (dev_loss, dev_accuracy) =
            evaluate_dev(model, dev_lines, policy, vocab, streams.dev_seed, tc.batch_size)?;
        record.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train {train_loss:.4} dev {dev_loss:.4} acc {dev_accuracy:.4}"
        );
    }
    Ok(record)
}

/// Deterministic dev metrics: dropout off, masking drawn from `seed` so the
/// same positions are masked on every call. Accuracy is the fraction of
/// masked positions whose argmax logit equals the label.
pub fn evaluate_dev(
    model: &EncoderModel,
    dev_lines: &[Vec<u32>],
    policy: &MaskingPolicy,
    vocab: &Vocabulary,
    seed: u64,
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss_sum = 0.0f64;
    let mut sel_sum = 0usize;
    let mut correct = 0usize;
    let v = model.cfg.vocab_size;
    for chunk in dev_lines.chunks(batch_size.max(1)) {
        if chunk.is_empty() {
            continue;
        }
        let batch = PackedBatch::new(chunk, model.cfg.max_len)?;
        let (masked, labels) = mask_tokens(&batch.ids, policy, vocab, &mut rng);
        let masked_batch = PackedBatch {
            ids: masked,
            positions: batch.positions,
            segments: batch.segments,
        };
        let mut g = Graph::new(&model.store, false);
        let out = forward_graph(&mut g, &model.layout, &model.cfg, &masked_batch, true, None);
        let (loss_v, n_sel) = g.cross_entropy_masked(out.logits, &labels);
        if n_sel == 0 {
            continue;
        }
        loss_sum += g.scalar(loss_v) as f64 * n_sel as f64;
        sel_sum += n_sel;
        let logits = g.data(out.logits);
        for (row, &label) in labels.iter().enumerate() {
            if label == IGNORE_LABEL {
                continue;
            }
            let r = &logits[row * v..(row + 1) * v];
            let mut best = 0usize;
            for j in 1..v {
                if r[j] > r[best] {
                    best = j;
                }
            }
            if best as u32 == label {
                correct += 1;
            }
        }
    }
    if sel_sum == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((loss_sum / sel_sum as f64, correct as f64 / sel_sum as f64))
}
