//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] borrows a [`ParamStore`], evaluates operations eagerly, and
//! records each one on a tape together with whatever intermediate state its
//! backward rule needs. [`Graph::backward`] then walks the tape once in
//! reverse, accumulating gradients per value. Parameter leaves are memoized,
//! so a parameter used in several places (weight tying) receives the sum of
//! all its gradient contributions without special handling.

use std::collections::HashMap;

use rand::Rng;

use super::kernels::{self, Real};

/// Handle to a parameter registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a value on the graph tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

/// Named, ordered collection of trainable tensors.
///
/// Registration order is the canonical parameter order used by the optimizer
/// and the checkpoint format.
#[derive(Debug, Clone)]
pub struct ParamStore<E: Real = f32> {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    data: Vec<Vec<E>>,
}

impl<E: Real> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Real> ParamStore<E> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            shapes: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Registers a tensor; panics on a duplicate name or shape/data mismatch.
    pub fn add(&mut self, name: &str, shape: Vec<usize>, data: Vec<E>) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        let expected: usize = shape.iter().product();
        assert_eq!(expected, data.len(), "shape/data mismatch for {name}");
        self.names.push(name.to_string());
        self.shapes.push(shape);
        self.data.push(data);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[E] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [E] {
        &mut self.data[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar elements across all parameters.
    pub fn element_count(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }
}

impl ParamStore<f32> {
    /// Widened copy used by the f64 shadow path of the gradient checker.
    pub fn to_f64(&self) -> ParamStore<f64> {
        ParamStore {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            data: self
                .data
                .iter()
                .map(|t| t.iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }
}

enum Slot<E> {
    Owned(Vec<E>),
    Param(ParamId),
}

struct Value<E> {
    shape: Vec<usize>,
    slot: Slot<E>,
}

enum Op<E> {
    Gather {
        table: ValueId,
        ids: Vec<u32>,
        width: usize,
        out: ValueId,
    },
    MatMulNN {
        a: ValueId,
        b: ValueId,
        m: usize,
        k: usize,
        n: usize,
        out: ValueId,
    },
    MatMulNT {
        a: ValueId,
        b: ValueId,
        m: usize,
        k: usize,
        n: usize,
        out: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
        out: ValueId,
    },
    BiasAdd {
        x: ValueId,
        bias: ValueId,
        rows: usize,
        n: usize,
        out: ValueId,
    },
    LayerNorm {
        x: ValueId,
        gain: ValueId,
        bias: ValueId,
        rows: usize,
        n: usize,
        xhat: Vec<E>,
        inv_std: Vec<E>,
        out: ValueId,
    },
    Gelu {
        x: ValueId,
        out: ValueId,
    },
    Softmax {
        x: ValueId,
        axis: usize,
        out: ValueId,
    },
    Attention {
        q: ValueId,
        k: ValueId,
        v: ValueId,
        hidden: usize,
        heads: usize,
        segments: Vec<(u32, u32)>,
        probs: Vec<E>,
        out: ValueId,
    },
    Dropout {
        x: ValueId,
        mask: Vec<E>,
        out: ValueId,
    },
    CrossEntropy {
        logits: ValueId,
        labels: Vec<u32>,
        vocab: usize,
        probs: Vec<E>,
        n_sel: usize,
        out: ValueId,
    },
    WeightedSum {
        x: ValueId,
        w: Vec<E>,
        out: ValueId,
    },
}

/// Eager-forward computation tape over a borrowed parameter store.
pub struct Graph<'a, E: Real = f32> {
    params: &'a ParamStore<E>,
    values: Vec<Value<E>>,
    ops: Vec<Op<E>>,
    param_leaves: HashMap<usize, ValueId>,
    grads: Vec<Option<Vec<E>>>,
    training: bool,
}

impl<'a, E: Real> Graph<'a, E> {
    pub fn new(params: &'a ParamStore<E>, training: bool) -> Self {
        Self {
            params,
            values: Vec::new(),
            ops: Vec::new(),
            param_leaves: HashMap::new(),
            grads: Vec::new(),
            training,
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn data(&self, id: ValueId) -> &[E] {
        match &self.values[id.0].slot {
            Slot::Owned(v) => v,
            Slot::Param(p) => self.params.get(*p),
        }
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        &self.values[id.0].shape
    }

    /// Gradient of the last `backward` target with respect to `id`, if the
    /// value participated in the loss.
    pub fn grad(&self, id: ValueId) -> Option<&[E]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a registered parameter, summed over all of its uses.
    pub fn param_grad(&self, id: ParamId) -> Option<&[E]> {
        self.param_leaves
            .get(&id.0)
            .and_then(|&vid| self.grad(vid))
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<E>) -> ValueId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.values.push(Value {
            shape,
            slot: Slot::Owned(data),
        });
        ValueId(self.values.len() - 1)
    }

    /// Introduces a constant input value.
    pub fn input(&mut self, shape: Vec<usize>, data: Vec<E>) -> ValueId {
        self.push(shape, data)
    }

    /// Leaf for a registered parameter; repeated calls return the same value,
    /// so gradients from every use accumulate in one buffer.
    pub fn param(&mut self, id: ParamId) -> ValueId {
        if let Some(&vid) = self.param_leaves.get(&id.0) {
            return vid;
        }
        self.values.push(Value {
            shape: self.params.shape(id).to_vec(),
            slot: Slot::Param(id),
        });
        let vid = ValueId(self.values.len() - 1);
        self.param_leaves.insert(id.0, vid);
        vid
    }

    /// Embedding lookup: rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: ValueId, ids: &[u32]) -> ValueId {
        let tshape = self.shape(table);
        assert_eq!(tshape.len(), 2, "gather expects a [rows, width] table");
        let width = tshape[1];
        let mut out = vec![E::ZERO; ids.len() * width];
        kernels::gather_rows(width, self.data(table), ids, &mut out);
        let vid = self.push(vec![ids.len(), width], out);
        self.ops.push(Op::Gather {
            table,
            ids: ids.to_vec(),
            width,
            out: vid,
        });
        vid
    }

    /// `a[m,k] @ b[k,n]`.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let (m, k) = rank2(self.shape(a));
        let (kb, n) = rank2(self.shape(b));
        assert_eq!(k, kb, "matmul inner extents differ: {k} vs {kb}");
        let mut out = vec![E::ZERO; m * n];
        kernels::mm_nn(m, k, n, self.data(a), self.data(b), &mut out);
        let vid = self.push(vec![m, n], out);
        self.ops.push(Op::MatMulNN {
            a,
            b,
            m,
            k,
            n,
            out: vid,
        });
        vid
    }

    /// `a[m,k] @ b^T` for `b` stored as `[n,k]`; used for the tied output
    /// projection against the embedding table.
    pub fn matmul_nt(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let (m, k) = rank2(self.shape(a));
        let (n, kb) = rank2(self.shape(b));
        assert_eq!(k, kb, "matmul_nt inner extents differ: {k} vs {kb}");
        let mut out = vec![E::ZERO; m * n];
        kernels::mm_nt(m, k, n, self.data(a), self.data(b), &mut out);
        let vid = self.push(vec![m, n], out);
        self.ops.push(Op::MatMulNT {
            a,
            b,
            m,
            k,
            n,
            out: vid,
        });
        vid
    }

    /// Elementwise sum of two same-shape values.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.shape(a), self.shape(b), "add shapes differ");
        let shape = self.shape(a).to_vec();
        let mut out = vec![E::ZERO; self.data(a).len()];
        kernels::add(self.data(a), self.data(b), &mut out);
        let vid = self.push(shape, out);
        self.ops.push(Op::Add { a, b, out: vid });
        vid
    }

    /// Adds a `[n]` bias to every row of `x[rows,n]`.
    pub fn bias_add(&mut self, x: ValueId, bias: ValueId) -> ValueId {
        let (rows, n) = rank2(self.shape(x));
        assert_eq!(self.shape(bias), &[n], "bias width mismatch");
        let mut out = vec![E::ZERO; rows * n];
        kernels::bias_add(rows, n, self.data(x), self.data(bias), &mut out);
        let vid = self.push(vec![rows, n], out);
        self.ops.push(Op::BiasAdd {
            x,
            bias,
            rows,
            n,
            out: vid,
        });
        vid
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: ValueId, gain: ValueId, bias: ValueId, eps: f64) -> ValueId {
        let (rows, n) = rank2(self.shape(x));
        assert_eq!(self.shape(gain), &[n], "layer_norm gain width mismatch");
        assert_eq!(self.shape(bias), &[n], "layer_norm bias width mismatch");
        let mut out = vec![E::ZERO; rows * n];
        let mut xhat = vec![E::ZERO; rows * n];
        let mut inv_std = vec![E::ZERO; rows];
        kernels::layer_norm_fwd(
            rows,
            n,
            self.data(x),
            self.data(gain),
            self.data(bias),
            E::from_f64(eps),
            &mut out,
            &mut xhat,
            &mut inv_std,
        );
        let vid = self.push(vec![rows, n], out);
        self.ops.push(Op::LayerNorm {
            x,
            gain,
            bias,
            rows,
            n,
            xhat,
            inv_std,
            out: vid,
        });
        vid
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, x: ValueId) -> ValueId {
        let shape = self.shape(x).to_vec();
        let mut out = vec![E::ZERO; self.data(x).len()];
        kernels::gelu_fwd(self.data(x), &mut out);
        let vid = self.push(shape, out);
        self.ops.push(Op::Gelu { x, out: vid });
        vid
    }

    /// Softmax along `axis`, stabilized by max-subtraction.
    pub fn softmax(&mut self, x: ValueId, axis: usize) -> ValueId {
        let shape = self.shape(x).to_vec();
        assert!(axis < shape.len(), "softmax axis out of range");
        let mut out = vec![E::ZERO; self.data(x).len()];
        kernels::softmax_axis(&shape, axis, self.data(x), &mut out);
        let vid = self.push(shape, out);
        self.ops.push(Op::Softmax { x, axis, out: vid });
        vid
    }

    /// Multi-head attention over packed segments; positions never attend
    /// across a segment boundary.
    pub fn attention(
        &mut self,
        q: ValueId,
        k: ValueId,
        v: ValueId,
        heads: usize,
        segments: &[(u32, u32)],
    ) -> ValueId {
        let (t_total, hidden) = rank2(self.shape(q));
        assert_eq!(self.shape(k), &[t_total, hidden]);
        assert_eq!(self.shape(v), &[t_total, hidden]);
        assert_eq!(hidden % heads, 0, "hidden size not divisible by heads");
        let mut out = vec![E::ZERO; t_total * hidden];
        let prob_len = *kernels::prob_offsets(segments, heads).last().unwrap();
        let mut probs = vec![E::ZERO; prob_len];
        kernels::attention_fwd(
            hidden,
            heads,
            self.data(q),
            self.data(k),
            self.data(v),
            segments,
            &mut out,
            &mut probs,
        );
        let vid = self.push(vec![t_total, hidden], out);
        self.ops.push(Op::Attention {
            q,
            k,
            v,
            hidden,
            heads,
            segments: segments.to_vec(),
            probs,
            out: vid,
        });
        vid
    }

    /// Inverted dropout with keep-scaling. Identity when the graph is not in
    /// training mode or `p` is zero; always consumes the same RNG draws while
    /// training so downstream streams stay aligned.
    pub fn dropout<R: Rng>(&mut self, x: ValueId, p: f64, rng: &mut R) -> ValueId {
        if !self.training || p == 0.0 {
            return x;
        }
        let scale = E::from_f64(1.0 / (1.0 - p));
        let mask: Vec<E> = (0..self.data(x).len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    E::ZERO
                } else {
                    scale
                }
            })
            .collect();
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with an explicit mask of per-element multipliers.
    pub fn dropout_with_mask(&mut self, x: ValueId, mask: Vec<E>) -> ValueId {
        assert_eq!(mask.len(), self.data(x).len());
        let shape = self.shape(x).to_vec();
        let out: Vec<E> = self
            .data(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let vid = self.push(shape, out);
        self.ops.push(Op::Dropout { x, mask, out: vid });
        vid
    }

    /// Mean negative log-likelihood over rows whose label is not
    /// [`kernels::IGNORE_LABEL`]. Returns the scalar loss value and the
    /// number of scored rows.
    pub fn cross_entropy_masked(&mut self, logits: ValueId, labels: &[u32]) -> (ValueId, usize) {
        let (rows, vocab) = rank2(self.shape(logits));
        assert_eq!(labels.len(), rows, "one label per logit row");
        let mut probs = vec![E::ZERO; rows * vocab];
        let (loss, n_sel) =
            kernels::cross_entropy_fwd(rows, vocab, self.data(logits), labels, &mut probs);
        let vid = self.push(vec![1], vec![loss]);
        self.ops.push(Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            vocab,
            probs,
            n_sel,
            out: vid,
        });
        (vid, n_sel)
    }

    /// Scalar `sum(x * w)` against fixed weights; handy for reducing an
    /// arbitrary value to a differentiable scalar in tests.
    pub fn weighted_sum(&mut self, x: ValueId, w: &[E]) -> ValueId {
        assert_eq!(w.len(), self.data(x).len());
        let s = kernels::weighted_sum(self.data(x), w);
        let vid = self.push(vec![1], vec![s]);
        self.ops.push(Op::WeightedSum {
            x,
            w: w.to_vec(),
            out: vid,
        });
        vid
    }

    /// Scalar value accessor for rank-1 single-element values.
    pub fn scalar(&self, id: ValueId) -> E {
        let d = self.data(id);
        assert_eq!(d.len(), 1, "scalar() on non-scalar value");
        d[0]
    }

    /// Reverse pass from a scalar loss. Each recorded op is visited exactly
    /// once; values outside the loss cone keep a `None` gradient.
    pub fn backward(&mut self, loss: ValueId) {
        assert_eq!(self.data(loss).len(), 1, "backward target must be scalar");
        let mut grads: Vec<Option<Vec<E>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![E::ONE]);

        fn acc<E: Real>(grads: &mut [Option<Vec<E>>], id: ValueId, len: usize) -> &mut Vec<E> {
            grads[id.0].get_or_insert_with(|| vec![E::ZERO; len])
        }

        for oi in (0..self.ops.len()).rev() {
            let op = &self.ops[oi];
            match op {
                Op::Gather {
                    table,
                    ids,
                    width,
                    out,
                } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let tlen = self.data(*table).len();
                    let dt = acc(&mut grads, *table, tlen);
                    kernels::scatter_add_rows(*width, dt, ids, &d_out);
                    grads[out.0] = Some(d_out);
                }
                Op::MatMulNN { a, b, m, k, n, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let (m, k, n) = (*m, *k, *n);
                    let mut da = vec![E::ZERO; m * k];
                    kernels::mm_nt(m, n, k, &d_out, self.data(*b), &mut da);
                    let mut db = vec![E::ZERO; k * n];
                    kernels::mm_tn(m, k, n, self.data(*a), &d_out, &mut db);
                    add_into(acc(&mut grads, *a, m * k), &da);
                    add_into(acc(&mut grads, *b, k * n), &db);
                    grads[out.0] = Some(d_out);
                }
                Op::MatMulNT { a, b, m, k, n, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let (m, k, n) = (*m, *k, *n);
                    let mut da = vec![E::ZERO; m * k];
                    kernels::mm_nn(m, n, k, &d_out, self.data(*b), &mut da);
                    let mut db = vec![E::ZERO; n * k];
                    kernels::mm_tn(m, n, k, &d_out, self.data(*a), &mut db);
                    add_into(acc(&mut grads, *a, m * k), &da);
                    add_into(acc(&mut grads, *b, n * k), &db);
                    grads[out.0] = Some(d_out);
                }
                Op::Add { a, b, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    add_into(acc(&mut grads, *a, d_out.len()), &d_out);
                    add_into(acc(&mut grads, *b, d_out.len()), &d_out);
                    grads[out.0] = Some(d_out);
                }
                Op::BiasAdd { x, bias, rows, n, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    add_into(acc(&mut grads, *x, d_out.len()), &d_out);
                    let mut db = vec![E::ZERO; *n];
                    kernels::col_sums(*rows, *n, &d_out, &mut db);
                    add_into(acc(&mut grads, *bias, *n), &db);
                    grads[out.0] = Some(d_out);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    rows,
                    n,
                    xhat,
                    inv_std,
                    out,
                } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let (rows, n) = (*rows, *n);
                    let mut dx = vec![E::ZERO; rows * n];
                    let mut dgain = vec![E::ZERO; n];
                    let mut dbias = vec![E::ZERO; n];
                    kernels::layer_norm_bwd(
                        rows,
                        n,
                        &d_out,
                        xhat,
                        inv_std,
                        self.data(*gain),
                        &mut dx,
                        &mut dgain,
                        &mut dbias,
                    );
                    add_into(acc(&mut grads, *x, rows * n), &dx);
                    add_into(acc(&mut grads, *gain, n), &dgain);
                    add_into(acc(&mut grads, *bias, n), &dbias);
                    grads[out.0] = Some(d_out);
                }
                Op::Gelu { x, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let mut dx = vec![E::ZERO; d_out.len()];
                    kernels::gelu_bwd(self.data(*x), &d_out, &mut dx);
                    add_into(acc(&mut grads, *x, dx.len()), &dx);
                    grads[out.0] = Some(d_out);
                }
                Op::Softmax { x, axis, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let shape = self.shape(*out).to_vec();
                    let mut dx = vec![E::ZERO; d_out.len()];
                    kernels::softmax_axis_bwd(&shape, *axis, self.data(*out), &d_out, &mut dx);
                    add_into(acc(&mut grads, *x, dx.len()), &dx);
                    grads[out.0] = Some(d_out);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    hidden,
                    heads,
                    segments,
                    probs,
                    out,
                } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let len = d_out.len();
                    let mut dq = vec![E::ZERO; len];
                    let mut dk = vec![E::ZERO; len];
                    let mut dv = vec![E::ZERO; len];
                    kernels::attention_bwd(
                        *hidden,
                        *heads,
                        self.data(*q),
                        self.data(*k),
                        self.data(*v),
                        segments,
                        probs,
                        &d_out,
                        &mut dq,
                        &mut dk,
                        &mut dv,
                    );
                    add_into(acc(&mut grads, *q, len), &dq);
                    add_into(acc(&mut grads, *k, len), &dk);
                    add_into(acc(&mut grads, *v, len), &dv);
                    grads[out.0] = Some(d_out);
                }
                Op::Dropout { x, mask, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let dx_acc = acc(&mut grads, *x, d_out.len());
                    for ((g, &d), &m) in dx_acc.iter_mut().zip(&d_out).zip(mask) {
                        *g += d * m;
                    }
                    grads[out.0] = Some(d_out);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    vocab,
                    probs,
                    n_sel,
                    out,
                } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let mut dl = vec![E::ZERO; probs.len()];
                    kernels::cross_entropy_bwd(*vocab, probs, labels, *n_sel, d_out[0], &mut dl);
                    add_into(acc(&mut grads, *logits, dl.len()), &dl);
                    grads[out.0] = Some(d_out);
                }
                Op::WeightedSum { x, w, out } => {
                    let Some(d_out) = grads[out.0].take() else {
                        continue;
                    };
                    let dx_acc = acc(&mut grads, *x, w.len());
                    for (g, &wi) in dx_acc.iter_mut().zip(w) {
                        *g += wi * d_out[0];
                    }
                    grads[out.0] = Some(d_out);
                }
            }
        }
        self.grads = grads;
    }
}

fn rank2(shape: &[usize]) -> (usize, usize) {
    assert_eq!(shape.len(), 2, "expected a rank-2 value, got {shape:?}");
    (shape[0], shape[1])
}

fn add_into<E: Real>(dst: &mut [E], src: &[E]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}
