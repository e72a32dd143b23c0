//! Numeric kernels shared by the forward/backward passes.
//!
//! All kernels are generic over [`Real`] so the same arithmetic can run at
//! `f32` (training, inference) and at `f64` (the shadow path used by gradient
//! checks). Matrix products go through `matrixmultiply`; everything else is
//! plain loops.
//!
//! Parallel sections use fixed chunk sizes and ordered reductions, so results
//! are bitwise identical regardless of how many worker threads are available.

use rayon::prelude::*;

/// Rows per parallel work unit. Fixed so that chunk boundaries (and therefore
/// summation order) never depend on the thread count.
const ROW_CHUNK: usize = 128;

/// Label value marking positions excluded from the masked cross-entropy loss.
pub const IGNORE_LABEL: u32 = u32::MAX;

pub trait Real:
    Copy
    + Send
    + Sync
    + PartialOrd
    + core::fmt::Debug
    + core::ops::Add<Output = Self>
    + core::ops::Sub<Output = Self>
    + core::ops::Mul<Output = Self>
    + core::ops::Div<Output = Self>
    + core::ops::Neg<Output = Self>
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, o: Self) -> Self;

    /// Strided row-major GEMM: `c = alpha * a@b + beta * c`.
    ///
    /// # Safety
    /// Pointers must be valid for the implied extents and strides, and `c`
    /// must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_real {
    ($ty:ty, $gemm:path) => {
        impl Real for $ty {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f32(v: f32) -> Self {
                v as $ty
            }
            fn from_f64(v: f64) -> Self {
                v as $ty
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, o: Self) -> Self {
                self.max(o)
            }
            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// `c[m,n] = a[m,k] @ b[k,n]`, parallel over fixed row chunks.
pub fn mm_nn<E: Real>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let run = |rows: usize, a: &[E], c: &mut [E]| unsafe {
        E::gemm(
            rows,
            k,
            n,
            E::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            E::ZERO,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    };
    if m <= ROW_CHUNK {
        run(m, a, c);
    } else {
        c.par_chunks_mut(ROW_CHUNK * n)
            .zip(a.par_chunks(ROW_CHUNK * k))
            .for_each(|(c_chunk, a_chunk)| run(a_chunk.len() / k, a_chunk, c_chunk));
    }
}

/// `c[m,n] = a[m,k] @ b^T` where `b` is stored as `[n,k]`.
pub fn mm_nt<E: Real>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let run = |rows: usize, a: &[E], c: &mut [E]| unsafe {
        E::gemm(
            rows,
            k,
            n,
            E::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            E::ZERO,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    };
    if m <= ROW_CHUNK {
        run(m, a, c);
    } else {
        c.par_chunks_mut(ROW_CHUNK * n)
            .zip(a.par_chunks(ROW_CHUNK * k))
            .for_each(|(c_chunk, a_chunk)| run(a_chunk.len() / k, a_chunk, c_chunk));
    }
}

/// `c[m,n] = a^T @ b` where `a` is `[r,m]` and `b` is `[r,n]`; the reduction
/// over `r` is chunked with partial products summed in chunk order.
pub fn mm_tn<E: Real>(r: usize, m: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    debug_assert_eq!(a.len(), r * m);
    debug_assert_eq!(b.len(), r * n);
    debug_assert_eq!(c.len(), m * n);
    let run = |rows: usize, a: &[E], b: &[E], c: &mut [E]| unsafe {
        E::gemm(
            m,
            rows,
            n,
            E::ONE,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            E::ZERO,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    };
    if r <= ROW_CHUNK {
        run(r, a, b, c);
        return;
    }
    let partials: Vec<Vec<E>> = a
        .par_chunks(ROW_CHUNK * m)
        .zip(b.par_chunks(ROW_CHUNK * n))
        .map(|(a_chunk, b_chunk)| {
            let mut part = vec![E::ZERO; m * n];
            run(a_chunk.len() / m, a_chunk, b_chunk, &mut part);
            part
        })
        .collect();
    c.fill(E::ZERO);
    for part in partials {
        for (ci, pi) in c.iter_mut().zip(&part) {
            *ci += *pi;
        }
    }
}

pub fn add<E: Real>(a: &[E], b: &[E], out: &mut [E]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = *x + *y;
    }
}

/// Adds `bias[n]` to every row of `x[rows,n]`.
pub fn bias_add<E: Real>(rows: usize, n: usize, x: &[E], bias: &[E], out: &mut [E]) {
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        let or = &mut out[r * n..(r + 1) * n];
        for ((o, v), b) in or.iter_mut().zip(xr).zip(bias) {
            *o = *v + *b;
        }
    }
}

/// Column sums of `dy[rows,n]`, the bias gradient.
pub fn col_sums<E: Real>(rows: usize, n: usize, dy: &[E], out: &mut [E]) {
    out.fill(E::ZERO);
    for r in 0..rows {
        let row = &dy[r * n..(r + 1) * n];
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
}

/// Row-wise layer normalization with affine transform.
///
/// Saves the normalized rows and reciprocal standard deviations for backward.
pub fn layer_norm_fwd<E: Real>(
    rows: usize,
    n: usize,
    x: &[E],
    gain: &[E],
    bias: &[E],
    eps: E,
    y: &mut [E],
    xhat: &mut [E],
    inv_std: &mut [E],
) {
    let inv_n = E::ONE / E::from_f64(n as f64);
    y.par_chunks_mut(ROW_CHUNK * n)
        .zip(xhat.par_chunks_mut(ROW_CHUNK * n))
        .zip(inv_std.par_chunks_mut(ROW_CHUNK))
        .enumerate()
        .for_each(|(ci, ((yc, hc), sc))| {
            let base = ci * ROW_CHUNK;
            for (j, s) in sc.iter_mut().enumerate() {
                let r = base + j;
                let xr = &x[r * n..(r + 1) * n];
                let mut mean = E::ZERO;
                for &v in xr {
                    mean += v;
                }
                mean *= inv_n;
                let mut var = E::ZERO;
                for &v in xr {
                    let d = v - mean;
                    var += d * d;
                }
                var *= inv_n;
                let inv = E::ONE / (var + eps).sqrt();
                *s = inv;
                let yr = &mut yc[j * n..(j + 1) * n];
                let hr = &mut hc[j * n..(j + 1) * n];
                for i in 0..n {
                    let h = (xr[i] - mean) * inv;
                    hr[i] = h;
                    yr[i] = gain[i] * h + bias[i];
                }
            }
        });
    let _ = rows;
}

pub fn layer_norm_bwd<E: Real>(
    rows: usize,
    n: usize,
    dy: &[E],
    xhat: &[E],
    inv_std: &[E],
    gain: &[E],
    dx: &mut [E],
    dgain: &mut [E],
    dbias: &mut [E],
) {
    let inv_n = E::ONE / E::from_f64(n as f64);
    let partials: Vec<(Vec<E>, Vec<E>)> = dx
        .par_chunks_mut(ROW_CHUNK * n)
        .enumerate()
        .map(|(ci, dxc)| {
            let base = ci * ROW_CHUNK;
            let mut pg = vec![E::ZERO; n];
            let mut pb = vec![E::ZERO; n];
            let chunk_rows = dxc.len() / n;
            for j in 0..chunk_rows {
                let r = base + j;
                let dyr = &dy[r * n..(r + 1) * n];
                let hr = &xhat[r * n..(r + 1) * n];
                let dxr = &mut dxc[j * n..(j + 1) * n];
                let mut sum_dh = E::ZERO;
                let mut sum_dh_h = E::ZERO;
                for i in 0..n {
                    let dh = dyr[i] * gain[i];
                    sum_dh += dh;
                    sum_dh_h += dh * hr[i];
                    pg[i] += dyr[i] * hr[i];
                    pb[i] += dyr[i];
                }
                let mean_dh = sum_dh * inv_n;
                let mean_dh_h = sum_dh_h * inv_n;
                let inv = inv_std[r];
                for i in 0..n {
                    let dh = dyr[i] * gain[i];
                    dxr[i] = (dh - mean_dh - hr[i] * mean_dh_h) * inv;
                }
            }
            (pg, pb)
        })
        .collect();
    dgain.fill(E::ZERO);
    dbias.fill(E::ZERO);
    for (pg, pb) in partials {
        for (g, p) in dgain.iter_mut().zip(&pg) {
            *g += *p;
        }
        for (b, p) in dbias.iter_mut().zip(&pb) {
            *b += *p;
        }
    }
    let _ = rows;
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu_fwd<E: Real>(x: &[E], y: &mut [E]) {
    let c = E::from_f64(GELU_C);
    let a = E::from_f64(GELU_A);
    let half = E::from_f64(0.5);
    y.par_chunks_mut(ROW_CHUNK * 64)
        .zip(x.par_chunks(ROW_CHUNK * 64))
        .for_each(|(yc, xc)| {
            for (o, &v) in yc.iter_mut().zip(xc) {
                let u = c * (v + a * v * v * v);
                *o = half * v * (E::ONE + u.tanh());
            }
        });
}

pub fn gelu_bwd<E: Real>(x: &[E], dy: &[E], dx: &mut [E]) {
    let c = E::from_f64(GELU_C);
    let a = E::from_f64(GELU_A);
    let three_a = E::from_f64(3.0 * GELU_A);
    let half = E::from_f64(0.5);
    dx.par_chunks_mut(ROW_CHUNK * 64)
        .zip(x.par_chunks(ROW_CHUNK * 64))
        .zip(dy.par_chunks(ROW_CHUNK * 64))
        .for_each(|((dxc, xc), dyc)| {
            for ((o, &v), &d) in dxc.iter_mut().zip(xc).zip(dyc) {
                let u = c * (v + a * v * v * v);
                let t = u.tanh();
                let du = c * (E::ONE + three_a * v * v);
                let g = half * (E::ONE + t) + half * v * (E::ONE - t * t) * du;
                *o = d * g;
            }
        });
}

/// Softmax along `axis` of a tensor with the given shape, stabilized by
/// max-subtraction.
pub fn softmax_axis<E: Real>(shape: &[usize], axis: usize, x: &[E], y: &mut [E]) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut m = x[base];
            for j in 1..len {
                m = m.maximum(x[base + j * inner]);
            }
            let mut sum = E::ZERO;
            for j in 0..len {
                let e = (x[base + j * inner] - m).exp();
                y[base + j * inner] = e;
                sum += e;
            }
            let inv = E::ONE / sum;
            for j in 0..len {
                y[base + j * inner] *= inv;
            }
        }
    }
}

pub fn softmax_axis_bwd<E: Real>(shape: &[usize], axis: usize, p: &[E], dy: &[E], dx: &mut [E]) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = E::ZERO;
            for j in 0..len {
                let idx = base + j * inner;
                dot += dy[idx] * p[idx];
            }
            for j in 0..len {
                let idx = base + j * inner;
                dx[idx] = p[idx] * (dy[idx] - dot);
            }
        }
    }
}

/// Softmax over one contiguous row, used by the attention kernels.
fn softmax_row<E: Real>(row: &mut [E]) {
    let mut m = row[0];
    for &v in row.iter().skip(1) {
        m = m.maximum(v);
    }
    let mut sum = E::ZERO;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let inv = E::ONE / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Splits a packed `[t_total, width]` buffer into per-segment row slices.
/// Segments must tile `0..t_total` in order.
fn split_segments<'a, E>(
    mut buf: &'a mut [E],
    segments: &[(u32, u32)],
    width: usize,
) -> Vec<&'a mut [E]> {
    let mut out = Vec::with_capacity(segments.len());
    let mut cursor = 0u32;
    for &(s, e) in segments {
        assert_eq!(s, cursor, "segments must tile the packed range in order");
        let (head, rest) = buf.split_at_mut((e - s) as usize * width);
        out.push(head);
        buf = rest;
        cursor = e;
    }
    assert!(buf.is_empty(), "segments must cover the packed range");
    out
}

/// Byte offsets of each segment's probability block in the concatenated
/// attention-probability buffer (`heads * t * t` per segment).
pub fn prob_offsets(segments: &[(u32, u32)], heads: usize) -> Vec<usize> {
    let mut offs = Vec::with_capacity(segments.len() + 1);
    let mut acc = 0usize;
    for &(s, e) in segments {
        offs.push(acc);
        let t = (e - s) as usize;
        acc += heads * t * t;
    }
    offs.push(acc);
    offs
}

/// Multi-head scaled dot-product attention over packed segments.
///
/// `q`, `k`, `v` are `[t_total, hidden]`; attention never crosses a segment
/// boundary. Saves the per-head attention probabilities for backward.
#[allow(clippy::too_many_arguments)]
pub fn attention_fwd<E: Real>(
    hidden: usize,
    heads: usize,
    q: &[E],
    k: &[E],
    v: &[E],
    segments: &[(u32, u32)],
    out: &mut [E],
    probs: &mut [E],
) {
    let dh = hidden / heads;
    let scale = E::ONE / E::from_f64((dh as f64).sqrt());
    let out_slices = split_segments(out, segments, hidden);
    let prob_offs = prob_offsets(segments, heads);
    let prob_slices = {
        let mut rest = probs;
        let mut slices = Vec::with_capacity(segments.len());
        for w in prob_offs.windows(2) {
            let (head, tail) = rest.split_at_mut(w[1] - w[0]);
            slices.push(head);
            rest = tail;
        }
        slices
    };
    segments
        .par_iter()
        .zip(out_slices)
        .zip(prob_slices)
        .for_each(|((&(s, e), out_seg), prob_seg)| {
            let t = (e - s) as usize;
            let base = s as usize * hidden;
            for h in 0..heads {
                let hoff = h * dh;
                let p = &mut prob_seg[h * t * t..(h + 1) * t * t];
                for i in 0..t {
                    let qi = &q[base + i * hidden + hoff..base + i * hidden + hoff + dh];
                    let prow = &mut p[i * t..(i + 1) * t];
                    for (j, pv) in prow.iter_mut().enumerate() {
                        let kj = &k[base + j * hidden + hoff..base + j * hidden + hoff + dh];
                        let mut dot = E::ZERO;
                        for (a, b) in qi.iter().zip(kj) {
                            dot += *a * *b;
                        }
                        *pv = dot * scale;
                    }
                    softmax_row(prow);
                }
                for i in 0..t {
                    let orow = &mut out_seg[i * hidden + hoff..i * hidden + hoff + dh];
                    orow.fill(E::ZERO);
                    let prow = &p[i * t..(i + 1) * t];
                    for (j, &pv) in prow.iter().enumerate() {
                        let vj = &v[base + j * hidden + hoff..base + j * hidden + hoff + dh];
                        for (o, &vv) in orow.iter_mut().zip(vj) {
                            *o += pv * vv;
                        }
                    }
                }
            }
        });
}

#[allow(clippy::too_many_arguments)]
pub fn attention_bwd<E: Real>(
    hidden: usize,
    heads: usize,
    q: &[E],
    k: &[E],
    v: &[E],
    segments: &[(u32, u32)],
    probs: &[E],
    d_out: &[E],
    dq: &mut [E],
    dk: &mut [E],
    dv: &mut [E],
) {
    let dh = hidden / heads;
    let scale = E::ONE / E::from_f64((dh as f64).sqrt());
    let prob_offs = prob_offsets(segments, heads);
    let dq_slices = split_segments(dq, segments, hidden);
    let dk_slices = split_segments(dk, segments, hidden);
    let dv_slices = split_segments(dv, segments, hidden);
    segments
        .par_iter()
        .enumerate()
        .zip(dq_slices)
        .zip(dk_slices)
        .zip(dv_slices)
        .for_each(|((((si, &(s, e)), dq_seg), dk_seg), dv_seg)| {
            let t = (e - s) as usize;
            let base = s as usize * hidden;
            dq_seg.fill(E::ZERO);
            dk_seg.fill(E::ZERO);
            dv_seg.fill(E::ZERO);
            let prob_seg = &probs[prob_offs[si]..prob_offs[si + 1]];
            let mut dp = vec![E::ZERO; t];
            for h in 0..heads {
                let hoff = h * dh;
                let p = &prob_seg[h * t * t..(h + 1) * t * t];
                for i in 0..t {
                    let doi = &d_out[base + i * hidden + hoff..base + i * hidden + hoff + dh];
                    let prow = &p[i * t..(i + 1) * t];
                    // dV += P^T dO ; dP = dO V^T
                    for j in 0..t {
                        let pv = prow[j];
                        let dvj = &mut dv_seg[j * hidden + hoff..j * hidden + hoff + dh];
                        let vj = &v[base + j * hidden + hoff..base + j * hidden + hoff + dh];
                        let mut dot = E::ZERO;
                        for ((dvx, &dox), &vx) in dvj.iter_mut().zip(doi).zip(vj) {
                            *dvx += pv * dox;
                            dot += dox * vx;
                        }
                        dp[j] = dot;
                    }
                    // dS = P (dP - sum(dP*P)) * scale; dQ += dS K; dK += dS^T Q
                    let mut dot = E::ZERO;
                    for j in 0..t {
                        dot += dp[j] * prow[j];
                    }
                    let qi = &q[base + i * hidden + hoff..base + i * hidden + hoff + dh];
                    for j in 0..t {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        let kj = &k[base + j * hidden + hoff..base + j * hidden + hoff + dh];
                        let dqi = &mut dq_seg[i * hidden + hoff..i * hidden + hoff + dh];
                        for (dqx, &kx) in dqi.iter_mut().zip(kj) {
                            *dqx += ds * kx;
                        }
                        let dkj = &mut dk_seg[j * hidden + hoff..j * hidden + hoff + dh];
                        for (dkx, &qx) in dkj.iter_mut().zip(qi) {
                            *dkx += ds * qx;
                        }
                    }
                }
            }
        });
}

/// Mean negative log-likelihood over rows whose label is not [`IGNORE_LABEL`].
///
/// Probabilities are materialized only at selected rows (other rows are left
/// zero, which makes their backward contribution vanish). Returns the loss
/// and the number of selected rows; the loss is 0 when nothing is selected.
pub fn cross_entropy_fwd<E: Real>(
    rows: usize,
    vocab: usize,
    logits: &[E],
    labels: &[u32],
    probs: &mut [E],
) -> (E, usize) {
    let n_sel = labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
    if n_sel == 0 {
        return (E::ZERO, 0);
    }
    let losses: Vec<f64> = probs
        .par_chunks_mut(ROW_CHUNK * vocab)
        .enumerate()
        .map(|(ci, pc)| {
            let base = ci * ROW_CHUNK;
            let mut acc = 0.0f64;
            for j in 0..pc.len() / vocab {
                let r = base + j;
                let label = labels[r];
                if label == IGNORE_LABEL {
                    continue;
                }
                let lr = &logits[r * vocab..(r + 1) * vocab];
                let mut m = lr[0];
                for &v in lr.iter().skip(1) {
                    m = m.maximum(v);
                }
                let mut sum = E::ZERO;
                for &v in lr {
                    sum += (v - m).exp();
                }
                let lse = m + sum.ln();
                acc += (lse - lr[label as usize]).to_f64();
                let pr = &mut pc[j * vocab..(j + 1) * vocab];
                let inv = E::ONE / sum;
                for (p, &v) in pr.iter_mut().zip(lr) {
                    *p = (v - m).exp() * inv;
                }
            }
            acc
        })
        .collect();
    let total: f64 = losses.iter().sum();
    let _ = rows;
    (E::from_f64(total / n_sel as f64), n_sel)
}

/// `dlogits = (probs - onehot(label)) * d_loss / n_sel` at selected rows.
pub fn cross_entropy_bwd<E: Real>(
    vocab: usize,
    probs: &[E],
    labels: &[u32],
    n_sel: usize,
    d_loss: E,
    d_logits: &mut [E],
) {
    if n_sel == 0 {
        d_logits.fill(E::ZERO);
        return;
    }
    let w = d_loss / E::from_f64(n_sel as f64);
    for (r, &label) in labels.iter().enumerate() {
        let dr = &mut d_logits[r * vocab..(r + 1) * vocab];
        if label == IGNORE_LABEL {
            dr.fill(E::ZERO);
            continue;
        }
        let pr = &probs[r * vocab..(r + 1) * vocab];
        for (d, &p) in dr.iter_mut().zip(pr) {
            *d = p * w;
        }
        dr[label as usize] -= w;
    }
}

/// Copies `table` rows selected by `ids` into `out`.
pub fn gather_rows<E: Real>(width: usize, table: &[E], ids: &[u32], out: &mut [E]) {
    for (i, &id) in ids.iter().enumerate() {
        let src = &table[id as usize * width..(id as usize + 1) * width];
        out[i * width..(i + 1) * width].copy_from_slice(src);
    }
}

/// Accumulates `d_out` rows back into the gathered table rows.
pub fn scatter_add_rows<E: Real>(width: usize, d_table: &mut [E], ids: &[u32], d_out: &[E]) {
    for (i, &id) in ids.iter().enumerate() {
        let dst = &mut d_table[id as usize * width..(id as usize + 1) * width];
        let src = &d_out[i * width..(i + 1) * width];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += *s;
        }
    }
}

/// Dot product accumulated in f64 for a precise scalar reduction.
pub fn weighted_sum<E: Real>(x: &[E], w: &[E]) -> E {
    let mut acc = 0.0f64;
    for (a, b) in x.iter().zip(w) {
        acc += a.to_f64() * b.to_f64();
    }
    E::from_f64(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
                c[i * n + j] = acc as f32;
            }
        }
        c
    }

    #[test]
    fn mm_variants_agree_with_naive() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(m, k, n) in &[(3, 4, 2), (17, 9, 5), (300, 33, 21)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.gen::<f32>() - 0.5).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.gen::<f32>() - 0.5).collect();
            let want = naive_mm(m, k, n, &a, &b);
            let mut c = vec![0.0f32; m * n];
            mm_nn(m, k, n, &a, &b, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-4, "mm_nn mismatch {x} vs {y}");
            }
            // b^T stored as [n,k]
            let mut bt = vec![0.0f32; n * k];
            for p in 0..k {
                for j in 0..n {
                    bt[j * k + p] = b[p * n + j];
                }
            }
            mm_nt(m, k, n, &a, &bt, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-4, "mm_nt mismatch {x} vs {y}");
            }
            // a^T stored as [k,m] -> mm_tn expects a:[r,m] with r=k
            let mut at = vec![0.0f32; k * m];
            for i in 0..m {
                for p in 0..k {
                    at[p * m + i] = a[i * k + p];
                }
            }
            mm_tn(k, m, n, &at, &b, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-4, "mm_tn mismatch {x} vs {y}");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = vec![0.5f32, -1.0, 3.0, 2.0, 2.0, 2.0];
        let mut y = vec![0.0f32; 6];
        softmax_axis(&[2, 3], 1, &x, &mut y);
        for r in 0..2 {
            let s: f32 = y[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
