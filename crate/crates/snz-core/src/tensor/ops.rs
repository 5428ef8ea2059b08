//! Forward and backward rules for every operator in the engine.

use rand::Rng;
use rayon::prelude::*;

use crate::num::Scalar;
use crate::tensor::{BackwardOp, Tensor, TensorError};

/// Floor used when taking logs of predicted probabilities.
pub const LOG_FLOOR: f64 = 1e-12;

const PAR_THRESHOLD: usize = 16 * 1024;

// --- matmul kernels -------------------------------------------------------

/// `a [m,k] . b [k,n]`
pub(crate) fn mm<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    let body = |(i, row): (usize, &mut [S])| {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == S::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        out.chunks_mut(n).enumerate().for_each(body);
    }
    out
}

/// `a [m,k] . b^T` with `b [n,k]`
pub(crate) fn mm_a_bt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    let body = |(i, row): (usize, &mut [S])| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *o = acc;
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        out.chunks_mut(n).enumerate().for_each(body);
    }
    out
}

/// `a^T . b` with `a [k,m]`, `b [k,n]`
pub(crate) fn mm_at_b<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    let body = |(i, row): (usize, &mut [S])| {
        for kk in 0..k {
            let av = a[kk * m + i];
            if av == S::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        out.chunks_mut(n).enumerate().for_each(body);
    }
    out
}

// --- elementwise ----------------------------------------------------------

struct AddBack;
impl<S: Scalar> BackwardOp<S> for AddBack {
    fn backward(
        &self,
        _out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        needs.iter().map(|&n| n.then(|| g.to_vec())).collect()
    }
}

struct MulBack;
impl<S: Scalar> BackwardOp<S> for MulBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let a = parents[0].data();
        let b = parents[1].data();
        vec![
            needs[0].then(|| g.iter().zip(b).map(|(&gv, &bv)| gv * bv).collect()),
            needs[1].then(|| g.iter().zip(a).map(|(&gv, &av)| gv * av).collect()),
        ]
    }
}

struct ScaleBack<S>(S);
impl<S: Scalar> BackwardOp<S> for ScaleBack<S> {
    fn backward(
        &self,
        _out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        vec![needs[0].then(|| g.iter().map(|&gv| gv * self.0).collect())]
    }
}

struct SumBack;
impl<S: Scalar> BackwardOp<S> for SumBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        vec![needs[0].then(|| vec![g[0]; parents[0].numel()])]
    }
}

struct ReluBack;
impl<S: Scalar> BackwardOp<S> for ReluBack {
    fn backward(
        &self,
        out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        // gradient at exactly zero input is defined as zero
        vec![needs[0].then(|| {
            g.iter()
                .zip(out)
                .map(|(&gv, &ov)| if ov > S::zero() { gv } else { S::zero() })
                .collect()
        })]
    }
}

struct DropoutBack<S> {
    mask: Vec<S>,
}
impl<S: Scalar> BackwardOp<S> for DropoutBack<S> {
    fn backward(
        &self,
        _out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        vec![needs[0].then(|| g.iter().zip(&self.mask).map(|(&gv, &m)| gv * m).collect())]
    }
}

// --- linear algebra -------------------------------------------------------

struct MatmulBack;
impl<S: Scalar> BackwardOp<S> for MatmulBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let (a, b) = (&parents[0], &parents[1]);
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        vec![
            needs[0].then(|| mm_a_bt(g, b.data(), m, n, k)),
            needs[1].then(|| mm_at_b(a.data(), g, k, m, n)),
        ]
    }
}

struct TransposeBack;
impl<S: Scalar> BackwardOp<S> for TransposeBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let (m, n) = (parents[0].shape()[0], parents[0].shape()[1]);
        vec![needs[0].then(|| transpose_data(g, n, m))]
    }
}

fn transpose_data<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

struct LinearBack;
impl<S: Scalar> BackwardOp<S> for LinearBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let (x, w) = (&parents[0], &parents[1]);
        let (rows, d_in) = (x.shape()[0], x.shape()[1]);
        let d_out = w.shape()[1];
        let dx = needs[0].then(|| mm_a_bt(g, w.data(), rows, d_out, d_in));
        let dw = needs[1].then(|| mm_at_b(x.data(), g, d_in, rows, d_out));
        let db = needs[2].then(|| {
            let mut acc = vec![S::zero(); d_out];
            for row in g.chunks(d_out) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc
        });
        vec![dx, dw, db]
    }
}

// --- normalization and softmax ---------------------------------------------

struct SoftmaxRowsBack;
impl<S: Scalar> BackwardOp<S> for SoftmaxRowsBack {
    fn backward(
        &self,
        out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let cols = parents[0].shape()[parents[0].shape().len() - 1];
        vec![needs[0].then(|| {
            let mut dx = vec![S::zero(); g.len()];
            for ((dx_row, g_row), p_row) in
                dx.chunks_mut(cols).zip(g.chunks(cols)).zip(out.chunks(cols))
            {
                let mut dot = S::zero();
                for (&gv, &pv) in g_row.iter().zip(p_row.iter()) {
                    dot += gv * pv;
                }
                for ((d, &gv), &pv) in dx_row.iter_mut().zip(g_row).zip(p_row) {
                    *d = pv * (gv - dot);
                }
            }
            dx
        })]
    }
}

struct LayerNormBack {
    eps: f64,
}
impl<S: Scalar> BackwardOp<S> for LayerNormBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let x = parents[0].data();
        let gamma = parents[1].data();
        let d = parents[1].numel();
        let rows = x.len() / d;
        let mut dx = needs[0].then(|| vec![S::zero(); x.len()]);
        let mut dgamma = needs[1].then(|| vec![S::zero(); d]);
        let mut dbeta = needs[2].then(|| vec![S::zero(); d]);

        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            let gr = &g[r * d..(r + 1) * d];
            let mean = xr.iter().copied().sum::<S>() / S::of_usize(d);
            let var = xr
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<S>()
                / S::of_usize(d);
            let inv = (var + S::of_f64(self.eps)).sqrt().recip();
            let xhat: Vec<S> = xr.iter().map(|&v| (v - mean) * inv).collect();

            if let Some(dg) = dgamma.as_mut() {
                for (j, dv) in dg.iter_mut().enumerate() {
                    *dv += gr[j] * xhat[j];
                }
            }
            if let Some(db) = dbeta.as_mut() {
                for (j, dv) in db.iter_mut().enumerate() {
                    *dv += gr[j];
                }
            }
            if let Some(dx) = dx.as_mut() {
                // d xhat
                let dxhat: Vec<S> = gr.iter().zip(gamma).map(|(&gv, &gm)| gv * gm).collect();
                let mean_dxhat = dxhat.iter().copied().sum::<S>() / S::of_usize(d);
                let mean_dxhat_xhat = dxhat
                    .iter()
                    .zip(&xhat)
                    .map(|(&a, &b)| a * b)
                    .sum::<S>()
                    / S::of_usize(d);
                let row = &mut dx[r * d..(r + 1) * d];
                for j in 0..d {
                    row[j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
        }
        vec![dx, dgamma, dbeta]
    }
}

struct BatchNormBack<S> {
    mean: Vec<S>,
    var: Vec<S>,
    eps: f64,
    stats_from_batch: bool,
}
impl<S: Scalar> BackwardOp<S> for BatchNormBack<S> {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let x = parents[0].data();
        let gamma = parents[1].data();
        let channels = parents[1].numel();
        let len = x.len() / channels;
        let mut dx = needs[0].then(|| vec![S::zero(); x.len()]);
        let mut dgamma = needs[1].then(|| vec![S::zero(); channels]);
        let mut dbeta = needs[2].then(|| vec![S::zero(); channels]);

        for c in 0..channels {
            let xc = &x[c * len..(c + 1) * len];
            let gc = &g[c * len..(c + 1) * len];
            let inv = (self.var[c] + S::of_f64(self.eps)).sqrt().recip();
            let mean = self.mean[c];
            if let Some(db) = dbeta.as_mut() {
                db[c] = gc.iter().copied().sum::<S>();
            }
            if let Some(dg) = dgamma.as_mut() {
                let mut acc = S::zero();
                for (&gv, &xv) in gc.iter().zip(xc) {
                    acc += gv * (xv - mean) * inv;
                }
                dg[c] = acc;
            }
            if let Some(dx) = dx.as_mut() {
                let row = &mut dx[c * len..(c + 1) * len];
                let scale = gamma[c] * inv;
                if self.stats_from_batch {
                    let n = S::of_usize(len);
                    let sum_g = gc.iter().copied().sum::<S>();
                    let mut sum_g_xhat = S::zero();
                    for (&gv, &xv) in gc.iter().zip(xc) {
                        sum_g_xhat += gv * (xv - mean) * inv;
                    }
                    for (j, r) in row.iter_mut().enumerate() {
                        let xhat = (xc[j] - mean) * inv;
                        *r = scale * (gc[j] - sum_g / n - xhat * sum_g_xhat / n);
                    }
                } else {
                    for (r, &gv) in row.iter_mut().zip(gc) {
                        *r = scale * gv;
                    }
                }
            }
        }
        vec![dx, dgamma, dbeta]
    }
}

// --- convolution and pooling ------------------------------------------------

struct Conv1dBack {
    stride: usize,
    padding: usize,
}
impl<S: Scalar> BackwardOp<S> for Conv1dBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let (x, w) = (&parents[0], &parents[1]);
        let (c_in, l_in) = (x.shape()[0], x.shape()[1]);
        let (c_out, k) = (w.shape()[0], w.shape()[2]);
        let l_out = g.len() / c_out;
        let (stride, padding) = (self.stride, self.padding);
        let xd = x.data();
        let wd = w.data();

        let dx = needs[0].then(|| {
            let mut dx = vec![S::zero(); c_in * l_in];
            let body = |(ci, row): (usize, &mut [S])| {
                for co in 0..c_out {
                    let grow = &g[co * l_out..(co + 1) * l_out];
                    let wrow = &wd[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                    for (j, &wv) in wrow.iter().enumerate() {
                        if wv == S::zero() {
                            continue;
                        }
                        for (t, &gv) in grow.iter().enumerate() {
                            let u = t * stride + j;
                            if u >= padding && u - padding < l_in {
                                row[u - padding] += wv * gv;
                            }
                        }
                    }
                }
            };
            if c_in * l_in >= PAR_THRESHOLD {
                dx.par_chunks_mut(l_in).enumerate().for_each(body);
            } else {
                dx.chunks_mut(l_in).enumerate().for_each(body);
            }
            dx
        });

        let dw = needs[1].then(|| {
            let mut dw = vec![S::zero(); c_out * c_in * k];
            let body = |(co, wslab): (usize, &mut [S])| {
                let grow = &g[co * l_out..(co + 1) * l_out];
                for ci in 0..c_in {
                    let xrow = &xd[ci * l_in..(ci + 1) * l_in];
                    let wrow = &mut wslab[ci * k..(ci + 1) * k];
                    for (j, wv) in wrow.iter_mut().enumerate() {
                        let mut acc = S::zero();
                        for (t, &gv) in grow.iter().enumerate() {
                            let u = t * stride + j;
                            if u >= padding && u - padding < l_in {
                                acc += gv * xrow[u - padding];
                            }
                        }
                        *wv += acc;
                    }
                }
            };
            if c_out * c_in * k * l_out >= PAR_THRESHOLD {
                dw.par_chunks_mut(c_in * k).enumerate().for_each(body);
            } else {
                dw.chunks_mut(c_in * k).enumerate().for_each(body);
            }
            dw
        });

        let db = (needs.len() > 2 && needs[2]).then(|| {
            g.chunks(l_out).map(|row| row.iter().copied().sum::<S>()).collect::<Vec<S>>()
        });

        let mut grads = vec![dx, dw];
        if needs.len() > 2 {
            grads.push(db);
        }
        grads
    }
}

struct MaxPoolBack {
    argmax: Vec<usize>,
    input_len: usize,
}
impl<S: Scalar> BackwardOp<S> for MaxPoolBack {
    fn backward(
        &self,
        _out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        vec![needs[0].then(|| {
            let mut dx = vec![S::zero(); self.input_len];
            for (&idx, &gv) in self.argmax.iter().zip(g) {
                dx[idx] += gv;
            }
            dx
        })]
    }
}

// --- shape plumbing ---------------------------------------------------------

struct ConcatBack {
    axis: usize,
    part_dims: Vec<usize>,
    rows: usize,
}
impl<S: Scalar> BackwardOp<S> for ConcatBack {
    fn backward(
        &self,
        _out: &[S],
        _parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        match self.axis {
            0 => {
                let mut grads = Vec::with_capacity(self.part_dims.len());
                let mut offset = 0;
                for (i, &rows_i) in self.part_dims.iter().enumerate() {
                    let size = rows_i * self.rows; // rows here stores cols for axis 0
                    grads.push(needs[i].then(|| g[offset..offset + size].to_vec()));
                    offset += size;
                }
                grads
            }
            1 => {
                let total: usize = self.part_dims.iter().sum();
                let mut grads: Vec<Option<Vec<S>>> = self
                    .part_dims
                    .iter()
                    .zip(needs)
                    .map(|(&d, &n)| n.then(|| Vec::with_capacity(d * self.rows)))
                    .collect();
                for r in 0..self.rows {
                    let row = &g[r * total..(r + 1) * total];
                    let mut offset = 0;
                    for (i, &d) in self.part_dims.iter().enumerate() {
                        if let Some(buf) = grads[i].as_mut() {
                            buf.extend_from_slice(&row[offset..offset + d]);
                        }
                        offset += d;
                    }
                }
                grads
            }
            _ => unreachable!("concat axis checked at forward time"),
        }
    }
}

struct SliceColsBack {
    start: usize,
    width: usize,
}
impl<S: Scalar> BackwardOp<S> for SliceColsBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let cols = parents[0].shape()[1];
        let rows = parents[0].shape()[0];
        vec![needs[0].then(|| {
            let mut dx = vec![S::zero(); rows * cols];
            for (r, grow) in g.chunks(self.width).enumerate() {
                dx[r * cols + self.start..r * cols + self.start + self.width]
                    .copy_from_slice(grow);
            }
            dx
        })]
    }
}

struct CrossEntropyBack {
    targets: Vec<usize>,
}
impl<S: Scalar> BackwardOp<S> for CrossEntropyBack {
    fn backward(
        &self,
        _out: &[S],
        parents: &[Tensor<S>],
        g: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>> {
        let p = parents[0].data();
        let cols = parents[0].shape()[1];
        let floor = S::of_f64(LOG_FLOOR);
        vec![needs[0].then(|| {
            let mut dp = vec![S::zero(); p.len()];
            for (t, &y) in self.targets.iter().enumerate() {
                let v = p[t * cols + y];
                if v > floor {
                    dp[t * cols + y] = -g[0] / v;
                }
            }
            dp
        })]
    }
}

// --- public operator surface -------------------------------------------------

impl<S: Scalar> Tensor<S> {
    fn same_shape(&self, other: &Tensor<S>, op: &'static str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(AddBack),
        ))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.same_shape(other, "mul")?;
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(MulBack),
        ))
    }

    /// Multiplication by a constant.
    pub fn scale(&self, factor: f64) -> Tensor<S> {
        let f = S::of_f64(factor);
        let data = self.data().iter().map(|&v| v * f).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Box::new(ScaleBack(f)))
    }

    /// Sum of every element, as a scalar tensor.
    pub fn sum(&self) -> Tensor<S> {
        let total = self.data().iter().copied().sum::<S>();
        Tensor::from_op(vec![1], vec![total], vec![self.clone()], Box::new(SumBack))
    }

    pub fn relu(&self) -> Tensor<S> {
        let data = self.data().iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Box::new(ReluBack))
    }

    /// Inverted dropout: keeps each element with probability `1 - p`, scaling
    /// the kept ones by `1/(1-p)` so the expectation is preserved. Call only
    /// on the training path; evaluation simply skips the operator.
    pub fn dropout<R: Rng>(&self, p: f64, rng: &mut R) -> Tensor<S> {
        assert!((0.0..1.0).contains(&p), "dropout probability {p} out of range");
        if p == 0.0 {
            return self.clone();
        }
        let keep_scale = S::of_f64(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.numel())
            .map(|_| if rng.random::<f64>() >= p { keep_scale } else { S::zero() })
            .collect();
        let data = self.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(DropoutBack { mask }),
        )
    }

    /// `self [m,k] . other [k,n]`.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 || other.shape().len() != 2 || self.shape()[1] != other.shape()[0]
        {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = other.shape()[1];
        let data = mm(self.data(), other.data(), m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(MatmulBack),
        ))
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 {
            return Err(TensorError::Invalid(format!(
                "transpose expects a 2-D tensor, got {:?}",
                self.shape()
            )));
        }
        let (m, n) = (self.shape()[0], self.shape()[1]);
        Ok(Tensor::from_op(
            vec![n, m],
            transpose_data(self.data(), m, n),
            vec![self.clone()],
            Box::new(TransposeBack),
        ))
    }

    /// Affine map `self [n,in] . w [in,out] + b [out]`.
    pub fn linear(&self, w: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 || w.shape().len() != 2 || self.shape()[1] != w.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: self.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let d_out = w.shape()[1];
        if b.shape() != [d_out] {
            return Err(TensorError::ShapeMismatch {
                op: "linear bias",
                lhs: vec![d_out],
                rhs: b.shape().to_vec(),
            });
        }
        let rows = self.shape()[0];
        let mut data = mm(self.data(), w.data(), rows, self.shape()[1], d_out);
        for row in data.chunks_mut(d_out) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        Ok(Tensor::from_op(
            vec![rows, d_out],
            data,
            vec![self.clone(), w.clone(), b.clone()],
            Box::new(LinearBack),
        ))
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax_rows(&self) -> Tensor<S> {
        let cols = *self.shape().last().expect("softmax on empty shape");
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(cols) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let exps: Vec<S> = row.iter().map(|&v| (v - max).exp()).collect();
            let total = exps.iter().copied().sum::<S>();
            data.extend(exps.into_iter().map(|e| e / total));
        }
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(SoftmaxRowsBack),
        )
    }

    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        eps: f64,
    ) -> Result<Tensor<S>, TensorError> {
        let d = *self.shape().last().expect("layer_norm on empty shape");
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: vec![d],
                rhs: gamma.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(d) {
            let mean = row.iter().copied().sum::<S>() / S::of_usize(d);
            let var =
                row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / S::of_usize(d);
            let inv = (var + S::of_f64(eps)).sqrt().recip();
            for (j, &v) in row.iter().enumerate() {
                data.push(gamma.data()[j] * (v - mean) * inv + beta.data()[j]);
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(LayerNormBack { eps }),
        ))
    }

    /// Per-channel batch normalization of a `[channels, len]` tensor using
    /// the supplied statistics. `stats_from_batch` marks whether the stats
    /// were computed from this very input (training mode), which routes the
    /// gradient through them.
    pub fn batchnorm1d(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        mean: &[S],
        var: &[S],
        eps: f64,
        stats_from_batch: bool,
    ) -> Result<Tensor<S>, TensorError> {
        let channels = self.shape()[0];
        if gamma.shape() != [channels] || beta.shape() != [channels] || mean.len() != channels
            || var.len() != channels
        {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm1d",
                lhs: vec![channels],
                rhs: gamma.shape().to_vec(),
            });
        }
        let len = self.shape()[1];
        let mut data = Vec::with_capacity(self.numel());
        for c in 0..channels {
            let inv = (var[c] + S::of_f64(eps)).sqrt().recip();
            let scale = gamma.data()[c] * inv;
            let shift = beta.data()[c] - mean[c] * scale;
            for &v in &self.data()[c * len..(c + 1) * len] {
                data.push(v * scale + shift);
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(BatchNormBack {
                mean: mean.to_vec(),
                var: var.to_vec(),
                eps,
                stats_from_batch,
            }),
        ))
    }

    /// 1-D convolution of `self [c_in, len]` with `w [c_out, c_in, k]`;
    /// output length is `floor((len + 2 padding - k) / stride) + 1`.
    pub fn conv1d(
        &self,
        w: &Tensor<S>,
        b: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 || w.shape().len() != 3 || self.shape()[0] != w.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: self.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let (c_in, l_in) = (self.shape()[0], self.shape()[1]);
        let (c_out, k) = (w.shape()[0], w.shape()[2]);
        if l_in + 2 * padding < k {
            return Err(TensorError::Invalid(format!(
                "conv1d kernel {k} longer than padded input {}",
                l_in + 2 * padding
            )));
        }
        let l_out = (l_in + 2 * padding - k) / stride + 1;
        if let Some(bias) = b {
            if bias.shape() != [c_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv1d bias",
                    lhs: vec![c_out],
                    rhs: bias.shape().to_vec(),
                });
            }
        }

        let xd = self.data();
        let wd = w.data();
        let mut data = vec![S::zero(); c_out * l_out];
        let body = |(co, out_row): (usize, &mut [S])| {
            if let Some(bias) = b {
                let bv = bias.data()[co];
                out_row.iter_mut().for_each(|v| *v = bv);
            }
            for ci in 0..c_in {
                let xrow = &xd[ci * l_in..(ci + 1) * l_in];
                let wrow = &wd[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (j, &wv) in wrow.iter().enumerate() {
                    if wv == S::zero() {
                        continue;
                    }
                    // valid t satisfy 0 <= t*stride + j - padding < l_in
                    let t_min = padding.saturating_sub(j).div_ceil(stride);
                    let t_max = if l_in + padding > j {
                        ((l_in + padding - j - 1) / stride + 1).min(l_out)
                    } else {
                        0
                    };
                    if t_min >= t_max {
                        continue;
                    }
                    let src0 = t_min * stride + j - padding;
                    if stride == 1 {
                        let src = &xrow[src0..src0 + (t_max - t_min)];
                        for (o, &xv) in out_row[t_min..t_max].iter_mut().zip(src) {
                            *o += wv * xv;
                        }
                    } else {
                        let mut src = src0;
                        for o in out_row[t_min..t_max].iter_mut() {
                            *o += wv * xrow[src];
                            src += stride;
                        }
                    }
                }
            }
        };
        if c_out * c_in * k * l_out >= PAR_THRESHOLD {
            data.par_chunks_mut(l_out).enumerate().for_each(body);
        } else {
            data.chunks_mut(l_out).enumerate().for_each(body);
        }

        let mut parents = vec![self.clone(), w.clone()];
        if let Some(bias) = b {
            parents.push(bias.clone());
        }
        Ok(Tensor::from_op(
            vec![c_out, l_out],
            data,
            parents,
            Box::new(Conv1dBack { stride, padding }),
        ))
    }

    /// 1-D max pooling over `[channels, len]`; padding counts as negative
    /// infinity and argmax ties break toward the earliest index.
    pub fn maxpool1d(
        &self,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 {
            return Err(TensorError::Invalid(format!(
                "maxpool1d expects [channels, len], got {:?}",
                self.shape()
            )));
        }
        let (channels, l_in) = (self.shape()[0], self.shape()[1]);
        if l_in + 2 * padding < kernel {
            return Err(TensorError::Invalid(format!(
                "maxpool1d kernel {kernel} longer than padded input {}",
                l_in + 2 * padding
            )));
        }
        let l_out = (l_in + 2 * padding - kernel) / stride + 1;
        let mut data = Vec::with_capacity(channels * l_out);
        let mut argmax = Vec::with_capacity(channels * l_out);
        for c in 0..channels {
            let xrow = &self.data()[c * l_in..(c + 1) * l_in];
            for t in 0..l_out {
                let mut best = S::neg_infinity();
                let mut best_idx = usize::MAX;
                for j in 0..kernel {
                    let u = t * stride + j;
                    if u < padding || u - padding >= l_in {
                        continue;
                    }
                    let v = xrow[u - padding];
                    if v > best {
                        best = v;
                        best_idx = c * l_in + (u - padding);
                    }
                }
                debug_assert!(best_idx != usize::MAX, "window fully out of bounds");
                data.push(best);
                argmax.push(best_idx);
            }
        }
        Ok(Tensor::from_op(
            vec![channels, l_out],
            data,
            vec![self.clone()],
            Box::new(MaxPoolBack { argmax, input_len: channels * l_in }),
        ))
    }

    /// Columns `[start, start + width)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Tensor<S>, TensorError> {
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        if start + width > cols {
            return Err(TensorError::Invalid(format!(
                "slice_cols {start}..{} out of {cols} columns",
                start + width
            )));
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&self.data()[r * cols + start..r * cols + start + width]);
        }
        Ok(Tensor::from_op(
            vec![rows, width],
            data,
            vec![self.clone()],
            Box::new(SliceColsBack { start, width }),
        ))
    }

    /// Sum-over-epochs cross-entropy of predicted probability rows against
    /// integer targets, with the log floored at [`LOG_FLOOR`].
    pub fn cross_entropy_sum(&self, targets: &[usize]) -> Result<Tensor<S>, TensorError> {
        if self.shape().len() != 2 || self.shape()[0] != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let cols = self.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&y| y >= cols) {
            return Err(TensorError::Invalid(format!(
                "target class {bad} out of {cols} classes"
            )));
        }
        let floor = S::of_f64(LOG_FLOOR);
        let mut loss = S::zero();
        for (t, &y) in targets.iter().enumerate() {
            loss -= self.data()[t * cols + y].max(floor).ln();
        }
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            Box::new(CrossEntropyBack { targets: targets.to_vec() }),
        ))
    }
}

/// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
pub fn concat<S: Scalar>(axis: usize, parts: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
    if parts.is_empty() {
        return Err(TensorError::Invalid("concat of zero tensors".into()));
    }
    if parts.iter().any(|p| p.shape().len() != 2) {
        return Err(TensorError::Invalid("concat expects 2-D tensors".into()));
    }
    match axis {
        0 => {
            let cols = parts[0].shape()[1];
            if let Some(bad) = parts.iter().find(|p| p.shape()[1] != cols) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat axis 0",
                    lhs: parts[0].shape().to_vec(),
                    rhs: bad.shape().to_vec(),
                });
            }
            let rows: usize = parts.iter().map(|p| p.shape()[0]).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for p in parts {
                data.extend_from_slice(p.data());
            }
            Ok(Tensor::from_op(
                vec![rows, cols],
                data,
                parts.to_vec(),
                Box::new(ConcatBack {
                    axis: 0,
                    part_dims: parts.iter().map(|p| p.shape()[0]).collect(),
                    rows: cols,
                }),
            ))
        }
        1 => {
            let rows = parts[0].shape()[0];
            if let Some(bad) = parts.iter().find(|p| p.shape()[0] != rows) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat axis 1",
                    lhs: parts[0].shape().to_vec(),
                    rhs: bad.shape().to_vec(),
                });
            }
            let total: usize = parts.iter().map(|p| p.shape()[1]).sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for p in parts {
                    let d = p.shape()[1];
                    data.extend_from_slice(&p.data()[r * d..(r + 1) * d]);
                }
            }
            Ok(Tensor::from_op(
                vec![rows, total],
                data,
                parts.to_vec(),
                Box::new(ConcatBack {
                    axis: 1,
                    part_dims: parts.iter().map(|p| p.shape()[1]).collect(),
                    rows,
                }),
            ))
        }
        _ => Err(TensorError::Invalid(format!("concat axis {axis} unsupported"))),
    }
}
