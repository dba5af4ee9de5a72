//! Layers with explicit forward/backward passes: dense, ReLU, layer norm,
//! softmax, and multi-head self-attention.

use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::rng::Rng;
use crate::Scalar;

/// Fully connected layer: y = x W^T + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// out x in.
    pub w: Tensor2<T>,
    /// 1 x out.
    pub b: Tensor2<T>,
}

impl<T: Scalar> Dense<T> {
    /// Glorot-uniform initialization: +-sqrt(6/(fan_in+fan_out)).
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut w = Tensor2::zeros(out_dim, in_dim);
        for v in w.data.iter_mut() {
            *v = T::cast(rng.uniform_in(-bound, bound));
        }
        Dense {
            w,
            b: Tensor2::zeros(1, out_dim),
        }
    }

    pub fn zeros_like(&self) -> Dense<T> {
        Dense {
            w: Tensor2::zeros(self.w.rows, self.w.cols),
            b: Tensor2::zeros(1, self.b.cols),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }
}

/// y = x W^T + b, x: n x in -> n x out.
pub fn dense_forward<T: Scalar>(layer: &Dense<T>, x: &Tensor2<T>) -> Result<Tensor2<T>> {
    if x.cols != layer.in_dim() {
        return Err(Error::invalid(format!(
            "dense input has {} features, layer expects {}",
            x.cols,
            layer.in_dim()
        )));
    }
    let mut y = x.matmul_transposed(&layer.w);
    for r in 0..y.rows {
        let row = y.row_mut(r);
        for (v, b) in row.iter_mut().zip(layer.b.row(0)) {
            *v += *b;
        }
    }
    Ok(y)
}

/// Given dL/dy, produce parameter gradients and dL/dx.
pub fn dense_backward<T: Scalar>(
    layer: &Dense<T>,
    x: &Tensor2<T>,
    dy: &Tensor2<T>,
) -> (Dense<T>, Tensor2<T>) {
    debug_assert_eq!(dy.cols, layer.out_dim());
    debug_assert_eq!(x.rows, dy.rows);
    let dw = dy.transposed_matmul(x); // out x in
    let mut db = Tensor2::zeros(1, layer.out_dim());
    for r in 0..dy.rows {
        for (acc, v) in db.row_mut(0).iter_mut().zip(dy.row(r)) {
            *acc += *v;
        }
    }
    let dx = dy.matmul(&layer.w);
    (Dense { w: dw, b: db }, dx)
}

pub fn relu_forward<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut y = x.clone();
    for v in y.data.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// dL/dx from dL/dy and the pre-activation input.
pub fn relu_backward<T: Scalar>(x: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
    let mut dx = dy.clone();
    for (d, v) in dx.data.iter_mut().zip(&x.data) {
        if *v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

/// Layer normalization over the feature axis with learned affine.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    /// 1 x d.
    pub gamma: Tensor2<T>,
    /// 1 x d.
    pub beta: Tensor2<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn init(dim: usize) -> Self {
        let mut gamma = Tensor2::zeros(1, dim);
        for v in gamma.data.iter_mut() {
            *v = T::one();
        }
        LayerNorm {
            gamma,
            beta: Tensor2::zeros(1, dim),
        }
    }

    pub fn zeros_like(&self) -> LayerNorm<T> {
        LayerNorm {
            gamma: Tensor2::zeros(1, self.gamma.cols),
            beta: Tensor2::zeros(1, self.beta.cols),
        }
    }
}

pub struct LayerNormCache<T> {
    /// Normalized rows before the affine map.
    pub xhat: Tensor2<T>,
    pub inv_std: Vec<T>,
}

const LN_EPS: f64 = 1e-6;

pub fn layer_norm_forward<T: Scalar>(
    ln: &LayerNorm<T>,
    x: &Tensor2<T>,
) -> (Tensor2<T>, LayerNormCache<T>) {
    let d = T::from_count(x.cols);
    let mut y = Tensor2::zeros(x.rows, x.cols);
    let mut xhat = Tensor2::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / d;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / d;
        let istd = T::one() / (var + T::cast(LN_EPS)).sqrt();
        inv_std.push(istd);
        for c in 0..x.cols {
            let xh = (row[c] - mean) * istd;
            xhat.set(r, c, xh);
            y.set(r, c, ln.gamma.at(0, c) * xh + ln.beta.at(0, c));
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward<T: Scalar>(
    ln: &LayerNorm<T>,
    cache: &LayerNormCache<T>,
    dy: &Tensor2<T>,
) -> (LayerNorm<T>, Tensor2<T>) {
    let d = T::from_count(dy.cols);
    let mut grads = ln.zeros_like();
    let mut dx = Tensor2::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for c in 0..dy.cols {
            let g = dy.at(r, c);
            let xh = cache.xhat.at(r, c);
            grads.gamma.data[c] += g * xh;
            grads.beta.data[c] += g;
            let dxh = g * ln.gamma.at(0, c);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh;
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for c in 0..dy.cols {
            let xh = cache.xhat.at(r, c);
            let dxh = dy.at(r, c) * ln.gamma.at(0, c);
            dx.set(
                r,
                c,
                cache.inv_std[r] * (dxh - mean_dxhat - xh * mean_dxhat_xhat),
            );
        }
    }
    (grads, dx)
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut y = x.clone();
    for r in 0..y.rows {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// dL/dx of softmax given its output `a` and dL/da.
pub fn softmax_backward<T: Scalar>(a: &Tensor2<T>, da: &Tensor2<T>) -> Tensor2<T> {
    let mut dx = Tensor2::zeros(a.rows, a.cols);
    for r in 0..a.rows {
        let dot: T = a
            .row(r)
            .iter()
            .zip(da.row(r))
            .map(|(av, dv)| *av * *dv)
            .sum();
        for c in 0..a.cols {
            dx.set(r, c, a.at(r, c) * (da.at(r, c) - dot));
        }
    }
    dx
}

/// Multi-head self-attention parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub wq: Dense<T>,
    pub wk: Dense<T>,
    pub wv: Dense<T>,
    pub wo: Dense<T>,
    pub n_heads: usize,
}

impl<T: Scalar> Attention<T> {
    pub fn init(d_model: usize, n_heads: usize, rng: &mut Rng) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model {d_model} not divisible by {n_heads} heads"
            )));
        }
        Ok(Attention {
            wq: Dense::init(d_model, d_model, rng),
            wk: Dense::init(d_model, d_model, rng),
            wv: Dense::init(d_model, d_model, rng),
            wo: Dense::init(d_model, d_model, rng),
            n_heads,
        })
    }

    pub fn zeros_like(&self) -> Attention<T> {
        Attention {
            wq: self.wq.zeros_like(),
            wk: self.wk.zeros_like(),
            wv: self.wv.zeros_like(),
            wo: self.wo.zeros_like(),
            n_heads: self.n_heads,
        }
    }
}

pub struct AttentionCache<T> {
    pub x: Tensor2<T>,
    pub q: Tensor2<T>,
    pub k: Tensor2<T>,
    pub v: Tensor2<T>,
    /// Softmax weights per head, each T x T.
    pub weights: Vec<Tensor2<T>>,
    /// Concatenated head outputs before the output projection.
    pub concat: Tensor2<T>,
}

fn head_slice<T: Scalar>(m: &Tensor2<T>, head: usize, dk: usize) -> Tensor2<T> {
    let mut out = Tensor2::zeros(m.rows, dk);
    for r in 0..m.rows {
        out.row_mut(r)
            .copy_from_slice(&m.row(r)[head * dk..(head + 1) * dk]);
    }
    out
}

fn head_insert<T: Scalar>(dst: &mut Tensor2<T>, src: &Tensor2<T>, head: usize, dk: usize) {
    for r in 0..src.rows {
        dst.row_mut(r)[head * dk..(head + 1) * dk].copy_from_slice(src.row(r));
    }
}

fn head_add<T: Scalar>(dst: &mut Tensor2<T>, src: &Tensor2<T>, head: usize, dk: usize) {
    for r in 0..src.rows {
        for (d, s) in dst.row_mut(r)[head * dk..(head + 1) * dk]
            .iter_mut()
            .zip(src.row(r))
        {
            *d += *s;
        }
    }
}

/// Full (non-causal) scaled dot-product attention over the sequence.
pub fn attention_forward<T: Scalar>(
    attn: &Attention<T>,
    x: &Tensor2<T>,
) -> Result<(Tensor2<T>, AttentionCache<T>)> {
    if x.rows == 0 {
        return Err(Error::invalid("attention over an empty sequence"));
    }
    let d_model = attn.wq.in_dim();
    if x.cols != d_model {
        return Err(Error::invalid(format!(
            "attention input width {} != d_model {d_model}",
            x.cols
        )));
    }
    let dk = d_model / attn.n_heads;
    let scale = T::cast(1.0 / (dk as f64).sqrt());
    let q = dense_forward(&attn.wq, x)?;
    let k = dense_forward(&attn.wk, x)?;
    let v = dense_forward(&attn.wv, x)?;
    let mut concat = Tensor2::zeros(x.rows, d_model);
    let mut weights = Vec::with_capacity(attn.n_heads);
    for h in 0..attn.n_heads {
        let qh = head_slice(&q, h, dk);
        let kh = head_slice(&k, h, dk);
        let vh = head_slice(&v, h, dk);
        let mut scores = qh.matmul_transposed(&kh);
        scores.scale(scale);
        let a = softmax_rows(&scores);
        let oh = a.matmul(&vh);
        head_insert(&mut concat, &oh, h, dk);
        weights.push(a);
    }
    let out = dense_forward(&attn.wo, &concat)?;
    Ok((
        out,
        AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

pub fn attention_backward<T: Scalar>(
    attn: &Attention<T>,
    cache: &AttentionCache<T>,
    dy: &Tensor2<T>,
) -> (Attention<T>, Tensor2<T>) {
    let d_model = attn.wq.in_dim();
    let dk = d_model / attn.n_heads;
    let scale = T::cast(1.0 / (dk as f64).sqrt());
    let (dwo, dconcat) = dense_backward(&attn.wo, &cache.concat, dy);
    let mut dq = Tensor2::zeros(cache.q.rows, d_model);
    let mut dkk = Tensor2::zeros(cache.k.rows, d_model);
    let mut dv = Tensor2::zeros(cache.v.rows, d_model);
    for h in 0..attn.n_heads {
        let a = &cache.weights[h];
        let qh = head_slice(&cache.q, h, dk);
        let kh = head_slice(&cache.k, h, dk);
        let vh = head_slice(&cache.v, h, dk);
        let doh = head_slice(&dconcat, h, dk);
        let da = doh.matmul_transposed(&vh);
        let dvh = a.transposed_matmul(&doh);
        let mut ds = softmax_backward(a, &da);
        ds.scale(scale);
        let dqh = ds.matmul(&kh);
        let dkh = ds.transposed_matmul(&qh);
        head_add(&mut dq, &dqh, h, dk);
        head_add(&mut dkk, &dkh, h, dk);
        head_add(&mut dv, &dvh, h, dk);
    }
    let (dwq, dx_q) = dense_backward(&attn.wq, &cache.x, &dq);
    let (dwk, dx_k) = dense_backward(&attn.wk, &cache.x, &dkk);
    let (dwv, dx_v) = dense_backward(&attn.wv, &cache.x, &dv);
    let mut dx = dx_q;
    dx.add_assign(&dx_k);
    dx.add_assign(&dx_v);
    (
        Attention {
            wq: dwq,
            wk: dwk,
            wv: dwv,
            wo: dwo,
            n_heads: attn.n_heads,
        },
        dx,
    )
}

/// Sinusoidal positional encoding, rows x d_model.
pub fn positional_encoding<T: Scalar>(rows: usize, d_model: usize) -> Tensor2<T> {
    let mut pe = Tensor2::zeros(rows, d_model);
    for t in 0..rows {
        for i in 0..d_model / 2 {
            let rate = (10_000f64).powf(2.0 * i as f64 / d_model as f64);
            let angle = t as f64 / rate;
            pe.set(t, 2 * i, T::cast(angle.sin()));
            if 2 * i + 1 < d_model {
                pe.set(t, 2 * i + 1, T::cast(angle.cos()));
            }
        }
    }
    pe
}
