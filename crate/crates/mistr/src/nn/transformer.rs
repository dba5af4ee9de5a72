//! Pre-norm transformer encoder mapping latent sequences to log-mel frames.
//!
//! Architecture: input projection -> sinusoidal positional encoding -> L
//! blocks of {x + attn(ln(x)); x + ffn(ln(x))} -> output projection.
//! Sequences longer than `max_seq` frames are processed in overlapping
//! windows whose predictions are cross-faded back together.

use crate::error::{Error, Result};
use crate::ihpr::MelSpectrogram;
use crate::nn::adam::Adam;
use crate::nn::autoencoder::mse_and_grad;
use crate::nn::layers::{
    attention_backward, attention_forward, dense_backward, dense_forward, layer_norm_backward,
    layer_norm_forward, positional_encoding, relu_backward, relu_forward, Attention,
    AttentionCache, Dense, LayerNorm, LayerNormCache,
};
use crate::nn::{TrainConfig, TrainLog, Tensor2};
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerConfig {
    pub latent_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub n_mels: usize,
    /// Longest sequence processed in one attention window.
    pub max_seq: usize,
    /// Overlap between adjacent windows, cross-faded at inference.
    pub overlap: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            latent_dim: 32,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            n_mels: 80,
            max_seq: 512,
            overlap: 64,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.max_seq == 0 || self.overlap >= self.max_seq {
            return Err(Error::invalid(
                "need n_layers >= 1 and 0 <= overlap < max_seq",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub ln1: LayerNorm<T>,
    pub attn: Attention<T>,
    pub ln2: LayerNorm<T>,
    pub ff1: Dense<T>,
    pub ff2: Dense<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams<T> {
    pub cfg: TransformerConfig,
    pub input_proj: Dense<T>,
    pub blocks: Vec<Block<T>>,
    pub out_proj: Dense<T>,
}

impl<T: Scalar> TransformerParams<T> {
    pub fn init(cfg: TransformerConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let input_proj = Dense::init(cfg.latent_dim, cfg.d_model, rng);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            blocks.push(Block {
                ln1: LayerNorm::init(cfg.d_model),
                attn: Attention::init(cfg.d_model, cfg.n_heads, rng)?,
                ln2: LayerNorm::init(cfg.d_model),
                ff1: Dense::init(cfg.d_model, cfg.d_ff, rng),
                ff2: Dense::init(cfg.d_ff, cfg.d_model, rng),
            });
        }
        let out_proj = Dense::init(cfg.d_model, cfg.n_mels, rng);
        Ok(TransformerParams {
            cfg,
            input_proj,
            blocks,
            out_proj,
        })
    }

    /// Parameter tensors in declaration order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<&Tensor2<T>> {
        let mut out = vec![&self.input_proj.w, &self.input_proj.b];
        for b in &self.blocks {
            out.push(&b.ln1.gamma);
            out.push(&b.ln1.beta);
            out.push(&b.attn.wq.w);
            out.push(&b.attn.wq.b);
            out.push(&b.attn.wk.w);
            out.push(&b.attn.wk.b);
            out.push(&b.attn.wv.w);
            out.push(&b.attn.wv.b);
            out.push(&b.attn.wo.w);
            out.push(&b.attn.wo.b);
            out.push(&b.ln2.gamma);
            out.push(&b.ln2.beta);
            out.push(&b.ff1.w);
            out.push(&b.ff1.b);
            out.push(&b.ff2.w);
            out.push(&b.ff2.b);
        }
        out.push(&self.out_proj.w);
        out.push(&self.out_proj.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut out: Vec<&mut Tensor2<T>> = vec![&mut self.input_proj.w, &mut self.input_proj.b];
        for b in &mut self.blocks {
            out.push(&mut b.ln1.gamma);
            out.push(&mut b.ln1.beta);
            out.push(&mut b.attn.wq.w);
            out.push(&mut b.attn.wq.b);
            out.push(&mut b.attn.wk.w);
            out.push(&mut b.attn.wk.b);
            out.push(&mut b.attn.wv.w);
            out.push(&mut b.attn.wv.b);
            out.push(&mut b.attn.wo.w);
            out.push(&mut b.attn.wo.b);
            out.push(&mut b.ln2.gamma);
            out.push(&mut b.ln2.beta);
            out.push(&mut b.ff1.w);
            out.push(&mut b.ff1.b);
            out.push(&mut b.ff2.w);
            out.push(&mut b.ff2.b);
        }
        out.push(&mut self.out_proj.w);
        out.push(&mut self.out_proj.b);
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| (t.rows, t.cols)).collect()
    }
}

struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    attn: AttentionCache<T>,
    ln2: LayerNormCache<T>,
    ln2_out: Tensor2<T>,
    ff_pre: Tensor2<T>,
    ff_hidden: Tensor2<T>,
}

struct ForwardCache<T> {
    x: Tensor2<T>,
    blocks: Vec<BlockCache<T>>,
    final_hidden: Tensor2<T>,
    y: Tensor2<T>,
}

fn forward_cached<T: Scalar>(
    p: &TransformerParams<T>,
    x: &Tensor2<T>,
    with_positions: bool,
) -> Result<ForwardCache<T>> {
    if x.rows == 0 {
        return Err(Error::invalid("empty input sequence"));
    }
    if x.cols != p.cfg.latent_dim {
        return Err(Error::invalid(format!(
            "input width {} != latent dim {}",
            x.cols, p.cfg.latent_dim
        )));
    }
    let mut h = dense_forward(&p.input_proj, x)?;
    if with_positions {
        let pe = positional_encoding::<T>(x.rows, p.cfg.d_model);
        h.add_assign(&pe);
    }
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let (n1, ln1_cache) = layer_norm_forward(&block.ln1, &h);
        let (attn_out, attn_cache) = attention_forward(&block.attn, &n1)?;
        h.add_assign(&attn_out);
        let (n2, ln2_cache) = layer_norm_forward(&block.ln2, &h);
        let ff_pre = dense_forward(&block.ff1, &n2)?;
        let ff_hidden = relu_forward(&ff_pre);
        let ff_out = dense_forward(&block.ff2, &ff_hidden)?;
        h.add_assign(&ff_out);
        blocks.push(BlockCache {
            ln1: ln1_cache,
            attn: attn_cache,
            ln2: ln2_cache,
            ln2_out: n2,
            ff_pre,
            ff_hidden,
        });
    }
    let y = dense_forward(&p.out_proj, &h)?;
    Ok(ForwardCache {
        x: x.clone(),
        blocks,
        final_hidden: h,
        y,
    })
}

/// Deterministic forward pass on one window (at most `max_seq` frames; use
/// [`transformer_predict`] for arbitrary lengths).
pub fn transformer_forward<T: Scalar>(
    p: &TransformerParams<T>,
    latent: &Tensor2<T>,
) -> Result<Tensor2<T>> {
    Ok(forward_cached(p, latent, true)?.y)
}

/// Forward pass without positional encoding (permutation-equivariant).
pub fn transformer_forward_unpositioned<T: Scalar>(
    p: &TransformerParams<T>,
    latent: &Tensor2<T>,
) -> Result<Tensor2<T>> {
    Ok(forward_cached(p, latent, false)?.y)
}

/// Gradients in the same order as `tensors()`, plus dL/dinput.
fn backward<T: Scalar>(
    p: &TransformerParams<T>,
    cache: &ForwardCache<T>,
    dy: &Tensor2<T>,
) -> (Vec<Tensor2<T>>, Tensor2<T>) {
    let (g_out, mut dh) = dense_backward(&p.out_proj, &cache.final_hidden, dy);
    let mut block_grads: Vec<Vec<Tensor2<T>>> = Vec::with_capacity(p.blocks.len());
    for (block, bc) in p.blocks.iter().zip(&cache.blocks).rev() {
        // Feed-forward residual branch.
        let (g_ff2, d_ff_hidden) = dense_backward(&block.ff2, &bc.ff_hidden, &dh);
        let d_ff_pre = relu_backward(&bc.ff_pre, &d_ff_hidden);
        let (g_ff1, d_n2) = dense_backward(&block.ff1, &bc.ln2_out, &d_ff_pre);
        let (g_ln2, d_after_attn_branch) = layer_norm_backward(&block.ln2, &bc.ln2, &d_n2);
        let mut d_after_attn = dh.clone();
        d_after_attn.add_assign(&d_after_attn_branch);
        // Attention residual branch.
        let (g_attn, d_n1) = attention_backward(&block.attn, &bc.attn, &d_after_attn);
        let (g_ln1, d_input_branch) = layer_norm_backward(&block.ln1, &bc.ln1, &d_n1);
        let mut d_input = d_after_attn;
        d_input.add_assign(&d_input_branch);
        block_grads.push(vec![
            g_ln1.gamma, g_ln1.beta, g_attn.wq.w, g_attn.wq.b, g_attn.wk.w, g_attn.wk.b,
            g_attn.wv.w, g_attn.wv.b, g_attn.wo.w, g_attn.wo.b, g_ln2.gamma, g_ln2.beta,
            g_ff1.w, g_ff1.b, g_ff2.w, g_ff2.b,
        ]);
        dh = d_input;
    }
    // Positional encoding is additive, so the projection gradient is dh.
    let (g_in, dx) = dense_backward(&p.input_proj, &cache.x, &dh);
    let mut grads = vec![g_in.w, g_in.b];
    for g in block_grads.into_iter().rev() {
        grads.extend(g);
    }
    grads.push(g_out.w);
    grads.push(g_out.b);
    (grads, dx)
}

/// Gradients of the sequence-MSE loss for one (latent, target) pair; test
/// and training entry point.
pub fn transformer_loss_grads<T: Scalar>(
    p: &TransformerParams<T>,
    latent: &Tensor2<T>,
    target: &Tensor2<T>,
) -> Result<(f64, Vec<Tensor2<T>>)> {
    let cache = forward_cached(p, latent, true)?;
    let (loss, dy) = mse_and_grad(&cache.y, target);
    let (grads, _) = backward(p, &cache, &dy);
    Ok((loss, grads))
}

/// Window layout for sequences longer than `max_seq`: fixed stride of
/// `max_seq - overlap`, final window right-aligned.
pub fn chunk_ranges(total: usize, max_seq: usize, overlap: usize) -> Vec<(usize, usize)> {
    if total <= max_seq {
        return vec![(0, total)];
    }
    let stride = max_seq - overlap;
    let mut out = Vec::new();
    let mut start = 0usize;
    loop {
        if start + max_seq >= total {
            out.push((total - max_seq, total));
            break;
        }
        out.push((start, start + max_seq));
        start += stride;
    }
    out
}

/// Predict a full sequence, cross-fading overlapped window predictions.
pub fn transformer_predict<T: Scalar>(
    p: &TransformerParams<T>,
    latent: &Tensor2<T>,
) -> Result<MelSpectrogram<T>> {
    let total = latent.rows;
    let ranges = chunk_ranges(total, p.cfg.max_seq, p.cfg.overlap);
    let mut acc = Tensor2::<T>::zeros(total, p.cfg.n_mels);
    let mut weight = vec![T::zero(); total];
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        let window = latent.slice_rows(lo, hi);
        let pred = transformer_forward(p, &window)?;
        for (r, row) in (lo..hi).zip(0..pred.rows) {
            // Linear cross-fade over the overlap with the previous and next
            // windows.
            let mut w = 1.0;
            if i > 0 && row < p.cfg.overlap {
                w = (row + 1) as f64 / (p.cfg.overlap + 1) as f64;
            }
            if i + 1 < ranges.len() && row >= pred.rows - p.cfg.overlap {
                let from_end = pred.rows - row;
                w = w.min(from_end as f64 / (p.cfg.overlap + 1) as f64);
            }
            let wt = T::cast(w);
            weight[r] += wt;
            for c in 0..p.cfg.n_mels {
                let v = acc.at(r, c) + wt * pred.at(row, c);
                acc.set(r, c, v);
            }
        }
    }
    for r in 0..total {
        let w = weight[r];
        if w > T::zero() {
            for c in 0..p.cfg.n_mels {
                acc.set(r, c, acc.at(r, c) / w);
            }
        }
    }
    Ok(MelSpectrogram {
        frames: total,
        n_mels: p.cfg.n_mels,
        values: acc.data,
    })
}

/// Train on (latent sequence, target mel) pairs.
///
/// Each pair must have matching frame counts; sequences longer than
/// `max_seq` are split into overlapped windows that train as independent
/// items. Batches average gradients over their total frame count; early
/// stopping watches a held-out item split, and the best-validation
/// parameters are returned. Deterministic per seed.
pub fn transformer_train<T: Scalar>(
    params: &mut TransformerParams<T>,
    pairs: &[(Tensor2<T>, Tensor2<T>)],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    for (i, (latent, mel)) in pairs.iter().enumerate() {
        if latent.rows != mel.rows {
            return Err(Error::invalid(format!(
                "pair {i}: latent has {} frames but target has {}",
                latent.rows, mel.rows
            )));
        }
        if latent.cols != params.cfg.latent_dim || mel.cols != params.cfg.n_mels {
            return Err(Error::invalid(format!(
                "pair {i}: dims {}x{} incompatible with model {} -> {}",
                latent.cols, mel.cols, params.cfg.latent_dim, params.cfg.n_mels
            )));
        }
    }
    // Expand long sequences into windows.
    let mut items: Vec<(Tensor2<T>, Tensor2<T>)> = Vec::new();
    for (latent, mel) in pairs {
        for (lo, hi) in chunk_ranges(latent.rows, params.cfg.max_seq, params.cfg.overlap) {
            items.push((latent.slice_rows(lo, hi), mel.slice_rows(lo, hi)));
        }
    }
    let n = items.len();
    let mut rng = Rng::new(cfg.seed).substream(0x7f);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_val = if n >= 2 {
        ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let mut opt = Adam::new(cfg.lr, &params.shapes());
    let mut log = TrainLog {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_epoch: 0,
        zero_variance_warning: false,
    };
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    for epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut train_idx);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in train_idx.chunks(cfg.batch) {
            let mut grads: Option<Vec<Tensor2<T>>> = None;
            let mut batch_frames = 0usize;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (latent, mel) = &items[i];
                let frames = latent.rows;
                let (loss, item_grads) = transformer_loss_grads(params, latent, mel)?;
                batch_loss += loss * frames as f64;
                batch_frames += frames;
                match grads.as_mut() {
                    None => {
                        let mut g = item_grads;
                        for t in g.iter_mut() {
                            t.scale(T::from_count(frames));
                        }
                        grads = Some(g);
                    }
                    Some(acc) => {
                        for (a, mut g) in acc.iter_mut().zip(item_grads) {
                            g.scale(T::from_count(frames));
                            a.add_assign(&g);
                        }
                    }
                }
            }
            if let Some(mut g) = grads {
                let inv = T::one() / T::from_count(batch_frames.max(1));
                for t in g.iter_mut() {
                    t.scale(inv);
                }
                let refs: Vec<&Tensor2<T>> = g.iter().collect();
                opt.step(&mut params.tensors_mut(), &refs);
                epoch_loss += batch_loss / batch_frames.max(1) as f64;
                batches += 1;
            }
        }
        log.train_loss.push(epoch_loss / batches.max(1) as f64);
        // Validation loss (frame-weighted mean over held-out items).
        let val_loss = if val_idx.is_empty() {
            *log.train_loss.last().unwrap()
        } else {
            let mut acc = 0.0;
            let mut frames = 0usize;
            for &i in &val_idx {
                let (latent, mel) = &items[i];
                let pred = transformer_forward(params, latent)?;
                let (loss, _) = mse_and_grad(&pred, mel);
                acc += loss * latent.rows as f64;
                frames += latent.rows;
            }
            acc / frames.max(1) as f64
        };
        log.val_loss.push(val_loss);
        log.stopped_epoch = epoch + 1;
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    *params = best.1;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TransformerConfig {
        TransformerConfig {
            latent_dim: 4,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            n_mels: 5,
            max_seq: 512,
            overlap: 64,
        }
    }

    fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor2<f64> {
        let mut t = Tensor2::zeros(rows, cols);
        for v in t.data.iter_mut() {
            *v = rng.normal();
        }
        t
    }

    #[test]
    fn shape_contract() {
        let mut rng = Rng::new(1);
        let p = TransformerParams::<f64>::init(TransformerConfig::default(), &mut rng).unwrap();
        let x = random_tensor(7, 32, &mut rng);
        let y = transformer_forward(&p, &x).unwrap();
        assert_eq!((y.rows, y.cols), (7, 80));
    }

    #[test]
    fn full_model_gradient_check() {
        // Tiny config, every parameter tensor against central differences.
        let mut rng = Rng::new(2);
        let mut p = TransformerParams::<f64>::init(tiny_config(), &mut rng).unwrap();
        let x = random_tensor(4, 4, &mut rng);
        let target = random_tensor(4, 5, &mut rng);
        let (_, grads) = transformer_loss_grads(&p, &x, &target).unwrap();
        let eps = 1e-5;
        let n_tensors = grads.len();
        let mut worst = 0.0f64;
        for ti in 0..n_tensors {
            let len = grads[ti].data.len();
            for i in (0..len).step_by(3.max(len / 16)) {
                let old = p.tensors()[ti].data[i];
                p.tensors_mut()[ti].data[i] = old + eps;
                let plus = transformer_loss_grads(&p, &x, &target).unwrap().0;
                p.tensors_mut()[ti].data[i] = old - eps;
                let minus = transformer_loss_grads(&p, &x, &target).unwrap().0;
                p.tensors_mut()[ti].data[i] = old;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads[ti].data[i];
                // Floor sits above central-difference noise; structurally
                // zero gradients (e.g. the key bias, which softmax row-shift
                // invariance cancels) would otherwise compare noise to noise.
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "max rel err {worst}");
    }

    #[test]
    fn removing_positions_restores_permutation_equivariance() {
        let mut rng = Rng::new(3);
        let p = TransformerParams::<f64>::init(tiny_config(), &mut rng).unwrap();
        let x = random_tensor(6, 4, &mut rng);
        let mut perm: Vec<usize> = (0..6).collect();
        rng.shuffle(&mut perm);
        let mut xp = Tensor2::zeros(6, 4);
        for (dst, &src) in perm.iter().enumerate() {
            xp.row_mut(dst).copy_from_slice(x.row(src));
        }
        let y = transformer_forward_unpositioned(&p, &x).unwrap();
        let yp = transformer_forward_unpositioned(&p, &xp).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..5 {
                assert!((yp.at(dst, c) - y.at(src, c)).abs() < 1e-10);
            }
        }
        // With positions the equivariance is broken.
        let y_pos = transformer_forward(&p, &x).unwrap();
        let yp_pos = transformer_forward(&p, &xp).unwrap();
        let mut differs = false;
        for (dst, &src) in perm.iter().enumerate() {
            if src != dst {
                for c in 0..5 {
                    if (yp_pos.at(dst, c) - y_pos.at(src, c)).abs() > 1e-9 {
                        differs = true;
                    }
                }
            }
        }
        assert!(differs, "positional encoding had no effect");
    }

    #[test]
    fn learns_a_linear_map() {
        // mel = latent * M + noise; held-out per-bin correlation must be
        // high after training.
        let mut rng = Rng::new(42);
        let latent_dim = 8;
        let n_mels = 6;
        let map = random_tensor(latent_dim, n_mels, &mut rng);
        let make_pair = |rng: &mut Rng, frames: usize| {
            let latent = random_tensor(frames, latent_dim, rng);
            let mut mel = latent.matmul(&map);
            for v in mel.data.iter_mut() {
                *v += 0.05 * rng.normal();
            }
            (latent, mel)
        };
        let train_pairs: Vec<_> = (0..8).map(|_| make_pair(&mut rng, 40)).collect();
        let (test_latent, test_mel) = make_pair(&mut rng, 80);
        let cfg = TransformerConfig {
            latent_dim,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            n_mels,
            max_seq: 512,
            overlap: 64,
        };
        let mut params = TransformerParams::init(cfg, &mut Rng::new(42)).unwrap();
        let train_cfg = TrainConfig {
            max_epochs: 300,
            patience: 50,
            batch: 8,
            seed: 42,
            ..TrainConfig::default()
        };
        let log = transformer_train(&mut params, &train_pairs, &train_cfg).unwrap();
        assert!(log.train_loss.last().unwrap() < &log.train_loss[0]);
        let pred = transformer_forward(&params, &test_latent).unwrap();
        // Per-bin Pearson across frames.
        let mut mean_r = 0.0;
        for c in 0..n_mels {
            let a: Vec<f64> = (0..80).map(|r| pred.at(r, c)).collect();
            let b: Vec<f64> = (0..80).map(|r| test_mel.at(r, c)).collect();
            let ma = a.iter().sum::<f64>() / 80.0;
            let mb = b.iter().sum::<f64>() / 80.0;
            let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
            mean_r += cov / (va * vb).sqrt();
        }
        mean_r /= n_mels as f64;
        assert!(mean_r >= 0.95, "held-out per-bin pearson {mean_r}");
    }

    #[test]
    fn patience_bounds_the_trace() {
        let mut rng = Rng::new(5);
        let pairs: Vec<_> = (0..4)
            .map(|_| (random_tensor(30, 4, &mut rng), random_tensor(30, 5, &mut rng)))
            .collect();
        let mut params = TransformerParams::init(tiny_config(), &mut Rng::new(5)).unwrap();
        let cfg = TrainConfig {
            max_epochs: 400,
            patience: 10,
            batch: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let log = transformer_train(&mut params, &pairs, &cfg).unwrap();
        let argmin = log
            .val_loss
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert!(log.val_loss.len() <= argmin + cfg.patience + 1);
    }

    #[test]
    fn same_seed_same_final_loss() {
        let mut rng = Rng::new(6);
        let pairs: Vec<_> = (0..3)
            .map(|_| (random_tensor(20, 4, &mut rng), random_tensor(20, 5, &mut rng)))
            .collect();
        let cfg = TrainConfig {
            max_epochs: 15,
            batch: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut p1 = TransformerParams::init(tiny_config(), &mut Rng::new(1)).unwrap();
        let mut p2 = p1.clone();
        let l1 = transformer_train(&mut p1, &pairs, &cfg).unwrap();
        let l2 = transformer_train(&mut p2, &pairs, &cfg).unwrap();
        assert_eq!(l1.train_loss, l2.train_loss);
        for (a, b) in p1.tensors().iter().zip(p2.tensors().iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn mismatched_pair_rejected() {
        let mut rng = Rng::new(7);
        let pairs = vec![(random_tensor(20, 4, &mut rng), random_tensor(19, 5, &mut rng))];
        let mut params = TransformerParams::init(tiny_config(), &mut Rng::new(7)).unwrap();
        assert!(transformer_train(&mut params, &pairs, &TrainConfig::default()).is_err());
    }

    #[test]
    fn chunk_ranges_cover_and_overlap() {
        let ranges = chunk_ranges(1996, 512, 64);
        assert_eq!(ranges[0], (0, 512));
        assert_eq!(*ranges.last().unwrap(), (1996 - 512, 1996));
        for pair in ranges.windows(2) {
            assert!(pair[0].1 > pair[1].0, "windows must overlap");
        }
        // Short sequences come back whole.
        assert_eq!(chunk_ranges(100, 512, 64), vec![(0, 100)]);
    }

    #[test]
    fn long_sequence_prediction_is_smooth_and_shaped() {
        let mut rng = Rng::new(8);
        let cfg = TransformerConfig {
            max_seq: 64,
            overlap: 16,
            ..tiny_config()
        };
        let p = TransformerParams::<f64>::init(cfg, &mut rng).unwrap();
        let x = random_tensor(200, 4, &mut rng);
        let mel = transformer_predict(&p, &x).unwrap();
        assert_eq!(mel.frames, 200);
        assert_eq!(mel.n_mels, 5);
        assert!(mel.values.iter().all(|v| v.is_finite()));
    }
}
