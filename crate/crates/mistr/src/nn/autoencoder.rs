//! Fully connected autoencoder for latent feature compression.
//!
//! Encoder: in -> hidden (ReLU) -> latent (linear).
//! Decoder: latent -> hidden (ReLU) -> in (linear).
//! Trained with mini-batch Adam on the MSE reconstruction loss, early
//! stopping on a held-out validation split.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::adam::Adam;
use crate::nn::layers::{dense_backward, dense_forward, relu_backward, relu_forward, Dense};
use crate::nn::{TrainConfig, TrainLog, Tensor2};
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutoencoderConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl AutoencoderConfig {
    pub fn new(in_dim: usize) -> Self {
        AutoencoderConfig {
            in_dim,
            hidden: 128,
            latent: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams<T> {
    pub cfg: AutoencoderConfig,
    pub enc1: Dense<T>,
    pub enc2: Dense<T>,
    pub dec1: Dense<T>,
    pub dec2: Dense<T>,
}

impl<T: Scalar> AutoencoderParams<T> {
    pub fn init(cfg: AutoencoderConfig, rng: &mut Rng) -> Self {
        AutoencoderParams {
            cfg,
            enc1: Dense::init(cfg.in_dim, cfg.hidden, rng),
            enc2: Dense::init(cfg.hidden, cfg.latent, rng),
            dec1: Dense::init(cfg.latent, cfg.hidden, rng),
            dec2: Dense::init(cfg.hidden, cfg.in_dim, rng),
        }
    }

    /// Parameter tensors in declaration order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<&Tensor2<T>> {
        vec![
            &self.enc1.w, &self.enc1.b, &self.enc2.w, &self.enc2.b,
            &self.dec1.w, &self.dec1.b, &self.dec2.w, &self.dec2.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        vec![
            &mut self.enc1.w, &mut self.enc1.b, &mut self.enc2.w, &mut self.enc2.b,
            &mut self.dec1.w, &mut self.dec1.b, &mut self.dec2.w, &mut self.dec2.b,
        ]
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| (t.rows, t.cols)).collect()
    }
}

struct ForwardCache<T> {
    x: Tensor2<T>,
    z1: Tensor2<T>,
    h1: Tensor2<T>,
    latent: Tensor2<T>,
    z3: Tensor2<T>,
    h3: Tensor2<T>,
    y: Tensor2<T>,
}

fn forward<T: Scalar>(p: &AutoencoderParams<T>, x: &Tensor2<T>) -> Result<ForwardCache<T>> {
    let z1 = dense_forward(&p.enc1, x)?;
    let h1 = relu_forward(&z1);
    let latent = dense_forward(&p.enc2, &h1)?;
    let z3 = dense_forward(&p.dec1, &latent)?;
    let h3 = relu_forward(&z3);
    let y = dense_forward(&p.dec2, &h3)?;
    Ok(ForwardCache {
        x: x.clone(),
        z1,
        h1,
        latent,
        z3,
        h3,
        y,
    })
}

/// Deterministic forward pass of the encoder half.
pub fn encode_latent<T: Scalar>(
    p: &AutoencoderParams<T>,
    features: &FeatureMatrix<T>,
) -> Result<Tensor2<T>> {
    let x = Tensor2::from_flat(features.frames, features.cols, features.values.clone());
    let h1 = relu_forward(&dense_forward(&p.enc1, &x)?);
    dense_forward(&p.enc2, &h1)
}

/// Full reconstruction (decoder applied to the encoder output).
pub fn reconstruct<T: Scalar>(p: &AutoencoderParams<T>, x: &Tensor2<T>) -> Result<Tensor2<T>> {
    Ok(forward(p, x)?.y)
}

/// MSE over all elements and the gradient w.r.t. the prediction.
pub(crate) fn mse_and_grad<T: Scalar>(pred: &Tensor2<T>, target: &Tensor2<T>) -> (f64, Tensor2<T>) {
    let n = T::from_count(pred.data.len());
    let mut grad = Tensor2::zeros(pred.rows, pred.cols);
    let mut acc = T::zero();
    for i in 0..pred.data.len() {
        let d = pred.data[i] - target.data[i];
        acc += d * d;
        grad.data[i] = T::cast(2.0) * d / n;
    }
    ((acc / n).as_f64(), grad)
}

fn backward<T: Scalar>(
    p: &AutoencoderParams<T>,
    cache: &ForwardCache<T>,
    dy: &Tensor2<T>,
) -> Vec<Tensor2<T>> {
    let (g_dec2, dh3) = dense_backward(&p.dec2, &cache.h3, dy);
    let dz3 = relu_backward(&cache.z3, &dh3);
    let (g_dec1, dlatent) = dense_backward(&p.dec1, &cache.latent, &dz3);
    let (g_enc2, dh1) = dense_backward(&p.enc2, &cache.h1, &dlatent);
    let dz1 = relu_backward(&cache.z1, &dh1);
    let (g_enc1, _) = dense_backward(&p.enc1, &cache.x, &dz1);
    vec![
        g_enc1.w, g_enc1.b, g_enc2.w, g_enc2.b, g_dec1.w, g_dec1.b, g_dec2.w, g_dec2.b,
    ]
}

fn rows_subset<T: Scalar>(m: &Tensor2<T>, idx: &[usize]) -> Tensor2<T> {
    let mut out = Tensor2::zeros(idx.len(), m.cols);
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Train the autoencoder (default architecture: hidden 128, latent 32) on a
/// normalized feature matrix.
///
/// Deterministic for a given seed: weight init, the validation split, and
/// every epoch's batch order come from the seeded generator. Training stops
/// when the validation loss has not improved for `patience` epochs; the
/// best-validation parameters are returned.
pub fn autoencoder_train<T: Scalar>(
    features: &FeatureMatrix<T>,
    cfg: &TrainConfig,
) -> Result<(AutoencoderParams<T>, TrainLog)> {
    autoencoder_train_arch(features, cfg, AutoencoderConfig::new(features.cols))
}

/// Train with an explicit architecture.
pub fn autoencoder_train_arch<T: Scalar>(
    features: &FeatureMatrix<T>,
    cfg: &TrainConfig,
    arch: AutoencoderConfig,
) -> Result<(AutoencoderParams<T>, TrainLog)> {
    cfg.validate()?;
    if arch.in_dim != features.cols {
        return Err(Error::invalid(format!(
            "architecture expects {} inputs, features have {}",
            arch.in_dim, features.cols
        )));
    }
    let n = features.frames;
    if n < cfg.batch.max(2) {
        return Err(Error::invalid(format!(
            "{n} frames is too few for batch size {} training",
            cfg.batch
        )));
    }
    let x = Tensor2::from_flat(n, features.cols, features.values.clone());

    // Degenerate-input warning: every column constant.
    let zero_variance = (0..x.cols).all(|c| {
        let first = x.at(0, c);
        (1..n).all(|r| x.at(r, c) == first)
    });

    let mut rng = Rng::new(cfg.seed).substream(0xae);
    let mut params = AutoencoderParams::init(arch, &mut rng);

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_val = ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    let x_val = rows_subset(&x, &val_idx);

    let mut opt = Adam::new(cfg.lr, &params.shapes());
    let mut log = TrainLog {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_epoch: 0,
        zero_variance_warning: zero_variance,
    };
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    for epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut train_idx);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in train_idx.chunks(cfg.batch) {
            let xb = rows_subset(&x, chunk);
            let cache = forward(&params, &xb)?;
            let (loss, dy) = mse_and_grad(&cache.y, &xb);
            let grads = backward(&params, &cache, &dy);
            let grad_refs: Vec<&Tensor2<T>> = grads.iter().collect();
            opt.step(&mut params.tensors_mut(), &grad_refs);
            epoch_loss += loss;
            batches += 1;
        }
        log.train_loss.push(epoch_loss / batches.max(1) as f64);
        let val_cache = forward(&params, &x_val)?;
        let (val_loss, _) = mse_and_grad(&val_cache.y, &x_val);
        log.val_loss.push(val_loss);
        log.stopped_epoch = epoch + 1;
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    Ok((best.1, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_features(seed: u64, frames: usize, cols: usize) -> FeatureMatrix<f64> {
        let mut rng = Rng::new(seed);
        FeatureMatrix {
            frames,
            cols,
            values: (0..frames * cols).map(|_| rng.normal()).collect(),
            names: (0..cols).map(|c| format!("c{c}")).collect(),
        }
    }

    #[test]
    fn overfits_when_latent_matches_input() {
        // in_dim == latent: the network can represent the identity; the
        // final training MSE must fall well below the input variance (which
        // is ~1 for standard normal data).
        let features = random_features(1, 256, 8);
        let cfg = TrainConfig {
            max_epochs: 500,
            patience: 500,
            seed: 42,
            ..TrainConfig::default()
        };
        let arch = AutoencoderConfig {
            in_dim: 8,
            hidden: 32,
            latent: 8,
        };
        let (params, log) = autoencoder_train_arch(&features, &cfg, arch).unwrap();
        let last = *log.train_loss.last().unwrap();
        assert!(last < 0.01, "final train mse {last}");
        assert!(log.train_loss.iter().all(|l| l.is_finite()));
        assert!(log.train_loss[log.train_loss.len() - 1] < log.train_loss[0]);
        let latent = encode_latent(&params, &features).unwrap();
        assert_eq!(latent.rows, 256);
        assert_eq!(latent.cols, 8);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let features = random_features(2, 128, 12);
        let cfg = TrainConfig {
            max_epochs: 20,
            seed: 7,
            ..TrainConfig::default()
        };
        let (a, _) = autoencoder_train(&features, &cfg).unwrap();
        let (b, _) = autoencoder_train(&features, &cfg).unwrap();
        for (ta, tb) in a.tensors().iter().zip(b.tensors().iter()) {
            assert_eq!(ta.data, tb.data, "parameters differ between runs");
        }
        let c = autoencoder_train(&features, &TrainConfig { seed: 8, ..cfg })
            .unwrap()
            .0;
        assert_ne!(a.enc1.w.data, c.enc1.w.data);
    }

    #[test]
    fn constant_features_train_with_warning() {
        let features = FeatureMatrix {
            frames: 64,
            cols: 4,
            values: vec![1.5f64; 256],
            names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        };
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let (_, log) = autoencoder_train(&features, &cfg).unwrap();
        assert!(log.zero_variance_warning);
        assert!(log.train_loss.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn early_stopping_respects_patience() {
        let features = random_features(3, 200, 10);
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 10,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, log) = autoencoder_train(&features, &cfg).unwrap();
        // The run ends at most `patience` epochs after the validation
        // minimum.
        let argmin = log
            .val_loss
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert!(
            log.val_loss.len() <= argmin + cfg.patience + 1,
            "trace length {} vs argmin {argmin}",
            log.val_loss.len()
        );
    }

    #[test]
    fn encode_of_nonconstant_input_has_variance() {
        let features = random_features(4, 128, 8);
        let cfg = TrainConfig {
            max_epochs: 30,
            seed: 2,
            ..TrainConfig::default()
        };
        let (params, _) = autoencoder_train(&features, &cfg).unwrap();
        let latent = encode_latent(&params, &features).unwrap();
        assert_eq!(latent.cols, 32);
        let mean: f64 = latent.data.iter().sum::<f64>() / latent.data.len() as f64;
        let var: f64 = latent
            .data
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / latent.data.len() as f64;
        assert!(var > 0.0, "latent collapsed");
        // Zero input stays finite (bias propagation).
        let zeros = FeatureMatrix {
            frames: 4,
            cols: 8,
            values: vec![0.0f64; 32],
            names: features.names.clone(),
        };
        let z = encode_latent(&params, &zeros).unwrap();
        assert!(z.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_tiny_datasets() {
        let features = random_features(5, 8, 4);
        let cfg = TrainConfig::default(); // batch 32 > 8 frames
        assert!(autoencoder_train(&features, &cfg).is_err());
    }
}
