//! Minimal from-scratch neural stack: dense layers, multi-head
//! self-attention with explicit backprop, Adam, and the autoencoder +
//! transformer spectrogram predictor.
//!
//! Everything trains deterministically: weight init, data splits, and batch
//! order derive from the crate's fixed xoshiro256++ generator, so a (seed,
//! config, data) triple reproduces parameters bit for bit.

mod adam;
mod autoencoder;
mod checkpoint;
mod layers;
mod tensor;
mod transformer;

pub use adam::Adam;
pub use autoencoder::{
    autoencoder_train, autoencoder_train_arch, encode_latent, reconstruct, AutoencoderConfig,
    AutoencoderParams,
};
pub use checkpoint::{load_autoencoder, load_transformer, save_autoencoder, save_transformer};
pub use layers::{
    attention_backward, attention_forward, dense_backward, dense_forward, layer_norm_backward,
    layer_norm_forward, positional_encoding, relu_backward, relu_forward, softmax_backward,
    softmax_rows, Attention, Dense, LayerNorm,
};
pub use tensor::Tensor2;
pub use transformer::{
    chunk_ranges, transformer_forward, transformer_forward_unpositioned, transformer_loss_grads,
    transformer_predict, transformer_train, Block, TransformerConfig, TransformerParams,
};

use crate::error::{Error, Result};

/// Optimization settings shared by both training stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub k_folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch: 32,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            val_fraction: 0.1,
            k_folds: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid(
                "batch, patience and max_epochs must all be >= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Loss curves and stopping bookkeeping from one training run.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    /// Set when every input column was constant.
    pub zero_variance_warning: bool,
}

/// Seeded k-fold assignment: a permutation split into folds of size
/// floor(n/k) or ceil(n/k) that partition the index set.
pub fn kfold_split(n_items: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n_items < k {
        return Err(Error::invalid(format!(
            "cannot split {n_items} items into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    crate::rng::Rng::new(seed).substream(0xf01d).shuffle(&mut order);
    let base = n_items / k;
    let extra = n_items % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kfold_even_split() {
        let folds = kfold_split(20, 10, 1).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.len() == 2));
    }

    #[test]
    fn kfold_partitions_indices() {
        let folds = kfold_split(23, 5, 2).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn kfold_deterministic_per_seed() {
        assert_eq!(kfold_split(30, 10, 7).unwrap(), kfold_split(30, 10, 7).unwrap());
        assert_ne!(kfold_split(30, 10, 7).unwrap(), kfold_split(30, 10, 8).unwrap());
    }

    #[test]
    fn kfold_too_few_items_rejected() {
        assert!(kfold_split(5, 10, 0).is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
