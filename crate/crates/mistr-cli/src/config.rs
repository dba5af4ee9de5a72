//! One JSON document configures every pipeline stage. Unknown keys are
//! rejected; command-line flags override individual values; the effective
//! configuration is echoed into every output directory.

use anyhow::{Context, Result};
use mistr::features::FeatureConfig;
use mistr::ihpr::{FreqWeighting, IhprConfig, RefineMode};
use mistr::nn::{TrainConfig, TransformerConfig};
use mistr::sigproc::StftGrid;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; fully determines all stochastic behavior.
    pub seed: u64,
    pub grid: GridSection,
    pub stft: StftSection,
    pub bands: BandsSection,
    pub features: FeaturesSection,
    pub train: TrainSection,
    pub model: ModelSection,
    pub ihpr: IhprSection,
    pub synthetic: SyntheticSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            grid: GridSection::default(),
            stft: StftSection::default(),
            bands: BandsSection::default(),
            features: FeaturesSection::default(),
            train: TrainSection::default(),
            model: ModelSection::default(),
            ihpr: IhprSection::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub win_ms: f64,
    pub hop_ms: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            win_ms: 50.0,
            hop_ms: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftSection {
    pub fft_size: usize,
    pub win_len: usize,
    pub hop: usize,
    pub audio_fs: f64,
}

impl Default for StftSection {
    fn default() -> Self {
        StftSection {
            fft_size: 1024,
            win_len: 800,
            hop: 160,
            audio_fs: 16_000.0,
        }
    }
}

impl StftSection {
    pub fn grid(&self) -> Result<StftGrid> {
        StftGrid::new(self.fft_size, self.hop, self.win_len, self.audio_fs)
            .context("invalid stft section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsSection {
    pub preproc_lo_hz: f64,
    pub preproc_hi_hz: f64,
    pub preproc_order: usize,
    pub notch_base_hz: f64,
    pub notch_harmonics: usize,
    pub theta: (f64, f64),
    pub gamma: (f64, f64),
}

impl Default for BandsSection {
    fn default() -> Self {
        BandsSection {
            preproc_lo_hz: 0.5,
            preproc_hi_hz: 170.0,
            preproc_order: 4,
            notch_base_hz: 50.0,
            notch_harmonics: 3,
            theta: (4.0, 8.0),
            gamma: (70.0, 170.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub reference_channel: usize,
    pub pac_context_ms: f64,
    pub frame_wavelet_levels: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let d = FeatureConfig::default();
        FeaturesSection {
            reference_channel: d.reference_channel,
            pac_context_ms: d.pac_context_ms,
            frame_wavelet_levels: d.frame_wavelet_levels,
            f0_min_hz: d.f0_min_hz,
            f0_max_hz: d.f0_max_hz,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub k_folds: usize,
    /// Frames per training segment when slicing a session into sequences.
    pub seg_frames: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 0.001,
            batch: 32,
            max_epochs: 300,
            patience: 10,
            val_fraction: 0.1,
            k_folds: 10,
            seg_frames: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: usize,
    pub latent: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub n_mels: usize,
    pub max_seq: usize,
    pub overlap: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 128,
            latent: 32,
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

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IhprSection {
    pub max_iters: usize,
    pub tol: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// "minimize" or "maximize".
    pub refine_mode: String,
    pub phase_advance_init: bool,
    pub h_max: usize,
}

impl Default for IhprSection {
    fn default() -> Self {
        IhprSection {
            max_iters: 100,
            tol: 1e-4,
            lambda: 0.1,
            gamma: 0.01,
            refine_mode: "minimize".to_string(),
            phase_advance_init: true,
            h_max: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub duration_s: f64,
    pub channels: usize,
    pub f0_center: f64,
    pub f0_excursion: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            duration_s: 20.0,
            channels: 8,
            f0_center: 175.0,
            f0_excursion: 60.0,
        }
    }
}

impl PipelineConfig {
    /// Load from a JSON file; absent path gives defaults. Unknown keys or
    /// malformed values are reported with the serde path.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: PipelineConfig = serde_json::from_str(&text)
                    .with_context(|| format!("config validation failed for {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            reference_channel: self.features.reference_channel,
            theta_band: self.bands.theta,
            gamma_band: self.bands.gamma,
            pac_context_ms: self.features.pac_context_ms,
            frame_wavelet_levels: self.features.frame_wavelet_levels,
            f0_min_hz: self.features.f0_min_hz,
            f0_max_hz: self.features.f0_max_hz,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            batch: self.train.batch,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
            val_fraction: self.train.val_fraction,
            k_folds: self.train.k_folds,
        }
    }

    pub fn transformer_config(&self) -> TransformerConfig {
        TransformerConfig {
            latent_dim: self.model.latent,
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            n_mels: self.model.n_mels,
            max_seq: self.model.max_seq,
            overlap: self.model.overlap,
        }
    }

    pub fn ihpr_config(&self) -> Result<IhprConfig> {
        let refine_mode = match self.ihpr.refine_mode.as_str() {
            "minimize" => RefineMode::Minimize,
            "maximize" => RefineMode::Maximize,
            other => anyhow::bail!("unknown refine_mode {other:?} (use minimize or maximize)"),
        };
        Ok(IhprConfig {
            max_iters: self.ihpr.max_iters,
            tol: self.ihpr.tol,
            lambda: self.ihpr.lambda,
            gamma: self.ihpr.gamma,
            refine_mode,
            phase_advance_init: self.ihpr.phase_advance_init,
            h_max: self.ihpr.h_max,
            weighting: FreqWeighting::FlatThenLinearDecay,
            seed: self.seed,
        })
    }

    /// Echo the effective configuration into an output directory.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("effective_config.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
