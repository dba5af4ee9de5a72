//! iEEG-to-speech synthesis at desk scale.
//!
//! The pipeline decodes speech from intracranial EEG recordings in three
//! stages:
//!
//! 1. **Feature extraction**: per-channel Daubechies-4 wavelet band energies,
//!    theta/gamma phase-amplitude coupling, and prosody proxies (f0, RMS
//!    energy, shimmer, duration, phase variability) on a 50 ms / 10 ms frame
//!    grid, z-score normalized ([`wavelet`], [`features`]).
//! 2. **Spectrogram prediction**: a fully connected autoencoder compresses
//!    features to a latent code; a small pre-norm transformer maps latent
//!    sequences to 80-bin log-mel spectrograms ([`nn`]).
//! 3. **Vocoding**: iterative harmonic phase reconstruction (IHPR) recovers
//!    a waveform from the predicted magnitudes, with a Griffin-Lim baseline
//!    for comparison ([`ihpr`]).
//!
//! Supporting modules: [`sigproc`] (STFT/ISTFT, Hilbert, filtering,
//! resampling), [`metrics`] (Pearson / MCD / HNR evaluation), [`dataio`]
//! (file formats, marker alignment, deterministic synthetic sessions), and
//! [`rng`] (the splitmix64-seeded xoshiro256++ generator that makes every
//! stochastic choice reproducible).
//!
//! All numeric code is generic over the scalar type through the [`Scalar`]
//! trait (f32 or f64); concrete aliases such as [`WaveformF64`] are exported
//! at the crate root. Bulk storage on disk is f32, computation defaults to
//! f64.

pub mod dataio;
pub mod error;
pub mod features;
pub mod ihpr;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sigproc;
pub mod wavelet;

pub use error::{Error, Result};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, NumCast};

/// Floating-point scalar the whole crate is generic over: f32 or f64.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssignOps + std::iter::Sum + Default + rustfft::FftNum
{
    /// Lossy cast from f64 (panics only for non-finite casts that cannot be
    /// represented, which cannot happen for f32/f64).
    fn cast(x: f64) -> Self {
        <Self as NumCast>::from(x).unwrap()
    }

    /// Widen to f64.
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap()
    }

    /// Cast from usize.
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type WaveformF32 = sigproc::Waveform<f32>;
pub type WaveformF64 = sigproc::Waveform<f64>;
pub type ComplexSpectrogramF32 = sigproc::ComplexSpectrogram<f32>;
pub type ComplexSpectrogramF64 = sigproc::ComplexSpectrogram<f64>;
pub type MagnitudeSpectrogramF32 = sigproc::MagnitudeSpectrogram<f32>;
pub type MagnitudeSpectrogramF64 = sigproc::MagnitudeSpectrogram<f64>;
pub type MelSpectrogramF32 = ihpr::MelSpectrogram<f32>;
pub type MelSpectrogramF64 = ihpr::MelSpectrogram<f64>;
pub type FeatureMatrixF32 = features::FeatureMatrix<f32>;
pub type FeatureMatrixF64 = features::FeatureMatrix<f64>;
pub type F0TrackF32 = ihpr::F0Track<f32>;
pub type F0TrackF64 = ihpr::F0Track<f64>;
pub type Tensor2F32 = nn::Tensor2<f32>;
pub type Tensor2F64 = nn::Tensor2<f64>;
