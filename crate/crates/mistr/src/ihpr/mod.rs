//! Iterative harmonic phase reconstruction (IHPR) vocoding.
//!
//! The vocoder recovers a waveform from a magnitude spectrogram by iterating
//! a consistency projection (ISTFT followed by STFT) seeded with a
//! harmonic-consistent phase initialization, applying an adaptive
//! cross-frequency phase correction at harmonic bins, and stopping on a
//! perceptually weighted loss. A classic Griffin-Lim iteration is provided as
//! the baseline the harmonic machinery is measured against.
//!
//! Submodules: [`mel`] (mel filterbank, log-mel spectrograms and their
//! least-squares inversion) and [`f0`] (harmonic-sum pitch from a magnitude
//! spectrogram).

mod f0;
mod mel;
mod vocode;

pub use f0::{f0_from_spectrogram, harmonic_set, FrameHarmonics, F0_MAX_HZ, F0_MIN_HZ};
pub use mel::{mel_filterbank, mel_hz, mel_spectrogram, mel_to_linear, MelFilterbank};
pub use vocode::{
    adaptive_phase_correction, consistency_project, griffin_lim, griffin_lim_with_init,
    ihpr_init_phase, ihpr_vocode, perceptual_loss, IterationRecord, VocodeOutput,
};

use crate::Scalar;

/// Phase field in radians, frames x bins; stored values live in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> PhaseSpectrogram<T> {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        PhaseSpectrogram {
            frames,
            bins,
            values: vec![T::zero(); frames * bins],
        }
    }

    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> T {
        self.values[frame * self.bins + bin]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, v: T) {
        self.values[frame * self.bins + bin] = v;
    }

    pub fn row(&self, frame: usize) -> &[T] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }
}

/// Log-compressed mel spectrogram, frames x n_mels (natural log of mel
/// magnitudes floored at 1e-10).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T> {
    pub frames: usize,
    pub n_mels: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> MelSpectrogram<T> {
    pub fn zeros(frames: usize, n_mels: usize) -> Self {
        MelSpectrogram {
            frames,
            n_mels,
            values: vec![T::zero(); frames * n_mels],
        }
    }

    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> T {
        self.values[frame * self.n_mels + bin]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, v: T) {
        self.values[frame * self.n_mels + bin] = v;
    }

    pub fn row(&self, frame: usize) -> &[T] {
        &self.values[frame * self.n_mels..(frame + 1) * self.n_mels]
    }
}

/// Per-frame fundamental frequency with voicing flags; unvoiced frames carry
/// f0 = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track<T> {
    pub f0: Vec<T>,
    pub voiced: Vec<bool>,
}

impl<T: Scalar> F0Track<T> {
    pub fn unvoiced(frames: usize) -> Self {
        F0Track {
            f0: vec![T::zero(); frames],
            voiced: vec![false; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|v| **v).count()
    }
}

/// Which refinement objective the iteration log reports. The per-bin phase
/// update is identical in both modes (the squared-error minimizer and the
/// cosine-alignment maximizer coincide at the projected phase); only the
/// reported `harmonic_objective` differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMode {
    /// Report the magnitude-weighted squared error at harmonic bins.
    Minimize,
    /// Report the summed cosine alignment at harmonic bins.
    Maximize,
}

/// Frequency weighting w(f) of the perceptual loss.
#[derive(Debug, Clone, PartialEq)]
pub enum FreqWeighting {
    /// 1 up to 4 kHz, then linear decay to 0.5 at Nyquist.
    FlatThenLinearDecay,
    /// Piecewise-linear table of (hz, weight) knots, sorted by hz.
    Table(Vec<(f64, f64)>),
}

impl FreqWeighting {
    /// Resolve to one weight per one-sided FFT bin.
    pub fn per_bin<T: Scalar>(&self, grid: &crate::sigproc::StftGrid) -> Vec<T> {
        let nyquist = grid.fs / 2.0;
        (0..grid.bins())
            .map(|k| {
                let f = grid.bin_hz(k);
                let w = match self {
                    FreqWeighting::FlatThenLinearDecay => {
                        if f <= 4000.0 || nyquist <= 4000.0 {
                            1.0
                        } else {
                            1.0 - 0.5 * (f - 4000.0) / (nyquist - 4000.0)
                        }
                    }
                    FreqWeighting::Table(knots) => interp_table(knots, f),
                };
                T::cast(w)
            })
            .collect()
    }
}

fn interp_table(knots: &[(f64, f64)], f: f64) -> f64 {
    match knots {
        [] => 1.0,
        [only] => only.1,
        _ => {
            if f <= knots[0].0 {
                return knots[0].1;
            }
            for pair in knots.windows(2) {
                let (x0, y0) = pair[0];
                let (x1, y1) = pair[1];
                if f <= x1 {
                    return y0 + (y1 - y0) * (f - x0) / (x1 - x0).max(1e-12);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

/// Vocoder configuration.
#[derive(Debug, Clone)]
pub struct IhprConfig {
    /// Maximum refinement iterations; 0 synthesizes straight from the
    /// harmonic initialization.
    pub max_iters: usize,
    /// Stop when the relative perceptual-loss change drops below this.
    pub tol: f64,
    /// Adaptive phase-correction magnitude.
    pub lambda: f64,
    /// Weight of the phase-evolution term in the perceptual loss.
    pub gamma: f64,
    pub refine_mode: RefineMode,
    /// Advance harmonic phases by 2*pi*f_h*hop/fs between frames at init.
    pub phase_advance_init: bool,
    pub h_max: usize,
    pub weighting: FreqWeighting,
    /// Seeds the random non-harmonic phase initialization.
    pub seed: u64,
}

impl Default for IhprConfig {
    fn default() -> Self {
        IhprConfig {
            max_iters: 100,
            tol: 1e-4,
            lambda: 0.1,
            gamma: 0.01,
            refine_mode: RefineMode::Minimize,
            phase_advance_init: true,
            h_max: 20,
            weighting: FreqWeighting::FlatThenLinearDecay,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigproc::StftGrid;

    #[test]
    fn default_weighting_flat_then_decay() {
        let grid = StftGrid::default_16k();
        let w: Vec<f64> = FreqWeighting::FlatThenLinearDecay.per_bin(&grid);
        assert_eq!(w.len(), 513);
        assert_eq!(w[0], 1.0);
        assert_eq!(w[grid.hz_to_bin(4000.0)], 1.0);
        assert!((w[512] - 0.5).abs() < 1e-12);
        let mid = grid.hz_to_bin(6000.0);
        assert!(w[mid] < 1.0 && w[mid] > 0.5);
    }

    #[test]
    fn table_weighting_interpolates() {
        let grid = StftGrid::default_16k();
        let w: Vec<f64> =
            FreqWeighting::Table(vec![(0.0, 1.0), (8000.0, 0.0)]).per_bin(&grid);
        assert!((w[256] - 0.5).abs() < 1e-2);
    }
}
