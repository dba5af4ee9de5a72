//! Multi-modal feature extraction: phase-amplitude coupling, prosody proxies,
//! framing, z-score normalization, and assembly of the feature matrix fed to
//! the neural stack.
//!
//! All features live on a common 50 ms / 10 ms frame grid. Frame starts are
//! placed at `round(t * hop_ms * fs / 1000)` so that streams at different
//! sample rates (1024 Hz iEEG, 16 kHz audio) produce the same frame count
//! for the same duration without cumulative drift; at rates where the hop is
//! an integer number of samples this reduces to `t * hop`.

mod pac;
mod prosody;

pub use pac::{pac, pac_global, pac_global_surrogates, pac_surrogates, PacSeries};
pub use prosody::{
    duration_runs, estimate_f0, phase_variability, rms_energy, shimmer, DEFAULT_F0_MAX,
    DEFAULT_F0_MIN,
};

use crate::dataio::MultichannelRecording;
use crate::error::{Error, Result};
use crate::wavelet;
use crate::Scalar;

/// Analysis frame grid; `n_frames` counts full windows inside the signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    pub win_ms: f64,
    pub hop_ms: f64,
    pub fs: f64,
    pub n_frames: usize,
}

impl FrameGrid {
    /// Grid over a signal of `len` samples at `fs`. The frame count is
    /// duration-based: floor((len/fs*1000 - win_ms)/hop_ms) + 1, which equals
    /// floor((len - win)/hop) + 1 whenever win and hop are whole samples.
    pub fn new(win_ms: f64, hop_ms: f64, fs: f64, len: usize) -> Result<Self> {
        if !(win_ms > 0.0 && hop_ms > 0.0 && hop_ms <= win_ms && fs > 0.0) {
            return Err(Error::invalid(format!(
                "need 0 < hop_ms <= win_ms and fs > 0, got win={win_ms} hop={hop_ms} fs={fs}"
            )));
        }
        let duration_ms = len as f64 * 1000.0 / fs;
        if duration_ms < win_ms {
            return Err(Error::invalid(format!(
                "signal of {duration_ms:.1} ms shorter than one {win_ms} ms window"
            )));
        }
        let n_frames = ((duration_ms - win_ms) / hop_ms + 1e-9).floor() as usize + 1;
        Ok(FrameGrid {
            win_ms,
            hop_ms,
            fs,
            n_frames,
        })
    }

    /// Default 50 ms / 10 ms grid.
    pub fn standard(fs: f64, len: usize) -> Result<Self> {
        FrameGrid::new(50.0, 10.0, fs, len)
    }

    /// Window length in samples at this grid's rate.
    pub fn win_samples(&self) -> usize {
        (self.win_ms * self.fs / 1000.0).round() as usize
    }

    /// Start sample of frame `t` (clamped so the window fits).
    pub fn frame_start(&self, t: usize, len: usize) -> usize {
        let start = (t as f64 * self.hop_ms * self.fs / 1000.0).round() as usize;
        start.min(len.saturating_sub(self.win_samples()))
    }
}

/// Cut a signal into grid frames (borrowing views, no padding).
pub fn frame_signal<'a, T: Scalar>(
    samples: &'a [T],
    grid: &FrameGrid,
) -> Result<Vec<&'a [T]>> {
    let win = grid.win_samples();
    if samples.len() < win {
        return Err(Error::invalid(format!(
            "signal of {} samples shorter than one {win}-sample window",
            samples.len()
        )));
    }
    Ok((0..grid.n_frames)
        .map(|t| {
            let start = grid.frame_start(t, samples.len());
            &samples[start..start + win]
        })
        .collect())
}

/// Per-column normalization statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    /// Columns whose std fell below 1e-12 are emitted as zeros.
    pub constant: Vec<bool>,
}

/// Frames x features matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub frames: usize,
    pub cols: usize,
    pub values: Vec<T>,
    pub names: Vec<String>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn zeros(frames: usize, cols: usize, names: Vec<String>) -> Self {
        assert_eq!(names.len(), cols);
        FeatureMatrix {
            frames,
            cols,
            values: vec![T::zero(); frames * cols],
            names,
        }
    }

    #[inline]
    pub fn at(&self, frame: usize, col: usize) -> T {
        self.values[frame * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, col: usize, v: T) {
        self.values[frame * self.cols + col] = v;
    }

    pub fn row(&self, frame: usize) -> &[T] {
        &self.values[frame * self.cols..(frame + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.frames).map(|t| self.at(t, col)).collect()
    }
}

/// Fit per-column mean/std and normalize to zero mean, unit variance.
/// Constant columns (std < 1e-12) become all-zero and are flagged.
pub fn zscore_fit_transform<T: Scalar>(
    m: &FeatureMatrix<T>,
) -> Result<(FeatureMatrix<T>, NormStats<T>)> {
    if m.frames < 2 {
        return Err(Error::invalid(format!(
            "z-score fit needs at least 2 frames, got {}",
            m.frames
        )));
    }
    let n = T::from_count(m.frames);
    let mut mean = vec![T::zero(); m.cols];
    let mut std = vec![T::zero(); m.cols];
    let mut constant = vec![false; m.cols];
    for c in 0..m.cols {
        let mut acc = T::zero();
        for t in 0..m.frames {
            acc += m.at(t, c);
        }
        let mu = acc / n;
        let mut var = T::zero();
        for t in 0..m.frames {
            let d = m.at(t, c) - mu;
            var += d * d;
        }
        let sigma = (var / n).sqrt();
        mean[c] = mu;
        if sigma < T::cast(1e-12) {
            constant[c] = true;
            std[c] = T::one();
        } else {
            std[c] = sigma;
        }
    }
    let stats = NormStats {
        mean,
        std,
        constant,
    };
    Ok((zscore_transform(m, &stats)?, stats))
}

/// Normalize with previously fitted statistics (transform-only mode for
/// held-out data).
pub fn zscore_transform<T: Scalar>(
    m: &FeatureMatrix<T>,
    stats: &NormStats<T>,
) -> Result<FeatureMatrix<T>> {
    if stats.mean.len() != m.cols {
        return Err(Error::invalid(format!(
            "stats have {} columns, matrix {}",
            stats.mean.len(),
            m.cols
        )));
    }
    let mut out = m.clone();
    for c in 0..m.cols {
        for t in 0..m.frames {
            let v = if stats.constant[c] {
                T::zero()
            } else {
                (m.at(t, c) - stats.mean[c]) / stats.std[c]
            };
            out.set(t, c, v);
        }
    }
    Ok(out)
}

/// Feature assembly configuration.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    /// Channel the prosody proxies are computed from.
    pub reference_channel: usize,
    pub theta_band: (f64, f64),
    pub gamma_band: (f64, f64),
    /// Span of the expectation window realizing E[.] in the coupling
    /// measure, in milliseconds, centered on each frame.
    pub pac_context_ms: f64,
    /// Wavelet levels for the per-frame band energies.
    pub frame_wavelet_levels: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            reference_channel: 0,
            theta_band: (4.0, 8.0),
            gamma_band: (70.0, 170.0),
            pac_context_ms: 500.0,
            frame_wavelet_levels: 4,
            f0_min_hz: DEFAULT_F0_MIN,
            f0_max_hz: DEFAULT_F0_MAX,
        }
    }
}

/// Deterministic column names for `c` channels: per-channel wavelet band
/// energies (levels 1..=J then the approximation), per-channel PAC, then the
/// five prosody proxies.
pub fn feature_names(channels: usize, wavelet_levels: usize) -> Vec<String> {
    let mut names = Vec::new();
    for ch in 0..channels {
        for j in 1..=wavelet_levels {
            names.push(format!("ch{ch}_dwtE{j}"));
        }
        names.push(format!("ch{ch}_dwtEa"));
    }
    for ch in 0..channels {
        names.push(format!("ch{ch}_pac"));
    }
    for p in ["pros_f0", "pros_energy", "pros_shimmer", "pros_dur", "pros_phasevar"] {
        names.push(p.to_string());
    }
    names
}

/// Assemble the multi-modal feature matrix from a preprocessed recording
/// (already bandpassed and notched).
///
/// Per frame: per-channel db4 band energies on the zero-padded frame window,
/// per-channel PAC, and prosody proxies (f0, RMS energy, shimmer,
/// voiced-run duration, phase variability) from the reference channel.
pub fn assemble_features<T: Scalar>(
    rec: &MultichannelRecording<T>,
    grid: &FrameGrid,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix<T>> {
    if (grid.fs - rec.fs).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "grid rate {} does not match recording rate {}",
            grid.fs, rec.fs
        )));
    }
    let channels = rec.channels();
    if channels == 0 {
        return Err(Error::invalid("recording has no channels"));
    }
    if cfg.reference_channel >= channels {
        return Err(Error::invalid(format!(
            "reference channel {} out of range ({channels} channels)",
            cfg.reference_channel
        )));
    }
    let len = rec.samples_per_channel();
    let win = grid.win_samples();
    if len < win {
        return Err(Error::invalid("recording shorter than one frame window"));
    }
    let levels = cfg.frame_wavelet_levels;
    // Pad each frame window to a power of two that supports the requested
    // depth.
    let padded = win.next_power_of_two().max(1usize << levels).max(8);
    let names = feature_names(channels, levels);
    let mut out = FeatureMatrix::zeros(grid.n_frames, names.len(), names);

    // Gamma upper edge stays safely below Nyquist.
    let gamma_hi = cfg.gamma_band.1.min(0.45 * rec.fs);
    let gamma = (cfg.gamma_band.0, gamma_hi);

    let wavelet_cols_per_ch = levels + 1;
    let pac_col0 = channels * wavelet_cols_per_ch;
    let pros_col0 = pac_col0 + channels;

    let mut padded_buf = vec![T::zero(); padded];
    for ch in 0..channels {
        let samples = rec.channel(ch);
        // Per-frame wavelet band energies.
        for t in 0..grid.n_frames {
            let start = grid.frame_start(t, len);
            padded_buf.iter_mut().for_each(|v| *v = T::zero());
            padded_buf[..win].copy_from_slice(&samples[start..start + win]);
            let dec = wavelet::wavedec(&padded_buf, levels, rec.fs)?;
            let energies = wavelet::band_energies(&dec);
            for (j, &e) in energies.energies.iter().enumerate() {
                out.set(t, ch * wavelet_cols_per_ch + j, e);
            }
        }
        // Per-channel PAC.
        let wave = crate::sigproc::Waveform {
            samples: samples.to_vec(),
            fs: rec.fs,
        };
        let series = pac(&wave, cfg.theta_band, gamma, grid, cfg.pac_context_ms)?;
        for t in 0..grid.n_frames {
            out.set(t, pac_col0 + ch, series.values[t]);
        }
    }

    // Prosody proxies from the reference channel.
    let reference = rec.channel(cfg.reference_channel);
    let frames = frame_signal(reference, grid)?;
    let mut f0s = vec![T::zero(); grid.n_frames];
    let mut voiced = vec![false; grid.n_frames];
    for (t, frame) in frames.iter().enumerate() {
        if let Some(f0) = estimate_f0(frame, rec.fs, cfg.f0_min_hz, cfg.f0_max_hz) {
            f0s[t] = f0;
            voiced[t] = true;
        }
        out.set(t, pros_col0, f0s[t]);
        out.set(t, pros_col0 + 1, rms_energy(frame)?);
        let sh = if voiced[t] {
            shimmer(frame, rec.fs, f0s[t])?
        } else {
            T::zero()
        };
        out.set(t, pros_col0 + 2, sh);
        out.set(t, pros_col0 + 4, phase_variability(frame)?);
    }
    let runs = duration_runs(&voiced);
    for t in 0..grid.n_frames {
        // Duration encodes voiced-run length; unvoiced frames carry zero.
        let d = if voiced[t] { T::from_count(runs[t]) } else { T::zero() };
        out.set(t, pros_col0 + 3, d);
    }
    Ok(out)
}
