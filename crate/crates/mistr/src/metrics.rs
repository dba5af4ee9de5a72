//! Objective evaluation: Pearson spectrogram correlation, mel cepstral
//! distortion, and harmonic-to-noise ratio.

use crate::error::{Error, Result};
use crate::features::FrameGrid;
use crate::ihpr::{F0Track, MelSpectrogram};
use crate::sigproc::Waveform;
use crate::Scalar;
use serde::{Deserialize, Serialize};

/// Pearson correlation per mel bin (across time) plus the mean over bins
/// with defined correlation.
#[derive(Debug, Clone)]
pub struct PearsonResult<T> {
    pub mean: T,
    /// Per-bin r; bins excluded for zero variance hold 0 and are counted in
    /// `excluded_bins`.
    pub per_bin: Vec<T>,
    pub used_bins: usize,
    pub excluded_bins: usize,
}

/// Evaluation summary serialized as `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub pearson_mean: f64,
    pub pearson_per_bin: Vec<f64>,
    pub mcd_db: f64,
    /// Absent when the hypothesis has no voiced frames.
    pub hnr_db: Option<f64>,
    pub n_frames_compared: usize,
    pub n_bins_used: usize,
}

/// Per-bin-over-time Pearson correlation between two equally shaped
/// spectrograms; bins with zero variance in either input are excluded from
/// the mean and counted.
pub fn pearson_spectrogram<T: Scalar>(
    a: &MelSpectrogram<T>,
    b: &MelSpectrogram<T>,
) -> Result<PearsonResult<T>> {
    if a.frames != b.frames || a.n_mels != b.n_mels {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.frames, a.n_mels, b.frames, b.n_mels
        )));
    }
    if a.frames < 2 {
        return Err(Error::invalid("pearson needs at least 2 frames"));
    }
    let n = T::from_count(a.frames);
    let mut per_bin = vec![T::zero(); a.n_mels];
    let mut used = 0usize;
    let mut acc = T::zero();
    for m in 0..a.n_mels {
        let mut mean_a = T::zero();
        let mut mean_b = T::zero();
        for t in 0..a.frames {
            mean_a += a.at(t, m);
            mean_b += b.at(t, m);
        }
        mean_a /= n;
        mean_b /= n;
        let mut cov = T::zero();
        let mut var_a = T::zero();
        let mut var_b = T::zero();
        for t in 0..a.frames {
            let da = a.at(t, m) - mean_a;
            let db = b.at(t, m) - mean_b;
            cov += da * db;
            var_a += da * da;
            var_b += db * db;
        }
        // "Zero variance" up to the rounding noise a constant column of this
        // magnitude accumulates when summed.
        let tiny_a = T::cast(1e-18) * (mean_a * mean_a + T::one());
        let tiny_b = T::cast(1e-18) * (mean_b * mean_b + T::one());
        if var_a > tiny_a && var_b > tiny_b {
            let r = cov / (var_a * var_b).sqrt();
            per_bin[m] = r;
            acc += r;
            used += 1;
        }
    }
    let mean = if used > 0 {
        acc / T::from_count(used)
    } else {
        T::zero()
    };
    Ok(PearsonResult {
        mean,
        per_bin,
        used_bins: used,
        excluded_bins: a.n_mels - used,
    })
}

/// Pearson correlation over the flattened matrices (alternative aggregation,
/// kept behind its own entry point).
pub fn pearson_flat<T: Scalar>(a: &MelSpectrogram<T>, b: &MelSpectrogram<T>) -> Result<T> {
    if a.frames != b.frames || a.n_mels != b.n_mels {
        return Err(Error::invalid("shape mismatch"));
    }
    let n = T::from_count(a.values.len());
    let mean_a = a.values.iter().copied().sum::<T>() / n;
    let mean_b = b.values.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut var_a = T::zero();
    let mut var_b = T::zero();
    for (x, y) in a.values.iter().zip(&b.values) {
        let dx = *x - mean_a;
        let dy = *y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= T::cast(1e-24) || var_b <= T::cast(1e-24) {
        return Err(Error::UndefinedResult("zero variance input".into()));
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Orthonormal DCT-II of one log-mel frame.
fn dct2_orthonormal<T: Scalar>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            let mut acc = 0.0;
            for (i, v) in x.iter().enumerate() {
                acc += v.as_f64()
                    * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos();
            }
            T::cast(scale * acc)
        })
        .collect()
}

/// Mel cepstral distortion in dB between two log-mel spectrograms:
/// (10/ln 10) * sqrt(2) * mean over frames of the Euclidean distance between
/// cepstral coefficients 1..=n_coeffs (c0 excluded).
pub fn mcd<T: Scalar>(a: &MelSpectrogram<T>, b: &MelSpectrogram<T>, n_coeffs: usize) -> Result<T> {
    if a.frames != b.frames || a.n_mels != b.n_mels {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.frames, a.n_mels, b.frames, b.n_mels
        )));
    }
    if a.frames == 0 {
        return Err(Error::invalid("mcd of empty spectrograms"));
    }
    let hi = n_coeffs.min(a.n_mels - 1);
    let factor = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    let mut acc = 0.0;
    for t in 0..a.frames {
        let ca = dct2_orthonormal(a.row(t));
        let cb = dct2_orthonormal(b.row(t));
        let mut d2 = 0.0;
        for k in 1..=hi {
            let d = (ca[k] - cb[k]).as_f64();
            d2 += d * d;
        }
        acc += d2.sqrt();
    }
    Ok(T::cast(factor * acc / a.frames as f64))
}

/// Harmonic-to-noise ratio of a waveform given its voicing track.
///
/// Per voiced frame, the normalized autocorrelation r at the pitch lag
/// (parabolic-interpolated around the nearest integer lag) converts to
/// 10*log10(r/(1-r)) dB, clamped to [-20, 40]; the voiced-frame mean is
/// returned. Errors when no voiced frame overlaps the signal.
pub fn hnr<T: Scalar>(w: &Waveform<T>, track: &F0Track<T>) -> Result<T> {
    let grid = FrameGrid::standard(w.fs, w.len())?;
    let win = grid.win_samples();
    let frames = grid.n_frames.min(track.len());
    let mut acc = 0.0;
    let mut voiced = 0usize;
    for t in 0..frames {
        if !track.voiced[t] {
            continue;
        }
        let f0 = track.f0[t].as_f64();
        if f0 <= 0.0 {
            continue;
        }
        let start = grid.frame_start(t, w.len());
        let frame = &w.samples[start..start + win];
        if let Some(r) = pitch_lag_correlation(frame, w.fs / f0) {
            let r = r.clamp(-0.999_999, 0.999_999);
            let db = if r <= 0.0 {
                -20.0
            } else {
                (10.0 * (r / (1.0 - r)).log10()).clamp(-20.0, 40.0)
            };
            acc += db;
            voiced += 1;
        }
    }
    if voiced == 0 {
        return Err(Error::UndefinedResult(
            "no voiced frames to compute HNR over".into(),
        ));
    }
    Ok(T::cast(acc / voiced as f64))
}

/// Normalized autocorrelation at the pitch lag: the local maximum within
/// +-7% of the nominal lag (pitch tracks carry a few hertz of error, which
/// shifts the true peak by more than one sample), refined by a parabolic fit
/// over its three surrounding integer lags.
fn pitch_lag_correlation<T: Scalar>(frame: &[T], lag: f64) -> Option<f64> {
    let n = frame.len();
    let lag0 = lag.round() as usize;
    if lag0 < 3 || lag0 + 3 >= n {
        return None;
    }
    let x: Vec<f64> = frame.iter().map(|v| v.as_f64()).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let corr = |tau: usize| -> f64 {
        let m = n - tau;
        let mut num = 0.0;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for i in 0..m {
            num += x[i] * x[i + tau];
            e0 += x[i] * x[i];
            e1 += x[i + tau] * x[i + tau];
        }
        num / (e0 * e1).sqrt().max(1e-24)
    };
    let half_window = ((0.07 * lag).ceil() as usize).max(2);
    let lo = lag0.saturating_sub(half_window).max(2);
    let hi = (lag0 + half_window).min(n - 2);
    let (mut best_tau, mut best) = (lag0, corr(lag0));
    for tau in lo..=hi {
        let r = corr(tau);
        if r > best {
            best = r;
            best_tau = tau;
        }
    }
    let (rm, r0, rp) = (corr(best_tau - 1), best, corr(best_tau + 1));
    // Peak of the parabola through the three points.
    let denom = rm - 2.0 * r0 + rp;
    let r = if denom < -1e-18 {
        let delta = (0.5 * (rm - rp) / denom).clamp(-1.0, 1.0);
        r0 - 0.25 * (rm - rp) * delta
    } else {
        r0.max(rm).max(rp)
    };
    Some(r)
}
