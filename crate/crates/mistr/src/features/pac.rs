//! Phase-amplitude coupling between a low-frequency phase band and a
//! high-frequency amplitude band.

use crate::error::{Error, Result};
use crate::features::FrameGrid;
use crate::rng::Rng;
use crate::sigproc::{bandpass, hilbert_analytic, Waveform};
use crate::Scalar;

/// Per-frame coupling strengths with the band definitions that produced
/// them. `mean_gamma` is the mean high-band envelope over each frame's
/// expectation window; the coupling value never exceeds it.
#[derive(Debug, Clone)]
pub struct PacSeries<T> {
    pub values: Vec<T>,
    pub mean_gamma: Vec<T>,
    pub theta_band: (f64, f64),
    pub gamma_band: (f64, f64),
}

impl<T: Scalar> PacSeries<T> {
    pub fn mean(&self) -> T {
        if self.values.is_empty() {
            T::zero()
        } else {
            self.values.iter().copied().sum::<T>() / T::from_count(self.values.len())
        }
    }
}

struct PacCarriers {
    /// Gamma envelope times unit theta phasor, per sample.
    prod_re: Vec<f64>,
    prod_im: Vec<f64>,
    envelope: Vec<f64>,
}

fn carriers<T: Scalar>(
    w: &Waveform<T>,
    theta: (f64, f64),
    gamma: (f64, f64),
) -> Result<PacCarriers> {
    if !(theta.0 > 0.0 && theta.0 < theta.1) {
        return Err(Error::invalid(format!("bad theta band {theta:?}")));
    }
    if !(gamma.0 > theta.1 && gamma.0 < gamma.1 && gamma.1 < w.fs / 2.0) {
        return Err(Error::invalid(format!(
            "bad gamma band {gamma:?} for fs {}",
            w.fs
        )));
    }
    let theta_wave = bandpass(w, theta.0, theta.1, 4)?;
    let gamma_wave = bandpass(w, gamma.0, gamma.1, 4)?;
    let theta_analytic = hilbert_analytic(&theta_wave)?;
    let gamma_analytic = hilbert_analytic(&gamma_wave)?;
    let n = w.len();
    let mut prod_re = vec![0.0f64; n];
    let mut prod_im = vec![0.0f64; n];
    let mut envelope = vec![0.0f64; n];
    for i in 0..n {
        let z = theta_analytic.values[i];
        let norm = (z.re * z.re + z.im * z.im).sqrt().as_f64();
        let (cos_p, sin_p) = if norm > 1e-30 {
            (z.re.as_f64() / norm, z.im.as_f64() / norm)
        } else {
            (1.0, 0.0)
        };
        let a = gamma_analytic.values[i].norm().as_f64();
        prod_re[i] = a * cos_p;
        prod_im[i] = a * sin_p;
        envelope[i] = a;
    }
    Ok(PacCarriers {
        prod_re,
        prod_im,
        envelope,
    })
}

fn frame_windows(grid: &FrameGrid, len: usize, context_ms: f64) -> Vec<(usize, usize)> {
    let half = (context_ms / 2.0 * grid.fs / 1000.0).round() as usize;
    let win = grid.win_samples();
    (0..grid.n_frames)
        .map(|t| {
            let center = grid.frame_start(t, len) + win / 2;
            let lo = center.saturating_sub(half);
            let hi = (center + half).min(len);
            (lo, hi.max(lo + 1))
        })
        .collect()
}

/// Hann taper over a window of `len` samples, normalized to unit sum.
fn expectation_taper(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

fn windowed_pac(
    c: &PacCarriers,
    windows: &[(usize, usize)],
) -> (Vec<f64>, Vec<f64>) {
    let mut values = Vec::with_capacity(windows.len());
    let mut mean_env = Vec::with_capacity(windows.len());
    let mut taper: Vec<f64> = Vec::new();
    let mut taper_len = 0usize;
    // Frames with very wide contexts share identical clipped windows.
    let mut last: Option<((usize, usize), f64, f64)> = None;
    for &(lo, hi) in windows {
        if let Some((span, v, e)) = last {
            if span == (lo, hi) {
                values.push(v);
                mean_env.push(e);
                continue;
            }
        }
        let len = hi - lo;
        if len != taper_len {
            taper = expectation_taper(len);
            taper_len = len;
        }
        let mut re = 0.0;
        let mut im = 0.0;
        let mut env = 0.0;
        for (i, &w) in taper.iter().enumerate() {
            re += w * c.prod_re[lo + i];
            im += w * c.prod_im[lo + i];
            env += w * c.envelope[lo + i];
        }
        let v = (re * re + im * im).sqrt();
        values.push(v);
        mean_env.push(env);
        last = Some(((lo, hi), v, env));
    }
    (values, mean_env)
}

/// Coupling per frame: the magnitude of the Hann-weighted mean (over a
/// centered `context_ms` window) of the gamma envelope rotated by the theta
/// phase.
///
/// The expectation window is wider than the analysis frame because a 50 ms
/// frame holds less than one theta cycle; 500 ms spans two to four cycles.
/// The Hann taper keeps spectral leakage of slow envelope structure into the
/// theta band far below the coupling of interest.
pub fn pac<T: Scalar>(
    w: &Waveform<T>,
    theta: (f64, f64),
    gamma: (f64, f64),
    grid: &FrameGrid,
    context_ms: f64,
) -> Result<PacSeries<T>> {
    let c = carriers(w, theta, gamma)?;
    let windows = frame_windows(grid, w.len(), context_ms);
    let (values, mean_env) = windowed_pac(&c, &windows);
    Ok(PacSeries {
        values: values.into_iter().map(T::cast).collect(),
        mean_gamma: mean_env.into_iter().map(T::cast).collect(),
        theta_band: theta,
        gamma_band: gamma,
    })
}

/// Whole-signal coupling strength: the Hann-weighted expectation spans the
/// entire recording. This is the detection statistic used by surrogate
/// tests; the per-frame series of [`pac`] keeps its short context for
/// time-resolved features, but magnitudes over a handful of theta cycles
/// carry an irreducible floor that no phase shuffle can remove.
pub fn pac_global<T: Scalar>(
    w: &Waveform<T>,
    theta: (f64, f64),
    gamma: (f64, f64),
) -> Result<T> {
    let c = carriers(w, theta, gamma)?;
    let (values, _) = windowed_pac(&c, &[(0, w.len())]);
    Ok(T::cast(values[0]))
}

/// Whole-signal PAC of `n_surrogates` phase-shuffled surrogates (one value
/// per surrogate), built by circularly shifting the theta phase stream
/// against the gamma envelope by at least half a second.
pub fn pac_global_surrogates<T: Scalar>(
    w: &Waveform<T>,
    theta: (f64, f64),
    gamma: (f64, f64),
    n_surrogates: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let c = carriers(w, theta, gamma)?;
    surrogate_values(&c, &[(0, w.len())], w.fs, n_surrogates, seed)
}

/// Mean PAC of `n_surrogates` phase-shuffled surrogates: the theta phase
/// stream is circularly shifted against the gamma envelope by at least half
/// a second, destroying any true coupling while preserving both marginals.
/// Returns one mean-over-frames PAC value per surrogate.
pub fn pac_surrogates<T: Scalar>(
    w: &Waveform<T>,
    theta: (f64, f64),
    gamma: (f64, f64),
    grid: &FrameGrid,
    context_ms: f64,
    n_surrogates: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let c = carriers(w, theta, gamma)?;
    let windows = frame_windows(grid, w.len(), context_ms);
    surrogate_values(&c, &windows, w.fs, n_surrogates, seed)
}

fn surrogate_values<T: Scalar>(
    c: &PacCarriers,
    windows: &[(usize, usize)],
    fs: f64,
    n_surrogates: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let n = c.envelope.len();
    let min_shift = ((0.5 * fs) as usize).min(n / 4).max(1);
    if n <= 2 * min_shift {
        return Err(Error::invalid("signal too short for surrogate shifts"));
    }
    let mut rng = Rng::new(seed).substream(0x5ac);
    let mut out = Vec::with_capacity(n_surrogates);
    // cos/sin of the theta phase, extracted back out of the product stream.
    let mut cos_p = vec![0.0f64; n];
    let mut sin_p = vec![0.0f64; n];
    for i in 0..n {
        let a = c.envelope[i];
        if a > 1e-30 {
            cos_p[i] = c.prod_re[i] / a;
            sin_p[i] = c.prod_im[i] / a;
        } else {
            cos_p[i] = 1.0;
        }
    }
    let mut shifted = PacCarriers {
        prod_re: vec![0.0; n],
        prod_im: vec![0.0; n],
        envelope: c.envelope.clone(),
    };
    for _ in 0..n_surrogates {
        let shift = min_shift + rng.below(n - 2 * min_shift);
        for i in 0..n {
            let j = (i + shift) % n;
            shifted.prod_re[i] = c.envelope[i] * cos_p[j];
            shifted.prod_im[i] = c.envelope[i] * sin_p[j];
        }
        let (values, _) = windowed_pac(&shifted, &windows);
        out.push(T::cast(values.iter().sum::<f64>() / values.len() as f64));
    }
    Ok(out)
}
