//! Per-frame prosody proxies: fundamental frequency, RMS energy, shimmer,
//! voiced-run duration and phase variability.

use crate::error::{Error, Result};
use crate::sigproc::{hilbert_analytic, unwrap_phase, Waveform};
use crate::Scalar;

pub const DEFAULT_F0_MIN: f64 = 60.0;
pub const DEFAULT_F0_MAX: f64 = 400.0;

/// Normalized-autocorrelation pitch estimate with parabolic lag
/// interpolation. Returns None (unvoiced) when the correlation peak over
/// lags fs/fmax..fs/fmin stays below 0.5, or when the frame is too short or
/// too quiet to decide.
pub fn estimate_f0<T: Scalar>(frame: &[T], fs: f64, fmin: f64, fmax: f64) -> Option<T> {
    let n = frame.len();
    if n < 4 || !(0.0 < fmin && fmin < fmax) {
        return None;
    }
    let x: Vec<f64> = frame.iter().map(|v| v.as_f64()).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy < 1e-24 {
        return None;
    }
    let lag_min = (fs / fmax).ceil() as usize;
    let lag_max = ((fs / fmin).floor() as usize).min(n - 2);
    if lag_min == 0 || lag_min >= lag_max {
        return None;
    }
    // Normalized cross-correlation over the overlapping segments.
    let corr = |lag: usize| -> f64 {
        let m = n - lag;
        let mut num = 0.0;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for i in 0..m {
            num += x[i] * x[i + lag];
            e0 += x[i] * x[i];
            e1 += x[i + lag] * x[i + lag];
        }
        num / (e0 * e1).sqrt().max(1e-24)
    };
    let rs: Vec<f64> = (lag_min..=lag_max).map(corr).collect();
    let r_max = rs.iter().copied().fold(f64::MIN, f64::max);
    if r_max < 0.5 {
        return None;
    }
    // Periodic signals score near-1 at every multiple of the true period;
    // take the first local maximum within a whisker of the global one to
    // avoid octave errors.
    let mut best_lag = lag_min
        + rs.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
    let mut best = r_max;
    for i in 0..rs.len() {
        let left_ok = i == 0 || rs[i] >= rs[i - 1];
        let right_ok = i + 1 == rs.len() || rs[i] >= rs[i + 1];
        if left_ok && right_ok && rs[i] >= 0.98 * r_max {
            best_lag = lag_min + i;
            best = rs[i];
            break;
        }
    }
    // Parabolic refinement of the peak lag.
    let delta = if best_lag > lag_min && best_lag < lag_max {
        let (rm, r0, rp) = (corr(best_lag - 1), best, corr(best_lag + 1));
        let denom = rm - 2.0 * r0 + rp;
        if denom.abs() > 1e-18 {
            (0.5 * (rm - rp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let f0 = (fs / (best_lag as f64 + delta)).clamp(fmin, fmax);
    Some(T::cast(f0))
}

/// Root mean square of the frame.
pub fn rms_energy<T: Scalar>(frame: &[T]) -> Result<T> {
    if frame.is_empty() {
        return Err(Error::invalid("rms of an empty frame"));
    }
    let acc: T = frame.iter().map(|v| *v * *v).sum();
    Ok((acc / T::from_count(frame.len())).sqrt())
}

/// Cycle-to-cycle amplitude perturbation: mean absolute difference of
/// consecutive per-period peak amplitudes (magnitudes), normalized by the
/// mean peak amplitude. Frames with fewer than two complete periods return
/// 0.
pub fn shimmer<T: Scalar>(frame: &[T], fs: f64, f0: T) -> Result<T> {
    let f0 = f0.as_f64();
    if f0 <= 0.0 {
        return Err(Error::invalid(format!("shimmer needs f0 > 0, got {f0}")));
    }
    let period = fs / f0;
    let n_periods = (frame.len() as f64 / period).floor() as usize;
    if n_periods < 2 {
        return Ok(T::zero());
    }
    let mut peaks = Vec::with_capacity(n_periods);
    for p in 0..n_periods {
        let lo = (p as f64 * period).round() as usize;
        let hi = (((p + 1) as f64 * period).round() as usize).min(frame.len());
        if lo >= hi {
            continue;
        }
        let peak = frame[lo..hi]
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()));
        peaks.push(peak);
    }
    if peaks.len() < 2 {
        return Ok(T::zero());
    }
    let mean_peak: T =
        peaks.iter().copied().sum::<T>() / T::from_count(peaks.len());
    if mean_peak.abs() < T::cast(1e-24) {
        return Ok(T::zero());
    }
    let mut diff = T::zero();
    for pair in peaks.windows(2) {
        diff += (pair[1] - pair[0]).abs();
    }
    Ok(diff / T::from_count(peaks.len() - 1) / mean_peak)
}

/// Standard deviation of the instantaneous-phase increments (first
/// difference of the unwrapped analytic phase, de-meaned), computed on the
/// interior of the frame to keep transform edge effects out.
pub fn phase_variability<T: Scalar>(frame: &[T]) -> Result<T> {
    let n = frame.len();
    if n < 8 {
        return Err(Error::invalid(format!(
            "phase variability needs at least 8 samples, got {n}"
        )));
    }
    let energy: T = frame.iter().map(|v| *v * *v).sum();
    if energy < T::cast(1e-24) {
        return Ok(T::zero()); // phase of silence is defined as constant
    }
    let w = Waveform {
        samples: frame.to_vec(),
        fs: 1.0, // rate cancels out of the increment statistics
    };
    let analytic = hilbert_analytic(&w)?;
    let trim = n / 8;
    let mut phase: Vec<T> = analytic.values[trim..n - trim]
        .iter()
        .map(|c| c.im.atan2(c.re))
        .collect();
    unwrap_phase(&mut phase);
    let m = phase.len() - 1;
    let mut diffs = Vec::with_capacity(m);
    for pair in phase.windows(2) {
        diffs.push(pair[1] - pair[0]);
    }
    let mean: T = diffs.iter().copied().sum::<T>() / T::from_count(m);
    let var: T = diffs.iter().map(|d| (*d - mean) * (*d - mean)).sum::<T>() / T::from_count(m);
    Ok(var.sqrt())
}

/// Length of the maximal contiguous same-voicing run containing each frame.
pub fn duration_runs(voiced: &[bool]) -> Vec<usize> {
    let n = voiced.len();
    let mut out = vec![0usize; n];
    let mut start = 0;
    for t in 0..n {
        if t + 1 == n || voiced[t + 1] != voiced[t] {
            let run = t + 1 - start;
            for slot in out.iter_mut().take(t + 1).skip(start) {
                *slot = run;
            }
            start = t + 1;
        }
    }
    out
}
