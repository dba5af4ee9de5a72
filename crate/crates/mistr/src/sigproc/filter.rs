//! Zero-phase IIR filtering: Butterworth band selection and harmonic notches.
//!
//! Filters are built as biquad cascades and applied forward-backward
//! (filtfilt), so the passband response is squared and the phase response is
//! identically zero. Signals are extended by odd reflection before filtering
//! to suppress edge transients; the extension length adapts to the lowest
//! cutoff so that even a 0.5 Hz highpass settles inside the padding.

use crate::error::{Error, Result};
use crate::sigproc::Waveform;
use crate::Scalar;

/// Direct-form-II-transposed second-order section, normalized (a0 = 1).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b0 * xin + z1;
            z1 = self.b1 * xin - self.a1 * y + z2;
            z2 = self.b2 * xin - self.a2 * y;
            *v = y;
        }
    }
}

/// Q values for an order-n Butterworth pole cascade; odd orders contribute an
/// extra first-order section handled separately.
fn butterworth_qs(order: usize) -> Vec<f64> {
    let n = order as f64;
    (0..order / 2)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * n);
            1.0 / (2.0 * theta.cos())
        })
        .collect()
}

fn lowpass_biquad(fc: f64, fs: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b0: (1.0 - cw) / 2.0 / a0,
        b1: (1.0 - cw) / a0,
        b2: (1.0 - cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn highpass_biquad(fc: f64, fs: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b0: (1.0 + cw) / 2.0 / a0,
        b1: -(1.0 + cw) / a0,
        b2: (1.0 + cw) / 2.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn notch_biquad(fc: f64, fs: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * fc / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cw / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

/// First-order section for odd Butterworth orders, bilinear transform.
fn first_order(fc: f64, fs: f64, highpass: bool) -> Biquad {
    let k = (std::f64::consts::PI * fc / fs).tan();
    let a1 = (k - 1.0) / (k + 1.0);
    if highpass {
        Biquad {
            b0: 1.0 / (k + 1.0),
            b1: -1.0 / (k + 1.0),
            b2: 0.0,
            a1,
            a2: 0.0,
        }
    } else {
        Biquad {
            b0: k / (k + 1.0),
            b1: k / (k + 1.0),
            b2: 0.0,
            a1,
            a2: 0.0,
        }
    }
}

fn butterworth_cascade(fc: f64, fs: f64, order: usize, highpass: bool) -> Vec<Biquad> {
    let mut sections: Vec<Biquad> = butterworth_qs(order)
        .into_iter()
        .map(|q| {
            if highpass {
                highpass_biquad(fc, fs, q)
            } else {
                lowpass_biquad(fc, fs, q)
            }
        })
        .collect();
    if order % 2 == 1 {
        sections.push(first_order(fc, fs, highpass));
    }
    sections
}

/// Burg-method AR coefficients of order `p` (a[1..=p] with the convention
/// x[n] ~ -sum a[j] x[n-j]). Reflection coefficients stay in [-1, 1], so the
/// model is stable.
fn burg_ar(x: &[f64], p: usize) -> Vec<f64> {
    let m = x.len();
    let mut a = vec![0.0f64; p + 1];
    a[0] = 1.0;
    let mut f: Vec<f64> = x.to_vec();
    let mut b: Vec<f64> = x.to_vec();
    for k in 1..=p {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in k..m {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        let kappa = if den > 1e-300 { -2.0 * num / den } else { 0.0 };
        let prev = a.clone();
        for j in 1..=k {
            a[j] = prev[j] + kappa * prev[k - j];
        }
        for i in (k..m).rev() {
            let fi = f[i];
            f[i] = fi + kappa * b[i - 1];
            b[i] = b[i - 1] + kappa * fi;
        }
    }
    a
}

/// Continue `x` for `len` samples past its end with the AR model.
fn ar_extend(x: &[f64], a: &[f64], len: usize) -> Vec<f64> {
    let p = a.len() - 1;
    let mut hist: Vec<f64> = x[x.len() - p..].to_vec();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let mut v = 0.0;
        for j in 1..=p {
            v -= a[j] * hist[hist.len() - j];
        }
        hist.push(v);
        out.push(v);
    }
    out
}

/// Forward-backward application of a biquad cascade. The signal is extended
/// on both sides by `settle` samples of an autoregressive (Burg) model fit
/// near each edge, which continues tonal content with the correct phase;
/// simple reflection padding reverses a tone's phase direction at the
/// junction and re-rings resonant sections. The global mean is removed
/// before fitting and restored after, so constant offsets pass through
/// exactly.
fn filtfilt(x: &[f64], sections: &[Biquad], settle: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = settle.min(n - 1);
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let p = 8usize.min(n / 4).max(1);
    let fit_len = n.min(1024.max(8 * p));
    let head: Vec<f64> = centered[..fit_len].iter().rev().copied().collect();
    let tail = &centered[n - fit_len..];
    let front_ext = ar_extend(&head, &burg_ar(&head, p), pad);
    let back_ext = ar_extend(tail, &burg_ar(tail, p), pad);
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend(front_ext.iter().rev().copied());
    buf.extend_from_slice(&centered);
    buf.extend_from_slice(&back_ext);
    for s in sections {
        s.run(&mut buf);
    }
    buf.reverse();
    for s in sections {
        s.run(&mut buf);
    }
    buf.reverse();
    let dc_gain: f64 = sections
        .iter()
        .map(|s| (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2))
        .product();
    let restore = mean * dc_gain * dc_gain;
    buf[pad..pad + n].iter().map(|v| v + restore).collect()
}

fn apply_zero_phase<T: Scalar>(w: &Waveform<T>, sections: &[Biquad], settle: usize) -> Waveform<T> {
    let x: Vec<f64> = w.samples.iter().map(|v| v.as_f64()).collect();
    let y = filtfilt(&x, sections, settle.clamp(64, 1 << 16));
    Waveform {
        samples: y.into_iter().map(T::cast).collect(),
        fs: w.fs,
    }
}

/// Zero-phase Butterworth bandpass: an order-`order` highpass at `lo` cascaded
/// with an order-`order` lowpass at `hi`, applied forward-backward. Output
/// length equals input length.
pub fn bandpass<T: Scalar>(w: &Waveform<T>, lo: f64, hi: f64, order: usize) -> Result<Waveform<T>> {
    let nyquist = w.fs / 2.0;
    if !(0.0 < lo && lo < hi && hi < nyquist) {
        return Err(Error::invalid(format!(
            "band [{lo}, {hi}] Hz must satisfy 0 < lo < hi < fs/2 = {nyquist}"
        )));
    }
    if order == 0 {
        return Err(Error::invalid("filter order must be >= 1"));
    }
    let mut sections = butterworth_cascade(lo, w.fs, order, true);
    sections.extend(butterworth_cascade(hi, w.fs, order, false));
    // Extension long enough for the lowest-edge transient to decay.
    let settle = (4.0 * w.fs / lo).ceil() as usize;
    Ok(apply_zero_phase(w, &sections, settle))
}

/// Zero-phase cascaded notches at `base`, `2*base`, ..., `n_harmonics*base`
/// Hz, quality factor 30.
pub fn notch<T: Scalar>(w: &Waveform<T>, base: f64, n_harmonics: usize) -> Result<Waveform<T>> {
    let nyquist = w.fs / 2.0;
    if n_harmonics == 0 || base <= 0.0 {
        return Err(Error::invalid("need base > 0 and at least one harmonic"));
    }
    if base * n_harmonics as f64 >= nyquist {
        return Err(Error::invalid(format!(
            "harmonic {} at {} Hz is at or above Nyquist ({nyquist} Hz)",
            n_harmonics,
            base * n_harmonics as f64
        )));
    }
    let q = 30.0;
    let sections: Vec<Biquad> = (1..=n_harmonics)
        .map(|h| notch_biquad(base * h as f64, w.fs, q))
        .collect();
    // A notch rings with time constant 2Q/w0; extend by eight of those.
    let settle = (16.0 * q * w.fs / (2.0 * std::f64::consts::PI * base)).ceil() as usize;
    Ok(apply_zero_phase(w, &sections, settle))
}
