//! Polyphase rational resampling with a windowed-sinc anti-alias lowpass.

use crate::error::{Error, Result};
use crate::sigproc::Waveform;
use crate::Scalar;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Best rational approximation p/q to `x` with q <= max_den (continued
/// fractions).
fn to_fraction(x: f64, max_den: u64) -> (u64, u64) {
    let mut a = x.floor();
    let mut frac = x - a;
    let (mut p0, mut q0, mut p1, mut q1) = (1u64, 0u64, a as u64, 1u64);
    while frac > 1e-12 {
        let r = 1.0 / frac;
        a = r.floor();
        frac = r - a;
        let p2 = (a as u64).saturating_mul(p1).saturating_add(p0);
        let q2 = (a as u64).saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    (p1.max(1), q1.max(1))
}

/// Resample to `target_fs` by polyphase interpolation.
///
/// The anti-alias (and anti-image) lowpass cuts at 0.45 * min(fs, target_fs);
/// each polyphase branch is normalized to unit DC gain so constants survive
/// exactly. Output length is round(len * target_fs / fs). When the rates are
/// equal the input is returned bit-for-bit.
pub fn resample<T: Scalar>(w: &Waveform<T>, target_fs: f64) -> Result<Waveform<T>> {
    if !(target_fs > 0.0) {
        return Err(Error::invalid(format!(
            "target sample rate must be > 0, got {target_fs}"
        )));
    }
    if (target_fs - w.fs).abs() < 1e-9 * w.fs {
        return Ok(w.clone());
    }
    let n = w.len();
    let out_len = (n as f64 * target_fs / w.fs).round() as usize;
    if n == 0 || out_len == 0 {
        return Ok(Waveform {
            samples: Vec::new(),
            fs: target_fs,
        });
    }

    // Reduce target/fs to up/down with small integer factors.
    let (up, down) = if w.fs.fract().abs() < 1e-9 && target_fs.fract().abs() < 1e-9 {
        let a = target_fs.round() as u64;
        let b = w.fs.round() as u64;
        let g = gcd(a, b);
        (a / g, b / g)
    } else {
        to_fraction(target_fs / w.fs, 1 << 16)
    };
    let up = up as usize;
    let down = down as usize;

    // Windowed-sinc prototype at the upsampled rate fs*up.
    let fs_up = w.fs * up as f64;
    let cutoff = 0.45 * w.fs.min(target_fs);
    // Half-width: 8 cutoff periods of the upsampled-rate kernel.
    let half = ((8.0 * fs_up / cutoff).ceil() as usize).clamp(up * 4, 1 << 20);
    let taps = 2 * half + 1;
    let mut h = vec![0.0f64; taps];
    let wc = 2.0 * cutoff / fs_up;
    for (i, tap) in h.iter_mut().enumerate() {
        let m = i as f64 - half as f64;
        let sinc = if m == 0.0 {
            wc
        } else {
            (std::f64::consts::PI * wc * m).sin() / (std::f64::consts::PI * m)
        };
        let hann = 0.5 + 0.5 * (std::f64::consts::PI * m / half as f64).cos();
        *tap = sinc * hann;
    }
    // Per-phase DC normalization: every branch sums to 1.
    for p in 0..up {
        let s: f64 = h.iter().skip(p).step_by(up).sum();
        if s.abs() > 1e-12 {
            for v in h.iter_mut().skip(p).step_by(up) {
                *v /= s;
            }
        }
    }

    let x: Vec<f64> = w.samples.iter().map(|v| v.as_f64()).collect();
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        // Output sample m sits at upsampled index m*down; tap index for input
        // j is m*down - j*up + half.
        let pos = m * down;
        let j_hi = (pos + half) / up;
        let j_lo = (pos + half).saturating_sub(taps - 1).div_ceil(up);
        let mut acc = 0.0;
        for j in j_lo..=j_hi.min(n - 1) {
            let tap = pos + half - j * up;
            acc += h[tap] * x[j];
        }
        out.push(T::cast(acc));
    }
    Ok(Waveform {
        samples: out,
        fs: target_fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Waveform<f64> {
        Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
                .collect(),
            fs,
        }
    }

    /// Frequency estimate by counting zero crossings.
    fn zero_crossing_freq(w: &Waveform<f64>) -> f64 {
        let mut crossings = 0usize;
        let mut first = None;
        let mut last = 0usize;
        for i in 1..w.len() {
            if w.samples[i - 1] < 0.0 && w.samples[i] >= 0.0 {
                crossings += 1;
                if first.is_none() {
                    first = Some(i);
                }
                last = i;
            }
        }
        let first = first.unwrap_or(0);
        if crossings < 2 || last == first {
            return 0.0;
        }
        (crossings - 1) as f64 * w.fs / (last - first) as f64
    }

    #[test]
    fn identity_rate_is_bitwise_equal() {
        let w = sine(100.0, 16_000.0, 1000);
        let y = resample(&w, 16_000.0).unwrap();
        assert_eq!(w.samples, y.samples);
    }

    #[test]
    fn downsample_48k_to_16k_preserves_tone() {
        let w = sine(100.0, 48_000.0, 96_000);
        let y = resample(&w, 16_000.0).unwrap();
        assert_eq!(y.len(), 32_000);
        let f = zero_crossing_freq(&y);
        assert!((f - 100.0).abs() <= 0.5, "estimated {f} Hz");
    }

    #[test]
    fn upsample_preserves_tone() {
        let w = sine(60.0, 1024.0, 10_240);
        let y = resample(&w, 16_000.0).unwrap();
        assert_eq!(y.len(), 160_000);
        let f = zero_crossing_freq(&y);
        assert!((f - 60.0).abs() <= 0.5, "estimated {f} Hz");
    }

    #[test]
    fn dc_preserved() {
        let w = Waveform {
            samples: vec![0.7f64; 48_000],
            fs: 48_000.0,
        };
        let y = resample(&w, 16_000.0).unwrap();
        for &v in &y.samples[100..y.len() - 100] {
            assert!((v - 0.7).abs() < 1e-3 * 0.7, "dc drifted to {v}");
        }
    }

    #[test]
    fn output_length_contract() {
        let w = sine(10.0, 1000.0, 3333);
        let y = resample(&w, 441.0).unwrap();
        assert_eq!(y.len(), (3333.0f64 * 441.0 / 1000.0).round() as usize);
    }

    #[test]
    fn nonpositive_target_rejected() {
        let w = sine(10.0, 1000.0, 100);
        assert!(resample(&w, 0.0).is_err());
        assert!(resample(&w, -5.0).is_err());
    }
}
