//! Mel filterbank, log-mel spectrograms, and least-squares mel inversion.

use crate::error::{Error, Result};
use crate::ihpr::MelSpectrogram;
use crate::sigproc::{MagnitudeSpectrogram, StftGrid};
use crate::Scalar;

/// Floor applied before the log; exp(ln floor) restores exactly.
pub const MEL_LOG_FLOOR: f64 = 1e-10;

/// mel(f) = 2595 * log10(1 + f/700).
pub fn mel_hz(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn hz_from_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, rows L1-normalized; n_mels x bins, row-major.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    pub n_mels: usize,
    pub bins: usize,
    pub grid: StftGrid,
    pub weights: Vec<T>,
}

impl<T: Scalar> MelFilterbank<T> {
    #[inline]
    pub fn at(&self, mel: usize, bin: usize) -> T {
        self.weights[mel * self.bins + bin]
    }

    pub fn row(&self, mel: usize) -> &[T] {
        &self.weights[mel * self.bins..(mel + 1) * self.bins]
    }
}

/// Build the triangular filterbank spanning 0..fs/2 on the mel scale.
pub fn mel_filterbank<T: Scalar>(n_mels: usize, grid: &StftGrid) -> Result<MelFilterbank<T>> {
    let bins = grid.bins();
    if n_mels == 0 || n_mels >= bins {
        return Err(Error::invalid(format!(
            "need 0 < n_mels < bins, got n_mels={n_mels} bins={bins}"
        )));
    }
    let mel_max = mel_hz(grid.fs / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz_from_mel(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut weights = vec![T::zero(); n_mels * bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let mut row_sum = 0.0;
        let mut row = vec![0.0f64; bins];
        for (k, rk) in row.iter_mut().enumerate() {
            let f = grid.bin_hz(k);
            let w = if f >= lo && f <= center {
                (f - lo) / (center - lo).max(1e-12)
            } else if f > center && f <= hi {
                (hi - f) / (hi - center).max(1e-12)
            } else {
                0.0
            };
            *rk = w;
            row_sum += w;
        }
        if row_sum > 0.0 {
            for (k, &w) in row.iter().enumerate() {
                weights[m * bins + k] = T::cast(w / row_sum);
            }
        }
    }
    Ok(MelFilterbank {
        n_mels,
        bins,
        grid: *grid,
        weights,
    })
}

/// Project a magnitude spectrogram onto the mel scale and log-compress.
pub fn mel_spectrogram<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    fb: &MelFilterbank<T>,
) -> MelSpectrogram<T> {
    assert_eq!(mag.bins, fb.bins, "spectrogram/filterbank bin mismatch");
    let floor = T::cast(MEL_LOG_FLOOR);
    let mut out = MelSpectrogram::zeros(mag.frames, fb.n_mels);
    for t in 0..mag.frames {
        let row = &mag.values[t * mag.bins..(t + 1) * mag.bins];
        for m in 0..fb.n_mels {
            let mut acc = T::zero();
            for (k, &w) in fb.row(m).iter().enumerate() {
                if w != T::zero() {
                    acc += w * row[k];
                }
            }
            out.set(t, m, acc.max(floor).ln());
        }
    }
    out
}

/// Invert a log-mel spectrogram to linear magnitudes via the least-squares
/// pseudo-inverse of the filterbank; negative values are clamped to zero.
pub fn mel_to_linear<T: Scalar>(
    mel: &MelSpectrogram<T>,
    fb: &MelFilterbank<T>,
) -> Result<MagnitudeSpectrogram<T>> {
    if mel.n_mels != fb.n_mels {
        return Err(Error::invalid(format!(
            "mel bins {} do not match filterbank {}",
            mel.n_mels, fb.n_mels
        )));
    }
    let pinv = pseudo_inverse(fb)?; // bins x n_mels, f64
    let mut out = MagnitudeSpectrogram {
        grid: fb.grid,
        frames: mel.frames,
        bins: fb.bins,
        values: vec![T::zero(); mel.frames * fb.bins],
    };
    let mut linear_row = vec![0.0f64; fb.n_mels];
    for t in 0..mel.frames {
        for (m, v) in linear_row.iter_mut().enumerate() {
            *v = mel.at(t, m).as_f64().exp();
        }
        for k in 0..fb.bins {
            let mut acc = 0.0;
            for (m, &lv) in linear_row.iter().enumerate() {
                acc += pinv[k * fb.n_mels + m] * lv;
            }
            out.set(t, k, T::cast(acc.max(0.0)));
        }
    }
    Ok(out)
}

/// B^T (B B^T + ridge I)^-1 with a tiny ridge for conditioning; bins x n_mels.
fn pseudo_inverse<T: Scalar>(fb: &MelFilterbank<T>) -> Result<Vec<f64>> {
    let n = fb.n_mels;
    let bins = fb.bins;
    let b: Vec<f64> = fb.weights.iter().map(|w| w.as_f64()).collect();
    // Gram matrix G = B B^T.
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..bins {
                acc += b[i * bins + k] * b[j * bins + k];
            }
            gram[i * n + j] = acc;
            gram[j * n + i] = acc;
        }
    }
    let ridge = 1e-10;
    for i in 0..n {
        gram[i * n + i] += ridge;
    }
    let inv = invert_spd(&gram, n)?;
    // pinv = B^T G^-1.
    let mut pinv = vec![0.0f64; bins * n];
    for k in 0..bins {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += b[i * bins + k] * inv[i * n + j];
            }
            pinv[k * n + j] = acc;
        }
    }
    Ok(pinv)
}

/// Invert a symmetric positive-definite matrix by Cholesky factorization.
fn invert_spd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    // Factor a = L L^T.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::invalid(
                        "filterbank gram matrix is not positive definite",
                    ));
                }
                l[i * n + j] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    let mut inv = vec![0.0f64; n * n];
    let mut y = vec![0.0f64; n];
    for col in 0..n {
        for i in 0..n {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                acc -= l[i * n + k] * y[k];
            }
            y[i] = acc / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= l[k * n + i] * inv[k * n + col];
            }
            inv[i * n + col] = acc / l[i * n + i];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_fb() -> MelFilterbank<f64> {
        mel_filterbank(80, &StftGrid::default_16k()).unwrap()
    }

    #[test]
    fn mel_of_700hz() {
        let m = mel_hz(700.0);
        assert!((m - 2595.0 * 2f64.log10()).abs() < 1e-9);
        assert!((m - 781.17).abs() < 0.01);
    }

    #[test]
    fn rows_sum_to_one() {
        let fb = default_fb();
        for m in 0..fb.n_mels {
            let s: f64 = fb.row(m).iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "row {m} sums to {s}");
        }
    }

    #[test]
    fn interior_bins_are_covered() {
        let fb = default_fb();
        for k in 1..fb.bins - 1 {
            let total: f64 = (0..fb.n_mels).map(|m| fb.at(m, k)).sum();
            assert!(total > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        let grid = StftGrid::default_16k();
        assert!(mel_filterbank::<f64>(0, &grid).is_err());
        assert!(mel_filterbank::<f64>(513, &grid).is_err());
    }

    /// A smooth synthetic harmonic magnitude spectrogram with a broadband
    /// floor, used by the inversion round trip.
    fn harmonic_mag(grid: &StftGrid, frames: usize) -> MagnitudeSpectrogram<f64> {
        let bins = grid.bins();
        let mut values = vec![0.0f64; frames * bins];
        for t in 0..frames {
            for k in 0..bins {
                let f = grid.bin_hz(k);
                let mut v = 0.02 * (-f / 4000.0).exp() + 1e-3;
                for h in 1..=5 {
                    let fh = 150.0 * h as f64;
                    let d = (f - fh) / 40.0;
                    v += (1.0 / h as f64) * (-0.5 * d * d).exp();
                }
                values[t * bins + k] = v;
            }
        }
        MagnitudeSpectrogram {
            grid: *grid,
            frames,
            bins,
            values,
        }
    }

    #[test]
    fn mel_inversion_round_trip_within_5_percent() {
        let grid = StftGrid::default_16k();
        let fb = default_fb();
        let mag = harmonic_mag(&grid, 12);
        let mel1 = mel_spectrogram(&mag, &fb);
        let back = mel_to_linear(&mel1, &fb).unwrap();
        let mel2 = mel_spectrogram(&back, &fb);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in mel1.values.iter().zip(&mel2.values) {
            num += (a - b) * (a - b);
            den += a * a;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.05, "round-trip relative error {rel}");
    }

    #[test]
    fn zero_mel_inverts_to_zero() {
        // ln(floor) is the log-mel of silence; inversion maps it to
        // (numerically) zero magnitude.
        let fb = default_fb();
        let mel = MelSpectrogram {
            frames: 3,
            n_mels: 80,
            values: vec![MEL_LOG_FLOOR.ln(); 3 * 80],
        };
        let mag = mel_to_linear(&mel, &fb).unwrap();
        assert!(mag.values.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn inversion_is_nonnegative() {
        let fb = default_fb();
        // A spiky, non-smooth log-mel stresses the clamp.
        let mut mel = MelSpectrogram::zeros(4, 80);
        for t in 0..4 {
            for m in 0..80 {
                mel.set(t, m, if (m + t) % 7 == 0 { 1.0 } else { -20.0 });
            }
        }
        let mag = mel_to_linear(&mel, &fb).unwrap();
        assert!(mag.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn spd_inverse_matches_identity() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert_spd(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a[i * 3 + k] * inv[k * 3 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-10);
            }
        }
    }
}
