//! Harmonic-sum pitch estimation from a magnitude spectrogram, and the
//! per-frame harmonic bin sets the vocoder anchors its phase updates to.

use crate::ihpr::F0Track;
use crate::sigproc::MagnitudeSpectrogram;
use crate::Scalar;

pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 400.0;

/// Harmonic structure of one voiced frame.
#[derive(Debug, Clone)]
pub struct FrameHarmonics<T> {
    /// Number of harmonics H (f_H < fs/2, capped at h_max).
    pub count: usize,
    /// Harmonic frequencies f_h = h * f0, Hz.
    pub freqs_hz: Vec<f64>,
    /// Nearest one-sided FFT bin per harmonic.
    pub bins: Vec<usize>,
    /// Magnitude-proportional weights, summing to 1.
    pub weights: Vec<T>,
}

/// Per-frame pitch by harmonic summation.
///
/// Each frame scores candidate f0 on a 1 Hz grid over [60, 400] Hz with
/// score(f0) = sum over h=1..5 of ln(1 + M(t, bin(h*f0))); a frame is voiced
/// when the peak score reaches 1.5x the median score over the grid. The track
/// is median-filtered with length 5.
pub fn f0_from_spectrogram<T: Scalar>(mag: &MagnitudeSpectrogram<T>) -> F0Track<T> {
    let grid = &mag.grid;
    let lo = F0_MIN_HZ as usize;
    let hi = F0_MAX_HZ as usize;
    let n_candidates = hi - lo + 1;
    let mut f0 = vec![T::zero(); mag.frames];
    let mut voiced = vec![false; mag.frames];
    let mut scores = vec![0.0f64; n_candidates];
    for t in 0..mag.frames {
        let row = &mag.values[t * mag.bins..(t + 1) * mag.bins];
        for (i, score) in scores.iter_mut().enumerate() {
            let cand = (lo + i) as f64;
            let mut acc = 0.0;
            for h in 1..=5 {
                let fh = cand * h as f64;
                if fh >= grid.fs / 2.0 {
                    break;
                }
                acc += (1.0 + row[grid.hz_to_bin(fh)].as_f64()).ln();
            }
            *score = acc;
        }
        let (best_i, best) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, &s)| (i, s))
            .unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        if best > 1e-12 && best >= 1.5 * median {
            f0[t] = T::cast((lo + best_i) as f64);
            voiced[t] = true;
        }
    }
    median_filter_track(&mut f0, &mut voiced);
    F0Track { f0, voiced }
}

/// Length-5 median filter over the f0 values (unvoiced frames enter as 0);
/// a frame stays voiced when its filtered value is positive.
fn median_filter_track<T: Scalar>(f0: &mut [T], voiced: &mut [bool]) {
    let n = f0.len();
    if n == 0 {
        return;
    }
    let raw: Vec<T> = f0.to_vec();
    for t in 0..n {
        let lo = t.saturating_sub(2);
        let hi = (t + 3).min(n);
        let mut win: Vec<T> = raw[lo..hi].to_vec();
        win.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = win[win.len() / 2];
        f0[t] = med;
        voiced[t] = med > T::zero();
    }
}

/// Harmonic set for a voiced frame: H = min(h_max, floor((fs/2 - f0)/f0)),
/// weights proportional to the frame magnitude at each harmonic bin (uniform
/// when the magnitudes sum to zero). Returns None for unvoiced frames or
/// when no harmonic fits under Nyquist.
pub fn harmonic_set<T: Scalar>(
    f0_hz: f64,
    mag_frame: &[T],
    grid: &crate::sigproc::StftGrid,
    h_max: usize,
) -> Option<FrameHarmonics<T>> {
    if f0_hz <= 0.0 || h_max == 0 {
        return None;
    }
    let nyquist = grid.fs / 2.0;
    let count = (((nyquist - f0_hz) / f0_hz).floor() as usize).min(h_max);
    if count == 0 {
        return None;
    }
    let mut freqs_hz = Vec::with_capacity(count);
    let mut bins = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let mut total = T::zero();
    for h in 1..=count {
        let fh = f0_hz * h as f64;
        let bin = grid.hz_to_bin(fh);
        freqs_hz.push(fh);
        bins.push(bin);
        let m = mag_frame[bin];
        weights.push(m);
        total += m;
    }
    if total > T::zero() {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        let uniform = T::one() / T::from_count(count);
        for w in weights.iter_mut() {
            *w = uniform;
        }
    }
    Some(FrameHarmonics {
        count,
        freqs_hz,
        bins,
        weights,
    })
}

/// Harmonic sets for every frame of a track (None on unvoiced frames).
pub fn harmonics_for_track<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    track: &F0Track<T>,
    h_max: usize,
) -> Vec<Option<FrameHarmonics<T>>> {
    (0..mag.frames)
        .map(|t| {
            if t < track.len() && track.voiced[t] {
                harmonic_set(
                    track.f0[t].as_f64(),
                    &mag.values[t * mag.bins..(t + 1) * mag.bins],
                    &mag.grid,
                    h_max,
                )
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigproc::StftGrid;

    /// Magnitude spectrogram with Gaussian peaks at multiples of `f0`.
    fn harmonic_mag(f0: f64, grid: &StftGrid, frames: usize) -> MagnitudeSpectrogram<f64> {
        let bins = grid.bins();
        let mut values = vec![0.0f64; frames * bins];
        for t in 0..frames {
            for k in 0..bins {
                let f = grid.bin_hz(k);
                let mut v = 0.001;
                for h in 1..=8 {
                    let fh = f0 * h as f64;
                    if fh < grid.fs / 2.0 {
                        let d = (f - fh) / 25.0;
                        v += (1.0 / h as f64) * (-0.5 * d * d).exp();
                    }
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
    fn recovers_planted_f0() {
        let grid = StftGrid::default_16k();
        let mag = harmonic_mag(150.0, &grid, 40);
        let track = f0_from_spectrogram(&mag);
        let good = track
            .f0
            .iter()
            .zip(&track.voiced)
            .filter(|(f, v)| **v && (f.as_f64() - 150.0).abs() <= 2.0)
            .count();
        assert!(
            good as f64 >= 0.95 * track.len() as f64,
            "{good}/{} frames within 2 Hz",
            track.len()
        );
    }

    #[test]
    fn flat_spectrum_mostly_unvoiced() {
        let grid = StftGrid::default_16k();
        let bins = grid.bins();
        let frames = 50;
        let mag = MagnitudeSpectrogram {
            grid,
            frames,
            bins,
            values: vec![0.5f64; frames * bins],
        };
        let track = f0_from_spectrogram(&mag);
        let unvoiced = track.voiced.iter().filter(|v| !**v).count();
        assert!(
            unvoiced as f64 >= 0.8 * frames as f64,
            "{unvoiced}/{frames} unvoiced"
        );
    }

    #[test]
    fn zero_spectrogram_all_unvoiced() {
        let grid = StftGrid::default_16k();
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 10,
            bins: grid.bins(),
            values: vec![0.0f64; 10 * grid.bins()],
        };
        let track = f0_from_spectrogram(&mag);
        assert!(track.voiced.iter().all(|v| !v));
        assert!(track.f0.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn harmonic_count_arithmetic() {
        let grid = StftGrid::default_16k();
        let frame = vec![1.0f64; grid.bins()];
        let set = harmonic_set(200.0, &frame, &grid, 20).unwrap();
        assert_eq!(set.count, 20); // min(20, floor(7800/200) = 39)
        let set = harmonic_set(1000.0, &frame, &grid, 20).unwrap();
        assert_eq!(set.count, 7); // floor(7000/1000)
        assert!(set.freqs_hz.iter().all(|&f| f < 8000.0));
    }

    #[test]
    fn equal_magnitudes_give_uniform_weights() {
        let grid = StftGrid::default_16k();
        let frame = vec![2.0f64; grid.bins()];
        let set = harmonic_set(500.0, &frame, &grid, 10).unwrap();
        for &w in &set.weights {
            assert!((w - 1.0 / set.count as f64).abs() < 1e-12);
        }
        let sum: f64 = set.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_magnitudes_fall_back_to_uniform() {
        let grid = StftGrid::default_16k();
        let frame = vec![0.0f64; grid.bins()];
        let set = harmonic_set(200.0, &frame, &grid, 4).unwrap();
        for &w in &set.weights {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn unvoiced_frame_has_no_set() {
        let grid = StftGrid::default_16k();
        let frame = vec![1.0f64; grid.bins()];
        assert!(harmonic_set::<f64>(0.0, &frame, &grid, 20).is_none());
    }
}
