//! Core DSP primitives: windows, STFT/ISTFT, analytic signal, filtering,
//! resampling.
//!
//! Everything here is a pure function on value data. The STFT convention is
//! fixed crate-wide: frame `t` covers samples `[t*hop, t*hop + win_len)`,
//! Hann-windowed, zero-padded to `fft_size`, one-sided spectrum of
//! `fft_size/2 + 1` bins. The inverse is weighted overlap-add with the same
//! window applied at synthesis and per-sample normalization by the summed
//! squared window.

mod filter;
mod resample;

pub use filter::{bandpass, notch};
pub use resample::resample;

use crate::error::{Error, Result};
use crate::Scalar;
use num_complex::Complex;
use rustfft::FftPlanner;

/// Single-channel sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    /// Sample rate in Hz.
    pub fs: f64,
}

impl<T: Scalar> Waveform<T> {
    /// Build a waveform, checking the type invariants (fs > 0, finite samples).
    pub fn new(samples: Vec<T>, fs: f64) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform { samples, fs })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Time-frequency analysis grid shared by all spectrogram types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftGrid {
    pub fft_size: usize,
    /// Hop between frame starts, in samples.
    pub hop: usize,
    /// Analysis window length in samples (zero-padded up to `fft_size`).
    pub win_len: usize,
    /// Sample rate of the underlying signal, Hz.
    pub fs: f64,
}

impl StftGrid {
    pub fn new(fft_size: usize, hop: usize, win_len: usize, fs: f64) -> Result<Self> {
        if hop == 0 || win_len < 2 || !(hop <= win_len && win_len <= fft_size) {
            return Err(Error::invalid(format!(
                "need 0 < hop <= win_len <= fft_size and win_len >= 2, got hop={hop} win_len={win_len} fft_size={fft_size}"
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
        }
        Ok(StftGrid {
            fft_size,
            hop,
            win_len,
            fs,
        })
    }

    /// The pipeline-wide default: 16 kHz audio, 50 ms window, 10 ms hop,
    /// 1024-point FFT.
    pub fn default_16k() -> Self {
        StftGrid {
            fft_size: 1024,
            hop: 160,
            win_len: 800,
            fs: 16_000.0,
        }
    }

    /// One-sided bin count.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced from a signal of `len` samples.
    pub fn frames_for_len(&self, len: usize) -> usize {
        if len < self.win_len {
            0
        } else {
            (len - self.win_len) / self.hop + 1
        }
    }

    /// Natural output length of the inverse transform for `frames` frames.
    pub fn synthesis_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.win_len
        }
    }

    /// Center frequency of bin `k`, Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.fs / self.fft_size as f64
    }

    /// Nearest one-sided bin index for frequency `hz`.
    pub fn hz_to_bin(&self, hz: f64) -> usize {
        let k = (hz * self.fft_size as f64 / self.fs).round() as usize;
        k.min(self.bins() - 1)
    }
}

/// Complex STFT, row-major frames x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    pub grid: StftGrid,
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexSpectrogram<T> {
    pub fn zeros(grid: StftGrid, frames: usize) -> Self {
        let bins = grid.bins();
        ComplexSpectrogram {
            grid,
            frames,
            bins,
            values: vec![Complex::new(T::zero(), T::zero()); frames * bins],
        }
    }

    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> Complex<T> {
        self.values[frame * self.bins + bin]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, v: Complex<T>) {
        self.values[frame * self.bins + bin] = v;
    }

    /// Magnitude part, same grid.
    pub fn magnitude(&self) -> MagnitudeSpectrogram<T> {
        MagnitudeSpectrogram {
            grid: self.grid,
            frames: self.frames,
            bins: self.bins,
            values: self.values.iter().map(|c| c.norm()).collect(),
        }
    }

    /// Phase part in (-pi, pi], same grid. angle(0) = 0.
    pub fn phase(&self) -> crate::ihpr::PhaseSpectrogram<T> {
        crate::ihpr::PhaseSpectrogram {
            frames: self.frames,
            bins: self.bins,
            values: self.values.iter().map(|c| c.im.atan2(c.re)).collect(),
        }
    }
}

/// Non-negative magnitude spectrogram on an STFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram<T> {
    pub grid: StftGrid,
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> MagnitudeSpectrogram<T> {
    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> T {
        self.values[frame * self.bins + bin]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, v: T) {
        self.values[frame * self.bins + bin] = v;
    }

    /// Combine with a phase field into a complex spectrogram.
    pub fn with_phase(&self, phase: &crate::ihpr::PhaseSpectrogram<T>) -> ComplexSpectrogram<T> {
        assert_eq!(self.frames, phase.frames);
        assert_eq!(self.bins, phase.bins);
        let values = self
            .values
            .iter()
            .zip(phase.values.iter())
            .map(|(&m, &p)| Complex::new(m * p.cos(), m * p.sin()))
            .collect();
        ComplexSpectrogram {
            grid: self.grid,
            frames: self.frames,
            bins: self.bins,
            values,
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Analytic signal (Hilbert carrier): complex sequence at the source rate.
#[derive(Debug, Clone)]
pub struct AnalyticSignal<T> {
    pub values: Vec<Complex<T>>,
    pub fs: f64,
}

impl<T: Scalar> AnalyticSignal<T> {
    /// Instantaneous amplitude |z(t)|.
    pub fn envelope(&self) -> Vec<T> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    /// Instantaneous phase in (-pi, pi].
    pub fn phase(&self) -> Vec<T> {
        self.values.iter().map(|c| c.im.atan2(c.re)).collect()
    }
}

/// Periodic Hann window: w[n] = 0.5 - 0.5*cos(2*pi*n/len); w[0] = 0.
pub fn hann_window<T: Scalar>(len: usize) -> Result<Vec<T>> {
    if len < 2 {
        return Err(Error::invalid(format!("window length must be >= 2, got {len}")));
    }
    let n = len as f64;
    Ok((0..len)
        .map(|i| T::cast(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
        .collect())
}

fn fft_forward<T: Scalar>(buf: &mut [Complex<T>]) {
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

fn fft_inverse<T: Scalar>(buf: &mut [Complex<T>]) {
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_inverse(buf.len()).process(buf);
    let scale = T::one() / T::from_count(buf.len());
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Short-time Fourier transform on `grid`.
///
/// Frame count is `floor((len - win_len)/hop) + 1`; a signal shorter than one
/// window is rejected.
pub fn stft<T: Scalar>(w: &Waveform<T>, grid: &StftGrid) -> Result<ComplexSpectrogram<T>> {
    if w.len() < grid.win_len {
        return Err(Error::invalid(format!(
            "signal length {} shorter than one window ({})",
            w.len(),
            grid.win_len
        )));
    }
    let window: Vec<T> = hann_window(grid.win_len)?;
    let frames = grid.frames_for_len(w.len());
    let bins = grid.bins();
    let mut out = ComplexSpectrogram::zeros(*grid, frames);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); grid.fft_size];
    for t in 0..frames {
        let start = t * grid.hop;
        for i in 0..grid.fft_size {
            buf[i] = if i < grid.win_len {
                Complex::new(w.samples[start + i] * window[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
        fft_forward(&mut buf);
        out.values[t * bins..(t + 1) * bins].copy_from_slice(&buf[..bins]);
    }
    Ok(out)
}

/// Inverse STFT by weighted overlap-add.
///
/// The synthesis window equals the analysis window; each output sample is
/// normalized by the sum of squared windows covering it. Samples whose
/// normalizer falls below 1e-8 are set to zero.
pub fn istft<T: Scalar>(s: &ComplexSpectrogram<T>, out_len: usize) -> Waveform<T> {
    let grid = &s.grid;
    let window: Vec<T> = hann_window(grid.win_len).expect("win_len >= 2 by grid invariant");
    let span = grid.synthesis_len(s.frames).max(out_len);
    let mut acc = vec![T::zero(); span];
    let mut norm = vec![T::zero(); span];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); grid.fft_size];
    for t in 0..s.frames {
        // Rebuild the two-sided spectrum by conjugate symmetry.
        let row = &s.values[t * s.bins..(t + 1) * s.bins];
        buf[..s.bins].copy_from_slice(row);
        for k in 1..s.bins - 1 {
            buf[grid.fft_size - k] = row[k].conj();
        }
        fft_inverse(&mut buf);
        let start = t * grid.hop;
        for i in 0..grid.win_len {
            let idx = start + i;
            if idx >= span {
                break;
            }
            acc[idx] += buf[i].re * window[i];
            norm[idx] += window[i] * window[i];
        }
    }
    let floor = T::cast(1e-8);
    let samples = (0..out_len)
        .map(|i| {
            if i < span && norm[i] >= floor {
                acc[i] / norm[i]
            } else {
                T::zero()
            }
        })
        .collect();
    Waveform {
        samples,
        fs: grid.fs,
    }
}

/// Analytic signal by the frequency-domain construction: double positive
/// frequencies, zero negative frequencies, keep DC (and Nyquist for even
/// lengths). The real part equals the input to machine accuracy.
pub fn hilbert_analytic<T: Scalar>(w: &Waveform<T>) -> Result<AnalyticSignal<T>> {
    let n = w.len();
    if n < 8 {
        return Err(Error::invalid(format!(
            "analytic signal needs at least 8 samples, got {n}"
        )));
    }
    let mut buf: Vec<Complex<T>> = w
        .samples
        .iter()
        .map(|&x| Complex::new(x, T::zero()))
        .collect();
    fft_forward(&mut buf);
    let two = T::cast(2.0);
    if n % 2 == 0 {
        for v in buf[1..n / 2].iter_mut() {
            *v *= two;
        }
        for v in buf[n / 2 + 1..].iter_mut() {
            *v = Complex::new(T::zero(), T::zero());
        }
    } else {
        for v in buf[1..(n + 1) / 2].iter_mut() {
            *v *= two;
        }
        for v in buf[(n + 1) / 2..].iter_mut() {
            *v = Complex::new(T::zero(), T::zero());
        }
    }
    fft_inverse(&mut buf);
    Ok(AnalyticSignal {
        values: buf,
        fs: w.fs,
    })
}

/// Unwrap a phase sequence in place: successive differences are brought into
/// (-pi, pi].
pub fn unwrap_phase<T: Scalar>(phase: &mut [T]) {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut offset = T::zero();
    let mut prev = match phase.first() {
        Some(&p) => p,
        None => return,
    };
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let mut d = raw - prev;
        while d > pi {
            d -= two_pi;
            offset -= two_pi;
        }
        while d <= -pi {
            d += two_pi;
            offset += two_pi;
        }
        prev = raw;
        *p = raw + offset;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sine(freq: f64, fs: f64, n: usize) -> Waveform<f64> {
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect();
        Waveform { samples, fs }
    }

    fn random_signal(seed: u64, n: usize, fs: f64) -> Waveform<f64> {
        let mut rng = Rng::new(seed);
        Waveform {
            samples: (0..n).map(|_| rng.normal()).collect(),
            fs,
        }
    }

    fn snr_db(reference: &[f64], test: &[f64]) -> f64 {
        let sig: f64 = reference.iter().map(|x| x * x).sum();
        let err: f64 = reference
            .iter()
            .zip(test)
            .map(|(r, t)| (r - t) * (r - t))
            .sum();
        10.0 * (sig / err.max(1e-300)).log10()
    }

    #[test]
    fn hann_len4_closed_form() {
        let w: Vec<f64> = hann_window(4).unwrap();
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn hann_len2() {
        let w: Vec<f64> = hann_window(2).unwrap();
        assert!((w[0] - 0.0).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hann_len8_matches_formula() {
        let w: Vec<f64> = hann_window(8).unwrap();
        for (i, &v) in w.iter().enumerate() {
            let expect = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 8.0).cos();
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hann_too_short_rejected() {
        assert!(hann_window::<f64>(1).is_err());
    }

    #[test]
    fn stft_dc_concentrates_in_bin_zero() {
        // The periodic Hann window spreads DC into bins 0 and 1 only; beyond
        // the window mainlobe every bin is zero to rounding error.
        let w = Waveform {
            samples: vec![1.0f64; 4000],
            fs: 16_000.0,
        };
        for grid in [
            StftGrid::new(512, 128, 512, 16_000.0).unwrap(),
            StftGrid::new(1024, 256, 1024, 16_000.0).unwrap(),
        ] {
            let s = stft(&w, &grid).unwrap();
            for t in 0..s.frames {
                let dc = s.at(t, 0).norm();
                for k in 2..s.bins {
                    assert!(
                        s.at(t, k).norm() <= 1e-10 * dc,
                        "leakage at frame {t} bin {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn stft_bin_centered_sine_peaks_at_its_bin() {
        let fs = 16_000.0;
        let grid = StftGrid::new(1024, 256, 1024, fs).unwrap();
        let k = 37;
        let freq = k as f64 * fs / grid.fft_size as f64;
        let w = sine(freq, fs, 8192);
        let s = stft(&w, &grid).unwrap();
        for t in 0..s.frames {
            let argmax = (0..s.bins)
                .max_by(|&a, &b| s.at(t, a).norm().partial_cmp(&s.at(t, b).norm()).unwrap())
                .unwrap();
            assert_eq!(argmax, k, "frame {t}");
        }
    }

    #[test]
    fn stft_zero_signal_zero_spectrogram() {
        let w = Waveform {
            samples: vec![0.0f64; 4000],
            fs: 16_000.0,
        };
        let s = stft(&w, &StftGrid::default_16k()).unwrap();
        assert!(s.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn stft_too_short_rejected() {
        let w = Waveform {
            samples: vec![0.0f64; 100],
            fs: 16_000.0,
        };
        assert!(stft(&w, &StftGrid::default_16k()).is_err());
    }

    #[test]
    fn stft_frame_count_contract() {
        let grid = StftGrid::default_16k();
        // 100 ms at 16 kHz.
        let w = random_signal(5, 1600, 16_000.0);
        let s = stft(&w, &grid).unwrap();
        assert_eq!(s.frames, (1600 - 800) / 160 + 1);
        assert_eq!(s.bins, 513);
    }

    #[test]
    fn istft_round_trip_interior_snr_over_60db_across_seeds() {
        let grid = StftGrid::default_16k();
        for seed in [1u64, 2, 3, 4, 5] {
            let w = random_signal(seed, 8000, 16_000.0);
            let s = stft(&w, &grid).unwrap();
            let rec = istft(&s, w.len());
            let lo = grid.win_len / 2;
            let hi = w.len() - grid.win_len / 2;
            let snr = snr_db(&w.samples[lo..hi], &rec.samples[lo..hi]);
            assert!(snr > 60.0, "seed {seed}: snr {snr} dB");
        }
    }

    #[test]
    fn istft_zero_spectrogram_is_zero() {
        let s = ComplexSpectrogram::<f64>::zeros(StftGrid::default_16k(), 10);
        let w = istft(&s, 2000);
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn istft_scaling_linearity() {
        let grid = StftGrid::default_16k();
        let w = random_signal(11, 4000, 16_000.0);
        let s = stft(&w, &grid).unwrap();
        let mut s3 = s.clone();
        for v in s3.values.iter_mut() {
            *v *= 3.0;
        }
        let a = istft(&s, w.len());
        let b = istft(&s3, w.len());
        let scale = a.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            let expect = 3.0 * x;
            assert!(
                (y - expect).abs() <= 1e-12 * 3.0 * scale,
                "{y} vs {expect}"
            );
        }
    }

    #[test]
    fn parseval_per_frame() {
        let grid = StftGrid::default_16k();
        let w = random_signal(21, 4000, 16_000.0);
        let s = stft(&w, &grid).unwrap();
        let window: Vec<f64> = hann_window(grid.win_len).unwrap();
        for t in 0..s.frames {
            // Two-sided accounting from the one-sided spectrum.
            let mut spec_energy = s.at(t, 0).norm_sqr() + s.at(t, s.bins - 1).norm_sqr();
            for k in 1..s.bins - 1 {
                spec_energy += 2.0 * s.at(t, k).norm_sqr();
            }
            let frame_energy: f64 = (0..grid.win_len)
                .map(|i| {
                    let v = w.samples[t * grid.hop + i] * window[i];
                    v * v
                })
                .sum();
            let expect = grid.fft_size as f64 * frame_energy;
            assert!(
                (spec_energy - expect).abs() <= 1e-9 * expect.abs().max(1e-30),
                "frame {t}: {spec_energy} vs {expect}"
            );
        }
    }

    #[test]
    fn hilbert_of_cosine_has_unit_envelope() {
        let fs = 1000.0;
        let n = 4000;
        let w = Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / fs).cos())
                .collect::<Vec<f64>>(),
            fs,
        };
        let a = hilbert_analytic(&w).unwrap();
        let env = a.envelope();
        for &e in &env[n / 8..7 * n / 8] {
            assert!((e - 1.0).abs() < 1e-3, "envelope {e}");
        }
    }

    #[test]
    fn hilbert_phase_slope_matches_frequency() {
        let fs = 1000.0;
        let f0 = 37.0;
        let n = 4000;
        let w = sine(f0, fs, n);
        let a = hilbert_analytic(&w).unwrap();
        let mut phase = a.phase();
        unwrap_phase(&mut phase);
        // Regress the interior phase against the sample index.
        let lo = n / 8;
        let hi = 7 * n / 8;
        let m = (hi - lo) as f64;
        let mean_i = (lo + hi - 1) as f64 / 2.0;
        let mean_p = phase[lo..hi].iter().sum::<f64>() / m;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            let di = i as f64 - mean_i;
            num += di * (phase[i] - mean_p);
            den += di * di;
        }
        let slope = num / den;
        let expect = 2.0 * std::f64::consts::PI * f0 / fs;
        assert!(
            (slope - expect).abs() < 1e-4 * expect,
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn hilbert_preserves_real_part() {
        let w = random_signal(33, 2048, 1000.0);
        let a = hilbert_analytic(&w).unwrap();
        for (x, z) in w.samples.iter().zip(a.values.iter()) {
            assert!((x - z.re).abs() <= 1e-9);
        }
    }

    #[test]
    fn hilbert_too_short_rejected() {
        let w = Waveform {
            samples: vec![0.0f64; 7],
            fs: 100.0,
        };
        assert!(hilbert_analytic(&w).is_err());
    }

    #[test]
    fn unwrap_phase_removes_jumps() {
        let mut phase: Vec<f64> = (0..100)
            .map(|i| {
                let p = 0.3 * i as f64;
                (p + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                    - std::f64::consts::PI
            })
            .collect();
        unwrap_phase(&mut phase);
        for (i, p) in phase.iter().enumerate() {
            assert!((p - 0.3 * i as f64 - phase[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn waveform_invariants_enforced() {
        assert!(Waveform::new(vec![0.0f64], 0.0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 100.0).is_err());
        assert!(Waveform::new(vec![0.0f64], 100.0).is_ok());
    }

    #[test]
    fn f32_round_trip_is_reasonable() {
        let grid = StftGrid::new(256, 64, 256, 8000.0).unwrap();
        let mut rng = Rng::new(2);
        let w = Waveform {
            samples: (0..2048).map(|_| rng.normal() as f32).collect::<Vec<f32>>(),
            fs: 8000.0,
        };
        let s = stft(&w, &grid).unwrap();
        let rec = istft(&s, w.len());
        let lo = grid.win_len / 2;
        let hi = w.len() - grid.win_len / 2;
        let sig: f32 = w.samples[lo..hi].iter().map(|x| x * x).sum();
        let err: f32 = w.samples[lo..hi]
            .iter()
            .zip(&rec.samples[lo..hi])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(10.0 * (sig / err).log10() > 40.0);
    }
}
