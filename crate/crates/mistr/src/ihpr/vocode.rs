//! The IHPR iteration and the Griffin-Lim baseline.

use crate::error::{Error, Result};
use crate::ihpr::f0::{f0_from_spectrogram, harmonics_for_track, FrameHarmonics};
use crate::ihpr::{F0Track, IhprConfig, PhaseSpectrogram, RefineMode};
use crate::rng::Rng;
use crate::sigproc::{istft, stft, unwrap_phase, ComplexSpectrogram, MagnitudeSpectrogram, Waveform};
use crate::Scalar;

/// One row of the vocoder iteration log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub perceptual_loss: f64,
    /// ||M - |S_hat|||_F / ||M||_F.
    pub consistency_error: f64,
    /// Value of the refinement objective selected by `refine_mode`.
    pub harmonic_objective: f64,
}

/// Vocoder result: waveform plus the per-iteration log.
#[derive(Debug, Clone)]
pub struct VocodeOutput<T> {
    pub waveform: Waveform<T>,
    pub log: Vec<IterationRecord>,
    pub f0: F0Track<T>,
}

/// Harmonic-consistent phase initialization.
///
/// Frame 0 assigns phase 0 to harmonic bins and seeded uniform phases in
/// (-pi, pi] elsewhere. Later frames copy the previous frame, advancing
/// harmonic bins by 2*pi*f_h*hop/fs when `phase_advance_init` is set (with it
/// off, harmonic bins are an exact copy, the literal minimizer of the
/// frame-to-frame phase difference).
pub fn ihpr_init_phase<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    harmonics: &[Option<FrameHarmonics<T>>],
    cfg: &IhprConfig,
) -> PhaseSpectrogram<T> {
    let mut rng = Rng::new(cfg.seed).substream(0x1825);
    let mut phase = PhaseSpectrogram::zeros(mag.frames, mag.bins);
    let hop_s = mag.grid.hop as f64 / mag.grid.fs;
    for t in 0..mag.frames {
        if t == 0 {
            for k in 0..mag.bins {
                phase.set(0, k, T::cast(rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI)));
            }
            if let Some(Some(set)) = harmonics.first() {
                for &b in &set.bins {
                    phase.set(0, b, T::zero());
                }
            }
        } else {
            for k in 0..mag.bins {
                phase.set(t, k, phase.at(t - 1, k));
            }
            if let Some(set) = &harmonics[t] {
                for (i, &b) in set.bins.iter().enumerate() {
                    let advance = if cfg.phase_advance_init {
                        2.0 * std::f64::consts::PI * set.freqs_hz[i] * hop_s
                    } else {
                        0.0
                    };
                    phase.set(t, b, wrap(phase.at(t - 1, b) + T::cast(advance)));
                }
            }
        }
    }
    phase
}

#[inline]
fn wrap<T: Scalar>(p: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut v = p;
    while v > pi {
        v -= two_pi;
    }
    while v <= -pi {
        v += two_pi;
    }
    v
}

/// Project M * exp(j*phase) onto the set of consistent spectrograms:
/// S_hat = STFT(ISTFT(M e^{j phase})); the returned phase is angle(S_hat),
/// which is simultaneously the per-bin minimizer of |M e^{j phi} - S_hat|^2
/// and the per-bin maximizer of cos(phi - angle S_hat).
pub fn consistency_project<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    phase: &PhaseSpectrogram<T>,
) -> (ComplexSpectrogram<T>, PhaseSpectrogram<T>) {
    assert!(mag.frames > 0, "projection of an empty spectrogram");
    let complex = mag.with_phase(phase);
    let len = mag.grid.synthesis_len(mag.frames);
    let wave = istft(&complex, len);
    let s_hat = stft(&wave, &mag.grid).expect("synthesis length yields the same frame count");
    debug_assert_eq!(s_hat.frames, mag.frames);
    let new_phase = s_hat.phase();
    (s_hat, new_phase)
}

/// Adaptive phase correction at harmonic bins: subtract lambda times the
/// central finite difference (per bin) of the frequency-unwrapped phase,
/// suppressing phase discontinuities across frequency. Non-harmonic bins and
/// unvoiced frames are untouched.
pub fn adaptive_phase_correction<T: Scalar>(
    phase: &mut PhaseSpectrogram<T>,
    harmonics: &[Option<FrameHarmonics<T>>],
    lambda: f64,
) {
    if lambda == 0.0 {
        return;
    }
    let lam = T::cast(lambda);
    let bins = phase.bins;
    let mut unwrapped = vec![T::zero(); bins];
    for (t, set) in harmonics.iter().enumerate().take(phase.frames) {
        let Some(set) = set else { continue };
        unwrapped.copy_from_slice(phase.row(t));
        unwrap_phase(&mut unwrapped);
        // Compute all updates from the pre-update field, then apply.
        let mut updates: Vec<(usize, T)> = Vec::with_capacity(set.bins.len());
        for &b in &set.bins {
            let grad = if b == 0 {
                unwrapped[1] - unwrapped[0]
            } else if b == bins - 1 {
                unwrapped[bins - 1] - unwrapped[bins - 2]
            } else {
                (unwrapped[b + 1] - unwrapped[b - 1]) / T::cast(2.0)
            };
            updates.push((b, lam * grad));
        }
        for (b, delta) in updates {
            phase.set(t, b, wrap(phase.at(t, b) - delta));
        }
    }
}

/// Perceptually weighted convergence loss:
/// sum_{t,f} w(f) (M_target - M_reconst)^2
/// + gamma * sum over harmonic bins of wrapped(phi_k - phi_{k-1})^2.
pub fn perceptual_loss<T: Scalar>(
    m_target: &MagnitudeSpectrogram<T>,
    m_reconst: &MagnitudeSpectrogram<T>,
    phi_k: &PhaseSpectrogram<T>,
    phi_prev: &PhaseSpectrogram<T>,
    harmonics: &[Option<FrameHarmonics<T>>],
    gamma: f64,
    bin_weights: &[T],
) -> f64 {
    assert_eq!(m_target.bins, m_reconst.bins);
    assert_eq!(m_target.frames, m_reconst.frames);
    let mut spectral = 0.0;
    for t in 0..m_target.frames {
        for k in 0..m_target.bins {
            let d = (m_target.at(t, k) - m_reconst.at(t, k)).as_f64();
            spectral += bin_weights[k].as_f64() * d * d;
        }
    }
    let mut phase_term = 0.0;
    if gamma != 0.0 {
        for (t, set) in harmonics.iter().enumerate().take(phi_k.frames) {
            let Some(set) = set else { continue };
            for &b in &set.bins {
                let d = wrap(phi_k.at(t, b) - phi_prev.at(t, b)).as_f64();
                phase_term += d * d;
            }
        }
    }
    spectral + gamma * phase_term
}

fn refine_objective<T: Scalar>(
    mode: RefineMode,
    mag: &MagnitudeSpectrogram<T>,
    phase: &PhaseSpectrogram<T>,
    s_hat: &ComplexSpectrogram<T>,
    harmonics: &[Option<FrameHarmonics<T>>],
) -> f64 {
    let mut acc = 0.0;
    for (t, set) in harmonics.iter().enumerate().take(mag.frames) {
        let Some(set) = set else { continue };
        for (i, &b) in set.bins.iter().enumerate() {
            let target = s_hat.at(t, b);
            match mode {
                RefineMode::Minimize => {
                    let m = mag.at(t, b);
                    let p = phase.at(t, b);
                    let re = m * p.cos() - target.re;
                    let im = m * p.sin() - target.im;
                    acc += set.weights[i].as_f64() * (re * re + im * im).as_f64();
                }
                RefineMode::Maximize => {
                    let ang = target.im.atan2(target.re);
                    acc += (phase.at(t, b) - ang).cos().as_f64();
                }
            }
        }
    }
    acc
}

fn consistency_error<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    m_reconst: &MagnitudeSpectrogram<T>,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in mag.values.iter().zip(&m_reconst.values) {
        let d = (*a - *b).as_f64();
        num += d * d;
        den += a.as_f64() * a.as_f64();
    }
    (num / den.max(1e-300)).sqrt()
}

/// Run the full IHPR loop on a magnitude spectrogram.
///
/// When `f0` is absent the track is estimated from the spectrogram itself.
/// The loop alternates consistency projection and adaptive harmonic phase
/// correction, stopping when the relative change of the perceptual loss
/// drops below `cfg.tol` or after `cfg.max_iters` iterations. With
/// `max_iters` = 0 the output is synthesized straight from the harmonic
/// initialization.
pub fn ihpr_vocode<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    f0: Option<F0Track<T>>,
    cfg: &IhprConfig,
) -> Result<VocodeOutput<T>> {
    if mag.frames == 0 || mag.bins == 0 {
        return Err(Error::invalid("empty spectrogram"));
    }
    let track = match f0 {
        Some(t) => {
            if t.len() != mag.frames {
                return Err(Error::invalid(format!(
                    "f0 track has {} frames, spectrogram {}",
                    t.len(),
                    mag.frames
                )));
            }
            t
        }
        None => f0_from_spectrogram(mag),
    };
    let harmonics = harmonics_for_track(mag, &track, cfg.h_max);
    let bin_weights: Vec<T> = cfg.weighting.per_bin(&mag.grid);
    let mut phase = ihpr_init_phase(mag, &harmonics, cfg);
    let mut log = Vec::new();
    let mut prev_loss: Option<f64> = None;
    for iter in 1..=cfg.max_iters {
        let (s_hat, projected) = consistency_project(mag, &phase);
        let m_reconst = s_hat.magnitude();
        let mut new_phase = projected;
        adaptive_phase_correction(&mut new_phase, &harmonics, cfg.lambda);
        let loss = perceptual_loss(
            mag,
            &m_reconst,
            &new_phase,
            &phase,
            &harmonics,
            cfg.gamma,
            &bin_weights,
        );
        let objective = refine_objective(cfg.refine_mode, mag, &new_phase, &s_hat, &harmonics);
        log.push(IterationRecord {
            iteration: iter,
            perceptual_loss: loss,
            consistency_error: consistency_error(mag, &m_reconst),
            harmonic_objective: objective,
        });
        phase = new_phase;
        if let Some(prev) = prev_loss {
            let rel = (prev - loss).abs() / prev.abs().max(1e-300);
            if rel < cfg.tol {
                break;
            }
        }
        prev_loss = Some(loss);
    }
    let complex = mag.with_phase(&phase);
    let waveform = istft(&complex, mag.grid.synthesis_len(mag.frames));
    Ok(VocodeOutput {
        waveform,
        log,
        f0: track,
    })
}

/// Classic Griffin-Lim: seeded random phase, `iters` consistency
/// projections, ISTFT. Returns the waveform and the consistency error per
/// iteration.
pub fn griffin_lim<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    iters: usize,
    seed: u64,
) -> (Waveform<T>, Vec<f64>) {
    let mut rng = Rng::new(seed).substream(0x6c67);
    let mut phase = PhaseSpectrogram::zeros(mag.frames, mag.bins);
    for v in phase.values.iter_mut() {
        *v = T::cast(rng.uniform_in(-std::f64::consts::PI, std::f64::consts::PI));
    }
    griffin_lim_with_init(mag, phase, iters)
}

/// Griffin-Lim from an explicit initial phase field.
pub fn griffin_lim_with_init<T: Scalar>(
    mag: &MagnitudeSpectrogram<T>,
    mut phase: PhaseSpectrogram<T>,
    iters: usize,
) -> (Waveform<T>, Vec<f64>) {
    if mag.frames == 0 {
        return (
            Waveform {
                samples: Vec::new(),
                fs: mag.grid.fs,
            },
            Vec::new(),
        );
    }
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        let (s_hat, projected) = consistency_project(mag, &phase);
        errors.push(consistency_error(mag, &s_hat.magnitude()));
        phase = projected;
    }
    let complex = mag.with_phase(&phase);
    let waveform = istft(&complex, mag.grid.synthesis_len(mag.frames));
    (waveform, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ihpr::FreqWeighting;
    use crate::rng::Rng;
    use crate::sigproc::StftGrid;

    fn small_grid() -> StftGrid {
        StftGrid::new(256, 64, 256, 8000.0).unwrap()
    }

    fn random_wave(seed: u64, n: usize, fs: f64) -> Waveform<f64> {
        let mut rng = Rng::new(seed);
        Waveform {
            samples: (0..n).map(|_| rng.normal()).collect(),
            fs,
        }
    }

    /// 1 s voiced harmonic signal: f0 with 5 equal-phase harmonics.
    fn harmonic_wave(f0: f64, fs: f64, n: usize) -> Waveform<f64> {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (1..=5)
                    .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
                    * 0.3
            })
            .collect();
        Waveform { samples, fs }
    }

    #[test]
    fn init_without_advance_copies_phase_exactly() {
        let grid = small_grid();
        let bins = grid.bins();
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 6,
            bins,
            values: vec![1.0f64; 6 * bins],
        };
        let track = F0Track {
            f0: vec![200.0; 6],
            voiced: vec![true; 6],
        };
        let harmonics = harmonics_for_track(&mag, &track, 20);
        let cfg = IhprConfig {
            phase_advance_init: false,
            ..IhprConfig::default()
        };
        let phase = ihpr_init_phase(&mag, &harmonics, &cfg);
        for t in 1..6 {
            for k in 0..bins {
                assert_eq!(phase.at(t, k), phase.at(t - 1, k), "frame {t} bin {k}");
            }
        }
        // Frame 0 harmonic bins are exactly zero.
        for &b in &harmonics[0].as_ref().unwrap().bins {
            assert_eq!(phase.at(0, b), 0.0);
        }
    }

    #[test]
    fn init_single_frame_uses_frame_zero_rule() {
        let grid = small_grid();
        let bins = grid.bins();
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 1,
            bins,
            values: vec![1.0f64; bins],
        };
        let track = F0Track {
            f0: vec![250.0],
            voiced: vec![true],
        };
        let harmonics = harmonics_for_track(&mag, &track, 20);
        let phase = ihpr_init_phase(&mag, &harmonics, &IhprConfig::default());
        assert_eq!(phase.frames, 1);
        for &b in &harmonics[0].as_ref().unwrap().bins {
            assert_eq!(phase.at(0, b), 0.0);
        }
    }

    #[test]
    fn init_with_advance_yields_periodic_output() {
        // A bin-centered harmonic with constant magnitude vocodes (init only)
        // to a phase-coherent sinusoid.
        let fs = 16_000.0;
        let grid = StftGrid::default_16k();
        let bins = grid.bins();
        let f0 = 125.0; // exactly bin 8 of a 1024 FFT at 16 kHz
        let frames = 40;
        let mut mag = MagnitudeSpectrogram {
            grid,
            frames,
            bins,
            values: vec![0.0f64; frames * bins],
        };
        let bin = grid.hz_to_bin(f0);
        for t in 0..frames {
            mag.set(t, bin, 100.0);
        }
        let track = F0Track {
            f0: vec![f0; frames],
            voiced: vec![true; frames],
        };
        let cfg = IhprConfig::default();
        let out = ihpr_vocode(
            &mag,
            Some(track),
            &IhprConfig {
                max_iters: 0,
                ..cfg
            },
        )
        .unwrap();
        let x = &out.waveform.samples;
        let lag = (fs / f0).round() as usize;
        let lo = grid.win_len;
        let hi = x.len() - grid.win_len - lag;
        let mut r0 = 0.0;
        let mut rl = 0.0;
        for i in lo..hi {
            r0 += x[i] * x[i];
            rl += x[i] * x[i + lag];
        }
        assert!(rl >= 0.95 * r0, "autocorr ratio {}", rl / r0);
    }

    #[test]
    fn projection_fixed_point_for_consistent_input() {
        let grid = small_grid();
        let w = random_wave(3, 4096, grid.fs);
        let s = stft(&w, &grid).unwrap();
        let mag = s.magnitude();
        let phase = s.phase();
        let (_, projected) = consistency_project(&mag, &phase);
        for t in 2..mag.frames - 2 {
            for k in 0..mag.bins {
                // Phase is meaningless where magnitude vanishes.
                if mag.at(t, k) > 1e-6 {
                    let d = (projected.at(t, k) - phase.at(t, k)).abs();
                    let d = d.min(2.0 * std::f64::consts::PI - d);
                    assert!(d <= 1e-6, "frame {t} bin {k}: {d}");
                }
            }
        }
    }

    #[test]
    fn projection_of_zero_is_zero() {
        let grid = small_grid();
        let bins = grid.bins();
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 5,
            bins,
            values: vec![0.0f64; 5 * bins],
        };
        let phase = PhaseSpectrogram::zeros(5, bins);
        let (s_hat, projected) = consistency_project(&mag, &phase);
        assert!(s_hat.values.iter().all(|c| c.norm() == 0.0));
        assert!(projected.values.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn griffin_lim_error_non_increasing() {
        let grid = small_grid();
        let w = harmonic_wave(150.0, grid.fs, 4096);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let (_, errors) = griffin_lim(&mag, 30, 7);
        for pair in errors.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10,
                "consistency error increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn griffin_lim_zero_iters_is_finite() {
        let grid = small_grid();
        let w = random_wave(9, 2048, grid.fs);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let (out, errors) = griffin_lim(&mag, 0, 1);
        assert!(errors.is_empty());
        assert!(out.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn griffin_lim_deterministic_per_seed() {
        let grid = small_grid();
        let w = random_wave(10, 2048, grid.fs);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let (a, _) = griffin_lim(&mag, 5, 42);
        let (b, _) = griffin_lim(&mag, 5, 42);
        let (c, _) = griffin_lim(&mag, 5, 43);
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn correction_identity_at_lambda_zero() {
        let grid = small_grid();
        let bins = grid.bins();
        let mut rng = Rng::new(5);
        let mut phase = PhaseSpectrogram::zeros(4, bins);
        for v in phase.values.iter_mut() {
            *v = rng.uniform_in(-3.0, 3.0);
        }
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 4,
            bins,
            values: vec![1.0f64; 4 * bins],
        };
        let track = F0Track {
            f0: vec![200.0; 4],
            voiced: vec![true; 4],
        };
        let harmonics = harmonics_for_track(&mag, &track, 20);
        let before = phase.clone();
        adaptive_phase_correction(&mut phase, &harmonics, 0.0);
        assert_eq!(phase, before);
    }

    #[test]
    fn correction_shifts_linear_ramp_by_lambda_alpha() {
        let grid = small_grid();
        let bins = grid.bins();
        let alpha = 0.01; // radians per bin, small enough to stay unwrapped
        let mut phase = PhaseSpectrogram::zeros(2, bins);
        for t in 0..2 {
            for k in 0..bins {
                phase.set(t, k, alpha * k as f64);
            }
        }
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 2,
            bins,
            values: vec![1.0f64; 2 * bins],
        };
        let track = F0Track {
            f0: vec![300.0; 2],
            voiced: vec![true; 2],
        };
        let harmonics = harmonics_for_track(&mag, &track, 10);
        let before = phase.clone();
        let lambda = 0.1;
        adaptive_phase_correction(&mut phase, &harmonics, lambda);
        for (t, set) in harmonics.iter().enumerate() {
            for &b in &set.as_ref().unwrap().bins {
                if b > 0 && b < bins - 1 {
                    let expect = before.at(t, b) - lambda * alpha;
                    assert!(
                        (phase.at(t, b) - expect).abs() < 1e-12,
                        "bin {b}: {} vs {expect}",
                        phase.at(t, b)
                    );
                }
            }
        }
    }

    #[test]
    fn correction_reduces_phase_roughness_on_noise() {
        // Seeded phase-discontinuity spikes at harmonic bins on a smooth
        // rising trend: total variation across frequency around the harmonic
        // bins must not grow under one correction pass.
        let grid = small_grid();
        let bins = grid.bins();
        let frames = 8;
        let mut rng = Rng::new(42);
        let mut phase = PhaseSpectrogram::zeros(frames, bins);
        for t in 0..frames {
            for k in 0..bins {
                phase.set(t, k, wrap(0.05 * k as f64));
            }
        }
        let mag = MagnitudeSpectrogram {
            grid,
            frames,
            bins,
            values: vec![1.0f64; frames * bins],
        };
        let track = F0Track {
            f0: vec![150.0; frames],
            voiced: vec![true; frames],
        };
        let harmonics = harmonics_for_track(&mag, &track, 20);
        for (t, set) in harmonics.iter().enumerate() {
            for &b in &set.as_ref().unwrap().bins {
                let spike = rng.uniform_in(0.3, 1.2);
                phase.set(t, b, wrap(phase.at(t, b) + spike));
            }
        }
        let tv = |p: &PhaseSpectrogram<f64>| -> f64 {
            let mut acc = 0.0;
            for (t, set) in harmonics.iter().enumerate() {
                let mut row = p.row(t).to_vec();
                unwrap_phase(&mut row);
                for &b in &set.as_ref().unwrap().bins {
                    if b > 0 && b < bins - 1 {
                        acc += (row[b] - row[b - 1]).abs() + (row[b + 1] - row[b]).abs();
                    }
                }
            }
            acc
        };
        let before = tv(&phase);
        adaptive_phase_correction(&mut phase, &harmonics, 0.1);
        let after = tv(&phase);
        assert!(
            after <= before,
            "roughness grew: {before} -> {after}"
        );
    }

    #[test]
    fn perceptual_loss_zero_at_match() {
        let grid = small_grid();
        let bins = grid.bins();
        let mag = MagnitudeSpectrogram {
            grid,
            frames: 3,
            bins,
            values: vec![0.5f64; 3 * bins],
        };
        let phase = PhaseSpectrogram::zeros(3, bins);
        let weights: Vec<f64> = FreqWeighting::FlatThenLinearDecay.per_bin(&grid);
        let loss = perceptual_loss(&mag, &mag, &phase, &phase, &[None, None, None], 0.01, &weights);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn perceptual_loss_gamma_zero_is_weighted_mse() {
        let grid = small_grid();
        let bins = grid.bins();
        let mag_a = MagnitudeSpectrogram {
            grid,
            frames: 1,
            bins,
            values: vec![1.0f64; bins],
        };
        let mag_b = MagnitudeSpectrogram {
            grid,
            frames: 1,
            bins,
            values: vec![0.0f64; bins],
        };
        let mut phase_a = PhaseSpectrogram::zeros(1, bins);
        let phase_b = PhaseSpectrogram::zeros(1, bins);
        for v in phase_a.values.iter_mut() {
            *v = 1.0;
        }
        let track = F0Track {
            f0: vec![100.0],
            voiced: vec![true],
        };
        let harmonics = harmonics_for_track(&mag_a, &track, 20);
        let weights: Vec<f64> = FreqWeighting::FlatThenLinearDecay.per_bin(&grid);
        let loss = perceptual_loss(&mag_a, &mag_b, &phase_a, &phase_b, &harmonics, 0.0, &weights);
        let expect: f64 = weights.iter().sum();
        assert!((loss - expect).abs() < 1e-12);
        // And the loss is never negative.
        let loss2 = perceptual_loss(&mag_a, &mag_b, &phase_a, &phase_b, &harmonics, 5.0, &weights);
        assert!(loss2 >= loss);
    }

    #[test]
    fn vocode_rejects_empty_input() {
        let grid = small_grid();
        let mag = MagnitudeSpectrogram::<f64> {
            grid,
            frames: 0,
            bins: grid.bins(),
            values: vec![],
        };
        assert!(ihpr_vocode(&mag, None, &IhprConfig::default()).is_err());
    }

    #[test]
    fn vocode_log_and_stopping_contract() {
        let grid = small_grid();
        let w = harmonic_wave(150.0, grid.fs, 8192);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let cfg = IhprConfig {
            max_iters: 100,
            tol: 1e-3,
            seed: 1,
            ..IhprConfig::default()
        };
        let out = ihpr_vocode(&mag, None, &cfg).unwrap();
        assert!(out.log.len() <= 100);
        assert!(out.waveform.samples.iter().all(|v| v.is_finite()));
        if out.log.len() < 100 {
            let last = out.log[out.log.len() - 1].perceptual_loss;
            let prev = out.log[out.log.len() - 2].perceptual_loss;
            let rel = (prev - last).abs() / prev.abs().max(1e-300);
            assert!(rel < 1e-3, "stopped with relative change {rel}");
        }
        // Loss at convergence does not exceed the first iteration's loss.
        assert!(
            out.log.last().unwrap().perceptual_loss <= out.log[0].perceptual_loss + 1e-12,
            "loss grew over the run"
        );
    }

    #[test]
    fn consistency_error_non_increasing_with_lambda_zero() {
        let grid = small_grid();
        let w = harmonic_wave(180.0, grid.fs, 8192);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let cfg = IhprConfig {
            max_iters: 30,
            tol: 0.0,
            lambda: 0.0,
            gamma: 0.0,
            seed: 3,
            ..IhprConfig::default()
        };
        let out = ihpr_vocode(&mag, None, &cfg).unwrap();
        for pair in out.log.windows(2) {
            assert!(
                pair[1].consistency_error <= pair[0].consistency_error + 1e-10,
                "{} -> {}",
                pair[0].consistency_error,
                pair[1].consistency_error
            );
        }
    }

    #[test]
    fn minimize_and_maximize_updates_coincide() {
        let grid = small_grid();
        let w = harmonic_wave(200.0, grid.fs, 4096);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let base = IhprConfig {
            max_iters: 5,
            tol: 0.0,
            seed: 11,
            ..IhprConfig::default()
        };
        let min_out = ihpr_vocode(
            &mag,
            None,
            &IhprConfig {
                refine_mode: RefineMode::Minimize,
                ..base.clone()
            },
        )
        .unwrap();
        let max_out = ihpr_vocode(
            &mag,
            None,
            &IhprConfig {
                refine_mode: RefineMode::Maximize,
                ..base
            },
        )
        .unwrap();
        // Identical waveforms bit for bit; only the reported objective
        // differs.
        assert_eq!(min_out.waveform.samples, max_out.waveform.samples);
        assert_ne!(
            min_out.log[0].harmonic_objective,
            max_out.log[0].harmonic_objective
        );
    }

    #[test]
    fn degenerate_config_matches_griffin_lim_from_same_init() {
        let grid = small_grid();
        let w = harmonic_wave(160.0, grid.fs, 8192);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let cfg = IhprConfig {
            max_iters: 20,
            tol: 0.0,
            lambda: 0.0,
            gamma: 0.0,
            phase_advance_init: false,
            seed: 4,
            ..IhprConfig::default()
        };
        // No harmonic gating: all-unvoiced track.
        let track = F0Track::unvoiced(mag.frames);
        let harmonics = harmonics_for_track(&mag, &track, cfg.h_max);
        let init = ihpr_init_phase(&mag, &harmonics, &cfg);
        let (gl, _) = griffin_lim_with_init(&mag, init, 20);
        let out = ihpr_vocode(&mag, Some(track), &cfg).unwrap();
        for (a, b) in out.waveform.samples.iter().zip(&gl.samples) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn converges_on_self_consistent_magnitude() {
        let grid = StftGrid::default_16k();
        let w = harmonic_wave(150.0, grid.fs, 16_000);
        let mag = stft(&w, &grid).unwrap().magnitude();
        let cfg = IhprConfig {
            seed: 5,
            ..IhprConfig::default()
        };
        let out = ihpr_vocode(&mag, None, &cfg).unwrap();
        let reconst = stft(&out.waveform, &grid).unwrap().magnitude();
        let err = consistency_error(&mag, &reconst);
        assert!(err < 0.05, "consistency error {err} after {} iters", out.log.len());
    }
}
