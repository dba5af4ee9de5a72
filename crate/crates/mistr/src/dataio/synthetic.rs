//! Deterministic synthetic sessions: paired audio and iEEG with known,
//! recoverable structure.
//!
//! The audio is a harmonic source with a slowly wandering f0 (100-250 Hz)
//! gated into word-like bursts, plus formant-shaped noise. Each neural
//! channel mixes bandlimited noise, a 6 Hz theta oscillation, 50 Hz line
//! contamination, and a gamma-band carrier whose envelope follows the audio
//! envelope, is modulated by the channel's own theta phase (a planted
//! phase-amplitude coupling effect), and is scaled by a channel-specific f0
//! tuning curve so the population of channels carries the pitch contour.
//! The reference channel additionally carries a direct f0-following
//! oscillation for the prosody proxies. Everything derives from one seed.

use crate::dataio::{Marker, MultichannelRecording, Session};
use crate::error::Result;
use crate::features::FrameGrid;
use crate::rng::Rng;
use crate::sigproc::{bandpass, Waveform};
use crate::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub duration_s: f64,
    pub channels: usize,
    pub fs_audio: f64,
    pub fs_ieeg: f64,
    /// Center and excursion of the f0 contour, Hz.
    pub f0_center: f64,
    pub f0_excursion: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            duration_s: 20.0,
            channels: 8,
            fs_audio: 16_000.0,
            fs_ieeg: 1024.0,
            f0_center: 175.0,
            f0_excursion: 60.0,
        }
    }
}

/// Ground truth emitted alongside a synthetic session, framed on the
/// standard 50 ms / 10 ms grid of the audio stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub duration_s: f64,
    pub channels: usize,
    pub f0_hz_per_frame: Vec<f64>,
    pub voiced_per_frame: Vec<bool>,
    pub envelope_per_frame: Vec<f64>,
    pub burst_onsets_s: Vec<f64>,
}

/// Piecewise burst envelope with raised-cosine edges.
struct BurstEnvelope {
    /// (on_start_s, on_end_s) pairs.
    bursts: Vec<(f64, f64)>,
    ramp_s: f64,
}

impl BurstEnvelope {
    fn generate(duration_s: f64, rng: &mut Rng) -> Self {
        let mut bursts = Vec::new();
        let mut t = rng.uniform_in(0.05, 0.2);
        while t < duration_s {
            let on = rng.uniform_in(0.45, 0.9);
            let off = rng.uniform_in(0.2, 0.45);
            let end = (t + on).min(duration_s);
            if end - t > 0.1 {
                bursts.push((t, end));
            }
            t = end + off;
        }
        BurstEnvelope {
            bursts,
            ramp_s: 0.05,
        }
    }

    fn at(&self, t: f64) -> f64 {
        for &(start, end) in &self.bursts {
            if t < start - self.ramp_s {
                break;
            }
            if t >= start - self.ramp_s && t < end + self.ramp_s {
                let rise = ((t - (start - self.ramp_s)) / self.ramp_s).clamp(0.0, 1.0);
                let fall = (((end + self.ramp_s) - t) / self.ramp_s).clamp(0.0, 1.0);
                let g = rise.min(fall);
                // Raised cosine edge.
                return 0.5 - 0.5 * (std::f64::consts::PI * g).cos();
            }
        }
        0.0
    }
}

fn f0_contour(t: f64, cfg: &SyntheticConfig) -> f64 {
    cfg.f0_center
        + cfg.f0_excursion * (2.0 * std::f64::consts::PI * 0.13 * t).sin()
        + 0.25 * cfg.f0_excursion * (2.0 * std::f64::consts::PI * 0.031 * t + 1.0).sin()
}

/// Channel-specific f0 tuning: a Gaussian bump over the contour range.
fn f0_tuning(f0: f64, channel: usize, channels: usize, cfg: &SyntheticConfig) -> f64 {
    let span = 2.0 * cfg.f0_excursion;
    let center = if channels > 1 {
        cfg.f0_center - cfg.f0_excursion + span * channel as f64 / (channels - 1) as f64
    } else {
        cfg.f0_center
    };
    let d = (f0 - center) / (0.35 * span.max(1.0));
    (-0.5 * d * d).exp()
}

/// Generate a fully deterministic synthetic session plus its ground truth.
pub fn generate_synthetic_session<T: Scalar>(
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<(Session<T>, SyntheticTruth)> {
    let root = Rng::new(seed);
    let mut env_rng = root.substream(1);
    let envelope = BurstEnvelope::generate(cfg.duration_s, &mut env_rng);

    // --- audio ------------------------------------------------------------
    let n_audio = (cfg.duration_s * cfg.fs_audio).round() as usize;
    let mut audio_rng = root.substream(2);
    let harmonic_amps = [1.0, 0.6, 0.45, 0.3, 0.2];
    let mut phase = 0.0f64;
    let mut audio = Vec::with_capacity(n_audio);
    let mut noise_src = Vec::with_capacity(n_audio);
    for i in 0..n_audio {
        let t = i as f64 / cfg.fs_audio;
        let f0 = f0_contour(t, cfg);
        phase += 2.0 * std::f64::consts::PI * f0 / cfg.fs_audio;
        let env = envelope.at(t);
        let mut v = 0.0;
        for (h, amp) in harmonic_amps.iter().enumerate() {
            v += amp * ((h + 1) as f64 * phase).sin();
        }
        audio.push(0.18 * env * v + 0.0005 * audio_rng.normal());
        noise_src.push(audio_rng.normal());
    }
    // Broadband aspiration noise above the harmonic stack, gated by the same
    // envelope so every mel band carries speech-locked energy.
    let aspiration = bandpass(
        &Waveform {
            samples: noise_src,
            fs: cfg.fs_audio,
        },
        1300.0,
        7200.0,
        2,
    )?;
    for (i, sample) in audio.iter_mut().enumerate() {
        let t = i as f64 / cfg.fs_audio;
        *sample += 0.05 * envelope.at(t) * aspiration.samples[i];
    }
    let audio = Waveform {
        samples: audio.into_iter().map(T::cast).collect(),
        fs: cfg.fs_audio,
    };

    // --- iEEG ---------------------------------------------------------------
    let n_ieeg = (cfg.duration_s * cfg.fs_ieeg).round() as usize;
    let mut channels: Vec<Vec<T>> = Vec::with_capacity(cfg.channels);
    for ch in 0..cfg.channels {
        let mut ch_rng = root.substream(100 + ch as u64);
        let theta_offset = ch_rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
        let carrier_offset = ch_rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
        let line_offset = ch_rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
        let gamma_hz = 80.0 + 10.0 * (ch % 8) as f64;
        let noise: Vec<f64> = (0..n_ieeg).map(|_| ch_rng.normal()).collect();
        let noise = bandpass(
            &Waveform {
                samples: noise,
                fs: cfg.fs_ieeg,
            },
            0.5,
            200.0,
            2,
        )?;
        // Theta frequency wanders around 6 Hz (AR(1), ~0.6 s correlation);
        // a strictly periodic theta would make circular-shift surrogates
        // powerless against the planted coupling, and the faster the
        // shifted-phase difference diffuses, the lower the surrogate floor.
        let mut wobble_rng = root.substream(200 + ch as u64);
        let rho = (-1.0 / (0.6 * cfg.fs_ieeg)).exp();
        let wobble_gain = 1.2 * (1.0 - rho * rho).sqrt();
        let mut nu = 0.0f64;
        let mut f0_phase = 0.0f64;
        let mut theta = theta_offset;
        let samples: Vec<T> = (0..n_ieeg)
            .map(|i| {
                let t = i as f64 / cfg.fs_ieeg;
                let env = envelope.at(t);
                let f0 = f0_contour(t, cfg);
                f0_phase += 2.0 * std::f64::consts::PI * f0 / cfg.fs_ieeg;
                nu = rho * nu + wobble_gain * wobble_rng.normal();
                let theta_hz = (6.0 + nu).clamp(4.2, 7.8);
                theta += 2.0 * std::f64::consts::PI * theta_hz / cfg.fs_ieeg;
                let tuning = 0.4 + 0.6 * f0_tuning(f0, ch, cfg.channels, cfg);
                // Resting gamma persists between bursts; speech drives it up.
                let gamma_amp = 0.5 * (0.25 + 0.75 * env) * (1.0 + 0.9 * theta.cos()) * tuning;
                let mut v = 0.6 * theta.sin()
                    + gamma_amp
                        * (2.0 * std::f64::consts::PI * gamma_hz * t + carrier_offset).sin()
                    + 0.25 * noise.samples[i]
                    + 0.08 * (2.0 * std::f64::consts::PI * 50.0 * t + line_offset).sin();
                if ch == 0 {
                    // Reference channel carries the pitch contour directly.
                    v += 0.5 * env * f0_phase.sin();
                }
                T::cast(v)
            })
            .collect();
        channels.push(samples);
    }

    let mut markers = vec![Marker {
        sample: 0,
        label: "start".to_string(),
    }];
    for &(start, _) in &envelope.bursts {
        markers.push(Marker {
            sample: (start * cfg.fs_ieeg).round() as usize,
            label: "burst".to_string(),
        });
    }
    let recording = MultichannelRecording::from_channels(channels, cfg.fs_ieeg, markers)?;

    // --- ground truth on the standard audio frame grid ---------------------
    let grid = FrameGrid::standard(cfg.fs_audio, n_audio)?;
    let win = grid.win_samples();
    let mut f0_hz_per_frame = Vec::with_capacity(grid.n_frames);
    let mut voiced_per_frame = Vec::with_capacity(grid.n_frames);
    let mut envelope_per_frame = Vec::with_capacity(grid.n_frames);
    for t in 0..grid.n_frames {
        let center_s = (grid.frame_start(t, n_audio) + win / 2) as f64 / cfg.fs_audio;
        let env = envelope.at(center_s);
        let voiced = env > 0.25;
        envelope_per_frame.push(env);
        voiced_per_frame.push(voiced);
        f0_hz_per_frame.push(if voiced { f0_contour(center_s, cfg) } else { 0.0 });
    }
    let truth = SyntheticTruth {
        seed,
        duration_s: cfg.duration_s,
        channels: cfg.channels,
        f0_hz_per_frame,
        voiced_per_frame,
        envelope_per_frame,
        burst_onsets_s: envelope.bursts.iter().map(|b| b.0).collect(),
    };
    let session = Session {
        recording,
        audio,
        offset_samples: 0,
        subject_id: format!("synthetic-{seed}"),
        seed,
    };
    Ok((session, truth))
}
