//! The five pipeline commands. Stages communicate only through files with
//! fixed names inside their output directories.

use crate::config::PipelineConfig;
use anyhow::{bail, Context, Result};
use mistr::dataio::{
    generate_synthetic_session, read_matrix, read_wav, write_matrix, write_wav, Marker,
    MultichannelRecording, SyntheticConfig,
};
use mistr::features::{
    assemble_features, zscore_fit_transform, FeatureMatrix, FrameGrid, NormStats,
};
use mistr::ihpr::{
    f0_from_spectrogram, griffin_lim, ihpr_vocode, mel_filterbank, mel_spectrogram, mel_to_linear,
    MelFilterbank, MelSpectrogram,
};
use mistr::metrics::{hnr, mcd, pearson_spectrogram, EvalReport};
use mistr::nn::{
    autoencoder_train_arch, encode_latent, kfold_split, load_autoencoder, load_transformer,
    save_autoencoder, save_transformer, transformer_predict, transformer_train,
    AutoencoderConfig, Tensor2, TrainLog, TransformerParams,
};
use mistr::rng::Rng;
use mistr::sigproc::{bandpass, notch, stft, Waveform};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

// --- session file layout ---------------------------------------------------

const IEEG_FILE: &str = "ieeg.f32";
const AUDIO_FILE: &str = "audio.wav";
const MARKERS_FILE: &str = "markers.json";
const TRUTH_FILE: &str = "truth.json";

/// Serializable normalization stats (stats.json).
#[derive(Debug, Serialize, Deserialize)]
struct StatsFile {
    mean: Vec<f64>,
    std: Vec<f64>,
    constant: Vec<bool>,
    names: Vec<String>,
}

/// Held-out quality metrics emitted by `train` (metrics.json).
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub held_out_pearson_mean: f64,
    pub held_out_mcd_db: f64,
    pub n_held_out_frames: usize,
    pub ae_epochs: usize,
    pub tf_epochs: usize,
}

pub fn cmd_gen_synthetic(
    out: &Path,
    cfg: &PipelineConfig,
    seed: Option<u64>,
    duration: Option<f64>,
    channels: Option<usize>,
) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.synthetic.duration_s = d;
    }
    if let Some(c) = channels {
        cfg.synthetic.channels = c;
    }
    let syn = SyntheticConfig {
        duration_s: cfg.synthetic.duration_s,
        channels: cfg.synthetic.channels,
        f0_center: cfg.synthetic.f0_center,
        f0_excursion: cfg.synthetic.f0_excursion,
        ..SyntheticConfig::default()
    };
    let (session, truth) = generate_synthetic_session::<f64>(&syn, cfg.seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rec = &session.recording;
    write_matrix(
        &out.join(IEEG_FILE),
        &rec.data,
        rec.n_channels,
        rec.n_samples,
        rec.fs,
        &rec.labels,
    )?;
    write_wav(&out.join(AUDIO_FILE), &session.audio)?;
    std::fs::write(
        out.join(MARKERS_FILE),
        serde_json::to_string_pretty(&rec.markers)?,
    )?;
    std::fs::write(out.join(TRUTH_FILE), serde_json::to_string_pretty(&truth)?)?;
    cfg.echo_into(out)?;
    println!(
        "wrote session: {} channels x {} samples at {} Hz, {:.1} s audio",
        rec.n_channels,
        rec.n_samples,
        rec.fs,
        session.audio.duration_s()
    );
    Ok(())
}

fn load_session_recording(session: &Path) -> Result<MultichannelRecording<f64>> {
    let ieeg_path = session.join(IEEG_FILE);
    let markers_path = session.join(MARKERS_FILE);
    let mut missing = Vec::new();
    for p in [&ieeg_path, &markers_path] {
        if !p.exists() {
            missing.push(p.display().to_string());
        }
    }
    if !missing.is_empty() {
        bail!("missing session files: {}", missing.join(", "));
    }
    let (data, sidecar) = read_matrix::<f64>(&ieeg_path)?;
    let markers: Vec<Marker> = serde_json::from_str(
        &std::fs::read_to_string(&markers_path)
            .with_context(|| format!("reading {}", markers_path.display()))?,
    )
    .with_context(|| format!("parsing {}", markers_path.display()))?;
    Ok(MultichannelRecording {
        data,
        n_channels: sidecar.rows,
        n_samples: sidecar.cols,
        fs: sidecar.fs,
        labels: sidecar.labels,
        markers,
    })
}

/// Bandpass to the band of interest, then notch out line-noise harmonics.
fn preprocess(rec: &MultichannelRecording<f64>, cfg: &PipelineConfig) -> Result<MultichannelRecording<f64>> {
    let mut out = rec.clone();
    for ch in 0..rec.n_channels {
        let wave = Waveform {
            samples: rec.channel(ch).to_vec(),
            fs: rec.fs,
        };
        let wave = bandpass(
            &wave,
            cfg.bands.preproc_lo_hz,
            cfg.bands.preproc_hi_hz.min(0.49 * rec.fs),
            cfg.bands.preproc_order,
        )?;
        let wave = notch(&wave, cfg.bands.notch_base_hz, cfg.bands.notch_harmonics)?;
        out.channel_mut(ch).copy_from_slice(&wave.samples);
    }
    Ok(out)
}

pub fn cmd_extract_features(session: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let rec = load_session_recording(session)?;
    let rec = preprocess(&rec, cfg)?;
    let grid = FrameGrid::new(
        cfg.grid.win_ms,
        cfg.grid.hop_ms,
        rec.fs,
        rec.samples_per_channel(),
    )?;
    let features = assemble_features(&rec, &grid, &cfg.feature_config())?;
    let (normalized, stats) = zscore_fit_transform(&features)?;
    let out_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    if !out_dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&out_dir)?;
    }
    write_matrix(
        out,
        &normalized.values,
        normalized.frames,
        normalized.cols,
        rec.fs,
        &normalized.names,
    )?;
    let stats_file = StatsFile {
        mean: stats.mean.clone(),
        std: stats.std.clone(),
        constant: stats.constant.clone(),
        names: normalized.names.clone(),
    };
    let stats_path = out_dir.join("stats.json");
    std::fs::write(&stats_path, serde_json::to_string_pretty(&stats_file)?)
        .with_context(|| format!("writing {}", stats_path.display()))?;
    cfg.echo_into(&out_dir)?;
    println!(
        "wrote {} frames x {} features to {}",
        normalized.frames,
        normalized.cols,
        out.display()
    );
    Ok(())
}

fn read_features(path: &Path) -> Result<FeatureMatrix<f64>> {
    let (values, sidecar) = read_matrix::<f64>(path)?;
    Ok(FeatureMatrix {
        frames: sidecar.rows,
        cols: sidecar.cols,
        values,
        names: sidecar.labels,
    })
}

/// Target log-mel of a (16 kHz) waveform on the configured analysis grid.
fn audio_log_mel(
    audio: &Waveform<f64>,
    cfg: &PipelineConfig,
) -> Result<(MelSpectrogram<f64>, MelFilterbank<f64>)> {
    let mut grid = cfg.stft.grid()?;
    grid.fs = audio.fs;
    let spec = stft(audio, &grid)?;
    let fb = mel_filterbank(cfg.model.n_mels, &grid)?;
    Ok((mel_spectrogram(&spec.magnitude(), &fb), fb))
}

/// Slice aligned (latent, mel) rows into contiguous training segments.
fn segment_pairs(
    latent: &Tensor2<f64>,
    mel: &MelSpectrogram<f64>,
    seg_frames: usize,
) -> Vec<(Tensor2<f64>, Tensor2<f64>)> {
    let total = latent.rows;
    let mel_t = Tensor2::from_flat(mel.frames, mel.n_mels, mel.values.clone());
    let n_segments = (total / seg_frames).max(1);
    let mut out = Vec::with_capacity(n_segments);
    for s in 0..n_segments {
        let lo = s * seg_frames;
        let hi = if s + 1 == n_segments {
            total
        } else {
            (s + 1) * seg_frames
        };
        out.push((latent.slice_rows(lo, hi), mel_t.slice_rows(lo, hi)));
    }
    out
}

fn loss_csv(ae: &TrainLog, tf: &TrainLog) -> String {
    let mut out = String::from("stage,epoch,train_loss,val_loss\n");
    for (stage, log) in [("autoencoder", ae), ("transformer", tf)] {
        for (e, (tr, va)) in log.train_loss.iter().zip(&log.val_loss).enumerate() {
            let _ = writeln!(out, "{stage},{},{tr},{va}", e + 1);
        }
    }
    out
}

fn pearson_mcd_on(
    params: &TransformerParams<f64>,
    items: &[(Tensor2<f64>, Tensor2<f64>)],
    idx: &[usize],
) -> Result<(f64, f64, usize)> {
    // Concatenate held-out predictions and targets, then score.
    let mut pred_rows = Vec::new();
    let mut target_rows = Vec::new();
    for &i in idx {
        let (latent, mel) = &items[i];
        let pred = transformer_predict(params, latent)?;
        pred_rows.extend(pred.values);
        target_rows.extend(mel.data.clone());
    }
    let frames = pred_rows.len() / params.cfg.n_mels;
    let pred = MelSpectrogram {
        frames,
        n_mels: params.cfg.n_mels,
        values: pred_rows,
    };
    let target = MelSpectrogram {
        frames,
        n_mels: params.cfg.n_mels,
        values: target_rows,
    };
    let pearson = pearson_spectrogram(&pred, &target)?;
    let mcd_db = mcd(&target, &pred, 13)?;
    Ok((pearson.mean, mcd_db, frames))
}

pub fn cmd_train(
    features_path: &Path,
    audio_path: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    kfold: bool,
) -> Result<()> {
    let features = read_features(features_path)?;
    let audio = read_wav::<f64>(audio_path)?;
    let (mel, _) = audio_log_mel(&audio, cfg)?;
    if features.frames != mel.frames {
        bail!(
            "alignment error: features have {} frames but the audio target has {} \
             (check that both cover the same span on the same grid)",
            features.frames,
            mel.frames
        );
    }
    std::fs::create_dir_all(out)?;
    let train_cfg = cfg.train_config();

    // Stage 1: autoencoder on the normalized features.
    let arch = AutoencoderConfig {
        in_dim: features.cols,
        hidden: cfg.model.hidden,
        latent: cfg.model.latent,
    };
    let (ae, ae_log) = autoencoder_train_arch(&features, &train_cfg, arch)?;
    save_autoencoder(&out.join("autoencoder.bin"), &ae)?;
    let latent = encode_latent(&ae, &features)?;

    // Stage 2: transformer on latent -> log-mel segments.
    let items = segment_pairs(&latent, &mel, cfg.train.seg_frames);
    let mut order: Vec<usize> = (0..items.len()).collect();
    Rng::new(cfg.seed).substream(0x5e6).shuffle(&mut order);
    let n_held = ((cfg.train.val_fraction * items.len() as f64).round() as usize)
        .clamp(1, items.len().saturating_sub(1).max(1));
    let held_out: Vec<usize> = order[..n_held].to_vec();
    let train_items: Vec<(Tensor2<f64>, Tensor2<f64>)> = order[n_held..]
        .iter()
        .map(|&i| items[i].clone())
        .collect();
    if train_items.is_empty() {
        bail!("not enough segments to train on (have {})", items.len());
    }

    if kfold {
        let folds = kfold_split(items.len(), cfg.train.k_folds, cfg.seed)?;
        let mut csv = String::from("fold,pearson_mean,mcd_db,n_frames\n");
        for (f, fold) in folds.iter().enumerate() {
            let train_f: Vec<(Tensor2<f64>, Tensor2<f64>)> = (0..items.len())
                .filter(|i| !fold.contains(i))
                .map(|i| items[i].clone())
                .collect();
            let mut params =
                TransformerParams::init(cfg.transformer_config(), &mut Rng::new(cfg.seed))?;
            transformer_train(&mut params, &train_f, &train_cfg)?;
            let (r, d, n) = pearson_mcd_on(&params, &items, fold)?;
            let _ = writeln!(csv, "{f},{r},{d},{n}");
        }
        std::fs::write(out.join("fold_metrics.csv"), csv)?;
    }

    let mut params = TransformerParams::init(cfg.transformer_config(), &mut Rng::new(cfg.seed))?;
    let tf_log = transformer_train(&mut params, &train_items, &train_cfg)?;
    save_transformer(&out.join("transformer.bin"), &params)?;
    std::fs::write(out.join("loss.csv"), loss_csv(&ae_log, &tf_log))?;

    let (pearson_mean, mcd_db, n_frames) = pearson_mcd_on(&params, &items, &held_out)?;
    let metrics = TrainMetrics {
        held_out_pearson_mean: pearson_mean,
        held_out_mcd_db: mcd_db,
        n_held_out_frames: n_frames,
        ae_epochs: ae_log.stopped_epoch,
        tf_epochs: tf_log.stopped_epoch,
    };
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    cfg.echo_into(out)?;
    println!(
        "trained: ae {} epochs, transformer {} epochs, held-out pearson {:.3}, mcd {:.2} dB",
        metrics.ae_epochs, metrics.tf_epochs, pearson_mean, mcd_db
    );
    Ok(())
}

pub fn cmd_synth(
    features_path: &Path,
    model_dir: &Path,
    out_wav: &Path,
    cfg: &PipelineConfig,
    vocoder: &str,
    iters: Option<usize>,
) -> Result<()> {
    let features = read_features(features_path)?;
    let ae = load_autoencoder::<f64>(&model_dir.join("autoencoder.bin"))?;
    let tf = load_transformer::<f64>(&model_dir.join("transformer.bin"))?;
    if ae.cfg.in_dim != features.cols {
        bail!(
            "model/feature dim mismatch: autoencoder expects {} features, file has {}",
            ae.cfg.in_dim,
            features.cols
        );
    }
    if tf.cfg.latent_dim != ae.cfg.latent {
        bail!(
            "model mismatch: transformer latent {} vs autoencoder latent {}",
            tf.cfg.latent_dim,
            ae.cfg.latent
        );
    }
    let latent = encode_latent(&ae, &features)?;
    let mel = transformer_predict(&tf, &latent)?;
    let mut grid = cfg.stft.grid()?;
    grid.fs = cfg.stft.audio_fs;
    let fb = mel_filterbank::<f64>(tf.cfg.n_mels, &grid)?;
    let mag = mel_to_linear(&mel, &fb)?;
    let out_dir = out_wav.parent().map(Path::to_path_buf).unwrap_or_default();
    if !out_dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&out_dir)?;
    }
    let wave = match vocoder {
        "ihpr" => {
            let mut ihpr_cfg = cfg.ihpr_config()?;
            if let Some(n) = iters {
                ihpr_cfg.max_iters = n;
            }
            let out = ihpr_vocode(&mag, None, &ihpr_cfg)?;
            let mut csv = String::from("iteration,perceptual_loss,consistency_error\n");
            for rec in &out.log {
                let _ = writeln!(
                    csv,
                    "{},{},{}",
                    rec.iteration, rec.perceptual_loss, rec.consistency_error
                );
            }
            std::fs::write(out_dir.join("ihpr_log.csv"), csv)?;
            out.waveform
        }
        "griffinlim" => {
            let n = iters.unwrap_or(cfg.ihpr.max_iters);
            let (wave, _) = griffin_lim(&mag, n, cfg.seed);
            wave
        }
        other => bail!("unknown vocoder {other:?} (use ihpr or griffinlim)"),
    };
    let clipped = write_wav(out_wav, &wave)?;
    cfg.echo_into(&out_dir)?;
    println!(
        "wrote {} samples at {} Hz to {} ({clipped} clipped)",
        wave.len(),
        wave.fs,
        out_wav.display()
    );
    Ok(())
}

pub fn cmd_eval(ref_path: &Path, hyp_path: &Path, report_path: &Path, cfg: &PipelineConfig) -> Result<()> {
    let reference = read_wav::<f64>(ref_path)?;
    let hypothesis = read_wav::<f64>(hyp_path)?;
    if (reference.fs - hypothesis.fs).abs() > 1e-9 {
        bail!(
            "sample rate mismatch: {} vs {} Hz",
            reference.fs,
            hypothesis.fs
        );
    }
    let len_ref = reference.len();
    let len_hyp = hypothesis.len();
    let max_len = len_ref.max(len_hyp);
    if (len_ref as f64 - len_hyp as f64).abs() > 0.1 * max_len as f64 {
        bail!("length mismatch above 10%: {len_ref} vs {len_hyp} samples");
    }
    let common = len_ref.min(len_hyp);
    let a = Waveform {
        samples: reference.samples[..common].to_vec(),
        fs: reference.fs,
    };
    let b = Waveform {
        samples: hypothesis.samples[..common].to_vec(),
        fs: hypothesis.fs,
    };
    let (mel_a, _) = audio_log_mel(&a, cfg)?;
    let (mel_b, _) = audio_log_mel(&b, cfg)?;
    let pearson = pearson_spectrogram(&mel_a, &mel_b)?;
    let mcd_db = mcd(&mel_a, &mel_b, 13)?;
    // HNR of the hypothesis waveform, probed at the reference's pitch lags
    // (the reference spectrogram gives the cleaner track; a hypothesis that
    // misses the pitch scores low exactly as it should).
    let mut grid = cfg.stft.grid()?;
    grid.fs = a.fs;
    let ref_mag = stft(&a, &grid)?.magnitude();
    let track = f0_from_spectrogram(&ref_mag);
    let hnr_db = hnr(&b, &track).ok();
    let report = EvalReport {
        pearson_mean: pearson.mean,
        pearson_per_bin: pearson.per_bin.clone(),
        mcd_db,
        hnr_db,
        n_frames_compared: mel_a.frames,
        n_bins_used: pearson.used_bins,
    };
    if let Some(dir) = report_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!(
        "pearson {:.4}, mcd {:.3} dB, hnr {}",
        report.pearson_mean,
        report.mcd_db,
        report
            .hnr_db
            .map(|h| format!("{h:.2} dB"))
            .unwrap_or_else(|| "n/a".to_string())
    );
    Ok(())
}

/// Re-export for the test suite: transform-only normalization with stored
/// stats.
#[allow(dead_code)]
pub fn stats_from_file(path: &Path) -> Result<NormStats<f64>> {
    let text = std::fs::read_to_string(path)?;
    let parsed: StatsFile = serde_json::from_str(&text)?;
    Ok(NormStats {
        mean: parsed.mean,
        std: parsed.std,
        constant: parsed.constant,
    })
}
