//! Pipeline command line: synthetic sessions, feature extraction, training,
//! synthesis, and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::PipelineConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mistr",
    about = "iEEG-to-speech pipeline: features, spectrogram prediction, harmonic phase vocoding",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic session (iEEG + audio + truth).
    GenSynthetic {
        /// Output session directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Session length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Number of iEEG channels.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Preprocess a session and write the normalized feature matrix.
    ExtractFeatures {
        /// Session directory (from gen-synthetic or converted data).
        #[arg(long)]
        session: PathBuf,
        /// Output feature file (f32 matrix + JSON sidecar).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the autoencoder and transformer against target audio.
    Train {
        /// Feature matrix from extract-features.
        #[arg(long)]
        features: PathBuf,
        /// Target audio (PCM16 mono WAV).
        #[arg(long)]
        audio: PathBuf,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also run k-fold cross-validation and emit per-fold metrics.
        #[arg(long)]
        kfold: bool,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize a waveform from features with a trained model.
    Synth {
        #[arg(long)]
        features: PathBuf,
        /// Model directory from train.
        #[arg(long)]
        model: PathBuf,
        /// Output WAV path.
        #[arg(long)]
        out: PathBuf,
        /// Vocoder: ihpr or griffinlim.
        #[arg(long, default_value = "ihpr")]
        vocoder: String,
        /// Vocoder iterations (0 with ihpr synthesizes from the harmonic
        /// initialization alone).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two waveforms and write an evaluation report.
    Eval {
        /// Reference WAV.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Hypothesis WAV.
        #[arg(long)]
        hyp: PathBuf,
        /// Output JSON report.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynthetic {
            out,
            config,
            seed,
            duration,
            channels,
        } => {
            let cfg = PipelineConfig::load(config.as_deref())?;
            commands::cmd_gen_synthetic(&out, &cfg, seed, duration, channels)
        }
        Command::ExtractFeatures {
            session,
            out,
            config,
        } => {
            let cfg = PipelineConfig::load(config.as_deref())?;
            commands::cmd_extract_features(&session, &out, &cfg)
        }
        Command::Train {
            features,
            audio,
            out,
            config,
            kfold,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            commands::cmd_train(&features, &audio, &out, &cfg, kfold)
        }
        Command::Synth {
            features,
            model,
            out,
            vocoder,
            iters,
            config,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            commands::cmd_synth(&features, &model, &out, &cfg, &vocoder, iters)
        }
        Command::Eval {
            reference,
            hyp,
            report,
            config,
        } => {
            let cfg = PipelineConfig::load(config.as_deref())?;
            commands::cmd_eval(&reference, &hyp, &report, &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path too.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("usage error: {}", single_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", single_line(&format!("{e:#}")));
            ExitCode::from(2)
        }
    }
}

fn single_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}
