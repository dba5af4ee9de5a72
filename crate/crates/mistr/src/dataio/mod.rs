//! File formats, session container, marker alignment, and the deterministic
//! synthetic-session generator that substitutes for clinical data at desk
//! scale.
//!
//! On-disk formats:
//! - matrices: raw little-endian f32 body plus a JSON sidecar
//!   `{rows, cols, fs, labels, dtype: "f32le"}` at `<path>.json`;
//! - audio: RIFF/WAVE, 16-bit PCM mono.
//!
//! Bulk storage is f32; computation upstream is f64.

mod matrix;
mod session;
mod synthetic;
mod wav;

pub use matrix::{read_matrix, write_matrix, MatrixSidecar};
pub use session::{align_by_markers, Marker, Session};
pub use synthetic::{generate_synthetic_session, SyntheticConfig, SyntheticTruth};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};
use crate::Scalar;

/// iEEG channel matrix with stimulus markers.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecording<T> {
    /// Row-major channels x samples.
    pub data: Vec<T>,
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs: f64,
    pub labels: Vec<String>,
    /// Sorted by sample index.
    pub markers: Vec<Marker>,
}

impl<T: Scalar> MultichannelRecording<T> {
    /// Build from per-channel sample vectors; all channels must have equal
    /// length. Markers are sorted by sample index.
    pub fn from_channels(
        channels: Vec<Vec<T>>,
        fs: f64,
        mut markers: Vec<Marker>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("recording needs at least one channel"));
        }
        let n_samples = channels[0].len();
        if channels.iter().any(|c| c.len() != n_samples) {
            return Err(Error::invalid("channels differ in length"));
        }
        if !(fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
        }
        markers.sort_by_key(|m| m.sample);
        let n_channels = channels.len();
        let mut data = Vec::with_capacity(n_channels * n_samples);
        for c in &channels {
            data.extend_from_slice(c);
        }
        let labels = (0..n_channels).map(|i| format!("ch{i}")).collect();
        Ok(MultichannelRecording {
            data,
            n_channels,
            n_samples,
            fs,
            labels,
            markers,
        })
    }

    pub fn channels(&self) -> usize {
        self.n_channels
    }

    pub fn samples_per_channel(&self) -> usize {
        self.n_samples
    }

    pub fn channel(&self, i: usize) -> &[T] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.fs
    }

    /// Crop to samples [start, start + len).
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples {
            return Err(Error::invalid(format!(
                "crop [{start}, {}) exceeds recording length {}",
                start + len,
                self.n_samples
            )));
        }
        let mut data = Vec::with_capacity(self.n_channels * len);
        for ch in 0..self.n_channels {
            data.extend_from_slice(&self.channel(ch)[start..start + len]);
        }
        let markers = self
            .markers
            .iter()
            .filter(|m| m.sample >= start && m.sample < start + len)
            .map(|m| Marker {
                sample: m.sample - start,
                label: m.label.clone(),
            })
            .collect();
        Ok(MultichannelRecording {
            data,
            n_channels: self.n_channels,
            n_samples: len,
            fs: self.fs,
            labels: self.labels.clone(),
            markers,
        })
    }
}
