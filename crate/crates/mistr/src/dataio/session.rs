//! Session container and marker alignment.

use crate::dataio::MultichannelRecording;
use crate::error::{Error, Result};
use crate::sigproc::Waveform;
use crate::Scalar;
use serde::{Deserialize, Serialize};

/// Stimulus marker: a sample index in the recording with a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub sample: usize,
    pub label: String,
}

/// Aligned neural recording + audio pair.
#[derive(Debug, Clone)]
pub struct Session<T> {
    pub recording: MultichannelRecording<T>,
    pub audio: Waveform<T>,
    /// Offset of audio start within the original recording, in recording
    /// samples.
    pub offset_samples: usize,
    pub subject_id: String,
    pub seed: u64,
}

impl<T: Scalar> Session<T> {
    /// Audio duration must stay within 1% of the recording duration.
    pub fn check_alignment(&self) -> Result<()> {
        let rec_s = self.recording.duration_s();
        let audio_s = self.audio.duration_s();
        if (rec_s - audio_s).abs() > 0.01 * rec_s.max(audio_s) {
            return Err(Error::invalid(format!(
                "recording spans {rec_s:.3} s but audio spans {audio_s:.3} s"
            )));
        }
        Ok(())
    }
}

/// Align a recording to audio that starts at the first marker carrying
/// `marker_label`: the recording is cropped from that marker and both
/// streams are cut to the common duration.
pub fn align_by_markers<T: Scalar>(
    rec: &MultichannelRecording<T>,
    audio: &Waveform<T>,
    marker_label: &str,
) -> Result<Session<T>> {
    let marker = rec
        .markers
        .iter()
        .find(|m| m.label == marker_label)
        .ok_or_else(|| Error::invalid(format!("no marker labeled {marker_label:?}")))?;
    if marker.sample >= rec.n_samples {
        return Err(Error::invalid(format!(
            "marker at sample {} lies beyond the recording ({} samples)",
            marker.sample, rec.n_samples
        )));
    }
    let offset = marker.sample;
    let rec_remaining_s = (rec.n_samples - offset) as f64 / rec.fs;
    let common_s = rec_remaining_s.min(audio.duration_s());
    let rec_len = (common_s * rec.fs).floor() as usize;
    let audio_len = (common_s * audio.fs).floor() as usize;
    let recording = rec.crop(offset, rec_len)?;
    let audio = Waveform {
        samples: audio.samples[..audio_len].to_vec(),
        fs: audio.fs,
    };
    Ok(Session {
        recording,
        audio,
        offset_samples: offset,
        subject_id: String::new(),
        seed: 0,
    })
}
