//! RIFF/WAVE reader and writer, 16-bit PCM mono only.

use crate::error::{Error, Result};
use crate::sigproc::Waveform;
use crate::Scalar;
use std::fs;
use std::path::Path;

/// Write a waveform as PCM16 mono. Samples are scaled by 32768 and
/// saturating-clipped; the number of clipped samples is returned.
pub fn write_wav<T: Scalar>(path: &Path, w: &Waveform<T>) -> Result<usize> {
    let n = w.len();
    let fs = w.fs.round() as u32;
    let data_bytes = (n * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + n * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&fs.to_le_bytes());
    bytes.extend_from_slice(&(fs * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_bytes.to_le_bytes());
    let mut clipped = 0usize;
    for s in &w.samples {
        let scaled = s.as_f64() * 32768.0;
        let q = if scaled > 32767.0 {
            clipped += 1;
            32767
        } else if scaled < -32768.0 {
            clipped += 1;
            -32768
        } else {
            scaled.round() as i16
        };
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(clipped)
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

/// Read a PCM16 mono WAV; samples are scaled to [-1, 1) by 1/32768.
pub fn read_wav<T: Scalar>(path: &Path) -> Result<Waveform<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }
    // Walk chunks for fmt and data.
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<(usize, usize)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(&bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::Format(format!(
                "{}: chunk {:?} overruns file ({} + {size} > {})",
                path.display(),
                String::from_utf8_lossy(id),
                body,
                bytes.len()
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format(format!("{}: short fmt chunk", path.display())));
                }
                fmt = Some((
                    read_u16(&bytes, body),
                    read_u16(&bytes, body + 2),
                    read_u32(&bytes, body + 4),
                    read_u16(&bytes, body + 14),
                ));
            }
            b"data" => data = Some((body, size)),
            _ => {}
        }
        pos = body + size + (size % 2);
    }
    let (format, channels, fs, bits) = fmt.ok_or_else(|| {
        Error::Format(format!("{}: missing fmt chunk", path.display()))
    })?;
    if format != 1 || channels != 1 || bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: need PCM16 mono, found format={format} channels={channels} bits={bits}",
            path.display()
        )));
    }
    let (body, size) = data.ok_or_else(|| {
        Error::Format(format!("{}: missing data chunk", path.display()))
    })?;
    let samples = bytes[body..body + size]
        .chunks_exact(2)
        .map(|c| T::cast(i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0))
        .collect();
    Ok(Waveform {
        samples,
        fs: fs as f64,
    })
}
