//! Raw f32 matrix files with JSON sidecar headers.

use crate::error::{Error, Result};
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Sidecar header stored at `<path>.json`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixSidecar {
    pub rows: usize,
    pub cols: usize,
    pub fs: f64,
    pub labels: Vec<String>,
    pub dtype: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// Write a row-major matrix as little-endian f32 with a JSON sidecar.
/// Round trips are value-exact at 32-bit precision.
pub fn write_matrix<T: Scalar>(
    path: &Path,
    values: &[T],
    rows: usize,
    cols: usize,
    fs: f64,
    labels: &[String],
) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::invalid(format!(
            "matrix body has {} values, header says {rows}x{cols}",
            values.len()
        )));
    }
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    let sidecar = MatrixSidecar {
        rows,
        cols,
        fs,
        labels: labels.to_vec(),
        dtype: "f32le".to_string(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization: {e}")))?;
    let sc = sidecar_path(path);
    fs::write(&sc, json).map_err(|e| Error::io(sc.display().to_string(), e))?;
    Ok(())
}

/// Read a matrix written by [`write_matrix`]. The body length must match the
/// sidecar exactly; mismatches are reported with byte counts.
pub fn read_matrix<T: Scalar>(path: &Path) -> Result<(Vec<T>, MatrixSidecar)> {
    let sc = sidecar_path(path);
    let header = fs::read_to_string(&sc).map_err(|e| Error::io(sc.display().to_string(), e))?;
    let sidecar: MatrixSidecar = serde_json::from_str(&header)
        .map_err(|e| Error::Format(format!("sidecar {}: {e}", sc.display())))?;
    if sidecar.dtype != "f32le" {
        return Err(Error::UnsupportedFormat(format!(
            "matrix dtype {:?} (only f32le is supported)",
            sidecar.dtype
        )));
    }
    let body = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let expected = sidecar.rows * sidecar.cols * 4;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "matrix body {}: expected {expected} bytes ({}x{} f32), found {}",
            path.display(),
            sidecar.rows,
            sidecar.cols,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| T::cast(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Ok((values, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("mistr-matrix-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_exact_at_f32() {
        let dir = tmpdir("rt");
        let path = dir.join("m.f32");
        let mut rng = Rng::new(1);
        let values: Vec<f64> = (0..12).map(|_| (rng.normal() as f32) as f64).collect();
        write_matrix(&path, &values, 3, 4, 1024.0, &["a".into()]).unwrap();
        let (back, sidecar) = read_matrix::<f64>(&path).unwrap();
        assert_eq!(back, values);
        assert_eq!(sidecar.rows, 3);
        assert_eq!(sidecar.cols, 4);
        assert_eq!(sidecar.fs, 1024.0);
        assert_eq!(sidecar.dtype, "f32le");
    }

    #[test]
    fn truncated_body_reports_byte_counts() {
        let dir = tmpdir("trunc");
        let path = dir.join("m.f32");
        write_matrix(&path, &[1.0f64, 2.0, 3.0, 4.0], 2, 2, 1.0, &[]).unwrap();
        let body = fs::read(&path).unwrap();
        fs::write(&path, &body[..body.len() - 4]).unwrap();
        let err = read_matrix::<f64>(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("16"), "missing expected byte count: {msg}");
        assert!(msg.contains("12"), "missing actual byte count: {msg}");
    }

    #[test]
    fn empty_matrix_round_trips() {
        let dir = tmpdir("empty");
        let path = dir.join("m.f32");
        write_matrix::<f64>(&path, &[], 0, 0, 1.0, &[]).unwrap();
        let (back, sidecar) = read_matrix::<f64>(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!((sidecar.rows, sidecar.cols), (0, 0));
    }

    #[test]
    fn shape_mismatch_rejected_on_write() {
        let dir = tmpdir("shape");
        let path = dir.join("m.f32");
        assert!(write_matrix(&path, &[1.0f64; 5], 2, 2, 1.0, &[]).is_err());
    }
}
