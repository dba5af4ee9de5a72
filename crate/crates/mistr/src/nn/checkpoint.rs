//! Model checkpoint files.
//!
//! Little-endian binary layout:
//!
//! ```text
//! magic   4 bytes  "MSTR"
//! version u32      1
//! kind    u32      1 = autoencoder, 2 = transformer
//! n_cfg   u32      number of u32 config values
//! cfg     u32 * n_cfg
//!   autoencoder: [in_dim, hidden, latent]
//!   transformer: [latent_dim, d_model, n_heads, n_layers, d_ff, n_mels,
//!                 max_seq, overlap]
//! n_params u64     total f64 count
//! params  f64 * n_params, tensors in declaration order
//! ```
//!
//! A JSON sidecar of hyperparameters is written next to the binary at
//! `<path>.json`.

use crate::error::{Error, Result};
use crate::nn::autoencoder::{AutoencoderConfig, AutoencoderParams};
use crate::nn::transformer::{TransformerConfig, TransformerParams};
use crate::nn::Tensor2;
use crate::rng::Rng;
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"MSTR";
const VERSION: u32 = 1;
const KIND_AUTOENCODER: u32 = 1;
const KIND_TRANSFORMER: u32 = 2;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    kind: String,
    version: u32,
    config: serde_json::Value,
    n_params: u64,
}

fn write_file(
    path: &Path,
    kind: u32,
    cfg_values: &[u32],
    tensors: &[&Tensor2<impl Scalar>],
    sidecar_cfg: serde_json::Value,
    kind_name: &str,
) -> Result<()> {
    let n_params: u64 = tensors.iter().map(|t| t.data.len() as u64).sum();
    let mut bytes = Vec::with_capacity(20 + cfg_values.len() * 4 + n_params as usize * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&kind.to_le_bytes());
    bytes.extend_from_slice(&(cfg_values.len() as u32).to_le_bytes());
    for v in cfg_values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&n_params.to_le_bytes());
    for t in tensors {
        for v in &t.data {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    let sidecar = Sidecar {
        kind: kind_name.to_string(),
        version: VERSION,
        config: sidecar_cfg,
        n_params,
    };
    let mut sc_path = path.as_os_str().to_os_string();
    sc_path.push(".json");
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    fs::write(&sc_path, json)
        .map_err(|e| Error::io(sc_path.to_string_lossy().into_owned(), e))?;
    Ok(())
}

struct Reader {
    bytes: Vec<u8>,
    pos: usize,
    path: String,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated checkpoint (need {} bytes at offset {}, have {})",
                self.path,
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn f64_into<T: Scalar>(&mut self, out: &mut [T]) -> Result<()> {
        let b = self.take(out.len() * 8)?;
        for (i, v) in out.iter_mut().enumerate() {
            let mut a = [0u8; 8];
            a.copy_from_slice(&b[i * 8..(i + 1) * 8]);
            *v = T::cast(f64::from_le_bytes(a));
        }
        Ok(())
    }
}

fn open(path: &Path, expect_kind: u32) -> Result<(Reader, Vec<u32>, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader {
        bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "{}: checkpoint version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let kind = r.u32()?;
    if kind != expect_kind {
        return Err(Error::Format(format!(
            "{}: checkpoint kind {kind}, expected {expect_kind}",
            path.display()
        )));
    }
    let n_cfg = r.u32()? as usize;
    let mut cfg = Vec::with_capacity(n_cfg);
    for _ in 0..n_cfg {
        cfg.push(r.u32()?);
    }
    let n_params = r.u64()?;
    Ok((r, cfg, n_params))
}

pub fn save_autoencoder<T: Scalar>(path: &Path, p: &AutoencoderParams<T>) -> Result<()> {
    let cfg = [
        p.cfg.in_dim as u32,
        p.cfg.hidden as u32,
        p.cfg.latent as u32,
    ];
    let sidecar = serde_json::json!({
        "in_dim": p.cfg.in_dim,
        "hidden": p.cfg.hidden,
        "latent": p.cfg.latent,
    });
    write_file(path, KIND_AUTOENCODER, &cfg, &p.tensors(), sidecar, "autoencoder")
}

pub fn load_autoencoder<T: Scalar>(path: &Path) -> Result<AutoencoderParams<T>> {
    let (mut r, cfg, n_params) = open(path, KIND_AUTOENCODER)?;
    if cfg.len() != 3 {
        return Err(Error::Format(format!(
            "{}: autoencoder config needs 3 values, found {}",
            path.display(),
            cfg.len()
        )));
    }
    let arch = AutoencoderConfig {
        in_dim: cfg[0] as usize,
        hidden: cfg[1] as usize,
        latent: cfg[2] as usize,
    };
    let mut params = AutoencoderParams::init(arch, &mut Rng::new(0));
    let expect: u64 = params.tensors().iter().map(|t| t.data.len() as u64).sum();
    if n_params != expect {
        return Err(Error::Format(format!(
            "{}: {n_params} parameters stored, architecture needs {expect}",
            path.display()
        )));
    }
    for t in params.tensors_mut() {
        r.f64_into(&mut t.data)?;
    }
    Ok(params)
}

pub fn save_transformer<T: Scalar>(path: &Path, p: &TransformerParams<T>) -> Result<()> {
    let c = &p.cfg;
    let cfg = [
        c.latent_dim as u32,
        c.d_model as u32,
        c.n_heads as u32,
        c.n_layers as u32,
        c.d_ff as u32,
        c.n_mels as u32,
        c.max_seq as u32,
        c.overlap as u32,
    ];
    let sidecar = serde_json::json!({
        "latent_dim": c.latent_dim,
        "d_model": c.d_model,
        "n_heads": c.n_heads,
        "n_layers": c.n_layers,
        "d_ff": c.d_ff,
        "n_mels": c.n_mels,
        "max_seq": c.max_seq,
        "overlap": c.overlap,
    });
    write_file(path, KIND_TRANSFORMER, &cfg, &p.tensors(), sidecar, "transformer")
}

pub fn load_transformer<T: Scalar>(path: &Path) -> Result<TransformerParams<T>> {
    let (mut r, cfg, n_params) = open(path, KIND_TRANSFORMER)?;
    if cfg.len() != 8 {
        return Err(Error::Format(format!(
            "{}: transformer config needs 8 values, found {}",
            path.display(),
            cfg.len()
        )));
    }
    let arch = TransformerConfig {
        latent_dim: cfg[0] as usize,
        d_model: cfg[1] as usize,
        n_heads: cfg[2] as usize,
        n_layers: cfg[3] as usize,
        d_ff: cfg[4] as usize,
        n_mels: cfg[5] as usize,
        max_seq: cfg[6] as usize,
        overlap: cfg[7] as usize,
    };
    let mut params = TransformerParams::init(arch, &mut Rng::new(0))?;
    let expect: u64 = params.tensors().iter().map(|t| t.data.len() as u64).sum();
    if n_params != expect {
        return Err(Error::Format(format!(
            "{}: {n_params} parameters stored, architecture needs {expect}",
            path.display()
        )));
    }
    for t in params.tensors_mut() {
        r.f64_into(&mut t.data)?;
    }
    Ok(params)
}
