//! Binary weights file.
//!
//! All integers are little-endian `u32`, all reals little-endian `f32`:
//!
//! ```text
//! "RDNW" | version | D | C | width | trained_sigma (f32)
//! | run_id length | run_id UTF-8 bytes
//! | for each tensor: rank | dims[rank] | payload (f32 × Π dims)
//! ```
//!
//! Tensors follow [`RdnModel::tensors`] order: `sfe1`, `sfe2`, then per block
//! `conv0..conv{C-1}`, `fusion`, then `gff`, `output`; weight (rank 4,
//! `[out, in, k, k]`) before bias (rank 1, `[out]`) for each convolution.

use std::fs;
use std::path::Path;

use super::{ModelMeta, RdnConfig, RdnModel};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"RDNW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn save_weights(model: &RdnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<RdnModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub(crate) fn encode(model: &RdnModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::with_capacity(64 + model.parameter_count() * 4);
    out.extend_from_slice(WEIGHTS_MAGIC);
    let cfg = model.config;
    for v in [WEIGHTS_VERSION, cfg.blocks as u32, cfg.layers as u32, cfg.width as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.meta.trained_sigma.to_le_bytes());
    let id = model.meta.run_id.as_bytes();
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    for (_, conv) in model.convs() {
        let k = conv.kernel_size as u32;
        write_tensor(
            &mut out,
            &[conv.out_channels as u32, conv.in_channels as u32, k, k],
            &conv.weight,
        );
        write_tensor(&mut out, &[conv.out_channels as u32], &conv.bias);
    }
    Ok(out)
}

fn write_tensor(out: &mut Vec<u8>, dims: &[u32], values: &[f32]) {
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "weights file truncated while reading {what}"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<RdnModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format("not an RDN weights file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "unsupported weights version {version}"
        )));
    }
    let config = RdnConfig {
        blocks: r.u32("D")? as usize,
        layers: r.u32("C")? as usize,
        width: r.u32("width")? as usize,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("bad network shape: {e}")))?;
    // Reject absurd headers before allocating.
    if super::parameter_count(&config) * 4 > bytes.len() {
        return Err(Error::Format(format!(
            "weights file too short for D={} C={} width={}",
            config.blocks, config.layers, config.width
        )));
    }
    let trained_sigma = r.f32("trained_sigma")?;
    let id_len = r.u32("run id length")? as usize;
    let run_id = std::str::from_utf8(r.take(id_len, "run id")?)
        .map_err(|_| Error::Format("run id is not UTF-8".into()))?
        .to_string();

    let mut model = RdnModel::zeros(config)?;
    model.meta = ModelMeta {
        trained_sigma,
        run_id,
    };
    for (index, tensor) in model.tensors_mut().into_iter().enumerate() {
        let rank = r.u32("tensor rank")? as usize;
        if rank != 1 && rank != 4 {
            return Err(Error::Format(format!("tensor {index} has rank {rank}")));
        }
        let mut count = 1usize;
        for _ in 0..rank {
            count = count.saturating_mul(r.u32("tensor dims")? as usize);
        }
        if count != tensor.len() {
            return Err(Error::Format(format!(
                "tensor {index} holds {count} values, expected {}",
                tensor.len()
            )));
        }
        let payload = r.take(count * 4, "tensor payload")?;
        for (dst, src) in tensor.iter_mut().zip(payload.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    model
        .validate()
        .map_err(|e| Error::Format(format!("inconsistent weights: {e}")))?;
    Ok(model)
}
