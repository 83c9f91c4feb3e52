//! Checkpoint file format.
//!
//! Layout (bit-exact round trip):
//! ```text
//! bytes 0..12   magic b"MMFUSECKPT1\n"
//! bytes 12..16  u32 LE: header length in bytes
//! ...           header JSON (mode, dims, seed, n_params, param_order)
//! ...           n_params × f64, little-endian, in parameter enumeration order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

use super::{FusionDims, FusionMode, FusionParams};

pub const CKPT_MAGIC: &[u8; 12] = b"MMFUSECKPT1\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub mode: FusionMode,
    pub dims: FusionDims,
    /// Seed the parameters were trained (or initialized) under.
    pub seed: u64,
    pub n_params: usize,
    pub param_order: Vec<String>,
}

/// Serializes parameters to the checkpoint byte format.
pub fn checkpoint_bytes(params: &FusionParams, seed: u64) -> Result<Vec<u8>> {
    let flat = params.to_flat();
    let header = CheckpointHeader {
        mode: params.mode,
        dims: params.dims,
        seed,
        n_params: flat.len(),
        param_order: params.param_order(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::json(Path::new("<checkpoint>"), e))?;
    let mut out = Vec::with_capacity(16 + header_json.len() + flat.len() * 8);
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8], origin: &Path) -> Result<(FusionParams, CheckpointHeader)> {
    let bad = |msg: &str| Error::parse(origin, None, msg);
    if bytes.len() < 16 || &bytes[..12] != CKPT_MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(bad("truncated checkpoint header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| Error::json(origin, e))?;
    let payload = &bytes[body_start..];
    if payload.len() != header.n_params * 8 {
        return Err(bad(&format!(
            "payload holds {} bytes, header declares {} parameters",
            payload.len(),
            header.n_params
        )));
    }
    let mut flat = Vec::with_capacity(header.n_params);
    for chunk in payload.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(bad("checkpoint contains a non-finite parameter"));
        }
        flat.push(v);
    }
    let params = FusionParams::from_flat(header.dims, header.mode, &flat)?;
    if params.param_order() != header.param_order {
        return Err(bad("parameter order in header does not match this layout"));
    }
    Ok((params, header))
}

pub fn save_checkpoint(params: &FusionParams, seed: u64, path: &Path) -> Result<()> {
    util::write_atomic(path, &checkpoint_bytes(params, seed)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(FusionParams, CheckpointHeader)> {
    checkpoint_from_bytes(&util::read_bytes(path)?, path)
}
