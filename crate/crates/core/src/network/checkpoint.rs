//! Model checkpoint format: magic `ESAI`, a `u32` version, a JSON manifest of
//! the architecture, then layer-ordered little-endian `f32` parameter blocks.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::float::{fl, to_f64, Real};

use super::spec::NetworkSpec;
use super::HybridNetwork;

const MAGIC: &[u8; 4] = b"ESAI";
const VERSION: u32 = 1;

/// Serialize a network to checkpoint bytes. Parameters are stored as `f32`
/// regardless of the in-memory scalar type.
pub fn format_checkpoint<F: Real>(net: &HybridNetwork<F>) -> Vec<u8> {
    let manifest = serde_json::to_vec(net.spec()).expect("spec serializes");
    let mut out = Vec::with_capacity(12 + manifest.len() + net.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    net.visit_params(&mut |block| {
        for &v in block {
            out.extend_from_slice(&(to_f64(v) as f32).to_le_bytes());
        }
    });
    out
}

pub fn save_checkpoint<F: Real>(net: &HybridNetwork<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_checkpoint(net))?;
    Ok(())
}

/// Rebuild a network from checkpoint bytes.
pub fn parse_checkpoint<F: Real>(bytes: &[u8]) -> Result<HybridNetwork<F>> {
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("checkpoint: bad magic or truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint: unsupported version {version}")));
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let manifest = bytes
        .get(12..12 + manifest_len)
        .ok_or_else(|| Error::Format("checkpoint: truncated manifest".into()))?;
    let spec: NetworkSpec = serde_json::from_slice(manifest)
        .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
    let mut net = HybridNetwork::build(spec)?;

    let raw = &bytes[12 + manifest_len..];
    let expected = net.param_count() * 4;
    if raw.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint: expected {expected} parameter bytes, got {}",
            raw.len()
        )));
    }
    let values: Vec<F> = raw
        .chunks_exact(4)
        .map(|c| fl::<F>(f64::from(f32::from_le_bytes(c.try_into().unwrap()))))
        .collect();
    net.set_params_flat(&values)?;
    Ok(net)
}

pub fn load_checkpoint<F: Real>(path: impl AsRef<Path>) -> Result<HybridNetwork<F>> {
    parse_checkpoint(&fs::read(path.as_ref())?)
}
