//! Network checkpoints: a JSON map or a compact little-endian binary layout.
//!
//! Binary layout (all integers little-endian):
//! `b"SPGN"`, `u32` version, `u32` layer count `L`, `L` x `u32` layer widths,
//! `L-1` activation bytes, `u64` parameter count, then the parameters as `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, DenseNet, Differentiable};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SPGN";

#[derive(Serialize, Deserialize)]
struct JsonCheckpoint {
    version: u32,
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

pub fn to_json(net: &DenseNet) -> Result<String> {
    let ck = JsonCheckpoint {
        version: CHECKPOINT_VERSION,
        layer_dims: net.layer_dims().to_vec(),
        activations: net.activations().to_vec(),
        params: net.params().to_vec(),
    };
    Ok(serde_json::to_string(&ck)?)
}

pub fn from_json(text: &str) -> Result<DenseNet> {
    let ck: JsonCheckpoint = serde_json::from_str(text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
    }
    DenseNet::new(ck.layer_dims, ck.activations, ck.params)
}

pub fn to_bytes(net: &DenseNet) -> Vec<u8> {
    let dims = net.layer_dims();
    let mut out = Vec::with_capacity(16 + dims.len() * 4 + net.params().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(net.activations().iter().map(|a| a.code()));
    out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<DenseNet> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_layers = r.u32()? as usize;
    let dims = (0..n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let acts = r
        .take(n_layers.saturating_sub(1))?
        .iter()
        .map(|&c| Activation::from_code(c).ok_or_else(|| Error::Checkpoint(format!("unknown activation {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let n_params = r.u64()? as usize;
    let params = r
        .take(n_params * 8)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    DenseNet::new(dims, acts, params)
}

/// Writes JSON for `.json` paths, binary otherwise.
pub fn save(net: &DenseNet, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        std::fs::write(path, to_json(net)?)?;
    } else {
        std::fs::write(path, to_bytes(net))?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<DenseNet> {
    if path.extension().is_some_and(|e| e == "json") {
        from_json(&std::fs::read_to_string(path)?)
    } else {
        from_bytes(&std::fs::read(path)?)
    }
}
