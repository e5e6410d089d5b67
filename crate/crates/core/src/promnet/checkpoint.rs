//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//! `PROMCKPT`, u32 version, u64 config length, config JSON, u64 array count,
//! then per array: u32 name length, name bytes, u32 rank, u64 per dim, f64
//! values in row-major order.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::config::ModelConfig;
use super::model::Model;
use super::params::Params;
use super::tensor::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PROMCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint(model: &Model, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&model.config)?;
    w.write_all(&(cfg.len() as u64).to_le_bytes())?;
    w.write_all(&cfg)?;
    w.write_all(&(model.params.arrays.len() as u64).to_le_bytes())?;
    for (name, m) in &model.params.arrays {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(m.rows as u64).to_le_bytes())?;
        w.write_all(&(m.cols as u64).to_le_bytes())?;
        for v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(model, &mut out).expect("writing to memory");
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated file: {e}")))?;
    Ok(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_vec(r: &mut impl Read, len: u64, limit: u64) -> Result<Vec<u8>> {
    if len > limit {
        return Err(bad(format!("block of {len} bytes exceeds limit {limit}")));
    }
    let mut v = vec![0u8; len as usize];
    r.read_exact(&mut v).map_err(|e| bad(format!("truncated file: {e}")))?;
    Ok(v)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Model> {
    let magic: [u8; 8] = read_exact(r)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic bytes)"));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u64(r)?;
    let cfg_bytes = read_vec(r, len, 1 << 20)?;
    let config: ModelConfig =
        serde_json::from_slice(&cfg_bytes).map_err(|e| bad(format!("config block: {e}")))?;
    let count = read_u64(r)?;
    let mut arrays = BTreeMap::new();
    for _ in 0..count {
        let nlen = read_u32(r)?;
        let name = String::from_utf8(read_vec(r, nlen as u64, 4096)?)
            .map_err(|_| bad("array name is not UTF-8"))?;
        let rank = read_u32(r)?;
        if rank == 0 || rank > 2 {
            return Err(bad(format!("`{name}` has unsupported rank {rank}")));
        }
        let dims: Vec<u64> = (0..rank).map(|_| read_u64(r)).collect::<Result<_>>()?;
        let (rows, cols) = if rank == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let total = rows
            .checked_mul(cols)
            .filter(|&t| t <= 1 << 32)
            .ok_or_else(|| bad(format!("`{name}` is too large")))?;
        let raw = read_vec(r, total * 8, 1 << 35)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if arrays
            .insert(name.clone(), Mat::from_vec(rows as usize, cols as usize, data))
            .is_some()
        {
            return Err(bad(format!("duplicate array `{name}`")));
        }
    }
    Model::from_parts(config, Params { arrays })
}
