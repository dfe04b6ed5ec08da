use std::io::{Read, Write};

use super::{Model, ModelMeta};
use crate::error::{Error, Result};
use crate::neural::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSTN";
const VERSION: u32 = 1;

fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Layout: magic, version `u32`, config hash `u64`, block count `u32`, then
/// per block: name length `u32`, UTF-8 name, rank `u32`, extents `u32`,
/// values `f64`. All little-endian.
pub fn write_params<W: Write>(mut w: W, store: &ParamStore, config_hash: u64) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&config_hash.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads values into a store with the same parameter names and shapes.
pub fn read_params<R: Read>(mut r: R, store: &mut ParamStore, config_hash: u64) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32_le(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut hb = [0u8; 8];
    r.read_exact(&mut hb)?;
    let hash = u64::from_le_bytes(hb);
    if hash != config_hash {
        return Err(Error::config(format!(
            "checkpoint was written for config {hash:016x}, model has {config_hash:016x}"
        )));
    }
    let count = u32_le(&mut r)? as usize;
    if count != store.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, model has {}",
            store.len()
        )));
    }
    for _ in 0..count {
        let len = u32_le(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = u32_le(&mut r)? as usize;
        let shape = (0..rank).map(|_| u32_le(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0; numel];
        let mut b = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let id = store
            .find(&name)
            .ok_or_else(|| Error::Format(format!("unknown parameter {name:?} in checkpoint")))?;
        let p = store.get_mut(id);
        if p.value.shape() != shape.as_slice() {
            return Err(Error::Format(format!(
                "parameter {name:?} has shape {shape:?}, model expects {:?}",
                p.value.shape()
            )));
        }
        p.value = Tensor::new(&shape, data)?;
    }
    Ok(())
}

impl Model {
    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        write_params(w, &self.store, self.config().architecture_hash())
    }

    pub fn read_checkpoint<R: Read>(&mut self, r: R) -> Result<()> {
        let hash = self.config().architecture_hash();
        read_params(r, &mut self.store, hash)
    }

    pub fn meta_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Format(e.to_string()))
    }
}

impl ModelMeta {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
