use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"CMVT";
pub const FORMAT_VERSION: u32 = 1;

/// Serialises every parameter, in store order, as little-endian records.
pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.at)));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses records into `(name, tensor)` pairs.
pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut out = Vec::new();
    while r.at < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        let n = n.ok_or_else(|| Error::Checkpoint(format!("`{name}` extents overflow")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

/// Overwrites `store` with decoded values. Names, order and shapes must
/// match exactly.
pub fn restore_params(store: &mut ParamStore, bytes: &[u8]) -> Result<()> {
    let records = decode_params(bytes)?;
    if records.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "{} parameters in file, model has {}",
            records.len(),
            store.len()
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for ((name, t), id) in records.iter().zip(&ids) {
        if store.name(*id) != name {
            return Err(Error::Checkpoint(format!(
                "expected parameter `{}`, found `{name}`",
                store.name(*id)
            )));
        }
        if store.get(*id).shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {:?} in file, {:?} in model",
                t.shape(),
                store.get(*id).shape()
            )));
        }
    }
    for ((_, t), id) in records.into_iter().zip(ids) {
        *store.get_mut(id) = t;
    }
    Ok(())
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode_params(store))?;
    Ok(())
}

pub fn load_params(store: &mut ParamStore, path: &Path) -> Result<()> {
    restore_params(store, &fs::read(path)?)
}
