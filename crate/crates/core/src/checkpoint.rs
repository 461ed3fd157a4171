//! Binary parameter snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SPGNNCK1"
//! u32 metadata length, UTF-8 `key=value` lines
//! u32 parameter count
//! per parameter: u32 name length, name, u64 rows, u64 cols, rows·cols f64
//! ```
//!
//! Values are stored bit-exactly, so a restored model reproduces the
//! original's outputs exactly.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SPGNNCK1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, meta: Vec<(String, String)>) -> Self {
        Self {
            meta,
            params: store
                .iter()
                .map(|p| (p.name().to_string(), p.value().clone()))
                .collect(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copies values into `store`, which must hold exactly the same names
    /// in the same order with the same shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for ((name, value), id) in self.params.iter().zip(store.ids().collect::<Vec<_>>()) {
            let p = store.get_mut(id);
            if p.name() != name {
                return Err(Error::Contract(format!(
                    "checkpoint parameter `{name}` where the model expects `{}`",
                    p.name()
                )));
            }
            if p.value().shape() != value.shape() {
                return Err(Error::Contract(format!(
                    "parameter `{name}`: checkpoint shape {:?}, model shape {:?}",
                    value.shape(),
                    p.value().shape()
                )));
            }
            p.value_mut().data_mut().copy_from_slice(value.data());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let meta: String = self
            .meta
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Contract(format!("corrupt checkpoint: {what}"));
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let meta_len = read_u32(&mut r).map_err(|_| corrupt("truncated metadata"))? as usize;
        let meta_bytes = take(&mut r, meta_len).map_err(|_| corrupt("truncated metadata"))?;
        let meta_text =
            std::str::from_utf8(meta_bytes).map_err(|_| corrupt("metadata is not UTF-8"))?;
        let meta = meta_text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| corrupt("metadata line without `=`"))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = read_u32(&mut r).map_err(|_| corrupt("truncated parameter count"))? as usize;
        let mut params = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = read_u32(&mut r).map_err(|_| corrupt("truncated name"))? as usize;
            let name = take(&mut r, name_len).map_err(|_| corrupt("truncated name"))?;
            let name =
                String::from_utf8(name.to_vec()).map_err(|_| corrupt("name is not UTF-8"))?;
            let rows = read_u64(&mut r).map_err(|_| corrupt("truncated shape"))? as usize;
            let cols = read_u64(&mut r).map_err(|_| corrupt("truncated shape"))? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| corrupt("shape overflow"))?;
            if n.checked_mul(8).is_none_or(|b| b > r.len()) {
                return Err(corrupt("truncated values"));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)
                    .map_err(|_| corrupt("truncated values"))?;
                data.push(f64::from_le_bytes(b));
            }
            params.push((name, Tensor::new(rows, cols, data)?));
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_bytes(&bytes)
    }
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> io::Result<&'a [u8]> {
    if r.len() < n {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_u32(r: &mut &[u8]) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
