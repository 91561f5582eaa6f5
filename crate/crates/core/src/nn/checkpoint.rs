//! Network checkpoint files.
//!
//! ```text
//! "KCQL"            4 bytes
//! version           u32 LE (= 1)
//! manifest length   u64 LE
//! manifest          UTF-8 JSON
//! tensor data       f64 LE, tensors in manifest order, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"KCQL";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<Matrix>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.manifest
            .tensors
            .iter()
            .position(|t| t.name == name)
            .map(|i| &self.tensors[i])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.manifest.tensors.len() != self.tensors.len() {
            return Err(Error::DimMismatch(format!(
                "manifest lists {} tensors, {} supplied",
                self.manifest.tensors.len(),
                self.tensors.len()
            )));
        }
        for (entry, t) in self.manifest.tensors.iter().zip(&self.tensors) {
            if (entry.rows, entry.cols) != t.shape() {
                return Err(Error::DimMismatch(format!(
                    "tensor {} is {:?}, manifest says {:?}",
                    entry.name,
                    t.shape(),
                    (entry.rows, entry.cols)
                )));
            }
        }
        let manifest = serde_json::to_vec(&self.manifest)?;
        let floats: usize = self.tensors.iter().map(Matrix::len).sum();
        let mut out = Vec::with_capacity(16 + manifest.len() + 8 * floats);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in &self.tensors {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let magic: [u8; 4] = take(&mut cur, 4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = u32::from_le_bytes(take(&mut cur, 4, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let len = u64::from_le_bytes(take(&mut cur, 8, "manifest length")?.try_into().unwrap());
        let manifest: Manifest = serde_json::from_slice(take(&mut cur, len as usize, "manifest")?)?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            let n = entry.rows * entry.cols;
            let raw = take(&mut cur, 8 * n, "tensor data")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Matrix::from_vec(entry.rows, entry.cols, data)?);
        }
        if !cur.is_empty() {
            return Err(Error::DimMismatch(format!(
                "{} trailing bytes after tensor data",
                cur.len()
            )));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub(crate) fn take<'a>(cur: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::Truncated(what));
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Ok(head)
}
