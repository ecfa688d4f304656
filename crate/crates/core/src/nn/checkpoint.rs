//! `RUCK` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RUCK"            4 bytes
//! version           u32 (= 1)
//! block count       u32
//! per block:
//!   name length     u32
//!   name            UTF-8 bytes
//!   rows, cols      u32, u32
//!   values          rows*cols f64
//! metadata length   u64
//! metadata          UTF-8 JSON
//! ```
//!
//! Optimizer velocities are stored as ordinary blocks under the
//! `optimizer.velocity.<i>` names; epoch, metric history and optimizer
//! hyper-parameters live in the JSON metadata.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use super::{blocks, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RUCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub blocks: Vec<(String, Matrix)>,
    pub metadata: Value,
}

impl Checkpoint {
    pub fn new(metadata: Value) -> Self {
        Self {
            blocks: Vec::new(),
            metadata,
        }
    }

    /// Appends every block of `params` under `prefix`.
    pub fn push_params<P: Parameters>(&mut self, prefix: &str, params: &P) {
        let mut named = Vec::new();
        params.visit(prefix, &mut |name, m| named.push((name, m.clone())));
        self.blocks.extend(named);
    }

    pub fn push_block(&mut self, name: impl Into<String>, m: Matrix) {
        self.blocks.push((name.into(), m));
    }

    pub fn block(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Copies the blocks named `<prefix>.<param name>` into `params`; names and shapes must match exactly.
    pub fn load_params<P: Parameters>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let mut err = None;
        params.visit_mut(prefix, &mut |name, m| {
            if err.is_some() {
                return;
            }
            match self.block(&name) {
                None => err = Some(Error::Missing(format!("checkpoint block `{name}`"))),
                Some(src) if src.shape() != m.shape() => {
                    err = Some(Error::shape(
                        "checkpoint block",
                        format!("{name} {:?}", m.shape()),
                        format!("{:?}", src.shape()),
                    ))
                }
                Some(src) => *m = src.clone(),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn has_params<P: Parameters>(&self, prefix: &str, params: &P) -> bool {
        let mut names = Vec::new();
        params.visit(prefix, &mut |n, _| names.push(n));
        names.iter().all(|n| self.block(n).is_some())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for (name, m) in &self.blocks {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let meta = serde_json::to_vec(&self.metadata).map_err(std::io::Error::other)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |reason: &str| Error::format("RUCK checkpoint", reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|_| bad("truncated block name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("block name is not UTF-8"))?;
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf).map_err(|_| bad("truncated block data"))?;
                data.push(f64::from_le_bytes(buf));
            }
            blocks.push((name, Matrix::new(rows, cols, data)?));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("missing metadata"))?;
        let mut meta = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut meta).map_err(|_| bad("truncated metadata"))?;
        Ok(Self {
            blocks,
            metadata: serde_json::from_slice(&meta)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn block_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn push_velocity(&mut self, velocity: &[Matrix]) {
        for (i, v) in velocity.iter().enumerate() {
            self.push_block(format!("optimizer.velocity.{i}"), v.clone());
        }
    }

    pub fn velocity(&self) -> Vec<Matrix> {
        (0..)
            .map_while(|i| self.block(&format!("optimizer.velocity.{i}")).cloned())
            .collect()
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("RUCK checkpoint", "truncated integer"))?;
    Ok(u32::from_le_bytes(buf))
}

/// Names of all blocks of `params`, in visit order.
pub fn block_names<P: Parameters>(params: &P) -> Vec<String> {
    blocks(params).into_iter().map(|(n, _)| n).collect()
}
