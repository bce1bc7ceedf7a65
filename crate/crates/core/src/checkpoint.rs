//! Model checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "HCOH" version:u8
//! d:u32 r:u32 eta:f64 round:u64
//! W: d*r f64, row-major (feature-major)
//! b: r f64
//! codebook: order:u32 seed:u64 count:u32 then count x (label:u32 column:u32)
//! reducer:  in_dim:u32 out_dim:u32 seed:u64 identity:u8
//! ```
//!
//! The Hadamard matrix and the projection are regenerated from order and
//! seeds; assignment pairs are stored in arrival order so the codebook's
//! generator state can be replayed.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hadamard::HadamardCodebook;
use crate::io_util::{atomic_write, Reader};
use crate::learner::{HashModel, OnlineHasher};
use crate::lsh::{LshReducer, TargetCoder};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCOH";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn to_bytes(hasher: &OnlineHasher) -> Vec<u8> {
    let model = hasher.model();
    let book = hasher.coder().codebook();
    let reducer = hasher.coder().reducer();
    let mut out = Vec::with_capacity(64 + (model.w().len() + model.b().len()) * 8 + book.assigned_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(model.feature_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.code_length() as u32).to_le_bytes());
    out.extend_from_slice(&model.eta().to_le_bytes());
    out.extend_from_slice(&model.round().to_le_bytes());
    for v in model.w().iter().chain(model.b()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(book.order() as u32).to_le_bytes());
    out.extend_from_slice(&book.seed().to_le_bytes());
    out.extend_from_slice(&(book.assigned_count() as u32).to_le_bytes());
    for (label, col) in book.assignments() {
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&col.to_le_bytes());
    }
    out.extend_from_slice(&(reducer.in_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(reducer.out_dim() as u32).to_le_bytes());
    out.extend_from_slice(&reducer.seed().to_le_bytes());
    out.push(reducer.is_identity() as u8);
    out
}

fn header(what: &str, detail: impl Into<String>) -> Error {
    Error::BadHeader {
        what: what.into(),
        detail: detail.into(),
    }
}

pub fn from_bytes(what: &str, bytes: &[u8]) -> Result<OnlineHasher> {
    let mut r = Reader::new(what, bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let d = r.u32()? as usize;
    let bits = r.u32()? as usize;
    let eta = r.f64()?;
    let round = r.u64()?;
    r.require(((d * bits + bits) * 8) as u64)?;
    let w = (0..d * bits).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let b = (0..bits).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let model = HashModel::from_parts(d, bits, w, b, eta, round).map_err(|e| header(what, e.to_string()))?;

    let order = r.u32()? as usize;
    let book_seed = r.u64()?;
    let count = r.u32()? as usize;
    r.require((count * 8) as u64)?;
    let pairs = (0..count)
        .map(|_| Ok((r.u32()?, r.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    let book = HadamardCodebook::restore(order, book_seed, &pairs).map_err(|e| header(what, e.to_string()))?;

    let in_dim = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    let reducer_seed = r.u64()?;
    let identity = r.u8()?;
    r.finish()?;
    if identity > 1 || (identity == 1) != (in_dim == out_dim) {
        return Err(header(what, format!("identity flag {identity} inconsistent with {in_dim} -> {out_dim}")));
    }
    let reducer = LshReducer::new(in_dim, out_dim, reducer_seed).map_err(|e| header(what, e.to_string()))?;
    let coder = TargetCoder::new(book, reducer).map_err(|e| header(what, e.to_string()))?;
    OnlineHasher::new(model, coder).map_err(|e| header(what, e.to_string()))
}

pub fn save(hasher: &OnlineHasher, path: &Path) -> Result<()> {
    let bytes = to_bytes(hasher);
    atomic_write(path, |f| f.write_all(&bytes))
}

pub fn load(path: &Path) -> Result<OnlineHasher> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&path.display().to_string(), &bytes)
}
