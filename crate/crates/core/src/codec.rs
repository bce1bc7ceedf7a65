//! Bit-packed binary codes.
//!
//! Bit `j` of a code is 1 iff the `j`-th hash function outputs `+1`; bits
//! live in 64-bit words, least significant bit first, and padding past the
//! code length is always zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_util::{atomic_write, Reader};
use crate::learner::HashModel;

pub const CODE_MAGIC: &[u8; 8] = b"HCOHCODE";
pub const CODE_VERSION: u8 = 1;

pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn tail_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        rem => (1u64 << rem) - 1,
    }
}

/// Hamming distance between two packed codes of the same word length.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    bits: usize,
    words: Vec<u64>,
}

impl BinaryCode {
    /// Masks away any padding bits.
    pub fn from_words(bits: usize, mut words: Vec<u64>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("code length must be at least 1".into()));
        }
        if words.len() != words_for(bits) {
            return Err(Error::dim("packed code words", words_for(bits), words.len()));
        }
        *words.last_mut().unwrap() &= tail_mask(bits);
        Ok(BinaryCode { bits, words })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut words = vec![0u64; words_for(bits.len())];
        for (j, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[j / 64] |= 1 << (j % 64);
        }
        Self::from_words(bits.len(), words)
    }

    /// `+1` maps to a set bit, `-1` to a clear bit.
    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        Self::from_bools(&signs.iter().map(|&s| s > 0).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn hamming(&self, other: &BinaryCode) -> Result<u32> {
        if self.bits != other.bits {
            return Err(Error::dim("hamming operands", self.bits, other.bits));
        }
        Ok(hamming_words(&self.words, &other.words))
    }
}

/// Codes for a corpus, stored contiguously, with one label per code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodeSet {
    bits: usize,
    words: Vec<u64>,
    labels: Vec<u32>,
}

impl BinaryCodeSet {
    pub fn new(bits: usize, words: Vec<u64>, labels: Vec<u32>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("code length must be at least 1".into()));
        }
        let wpc = words_for(bits);
        if words.len() != wpc * labels.len() {
            return Err(Error::dim("code set words", wpc * labels.len(), words.len()));
        }
        let mask = tail_mask(bits);
        if words.chunks_exact(wpc).any(|c| c[wpc - 1] & !mask != 0) {
            return Err(Error::InvalidArgument("code padding bits must be zero".into()));
        }
        Ok(BinaryCodeSet { bits, words, labels })
    }

    pub fn from_codes(codes: &[BinaryCode], labels: Vec<u32>) -> Result<Self> {
        let bits = codes.first().map_or(0, BinaryCode::len);
        if codes.len() != labels.len() {
            return Err(Error::dim("code set labels", codes.len(), labels.len()));
        }
        if let Some(c) = codes.iter().find(|c| c.len() != bits) {
            return Err(Error::dim("code set member length", bits, c.len()));
        }
        let words = codes.iter().flat_map(|c| c.words.iter().copied()).collect();
        Self::new(bits, words, labels)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        words_for(self.bits)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn code_words(&self, i: usize) -> &[u64] {
        let w = self.words_per_code();
        &self.words[i * w..(i + 1) * w]
    }

    pub fn code(&self, i: usize) -> BinaryCode {
        BinaryCode {
            bits: self.bits,
            words: self.code_words(i).to_vec(),
        }
    }

    /// Reorders entries so that new position `i` holds old entry `order[i]`.
    pub fn select(&self, order: &[usize]) -> BinaryCodeSet {
        let words = order.iter().flat_map(|&i| self.code_words(i).iter().copied()).collect();
        let labels = order.iter().map(|&i| self.labels[i]).collect();
        BinaryCodeSet {
            bits: self.bits,
            words,
            labels,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.words.len() * 8 + self.labels.len() * 4);
        out.extend_from_slice(CODE_MAGIC);
        out.push(CODE_VERSION);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.bits as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(what: &str, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(what, bytes);
        r.expect_magic(CODE_MAGIC)?;
        r.expect_version(CODE_VERSION)?;
        let n = r.u32()? as usize;
        let bits = r.u32()? as usize;
        if bits == 0 {
            return Err(Error::BadHeader {
                what: what.into(),
                detail: "code length 0".into(),
            });
        }
        let wpc = words_for(bits);
        r.require((n * wpc * 8 + n * 4) as u64)?;
        let words = (0..n * wpc).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::new(bits, words, labels).map_err(|e| Error::BadHeader {
            what: what.into(),
            detail: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, |f| f.write_all(&self.to_bytes()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&path.display().to_string(), &bytes)
    }
}

/// Packs `sgn(W^T x + b)` for one instance into `out`, `scratch` holding
/// the projection.
pub fn encode_into<T: Copy + Into<f64>>(
    model: &HashModel,
    x: &[T],
    scratch: &mut [f64],
    out: &mut [u64],
) -> Result<()> {
    model.project_into(x, scratch)?;
    out.fill(0);
    for (j, &v) in scratch.iter().enumerate() {
        if v >= 0.0 {
            out[j / 64] |= 1 << (j % 64);
        }
    }
    Ok(())
}

/// Encodes each row of a row-major `n x d` matrix.
pub fn encode<T: Copy + Into<f64> + Sync>(
    model: &HashModel,
    features: &[T],
    labels: Vec<u32>,
) -> Result<BinaryCodeSet> {
    let d = model.feature_dim();
    if features.len() != d * labels.len() {
        return Err(Error::dim("encode features", d * labels.len(), features.len()));
    }
    encode_rows(model, features.chunks_exact(d).collect(), labels)
}

/// Encodes the given rows; rows are processed in parallel, the output is
/// independent of scheduling.
pub fn encode_rows<T: Copy + Into<f64> + Sync>(
    model: &HashModel,
    rows: Vec<&[T]>,
    labels: Vec<u32>,
) -> Result<BinaryCodeSet> {
    let bits = model.code_length();
    let wpc = words_for(bits);
    if rows.len() != labels.len() {
        return Err(Error::dim("encode labels", rows.len(), labels.len()));
    }
    let mut words = vec![0u64; rows.len() * wpc];
    words
        .par_chunks_mut(wpc.max(1))
        .zip(rows.par_iter())
        .try_for_each_init(
            || vec![0.0; bits],
            |scratch, (out, x)| encode_into(model, x, scratch, out),
        )?;
    BinaryCodeSet::new(bits, words, labels)
}
