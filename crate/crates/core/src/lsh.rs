//! Random-projection reduction of codewords to the target code length.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hadamard::HadamardCodebook;
use crate::seed;

/// Maps `in_dim`-length sign vectors to `out_dim` signs via
/// `sgn(P^T c)` with `P` drawn i.i.d. standard normal. Identity when the
/// two lengths agree.
#[derive(Debug, Clone, PartialEq)]
pub struct LshReducer {
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    /// Row-major `in_dim x out_dim`, `None` for the identity reducer.
    projection: Option<Vec<f64>>,
}

impl LshReducer {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "reducer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        let projection = if in_dim == out_dim {
            None
        } else {
            let mut rng = seed::rng(seed);
            Some(
                (0..in_dim * out_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            )
        };
        Ok(LshReducer {
            in_dim,
            out_dim,
            seed,
            projection,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_identity(&self) -> bool {
        self.projection.is_none()
    }

    pub fn reduce(&self, codeword: &[i8]) -> Result<Vec<i8>> {
        if codeword.len() != self.in_dim {
            return Err(Error::dim("lsh reduce", self.in_dim, codeword.len()));
        }
        let Some(proj) = &self.projection else {
            return Ok(codeword.to_vec());
        };
        let mut acc = vec![0.0f64; self.out_dim];
        for (row, &c) in proj.chunks_exact(self.out_dim).zip(codeword) {
            let c = c as f64;
            for (a, &p) in acc.iter_mut().zip(row) {
                *a += p * c;
            }
        }
        Ok(acc.into_iter().map(|v| if v >= 0.0 { 1 } else { -1 }).collect())
    }
}

/// Cache of per-label target codes. A stored code never changes.
#[derive(Debug, Clone, Default)]
pub struct TargetCodeTable {
    out_dim: usize,
    codes: HashMap<u32, Vec<i8>>,
}

impl TargetCodeTable {
    pub fn new(out_dim: usize) -> Self {
        TargetCodeTable {
            out_dim,
            codes: HashMap::new(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, label: u32) -> Option<&[i8]> {
        self.codes.get(&label).map(Vec::as_slice)
    }

    pub fn target_for(
        &mut self,
        reducer: &LshReducer,
        book: &mut HadamardCodebook,
        label: u32,
    ) -> Result<&[i8]> {
        if reducer.out_dim() != self.out_dim {
            return Err(Error::dim("target table", self.out_dim, reducer.out_dim()));
        }
        if !self.codes.contains_key(&label) {
            book.assign_label(label)?;
            let code = reducer.reduce(&book.codeword(label)?)?;
            self.codes.insert(label, code);
        }
        Ok(&self.codes[&label])
    }
}

/// Codebook, reducer and target cache bundled together: turns a class label
/// into its `r`-bit training target.
#[derive(Debug, Clone)]
pub struct TargetCoder {
    codebook: HadamardCodebook,
    reducer: LshReducer,
    table: TargetCodeTable,
}

impl TargetCoder {
    pub fn new(codebook: HadamardCodebook, reducer: LshReducer) -> Result<Self> {
        if reducer.in_dim() != codebook.order() {
            return Err(Error::dim("reducer input", codebook.order(), reducer.in_dim()));
        }
        let table = TargetCodeTable::new(reducer.out_dim());
        Ok(TargetCoder {
            codebook,
            reducer,
            table,
        })
    }

    /// Codebook of order `codeword_order(bits, max_labels)` and a matching
    /// reducer down to `bits`.
    pub fn for_bits(
        bits: usize,
        max_labels: usize,
        codebook_seed: u64,
        reducer_seed: u64,
    ) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("code length must be at least 1".into()));
        }
        let order = crate::hadamard::codeword_order(bits, max_labels);
        let codebook = HadamardCodebook::new(order, codebook_seed)?;
        let reducer = LshReducer::new(order, bits, reducer_seed)?;
        Self::new(codebook, reducer)
    }

    pub fn codebook(&self) -> &HadamardCodebook {
        &self.codebook
    }

    pub fn reducer(&self) -> &LshReducer {
        &self.reducer
    }

    pub fn table(&self) -> &TargetCodeTable {
        &self.table
    }

    pub fn bits(&self) -> usize {
        self.reducer.out_dim()
    }

    pub fn target(&mut self, label: u32) -> Result<&[i8]> {
        self.table
            .target_for(&self.reducer, &mut self.codebook, label)
    }

    /// Row-major `labels.len() x bits` target matrix as `f64` signs.
    pub fn targets(&mut self, labels: &[u32]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(labels.len() * self.bits());
        for &label in labels {
            out.extend(self.target(label)?.iter().map(|&s| s as f64));
        }
        Ok(out)
    }
}
