//! Hadamard codebooks.
//!
//! Matrices are built with Sylvester's doubling `H(2m) = [[H, H], [H, -H]]`,
//! i.e. entry `(i, j) = (-1)^popcount(i & j)` with 0-based indices. Columns
//! are handed out to class labels as they first appear in the stream.

use indexmap::IndexMap;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Largest order `build_hadamard` accepts.
pub const MAX_ORDER: usize = 1 << 20;

/// Smallest power of two `l = 2^k`, `k >= 1`, with `l >= bits` and
/// `l >= labels`.
pub fn codeword_order(bits: usize, labels: usize) -> usize {
    bits.max(labels).max(2).next_power_of_two()
}

/// Dense square matrix of `+1`/`-1` entries, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl SignMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.order + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.order..(row + 1) * self.order]
    }

    pub fn column(&self, col: usize) -> Vec<i8> {
        (0..self.order).map(|row| self.get(row, col)).collect()
    }

    /// `self * self^T` in exact integer arithmetic.
    pub fn gram(&self) -> Vec<i64> {
        let n = self.order;
        let mut out = vec![0i64; n * n];
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let rj = self.row(j);
                let dot: i64 = ri.iter().zip(rj).map(|(&a, &b)| (a * b) as i64).sum();
                out[i * n + j] = dot;
                out[j * n + i] = dot;
            }
        }
        out
    }
}

pub fn build_hadamard(order: usize) -> Result<SignMatrix> {
    if !order.is_power_of_two() || order > MAX_ORDER {
        return Err(Error::InvalidOrder(order));
    }
    let mut entries = vec![1i8; order * order];
    // Fill by doubling: the top-left block of size `half` is already H(half).
    let mut half = 1;
    while half < order {
        for i in 0..half {
            for j in 0..half {
                let v = entries[i * order + j];
                entries[i * order + j + half] = v;
                entries[(i + half) * order + j] = v;
                entries[(i + half) * order + j + half] = -v;
            }
        }
        half *= 2;
    }
    Ok(SignMatrix { order, entries })
}

/// A Hadamard matrix plus the running label to column assignment.
///
/// The assignment map keeps arrival order, which together with the seed is
/// enough to rebuild the exact generator state (see [`HadamardCodebook::restore`]).
#[derive(Debug, Clone)]
pub struct HadamardCodebook {
    matrix: SignMatrix,
    assignment: IndexMap<u32, u32>,
    free_columns: Vec<u32>,
    seed: u64,
    rng: Rng,
}

impl HadamardCodebook {
    pub fn new(order: usize, seed: u64) -> Result<Self> {
        let matrix = build_hadamard(order)?;
        Ok(HadamardCodebook {
            matrix,
            assignment: IndexMap::new(),
            free_columns: (0..order as u32).collect(),
            seed,
            rng: seed::rng(seed),
        })
    }

    /// Rebuilds a codebook by replaying label arrivals in order. Fails if a
    /// replayed draw disagrees with the recorded column.
    pub fn restore(order: usize, seed: u64, arrivals: &[(u32, u32)]) -> Result<Self> {
        let mut book = Self::new(order, seed)?;
        for &(label, column) in arrivals {
            let got = book.assign_label(label)?;
            if got != column as usize {
                return Err(Error::BadHeader {
                    what: "codebook".into(),
                    detail: format!(
                        "label {label} recorded at column {column}, replay drew {got}"
                    ),
                });
            }
        }
        Ok(book)
    }

    pub fn order(&self) -> usize {
        self.matrix.order
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &SignMatrix {
        &self.matrix
    }

    pub fn free_count(&self) -> usize {
        self.free_columns.len()
    }

    pub fn free_columns(&self) -> &[u32] {
        &self.free_columns
    }

    pub fn assigned_count(&self) -> usize {
        self.assignment.len()
    }

    /// `(label, column)` pairs in arrival order.
    pub fn assignments(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.assignment.iter().map(|(&l, &c)| (l, c))
    }

    pub fn column_of(&self, label: u32) -> Option<usize> {
        self.assignment.get(&label).map(|&c| c as usize)
    }

    pub fn assign_label(&mut self, label: u32) -> Result<usize> {
        if let Some(&col) = self.assignment.get(&label) {
            return Ok(col as usize);
        }
        if self.free_columns.is_empty() {
            return Err(Error::CodebookExhausted {
                order: self.order(),
                label,
            });
        }
        // One Fisher-Yates step over the free list. The draw goes through u64
        // so the sequence does not depend on the platform's usize width.
        let pick = self.rng.random_range(0..self.free_columns.len() as u64) as usize;
        let col = self.free_columns.swap_remove(pick);
        self.assignment.insert(label, col);
        Ok(col as usize)
    }

    pub fn codeword(&self, label: u32) -> Result<Vec<i8>> {
        let col = self.column_of(label).ok_or(Error::UnknownLabel(label))?;
        Ok(self.matrix.column(col))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_rule() {
        assert_eq!(codeword_order(32, 10), 32);
        assert_eq!(codeword_order(8, 10), 16);
        assert_eq!(codeword_order(64, 205), 256);
        assert_eq!(codeword_order(1, 1), 2);
        assert_eq!(codeword_order(1, 0), 2);
        assert_eq!(codeword_order(16, 16), 16);
        assert_eq!(codeword_order(17, 2), 32);
    }

    #[test]
    fn small_matrices() {
        let h2 = build_hadamard(2).unwrap();
        assert_eq!(h2.entries, vec![1, 1, 1, -1]);
        let h4 = build_hadamard(4).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1,  1,  1,  1,
            1, -1,  1, -1,
            1,  1, -1, -1,
            1, -1, -1,  1,
        ];
        assert_eq!(h4.entries, expected);
        assert_eq!(build_hadamard(1).unwrap().entries, vec![1]);
    }

    #[test]
    fn entries_match_bitwise_inner_product() {
        let h = build_hadamard(64).unwrap();
        for i in 0..64usize {
            for j in 0..64 {
                let expected = if (i & j).count_ones() % 2 == 0 { 1 } else { -1 };
                assert_eq!(h.get(i, j), expected);
            }
        }
    }

    #[test]
    fn gram_is_scaled_identity() {
        let h = build_hadamard(8).unwrap();
        let g = h.gram();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(g[i * 8 + j], if i == j { 8 } else { 0 });
            }
        }
    }

    #[test]
    fn literal_product_exponent_is_not_hadamard() {
        // (-1)^(i*j) with ordinary multiplication repeats rows at order 4.
        let n = 4usize;
        let row = |i: usize| -> Vec<i32> {
            (0..n).map(|j| if (i * j) % 2 == 0 { 1 } else { -1 }).collect()
        };
        assert_eq!(row(0), row(2));
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(matches!(build_hadamard(0), Err(Error::InvalidOrder(0))));
        assert!(matches!(build_hadamard(12), Err(Error::InvalidOrder(12))));
        assert!(matches!(
            build_hadamard(MAX_ORDER * 2),
            Err(Error::InvalidOrder(_))
        ));
    }

    #[test]
    fn assignment_is_idempotent_and_exhausts() {
        let mut book = HadamardCodebook::new(4, 11).unwrap();
        let a = book.assign_label(7).unwrap();
        assert_eq!(book.assign_label(7).unwrap(), a);
        assert_eq!(book.free_count(), 3);
        for label in 0..3 {
            book.assign_label(label).unwrap();
        }
        assert_eq!(book.free_count(), 0);
        assert!(matches!(
            book.assign_label(99),
            Err(Error::CodebookExhausted { order: 4, label: 99 })
        ));
        // Known labels still resolve when full.
        assert_eq!(book.assign_label(7).unwrap(), a);
    }

    #[test]
    fn codewords() {
        let mut book = HadamardCodebook::new(2, 0).unwrap();
        assert!(matches!(book.codeword(3), Err(Error::UnknownLabel(3))));
        book.assign_label(3).unwrap();
        book.assign_label(5).unwrap();
        let c3 = book.codeword(3).unwrap();
        let c5 = book.codeword(5).unwrap();
        let col3 = book.column_of(3).unwrap();
        assert_eq!(c3, if col3 == 0 { vec![1, 1] } else { vec![1, -1] });
        let dot: i32 = c3.iter().zip(&c5).map(|(&a, &b)| (a * b) as i32).sum();
        assert_eq!(dot, 0);
        assert_eq!(book.codeword(3).unwrap(), c3);
    }

    #[test]
    fn restore_replays_and_validates() {
        let mut book = HadamardCodebook::new(32, 99).unwrap();
        for label in [4u32, 9, 1, 30, 2] {
            book.assign_label(label).unwrap();
        }
        let arrivals: Vec<_> = book.assignments().collect();
        let mut again = HadamardCodebook::restore(32, 99, &arrivals).unwrap();
        assert_eq!(again.assignments().collect::<Vec<_>>(), arrivals);
        // Generator state continues identically after restore.
        assert_eq!(again.assign_label(77).unwrap(), book.assign_label(77).unwrap());

        let mut tampered = arrivals.clone();
        tampered[0].1 = (tampered[0].1 + 1) % 32;
        assert!(HadamardCodebook::restore(32, 99, &tampered).is_err());
    }

    proptest! {
        #[test]
        fn exhaustive_assignment_partitions_columns(seed in any::<u64>(), k in 1u32..7) {
            let order = 1usize << k;
            let mut book = HadamardCodebook::new(order, seed).unwrap();
            let mut seen = vec![false; order];
            for label in 0..order as u32 {
                let col = book.assign_label(label * 3 + 1).unwrap();
                prop_assert!(!seen[col]);
                seen[col] = true;
                prop_assert_eq!(book.free_count() + book.assigned_count(), order);
                let mut all: Vec<u32> = book.free_columns().to_vec();
                all.extend(book.assignments().map(|(_, c)| c));
                all.sort_unstable();
                prop_assert_eq!(all, (0..order as u32).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&s| s));
            for label in 0..order as u32 {
                let before = book.column_of(label * 3 + 1).unwrap();
                prop_assert_eq!(book.assign_label(label * 3 + 1).unwrap(), before);
            }
        }

        #[test]
        fn same_seed_same_assignment(seed in any::<u64>(), labels in proptest::collection::vec(0u32..50, 1..40)) {
            let mut a = HadamardCodebook::new(64, seed).unwrap();
            let mut b = HadamardCodebook::new(64, seed).unwrap();
            for &l in &labels {
                prop_assert_eq!(a.assign_label(l).unwrap(), b.assign_label(l).unwrap());
            }
        }
    }
}
