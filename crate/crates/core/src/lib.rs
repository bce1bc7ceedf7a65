//! Supervised online hashing with Hadamard codebooks.
//!
//! Each class label that shows up in a stream is given its own column of a
//! `2^k`-order Hadamard matrix. Those codewords are shortened to the target
//! code length by the sign of a fixed Gaussian projection, and a linear
//! hash model `sgn(W^T x + b)` is fitted to them one batch at a time by SGD
//! on a tanh relaxation. Retrieval quality is measured by Hamming ranking.
//!
//! ```
//! use hcoh::{HashModel, OnlineHasher, TargetCoder, TrainBatch};
//!
//! let model = HashModel::init(4, 16, 0.2, 1).unwrap();
//! let coder = TargetCoder::for_bits(16, 10, 2, 3).unwrap();
//! let mut hasher = OnlineHasher::new(model, coder).unwrap();
//! hasher.step(&TrainBatch::single(vec![0.1, 0.5, -0.2, 0.0], 3).unwrap()).unwrap();
//! assert_eq!(hasher.model().round(), 1);
//! ```

pub mod checkpoint;
pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod hadamard;
mod io_util;
pub mod learner;
pub mod lsh;
pub mod pipeline;
pub mod seed;

pub use codec::{encode, BinaryCode, BinaryCodeSet};
pub use data::{Dataset, Normalization, SplitSpec};
pub use error::{Error, Result};
pub use eval::{average_precision, evaluate, map_curve_auc, precision_at_k, rank, EvalReport, MapCurve};
pub use hadamard::{build_hadamard, codeword_order, HadamardCodebook, SignMatrix};
pub use io_util::atomic_write;
pub use learner::{GradientFactor, HashModel, OnlineHasher, TrainBatch};
pub use lsh::{LshReducer, TargetCodeTable, TargetCoder};
pub use pipeline::{run_experiment, MetricRecord, RunConfig};
