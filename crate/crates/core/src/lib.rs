//! Differentially private distance-sum (kernel density) queries.
//!
//! The structures here answer `y -> sum_{x in X} f(x, y)` for
//! `f = ||x - y||_1`, `||x - y||_2` and `||x - y||_p^p` after a single noisy
//! release of per-interval statistics. Queries read only the released
//! structure, so any number of them can be answered without spending more
//! privacy budget.
//!
//! - [`l1tree`]: one-dimensional count/sum tree, `O(log n)` per query.
//! - [`multidim`]: one tree per coordinate for d-dimensional l1.
//! - [`lptree`]: power-sum tree for `||x - y||_p^p`.
//! - [`l2kde`]: Gaussian l2-to-l1 embedding followed by a [`multidim`] tree.
//! - [`baseline`]: the prior counting-tree approach, for comparisons.
//! - [`oracle`]: exact brute-force answers.
//! - [`harness`]: experiment plans and CSV reports.

pub mod baseline;
pub mod data;
pub mod error;
pub mod format;
pub mod harness;
pub mod l1tree;
pub mod l2kde;
pub mod lptree;
pub mod multidim;
pub mod noise;
pub mod oracle;
pub mod tree;

pub use error::{Error, Result};
pub use l1tree::NoisyL1Tree;
pub use l2kde::{EmbeddedPoints, EmbeddingSpec, L2KdeStructure};
pub use lptree::{HighDimLpTree, NoisyLpTree};
pub use multidim::HighDimTree;
pub use noise::{PrivacyBudget, RngSeed};
pub use tree::TreeConfig;
