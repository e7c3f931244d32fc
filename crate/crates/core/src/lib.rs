//! Permutation-based feature importance that stays inside the data support.
//!
//! Restricted permutation strategies (Gaussian conditional model reliance
//! and Gaussian knockoffs, both in normal-score space), ALE-based indices,
//! baseline unrestricted measures and synthetic benchmarks with known
//! ground truth.

pub mod ale;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gauss_transform;
pub mod gcmr;
pub mod gknock;
pub mod importance;
pub mod linalg;
pub mod models;
pub mod normal;
pub mod seed;
pub mod stats;
pub mod synth;

pub use dataset::{ColumnRef, ColumnSummary, Dataset, MissingPolicy};
pub use error::{Error, Result};
