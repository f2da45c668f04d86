//! Weight decorrelation as a regularizer, and the instruments to study it.
//!
//! The core idea: treat each row of a weight matrix as a feature detector
//! and penalize detectors for pointing in similar directions. Two penalties
//! are provided — a *global* one that pushes every pair toward orthogonality
//! (squared cosine similarity), and a *local* one that squashes the penalty
//! so only nearby pairs repel and anti-correlated pairs are left alone.
//! Both come with exact gradients, a magnitude-preserving update step that
//! regularizes directions without touching row norms, and finite-difference
//! checks for all of it.
//!
//! Around that core: pairwise-angle analytics (minimum angle, mean
//! nearest-neighbor angle, histograms), a small deterministic MLP engine
//! that applies the regularizer per layer during SGD, IDX/weight-file I/O,
//! and pre-configured experiments (pure angle dynamics in 2D, the
//! decorrelation bound reached by each penalty, MNIST sensitivity sweeps).
//!
//! Everything is seeded and single-threaded: identical configs produce
//! bit-identical outputs.

pub mod anglestats;
pub mod data;
pub mod error;
pub mod experiments;
pub mod fdcheck;
pub mod linalg;
pub mod nn;
pub mod reg;

pub use anglestats::AngleStats;
pub use error::{Error, Result};
pub use experiments::{Direction, RunRecord, ToyConfig};
pub use linalg::Matrix;
pub use reg::{RegConfig, RegMode};
