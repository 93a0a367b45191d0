//! Kernel two-sample testing with spectrally truncated, multi-kernel MMD
//! statistics.
//!
//! The pipeline: pool the two samples, build a bank of Gaussian kernels from
//! the median heuristic, eigendecompose each 1/N-scaled Gram matrix, keep the
//! top-J spectral directions, and aggregate the per-kernel truncated
//! statistics. Critical values come from a multiplier bootstrap (two
//! variants) or from permutation.
//!
//! Entry points:
//! - [`pipeline::run_test`] runs one test on a [`kernel::TwoSample`].
//! - [`experiment::estimate_rejection_rate`] drives Monte Carlo size/power studies.
//! - [`dataset::load_two_sample`] ingests real two-group data from CSV.
//!
//! Everything downstream of a [`stream::StreamKey`] is deterministic: the same
//! key and parameters give bitwise-identical output at any thread count.

pub mod dataset;
pub mod dgp;
pub mod error;
pub mod experiment;
pub mod kernel;
mod linalg;
pub mod pipeline;
pub mod resample;
pub mod spectral;
pub mod statistic;
pub mod stream;

pub use error::{Error, Result};
pub use kernel::{KernelBank, KernelMode, KernelSpec, TwoSample};
pub use pipeline::{run_test, StatisticKind, TestOptions, TestResult};
pub use stream::StreamKey;
