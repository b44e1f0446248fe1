//! Experiment runner for learning-rate dropout benchmarks: toy-function
//! paths, MNIST and synthetic classification, parameter sweeps and reports.

pub mod classify;
pub mod error;
pub mod io;
pub mod report;
pub mod spec;
pub mod sweep;
pub mod toy;
pub mod verify;

pub use error::{HarnessError, Result};
pub use spec::ExperimentSpec;

/// Generator stream ids. Each run derives its generators from
/// `(seed, purpose)`, independent of which other arms run.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const OPTIM: u64 = 4;
    pub const NOISY_LABEL: u64 = 5;
    pub const DATA: u64 = 6;
}
