//! Incremental stochastic majorization-minimization for softmax-gated
//! mixture-of-experts models.
//!
//! The crate provides:
//!
//! * [`mm`]: the generic streaming engine over sufficient statistics,
//! * [`gaussian`] and [`logistic`]: the two surrogate families,
//! * [`baselines`]: first- and second-order stochastic gradient optimizers,
//! * [`datagen`], [`init`], [`eval`]: synthetic data, initializers and metrics,
//! * [`csvio`]: dataset parsing and writing.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod csvio;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod features;
pub mod gating;
pub mod gaussian;
pub mod init;
pub mod linalg;
pub mod logistic;
pub mod mm;
pub mod sample;

pub use error::{Error, Result};
pub use gaussian::{GaussianDims, GaussianFamily, GaussianParams};
pub use logistic::{LogisticDims, LogisticFamily, LogisticParams};
pub use mm::{mm_step, run_stream, MmState, StepSchedule, SurrogateFamily};
pub use sample::{Dataset, Sample, Target};
