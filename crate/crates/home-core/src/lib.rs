//! Self-supervised embedding loss built from high-order mixed moments of
//! normalized projector outputs, plus the model, trainer, synthetic data,
//! and diagnostics used to exercise it at desk scale.
//!
//! The crate is `no_std`-compatible (allocation required). Enable the `libm`
//! feature for float math without `std`; the `parallel` feature adds a
//! rayon-backed compute mode and implies `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("home-core needs the `std` feature or the `libm` feature for float math");

pub mod constructions;
pub mod data;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod loss;
mod math;
pub mod matrix;
pub mod model;
pub mod moments;
pub mod optim;
pub mod rng;
mod sums;
pub mod trainer;
pub mod variants;

pub use embedding::{normalize, normalize_backward, EmbeddingBatch, NormalizedBatch, DEFAULT_EPSILON};
pub use error::{HomeError, Result};
pub use exec::ComputeMode;
pub use loss::{home_loss, invariance_term, redundancy_term, LossConfig, LossValue, RedundancyUnit};
pub use matrix::Mat;
pub use moments::{
    count_combinations, mixed_moment, moment_report, IndexTuple, MomentReport, MomentSpec, Sampling,
};
pub use variants::{build_plan, resolve_iteration, LossPlan, ResolvedPlan, Variant};
