//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Everything that can go wrong while building batches, evaluating moments,
/// or training.
#[derive(Debug, Clone, PartialEq)]
pub enum HomeError {
    /// An input or intermediate value was NaN or infinite.
    NonFinite { context: &'static str },
    /// A matrix or batch did not have the shape the operation requires.
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// Fewer than two rows; per-column statistics are undefined.
    BatchTooSmall { rows: usize },
    /// Moment order outside 2..=feature_dim.
    InvalidOrder { order: usize, feature_dim: usize },
    /// Requested more sampled tuples than exist for the order.
    SampleCountOutOfRange { requested: u128, available: u128 },
    /// C(n, k) does not fit in u128.
    CombinationOverflow { feature_dim: usize, order: usize },
    /// A parameter combination that the caller must not pass.
    InvalidConfig { message: String },
    /// Variant name not recognized.
    UnknownVariant { name: String },
    /// Label set for a probe or generator had fewer than two classes.
    SingleClass,
    /// Training produced a non-finite loss or parameter.
    Diverged { iteration: u64 },
    /// A forward or backward pass produced non-finite values in a layer.
    LayerNonFinite { layer: usize },
}

impl fmt::Display for HomeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HomeError::NonFinite { context } => {
                write!(f, "non-finite value in {context}")
            }
            HomeError::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "shape mismatch in {context}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            HomeError::BatchTooSmall { rows } => {
                write!(f, "batch needs at least 2 rows, got {rows}")
            }
            HomeError::InvalidOrder { order, feature_dim } => {
                write!(f, "moment order {order} invalid for {feature_dim} features")
            }
            HomeError::SampleCountOutOfRange {
                requested,
                available,
            } => write!(
                f,
                "requested {requested} tuples but only {available} exist"
            ),
            HomeError::CombinationOverflow { feature_dim, order } => {
                write!(f, "C({feature_dim}, {order}) overflows u128")
            }
            HomeError::InvalidConfig { message } => write!(f, "invalid config: {message}"),
            HomeError::UnknownVariant { name } => write!(f, "unknown variant: {name}"),
            HomeError::SingleClass => write!(f, "need at least two distinct labels"),
            HomeError::Diverged { iteration } => {
                write!(f, "training diverged at iteration {iteration}")
            }
            HomeError::LayerNonFinite { layer } => {
                write!(f, "non-finite values in layer {layer}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for HomeError {}

pub type Result<T> = core::result::Result<T, HomeError>;
