//! Per-feature normalization of embedding batches.
//!
//! Each feature column is centered and divided by sqrt(sum of squared
//! deviations + epsilon), giving columns with zero mean and (up to epsilon)
//! unit L2 norm. Columns whose centered norm is at most 10*sqrt(epsilon) are
//! treated as degenerate: they normalize to zero, receive zero gradient, and
//! therefore contribute nothing to any moment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{HomeError, Result};
use crate::math;
use crate::matrix::Mat;
use crate::sums;

/// Epsilon inside the normalizer's square root.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Raw projector outputs for one augmented view: rows are samples, columns
/// are embedding features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    values: Mat,
    view_id: usize,
}

impl EmbeddingBatch {
    /// Requires at least two rows, at least one column, and finite entries.
    pub fn new(values: Mat, view_id: usize) -> Result<Self> {
        if values.rows() < 2 {
            return Err(HomeError::BatchTooSmall {
                rows: values.rows(),
            });
        }
        if values.cols() == 0 {
            return Err(HomeError::ShapeMismatch {
                context: "EmbeddingBatch::new",
                expected: (values.rows(), 1),
                got: (values.rows(), 0),
            });
        }
        if !values.is_finite() {
            return Err(HomeError::NonFinite {
                context: "EmbeddingBatch::new",
            });
        }
        Ok(Self { values, view_id })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }
}

/// Normalized batch stored column-major so moment evaluation can walk
/// contiguous feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBatch {
    samples: usize,
    features: usize,
    view_id: usize,
    columns: Vec<f64>,
    degenerate: Vec<bool>,
}

impl NormalizedBatch {
    /// Builds directly from feature columns. Intended for analytically
    /// constructed batches where the normalized values are known exactly;
    /// the regular path is [`normalize`]. Columns that are identically zero
    /// are flagged degenerate.
    pub fn from_columns(columns: &[Vec<f64>], view_id: usize) -> Result<Self> {
        let features = columns.len();
        let samples = columns.first().map_or(0, |c| c.len());
        if features == 0 || samples < 2 {
            return Err(HomeError::BatchTooSmall { rows: samples });
        }
        let mut flat = Vec::with_capacity(samples * features);
        let mut degenerate = Vec::with_capacity(features);
        for col in columns {
            if col.len() != samples {
                return Err(HomeError::ShapeMismatch {
                    context: "NormalizedBatch::from_columns",
                    expected: (samples, features),
                    got: (col.len(), features),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(HomeError::NonFinite {
                    context: "NormalizedBatch::from_columns",
                });
            }
            degenerate.push(col.iter().all(|&v| v == 0.0));
            flat.extend_from_slice(col);
        }
        Ok(Self {
            samples,
            features,
            view_id,
            columns: flat,
            degenerate,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    /// Contiguous values of feature column `d`.
    #[inline]
    pub fn col(&self, d: usize) -> &[f64] {
        &self.columns[d * self.samples..(d + 1) * self.samples]
    }

    pub fn is_degenerate(&self, d: usize) -> bool {
        self.degenerate[d]
    }

    pub fn degenerate_flags(&self) -> &[bool] {
        &self.degenerate
    }

    /// Row-major copy, matching the input layout of [`normalize`].
    pub fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.samples, self.features);
        for d in 0..self.features {
            let col = self.col(d);
            for (n, &v) in col.iter().enumerate() {
                m.set(n, d, v);
            }
        }
        m
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("epsilon must be finite and positive, got {epsilon}"),
        });
    }
    Ok(())
}

/// Per-column stats shared by the forward and backward passes.
struct ColumnStats {
    mean: f64,
    /// sqrt(sum of squared deviations + epsilon)
    scale: f64,
    degenerate: bool,
}

fn column_stats(col: &[f64], epsilon: f64) -> ColumnStats {
    let n = col.len() as f64;
    let mean = sums::compensated_sum(col) / n;
    let mut sq = sums::Compensated::new();
    for &v in col {
        let c = v - mean;
        sq.add(c * c);
    }
    let sum_sq = sq.value();
    let degenerate = math::sqrt(sum_sq) <= 10.0 * math::sqrt(epsilon);
    ColumnStats {
        mean,
        scale: math::sqrt(sum_sq + epsilon),
        degenerate,
    }
}

/// Centers each column and divides by sqrt(sum of squared deviations +
/// epsilon). Degenerate columns come back as zeros with their flag set.
pub fn normalize(batch: &EmbeddingBatch, epsilon: f64) -> Result<NormalizedBatch> {
    check_epsilon(epsilon)?;
    let n = batch.rows();
    let d = batch.cols();
    let mut columns = vec![0.0; n * d];
    let mut degenerate = vec![false; d];
    let mut scratch = vec![0.0; n];
    for j in 0..d {
        for i in 0..n {
            scratch[i] = batch.values().at(i, j);
        }
        let stats = column_stats(&scratch, epsilon);
        let out = &mut columns[j * n..(j + 1) * n];
        if stats.degenerate {
            degenerate[j] = true;
            // Already zeros.
            continue;
        }
        for i in 0..n {
            out[i] = (scratch[i] - stats.mean) / stats.scale;
        }
    }
    Ok(NormalizedBatch {
        samples: n,
        features: d,
        view_id: batch.view_id(),
        columns,
        degenerate,
    })
}

/// Pulls a gradient with respect to the normalized values back to the raw
/// values. `upstream` is dL/d(normalized), row-major like the raw batch.
///
/// For a column with centered values c and scale q = sqrt(|c|^2 + epsilon),
/// the chain rule through v = c/q gives
///     dL/dc = u/q - (c . u) / q^3 * c
/// and centering subtracts the column mean of that. Degenerate columns get
/// zero gradient.
pub fn normalize_backward(batch: &EmbeddingBatch, upstream: &Mat, epsilon: f64) -> Result<Mat> {
    check_epsilon(epsilon)?;
    let n = batch.rows();
    let d = batch.cols();
    if upstream.rows() != n || upstream.cols() != d {
        return Err(HomeError::ShapeMismatch {
            context: "normalize_backward",
            expected: (n, d),
            got: (upstream.rows(), upstream.cols()),
        });
    }
    if !upstream.is_finite() {
        return Err(HomeError::NonFinite {
            context: "normalize_backward",
        });
    }
    let mut out = Mat::zeros(n, d);
    let mut centered = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for j in 0..d {
        for i in 0..n {
            centered[i] = batch.values().at(i, j);
        }
        let stats = column_stats(&centered, epsilon);
        if stats.degenerate {
            continue;
        }
        for c in centered.iter_mut() {
            *c -= stats.mean;
        }
        let q = stats.scale;
        let mut cu = sums::Compensated::new();
        for i in 0..n {
            cu.add(centered[i] * upstream.at(i, j));
        }
        let cu = cu.value();
        for i in 0..n {
            grad[i] = upstream.at(i, j) / q - cu / (q * q * q) * centered[i];
        }
        let grad_mean = sums::compensated_sum(&grad) / n as f64;
        for i in 0..n {
            out.set(i, j, grad[i] - grad_mean);
        }
    }
    Ok(out)
}
