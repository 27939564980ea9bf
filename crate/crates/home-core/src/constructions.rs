//! Analytic witness batches with exactly known moments.
//!
//! Sylvester-Hadamard columns are characters of GF(2)^m: the entrywise
//! product of distinct nontrivial characters is again a nontrivial character,
//! which sums to zero, so every mixed moment over distinct column indices
//! with nonzero XOR is exactly zero. The XOR triple z3 = z1*z2 is the
//! canonical batch whose pair moments all vanish while the triple moment
//! does not.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{HomeError, Result};
use crate::matrix::Mat;
use crate::rng::{stream, TAG_DATA};

/// Rows 2^m x selected columns of the order-2^m Sylvester-Hadamard matrix,
/// H[i][j] = (-1)^popcount(i & j), entries +-1. Column index 0 is the
/// all-ones (trivial) character and is rejected: its moments do not vanish.
pub fn hadamard_batch(column_indices: &[usize], m: u32) -> Result<Mat> {
    let size = 1usize << m;
    if column_indices.is_empty() {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("need at least one column index"),
        });
    }
    for &j in column_indices {
        if j == 0 || j >= size {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("column index {j} must be in 1..{size}"),
            });
        }
    }
    let mut out = Mat::zeros(size, column_indices.len());
    for i in 0..size {
        for (c, &j) in column_indices.iter().enumerate() {
            let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            out.set(i, c, sign);
        }
    }
    Ok(out)
}

/// The same columns scaled to unit L2 norm. For even m the scale 2^{-m/2}
/// is a power of two, so the entries (and therefore all pair/triple moment
/// cancellations) are exact in f64.
pub fn hadamard_unit_columns(column_indices: &[usize], m: u32) -> Result<Vec<Vec<f64>>> {
    if m % 2 != 0 {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("unit-norm entries are exact only for even m, got {m}"),
        });
    }
    let raw = hadamard_batch(column_indices, m)?;
    let scale = 1.0 / (1u64 << (m / 2)) as f64;
    Ok((0..raw.cols())
        .map(|c| raw.column(c).iter().map(|v| v * scale).collect())
        .collect())
}

/// N=4, D=3 batch enumerating (z1, z2) over (+-1, +-1) with z3 = z1*z2.
/// Entries +-1; all columns are mean-free with norm 2.
pub fn xor_triple_batch() -> Mat {
    Mat::from_rows(&[
        vec![1.0, 1.0, 1.0],
        vec![1.0, -1.0, -1.0],
        vec![-1.0, 1.0, -1.0],
        vec![-1.0, -1.0, 1.0],
    ])
    .expect("fixed shape")
}

/// The XOR triple scaled to unit column norm (entries +-1/2, exact). Pair
/// moments are exactly 0; the triple moment is exactly 4^{-3/2} = 0.125.
pub fn xor_triple_unit_columns() -> Vec<Vec<f64>> {
    let raw = xor_triple_batch();
    (0..3)
        .map(|c| raw.column(c).iter().map(|v| v * 0.5).collect())
        .collect()
}

/// Samples of the XOR triple as bits: rows (b1, b2, b1 XOR b2) with fair
/// independent b1, b2. Feeds the discrete total-correlation diagnostics.
pub fn xor_bit_samples(count: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng: ChaCha12Rng = stream(seed, TAG_DATA, 0, 0);
    (0..count)
        .map(|_| {
            let b1 = u8::from(rng.gen::<bool>());
            let b2 = u8::from(rng.gen::<bool>());
            vec![b1, b2, b1 ^ b2]
        })
        .collect()
}
