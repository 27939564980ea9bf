//! Summation helpers with bounded rounding error.

use crate::math;

/// Neumaier-compensated accumulator. Order of `add` calls is part of the
/// result, so callers that need run-to-run stability must feed values in a
/// fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Compensated {
    sum: f64,
    correction: f64,
}

impl Compensated {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if math::abs(self.sum) >= math::abs(x) {
            self.correction += (self.sum - t) + x;
        } else {
            self.correction += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.correction
    }
}

/// Pairwise summation. Error grows like O(log n) instead of O(n), and the
/// reduction tree depends only on the slice length.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Compensated sum of a slice.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let mut acc = Compensated::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Compensated dot product.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Compensated::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc.add(x * y);
    }
    acc.value()
}
