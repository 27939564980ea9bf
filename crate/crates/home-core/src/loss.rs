//! The mixed-moment embedding loss: an invariance term driving per-feature
//! cross-view inner products to 1, plus a redundancy term driving all
//! evaluated mixed moments to 0, weighted by lambda.
//!
//! For T normalized views and D features the invariance term is
//!     (1/D) sum_d [2/(T(T-1))] sum_{i != j ordered} (1 - sum_n z^i_nd z^j_nd)^2
//! and each redundancy unit contributes
//!     (1/M) sum_{K in orders} w_K sum_{tuples} moment^2
//! with M = sum_K C(D,K) over the unit's orders and w_K = C(D,K)/count when
//! order K is sampled (an unbiased estimator of the full sum). The loss total
//! is invariance + lambda * mean over the plan's units.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::{self, EmbeddingBatch, NormalizedBatch};
use crate::error::{HomeError, Result};
use crate::exec::ComputeMode;
use crate::matrix::Mat;
use crate::moments::{self, count_combinations, Sampling};
use crate::rng::{derive_seed, TAG_SAMPLE};
use crate::sums;
use crate::variants::ResolvedPlan;

/// Loss hyperparameters. Orders live in the plan's redundancy units, not
/// here; sampling applies to whichever orders a unit evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the redundancy term.
    pub lambda: f64,
    /// Normalizer epsilon (see [`crate::embedding::normalize`]).
    pub epsilon: f64,
    pub sampling: Sampling,
    pub mode: ComputeMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: embedding::DEFAULT_EPSILON,
            sampling: Sampling::Full,
            mode: ComputeMode::Sequential,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("lambda must be finite and >= 0, got {}", self.lambda),
            });
        }
        Ok(())
    }

    /// Re-keys sampled tuple selection for a training iteration so each
    /// iteration draws its own tuples while staying reproducible.
    pub fn for_iteration(&self, iteration: u64) -> Self {
        let mut out = self.clone();
        if let Sampling::Sampled { seed, .. } = &mut out.sampling {
            *seed = derive_seed(*seed, TAG_SAMPLE, iteration, 0);
        }
        out
    }
}

/// One redundancy unit: for each order, which view feeds each tuple slot.
/// Self units point every slot at one view; cross units spread slots over
/// distinct views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedundancyUnit {
    per_order_slots: BTreeMap<usize, Vec<usize>>,
}

impl RedundancyUnit {
    pub fn new(per_order_slots: BTreeMap<usize, Vec<usize>>) -> Result<Self> {
        if per_order_slots.is_empty() {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("redundancy unit needs at least one order"),
            });
        }
        for (&order, slots) in &per_order_slots {
            if order < 2 || slots.len() != order {
                return Err(HomeError::InvalidConfig {
                    message: alloc::format!(
                        "order {order} unit has {} slot views",
                        slots.len()
                    ),
                });
            }
        }
        Ok(Self { per_order_slots })
    }

    /// All slots of all orders read `view`.
    pub fn self_view(orders: &BTreeSet<usize>, view: usize) -> Self {
        Self {
            per_order_slots: orders.iter().map(|&k| (k, vec![view; k])).collect(),
        }
    }

    /// Single-order unit with one explicit view per slot.
    pub fn cross(views: Vec<usize>) -> Result<Self> {
        let order = views.len();
        let mut map = BTreeMap::new();
        map.insert(order, views);
        Self::new(map)
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_order_slots.keys().copied()
    }

    pub fn slots(&self, order: usize) -> Option<&[usize]> {
        self.per_order_slots.get(&order).map(|v| v.as_slice())
    }

    fn order_set(&self) -> BTreeSet<usize> {
        self.per_order_slots.keys().copied().collect()
    }

    fn max_view(&self) -> usize {
        self.per_order_slots
            .values()
            .flat_map(|v| v.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Loss decomposition plus optional gradients with respect to the raw
/// (pre-normalization) embeddings, one matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub invariance: f64,
    /// One entry per redundancy unit, in plan order. For self plans the
    /// units correspond to views.
    pub redundancy_per_view: Vec<f64>,
    pub gradients: Option<Vec<Mat>>,
}

fn check_views_consistent(views: &[&NormalizedBatch]) -> Result<(usize, usize)> {
    let first = views.first().ok_or(HomeError::InvalidConfig {
        message: alloc::format!("at least one view required"),
    })?;
    let (n, d) = (first.samples(), first.features());
    for v in views {
        if v.samples() != n || v.features() != d {
            return Err(HomeError::ShapeMismatch {
                context: "loss views",
                expected: (n, d),
                got: (v.samples(), v.features()),
            });
        }
    }
    Ok((n, d))
}

fn cols_to_mat(cols: &[f64], n: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(n, d);
    for j in 0..d {
        for i in 0..n {
            m.set(i, j, cols[j * n + i]);
        }
    }
    m
}

/// Invariance term and its gradient (col-major per view). The per-feature
/// pair terms are sorted by value before summation, which makes the result
/// exactly invariant under any permutation of the views.
fn invariance_cols(views: &[&NormalizedBatch]) -> Result<(f64, Vec<Vec<f64>>)> {
    let t = views.len();
    if t < 2 {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("invariance term needs T >= 2 views, got {t}"),
        });
    }
    let (n, d) = check_views_consistent(views)?;
    let coeff = 2.0 / (t as f64 * (t - 1) as f64) / d as f64;
    let mut grads = vec![vec![0.0f64; n * d]; t];
    let mut total = sums::Compensated::new();
    let mut pair_terms: Vec<f64> = Vec::with_capacity(t * (t - 1) / 2);
    for feat in 0..d {
        pair_terms.clear();
        for i in 0..t {
            for j in i + 1..t {
                let s = sums::dot(views[i].col(feat), views[j].col(feat));
                let gap = 1.0 - s;
                // Both ordered directions of the pair contribute (1-s)^2.
                pair_terms.push(2.0 * gap * gap);
                // d/dz^i of 2*(1-s)^2 = -4*(1-s) * z^j (and symmetrically).
                let g = -4.0 * gap * coeff;
                let (ci, cj) = (views[i].col(feat), views[j].col(feat));
                let gi = &mut grads[i][feat * n..(feat + 1) * n];
                for (gv, &zj) in gi.iter_mut().zip(cj.iter()) {
                    *gv += g * zj;
                }
                let gj = &mut grads[j][feat * n..(feat + 1) * n];
                for (gv, &zi) in gj.iter_mut().zip(ci.iter()) {
                    *gv += g * zi;
                }
            }
        }
        pair_terms.sort_by(f64::total_cmp);
        for &term in pair_terms.iter() {
            total.add(term);
        }
    }
    Ok((coeff * total.value(), grads))
}

/// Public invariance term: value and one gradient matrix per view.
pub fn invariance_term(views: &[&NormalizedBatch]) -> Result<(f64, Vec<Mat>)> {
    let (value, cols) = invariance_cols(views)?;
    let (n, d) = (views[0].samples(), views[0].features());
    Ok((value, cols.iter().map(|c| cols_to_mat(c, n, d)).collect()))
}

/// One unit's redundancy value and gradient (col-major per view), without
/// the lambda / per-unit averaging applied by [`home_loss`].
fn redundancy_cols(
    views: &[&NormalizedBatch],
    unit: &RedundancyUnit,
    config: &LossConfig,
    want_grads: bool,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    config.validate()?;
    let (n, d) = check_views_consistent(views)?;
    if unit.max_view() >= views.len() {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!(
                "unit references view {} but only {} views given",
                unit.max_view(),
                views.len()
            ),
        });
    }
    let order_set = unit.order_set();
    for &k in &order_set {
        if k > d {
            return Err(HomeError::InvalidOrder {
                order: k,
                feature_dim: d,
            });
        }
    }
    let m_total = count_combinations(d, &order_set)? as f64;
    let mut value = 0.0f64;
    let mut grads = want_grads.then(|| vec![vec![0.0f64; n * d]; views.len()]);
    for &k in &order_set {
        let slot_views = unit.slots(k).expect("order came from the unit");
        let ctx = moments::slot_context(views, slot_views, k)?;
        let set = moments::tuple_set(d, k, &config.sampling)?;
        let weight = moments::tuple_weight(d, k, &set)?;
        let (sum_sq, order_grads) =
            moments::eval_square_sum(&ctx, d, &set, config.mode, views.len(), want_grads)?;
        value += weight * sum_sq;
        if let (Some(acc), Some(og)) = (grads.as_mut(), order_grads) {
            for (a, o) in acc.iter_mut().zip(og.iter()) {
                for (x, &y) in a.iter_mut().zip(o.iter()) {
                    *x += weight * y;
                }
            }
        }
    }
    let inv_m = 1.0 / m_total;
    if let Some(acc) = grads.as_mut() {
        for a in acc.iter_mut() {
            for x in a.iter_mut() {
                *x *= inv_m;
            }
        }
    }
    Ok((value * inv_m, grads))
}

/// Public redundancy term for one unit: value and one gradient matrix per
/// view (views the unit does not touch get zero matrices).
pub fn redundancy_term(
    views: &[&NormalizedBatch],
    unit: &RedundancyUnit,
    config: &LossConfig,
) -> Result<(f64, Vec<Mat>)> {
    let (value, cols) = redundancy_cols(views, unit, config, true)?;
    let (n, d) = (views[0].samples(), views[0].features());
    let cols = cols.expect("gradients were requested");
    Ok((value, cols.iter().map(|c| cols_to_mat(c, n, d)).collect()))
}

/// Full loss on raw embedding batches: normalizes each view, evaluates the
/// invariance term over all views and the redundancy term per plan unit,
/// and (optionally) chains gradients back to the raw embeddings.
pub fn home_loss(
    views: &[&EmbeddingBatch],
    plan: &ResolvedPlan,
    config: &LossConfig,
    want_gradients: bool,
) -> Result<LossValue> {
    config.validate()?;
    if views.len() != plan.view_count {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!(
                "plan expects {} views, got {}",
                plan.view_count,
                views.len()
            ),
        });
    }
    let normalized: Vec<NormalizedBatch> = views
        .iter()
        .map(|v| embedding::normalize(v, config.epsilon))
        .collect::<Result<_>>()?;
    let norm_refs: Vec<&NormalizedBatch> = normalized.iter().collect();
    let (n, d) = check_views_consistent(&norm_refs)?;

    let (invariance, mut grad_cols) = invariance_cols(&norm_refs)?;

    let unit_count = plan.units.len();
    let unit_weight = if unit_count == 0 {
        0.0
    } else {
        config.lambda / unit_count as f64
    };
    let mut redundancy_per_view = Vec::with_capacity(unit_count);
    for unit in &plan.units {
        let (value, unit_grads) = redundancy_cols(&norm_refs, unit, config, want_gradients)?;
        redundancy_per_view.push(value);
        if let Some(unit_grads) = unit_grads {
            for (acc, ug) in grad_cols.iter_mut().zip(unit_grads.iter()) {
                for (x, &y) in acc.iter_mut().zip(ug.iter()) {
                    *x += unit_weight * y;
                }
            }
        }
    }
    let redundancy_mean = if unit_count == 0 {
        0.0
    } else {
        sums::compensated_sum(&redundancy_per_view) / unit_count as f64
    };
    let total = invariance + config.lambda * redundancy_mean;
    if !total.is_finite() {
        return Err(HomeError::NonFinite { context: "home_loss" });
    }

    let gradients = if want_gradients {
        let mut out = Vec::with_capacity(views.len());
        for (view, cols) in views.iter().zip(grad_cols.iter()) {
            let upstream = cols_to_mat(cols, n, d);
            out.push(embedding::normalize_backward(view, &upstream, config.epsilon)?);
        }
        Some(out)
    } else {
        None
    };

    Ok(LossValue {
        total,
        invariance,
        redundancy_per_view,
        gradients,
    })
}
