//! Enumeration, sampling, and evaluation of empirical mixed moments.
//!
//! A mixed moment of order K is (1/N) sum_n prod_k v_k[n] over K distinct
//! feature columns with strictly increasing indices. Tuples are walked in
//! lexicographic order with shared prefix products, in fixed-size chunks so
//! sequential and parallel execution produce identical floating-point
//! results (see [`crate::exec`]).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::NormalizedBatch;
use crate::error::{HomeError, Result};
use crate::exec::{self, ComputeMode};
use crate::rng::{self, TAG_SAMPLE};
use crate::sums;

/// Strictly increasing 0-based feature indices; order K >= 2. External
/// formats print indices 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexTuple {
    indices: Vec<usize>,
}

impl IndexTuple {
    pub fn new(indices: Vec<usize>, feature_dim: usize) -> Result<Self> {
        if indices.len() < 2 {
            return Err(HomeError::InvalidOrder {
                order: indices.len(),
                feature_dim,
            });
        }
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_bounds = indices.last().is_some_and(|&last| last < feature_dim);
        if !increasing || !in_bounds {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!(
                    "tuple indices must be strictly increasing and below {feature_dim}"
                ),
            });
        }
        Ok(Self { indices })
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Which tuples to evaluate per order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sampling {
    /// Every strictly increasing tuple.
    Full,
    /// A seeded uniform sample without replacement per order. Orders missing
    /// from the map fall back to full enumeration.
    Sampled {
        per_order: BTreeMap<usize, u64>,
        seed: u64,
    },
}

/// Feature dimension, the set of orders to evaluate, and the sampling policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentSpec {
    feature_dim: usize,
    orders: BTreeSet<usize>,
    sampling: Sampling,
}

impl MomentSpec {
    pub fn full(feature_dim: usize, orders: BTreeSet<usize>) -> Result<Self> {
        Self::new(feature_dim, orders, Sampling::Full)
    }

    pub fn sampled(
        feature_dim: usize,
        orders: BTreeSet<usize>,
        per_order: BTreeMap<usize, u64>,
        seed: u64,
    ) -> Result<Self> {
        Self::new(feature_dim, orders, Sampling::Sampled { per_order, seed })
    }

    pub fn new(feature_dim: usize, orders: BTreeSet<usize>, sampling: Sampling) -> Result<Self> {
        if orders.is_empty() {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("orders must be non-empty"),
            });
        }
        for &k in &orders {
            if k < 2 || k > feature_dim {
                return Err(HomeError::InvalidOrder {
                    order: k,
                    feature_dim,
                });
            }
        }
        if let Sampling::Sampled { per_order, .. } = &sampling {
            for (&k, &count) in per_order {
                if !orders.contains(&k) {
                    return Err(HomeError::InvalidConfig {
                        message: alloc::format!("sample count given for unused order {k}"),
                    });
                }
                let total = binomial(feature_dim, k)?;
                if count == 0 || u128::from(count) > total {
                    return Err(HomeError::SampleCountOutOfRange {
                        requested: u128::from(count),
                        available: total,
                    });
                }
            }
        }
        Ok(Self {
            feature_dim,
            orders,
            sampling,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn orders(&self) -> &BTreeSet<usize> {
        &self.orders
    }

    pub fn sampling(&self) -> &Sampling {
        &self.sampling
    }
}

/// Checked binomial coefficient in u128. Multiplies before dividing at each
/// step, which stays exact, and reports overflow instead of wrapping.
pub fn binomial(n: usize, k: usize) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        let factor = (n - k + i + 1) as u128;
        acc = acc
            .checked_mul(factor)
            .ok_or(HomeError::CombinationOverflow {
                feature_dim: n,
                order: k,
            })?;
        acc /= (i + 1) as u128;
    }
    Ok(acc)
}

/// M = sum over orders of C(feature_dim, K), exactly.
pub fn count_combinations(feature_dim: usize, orders: &BTreeSet<usize>) -> Result<u128> {
    let mut total: u128 = 0;
    for &k in orders {
        if k < 2 || k > feature_dim {
            return Err(HomeError::InvalidOrder {
                order: k,
                feature_dim,
            });
        }
        total = total
            .checked_add(binomial(feature_dim, k)?)
            .ok_or(HomeError::CombinationOverflow { feature_dim, order: k })?;
    }
    Ok(total)
}

/// Lexicographic successor of a strictly increasing combination in place.
/// Returns the lowest position that changed, or None when `idx` was the last
/// combination.
fn advance_combination(idx: &mut [usize], feature_dim: usize) -> Option<usize> {
    let k = idx.len();
    for j in (0..k).rev() {
        if idx[j] < feature_dim - k + j {
            idx[j] += 1;
            for l in j + 1..k {
                idx[l] = idx[l - 1] + 1;
            }
            return Some(j);
        }
    }
    None
}

/// Combination at lexicographic `rank` among all C(feature_dim, k).
pub fn unrank_combination(feature_dim: usize, k: usize, rank: u128) -> Result<Vec<usize>> {
    let total = binomial(feature_dim, k)?;
    if rank >= total {
        return Err(HomeError::SampleCountOutOfRange {
            requested: rank,
            available: total,
        });
    }
    let mut out = Vec::with_capacity(k);
    let mut remaining = rank;
    let mut x = 0usize;
    for slot in 0..k {
        loop {
            // Combinations that put `x` at this slot fill the remaining
            // slots from the indices above x.
            let below = binomial(feature_dim - 1 - x, k - 1 - slot)?;
            if remaining < below {
                out.push(x);
                x += 1;
                break;
            }
            remaining -= below;
            x += 1;
        }
    }
    Ok(out)
}

/// Lexicographic rank of a strictly increasing combination; inverse of
/// [`unrank_combination`].
pub fn rank_of_combination(feature_dim: usize, indices: &[usize]) -> Result<u128> {
    let k = indices.len();
    let mut rank: u128 = 0;
    let mut prev: Option<usize> = None;
    for (slot, &ix) in indices.iter().enumerate() {
        let start = prev.map_or(0, |p| p + 1);
        for x in start..ix {
            rank += binomial(feature_dim - 1 - x, k - 1 - slot)?;
        }
        prev = Some(ix);
    }
    Ok(rank)
}

/// Iterator over all strictly increasing K-tuples in lexicographic order.
/// Holds O(K) state.
pub struct Combinations {
    feature_dim: usize,
    current: Vec<usize>,
    done: bool,
}

/// All K-combinations of 0..feature_dim, lexicographic.
pub fn enumerate_tuples(feature_dim: usize, k: usize) -> Result<Combinations> {
    if k < 2 || k > feature_dim {
        return Err(HomeError::InvalidOrder {
            order: k,
            feature_dim,
        });
    }
    Ok(Combinations {
        feature_dim,
        current: (0..k).collect(),
        done: false,
    })
}

impl Iterator for Combinations {
    type Item = IndexTuple;

    fn next(&mut self) -> Option<IndexTuple> {
        if self.done {
            return None;
        }
        let out = IndexTuple {
            indices: self.current.clone(),
        };
        if advance_combination(&mut self.current, self.feature_dim).is_none() {
            self.done = true;
        }
        Some(out)
    }
}

/// Uniform sample of `count` distinct K-combinations, sorted
/// lexicographically. Deterministic in `seed`. Implemented as a sparse
/// Fisher-Yates shuffle over combination ranks, so memory is O(count * K)
/// regardless of C(feature_dim, K).
pub fn sample_tuples(
    feature_dim: usize,
    k: usize,
    count: u128,
    seed: u64,
) -> Result<Vec<IndexTuple>> {
    if k < 2 || k > feature_dim {
        return Err(HomeError::InvalidOrder {
            order: k,
            feature_dim,
        });
    }
    let total = binomial(feature_dim, k)?;
    if count == 0 || count > total {
        return Err(HomeError::SampleCountOutOfRange {
            requested: count,
            available: total,
        });
    }
    let mut rng = rng::stream(seed, TAG_SAMPLE, feature_dim as u64, k as u64);
    let mut displaced: BTreeMap<u128, u128> = BTreeMap::new();
    let mut ranks = Vec::with_capacity(count as usize);
    for i in 0..count {
        let j = rng.gen_range(i..total);
        let take = displaced.get(&j).copied().unwrap_or(j);
        let here = displaced.get(&i).copied().unwrap_or(i);
        displaced.insert(j, here);
        ranks.push(take);
    }
    ranks.sort_unstable();
    let mut out = Vec::with_capacity(ranks.len());
    for r in ranks {
        out.push(IndexTuple {
            indices: unrank_combination(feature_dim, k, r)?,
        });
    }
    Ok(out)
}

/// (1/N) sum_n prod_k columns[k][n]. Products multiply left to right in the
/// given column order; the sum over n is pairwise.
pub fn mixed_moment(columns: &[&[f64]]) -> Result<f64> {
    let first = columns.first().ok_or(HomeError::InvalidConfig {
        message: alloc::format!("mixed_moment needs at least one column"),
    })?;
    let n = first.len();
    if n == 0 {
        return Err(HomeError::BatchTooSmall { rows: 0 });
    }
    let mut products = Vec::with_capacity(n);
    products.extend_from_slice(first);
    for col in &columns[1..] {
        if col.len() != n {
            return Err(HomeError::ShapeMismatch {
                context: "mixed_moment",
                expected: (n, 1),
                got: (col.len(), 1),
            });
        }
        for (p, &v) in products.iter_mut().zip(col.iter()) {
            *p *= v;
        }
    }
    if columns.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(HomeError::NonFinite {
            context: "mixed_moment",
        });
    }
    Ok(sums::pairwise_sum(&products) / n as f64)
}

/// One evaluated tuple of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    pub indices: IndexTuple,
    /// View id per tuple slot.
    pub views: Vec<usize>,
    pub value: f64,
}

impl MomentEntry {
    pub fn order(&self) -> usize {
        self.indices.order()
    }
}

/// All evaluated moments for a spec, ordered by ascending order and then
/// lexicographically by indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub entries: Vec<MomentEntry>,
    pub spec: MomentSpec,
}

/// View id per tuple slot, per order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAssignment {
    per_order: BTreeMap<usize, Vec<usize>>,
}

impl SlotAssignment {
    pub fn new(per_order: BTreeMap<usize, Vec<usize>>) -> Result<Self> {
        for (&order, views) in &per_order {
            if views.len() != order {
                return Err(HomeError::InvalidConfig {
                    message: alloc::format!(
                        "order {order} needs {order} slot views, got {}",
                        views.len()
                    ),
                });
            }
        }
        Ok(Self { per_order })
    }

    /// Every slot of every order reads the same view.
    pub fn self_view(orders: &BTreeSet<usize>, view: usize) -> Self {
        let per_order = orders.iter().map(|&k| (k, vec![view; k])).collect();
        Self { per_order }
    }

    pub fn views_for(&self, order: usize) -> Option<&[usize]> {
        self.per_order.get(&order).map(|v| v.as_slice())
    }
}

/// Evaluates the spec's tuples. `batches[v]` supplies columns for every slot
/// assigned view id v; all batches must share the sample count and the
/// spec's feature dimension.
pub fn moment_report(
    batches: &[&NormalizedBatch],
    slots: &SlotAssignment,
    spec: &MomentSpec,
    mode: ComputeMode,
) -> Result<MomentReport> {
    check_batches(batches, spec.feature_dim)?;
    let mut entries = Vec::new();
    for &k in &spec.orders {
        let views = slots
            .views_for(k)
            .ok_or_else(|| HomeError::InvalidConfig {
                message: alloc::format!("no slot assignment for order {k}"),
            })?;
        let ctx = slot_context(batches, views, k)?;
        let set = tuple_set(spec.feature_dim, k, &spec.sampling)?;
        let chunk_entries = eval_entries(&ctx, spec.feature_dim, &set, mode);
        entries.extend(chunk_entries.into_iter().map(|(indices, value)| MomentEntry {
            indices,
            views: views.to_vec(),
            value,
        }));
    }
    Ok(MomentReport {
        entries,
        spec: spec.clone(),
    })
}

fn check_batches(batches: &[&NormalizedBatch], feature_dim: usize) -> Result<()> {
    let first = batches.first().ok_or(HomeError::InvalidConfig {
        message: alloc::format!("at least one batch required"),
    })?;
    let n = first.samples();
    for b in batches {
        if b.samples() != n || b.features() != feature_dim {
            return Err(HomeError::ShapeMismatch {
                context: "moment batches",
                expected: (n, feature_dim),
                got: (b.samples(), b.features()),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared tuple-walking engine (also used by the loss module).

/// Per-slot column sources for one order.
pub(crate) struct SlotContext<'a> {
    /// Batch read by each slot; length = order.
    pub batches: Vec<&'a NormalizedBatch>,
    /// Gradient-buffer index per slot (the view id).
    pub views: Vec<usize>,
}

pub(crate) fn slot_context<'a>(
    batches: &[&'a NormalizedBatch],
    views: &[usize],
    order: usize,
) -> Result<SlotContext<'a>> {
    if views.len() != order {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("order {order} slot assignment has {} views", views.len()),
        });
    }
    let mut slot_batches = Vec::with_capacity(order);
    for &v in views {
        let b = batches.get(v).ok_or_else(|| HomeError::InvalidConfig {
            message: alloc::format!("slot view {v} out of range for {} views", batches.len()),
        })?;
        slot_batches.push(*b);
    }
    Ok(SlotContext {
        batches: slot_batches,
        views: views.to_vec(),
    })
}

/// Tuples to walk: a contiguous rank range (full enumeration) or an explicit
/// lexicographically sorted list (sampled).
pub(crate) enum TupleSet {
    Range { total: u128 },
    List(Vec<IndexTuple>),
}

impl TupleSet {
    fn len(&self) -> u128 {
        match self {
            TupleSet::Range { total } => *total,
            TupleSet::List(list) => list.len() as u128,
        }
    }
}

/// Builds the tuple set for one order under a sampling policy.
pub(crate) fn tuple_set(feature_dim: usize, k: usize, sampling: &Sampling) -> Result<TupleSet> {
    match sampling {
        Sampling::Full => Ok(TupleSet::Range {
            total: binomial(feature_dim, k)?,
        }),
        Sampling::Sampled { per_order, seed } => match per_order.get(&k) {
            None => Ok(TupleSet::Range {
                total: binomial(feature_dim, k)?,
            }),
            Some(&count) => Ok(TupleSet::List(sample_tuples(
                feature_dim,
                k,
                u128::from(count),
                *seed,
            )?)),
        },
    }
}

/// How many tuples of the full enumeration the set stands for; the sampled
/// redundancy estimator scales squared-moment sums by represented / walked.
pub(crate) fn tuple_weight(feature_dim: usize, k: usize, set: &TupleSet) -> Result<f64> {
    match set {
        TupleSet::Range { .. } => Ok(1.0),
        TupleSet::List(list) => {
            let total = binomial(feature_dim, k)?;
            Ok(total as f64 / list.len() as f64)
        }
    }
}

struct ChunkOutput {
    sum_sq: f64,
    entries: Vec<(IndexTuple, f64)>,
    /// Col-major (feature-major) gradient of sum of m^2, per view.
    grads: Option<Vec<Vec<f64>>>,
}

/// Walks one chunk of tuples. Prefix products are shared between
/// lexicographically adjacent tuples: when the walk advances at position p,
/// only product rows p..k are recomputed, which is bitwise identical to
/// recomputing everything because each row is a fixed left-to-right product.
#[allow(clippy::too_many_arguments)]
fn eval_chunk(
    ctx: &SlotContext<'_>,
    feature_dim: usize,
    set: &TupleSet,
    lo: u128,
    hi: u128,
    view_count: usize,
    want_entries: bool,
    want_grads: bool,
) -> Result<ChunkOutput> {
    let k = ctx.batches.len();
    let n = ctx.batches[0].samples();
    let nf = n as f64;
    let mut idx: Vec<usize> = match set {
        TupleSet::Range { .. } => unrank_combination(feature_dim, k, lo)?,
        TupleSet::List(list) => list[lo as usize].indices.clone(),
    };
    let mut prefix = vec![0.0f64; k * n];
    let mut suffix = vec![0.0f64; k * n];
    let mut sum_sq = sums::Compensated::new();
    let mut entries = Vec::new();
    let mut grads = want_grads.then(|| vec![vec![0.0f64; n * feature_dim]; view_count]);

    let mut pos = lo;
    // First tuple of the chunk rebuilds every product row.
    let mut changed_from = 0usize;
    while pos < hi {
        if pos > lo {
            match set {
                TupleSet::Range { .. } => {
                    changed_from = advance_combination(&mut idx, feature_dim)
                        .expect("rank range exceeded the enumeration");
                }
                TupleSet::List(list) => {
                    let next = &list[pos as usize].indices;
                    changed_from = idx
                        .iter()
                        .zip(next.iter())
                        .position(|(a, b)| a != b)
                        .expect("sampled tuples must be distinct");
                    idx.copy_from_slice(next);
                }
            }
        }
        for j in changed_from..k {
            let col = ctx.batches[j].col(idx[j]);
            if j == 0 {
                prefix[..n].copy_from_slice(col);
            } else {
                let (before, current) = prefix.split_at_mut(j * n);
                let prev = &before[(j - 1) * n..];
                for i in 0..n {
                    current[i] = prev[i] * col[i];
                }
            }
        }
        let m = sums::pairwise_sum(&prefix[(k - 1) * n..k * n]) / nf;
        sum_sq.add(m * m);
        if want_entries {
            entries.push((
                IndexTuple {
                    indices: idx.clone(),
                },
                m,
            ));
        }
        if let Some(grads) = grads.as_mut() {
            // d(m^2)/dz[slot j] = (2m/N) * product of the other slots'
            // columns, assembled from prefix and suffix product rows.
            for j in (0..k).rev() {
                let col = ctx.batches[j].col(idx[j]);
                if j == k - 1 {
                    suffix[(k - 1) * n..].copy_from_slice(col);
                } else {
                    let (current, after) = suffix.split_at_mut((j + 1) * n);
                    let current = &mut current[j * n..];
                    for i in 0..n {
                        current[i] = col[i] * after[i];
                    }
                }
            }
            let scale = 2.0 * m / nf;
            for j in 0..k {
                let target = &mut grads[ctx.views[j]][idx[j] * n..(idx[j] + 1) * n];
                match (j > 0, j + 1 < k) {
                    (true, true) => {
                        let pre = &prefix[(j - 1) * n..j * n];
                        let suf = &suffix[(j + 1) * n..(j + 2) * n];
                        for i in 0..n {
                            target[i] += scale * pre[i] * suf[i];
                        }
                    }
                    (true, false) => {
                        let pre = &prefix[(j - 1) * n..j * n];
                        for i in 0..n {
                            target[i] += scale * pre[i];
                        }
                    }
                    (false, true) => {
                        let suf = &suffix[(j + 1) * n..(j + 2) * n];
                        for i in 0..n {
                            target[i] += scale * suf[i];
                        }
                    }
                    // k = 1 never reaches the engine (orders start at 2).
                    (false, false) => {
                        for t in target.iter_mut() {
                            *t += scale;
                        }
                    }
                }
            }
        }
        pos += 1;
    }
    Ok(ChunkOutput {
        sum_sq: sum_sq.value(),
        entries,
        grads,
    })
}

fn chunk_bounds(len: u128, chunk: usize) -> (u128, usize) {
    let size = exec::CHUNK_TUPLES;
    let lo = chunk as u128 * size;
    let hi = (lo + size).min(len);
    (lo, (hi - lo) as usize)
}

fn run_order(
    ctx: &SlotContext<'_>,
    feature_dim: usize,
    set: &TupleSet,
    mode: ComputeMode,
    view_count: usize,
    want_entries: bool,
    want_grads: bool,
) -> Result<(f64, Vec<(IndexTuple, f64)>, Option<Vec<Vec<f64>>>)> {
    let len = set.len();
    if len == 0 {
        return Ok((0.0, Vec::new(), want_grads.then(Vec::new)));
    }
    let chunks = len.div_ceil(exec::CHUNK_TUPLES) as usize;
    let outputs = exec::run_chunks(chunks, mode, |c| {
        let (lo, span) = chunk_bounds(len, c);
        eval_chunk(
            ctx,
            feature_dim,
            set,
            lo,
            lo + span as u128,
            view_count,
            want_entries,
            want_grads,
        )
    });
    let mut total = 0.0f64;
    let mut entries = Vec::new();
    let mut grads = None;
    // Chunk results fold in chunk order regardless of execution mode.
    for out in outputs {
        let out = out?;
        total += out.sum_sq;
        entries.extend(out.entries);
        if let Some(chunk_grads) = out.grads {
            match grads.as_mut() {
                None => grads = Some(chunk_grads),
                Some(acc) => {
                    for (a, c) in acc.iter_mut().zip(chunk_grads.iter()) {
                        for (x, y) in a.iter_mut().zip(c.iter()) {
                            *x += y;
                        }
                    }
                }
            }
        }
    }
    Ok((total, entries, grads))
}

/// Per-tuple values for a tuple set (no gradients).
pub(crate) fn eval_entries(
    ctx: &SlotContext<'_>,
    feature_dim: usize,
    set: &TupleSet,
    mode: ComputeMode,
) -> Vec<(IndexTuple, f64)> {
    // Errors cannot occur once the context and set are built; unwrap via
    // expect keeps the signature simple for internal callers.
    run_order(ctx, feature_dim, set, mode, 0, true, false)
        .map(|(_, entries, _)| entries)
        .expect("entry evaluation cannot fail after validation")
}

/// Sum of squared moments over the set, optionally with its gradient with
/// respect to each view's normalized values (col-major per view).
pub(crate) fn eval_square_sum(
    ctx: &SlotContext<'_>,
    feature_dim: usize,
    set: &TupleSet,
    mode: ComputeMode,
    view_count: usize,
    want_grads: bool,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    let (total, _, grads) = run_order(ctx, feature_dim, set, mode, view_count, false, want_grads)?;
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::NormalizedBatch;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(3, 2).unwrap(), 3);
        assert_eq!(binomial(3, 3).unwrap(), 1);
        assert_eq!(binomial(2, 2).unwrap(), 1);
        assert_eq!(binomial(10, 3).unwrap(), 120);
        assert_eq!(binomial(5, 0).unwrap(), 1);
        assert_eq!(binomial(4, 7).unwrap(), 0);
    }

    #[test]
    fn count_combinations_matches_pinned_values() {
        let orders: BTreeSet<usize> = [2, 3].into_iter().collect();
        assert_eq!(count_combinations(3, &orders).unwrap(), 4);
        assert_eq!(count_combinations(1024, &orders).unwrap(), 178_956_800);
        let pair_only: BTreeSet<usize> = [2].into_iter().collect();
        assert_eq!(count_combinations(2, &pair_only).unwrap(), 1);
        assert_eq!(count_combinations(1024, &pair_only).unwrap(), 523_776);
    }

    #[test]
    fn count_combinations_rejects_bad_orders() {
        let orders: BTreeSet<usize> = [1].into_iter().collect();
        assert!(count_combinations(4, &orders).is_err());
        let orders: BTreeSet<usize> = [5].into_iter().collect();
        assert!(count_combinations(4, &orders).is_err());
    }

    #[test]
    fn binomial_overflow_is_reported() {
        assert!(matches!(
            binomial(1000, 500),
            Err(HomeError::CombinationOverflow { .. })
        ));
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let tuples: Vec<_> = enumerate_tuples(3, 2).unwrap().collect();
        let indices: Vec<&[usize]> = tuples.iter().map(|t| t.indices()).collect();
        assert_eq!(indices, vec![&[0, 1][..], &[0, 2], &[1, 2]]);

        let tuples: Vec<_> = enumerate_tuples(4, 3).unwrap().collect();
        assert_eq!(tuples.len(), 4);
        assert_eq!(tuples[0].indices(), &[0, 1, 2]);
        assert_eq!(tuples[3].indices(), &[1, 2, 3]);

        let count = enumerate_tuples(10, 3).unwrap().count() as u128;
        assert_eq!(count, binomial(10, 3).unwrap());
    }

    #[test]
    fn unrank_inverts_enumeration_order() {
        for (rank, tuple) in enumerate_tuples(7, 3).unwrap().enumerate() {
            let direct = unrank_combination(7, 3, rank as u128).unwrap();
            assert_eq!(direct, tuple.indices());
            assert_eq!(
                rank_of_combination(7, tuple.indices()).unwrap(),
                rank as u128
            );
        }
    }

    #[test]
    fn sample_all_equals_enumeration() {
        let total = binomial(6, 2).unwrap();
        let sampled = sample_tuples(6, 2, total, 99).unwrap();
        let full: Vec<_> = enumerate_tuples(6, 2).unwrap().collect();
        assert_eq!(sampled, full);
    }

    #[test]
    fn sampling_is_deterministic_and_sorted() {
        let a = sample_tuples(6, 2, 5, 1234).unwrap();
        let b = sample_tuples(6, 2, 5, 1234).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
        let c = sample_tuples(6, 2, 5, 1235).unwrap();
        assert_ne!(a, c, "seed change should move the sample");
    }

    #[test]
    fn sampling_rejects_out_of_range_counts() {
        assert!(matches!(
            sample_tuples(5, 2, 11, 0),
            Err(HomeError::SampleCountOutOfRange { .. })
        ));
        assert!(sample_tuples(5, 2, 0, 0).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        // D=5, K=2: 10 pairs; 1e5 draws of 3 pairs each. Each pair should
        // appear with frequency 0.3 +- 0.01.
        let mut counts = [0u64; 10];
        let reps = 100_000u64;
        for s in 0..reps {
            for t in sample_tuples(5, 2, 3, s).unwrap() {
                counts[rank_of_combination(5, t.indices()).unwrap() as usize] += 1;
            }
        }
        for (pair, &c) in counts.iter().enumerate() {
            let freq = c as f64 / reps as f64;
            assert!(
                (freq - 0.3).abs() < 0.01,
                "pair {pair} frequency {freq} strayed from 0.3"
            );
        }
    }

    #[test]
    fn mixed_moment_matches_hand_computation() {
        // Identical unit-norm column used twice: moment = 1/N.
        let col = vec![0.5, -0.5, 0.5, -0.5];
        let m = mixed_moment(&[&col, &col]).unwrap();
        assert_eq!(m, 0.25);

        let a = vec![1.0, 2.0];
        let b = vec![3.0, -4.0];
        assert_eq!(mixed_moment(&[&a, &b]).unwrap(), (3.0 - 8.0) / 2.0);
    }

    #[test]
    fn mixed_moment_rejects_bad_input() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0];
        assert!(mixed_moment(&[&a, &b]).is_err());
        let c = vec![f64::NAN, 0.0];
        assert!(mixed_moment(&[&a, &c]).is_err());
        assert!(mixed_moment(&[]).is_err());
        let empty: Vec<f64> = vec![];
        assert!(mixed_moment(&[&empty]).is_err());
    }

    fn unit_batch(columns: &[Vec<f64>]) -> NormalizedBatch {
        NormalizedBatch::from_columns(columns, 0).unwrap()
    }

    #[test]
    fn report_counts_and_order() {
        // D=4 self assignment, orders {2,3}: 6 pairs + 4 triples.
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|d| (0..8).map(|n| ((n * 7 + d * 3) % 5) as f64 / 8.0 - 0.25).collect())
            .collect();
        let batch = unit_batch(&cols);
        let orders: BTreeSet<usize> = [2, 3].into_iter().collect();
        let spec = MomentSpec::full(4, orders.clone()).unwrap();
        let slots = SlotAssignment::self_view(&orders, 0);
        let report =
            moment_report(&[&batch], &slots, &spec, ComputeMode::Sequential).unwrap();
        assert_eq!(report.entries.len(), 10);
        assert!(report.entries[..6].iter().all(|e| e.order() == 2));
        assert!(report.entries[6..].iter().all(|e| e.order() == 3));
        // Lexicographic within each order.
        assert_eq!(report.entries[0].indices.indices(), &[0, 1]);
        assert_eq!(report.entries[5].indices.indices(), &[2, 3]);
        assert_eq!(report.entries[6].indices.indices(), &[0, 1, 2]);
    }

    #[test]
    fn report_matches_direct_mixed_moment() {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|d| {
                (0..12)
                    .map(|n| (((n * 13 + d * 5 + 3) % 17) as f64 - 8.0) / 16.0)
                    .collect()
            })
            .collect();
        let batch = unit_batch(&cols);
        let orders: BTreeSet<usize> = [2, 3].into_iter().collect();
        let spec = MomentSpec::full(5, orders.clone()).unwrap();
        let slots = SlotAssignment::self_view(&orders, 0);
        let report =
            moment_report(&[&batch], &slots, &spec, ComputeMode::Sequential).unwrap();
        for e in &report.entries {
            let picked: Vec<&[f64]> = e
                .indices
                .indices()
                .iter()
                .map(|&d| cols[d].as_slice())
                .collect();
            let direct = mixed_moment(&picked).unwrap();
            assert_eq!(e.value, direct, "tuple {:?}", e.indices.indices());
        }
    }

    #[test]
    fn sampled_report_with_full_count_matches_full_report() {
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|d| {
                (0..9)
                    .map(|n| (((n * 11 + d * 7 + 1) % 19) as f64 - 9.0) / 16.0)
                    .collect()
            })
            .collect();
        let batch = unit_batch(&cols);
        let orders: BTreeSet<usize> = [2, 3].into_iter().collect();
        let full_spec = MomentSpec::full(6, orders.clone()).unwrap();
        let counts: BTreeMap<usize, u64> = [
            (2, binomial(6, 2).unwrap() as u64),
            (3, binomial(6, 3).unwrap() as u64),
        ]
        .into_iter()
        .collect();
        let sampled_spec = MomentSpec::sampled(6, orders.clone(), counts, 7).unwrap();
        let slots = SlotAssignment::self_view(&orders, 0);
        let full = moment_report(&[&batch], &slots, &full_spec, ComputeMode::Sequential).unwrap();
        let sampled =
            moment_report(&[&batch], &slots, &sampled_spec, ComputeMode::Sequential).unwrap();
        assert_eq!(full.entries.len(), sampled.entries.len());
        for (a, b) in full.entries.iter().zip(sampled.entries.iter()) {
            assert_eq!(a.indices, b.indices);
            assert_eq!(a.value, b.value, "values must be bitwise identical");
        }
    }

    #[test]
    fn report_rejects_mismatched_batches() {
        let a = unit_batch(&[vec![0.5, -0.5], vec![0.5, -0.5]]);
        let b = unit_batch(&[vec![0.5, -0.5, 0.0], vec![0.5, -0.5, 0.0]]);
        let orders: BTreeSet<usize> = [2].into_iter().collect();
        let spec = MomentSpec::full(2, orders.clone()).unwrap();
        let mut per_order = BTreeMap::new();
        per_order.insert(2, vec![0, 1]);
        let slots = SlotAssignment::new(per_order).unwrap();
        assert!(moment_report(&[&a, &b], &slots, &spec, ComputeMode::Sequential).is_err());
    }

    #[test]
    fn spec_validation() {
        let empty: BTreeSet<usize> = BTreeSet::new();
        assert!(MomentSpec::full(4, empty).is_err());
        let bad: BTreeSet<usize> = [1].into_iter().collect();
        assert!(MomentSpec::full(4, bad).is_err());
        let orders: BTreeSet<usize> = [2].into_iter().collect();
        let mut counts = BTreeMap::new();
        counts.insert(2, 100u64); // only 6 pairs exist for D=4
        assert!(MomentSpec::sampled(4, orders.clone(), counts, 0).is_err());
        let mut extra = BTreeMap::new();
        extra.insert(3, 1u64); // order 3 not requested
        assert!(MomentSpec::sampled(4, orders, extra, 0).is_err());
    }

    #[test]
    fn index_tuple_validation() {
        assert!(IndexTuple::new(vec![0, 1], 4).is_ok());
        assert!(IndexTuple::new(vec![1, 1], 4).is_err());
        assert!(IndexTuple::new(vec![2, 1], 4).is_err());
        assert!(IndexTuple::new(vec![0, 4], 4).is_err());
        assert!(IndexTuple::new(vec![3], 4).is_err());
    }
}
