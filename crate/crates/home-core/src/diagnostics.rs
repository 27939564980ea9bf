//! Evaluation tools: a linear probe on frozen representations, plug-in
//! total correlation for small discrete variable sets, and moment audits of
//! embedding batches.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::constructions::xor_bit_samples;
use crate::embedding::{normalize, EmbeddingBatch, DEFAULT_EPSILON};
use crate::error::{HomeError, Result};
use crate::exec::ComputeMode;
use crate::math;
use crate::matrix::Mat;
use crate::moments::{moment_report, MomentReport, MomentSpec, SlotAssignment};
use crate::sums::Compensated;

/// Natural log of 2, the total correlation of the three-bit parity triple.
pub const LN_2: f64 = core::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub iterations: u64,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_count: usize,
    pub weights: Mat,
    pub bias: Vec<f64>,
}

fn class_count(train_labels: &[usize], test_labels: &[usize]) -> Result<usize> {
    let mut seen_train = alloc::collections::BTreeSet::new();
    seen_train.extend(train_labels.iter().copied());
    if seen_train.len() < 2 {
        return Err(HomeError::SingleClass);
    }
    let max = train_labels
        .iter()
        .chain(test_labels.iter())
        .copied()
        .max()
        .unwrap_or(0);
    Ok(max + 1)
}

/// Multinomial logistic regression trained from zeros by full-batch gradient
/// descent, no regularization. Features are standardized with training-set
/// statistics before fitting; constant features are left at zero.
pub fn linear_probe(
    train_x: &Mat,
    train_labels: &[usize],
    test_x: &Mat,
    test_labels: &[usize],
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if train_x.rows() != train_labels.len() || test_x.rows() != test_labels.len() {
        return Err(HomeError::ShapeMismatch {
            context: "probe labels",
            expected: (train_x.rows(), 1),
            got: (train_labels.len(), 1),
        });
    }
    if train_x.cols() != test_x.cols() || train_x.rows() == 0 || test_x.rows() == 0 {
        return Err(HomeError::ShapeMismatch {
            context: "probe features",
            expected: (train_x.rows(), train_x.cols()),
            got: (test_x.rows(), test_x.cols()),
        });
    }
    if !(config.lr.is_finite() && config.lr > 0.0) || config.iterations == 0 {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("probe needs a positive learning rate and iterations"),
        });
    }
    let classes = class_count(train_labels, test_labels)?;
    let (n, r) = (train_x.rows(), train_x.cols());

    // Standardize with training statistics.
    let mut mean = vec![0.0; r];
    let mut sd = vec![0.0; r];
    for j in 0..r {
        let mut acc = Compensated::new();
        for i in 0..n {
            acc.add(train_x.at(i, j));
        }
        mean[j] = acc.value() / n as f64;
        let mut sq = Compensated::new();
        for i in 0..n {
            let d = train_x.at(i, j) - mean[j];
            sq.add(d * d);
        }
        let var = sq.value() / n as f64;
        sd[j] = if var > 0.0 { math::sqrt(var) } else { 0.0 };
    }
    let standardize = |x: &Mat| -> Mat {
        let mut out = Mat::zeros(x.rows(), r);
        for i in 0..x.rows() {
            for j in 0..r {
                let v = if sd[j] > 0.0 {
                    (x.at(i, j) - mean[j]) / sd[j]
                } else {
                    0.0
                };
                out.set(i, j, v);
            }
        }
        out
    };
    let xs = standardize(train_x);

    let mut weights = Mat::zeros(classes, r);
    let mut bias = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    for _ in 0..config.iterations {
        let mut gw = Mat::zeros(classes, r);
        let mut gb = vec![0.0; classes];
        for i in 0..n {
            let xi = xs.row(i);
            let mut zmax = f64::NEG_INFINITY;
            for c in 0..classes {
                let wr = weights.row(c);
                let mut z = bias[c];
                for j in 0..r {
                    z += wr[j] * xi[j];
                }
                probs[c] = z;
                zmax = zmax.max(z);
            }
            let mut denom = 0.0;
            for p in probs.iter_mut() {
                *p = math::exp(*p - zmax);
                denom += *p;
            }
            for c in 0..classes {
                let err = probs[c] / denom - f64::from(u8::from(train_labels[i] == c));
                gb[c] += err;
                let gr = gw.row_mut(c);
                for j in 0..r {
                    gr[j] += err * xi[j];
                }
            }
        }
        let scale = config.lr / n as f64;
        for c in 0..classes {
            bias[c] -= scale * gb[c];
            let wr = weights.row_mut(c);
            let gr = gw.row(c);
            for j in 0..r {
                wr[j] -= scale * gr[j];
            }
        }
    }
    if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
        return Err(HomeError::NonFinite {
            context: "probe weights",
        });
    }

    let ts = standardize(test_x);
    let mut class_hits = vec![0usize; classes];
    let mut class_totals = vec![0usize; classes];
    let mut hits = 0usize;
    for i in 0..ts.rows() {
        let xi = ts.row(i);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for c in 0..classes {
            let wr = weights.row(c);
            let mut z = bias[c];
            for j in 0..r {
                z += wr[j] * xi[j];
            }
            if z > best.0 {
                best = (z, c);
            }
        }
        let truth = test_labels[i];
        class_totals[truth] += 1;
        if best.1 == truth {
            hits += 1;
            class_hits[truth] += 1;
        }
    }
    let per_class_accuracy = class_hits
        .iter()
        .zip(class_totals.iter())
        .map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 })
        .collect();
    Ok(ProbeResult {
        accuracy: hits as f64 / ts.rows() as f64,
        per_class_accuracy,
        class_count: classes,
        weights,
        bias,
    })
}

pub const TC_MAX_VARIABLES: usize = 4;
pub const TC_MAX_ALPHABET: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TCEstimate {
    pub value: f64,
    pub variables: usize,
    pub samples: usize,
}

fn entropy_from_counts(counts: &[u64], total: usize) -> f64 {
    let n = total as f64;
    let mut acc = Compensated::new();
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            acc.add(-p * math::ln(p));
        }
    }
    acc.value()
}

/// Plug-in total correlation of jointly sampled discrete variables:
/// sum of marginal entropies minus the joint entropy, in nats. Rows are
/// samples, each row one value per variable, alphabet 0..8, at most four
/// variables.
pub fn total_correlation_discrete(samples: &[Vec<u8>]) -> Result<TCEstimate> {
    let Some(first) = samples.first() else {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("total correlation needs at least one sample"),
        });
    };
    let d = first.len();
    if d == 0 || d > TC_MAX_VARIABLES {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!("total correlation supports 1..={TC_MAX_VARIABLES} variables"),
        });
    }
    let base = TC_MAX_ALPHABET as usize;
    let mut marginal = vec![vec![0u64; base]; d];
    let mut joint = vec![0u64; base.pow(d as u32)];
    for row in samples {
        if row.len() != d {
            return Err(HomeError::ShapeMismatch {
                context: "total correlation rows",
                expected: (samples.len(), d),
                got: (samples.len(), row.len()),
            });
        }
        let mut cell = 0usize;
        for (v, &value) in row.iter().enumerate() {
            if value >= TC_MAX_ALPHABET {
                return Err(HomeError::InvalidConfig {
                    message: alloc::format!("symbol {value} outside alphabet 0..{TC_MAX_ALPHABET}"),
                });
            }
            marginal[v][value as usize] += 1;
            cell = cell * base + value as usize;
        }
        joint[cell] += 1;
    }
    let n = samples.len();
    let mut value = Compensated::new();
    for counts in &marginal {
        value.add(entropy_from_counts(counts, n));
    }
    value.add(-entropy_from_counts(&joint, n));
    Ok(TCEstimate {
        value: value.value(),
        variables: d,
        samples: n,
    })
}

/// Mutual information of two discrete variables, the two-variable case of
/// total correlation.
pub fn mutual_information_discrete(x: &[u8], y: &[u8]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HomeError::ShapeMismatch {
            context: "mutual information",
            expected: (x.len(), 1),
            got: (y.len(), 1),
        });
    }
    let rows: Vec<Vec<u8>> = x.iter().zip(y.iter()).map(|(&a, &b)| vec![a, b]).collect();
    Ok(total_correlation_discrete(&rows)?.value)
}

/// Estimator-level check of the pairwise-independent, mutually-dependent
/// parity triple: every pairwise mutual information stays near zero while
/// the three-way total correlation sits near ln 2.
#[derive(Debug, Clone, PartialEq)]
pub struct XorClaim {
    pub pairwise_mi: [f64; 3],
    pub total_correlation: f64,
    pub samples: usize,
}

pub const XOR_MI_CEILING: f64 = 0.01;
pub const XOR_TC_TOLERANCE: f64 = 0.02;

impl XorClaim {
    pub fn passes(&self) -> bool {
        self.pairwise_mi.iter().all(|&mi| mi <= XOR_MI_CEILING)
            && (self.total_correlation - LN_2).abs() <= XOR_TC_TOLERANCE
    }
}

pub fn xor_claim(samples: usize, seed: u64) -> Result<XorClaim> {
    let rows = xor_bit_samples(samples, seed);
    let col = |j: usize| -> Vec<u8> { rows.iter().map(|r| r[j]).collect() };
    let (c0, c1, c2) = (col(0), col(1), col(2));
    Ok(XorClaim {
        pairwise_mi: [
            mutual_information_discrete(&c0, &c1)?,
            mutual_information_discrete(&c0, &c2)?,
            mutual_information_discrete(&c1, &c2)?,
        ],
        total_correlation: total_correlation_discrete(&rows)?.value,
        samples,
    })
}

/// Decade bin edges for |moment| histograms: bin i counts values at or below
/// edge i (first match wins), the final bin everything larger than the last
/// edge.
pub const AUDIT_HISTOGRAM_EDGES: [f64; 7] = [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct OrderAudit {
    pub tuples: u64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub histogram: [u64; AUDIT_HISTOGRAM_EDGES.len() + 1],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAudit {
    pub report: MomentReport,
    pub per_order: BTreeMap<usize, OrderAudit>,
}

/// Normalizes a raw output batch and summarizes its self-view mixed moments
/// per order. The spec's sampling settings carry through, so large feature
/// dimensions can be audited on a tuple sample.
pub fn moment_audit(outputs: &Mat, spec: &MomentSpec, mode: ComputeMode) -> Result<MomentAudit> {
    let batch = EmbeddingBatch::new(outputs.clone(), 0)?;
    let normalized = normalize(&batch, DEFAULT_EPSILON)?;
    let slots = SlotAssignment::self_view(spec.orders(), 0);
    let report = moment_report(&[&normalized], &slots, spec, mode)?;

    let mut per_order: BTreeMap<usize, OrderAudit> = BTreeMap::new();
    let mut sums: BTreeMap<usize, Compensated> = BTreeMap::new();
    for entry in &report.entries {
        let order = entry.order();
        let audit = per_order.entry(order).or_insert(OrderAudit {
            tuples: 0,
            max_abs: 0.0,
            mean_abs: 0.0,
            histogram: [0; AUDIT_HISTOGRAM_EDGES.len() + 1],
        });
        let a = math::abs(entry.value);
        audit.tuples += 1;
        audit.max_abs = audit.max_abs.max(a);
        let bin = AUDIT_HISTOGRAM_EDGES
            .iter()
            .position(|&edge| a <= edge)
            .unwrap_or(AUDIT_HISTOGRAM_EDGES.len());
        audit.histogram[bin] += 1;
        sums.entry(order).or_insert_with(Compensated::new).add(a);
    }
    for (order, audit) in per_order.iter_mut() {
        audit.mean_abs = sums[order].value() / audit.tuples as f64;
    }
    Ok(MomentAudit { report, per_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::hadamard_batch;
    use crate::rng::{stream, TAG_EVAL};
    use alloc::collections::BTreeSet;
    use rand::Rng;

    fn blob_data(
        per_class: usize,
        centers: &[Vec<f64>],
        noise: f64,
        seed: u64,
    ) -> (Mat, Vec<usize>) {
        let mut rng = stream(seed, TAG_EVAL, 0, 0);
        let dim = centers[0].len();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                let mut row = Vec::with_capacity(dim);
                for &mu in center {
                    let jitter: f64 = rng.sample(rand_distr::StandardNormal);
                    row.push(mu + noise * jitter);
                }
                rows.push(row);
                labels.push(c);
            }
        }
        (Mat::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn probe_separates_wide_margin_blobs() {
        let centers = vec![vec![3.0, 0.0, 0.0], vec![-3.0, 0.0, 0.0]];
        let (train_x, train_y) = blob_data(40, &centers, 0.2, 1);
        let (test_x, test_y) = blob_data(20, &centers, 0.2, 2);
        let result =
            linear_probe(&train_x, &train_y, &test_x, &test_y, &ProbeConfig::default()).unwrap();
        assert!(result.accuracy >= 0.99, "accuracy {}", result.accuracy);
        assert_eq!(result.class_count, 2);
        assert_eq!(result.per_class_accuracy.len(), 2);
    }

    #[test]
    fn probe_on_shuffled_labels_sits_near_chance() {
        let centers = vec![
            vec![2.0, 0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.0, 2.0],
        ];
        let (train_x, train_y) = blob_data(100, &centers, 0.3, 3);
        let (test_x, test_y) = blob_data(100, &centers, 0.3, 4);
        // Random labels detach features from classes.
        let mut rng = stream(9, TAG_EVAL, 1, 0);
        let shuffled_train: Vec<usize> = train_y.iter().map(|_| rng.gen_range(0..4)).collect();
        let shuffled_test: Vec<usize> = test_y.iter().map(|_| rng.gen_range(0..4)).collect();
        let result = linear_probe(
            &train_x,
            &shuffled_train,
            &test_x,
            &shuffled_test,
            &ProbeConfig::default(),
        )
        .unwrap();
        assert!(
            (result.accuracy - 0.25).abs() <= 0.05,
            "accuracy {} should be near 1/4",
            result.accuracy
        );
    }

    #[test]
    fn probe_on_constant_features_cannot_beat_the_prior() {
        let train_x = Mat::from_vec(60, 3, vec![1.0; 180]).unwrap();
        let test_x = Mat::from_vec(30, 3, vec![1.0; 90]).unwrap();
        // Class 0 holds 2/3 of the mass.
        let train_y: Vec<usize> = (0..60).map(|i| usize::from(i % 3 == 2)).collect();
        let test_y: Vec<usize> = (0..30).map(|i| usize::from(i % 3 == 2)).collect();
        let result =
            linear_probe(&train_x, &train_y, &test_x, &test_y, &ProbeConfig::default()).unwrap();
        assert!(result.accuracy <= 2.0 / 3.0 + 0.02, "accuracy {}", result.accuracy);
    }

    #[test]
    fn probe_rejects_single_class_training_data() {
        let x = Mat::zeros(4, 2);
        let y = vec![0; 4];
        assert!(matches!(
            linear_probe(&x, &y, &x, &y, &ProbeConfig::default()),
            Err(HomeError::SingleClass)
        ));
    }

    #[test]
    fn tc_of_independent_bits_is_small() {
        let mut rng = stream(5, TAG_EVAL, 2, 0);
        let rows: Vec<Vec<u8>> = (0..10_000)
            .map(|_| {
                vec![
                    u8::from(rng.gen::<bool>()),
                    u8::from(rng.gen::<bool>()),
                    u8::from(rng.gen::<bool>()),
                ]
            })
            .collect();
        let tc = total_correlation_discrete(&rows).unwrap();
        assert!(tc.value >= -1e-9);
        assert!(tc.value.abs() <= 0.01, "tc {}", tc.value);
    }

    #[test]
    fn tc_of_copied_variable_is_its_entropy() {
        let mut rng = stream(6, TAG_EVAL, 3, 0);
        let rows: Vec<Vec<u8>> = (0..10_000)
            .map(|_| {
                let b = u8::from(rng.gen::<bool>());
                vec![b, b]
            })
            .collect();
        let tc = total_correlation_discrete(&rows).unwrap();
        assert!((tc.value - LN_2).abs() <= 0.01, "tc {}", tc.value);
    }

    #[test]
    fn tc_estimator_bias_shrinks_with_sample_size() {
        // Independent bits have true TC 0; the plug-in estimate decreases
        // toward it as N grows. Compare medians across seeds.
        let mut medians = Vec::new();
        for &n in &[100usize, 1000, 10_000] {
            let mut vals = Vec::new();
            for seed in 0..21u64 {
                let mut rng = stream(seed, TAG_EVAL, 4, 0);
                let rows: Vec<Vec<u8>> = (0..n)
                    .map(|_| {
                        vec![
                            u8::from(rng.gen::<bool>()),
                            u8::from(rng.gen::<bool>()),
                            u8::from(rng.gen::<bool>()),
                        ]
                    })
                    .collect();
                vals.push(total_correlation_discrete(&rows).unwrap().value);
            }
            vals.sort_by(f64::total_cmp);
            medians.push(vals[vals.len() / 2]);
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians {medians:?} should decrease"
        );
    }

    #[test]
    fn tc_rejects_bad_input() {
        assert!(total_correlation_discrete(&[]).is_err());
        assert!(total_correlation_discrete(&[vec![0, 1], vec![0]]).is_err());
        assert!(total_correlation_discrete(&[vec![8]]).is_err());
        assert!(total_correlation_discrete(&[vec![0; 5]]).is_err());
    }

    #[test]
    fn xor_claim_holds_at_ten_thousand_samples() {
        let claim = xor_claim(10_000, 42).unwrap();
        assert!(claim.passes(), "{claim:?}");
        assert!(claim.total_correlation >= 0.6);
    }

    #[test]
    fn audit_of_hadamard_batch_is_numerically_zero() {
        let batch = hadamard_batch(&[1, 2, 4, 8], 4).unwrap();
        let spec = MomentSpec::full(4, BTreeSet::from([2, 3])).unwrap();
        let audit = moment_audit(&batch, &spec, ComputeMode::Sequential).unwrap();
        for (order, summary) in &audit.per_order {
            assert!(
                summary.max_abs <= 1e-15,
                "order {order} max {}",
                summary.max_abs
            );
        }
        assert_eq!(audit.per_order[&2].tuples, 6);
        assert_eq!(audit.per_order[&3].tuples, 4);
        assert_eq!(audit.per_order[&2].histogram[0], 6, "all pairs in the lowest bin");
    }

    #[test]
    fn audit_of_orthonormalized_columns_has_tiny_pair_moments() {
        // Center then Gram-Schmidt a random batch; pair moments of exactly
        // orthonormal centered columns vanish up to roundoff.
        let (n, d) = (32, 5);
        let mut rng = stream(8, TAG_EVAL, 5, 0);
        let mut cols: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        for col in cols.iter_mut() {
            let mean = col.iter().sum::<f64>() / n as f64;
            for v in col.iter_mut() {
                *v -= mean;
            }
        }
        for j in 0..d {
            for prev in 0..j {
                let dot: f64 = cols[j].iter().zip(&cols[prev]).map(|(a, b)| a * b).sum();
                let prev_col = cols[prev].clone();
                for (v, p) in cols[j].iter_mut().zip(prev_col.iter()) {
                    *v -= dot * p;
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
        let mut batch = Mat::zeros(n, d);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                batch.set(i, j, v);
            }
        }
        let spec = MomentSpec::full(d, BTreeSet::from([2])).unwrap();
        let audit = moment_audit(&batch, &spec, ComputeMode::Sequential).unwrap();
        assert!(
            audit.per_order[&2].max_abs <= 1e-10,
            "max {}",
            audit.per_order[&2].max_abs
        );
    }

    #[test]
    fn audit_mean_and_histogram_are_consistent() {
        let mut rng = stream(10, TAG_EVAL, 6, 0);
        let mut batch = Mat::zeros(16, 6);
        for i in 0..16 {
            for j in 0..6 {
                batch.set(i, j, rng.sample::<f64, _>(rand_distr::StandardNormal));
            }
        }
        let spec = MomentSpec::full(6, BTreeSet::from([2, 3])).unwrap();
        let audit = moment_audit(&batch, &spec, ComputeMode::Sequential).unwrap();
        for summary in audit.per_order.values() {
            assert!(summary.mean_abs <= summary.max_abs);
            assert!(summary.mean_abs > 0.0);
            assert_eq!(
                summary.histogram.iter().sum::<u64>(),
                summary.tuples,
                "histogram partitions the tuples"
            );
        }
        assert_eq!(
            audit.report.entries.len() as u64,
            audit.per_order.values().map(|s| s.tuples).sum::<u64>()
        );
    }
}
