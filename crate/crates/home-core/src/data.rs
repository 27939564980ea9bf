//! Synthetic labeled vectors and the stochastic view pipeline.
//!
//! The dataset is a Gaussian mixture: one seeded prototype per class, samples
//! scattered around their class prototype. Views distort a batch with a
//! per-sample gain, coordinate dropout, and additive noise, standing in for
//! image augmentations.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HomeError, Result};
use crate::matrix::Mat;
use crate::rng::{stream, TAG_DATA, TAG_PROTO, TAG_VIEW};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub class_count: usize,
    pub feature_dim: usize,
    pub total_samples: usize,
    pub prototype_scale: f64,
    pub sigma_data: f64,
    pub seed: u64,
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 || self.feature_dim < self.class_count {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!(
                    "dataset needs class_count >= 2 and feature_dim >= class_count"
                ),
            });
        }
        if self.total_samples < self.class_count {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("dataset needs at least one sample per class"),
            });
        }
        if !(self.prototype_scale.is_finite() && self.sigma_data.is_finite())
            || self.prototype_scale <= 0.0
            || self.sigma_data < 0.0
        {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!(
                    "prototype_scale must be positive and sigma_data non-negative"
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub samples: Mat,
    pub labels: Vec<usize>,
    pub prototypes: Mat,
    pub params: DatasetParams,
}

/// Draws prototypes once, then samples around them. Labels cycle through the
/// classes in row order, so class counts differ by at most one.
pub fn generate(params: &DatasetParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let (c, p, n) = (params.class_count, params.feature_dim, params.total_samples);

    let mut proto_rng = stream(params.seed, TAG_PROTO, 0, 0);
    let mut prototypes = Mat::zeros(c, p);
    for r in 0..c {
        let row = prototypes.row_mut(r);
        for v in row.iter_mut() {
            let g: f64 = proto_rng.sample(StandardNormal);
            *v = params.prototype_scale * g;
        }
    }

    let mut data_rng = stream(params.seed, TAG_DATA, 0, 0);
    let mut samples = Mat::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let label = r % c;
        labels.push(label);
        let proto = prototypes.row(label).to_vec();
        let row = samples.row_mut(r);
        for (v, mu) in row.iter_mut().zip(proto.iter()) {
            let g: f64 = data_rng.sample(StandardNormal);
            *v = mu + params.sigma_data * g;
        }
    }

    Ok(SyntheticDataset {
        samples,
        labels,
        prototypes,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewConfig {
    pub views: usize,
    pub sigma_aug: f64,
    pub p_mask: f64,
    pub gain_lo: f64,
    pub gain_hi: f64,
    pub seed: u64,
}

impl ViewConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("need at least one view"),
            });
        }
        if !(0.0..1.0).contains(&self.p_mask) {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("p_mask must be in [0, 1)"),
            });
        }
        if !(self.gain_lo.is_finite() && self.gain_hi.is_finite()) || self.gain_lo > self.gain_hi {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("gain range must be finite with gain_lo <= gain_hi"),
            });
        }
        if !self.sigma_aug.is_finite() || self.sigma_aug < 0.0 {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("sigma_aug must be finite and non-negative"),
            });
        }
        Ok(())
    }
}

/// Produces the distorted views of a batch for one training iteration. Each
/// view runs on its own stream keyed by (seed, iteration, view index), so
/// views are independent and the set is reproducible.
///
/// Per sample a gain is drawn, then per coordinate a dropout draw and a noise
/// draw (the noise draw always happens, keeping the stream layout independent
/// of dropout outcomes):
///   out = (dropped ? 0 : gain * x) + sigma_aug * noise
pub fn make_views(batch: &Mat, config: &ViewConfig, iteration: u64) -> Result<Vec<Mat>> {
    config.validate()?;
    let (n, p) = (batch.rows(), batch.cols());
    let mut views = Vec::with_capacity(config.views);
    for t in 0..config.views {
        let mut rng = stream(config.seed, TAG_VIEW, iteration, t as u64);
        let mut out = Mat::zeros(n, p);
        for r in 0..n {
            let gain = rng.gen_range(config.gain_lo..=config.gain_hi);
            let src = batch.row(r);
            let dst = out.row_mut(r);
            for j in 0..p {
                let drop_draw: f64 = rng.gen();
                let noise: f64 = rng.sample(StandardNormal);
                let kept = if drop_draw < config.p_mask {
                    0.0
                } else {
                    gain * src[j]
                };
                dst[j] = kept + config.sigma_aug * noise;
            }
        }
        views.push(out);
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DatasetParams {
        DatasetParams {
            class_count: 4,
            feature_dim: 8,
            total_samples: 64,
            prototype_scale: 1.0,
            sigma_data: 0.05,
            seed: 7,
        }
    }

    #[test]
    fn generate_is_reproducible_and_balanced() {
        let a = generate(&params()).unwrap();
        let b = generate(&params()).unwrap();
        assert_eq!(a, b);
        for c in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 16);
        }
        let mut other = params();
        other.seed = 8;
        assert_ne!(generate(&other).unwrap().samples, a.samples);
    }

    #[test]
    fn zero_scatter_reproduces_prototypes() {
        let mut p = params();
        p.sigma_data = 0.0;
        let d = generate(&p).unwrap();
        for r in 0..d.samples.rows() {
            assert_eq!(d.samples.row(r), d.prototypes.row(d.labels[r]));
        }
    }

    #[test]
    fn prototypes_are_pairwise_distinct() {
        let d = generate(&params()).unwrap();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let dist: f64 = d
                    .prototypes
                    .row(a)
                    .iter()
                    .zip(d.prototypes.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                assert!(dist > 0.1, "prototypes {a} and {b} nearly coincide");
            }
        }
    }

    #[test]
    fn nearest_prototype_recovers_labels_at_low_noise() {
        let d = generate(&params()).unwrap();
        for r in 0..d.samples.rows() {
            let mut best = (f64::INFINITY, usize::MAX);
            for c in 0..4 {
                let dist: f64 = d
                    .samples
                    .row(r)
                    .iter()
                    .zip(d.prototypes.row(c))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            assert_eq!(best.1, d.labels[r], "sample {r} closest to wrong prototype");
        }
    }

    #[test]
    fn generate_rejects_bad_params() {
        let mut p = params();
        p.class_count = 1;
        assert!(generate(&p).is_err());
        let mut p = params();
        p.feature_dim = 2;
        assert!(generate(&p).is_err());
        let mut p = params();
        p.sigma_data = -1.0;
        assert!(generate(&p).is_err());
    }

    fn identity_view(views: usize) -> ViewConfig {
        ViewConfig {
            views,
            sigma_aug: 0.0,
            p_mask: 0.0,
            gain_lo: 1.0,
            gain_hi: 1.0,
            seed: 3,
        }
    }

    #[test]
    fn identity_config_copies_the_batch() {
        let batch = Mat::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -1.5]]).unwrap();
        let views = make_views(&batch, &identity_view(3), 12).unwrap();
        assert_eq!(views.len(), 3);
        for v in &views {
            assert_eq!(v, &batch);
        }
    }

    #[test]
    fn views_are_deterministic_per_iteration_and_differ_across() {
        let batch = Mat::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -1.5]]).unwrap();
        let cfg = ViewConfig {
            views: 2,
            sigma_aug: 0.1,
            p_mask: 0.2,
            gain_lo: 0.8,
            gain_hi: 1.2,
            seed: 3,
        };
        let a = make_views(&batch, &cfg, 5).unwrap();
        let b = make_views(&batch, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = make_views(&batch, &cfg, 6).unwrap();
        assert_ne!(a, c);
        assert_ne!(a[0], a[1], "views of one iteration must be distinct");
    }

    #[test]
    fn dropout_fraction_concentrates() {
        let batch = Mat::from_vec(1, 1000, vec![1.0; 1000]).unwrap();
        let cfg = ViewConfig {
            views: 1,
            sigma_aug: 0.0,
            p_mask: 0.5,
            gain_lo: 1.0,
            gain_hi: 1.0,
            seed: 9,
        };
        let views = make_views(&batch, &cfg, 0).unwrap();
        let zeroed = views[0].row(0).iter().filter(|&&v| v == 0.0).count();
        let frac = zeroed as f64 / 1000.0;
        assert!((frac - 0.5).abs() < 0.05, "zeroed fraction {frac}");
    }

    #[test]
    fn view_config_validation() {
        let mut cfg = identity_view(2);
        cfg.p_mask = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = identity_view(2);
        cfg.gain_lo = 2.0;
        cfg.gain_hi = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = identity_view(2);
        cfg.sigma_aug = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = identity_view(2);
        cfg.views = 0;
        assert!(cfg.validate().is_err());
    }
}
