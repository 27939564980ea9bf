//! Training loop: per iteration draw a batch, distort it into views, run the
//! network forward on each view, evaluate the loss, push gradients back
//! through every view, and take one SGD-momentum step.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{make_views, SyntheticDataset, ViewConfig};
use crate::embedding::EmbeddingBatch;
use crate::error::{HomeError, Result};
use crate::loss::{home_loss, LossConfig};
use crate::model::{Gradients, MlpModel, ModelDims};
use crate::optim::{Schedule, SgdMomentum};
use crate::rng::{stream, TAG_SHUFFLE};
use crate::variants::LossPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub epochs: u64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: u64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 200,
            base_lr: 0.05,
            final_lr: 0.002,
            warmup_epochs: 10,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// Everything train() needs besides the dataset itself.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub dims: ModelDims,
    pub view_config: ViewConfig,
    pub plan: LossPlan,
    pub loss: LossConfig,
    pub trainer: TrainerConfig,
    pub seed: u64,
}

/// One metrics record per optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_invariance: f64,
    pub loss_redundancy_per_view: Vec<f64>,
}

fn check_setup(dataset: &SyntheticDataset, setup: &TrainSetup) -> Result<usize> {
    setup.dims.validate()?;
    setup.view_config.validate()?;
    setup.loss.validate()?;
    let cfg = &setup.trainer;
    if cfg.batch_size < 2 {
        return Err(HomeError::BatchTooSmall {
            rows: cfg.batch_size,
        });
    }
    if cfg.batch_size > dataset.samples.rows() {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!(
                "batch size {} exceeds dataset size {}",
                cfg.batch_size,
                dataset.samples.rows()
            ),
        });
    }
    if dataset.samples.cols() != setup.dims.input_dim {
        return Err(HomeError::ShapeMismatch {
            context: "trainer input width",
            expected: (dataset.samples.rows(), setup.dims.input_dim),
            got: (dataset.samples.rows(), dataset.samples.cols()),
        });
    }
    if setup.plan.view_count != setup.view_config.views {
        return Err(HomeError::InvalidConfig {
            message: alloc::format!(
                "plan expects {} views but the view config makes {}",
                setup.plan.view_count,
                setup.view_config.views
            ),
        });
    }
    Ok(dataset.samples.rows() / cfg.batch_size)
}

fn diverged_at(e: HomeError, iteration: u64) -> HomeError {
    match e {
        HomeError::NonFinite { .. } | HomeError::LayerNonFinite { .. } => {
            HomeError::Diverged { iteration }
        }
        other => other,
    }
}

/// Initializes a fresh model from the setup seed and trains it. The sink is
/// called once per iteration in order.
pub fn train(
    dataset: &SyntheticDataset,
    setup: &TrainSetup,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<MlpModel> {
    let mut model = MlpModel::init(&setup.dims, setup.seed)?;
    train_from(dataset, setup, &mut model, sink)?;
    Ok(model)
}

/// Trains an existing model in place (used to resume from a checkpoint and to
/// keep the untrained initialization available for baselines).
pub fn train_from(
    dataset: &SyntheticDataset,
    setup: &TrainSetup,
    model: &mut MlpModel,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<()> {
    let steps_per_epoch = check_setup(dataset, setup)?;
    let cfg = &setup.trainer;
    let total_steps = cfg.epochs * steps_per_epoch as u64;
    let schedule = Schedule::new(
        cfg.base_lr,
        cfg.final_lr,
        cfg.warmup_epochs * steps_per_epoch as u64,
        total_steps,
    )?;
    let mut optimizer = SgdMomentum::new(model, cfg.momentum, cfg.weight_decay)?;

    let n = dataset.samples.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    for step in 0..total_steps {
        let epoch = step / steps_per_epoch as u64;
        let batch_index = (step % steps_per_epoch as u64) as usize;
        if batch_index == 0 {
            perm = (0..n).collect();
            perm.shuffle(&mut stream(setup.seed, TAG_SHUFFLE, epoch, 0));
        }
        let indices = &perm[batch_index * cfg.batch_size..(batch_index + 1) * cfg.batch_size];
        let batch = dataset.samples.gather_rows(indices)?;
        let views = make_views(&batch, &setup.view_config, step)?;

        let mut passes = Vec::with_capacity(views.len());
        let mut batches = Vec::with_capacity(views.len());
        for (t, view) in views.iter().enumerate() {
            let pass = model.forward(view).map_err(|e| diverged_at(e, step))?;
            batches.push(
                EmbeddingBatch::new(pass.embeddings().clone(), t)
                    .map_err(|e| diverged_at(e, step))?,
            );
            passes.push(pass);
        }
        let batch_refs: Vec<&EmbeddingBatch> = batches.iter().collect();
        let resolved = setup.plan.resolve(step);
        let loss_cfg = setup.loss.for_iteration(step);
        let value = home_loss(&batch_refs, &resolved, &loss_cfg, true)
            .map_err(|e| diverged_at(e, step))?;

        let mut grads = Gradients::zeros_like(model);
        let upstreams = value.gradients.as_ref().expect("gradients requested");
        for (pass, upstream) in passes.iter().zip(upstreams.iter()) {
            model.backward_into(pass, upstream, &mut grads)?;
        }
        let lr = schedule.lr_at(step);
        optimizer.step(model, &grads, lr)?;

        sink(&IterationRecord {
            iteration: step,
            epoch,
            lr,
            loss_total: value.total,
            loss_invariance: value.invariance,
            loss_redundancy_per_view: value.redundancy_per_view.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DatasetParams};
    use crate::matrix::Mat;
    use crate::model::{Activation, Layer};
    use crate::variants::{build_plan, Variant};
    use alloc::vec;

    fn tiny_dataset() -> SyntheticDataset {
        generate(&DatasetParams {
            class_count: 4,
            feature_dim: 8,
            total_samples: 32,
            prototype_scale: 1.0,
            sigma_data: 0.2,
            seed: 11,
        })
        .unwrap()
    }

    fn tiny_setup(epochs: u64) -> TrainSetup {
        TrainSetup {
            dims: ModelDims {
                input_dim: 8,
                encoder_hidden: vec![16, 8],
                projector_dim: 6,
            },
            view_config: ViewConfig {
                views: 2,
                sigma_aug: 0.1,
                p_mask: 0.1,
                gain_lo: 0.9,
                gain_hi: 1.1,
                seed: 11,
            },
            plan: build_plan(Variant::BarlowTwinsCross, 11),
            loss: LossConfig::default(),
            trainer: TrainerConfig {
                batch_size: 16,
                epochs,
                base_lr: 0.05,
                final_lr: 0.002,
                warmup_epochs: 1,
                momentum: 0.9,
                weight_decay: 5e-4,
            },
            seed: 11,
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_untouched() {
        let dataset = tiny_dataset();
        let mut setup = tiny_setup(3);
        setup.trainer.base_lr = 0.0;
        setup.trainer.final_lr = 0.0;
        let init = MlpModel::init(&setup.dims, setup.seed).unwrap();
        let trained = train(&dataset, &setup, &mut |_| {}).unwrap();
        assert_eq!(init, trained);
    }

    #[test]
    fn identical_seeds_give_identical_metric_streams() {
        let dataset = tiny_dataset();
        let setup = tiny_setup(4);
        let mut rec_a = Vec::new();
        let model_a = train(&dataset, &setup, &mut |r| rec_a.push(r.clone())).unwrap();
        let mut rec_b = Vec::new();
        let model_b = train(&dataset, &setup, &mut |r| rec_b.push(r.clone())).unwrap();
        assert_eq!(rec_a, rec_b);
        assert_eq!(model_a, model_b);
        assert_eq!(rec_a.len(), 4 * 2, "epochs * steps_per_epoch records");
        assert_eq!(rec_a[0].epoch, 0);
        assert_eq!(rec_a.last().unwrap().epoch, 3);
        assert_eq!(rec_a[0].lr, 0.0, "warmup starts from zero");
    }

    #[test]
    fn loss_decreases_over_a_short_run() {
        let dataset = tiny_dataset();
        let setup = tiny_setup(50);
        let mut records = Vec::new();
        train(&dataset, &setup, &mut |r| records.push(r.clone())).unwrap();
        let epoch_mean = |e: u64| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.epoch == e)
                .map(|r| r.loss_total)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let first = epoch_mean(0);
        let late = epoch_mean(49);
        assert!(
            late < first,
            "epoch 49 mean {late} should sit below epoch 0 mean {first}"
        );
        for r in &records {
            let unit_mean = r.loss_redundancy_per_view.iter().sum::<f64>()
                / r.loss_redundancy_per_view.len() as f64;
            let recon = r.loss_invariance + setup.loss.lambda * unit_mean;
            assert!((recon - r.loss_total).abs() <= 1e-12 * (1.0 + r.loss_total.abs()));
        }
    }

    #[test]
    fn non_finite_model_reports_divergence() {
        let dataset = tiny_dataset();
        let setup = tiny_setup(2);
        let layers = vec![
            Layer::new(Mat::from_vec(4, 8, vec![1e308; 32]).unwrap(), vec![0.0; 4], Activation::Relu)
                .unwrap(),
            Layer::new(Mat::from_vec(3, 4, vec![1e308; 12]).unwrap(), vec![0.0; 3], Activation::Identity)
                .unwrap(),
        ];
        let mut model = MlpModel::from_layers(layers, 1).unwrap();
        let err = train_from(&dataset, &setup, &mut model, &mut |_| {}).unwrap_err();
        assert!(matches!(err, HomeError::Diverged { iteration: 0 }), "{err:?}");
    }

    #[test]
    fn setup_validation_catches_mismatches() {
        let dataset = tiny_dataset();
        let mut setup = tiny_setup(2);
        setup.trainer.batch_size = 64;
        assert!(train(&dataset, &setup, &mut |_| {}).is_err());

        let mut setup = tiny_setup(2);
        setup.view_config.views = 3;
        assert!(train(&dataset, &setup, &mut |_| {}).is_err());

        let mut setup = tiny_setup(2);
        setup.dims.input_dim = 9;
        assert!(train(&dataset, &setup, &mut |_| {}).is_err());
    }

    #[test]
    fn network_gradients_match_finite_differences_of_the_loss() {
        // End-to-end oracle: d(total loss)/d(parameter) via the chained
        // backward pass against central differences, on a small network.
        let dims = ModelDims {
            input_dim: 6,
            encoder_hidden: vec![5],
            projector_dim: 4,
        };
        let model = MlpModel::init(&dims, 21).unwrap();
        let raw = generate(&DatasetParams {
            class_count: 2,
            feature_dim: 6,
            total_samples: 8,
            prototype_scale: 1.0,
            sigma_data: 0.3,
            seed: 21,
        })
        .unwrap();
        let view_cfg = ViewConfig {
            views: 2,
            sigma_aug: 0.05,
            p_mask: 0.1,
            gain_lo: 0.9,
            gain_hi: 1.1,
            seed: 21,
        };
        let views = make_views(&raw.samples, &view_cfg, 0).unwrap();
        let plan = build_plan(Variant::BarlowTwinsCross, 21);
        let resolved = plan.resolve(0);
        let loss_cfg = LossConfig::default();

        let eval = |m: &MlpModel| -> f64 {
            let batches: Vec<EmbeddingBatch> = views
                .iter()
                .enumerate()
                .map(|(t, v)| EmbeddingBatch::new(m.forward(v).unwrap().embeddings().clone(), t).unwrap())
                .collect();
            let refs: Vec<&EmbeddingBatch> = batches.iter().collect();
            home_loss(&refs, &resolved, &loss_cfg, false).unwrap().total
        };
        // Central differences only hold where every relu unit keeps its
        // on/off state across the perturbation; kink-straddling parameters
        // are skipped.
        let pattern = |m: &MlpModel| -> Vec<bool> {
            let mut bits = Vec::new();
            for v in &views {
                let pass = m.forward(v).unwrap();
                for (l, layer) in m.layers().iter().enumerate() {
                    if layer.activation == crate::model::Activation::Relu {
                        bits.extend(pass.activations()[l + 1].data().iter().map(|&x| x > 0.0));
                    }
                }
            }
            bits
        };

        let mut grads = Gradients::zeros_like(&model);
        let passes: Vec<_> = views.iter().map(|v| model.forward(v).unwrap()).collect();
        let batches: Vec<EmbeddingBatch> = passes
            .iter()
            .enumerate()
            .map(|(t, p)| EmbeddingBatch::new(p.embeddings().clone(), t).unwrap())
            .collect();
        let refs: Vec<&EmbeddingBatch> = batches.iter().collect();
        let value = home_loss(&refs, &resolved, &loss_cfg, true).unwrap();
        for (pass, up) in passes.iter().zip(value.gradients.as_ref().unwrap()) {
            model.backward_into(pass, up, &mut grads).unwrap();
        }

        let h = 1e-6;
        let mut checked = 0usize;
        let mut skipped = 0usize;
        for l in 0..model.layers().len() {
            let (rows, cols) = (
                model.layers()[l].weights.rows(),
                model.layers()[l].weights.cols(),
            );
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = model.clone();
                    let v = plus.layers()[l].weights.at(r, c);
                    plus.layers_mut()[l].weights.set(r, c, v + h);
                    let mut minus = model.clone();
                    minus.layers_mut()[l].weights.set(r, c, v - h);
                    if pattern(&plus) != pattern(&minus) {
                        skipped += 1;
                        continue;
                    }
                    let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                    let an = grads.layers[l].weights.at(r, c);
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                        "layer {l} weight ({r},{c}): analytic {an}, numeric {fd}"
                    );
                    checked += 1;
                }
            }
            for o in 0..model.layers()[l].bias.len() {
                let mut plus = model.clone();
                plus.layers_mut()[l].bias[o] += h;
                let mut minus = model.clone();
                minus.layers_mut()[l].bias[o] -= h;
                if pattern(&plus) != pattern(&minus) {
                    skipped += 1;
                    continue;
                }
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = grads.layers[l].bias[o];
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                    "layer {l} bias {o}: analytic {an}, numeric {fd}"
                );
                checked += 1;
            }
        }
        assert!(
            checked >= 90 && 4 * checked >= 3 * (checked + skipped),
            "expected to sweep nearly every parameter: {checked} checked, {skipped} skipped"
        );
    }
}
