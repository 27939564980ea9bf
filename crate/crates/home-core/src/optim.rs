//! SGD with momentum and decoupled weight decay, plus a warmup-cosine
//! learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{HomeError, Result};
use crate::math;
use crate::model::{Gradients, LayerGrad, MlpModel};

/// Linear warmup from zero to `base_lr` over `warmup_steps`, then a cosine
/// ramp down to `final_lr` at the last step. Step indices are global
/// (0-based) across the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(base_lr: f64, final_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if total_steps == 0 {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("schedule needs at least one step"),
            });
        }
        if warmup_steps >= total_steps {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!(
                    "warmup ({warmup_steps}) must be shorter than the run ({total_steps})"
                ),
            });
        }
        if !(base_lr.is_finite() && final_lr.is_finite()) || base_lr < 0.0 || final_lr < 0.0 {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("learning rates must be finite and non-negative"),
            });
        }
        Ok(Self {
            base_lr,
            final_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step + 1 >= self.total_steps {
            return self.final_lr;
        }
        if step < self.warmup_steps {
            return self.base_lr * (step as f64 / self.warmup_steps as f64);
        }
        // Both casts are exact for any step count reachable in practice and
        // the denominator is >= 1 because step < total - 1 and step >= warmup.
        let progress =
            (step - self.warmup_steps) as f64 / (self.total_steps - 1 - self.warmup_steps) as f64;
        self.final_lr + (self.base_lr - self.final_lr) * 0.5 * (1.0 + math::cos(math::PI * progress))
    }
}

/// Momentum SGD. Weight decay is added to the weight gradients (never the
/// bias gradients) before the momentum update:
///   v <- momentum * v + (g + wd * w);  w <- w - lr * v
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<LayerGrad>,
}

impl SgdMomentum {
    pub fn new(model: &MlpModel, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(momentum.is_finite() && weight_decay.is_finite())
            || momentum < 0.0
            || momentum >= 1.0
            || weight_decay < 0.0
        {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("momentum must be in [0, 1) and weight decay >= 0"),
            });
        }
        let velocity = model
            .layers()
            .iter()
            .map(|l| LayerGrad {
                weights: crate::matrix::Mat::zeros(l.weights.rows(), l.weights.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        Ok(Self {
            momentum,
            weight_decay,
            velocity,
        })
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.velocity.len()
            || model.layers().len() != self.velocity.len()
        {
            return Err(HomeError::ShapeMismatch {
                context: "optimizer step",
                expected: (self.velocity.len(), 0),
                got: (grads.layers.len(), 0),
            });
        }
        if !lr.is_finite() || lr < 0.0 {
            return Err(HomeError::InvalidConfig {
                message: alloc::format!("learning rate must be finite and non-negative"),
            });
        }
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[l];
            let v = &mut self.velocity[l];
            if g.weights.rows() != layer.weights.rows()
                || g.weights.cols() != layer.weights.cols()
                || g.bias.len() != layer.bias.len()
            {
                return Err(HomeError::ShapeMismatch {
                    context: "optimizer layer shapes",
                    expected: (layer.weights.rows(), layer.weights.cols()),
                    got: (g.weights.rows(), g.weights.cols()),
                });
            }
            let wd = self.weight_decay;
            let wdata = layer.weights.data_mut();
            let gdata = g.weights.data();
            let vdata = v.weights.data_mut();
            for i in 0..wdata.len() {
                vdata[i] = self.momentum * vdata[i] + (gdata[i] + wd * wdata[i]);
                wdata[i] -= lr * vdata[i];
            }
            for o in 0..layer.bias.len() {
                v.bias[o] = self.momentum * v.bias[o] + g.bias[o];
                layer.bias[o] -= lr * v.bias[o];
            }
        }
        Ok(())
    }
}
