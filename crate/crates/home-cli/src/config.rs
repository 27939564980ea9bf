//! Run configuration: a TOML file with nested sections, every field
//! defaulted, unknown keys rejected. Command-line flags override file values,
//! the file overrides the environment, the environment overrides built-in
//! defaults. The resolved config hashes to a stable identifier that every
//! output record carries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use home_core::data::{DatasetParams, ViewConfig};
use home_core::diagnostics::ProbeConfig;
use home_core::loss::LossConfig;
use home_core::model::ModelDims;
use home_core::moments::{MomentSpec, Sampling};
use home_core::trainer::TrainerConfig;
use home_core::variants::{build_plan, LossPlan, Variant};
use home_core::ComputeMode;

pub const OUTPUT_DIR_ENV: &str = "HOME_OUTPUT_DIR";

/// Errors carry a plain message; main() turns them into the error record.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError(message.into())
}

/// Where outputs go and how many workers run are execution details, not part
/// of the experiment's identity: they are accepted from files and flags but
/// skipped when the resolved config is rendered and hashed, so the same
/// experiment hashes the same everywhere.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub variant: String,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            variant: "T2-O3-Self-All".into(),
            seed: 1,
            output_dir: None,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub projector_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_dim: 32,
            encoder_hidden: vec![256, 128],
            projector_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub classes: usize,
    pub total_samples: usize,
    pub prototype_scale: f64,
    pub sigma_data: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            classes: 4,
            total_samples: 1024,
            prototype_scale: 1.0,
            sigma_data: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ViewsSection {
    pub sigma_aug: f64,
    pub p_mask: f64,
    pub gain_lo: f64,
    pub gain_hi: f64,
}

impl Default for ViewsSection {
    fn default() -> Self {
        Self {
            sigma_aug: 0.5,
            p_mask: 0.25,
            gain_lo: 0.8,
            gain_hi: 1.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub lambda: f64,
    pub epsilon: f64,
    /// Per-iteration sampled tuple counts for the redundancy term; an unset
    /// order is enumerated in full.
    pub order2_samples: Option<u64>,
    pub order3_samples: Option<u64>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: 1e-12,
            order2_samples: None,
            order3_samples: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub batch_size: usize,
    pub epochs: u64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: u64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainerConfig::default();
        Self {
            batch_size: d.batch_size,
            epochs: d.epochs,
            base_lr: d.base_lr,
            final_lr: d.final_lr,
            warmup_epochs: d.warmup_epochs,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    /// Rows [0, train) of the dataset train the probe; rows
    /// [train, train + test) score it.
    pub train: usize,
    pub test: usize,
    pub iterations: u64,
    pub lr: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            train: 256,
            test: 512,
            iterations: 500,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsSection {
    pub orders: Vec<usize>,
    /// Audit this many tuples per order instead of enumerating; unset audits
    /// everything.
    pub sample_count: Option<u64>,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self {
            orders: vec![2, 3],
            sample_count: None,
        }
    }
}

/// The resolved configuration: file merged with environment and flags.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub views: ViewsSection,
    pub loss: LossSection,
    pub trainer: TrainerSection,
    pub probe: ProbeSection,
    pub moments: MomentsSection,
}

/// Flag-level overrides shared by the subcommands; `None` keeps the file or
/// default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub epochs: Option<u64>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub lambda: Option<f64>,
    pub moment_orders: Option<Vec<usize>>,
    pub moment_samples: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| err(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| err(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if config.run.output_dir.is_none() {
            if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
                if !dir.is_empty() {
                    config.run.output_dir = Some(PathBuf::from(dir));
                }
            }
        }
        if let Some(seed) = overrides.seed {
            config.run.seed = seed;
        }
        if let Some(variant) = &overrides.variant {
            config.run.variant = variant.clone();
        }
        if let Some(dir) = &overrides.output_dir {
            config.run.output_dir = Some(dir.clone());
        }
        if let Some(threads) = overrides.threads {
            config.run.threads = threads;
        }
        if let Some(epochs) = overrides.epochs {
            config.trainer.epochs = epochs;
        }
        if let Some(batch) = overrides.batch_size {
            config.trainer.batch_size = batch;
        }
        if let Some(lr) = overrides.base_lr {
            // The schedule anneals from the base down to a floor, so a base
            // set below the floor drags the floor with it.
            config.trainer.base_lr = lr;
            config.trainer.final_lr = config.trainer.final_lr.min(lr);
        }
        if let Some(lambda) = overrides.lambda {
            config.loss.lambda = lambda;
        }
        if let Some(orders) = &overrides.moment_orders {
            config.moments.orders = orders.clone();
        }
        if let Some(count) = overrides.moment_samples {
            config.moments.sample_count = Some(count);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.variant()?;
        if self.run.threads == 0 {
            return Err(err("run.threads must be at least 1"));
        }
        self.model_dims()
            .validate()
            .map_err(|e| err(format!("model section: {e}")))?;
        self.dataset_params()
            .validate()
            .map_err(|e| err(format!("data section: {e}")))?;
        self.view_config()
            .validate()
            .map_err(|e| err(format!("views section: {e}")))?;
        self.loss_config()?
            .validate()
            .map_err(|e| err(format!("loss section: {e}")))?;
        let t = &self.trainer;
        if t.epochs == 0 {
            return Err(err("trainer.epochs must be at least 1"));
        }
        if t.warmup_epochs >= t.epochs {
            return Err(err(format!(
                "trainer.warmup_epochs ({}) must be below trainer.epochs ({})",
                t.warmup_epochs, t.epochs
            )));
        }
        if t.batch_size < 2 {
            return Err(err("trainer.batch_size must be at least 2"));
        }
        if t.batch_size > self.data.total_samples {
            return Err(err(format!(
                "trainer.batch_size ({}) exceeds data.total_samples ({})",
                t.batch_size, self.data.total_samples
            )));
        }
        if !t.base_lr.is_finite() || t.base_lr < 0.0 || !t.final_lr.is_finite() || t.final_lr < 0.0
        {
            return Err(err("trainer learning rates must be finite and at least 0"));
        }
        if t.final_lr > t.base_lr {
            return Err(err(format!(
                "trainer.final_lr ({}) must not exceed trainer.base_lr ({})",
                t.final_lr, t.base_lr
            )));
        }
        if !t.momentum.is_finite() || !(0.0..1.0).contains(&t.momentum) {
            return Err(err("trainer.momentum must lie in [0, 1)"));
        }
        if !t.weight_decay.is_finite() || t.weight_decay < 0.0 {
            return Err(err("trainer.weight_decay must be finite and at least 0"));
        }
        if self.probe.train == 0 || self.probe.test == 0 {
            return Err(err("probe split sizes must be positive"));
        }
        if self.probe.train + self.probe.test > self.data.total_samples {
            return Err(err(format!(
                "probe split {}+{} exceeds the dataset ({} samples)",
                self.probe.train, self.probe.test, self.data.total_samples
            )));
        }
        if self.moments.orders.is_empty() || self.moments.orders.iter().any(|&k| k < 2) {
            return Err(err("moments.orders must list orders of at least 2"));
        }
        Ok(())
    }

    pub fn variant(&self) -> Result<Variant, ConfigError> {
        Variant::parse(&self.run.variant).map_err(|e| err(format!("run.variant: {e}")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.run
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn compute_mode(&self) -> ComputeMode {
        if self.run.threads > 1 {
            ComputeMode::Parallel
        } else {
            ComputeMode::Sequential
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.model.input_dim,
            encoder_hidden: self.model.encoder_hidden.clone(),
            projector_dim: self.model.projector_dim,
        }
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            class_count: self.data.classes,
            feature_dim: self.model.input_dim,
            total_samples: self.data.total_samples,
            prototype_scale: self.data.prototype_scale,
            sigma_data: self.data.sigma_data,
            seed: self.run.seed,
        }
    }

    pub fn view_config(&self) -> ViewConfig {
        let views = Variant::parse(&self.run.variant)
            .map(Variant::view_count)
            .unwrap_or(2);
        ViewConfig {
            views,
            sigma_aug: self.views.sigma_aug,
            p_mask: self.views.p_mask,
            gain_lo: self.views.gain_lo,
            gain_hi: self.views.gain_hi,
            seed: self.run.seed,
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig, ConfigError> {
        let mut per_order = BTreeMap::new();
        if let Some(c) = self.loss.order2_samples {
            per_order.insert(2usize, c);
        }
        if let Some(c) = self.loss.order3_samples {
            per_order.insert(3usize, c);
        }
        let sampling = if per_order.is_empty() {
            Sampling::Full
        } else {
            Sampling::Sampled {
                per_order,
                seed: self.run.seed,
            }
        };
        Ok(LossConfig {
            lambda: self.loss.lambda,
            epsilon: self.loss.epsilon,
            sampling,
            mode: self.compute_mode(),
        })
    }

    pub fn loss_plan(&self) -> Result<LossPlan, ConfigError> {
        Ok(build_plan(self.variant()?, self.run.seed))
    }

    /// Audit spec for a matrix with the given width, honoring the configured
    /// orders and optional per-order tuple sample count.
    pub fn moment_spec(&self, feature_dim: usize) -> Result<MomentSpec, ConfigError> {
        let orders: std::collections::BTreeSet<usize> =
            self.moments.orders.iter().copied().collect();
        let sampling = match self.moments.sample_count {
            None => Sampling::Full,
            Some(count) => Sampling::Sampled {
                per_order: orders.iter().map(|&k| (k, count)).collect(),
                seed: self.run.seed,
            },
        };
        MomentSpec::new(feature_dim, orders, sampling)
            .map_err(|e| err(format!("moments section: {e}")))
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            batch_size: self.trainer.batch_size,
            epochs: self.trainer.epochs,
            base_lr: self.trainer.base_lr,
            final_lr: self.trainer.final_lr,
            warmup_epochs: self.trainer.warmup_epochs,
            momentum: self.trainer.momentum,
            weight_decay: self.trainer.weight_decay,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            iterations: self.probe.iterations,
            lr: self.probe.lr,
        }
    }

    /// Canonical TOML rendering of the resolved config; written alongside
    /// outputs and hashed into every record.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_stably() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(config.hash(), config.hash());
        assert_eq!(config.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let config = RunConfig::default();
        let text = config.canonical_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[run]\nvariant = \"T3-O2-Cross\"\nseed = 1\nthreads = 1\nbananas = 4\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn partial_files_fill_from_defaults() {
        let text = "[trainer]\nepochs = 7\n\n[data]\nsigma_data = 0.4\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.trainer.epochs, 7);
        assert_eq!(config.data.sigma_data, 0.4);
        assert_eq!(config.trainer.batch_size, TrainerSection::default().batch_size);
        assert_eq!(config.run.seed, RunSection::default().seed);
    }

    #[test]
    fn overrides_take_precedence() {
        let over = Overrides {
            seed: Some(99),
            variant: Some("BarlowTwinsCross".into()),
            lambda: Some(0.25),
            ..Overrides::default()
        };
        let config = RunConfig::load(None, &over).unwrap();
        assert_eq!(config.run.seed, 99);
        assert_eq!(config.run.variant, "BarlowTwinsCross");
        assert_eq!(config.loss.lambda, 0.25);
        assert_ne!(config.hash(), RunConfig::default().hash());
    }

    #[test]
    fn validation_rejects_oversized_probe_split() {
        let mut config = RunConfig::default();
        config.probe.train = 900;
        config.probe.test = 900;
        assert!(config.validate().is_err());
    }

    #[test]
    fn bad_variant_is_a_config_error() {
        let mut config = RunConfig::default();
        config.run.variant = "NoSuchThing".into();
        assert!(config.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir_and_threads() {
        let base = RunConfig::default();
        let mut moved = RunConfig::default();
        moved.run.output_dir = Some(PathBuf::from("/somewhere/else"));
        moved.run.threads = 8;
        assert_eq!(base.hash(), moved.hash());
        assert_eq!(base.canonical_toml(), moved.canonical_toml());
    }

    #[test]
    fn trainer_inconsistencies_are_rejected() {
        let mut config = RunConfig::default();
        config.trainer.warmup_epochs = config.trainer.epochs;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.trainer.final_lr = config.trainer.base_lr * 2.0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.trainer.batch_size = config.data.total_samples + 1;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.trainer.momentum = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_lr_override_drags_the_floor_down() {
        let over = Overrides {
            base_lr: Some(0.0),
            ..Overrides::default()
        };
        let config = RunConfig::load(None, &over).unwrap();
        assert_eq!(config.trainer.base_lr, 0.0);
        assert_eq!(config.trainer.final_lr, 0.0);
    }

    #[test]
    fn moment_spec_honors_sample_count() {
        let mut config = RunConfig::default();
        config.moments.sample_count = Some(100);
        let spec = config.moment_spec(64).unwrap();
        match spec.sampling() {
            Sampling::Sampled { per_order, seed } => {
                assert_eq!(*seed, config.run.seed);
                assert_eq!(per_order.get(&2), Some(&100));
                assert_eq!(per_order.get(&3), Some(&100));
            }
            Sampling::Full => panic!("expected sampled spec"),
        }
    }
}
