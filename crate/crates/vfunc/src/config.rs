//! Strict JSON experiment configuration.
//!
//! Absent keys take task-dependent defaults, unknown keys are rejected, and
//! every error names the offending key.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;
use thiserror::Error;
use vfunc_core::gridworld::WORLD_NAMES;
use vfunc_core::model::{BoundKind, EntropyTermConfig, FhatMode, Head, ModelConfig};
use vfunc_core::regression::RegressionConfig;
use vfunc_core::gridworld::RlConfig;
use vfunc_core::toy::BoundsCheckConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config is not valid JSON: {0}")]
    Syntax(String),
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
}

fn key_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Key { key: key.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Rl,
}

pub const DATASETS: [&str; 3] = ["toy_curve", "seasonal_trend", "csv"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Points of the band/interpolation grid.
    pub grid_points: usize,
    /// Latent samples per predictive band.
    pub z_samples: usize,
    pub alphas: Vec<f64>,
    /// Latents sampled for visitation, diversity and interpolation studies.
    pub num_z: usize,
    pub episodes_per_z: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsCheckSection {
    pub eval_samples: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub out: String,
    /// Checkpoint read by evaluation subcommands; `null` means `<out>/checkpoint.json`.
    pub checkpoint: Option<String>,

    pub dataset: String,
    /// Two-column `x,y` file, required when `dataset` is `csv`.
    pub data_path: Option<String>,
    pub train_points: usize,
    pub centered: bool,
    pub world: String,

    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub rec_hidden: Vec<usize>,
    pub embed_dim: usize,

    pub lambda_ent: f64,
    pub bound_kind: BoundKind,
    pub k: usize,
    pub z_batch: usize,
    pub subset_size: usize,
    pub fhat_mode: FhatMode,
    pub detach_encoder_path: bool,

    pub learning_rate: f64,

    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,

    pub iterations: usize,
    pub rollouts_per_iteration: usize,
    pub entropy_updates_per_iteration: usize,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub baseline_decay: f64,

    pub eval: EvalConfig,
    pub bounds_check: BoundsCheckSection,
}

impl ExperimentConfig {
    pub fn defaults(task: Task) -> Self {
        let reg = RegressionConfig::default();
        let rl = RlConfig::default();
        let bc = BoundsCheckConfig::default();
        let (latent_dim, k, fhat_mode, learning_rate) = match task {
            Task::Regression => (8, reg.entropy.k, reg.entropy.mode, reg.learning_rate),
            Task::Rl => (16, rl.entropy.k, rl.entropy.mode, rl.learning_rate),
        };
        ExperimentConfig {
            task,
            seed: 0,
            out: "out".into(),
            checkpoint: None,
            dataset: "toy_curve".into(),
            data_path: None,
            train_points: 80,
            centered: false,
            world: "empty".into(),
            latent_dim,
            hidden: vec![64, 64],
            rec_hidden: vec![64],
            embed_dim: 64,
            lambda_ent: 1.0,
            bound_kind: BoundKind::Variational,
            k,
            z_batch: 8,
            subset_size: 16,
            fhat_mode,
            detach_encoder_path: false,
            learning_rate,
            epochs: reg.epochs,
            steps_per_epoch: reg.steps_per_epoch,
            batch_size: reg.batch_size,
            iterations: 500,
            rollouts_per_iteration: rl.rollouts_per_iteration,
            entropy_updates_per_iteration: rl.entropy_updates_per_iteration,
            gamma: rl.gamma,
            buffer_capacity: rl.buffer_capacity,
            baseline_decay: rl.baseline_decay,
            eval: EvalConfig {
                grid_points: 200,
                z_samples: 64,
                alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
                num_z: 16,
                episodes_per_z: 20,
            },
            bounds_check: BoundsCheckSection {
                eval_samples: bc.eval_samples,
                train_steps: bc.train_steps,
                batch: bc.batch,
                learning_rate: bc.lr,
                hidden: bc.hidden,
                embed_dim: bc.embed_dim,
                tolerance: bc.tolerance,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let user: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let Value::Object(user) = user else {
            return Err(ConfigError::Syntax("top level must be an object".into()));
        };
        let task = match user.get("task") {
            None => Task::Regression,
            Some(v) => serde_json::from_value(v.clone()).map_err(|_| key_err("task", format!("expected \"regression\" or \"rl\", got {v}")))?,
        };
        let mut merged = serde_json::to_value(Self::defaults(task)).expect("defaults serialize");
        overlay(&mut merged, user, "")?;
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let key = e.path().to_string();
            key_err(&key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn range<T: PartialOrd + std::fmt::Display>(key: &str, v: T, lo: T, hi: T) -> Result<(), ConfigError> {
            if v >= lo && v <= hi {
                Ok(())
            } else {
                Err(key_err(key, format!("must lie in [{lo}, {hi}], got {v}")))
            }
        }
        fn positive(key: &str, v: f64, hi: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v <= hi {
                Ok(())
            } else {
                Err(key_err(key, format!("must lie in (0, {hi}], got {v}")))
            }
        }
        if self.out.is_empty() {
            return Err(key_err("out", "must not be empty"));
        }
        if !DATASETS.contains(&self.dataset.as_str()) {
            return Err(key_err("dataset", format!("unknown dataset `{}`; valid: {}", self.dataset, DATASETS.join(", "))));
        }
        if self.dataset == "csv" && self.data_path.is_none() {
            return Err(key_err("data_path", "required when dataset is `csv`"));
        }
        range("train_points", self.train_points, 1, 1_000_000)?;
        if !WORLD_NAMES.contains(&self.world.as_str()) {
            return Err(key_err("world", format!("unknown world `{}`; valid: {}", self.world, WORLD_NAMES.join(", "))));
        }
        range("latent_dim", self.latent_dim, 1, 1024)?;
        if self.hidden.is_empty() {
            return Err(key_err("hidden", "needs at least one layer"));
        }
        for (key, widths) in [("hidden", &self.hidden), ("rec_hidden", &self.rec_hidden)] {
            for &w in widths {
                range(key, w, 1, 4096)?;
            }
        }
        range("embed_dim", self.embed_dim, 1, 4096)?;
        range("lambda_ent", self.lambda_ent, 0.0, 1e6)?;
        range("k", self.k, 1, 1 << 16)?;
        range("z_batch", self.z_batch, 1, 4096)?;
        range("subset_size", self.subset_size, 1, 4096)?;
        if self.task == Task::Rl && self.fhat_mode != FhatMode::ParameterOutputs {
            return Err(key_err("fhat_mode", "policies expose action probabilities; use `parameter_outputs`"));
        }
        positive("learning_rate", self.learning_rate, 1.0)?;
        range("epochs", self.epochs, 1, 1_000_000)?;
        range("steps_per_epoch", self.steps_per_epoch, 1, 1_000_000)?;
        range("batch_size", self.batch_size, 1, 1_000_000)?;
        range("iterations", self.iterations, 1, 10_000_000)?;
        range("rollouts_per_iteration", self.rollouts_per_iteration, 1, 4096)?;
        range("entropy_updates_per_iteration", self.entropy_updates_per_iteration, 0, 4096)?;
        range("gamma", self.gamma, 0.0, 1.0)?;
        range("buffer_capacity", self.buffer_capacity, 1, 100_000_000)?;
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(key_err("baseline_decay", format!("must lie in [0, 1), got {}", self.baseline_decay)));
        }
        range("eval.grid_points", self.eval.grid_points, 2, 1_000_000)?;
        range("eval.z_samples", self.eval.z_samples, 2, 1_000_000)?;
        if self.eval.alphas.is_empty() {
            return Err(key_err("eval.alphas", "needs at least one value"));
        }
        for &a in &self.eval.alphas {
            range("eval.alphas", a, 0.0, 1.0)?;
        }
        range("eval.num_z", self.eval.num_z, 2, 100_000)?;
        range("eval.episodes_per_z", self.eval.episodes_per_z, 1, 1_000_000)?;
        let bc = &self.bounds_check;
        range("bounds_check.eval_samples", bc.eval_samples, 2, 100_000_000)?;
        range("bounds_check.train_steps", bc.train_steps, 0, 10_000_000)?;
        range("bounds_check.batch", bc.batch, 1, 1_000_000)?;
        positive("bounds_check.learning_rate", bc.learning_rate, 1.0)?;
        range("bounds_check.hidden", bc.hidden, 1, 4096)?;
        range("bounds_check.embed_dim", bc.embed_dim, 1, 4096)?;
        positive("bounds_check.tolerance", bc.tolerance, 100.0)?;
        Ok(())
    }

    pub fn entropy_config(&self) -> EntropyTermConfig {
        EntropyTermConfig {
            bound: self.bound_kind,
            k: self.k,
            z_batch: self.z_batch,
            subset_size: self.subset_size,
            mode: self.fhat_mode,
            detach_encoder_path: self.detach_encoder_path,
        }
    }

    /// Architecture for `x_dim` inputs; the critic is built only for the
    /// dynamic-discretization bound.
    pub fn model_config(&self, x_dim: usize, head: Head) -> ModelConfig {
        ModelConfig {
            x_dim,
            latent_dim: self.latent_dim,
            head,
            hidden: self.hidden.clone(),
            rec_hidden: self.rec_hidden.clone(),
            embed_dim: if self.bound_kind == BoundKind::DynamicDiscretization { self.embed_dim } else { 0 },
        }
    }

    pub fn regression_config(&self) -> RegressionConfig {
        RegressionConfig {
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            lambda_ent: self.lambda_ent,
            learning_rate: self.learning_rate,
            entropy: self.entropy_config(),
            fhat_range: None,
        }
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig {
            iterations: self.iterations,
            rollouts_per_iteration: self.rollouts_per_iteration,
            entropy_updates_per_iteration: self.entropy_updates_per_iteration,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            lambda_ent: self.lambda_ent,
            entropy: self.entropy_config(),
            buffer_capacity: self.buffer_capacity,
            baseline_decay: self.baseline_decay,
        }
    }

    pub fn bounds_check_config(&self) -> BoundsCheckConfig {
        let bc = &self.bounds_check;
        BoundsCheckConfig {
            seed: self.seed,
            eval_samples: bc.eval_samples,
            train_steps: bc.train_steps,
            batch: bc.batch,
            lr: bc.learning_rate,
            hidden: bc.hidden,
            embed_dim: bc.embed_dim,
            tolerance: bc.tolerance,
        }
    }

    /// Settings that shape a trained model: everything except the output
    /// location, the checkpoint path and the evaluation sections.
    pub fn training_view(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            for key in ["out", "checkpoint", "eval", "bounds_check"] {
                m.remove(key);
            }
        }
        v
    }
}

/// Copies `user` keys over `base`, recursing into objects. Keys absent from
/// `base` are unknown.
fn overlay(base: &mut Value, user: Map<String, Value>, prefix: &str) -> Result<(), ConfigError> {
    let Value::Object(base) = base else { unreachable!("overlay target is an object") };
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match base.get_mut(&key) {
            None => {
                let mut valid: Vec<&str> = base.keys().map(String::as_str).collect();
                valid.sort_unstable();
                return Err(key_err(&path, format!("unknown key; valid keys: {}", valid.join(", "))));
            }
            Some(slot @ Value::Object(_)) => match value {
                Value::Object(inner) => overlay(slot, inner, &path)?,
                other => return Err(key_err(&path, format!("expected an object, got {other}"))),
            },
            Some(slot) => *slot = value,
        }
    }
    Ok(())
}
