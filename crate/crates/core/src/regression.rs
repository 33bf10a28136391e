//! One-dimensional regression: datasets, the training loop, predictive
//! bands and latent interpolation traces.

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::model::{
    interpolate_latents, training_objective, EntropyTermConfig, FlatPrior, FunctionPrior, Prediction, VFuncModel,
};
use crate::rng;
use crate::tensor::{AdamState, Tape};
use alloc::{format, string::String, vec, vec::Vec};
use core::f64::consts::PI;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset1D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub x_train_range: (f64, f64),
    pub name: String,
}

impl Dataset1D {
    pub fn new(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(invalid(format!("dataset needs equal, non-zero lengths ({} xs, {} ys)", xs.len(), ys.len())));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("dataset values must be finite"));
        }
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Dataset1D { xs, ys, x_train_range: (lo, hi), name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Subtracts the mean of `xs` and of `ys`.
    pub fn centered(&self) -> Self {
        let mx = self.xs.iter().sum::<f64>() / self.len() as f64;
        let my = self.ys.iter().sum::<f64>() / self.len() as f64;
        Dataset1D {
            xs: self.xs.iter().map(|x| x - mx).collect(),
            ys: self.ys.iter().map(|y| y - my).collect(),
            x_train_range: (self.x_train_range.0 - mx, self.x_train_range.1 - mx),
            name: format!("{}-centered", self.name),
        }
    }

    /// `n` evenly spaced points over the training range widened by
    /// `1.5 ×` its width on each side.
    pub fn default_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = widened(self.x_train_range, 1.5);
        linspace(lo, hi, n)
    }
}

pub fn widened((lo, hi): (f64, f64), factor: f64) -> (f64, f64) {
    let w = (hi - lo).max(f64::EPSILON);
    (lo - factor * w, hi + factor * w)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `x + 0.3 sin(2π(x + ε)) + 0.3 sin(4π(x + ε)) + ε`.
pub fn toy_curve(x: f64, eps: f64) -> f64 {
    x + 0.3 * math::sin(2.0 * PI * (x + eps)) + 0.3 * math::sin(4.0 * PI * (x + eps)) + eps
}

/// `n` points with `x ~ U[0, 0.5]` and `ε ~ N(0, 0.02²)`.
pub fn make_toy_curve(n: usize, seed: u64) -> Result<Dataset1D> {
    if n == 0 {
        return Err(invalid("toy curve needs n >= 1"));
    }
    let mut rng = rng::stream(seed, "data.toy_curve");
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = 0.5 * rng.random::<f64>();
        xs.push(x);
        ys.push(toy_curve(x, noise.sample(&mut rng)));
    }
    let mut d = Dataset1D::new("toy-curve", xs, ys)?;
    d.x_train_range = (0.0, 0.5);
    Ok(d)
}

/// Synthetic CO2-like series: linear trend, yearly sinusoid and noise, with
/// `x` in years over `[0, 10]`.
pub fn make_seasonal_trend(n: usize, seed: u64) -> Result<Dataset1D> {
    if n == 0 {
        return Err(invalid("seasonal series needs n >= 1"));
    }
    let mut rng = rng::stream(seed, "data.seasonal");
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let xs = linspace(0.0, 10.0, n);
    let ys = xs
        .iter()
        .map(|&x| 0.15 * x + 0.3 * math::sin(2.0 * PI * x) + noise.sample(&mut rng))
        .collect();
    let mut d = Dataset1D::new("seasonal-trend", xs, ys)?;
    d.x_train_range = (0.0, 10.0);
    Ok(d)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Data points per likelihood minibatch (clipped to the dataset size).
    pub batch_size: usize,
    pub lambda_ent: f64,
    pub learning_rate: f64,
    pub entropy: EntropyTermConfig,
    /// Input range for partial-function points; `None` uses the widened
    /// training range of the default grid.
    pub fhat_range: Option<(f64, f64)>,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            epochs: 60,
            steps_per_epoch: 50,
            batch_size: 80,
            lambda_ent: 1.0,
            learning_rate: 3e-3,
            entropy: EntropyTermConfig {
                bound: crate::model::BoundKind::Variational,
                k: 16,
                z_batch: 8,
                subset_size: 16,
                mode: crate::model::FhatMode::ParameterOutputs,
                detach_encoder_path: false,
            },
            fhat_range: None,
        }
    }
}

/// Epoch averages; `log_likelihood` is per data point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub step: usize,
    pub log_likelihood: f64,
    pub entropy_bound: f64,
}

/// Maximizes `R + λ_ent · bound` by Adam, where `R` is the minibatch mean
/// log-likelihood averaged over `z_batch` latents.
pub fn train_regression(
    model: &mut VFuncModel,
    data: &Dataset1D,
    cfg: &RegressionConfig,
    seed: u64,
) -> Result<Vec<EpochMetrics>> {
    train_regression_with_prior(model, data, cfg, seed, &FlatPrior)
}

pub fn train_regression_with_prior(
    model: &mut VFuncModel,
    data: &Dataset1D,
    cfg: &RegressionConfig,
    seed: u64,
    prior: &dyn FunctionPrior,
) -> Result<Vec<EpochMetrics>> {
    if cfg.entropy.k == 0 || cfg.entropy.z_batch == 0 || cfg.batch_size == 0 {
        return Err(invalid("k, z_batch and batch_size must be >= 1"));
    }
    if cfg.lambda_ent.is_nan() || cfg.lambda_ent < 0.0 {
        return Err(invalid(format!("lambda_ent must be >= 0, got {}", cfg.lambda_ent)));
    }
    let mut adam = AdamState::new(&model.params, cfg.learning_rate)?;
    let mut rng = rng::stream(seed, "train.regression");
    let (flo, fhi) = cfg.fhat_range.unwrap_or_else(|| widened(data.x_train_range, 1.5));
    let n = data.len();
    let b = cfg.batch_size.min(n);
    let m = cfg.entropy.z_batch;
    let ld = model.latent_dim();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let (mut ll_sum, mut bound_sum) = (0.0, 0.0);
        for _ in 0..cfg.steps_per_epoch {
            let mut tape = Tape::new();
            let zs: Vec<Vec<f64>> = (0..m).map(|_| model.sample_latent(&mut rng)).collect();
            let idx: Vec<usize> = if b == n { (0..n).collect() } else { (0..b).map(|_| rng.random_range(0..n)).collect() };
            let mut xs = Vec::with_capacity(m * b);
            let mut ys = Vec::with_capacity(m * b);
            for _ in 0..m {
                xs.extend(idx.iter().map(|&i| data.xs[i]));
                ys.extend(idx.iter().map(|&i| data.ys[i]));
            }
            let xv = tape.matrix(m * b, 1, xs)?;
            let yv = tape.matrix(m * b, 1, ys)?;
            let zv = tape.matrix(m, ld, zs.concat())?;
            let z_rows = tape.repeat_rows(zv, b)?;
            let head = model.net.forward_rows(&mut tape, &model.params, xv, z_rows, false)?.output;
            let g = crate::dist::GaussianVars::from_head(&mut tape, head)?;
            let lp = g.log_prob_rows(&mut tape, yv)?;
            let lp_mean = tape.mean(lp);

            let fxs: Vec<Vec<Vec<f64>>> = (0..m)
                .map(|_| (0..cfg.entropy.k).map(|_| vec![flo + (fhi - flo) * rng.random::<f64>()]).collect())
                .collect();
            let entropy = model.entropy_bound(&mut tape, &cfg.entropy, &fxs, &mut rng)?;
            let bound = entropy.bound;
            let prior_term = prior.log_density(&mut tape, &entropy.batch)?;
            let loss = training_objective(&mut tape, lp_mean, prior_term, bound, cfg.lambda_ent)
                .map_err(|e| Error::Diverged { step, detail: format!("{e}") })?;
            model.params.zero_grad();
            tape.backward_into(loss, &mut model.params)?;
            adam.step(&mut model.params).map_err(|e| Error::Diverged { step, detail: format!("{e}") })?;
            ll_sum += tape.scalar_value(lp_mean)?;
            bound_sum += tape.scalar_value(bound)?;
            step += 1;
        }
        let s = cfg.steps_per_epoch.max(1) as f64;
        log.push(EpochMetrics { step, log_likelihood: ll_sum / s, entropy_bound: bound_sum / s });
    }
    Ok(log)
}

/// Mean and standard deviation of `p(y | x) = E_z[p(y | x, z)]` per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveBand {
    pub grid_xs: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub num_z_samples: usize,
}

impl PredictiveBand {
    /// Mean std over grid points with `lo <= x <= hi`.
    pub fn mean_std_in(&self, lo: f64, hi: f64) -> f64 {
        let sel: Vec<f64> = self
            .grid_xs
            .iter()
            .zip(&self.stds)
            .filter(|(x, _)| (lo..=hi).contains(*x))
            .map(|(_, s)| *s)
            .collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }
}

/// Moment-matches the marginal over latents at each grid point:
/// mean `= avg μ_j`, variance `= avg(σ_j² + μ_j²) − mean²`.
pub fn band_from_heads(grid_xs: &[f64], heads: &[Vec<(f64, f64)>]) -> PredictiveBand {
    let nz = heads.len() as f64;
    let mut means = Vec::with_capacity(grid_xs.len());
    let mut stds = Vec::with_capacity(grid_xs.len());
    for i in 0..grid_xs.len() {
        let mean = heads.iter().map(|h| h[i].0).sum::<f64>() / nz;
        let second = heads.iter().map(|h| h[i].1 + h[i].0 * h[i].0).sum::<f64>() / nz;
        means.push(mean);
        stds.push(math::sqrt((second - mean * mean).max(0.0)));
    }
    PredictiveBand { grid_xs: grid_xs.to_vec(), means, stds, num_z_samples: heads.len() }
}

/// `(mean, variance)` of the first output of a Gaussian head over a grid.
pub fn head_moments(model: &VFuncModel, grid_xs: &[f64], z: &[f64]) -> Result<Vec<(f64, f64)>> {
    let xs: Vec<Vec<f64>> = grid_xs.iter().map(|&x| vec![x]).collect();
    let raw = model.net.head_plain(&model.params, &xs, z)?;
    raw.iter()
        .map(|r| match model.net.head_to_prediction(r)? {
            Prediction::Gaussian(g) => Ok((g.mean()[0], g.variance()[0])),
            Prediction::Categorical(_) => Err(invalid("predictive band needs a gaussian head")),
        })
        .collect()
}

pub fn predictive_band<R: Rng + ?Sized>(
    model: &VFuncModel,
    grid_xs: &[f64],
    num_z_samples: usize,
    rng: &mut R,
) -> Result<PredictiveBand> {
    if num_z_samples < 2 {
        return Err(invalid("predictive band needs at least 2 latent samples"));
    }
    let heads = (0..num_z_samples)
        .map(|_| {
            let z = model.sample_latent(rng);
            head_moments(model, grid_xs, &z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(band_from_heads(grid_xs, &heads))
}

/// Predictive means along the path `α z0 + (1 − α) z1`: one row per `α`.
pub fn interpolation_trace(
    model: &VFuncModel,
    z0: &[f64],
    z1: &[f64],
    alphas: &[f64],
    grid_xs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    interpolate_latents(z0, z1, alphas)?
        .iter()
        .map(|z| Ok(head_moments(model, grid_xs, z)?.into_iter().map(|(m, _)| m).collect()))
        .collect()
}

/// Per-grid-point variance of the trace rows (across `α`).
pub fn trace_column_variance(rows: &[Vec<f64>]) -> Vec<f64> {
    if rows.is_empty() {
        return Vec::new();
    }
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n
        })
        .collect()
}
