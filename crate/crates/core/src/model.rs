//! The generative model over functions: a Gaussian latent prior, a
//! latent-conditioned prediction network, and a recognition network that
//! encodes a partial function through its "diff gradient" on a default
//! latent.
//!
//! The entropy of the function distribution is bounded below by
//!
//! ```text
//! H(f) >= H(z) + E[log q(z | f̂)] + H(f | z)
//! ```
//!
//! with `f̂` a set of `k` input/output pairs drawn under one latent.

use crate::dd::EmbeddingPair;
use crate::dist::{Categorical, DiagGaussian, GaussianVars};
use crate::error::{invalid, shape_err, Result};
use crate::math::UNIT_GAUSSIAN_ENTROPY;
use crate::rng;
use crate::tensor::{Activation, Mlp, MlpTrace, ParamId, ParamStore, Tape, Tensor, Var};
use alloc::{format, vec, vec::Vec};
use rand::Rng;

/// `p(z) = N(0, I_dim)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentPrior {
    pub dim: usize,
}

impl LatentPrior {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("latent dimension must be >= 1"));
        }
        Ok(LatentPrior { dim })
    }

    /// Differential entropy `dim · ½ ln(2πe)`.
    pub fn entropy(&self) -> f64 {
        self.dim as f64 * UNIT_GAUSSIAN_ENTROPY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        rng::normal_vec(rng, self.dim)
    }

    pub fn as_gaussian(&self) -> DiagGaussian {
        DiagGaussian::standard(self.dim)
    }
}

/// Output head of the prediction network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Head {
    /// Mean and log-variance of a diagonal Gaussian over `y_dim` outputs.
    Gaussian { y_dim: usize },
    /// Logits over `classes` outcomes.
    Categorical { classes: usize },
}

impl Head {
    /// Width of the raw network output.
    pub fn width(self) -> usize {
        match self {
            Head::Gaussian { y_dim } => 2 * y_dim,
            Head::Categorical { classes } => classes,
        }
    }

    /// Width of a `y` stored in a partial function.
    pub fn y_dim(self) -> usize {
        match self {
            Head::Gaussian { y_dim } => y_dim,
            Head::Categorical { classes } => classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Gaussian(DiagGaussian),
    Categorical(Categorical),
}

impl Prediction {
    pub fn gaussian(&self) -> Option<&DiagGaussian> {
        match self {
            Prediction::Gaussian(g) => Some(g),
            Prediction::Categorical(_) => None,
        }
    }

    pub fn categorical(&self) -> Option<&Categorical> {
        match self {
            Prediction::Categorical(c) => Some(c),
            Prediction::Gaussian(_) => None,
        }
    }
}

/// What a partial function records as `y` for each input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FhatMode {
    /// `y ~ p(y | x, z)` via reparameterization (Gaussian heads only).
    SampledOutputs,
    /// The head's mean (Gaussian) or probability vector (categorical).
    ParameterOutputs,
}

/// `p(y | x, z)`: an MLP on `[x; z]` followed by a [`Head`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictionNetwork {
    pub mlp: Mlp,
    pub x_dim: usize,
    pub latent_dim: usize,
    pub head: Head,
}

impl PredictionNetwork {
    fn check(&self, x_len: usize, z_len: usize) -> Result<()> {
        if x_len != self.x_dim || z_len != self.latent_dim {
            return Err(shape_err(
                "predict",
                format!(
                    "expected x of {} and z of {}, got {x_len} and {z_len}",
                    self.x_dim, self.latent_dim
                ),
            ));
        }
        Ok(())
    }

    /// Raw head output for `[n, x_dim]` inputs and `[n, latent_dim]` latents.
    pub fn forward_rows(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        xs: Var,
        zs: Var,
        detach_weights: bool,
    ) -> Result<MlpTrace> {
        let input = tape.concat(&[xs, zs])?;
        if detach_weights {
            self.mlp.forward_detached(tape, store, input)
        } else {
            self.mlp.forward(tape, store, input)
        }
    }

    /// Raw head outputs for many inputs under one latent, without a tape.
    pub fn head_plain(&self, store: &ParamStore, xs: &[Vec<f64>], z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut input = Vec::with_capacity(xs.len() * (self.x_dim + self.latent_dim));
        for x in xs {
            self.check(x.len(), z.len())?;
            input.extend_from_slice(x);
            input.extend_from_slice(z);
        }
        let out = self.mlp.forward_plain(store, &input)?;
        Ok(out.chunks(self.head.width()).map(<[f64]>::to_vec).collect())
    }

    pub fn head_to_prediction(&self, raw: &[f64]) -> Result<Prediction> {
        match self.head {
            Head::Gaussian { y_dim } => Ok(Prediction::Gaussian(DiagGaussian::new(
                raw[..y_dim].to_vec(),
                raw[y_dim..].to_vec(),
            )?)),
            Head::Categorical { .. } => Ok(Prediction::Categorical(Categorical::new(raw.to_vec())?)),
        }
    }
}

/// `f̂ = {(x_1, y_1), ..., (x_k, y_k)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialFunction {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    pub generating_latent: Option<Vec<f64>>,
}

impl PartialFunction {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(invalid(format!(
                "partial function needs k >= 1 matching pairs, got {} xs and {} ys",
                xs.len(),
                ys.len()
            )));
        }
        let (dx, dy) = (xs[0].len(), ys[0].len());
        if xs.iter().any(|x| x.len() != dx) || ys.iter().any(|y| y.len() != dy) {
            return Err(invalid("partial function pairs must share x and y dimensions"));
        }
        Ok(PartialFunction { xs, ys, generating_latent: None })
    }

    pub fn k(&self) -> usize {
        self.xs.len()
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[Vec<f64>] {
        &self.ys
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.xs.iter().zip(&self.ys).map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    pub fn x_dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn y_dim(&self) -> usize {
        self.ys[0].len()
    }
}

/// Loss comparing an observed `y` with the prediction at the default latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ReconLoss {
    /// `½ ‖mean − y‖²` on a Gaussian head.
    SquaredError,
    /// `−Σ y log softmax(logits)` on a categorical head.
    CrossEntropy,
}

/// `q(z | f̂)`: the diff gradient `Σ_n ∂L_n/∂z̄` passed through `post_mlp`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecognitionNetwork {
    pub default_latent: ParamId,
    pub post_mlp: Mlp,
    pub recon: ReconLoss,
}

/// Unnormalized log-density `log p̄(f̂)` over a batch of partial functions.
pub trait FunctionPrior {
    fn log_density(&self, tape: &mut Tape, batch: &FunctionBatch) -> Result<Var>;
}

/// `log p̄(f) = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatPrior;

impl FunctionPrior for FlatPrior {
    fn log_density(&self, tape: &mut Tape, _batch: &FunctionBatch) -> Result<Var> {
        Ok(tape.scalar(0.0))
    }
}

/// Which lower bound on `H(f)` the entropy term maximizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundKind {
    /// `H(z) + E[log q(z|f̂)] + H(f|z)` with the diff-gradient encoder.
    #[default]
    Variational,
    /// `I_dd(f; z) + H(f|z)` with the kz-subset critic.
    DynamicDiscretization,
}

/// How the entropy term is estimated during training.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyTermConfig {
    pub bound: BoundKind,
    /// Points per partial function.
    pub k: usize,
    /// Latents (partial functions) per Monte Carlo batch.
    pub z_batch: usize,
    /// Candidate latents per kz-subset for the dynamic-discretization bound.
    pub subset_size: usize,
    pub mode: FhatMode,
    pub detach_encoder_path: bool,
}

/// A recorded entropy bound together with the partial functions it used.
#[derive(Clone, Debug)]
pub struct EntropyTerm {
    pub bound: Var,
    pub h_f_given_z: Var,
    pub batch: FunctionBatch,
}

impl VFuncModel {
    /// Records the configured entropy bound for partial functions over
    /// `xs[g]`, one input set per Monte Carlo sample.
    pub fn entropy_bound<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        cfg: &EntropyTermConfig,
        xs: &[Vec<Vec<f64>>],
        rng: &mut R,
    ) -> Result<EntropyTerm> {
        match cfg.bound {
            BoundKind::Variational => {
                let zs: Vec<Vec<f64>> = xs.iter().map(|_| self.sample_latent(rng)).collect();
                let batch = self.sample_function_batch(tape, &zs, xs, cfg.mode, rng)?;
                let q = self.encode_batch(tape, &batch, cfg.detach_encoder_path)?;
                let terms = self.bound_terms(tape, &batch, &q)?;
                Ok(EntropyTerm { bound: terms.bound, h_f_given_z: terms.h_f_given_z, batch })
            }
            BoundKind::DynamicDiscretization => {
                let (terms, batch) = self.dd_bound(tape, cfg.subset_size, xs, cfg.mode, rng)?;
                Ok(EntropyTerm { bound: terms.bound, h_f_given_z: terms.h_f_given_z, batch })
            }
        }
    }
}

/// Architecture of a [`VFuncModel`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub x_dim: usize,
    pub latent_dim: usize,
    pub head: Head,
    pub hidden: Vec<usize>,
    pub rec_hidden: Vec<usize>,
    /// Embedding width of the dynamic-discretization critic; `0` omits it.
    pub embed_dim: usize,
}

impl ModelConfig {
    pub fn regression(latent_dim: usize) -> Self {
        ModelConfig {
            x_dim: 1,
            latent_dim,
            head: Head::Gaussian { y_dim: 1 },
            hidden: vec![64, 64],
            rec_hidden: vec![64],
            embed_dim: 0,
        }
    }

    pub fn policy(num_states: usize, num_actions: usize, latent_dim: usize) -> Self {
        ModelConfig {
            x_dim: num_states,
            latent_dim,
            head: Head::Categorical { classes: num_actions },
            hidden: vec![64, 64],
            rec_hidden: vec![64],
            embed_dim: 0,
        }
    }
}

/// Prior, prediction network, recognition network and (optionally) the
/// dynamic-discretization embeddings, with all weights in one store.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VFuncModel {
    pub config: ModelConfig,
    pub prior: LatentPrior,
    pub net: PredictionNetwork,
    pub rec: RecognitionNetwork,
    pub dd: Option<EmbeddingPair>,
    pub params: ParamStore,
}

/// Partial functions for `groups` latents with `k` points each, on a tape.
/// Row `g * k + n` holds point `n` of group `g`.
#[derive(Clone, Debug)]
pub struct FunctionBatch {
    pub xs: Var,
    pub ys: Var,
    pub zs: Var,
    pub groups: usize,
    pub k: usize,
    pub mode: FhatMode,
    /// Head distribution at each `(x_n, z)` when the head is Gaussian.
    pub head_gaussian: Option<GaussianVars>,
}

/// The three terms of the variational bound as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct BoundVars {
    pub h_z: f64,
    pub recon_term: Var,
    pub h_f_given_z: Var,
    pub bound: Var,
}

/// Decomposed entropy bound; `bound` is exactly the sum of the other three.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyBoundReport {
    pub h_z: f64,
    pub recon_term: f64,
    pub h_f_given_z: f64,
    pub bound: f64,
}

impl EntropyBoundReport {
    pub fn new(h_z: f64, recon_term: f64, h_f_given_z: f64) -> Self {
        EntropyBoundReport { h_z, recon_term, h_f_given_z, bound: h_z + recon_term + h_f_given_z }
    }
}

impl BoundVars {
    pub fn report(&self, tape: &Tape) -> Result<EntropyBoundReport> {
        Ok(EntropyBoundReport::new(
            self.h_z,
            tape.scalar_value(self.recon_term)?,
            tape.scalar_value(self.h_f_given_z)?,
        ))
    }
}

fn flatten(rows: &[Vec<f64>], width: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(shape_err("batch", format!("{what} row has {} entries, expected {width}", r.len())));
        }
        out.extend_from_slice(r);
    }
    Ok(out)
}

impl VFuncModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let prior = LatentPrior::new(config.latent_dim)?;
        let mut params = ParamStore::new();
        let mut dims = vec![config.x_dim + config.latent_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(config.head.width());
        let mlp = Mlp::new(&mut params, "net", &dims, Activation::Tanh, rng)?;
        let net = PredictionNetwork { mlp, x_dim: config.x_dim, latent_dim: config.latent_dim, head: config.head };

        let default_latent = params.add("rec.zbar", Tensor::zeros(vec![1, config.latent_dim]));
        let mut rdims = vec![config.latent_dim];
        rdims.extend_from_slice(&config.rec_hidden);
        rdims.push(2 * config.latent_dim);
        let post_mlp = Mlp::new(&mut params, "rec.post", &rdims, Activation::Tanh, rng)?;
        let recon = match config.head {
            Head::Gaussian { .. } => ReconLoss::SquaredError,
            Head::Categorical { .. } => ReconLoss::CrossEntropy,
        };
        let rec = RecognitionNetwork { default_latent, post_mlp, recon };

        let dd = if config.embed_dim > 0 {
            Some(EmbeddingPair::new(
                &mut params,
                config.x_dim,
                config.head.y_dim(),
                config.latent_dim,
                config.embed_dim,
                rng,
            )?)
        } else {
            None
        };
        Ok(VFuncModel { config, prior, net, rec, dd, params })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.dim
    }

    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.prior.sample(rng)
    }

    /// Head distribution at `(x, z)`.
    pub fn predict(&self, x: &[f64], z: &[f64]) -> Result<Prediction> {
        let raw = self.net.head_plain(&self.params, &[x.to_vec()], z)?;
        self.net.head_to_prediction(&raw[0])
    }

    /// Draws `f̂` over `xs` under latent `z`.
    pub fn sample_partial_function<R: Rng + ?Sized>(
        &self,
        z: &[f64],
        xs: &[Vec<f64>],
        rng: &mut R,
        mode: FhatMode,
    ) -> Result<PartialFunction> {
        if xs.is_empty() {
            return Err(invalid("partial function needs k >= 1 inputs"));
        }
        let raw = self.net.head_plain(&self.params, xs, z)?;
        let mut ys = Vec::with_capacity(xs.len());
        for r in &raw {
            let y = match (self.net.head_to_prediction(r)?, mode) {
                (Prediction::Gaussian(g), FhatMode::SampledOutputs) => g.sample(rng),
                (Prediction::Gaussian(g), FhatMode::ParameterOutputs) => g.mean().to_vec(),
                (Prediction::Categorical(c), FhatMode::ParameterOutputs) => c.probs().to_vec(),
                (Prediction::Categorical(_), FhatMode::SampledOutputs) => {
                    return Err(invalid("sampled_outputs mode requires a gaussian head"))
                }
            };
            ys.push(y);
        }
        let mut f = PartialFunction::new(xs.to_vec(), ys)?;
        f.generating_latent = Some(z.to_vec());
        Ok(f)
    }

    /// Records partial functions for each latent on `tape`: `xs[g]` holds the
    /// `k` inputs of group `g`. Outputs stay differentiable with respect to
    /// the network weights and the latents.
    pub fn sample_function_batch<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        zs: &[Vec<f64>],
        xs: &[Vec<Vec<f64>>],
        mode: FhatMode,
        rng: &mut R,
    ) -> Result<FunctionBatch> {
        let groups = zs.len();
        if groups == 0 || xs.len() != groups {
            return Err(invalid(format!("{} latents for {} input sets", groups, xs.len())));
        }
        let k = xs[0].len();
        if k == 0 || xs.iter().any(|s| s.len() != k) {
            return Err(invalid("every partial function needs the same k >= 1 inputs"));
        }
        let ld = self.latent_dim();
        let zv = tape.matrix(groups, ld, flatten(zs, ld, "latent")?)?;
        let flat_x: Vec<Vec<f64>> = xs.iter().flatten().cloned().collect();
        let xv = tape.matrix(groups * k, self.net.x_dim, flatten(&flat_x, self.net.x_dim, "input")?)?;
        let z_rows = tape.repeat_rows(zv, k)?;
        let trace = self.net.forward_rows(tape, &self.params, xv, z_rows, false)?;
        let head = trace.output;
        let (ys, head_gaussian) = match (self.net.head, mode) {
            (Head::Gaussian { y_dim }, _) => {
                let g = GaussianVars::from_head(tape, head)?;
                let ys = match mode {
                    FhatMode::SampledOutputs => {
                        let noise = tape.matrix(groups * k, y_dim, rng::normal_vec(rng, groups * k * y_dim))?;
                        g.sample_reparam(tape, noise)?
                    }
                    FhatMode::ParameterOutputs => g.mean,
                };
                (ys, Some(g))
            }
            (Head::Categorical { .. }, FhatMode::ParameterOutputs) => (tape.softmax(head)?, None),
            (Head::Categorical { .. }, FhatMode::SampledOutputs) => {
                return Err(invalid("sampled_outputs mode requires a gaussian head"))
            }
        };
        Ok(FunctionBatch { xs: xv, ys, zs: zv, groups, k, mode, head_gaussian })
    }

    /// Records the diff gradient `Σ_n ∂L_n/∂z̄` of every group of `batch`,
    /// shape `[groups, latent]`. The inner derivative is built from forward
    /// ops, so the result is differentiable with respect to `z̄`, the network
    /// weights and the observed outputs.
    ///
    /// With `detach` set, the prediction network's weights and the observed
    /// outputs enter as constants.
    pub fn diff_gradient_batch(&self, tape: &mut Tape, batch: &FunctionBatch, detach: bool) -> Result<Var> {
        let rows = batch.groups * batch.k;
        let zbar = tape.param(&self.params, self.rec.default_latent);
        let zbar_rows = tape.repeat_rows(zbar, rows)?;
        let trace = self.net.forward_rows(tape, &self.params, batch.xs, zbar_rows, detach)?;
        let ys = if detach { tape.detach(batch.ys) } else { batch.ys };
        let upstream = match self.rec.recon {
            ReconLoss::SquaredError => {
                let y_dim = self.net.head.y_dim();
                let mean = tape.slice(trace.output, 0, y_dim)?;
                let resid = tape.sub(mean, ys)?;
                let pad_w = self.net.head.width() - y_dim;
                let pad = tape.matrix(rows, pad_w, vec![0.0; rows * pad_w])?;
                tape.concat(&[resid, pad])?
            }
            ReconLoss::CrossEntropy => {
                let p = tape.softmax(trace.output)?;
                tape.sub(p, ys)?
            }
        };
        let grad_in = self.net.mlp.explicit_backward(tape, &trace, upstream)?;
        let grad_z = tape.slice(grad_in, self.net.x_dim, self.net.x_dim + self.latent_dim())?;
        tape.group_sum(grad_z, batch.k)
    }

    /// Records `q(z | f̂)` for every group of `batch`, shape `[groups, latent]`.
    pub fn encode_batch(&self, tape: &mut Tape, batch: &FunctionBatch, detach: bool) -> Result<GaussianVars> {
        let diff_grad = self.diff_gradient_batch(tape, batch, detach)?;
        let out = self.rec.post_mlp.forward(tape, &self.params, diff_grad)?;
        GaussianVars::from_head(tape, out.output)
    }

    /// Diff gradient of one partial function, without the post-MLP.
    pub fn diff_gradient(&self, f: &PartialFunction) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let batch = self.constant_batch(&mut tape, core::slice::from_ref(f), None)?;
        let g = self.diff_gradient_batch(&mut tape, &batch, false)?;
        Ok(tape.data(g).to_vec())
    }

    /// Places already-sampled partial functions on a tape as constants.
    fn constant_batch(
        &self,
        tape: &mut Tape,
        fs: &[PartialFunction],
        zs: Option<&[Vec<f64>]>,
    ) -> Result<FunctionBatch> {
        let groups = fs.len();
        if groups == 0 {
            return Err(invalid("empty batch"));
        }
        let k = fs[0].k();
        if fs.iter().any(|f| f.k() != k) {
            return Err(invalid("every partial function in a batch must have the same k"));
        }
        let (xd, yd) = (self.net.x_dim, self.net.head.y_dim());
        let mut xs = Vec::with_capacity(groups * k * xd);
        let mut ys = Vec::with_capacity(groups * k * yd);
        for f in fs {
            if f.x_dim() != xd || f.y_dim() != yd {
                return Err(shape_err(
                    "encode",
                    format!("pairs are ({}, {}), network expects ({xd}, {yd})", f.x_dim(), f.y_dim()),
                ));
            }
            for (x, y) in f.pairs() {
                xs.extend_from_slice(x);
                ys.extend_from_slice(y);
            }
        }
        let xv = tape.matrix(groups * k, xd, xs)?;
        let yv = tape.matrix(groups * k, yd, ys)?;
        let ld = self.latent_dim();
        let zv = match zs {
            Some(zs) => tape.matrix(groups, ld, flatten(zs, ld, "latent")?)?,
            None => tape.matrix(groups, ld, vec![0.0; groups * ld])?,
        };
        Ok(FunctionBatch { xs: xv, ys: yv, zs: zv, groups, k, mode: FhatMode::ParameterOutputs, head_gaussian: None })
    }

    /// `q(z | f̂)` for one partial function.
    pub fn encode(&self, f: &PartialFunction) -> Result<DiagGaussian> {
        let mut tape = Tape::new();
        let batch = self.constant_batch(&mut tape, core::slice::from_ref(f), None)?;
        let q = self.encode_batch(&mut tape, &batch, false)?;
        DiagGaussian::new(tape.data(q.mean).to_vec(), tape.data(q.log_var).to_vec())
    }

    /// Variational bound terms for a batch already on the tape, given its
    /// recognition distribution `q`.
    pub fn bound_terms(&self, tape: &mut Tape, batch: &FunctionBatch, q: &GaussianVars) -> Result<BoundVars> {
        let h_z = self.prior.entropy();
        let z_const = tape.detach(batch.zs);
        let lp = q.log_prob_rows(tape, z_const)?;
        let recon_term = tape.mean(lp);
        let h_f_given_z = match (batch.mode, batch.head_gaussian) {
            (FhatMode::SampledOutputs, Some(g)) => {
                let ent = g.entropy_rows(tape)?;
                let total = tape.sum(ent);
                tape.scale(total, 1.0 / batch.groups as f64)
            }
            _ => tape.scalar(0.0),
        };
        let partial = tape.add(recon_term, h_f_given_z)?;
        let bound = tape.shift(partial, h_z);
        Ok(BoundVars { h_z, recon_term, h_f_given_z, bound })
    }

    /// Samples `f̂` under each latent in `zs` over the matching input sets,
    /// encodes them and records the variational entropy bound.
    pub fn variational_bound<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        zs: &[Vec<f64>],
        xs: &[Vec<Vec<f64>>],
        mode: FhatMode,
        detach: bool,
        rng: &mut R,
    ) -> Result<BoundVars> {
        let batch = self.sample_function_batch(tape, zs, xs, mode, rng)?;
        let q = self.encode_batch(tape, &batch, detach)?;
        self.bound_terms(tape, &batch, &q)
    }

    /// Bound report for already-sampled `(z, f̂)` pairs.
    ///
    /// In sampled-output mode `H(f | z)` is the summed head entropy at each
    /// `(x_n, z)`; in parameter-output mode `f` is a deterministic function
    /// of `z` and the term is zero.
    pub fn entropy_lower_bound(
        &self,
        batch: &[(Vec<f64>, PartialFunction)],
        mode: FhatMode,
    ) -> Result<EntropyBoundReport> {
        if batch.is_empty() {
            return Err(invalid("entropy bound needs at least one (z, f̂) pair"));
        }
        let k = batch[0].1.k();
        for (i, (z, f)) in batch.iter().enumerate() {
            if f.k() != k {
                return Err(invalid(format!("pair {i} has k = {}, expected {k}", f.k())));
            }
            if let Some(gen) = &f.generating_latent {
                if gen != z {
                    return Err(invalid(format!("pair {i}: f̂ was not generated under its paired z")));
                }
            }
        }
        let zs: Vec<Vec<f64>> = batch.iter().map(|(z, _)| z.clone()).collect();
        let fs: Vec<PartialFunction> = batch.iter().map(|(_, f)| f.clone()).collect();
        let mut tape = Tape::new();
        let mut fb = self.constant_batch(&mut tape, &fs, Some(&zs))?;
        if mode == FhatMode::SampledOutputs {
            let Head::Gaussian { .. } = self.net.head else {
                return Err(invalid("sampled_outputs mode requires a gaussian head"));
            };
            let z_rows = tape.repeat_rows(fb.zs, fb.k)?;
            let trace = self.net.forward_rows(&mut tape, &self.params, fb.xs, z_rows, false)?;
            fb.head_gaussian = Some(GaussianVars::from_head(&mut tape, trace.output)?);
        }
        fb.mode = mode;
        let q = self.encode_batch(&mut tape, &fb, false)?;
        self.bound_terms(&mut tape, &fb, &q)?.report(&tape)
    }
}

/// `loss = −(R + log p̄ + λ_ent · bound)`; rejects non-finite terms by name.
pub fn training_objective(
    tape: &mut Tape,
    data_term: Var,
    prior_term: Var,
    bound: Var,
    lambda_ent: f64,
) -> Result<Var> {
    if lambda_ent.is_nan() || lambda_ent < 0.0 {
        return Err(invalid(format!("lambda_ent must be >= 0, got {lambda_ent}")));
    }
    for (v, name) in [(data_term, "data term R"), (prior_term, "function prior term"), (bound, "entropy bound")] {
        tape.check_finite(v, name)?;
        if tape.value(v).len() != 1 {
            return Err(shape_err("training_objective", format!("{name} is not a scalar")));
        }
    }
    let mut total = tape.add(data_term, prior_term)?;
    if lambda_ent != 0.0 {
        let scaled = tape.scale(bound, lambda_ent);
        total = tape.add(total, scaled)?;
    }
    let loss = tape.neg(total);
    tape.check_finite(loss, "loss")?;
    Ok(loss)
}

/// `α z0 + (1 − α) z1` for each `α`, in order.
pub fn interpolate_latents(z0: &[f64], z1: &[f64], alphas: &[f64]) -> Result<Vec<Vec<f64>>> {
    if z0.len() != z1.len() {
        return Err(shape_err("interpolate_latents", format!("{} vs {}", z0.len(), z1.len())));
    }
    Ok(alphas
        .iter()
        .map(|&a| z0.iter().zip(z1).map(|(p, q)| a * p + (1.0 - a) * q).collect())
        .collect())
}
