//! A discrete joint small enough to enumerate.
//!
//! Four equiprobable latents, two fixed inputs, and a Bernoulli output per
//! input whose success probability comes from a fixed table. A "function"
//! is the pair of output bits, so `p(f, z)` has 16 atoms and every entropy
//! can be computed exactly. Both entropy bounds are then estimated by Monte
//! Carlo with trainable recognition/critic networks and compared with the
//! exact values.

use crate::dd::{subset_bound, EmbeddingPair};
use crate::error::{invalid, Result};
use crate::math;
use crate::model::{EntropyBoundReport, FhatMode, FunctionBatch};
use crate::rng;
use crate::tensor::{Activation, AdamState, Mlp, ParamStore, Tape, Tensor, Var};
use alloc::{vec, vec::Vec};
use rand::seq::SliceRandom;
use rand::Rng;

pub const NUM_LATENTS: usize = 4;
pub const NUM_POINTS: usize = 2;
const INPUTS: [f64; NUM_POINTS] = [0.0, 1.0];

/// `p(y_n = 1 | z)` for each latent and input.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyJoint {
    table: [[f64; NUM_POINTS]; NUM_LATENTS],
}

/// Exact entropies of a [`ToyJoint`], in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactEntropies {
    pub h_z: f64,
    pub h_f: f64,
    pub h_f_given_z: f64,
    pub h_z_given_f: f64,
    pub mutual_info: f64,
}

impl ExactEntropies {
    /// `H(z) − H(z|f) + H(f|z) − H(f)`; zero up to rounding.
    pub fn decomposition_residual(&self) -> f64 {
        self.h_z - self.h_z_given_f + self.h_f_given_z - self.h_f
    }
}

fn bernoulli_entropy(p: f64) -> f64 {
    -(math::xlogx(p) + math::xlogx(1.0 - p))
}

impl Default for ToyJoint {
    fn default() -> Self {
        ToyJoint { table: [[0.9, 0.8], [0.8, 0.1], [0.15, 0.85], [0.3, 0.3]] }
    }
}

impl ToyJoint {
    pub fn new(table: [[f64; NUM_POINTS]; NUM_LATENTS]) -> Result<Self> {
        if table.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("toy table entries must be probabilities"));
        }
        Ok(ToyJoint { table })
    }

    pub fn num_functions() -> usize {
        1 << NUM_POINTS
    }

    /// Output bits of function index `f`.
    pub fn bits(f: usize) -> [f64; NUM_POINTS] {
        core::array::from_fn(|n| ((f >> n) & 1) as f64)
    }

    pub fn p_f_given_z(&self, f: usize, z: usize) -> f64 {
        (0..NUM_POINTS)
            .map(|n| if (f >> n) & 1 == 1 { self.table[z][n] } else { 1.0 - self.table[z][n] })
            .product()
    }

    pub fn p_f(&self, f: usize) -> f64 {
        (0..NUM_LATENTS).map(|z| self.p_f_given_z(f, z)).sum::<f64>() / NUM_LATENTS as f64
    }

    pub fn posterior(&self, f: usize) -> [f64; NUM_LATENTS] {
        let pf = self.p_f(f);
        core::array::from_fn(|z| self.p_f_given_z(f, z) / (NUM_LATENTS as f64 * pf))
    }

    /// `H(f | z = z)`: the outputs are independent given `z`.
    pub fn h_f_given_latent(&self, z: usize) -> f64 {
        self.table[z].iter().map(|&p| bernoulli_entropy(p)).sum()
    }

    /// Brute-force enumeration over all `(f, z)` atoms.
    pub fn enumerate(&self) -> ExactEntropies {
        let pz = 1.0 / NUM_LATENTS as f64;
        let h_z = -(NUM_LATENTS as f64) * math::xlogx(pz);
        let mut h_f = 0.0;
        let mut h_f_given_z = 0.0;
        let mut h_z_given_f = 0.0;
        for f in 0..Self::num_functions() {
            let pf = self.p_f(f);
            h_f -= math::xlogx(pf);
            for z in 0..NUM_LATENTS {
                let joint = pz * self.p_f_given_z(f, z);
                if joint > 0.0 {
                    h_f_given_z -= joint * math::ln(self.p_f_given_z(f, z));
                    h_z_given_f -= joint * math::ln(joint / pf);
                }
            }
        }
        ExactEntropies { h_z, h_f, h_f_given_z, h_z_given_f, mutual_info: h_f - h_f_given_z }
    }

    /// Enumerated `E[−log q(z | f)]` for a recognition distribution `q`.
    pub fn cross_entropy(&self, q: impl Fn(usize) -> [f64; NUM_LATENTS]) -> f64 {
        let pz = 1.0 / NUM_LATENTS as f64;
        let mut total = 0.0;
        for f in 0..Self::num_functions() {
            let qf = q(f);
            for (z, &qz) in qf.iter().enumerate() {
                let joint = pz * self.p_f_given_z(f, z);
                if joint > 0.0 {
                    total -= joint * math::ln(qz);
                }
            }
        }
        total
    }

    /// Draws `z ~ p(z)` then `f ~ p(f | z)`; returns `(z, f)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let z = rng.random_range(0..NUM_LATENTS);
        let mut f = 0;
        for n in 0..NUM_POINTS {
            if rng.random::<f64>() < self.table[z][n] {
                f |= 1 << n;
            }
        }
        (z, f)
    }
}

/// Places toy functions on a tape as a batch of partial functions.
fn toy_batch(tape: &mut Tape, fs: &[usize]) -> Result<FunctionBatch> {
    let rows = fs.len() * NUM_POINTS;
    let mut xs = Vec::with_capacity(rows);
    let mut ys = Vec::with_capacity(rows);
    for &f in fs {
        let bits = ToyJoint::bits(f);
        for n in 0..NUM_POINTS {
            xs.push(INPUTS[n]);
            ys.push(bits[n]);
        }
    }
    let xs = tape.matrix(rows, 1, xs)?;
    let ys = tape.matrix(rows, 1, ys)?;
    let zs = tape.matrix(1, 1, vec![0.0])?;
    Ok(FunctionBatch {
        xs,
        ys,
        zs,
        groups: fs.len(),
        k: NUM_POINTS,
        mode: FhatMode::ParameterOutputs,
        head_gaussian: None,
    })
}

fn one_hot_latents(zs: &[usize]) -> Tensor {
    let mut data = vec![0.0; zs.len() * NUM_LATENTS];
    for (i, &z) in zs.iter().enumerate() {
        data[i * NUM_LATENTS + z] = 1.0;
    }
    Tensor::matrix(zs.len(), NUM_LATENTS, data).expect("one-hot shape")
}

/// Categorical `q(z | f̂)` from a sum-pooled set encoder over `(x_n, y_n)`.
pub struct ToyRecognizer {
    pub params: ParamStore,
    pair: Mlp,
    head: Mlp,
}

impl ToyRecognizer {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let pair = Mlp::new(&mut params, "toy.rec.pair", &[2, hidden, hidden], Activation::Tanh, rng)?;
        let head = Mlp::new(&mut params, "toy.rec.head", &[hidden, hidden, NUM_LATENTS], Activation::Tanh, rng)?;
        Ok(ToyRecognizer { params, pair, head })
    }

    /// `log q(· | f̂)` rows for a batch, shape `[groups, NUM_LATENTS]`.
    fn log_q(&self, tape: &mut Tape, batch: &FunctionBatch) -> Result<Var> {
        let pairs = tape.concat(&[batch.xs, batch.ys])?;
        let h = self.pair.forward(tape, &self.params, pairs)?.output;
        let pooled = tape.group_sum(h, batch.k)?;
        let logits = self.head.forward(tape, &self.params, pooled)?.output;
        tape.log_softmax(logits)
    }

    pub fn probs(&self, f: usize) -> Result<[f64; NUM_LATENTS]> {
        let mut tape = Tape::new();
        let batch = toy_batch(&mut tape, &[f])?;
        let lq = self.log_q(&mut tape, &batch)?;
        let d = tape.data(lq);
        Ok(core::array::from_fn(|z| math::exp(d[z])))
    }

    /// Per-sample `log q(z_i | f_i)` as a `[n, 1]` node.
    fn log_q_true(&self, tape: &mut Tape, zs: &[usize], fs: &[usize]) -> Result<Var> {
        let batch = toy_batch(tape, fs)?;
        let lq = self.log_q(tape, &batch)?;
        let mask = tape.leaf(one_hot_latents(zs));
        let picked = tape.mul(lq, mask)?;
        tape.sum_cols(picked)
    }
}

/// `φ_f`/`φ_z` critic over the full latent support (the kz-subset with
/// `k = NUM_LATENTS`, presented in a random order).
pub struct ToyCritic {
    pub params: ParamStore,
    emb: EmbeddingPair,
}

impl ToyCritic {
    pub fn new<R: Rng + ?Sized>(hidden: usize, embed_dim: usize, rng: &mut R) -> Result<Self> {
        let mut params = ParamStore::new();
        let emb = EmbeddingPair::with_hidden(&mut params, 1, 1, NUM_LATENTS, embed_dim, hidden, rng)?;
        Ok(ToyCritic { params, emb })
    }

    /// Per-sample `log k + log q_k(z_true | f̂)` rows and their mean.
    fn bound_rows(&self, tape: &mut Tape, zs: &[usize], fs: &[usize], orders: &[[usize; NUM_LATENTS]]) -> Result<(Var, Vec<usize>)> {
        let batch = toy_batch(tape, fs)?;
        let mut cands = Vec::with_capacity(fs.len() * NUM_LATENTS);
        let mut truth = Vec::with_capacity(fs.len());
        for (order, &z) in orders.iter().zip(zs) {
            cands.extend_from_slice(order);
            truth.push(order.iter().position(|&c| c == z).expect("order is a permutation"));
        }
        let cands = tape.leaf(one_hot_latents(&cands));
        let scores = self.emb.scores(tape, &self.params, &batch, cands, NUM_LATENTS)?;
        Ok((scores, truth))
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate { mean, std_err: math::sqrt(var / n) }
    }
}

fn draw<R: Rng + ?Sized>(joint: &ToyJoint, n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    (0..n).map(|_| joint.sample(rng)).unzip()
}

fn random_orders<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[usize; NUM_LATENTS]> {
    (0..n)
        .map(|_| {
            let mut o: [usize; NUM_LATENTS] = core::array::from_fn(|i| i);
            o.shuffle(rng);
            o
        })
        .collect()
}

/// Monte Carlo estimate of `H(z) + E[log q(z|f̂)] + H(f|z)` from `n` joint
/// draws, with the per-draw standard error.
pub fn variational_estimate<R: Rng + ?Sized>(
    joint: &ToyJoint,
    rec: &ToyRecognizer,
    n: usize,
    rng: &mut R,
) -> Result<(EntropyBoundReport, Estimate)> {
    let (zs, fs) = draw(joint, n, rng);
    let mut tape = Tape::new();
    let lq = rec.log_q_true(&mut tape, &zs, &fs)?;
    let h_z = math::ln(NUM_LATENTS as f64);
    let per: Vec<f64> = tape
        .data(lq)
        .iter()
        .zip(&zs)
        .map(|(l, &z)| h_z + l + joint.h_f_given_latent(z))
        .collect();
    let recon = tape.data(lq).iter().sum::<f64>() / n as f64;
    let hfz = zs.iter().map(|&z| joint.h_f_given_latent(z)).sum::<f64>() / n as f64;
    Ok((EntropyBoundReport::new(h_z, recon, hfz), Estimate::from_samples(&per)))
}

/// Monte Carlo estimate of the dynamic-discretization bound on `I(f; z)`.
pub fn dd_estimate<R: Rng + ?Sized>(
    joint: &ToyJoint,
    critic: &ToyCritic,
    n: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let (zs, fs) = draw(joint, n, rng);
    let orders = random_orders(n, rng);
    let mut tape = Tape::new();
    let (scores, truth) = critic.bound_rows(&mut tape, &zs, &fs, &orders)?;
    let logp = tape.log_softmax(scores)?;
    let d = tape.data(logp);
    let lk = math::ln(NUM_LATENTS as f64);
    let per: Vec<f64> = truth.iter().enumerate().map(|(i, &t)| lk + d[i * NUM_LATENTS + t]).collect();
    Ok(Estimate::from_samples(&per))
}

/// Maximizes `E[log q(z | f̂)]` by Adam; returns the per-step batch bound.
pub fn train_recognizer<R: Rng + ?Sized>(
    joint: &ToyJoint,
    rec: &mut ToyRecognizer,
    steps: usize,
    batch: usize,
    lr: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut adam = AdamState::new(&rec.params, lr)?;
    let mut curve = Vec::with_capacity(steps);
    let h_z = math::ln(NUM_LATENTS as f64);
    for _ in 0..steps {
        let (zs, fs) = draw(joint, batch, rng);
        let mut tape = Tape::new();
        let lq = rec.log_q_true(&mut tape, &zs, &fs)?;
        let mean = tape.mean(lq);
        let loss = tape.neg(mean);
        rec.params.zero_grad();
        tape.backward_into(loss, &mut rec.params)?;
        adam.step(&mut rec.params)?;
        let hfz = zs.iter().map(|&z| joint.h_f_given_latent(z)).sum::<f64>() / batch as f64;
        curve.push(h_z + tape.scalar_value(mean)? + hfz);
    }
    Ok(curve)
}

/// Maximizes the subset bound by Adam; returns the per-step batch bound.
pub fn train_critic<R: Rng + ?Sized>(
    joint: &ToyJoint,
    critic: &mut ToyCritic,
    steps: usize,
    batch: usize,
    lr: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut adam = AdamState::new(&critic.params, lr)?;
    let mut curve = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (zs, fs) = draw(joint, batch, rng);
        let orders = random_orders(batch, rng);
        let mut tape = Tape::new();
        let (scores, truth) = critic.bound_rows(&mut tape, &zs, &fs, &orders)?;
        let bound = subset_bound(&mut tape, scores, &truth)?;
        let loss = tape.neg(bound);
        critic.params.zero_grad();
        tape.backward_into(loss, &mut critic.params)?;
        adam.step(&mut critic.params)?;
        curve.push(tape.scalar_value(bound)?);
    }
    Ok(curve)
}

/// Settings for [`run_bounds_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsCheckConfig {
    pub seed: u64,
    pub eval_samples: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Maximum gap (nats) between a trained bound and its ceiling.
    pub tolerance: f64,
}

impl Default for BoundsCheckConfig {
    fn default() -> Self {
        BoundsCheckConfig {
            seed: 0,
            eval_samples: 20_000,
            train_steps: 1500,
            batch: 128,
            lr: 3e-3,
            hidden: 32,
            embed_dim: 16,
            tolerance: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub estimate: f64,
    pub std_err: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Exact entropies next to bound estimates for random and trained networks.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsCheckReport {
    pub exact: ExactEntropies,
    pub lines: Vec<CheckLine>,
}

impl BoundsCheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

/// Runs the enumeration harness: the entropy decomposition identity, both
/// bounds below their exact ceilings for untrained and trained networks, and
/// trained bounds within `tolerance` of those ceilings.
pub fn run_bounds_check(joint: &ToyJoint, cfg: &BoundsCheckConfig) -> Result<BoundsCheckReport> {
    let exact = joint.enumerate();
    let mut lines = Vec::new();
    let residual = exact.decomposition_residual();
    lines.push(CheckLine {
        name: "entropy identity H(z)-H(z|f)+H(f|z)=H(f)",
        estimate: residual,
        std_err: 0.0,
        limit: 1e-12,
        pass: residual.abs() <= 1e-12,
    });

    let mut init = rng::stream(cfg.seed, "toy.init");
    let mut sampler = rng::stream(cfg.seed, "toy.sample");
    let mut rec = ToyRecognizer::new(cfg.hidden, &mut init)?;
    let mut critic = ToyCritic::new(cfg.hidden, cfg.embed_dim, &mut init)?;
    let log_k = math::ln(NUM_LATENTS as f64);

    let upper = |name, est: Estimate, ceiling: f64| CheckLine {
        name,
        estimate: est.mean,
        std_err: est.std_err,
        limit: ceiling + 3.0 * est.std_err,
        pass: est.mean <= ceiling + 3.0 * est.std_err,
    };
    let dd_upper = |name, est: Estimate| {
        let limit = log_k.min(exact.mutual_info + 3.0 * est.std_err);
        CheckLine { name, estimate: est.mean, std_err: est.std_err, limit, pass: est.mean <= limit }
    };

    let (_, v0) = variational_estimate(joint, &rec, cfg.eval_samples, &mut sampler)?;
    lines.push(upper("variational bound <= H(f) (random q)", v0, exact.h_f));
    let d0 = dd_estimate(joint, &critic, cfg.eval_samples, &mut sampler)?;
    lines.push(dd_upper("dd bound <= min(log k, I(f;z)) (random critic)", d0));

    train_recognizer(joint, &mut rec, cfg.train_steps, cfg.batch, cfg.lr, &mut sampler)?;
    train_critic(joint, &mut critic, cfg.train_steps, cfg.batch, cfg.lr, &mut sampler)?;

    let (_, v1) = variational_estimate(joint, &rec, cfg.eval_samples, &mut sampler)?;
    lines.push(upper("variational bound <= H(f) (trained q)", v1, exact.h_f));
    let d1 = dd_estimate(joint, &critic, cfg.eval_samples, &mut sampler)?;
    lines.push(dd_upper("dd bound <= min(log k, I(f;z)) (trained critic)", d1));

    lines.push(CheckLine {
        name: "trained variational bound within tolerance of H(f)",
        estimate: v1.mean,
        std_err: v1.std_err,
        limit: exact.h_f - cfg.tolerance,
        pass: v1.mean >= exact.h_f - cfg.tolerance,
    });
    lines.push(CheckLine {
        name: "trained dd bound within tolerance of I(f;z)",
        estimate: d1.mean,
        std_err: d1.std_err,
        limit: exact.mutual_info - cfg.tolerance,
        pass: d1.mean >= exact.mutual_info - cfg.tolerance,
    });
    Ok(BoundsCheckReport { exact, lines })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn decomposition_identity_holds_exactly() {
        let e = ToyJoint::default().enumerate();
        assert!(e.decomposition_residual().abs() < 1e-12);
        assert!((e.h_z - math::ln(4.0)).abs() < 1e-15);
        assert!(e.mutual_info > 0.1 && e.mutual_info < e.h_z);
    }

    #[test]
    fn cross_entropy_upper_bounds_conditional_entropy() {
        let joint = ToyJoint::default();
        let e = joint.enumerate();
        assert!((joint.cross_entropy(|f| joint.posterior(f)) - e.h_z_given_f).abs() < 1e-12);
        let mut rng = stream(4, "q");
        for _ in 0..50 {
            let table: Vec<[f64; NUM_LATENTS]> = (0..4)
                .map(|_| {
                    let raw: [f64; NUM_LATENTS] = core::array::from_fn(|_| rng.random::<f64>() + 1e-3);
                    let s: f64 = raw.iter().sum();
                    raw.map(|r| r / s)
                })
                .collect();
            assert!(joint.cross_entropy(|f| table[f]) >= e.h_z_given_f - 1e-12);
        }
    }

    #[test]
    fn posterior_is_normalized() {
        let joint = ToyJoint::default();
        for f in 0..4 {
            assert!((joint.posterior(f).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let total: f64 = (0..4).map(|f| joint.p_f(f)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
