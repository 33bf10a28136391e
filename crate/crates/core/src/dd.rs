//! Dynamic discretization bound on `I(f; z)`.
//!
//! Draw `k` latents `Z_k`, generate `f̂` from one of them, and ask a critic
//! to pick the generating latent out of `Z_k`. The critic scores each
//! candidate by `⟨φ_f(f̂), φ_z(z_i)⟩` and normalizes with a softmax over the
//! subset; `log k + log q_k(z_true | f̂)` then lower-bounds the subset mutual
//! information in expectation.
//!
//! The estimator is stated for discrete latents. Here it is also applied to
//! i.i.d. draws from the continuous Gaussian prior, where repeated values
//! have probability zero.

use crate::error::{invalid, shape_err, Result};
use crate::math;
use crate::model::{FhatMode, FunctionBatch, LatentPrior, PartialFunction, VFuncModel};
use crate::tensor::{Activation, Mlp, ParamStore, Tape, Tensor, Var};
use alloc::{format, vec, vec::Vec};
use rand::Rng;

/// `k` candidate latents and the index of the one that generated `f̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct KzSubset {
    pub latents: Vec<Vec<f64>>,
    pub true_index: usize,
}

impl KzSubset {
    pub fn new(latents: Vec<Vec<f64>>, true_index: usize) -> Result<Self> {
        if latents.is_empty() || true_index >= latents.len() {
            return Err(invalid(format!(
                "kz-subset of size {} cannot have true index {true_index}",
                latents.len()
            )));
        }
        Ok(KzSubset { latents, true_index })
    }

    pub fn k(&self) -> usize {
        self.latents.len()
    }

    pub fn true_latent(&self) -> &[f64] {
        &self.latents[self.true_index]
    }
}

/// `k` i.i.d. prior draws with a uniformly chosen generating index. Among
/// exchangeable draws, picking in proportion to the prior marginal is a
/// uniform pick.
pub fn sample_kz_subset<R: Rng + ?Sized>(prior: &LatentPrior, k: usize, rng: &mut R) -> Result<KzSubset> {
    if k < 1 {
        return Err(invalid("kz-subset size must be >= 1"));
    }
    let latents = (0..k).map(|_| prior.sample(rng)).collect();
    let true_index = rng.random_range(0..k);
    KzSubset::new(latents, true_index)
}

/// `φ_f`: per-pair MLP on `[x; y]`, sum pooling, then a head MLP.
/// `φ_z`: MLP on the latent. Both map into `embed_dim`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingPair {
    pub pair_mlp: Mlp,
    pub pool_head: Mlp,
    pub phi_z: Mlp,
    pub embed_dim: usize,
}

const HIDDEN: usize = 64;

impl EmbeddingPair {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        x_dim: usize,
        y_dim: usize,
        latent_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_hidden(store, x_dim, y_dim, latent_dim, embed_dim, HIDDEN, rng)
    }

    pub fn with_hidden<R: Rng + ?Sized>(
        store: &mut ParamStore,
        x_dim: usize,
        y_dim: usize,
        latent_dim: usize,
        embed_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pair_mlp = Mlp::new(store, "dd.pair", &[x_dim + y_dim, hidden, hidden], Activation::Tanh, rng)?;
        let pool_head = Mlp::new(store, "dd.head", &[hidden, hidden, embed_dim], Activation::Tanh, rng)?;
        let phi_z = Mlp::new(store, "dd.phi_z", &[latent_dim, hidden, embed_dim], Activation::Tanh, rng)?;
        Ok(EmbeddingPair { pair_mlp, pool_head, phi_z, embed_dim })
    }

    /// `φ_f` for every group of a batch, shape `[groups, embed_dim]`.
    pub fn embed_functions(&self, tape: &mut Tape, store: &ParamStore, batch: &FunctionBatch) -> Result<Var> {
        let pairs = tape.concat(&[batch.xs, batch.ys])?;
        let per_pair = self.pair_mlp.forward(tape, store, pairs)?.output;
        let pooled = tape.group_sum(per_pair, batch.k)?;
        Ok(self.pool_head.forward(tape, store, pooled)?.output)
    }

    pub fn embed_latents(&self, tape: &mut Tape, store: &ParamStore, zs: Var) -> Result<Var> {
        Ok(self.phi_z.forward(tape, store, zs)?.output)
    }

    /// Logits `⟨φ_f(f̂_g), φ_z(z_{g,i})⟩`, shape `[groups, subset]`.
    /// `candidates` is `[groups * subset, latent]`, grouped like the batch.
    pub fn scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &FunctionBatch,
        candidates: Var,
        subset: usize,
    ) -> Result<Var> {
        let rows = tape.value(candidates).dims2()?.0;
        if rows != batch.groups * subset {
            return Err(shape_err(
                "dd_scores",
                format!("{rows} candidate latents for {} groups of {subset}", batch.groups),
            ));
        }
        let phi_f = self.embed_functions(tape, store, batch)?;
        let phi_z = self.embed_latents(tape, store, candidates)?;
        let phi_f_rows = tape.repeat_rows(phi_f, subset)?;
        let prod = tape.mul(phi_f_rows, phi_z)?;
        let dots = tape.sum_cols(prod)?;
        tape.reshape(dots, vec![batch.groups, subset])
    }
}

/// Mean over groups of `log k + log softmax(scores)[true]`, as a scalar node.
pub fn subset_bound(tape: &mut Tape, scores: Var, true_indices: &[usize]) -> Result<Var> {
    let (groups, k) = tape.value(scores).dims2()?;
    if true_indices.len() != groups || true_indices.iter().any(|&t| t >= k) {
        return Err(invalid(format!("true indices {true_indices:?} do not fit scores [{groups}, {k}]")));
    }
    let mut mask = vec![0.0; groups * k];
    for (g, &t) in true_indices.iter().enumerate() {
        mask[g * k + t] = 1.0;
    }
    let logp = tape.log_softmax(scores)?;
    let mask = tape.leaf(Tensor::matrix(groups, k, mask)?);
    let picked = tape.mul(logp, mask)?;
    let mean = tape.sum(picked);
    let mean = tape.scale(mean, 1.0 / groups as f64);
    Ok(tape.shift(mean, math::ln(k as f64)))
}

/// Tape nodes of the dynamic-discretization entropy bound
/// `H(f) >= I_dd(f; z) + H(f | z)`.
#[derive(Clone, Copy, Debug)]
pub struct DdBoundVars {
    pub info_bound: Var,
    pub h_f_given_z: Var,
    pub bound: Var,
}

impl VFuncModel {
    /// Softmax logits over `subset` for one partial function.
    pub fn dd_scores(&self, f: &PartialFunction, subset: &KzSubset) -> Result<Vec<f64>> {
        let emb = self.dd.as_ref().ok_or_else(|| invalid("model has no dynamic-discretization embeddings"))?;
        let mut tape = Tape::new();
        let (xd, yd) = (self.net.x_dim, self.net.head.y_dim());
        if f.x_dim() != xd || f.y_dim() != yd {
            return Err(shape_err("dd_scores", format!("pairs are ({}, {}), expected ({xd}, {yd})", f.x_dim(), f.y_dim())));
        }
        let xs = tape.matrix(f.k(), xd, f.xs().concat())?;
        let ys = tape.matrix(f.k(), yd, f.ys().concat())?;
        let ld = self.latent_dim();
        if subset.latents.iter().any(|z| z.len() != ld) {
            return Err(shape_err("dd_scores", format!("subset latents must have dimension {ld}")));
        }
        let zs = tape.matrix(1, ld, vec![0.0; ld])?;
        let batch = FunctionBatch { xs, ys, zs, groups: 1, k: f.k(), mode: FhatMode::ParameterOutputs, head_gaussian: None };
        let cands = tape.matrix(subset.k(), ld, subset.latents.concat())?;
        let s = emb.scores(&mut tape, &self.params, &batch, cands, subset.k())?;
        Ok(tape.data(s).to_vec())
    }

    /// Records the dynamic-discretization bound for one batch: per group, a
    /// fresh kz-subset of size `subset`, and `f̂` over `xs[g]` generated by
    /// the subset's true latent. Also returns the sampled partial functions.
    pub fn dd_bound<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        subset: usize,
        xs: &[Vec<Vec<f64>>],
        mode: FhatMode,
        rng: &mut R,
    ) -> Result<(DdBoundVars, FunctionBatch)> {
        let emb = self.dd.as_ref().ok_or_else(|| invalid("model has no dynamic-discretization embeddings"))?;
        let subsets: Vec<KzSubset> =
            (0..xs.len()).map(|_| sample_kz_subset(&self.prior, subset, rng)).collect::<Result<_>>()?;
        let zs: Vec<Vec<f64>> = subsets.iter().map(|s| s.true_latent().to_vec()).collect();
        let batch = self.sample_function_batch(tape, &zs, xs, mode, rng)?;
        let cand: Vec<f64> = subsets.iter().flat_map(|s| s.latents.concat()).collect();
        let cands = tape.matrix(xs.len() * subset, self.latent_dim(), cand)?;
        let scores = emb.scores(tape, &self.params, &batch, cands, subset)?;
        let truth: Vec<usize> = subsets.iter().map(|s| s.true_index).collect();
        let info_bound = subset_bound(tape, scores, &truth)?;
        let h_f_given_z = match (mode, batch.head_gaussian) {
            (FhatMode::SampledOutputs, Some(g)) => {
                let ent = g.entropy_rows(tape)?;
                let total = tape.sum(ent);
                tape.scale(total, 1.0 / batch.groups as f64)
            }
            _ => tape.scalar(0.0),
        };
        let bound = tape.add(info_bound, h_f_given_z)?;
        Ok((DdBoundVars { info_bound, h_f_given_z, bound }, batch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn singleton_subset_has_index_zero_and_zero_bound() {
        let prior = LatentPrior::new(3).unwrap();
        let mut rng = stream(1, "t");
        let s = sample_kz_subset(&prior, 1, &mut rng).unwrap();
        assert_eq!(s.true_index, 0);
        assert!(sample_kz_subset(&prior, 0, &mut rng).is_err());

        let mut tape = Tape::new();
        let scores = tape.matrix(2, 1, vec![3.0, -7.0]).unwrap();
        let b = subset_bound(&mut tape, scores, &[0, 0]).unwrap();
        assert_eq!(tape.scalar_value(b).unwrap(), 0.0);
    }

    #[test]
    fn true_index_is_uniform() {
        let prior = LatentPrior::new(1).unwrap();
        let mut rng = stream(2, "t");
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_kz_subset(&prior, 4, &mut rng).unwrap().true_index] += 1;
        }
        let se = libm::sqrt(0.25 * 0.75 / n as f64);
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn subset_is_reproducible() {
        let prior = LatentPrior::new(2).unwrap();
        let a = sample_kz_subset(&prior, 5, &mut stream(9, "t")).unwrap();
        let b = sample_kz_subset(&prior, 5, &mut stream(9, "t")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_never_exceeds_log_k() {
        let mut tape = Tape::new();
        let scores = tape.matrix(3, 4, vec![5.0, -1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -3.0, 9.0, 1.0, 1.0]).unwrap();
        let b = subset_bound(&mut tape, scores, &[0, 2, 1]).unwrap();
        assert!(tape.scalar_value(b).unwrap() <= libm::log(4.0));
    }
}
