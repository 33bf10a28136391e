//! Diagonal Gaussians and categoricals, as plain values and as tape ops.

use crate::error::{invalid, shape_err, Result};
use crate::math::{self, LN_2PI, UNIT_GAUSSIAN_ENTROPY};
use crate::tensor::{Tape, Var};
use alloc::{format, vec::Vec};
use rand::Rng;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Independent Gaussians per coordinate. `log_variance` is clamped to
/// `[LOG_VAR_MIN, LOG_VAR_MAX]` on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_variance: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(shape_err(
                "diag_gaussian",
                format!("mean has {} entries, log_variance {}", mean.len(), log_variance.len()),
            ));
        }
        let log_variance = log_variance.into_iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        Ok(DiagGaussian { mean, log_variance })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian { mean: alloc::vec![0.0; dim], log_variance: alloc::vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_variance(&self) -> &[f64] {
        &self.log_variance
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|&v| math::exp(v)).collect()
    }

    fn check_len(&self, op: &'static str, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(shape_err(op, format!("expected {} entries, got {n}", self.dim())));
        }
        Ok(())
    }

    /// `mean + exp(log_variance / 2) * noise`.
    pub fn sample_reparam(&self, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_len("gaussian_sample_reparam", noise.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(noise)
            .map(|((m, lv), e)| m + math::exp(0.5 * lv) * e)
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise = crate::rng::normal_vec(rng, self.dim());
        self.sample_reparam(&noise).expect("noise has matching length")
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        self.check_len("gaussian_log_prob", x.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(x)
            .map(|((m, lv), x)| -0.5 * LN_2PI - 0.5 * lv - (x - m) * (x - m) / (2.0 * math::exp(*lv)))
            .sum())
    }

    pub fn entropy(&self) -> f64 {
        self.log_variance.iter().map(|lv| UNIT_GAUSSIAN_ENTROPY + 0.5 * lv).sum()
    }
}

/// Distribution over `logits.len()` outcomes, `p = softmax(logits)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|l| l.is_nan()) {
            return Err(invalid("categorical needs at least one non-NaN logit"));
        }
        let probs = math::softmax(&logits);
        Ok(Categorical { logits, probs })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF draw using a single uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left `acc` slightly below 1; fall back to the last outcome with mass.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(self.probs.len() - 1)
    }

    pub fn log_prob(&self, a: usize) -> Result<f64> {
        if a >= self.len() {
            return Err(invalid(format!("outcome {a} out of range for {} classes", self.len())));
        }
        Ok(self.logits[a] - math::log_sum_exp(&self.logits))
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| math::xlogx(p)).sum::<f64>()
    }

    /// `-Σ target · log p`.
    pub fn cross_entropy(&self, target: &[f64]) -> Result<f64> {
        if target.len() != self.len() {
            return Err(shape_err(
                "cross_entropy",
                format!("{} target probs for {} classes", target.len(), self.len()),
            ));
        }
        let total: f64 = target.iter().sum();
        if (total - 1.0).abs() > 1e-6 || target.iter().any(|&t| t < 0.0) {
            return Err(invalid(format!("target probabilities sum to {total}, expected 1")));
        }
        let lse = math::log_sum_exp(&self.logits);
        Ok(-target
            .iter()
            .zip(&self.logits)
            .map(|(&t, &l)| if t == 0.0 { 0.0 } else { t * (l - lse) })
            .sum::<f64>())
    }
}

/// Diagonal Gaussian whose parameters are tape nodes of equal shape `[m, d]`
/// (one distribution per row).
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussianVars {
    /// Clamps `log_var` into the valid range.
    pub fn new(tape: &mut Tape, mean: Var, log_var: Var) -> Result<Self> {
        if tape.shape(mean) != tape.shape(log_var) {
            return Err(shape_err(
                "gaussian",
                format!("mean {:?} vs log_var {:?}", tape.shape(mean), tape.shape(log_var)),
            ));
        }
        let log_var = tape.clamp(log_var, LOG_VAR_MIN, LOG_VAR_MAX);
        Ok(GaussianVars { mean, log_var })
    }

    /// Splits `[m, 2d]` head output into mean (first `d` columns) and log-variance.
    pub fn from_head(tape: &mut Tape, head: Var) -> Result<Self> {
        let cols = tape.value(head).dims2()?.1;
        if cols % 2 != 0 {
            return Err(shape_err("gaussian_head", format!("odd head width {cols}")));
        }
        let mean = tape.slice(head, 0, cols / 2)?;
        let log_var = tape.slice(head, cols / 2, cols)?;
        Self::new(tape, mean, log_var)
    }

    pub fn sample_reparam(&self, tape: &mut Tape, noise: Var) -> Result<Var> {
        let half = tape.scale(self.log_var, 0.5);
        let std = tape.exp(half);
        let scaled = tape.mul(std, noise)?;
        tape.add(self.mean, scaled)
    }

    /// Per-row log-density, shape `[m, 1]`.
    pub fn log_prob_rows(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let diff = tape.sub(x, self.mean)?;
        let sq = tape.square(diff);
        let neg_lv = tape.neg(self.log_var);
        let inv_var = tape.exp(neg_lv);
        let quad = tape.mul(sq, inv_var)?;
        let inner = tape.add(quad, self.log_var)?;
        let inner = tape.shift(inner, LN_2PI);
        let per = tape.scale(inner, -0.5);
        tape.sum_cols(per)
    }

    /// Per-row entropy, shape `[m, 1]`.
    pub fn entropy_rows(&self, tape: &mut Tape) -> Result<Var> {
        let half = tape.scale(self.log_var, 0.5);
        let per = tape.shift(half, UNIT_GAUSSIAN_ENTROPY);
        tape.sum_cols(per)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::Tensor;
    use alloc::vec;

    const EPS: f64 = 1e-6;

    #[test]
    fn reparam_examples() {
        let g = DiagGaussian::new(vec![0.0], vec![0.0]).unwrap();
        assert_eq!(g.sample_reparam(&[1.5]).unwrap(), vec![1.5]);
        let g = DiagGaussian::new(vec![2.0], vec![math::ln(4.0)]).unwrap();
        assert!((g.sample_reparam(&[1.0]).unwrap()[0] - 4.0).abs() < 1e-12);
        assert!(g.sample_reparam(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn reparam_gradient_wrt_mean_is_one() {
        let mut tape = Tape::new();
        let mean = tape.leaf(Tensor::row(vec![0.3]));
        let lv = tape.leaf(Tensor::row(vec![0.7]));
        let noise = tape.leaf(Tensor::row(vec![-1.2]));
        let g = GaussianVars::new(&mut tape, mean, lv).unwrap();
        let s = g.sample_reparam(&mut tape, noise).unwrap();
        let root = tape.sum(s);
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.wrt(mean), vec![1.0]);
    }

    #[test]
    fn log_prob_examples() {
        let g = DiagGaussian::standard(1);
        assert!((g.log_prob(&[0.0]).unwrap() + 0.918_938_533).abs() < EPS);
        assert!((g.log_prob(&[1.0]).unwrap() + 1.418_938_533).abs() < EPS);
        assert!(g.log_prob(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn log_prob_matches_independent_formula() {
        // Product of univariate densities, written without the log-space shortcut.
        let mean = vec![0.4, -1.3, 2.0];
        let lv = vec![-0.5, 0.8, 1.7];
        let x = vec![1.1, -0.2, 0.5];
        let g = DiagGaussian::new(mean.clone(), lv.clone()).unwrap();
        let mut density = 1.0;
        for i in 0..3 {
            let var = libm::exp(lv[i]);
            let z = (x[i] - mean[i]) * (x[i] - mean[i]) / var;
            density *= libm::exp(-0.5 * z) / libm::sqrt(2.0 * core::f64::consts::PI * var);
        }
        assert!((g.log_prob(&x).unwrap() - libm::log(density)).abs() < 1e-12);

        // Tape version agrees row by row.
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::row(mean));
        let l = tape.leaf(Tensor::row(lv));
        let xv = tape.leaf(Tensor::row(x.clone()));
        let gv = GaussianVars::new(&mut tape, m, l).unwrap();
        let lp = gv.log_prob_rows(&mut tape, xv).unwrap();
        assert!((tape.data(lp)[0] - g.log_prob(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((DiagGaussian::standard(1).entropy() - 1.418_938_533).abs() < EPS);
        assert!((DiagGaussian::standard(5).entropy() - 5.0 * 1.418_938_533).abs() < 1e-5);
        let g = DiagGaussian::new(vec![0.0], vec![math::ln(4.0)]).unwrap();
        assert!((g.entropy() - 2.112_085_713).abs() < EPS);
    }

    #[test]
    fn log_variance_is_clamped() {
        let g = DiagGaussian::new(vec![0.0, 0.0], vec![-50.0, 50.0]).unwrap();
        assert_eq!(g.log_variance(), &[LOG_VAR_MIN, LOG_VAR_MAX]);
    }

    #[test]
    fn density_integrates_to_one() {
        let g = DiagGaussian::new(vec![0.7], vec![math::ln(0.25)]).unwrap();
        let sigma = 0.5;
        let (lo, hi, n) = (0.7 - 8.0 * sigma, 0.7 + 8.0 * sigma, 20_000);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| math::exp(g.log_prob(&[x]).unwrap());
        let mut total = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            total += f(lo + i as f64 * h);
        }
        assert!((total * h - 1.0).abs() < 1e-4);
    }

    #[test]
    fn entropy_matches_monte_carlo() {
        let g = DiagGaussian::new(vec![0.3, -1.0], vec![0.5, -1.2]).unwrap();
        let mut rng = stream(11, "test.entropy");
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| -g.log_prob(&g.sample(&mut rng)).unwrap()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
        let se = libm::sqrt(var / n as f64);
        assert!((mean - g.entropy()).abs() < 3.0 * se, "{mean} vs {}", g.entropy());
    }

    #[test]
    fn categorical_examples() {
        let c = Categorical::new(vec![0.0; 4]).unwrap();
        assert!((c.entropy() - 1.386_294_361).abs() < EPS);
        let c = Categorical::new(vec![100.0, 0.0, 0.0, 0.0]).unwrap();
        let mut rng = stream(3, "test.cat");
        assert!((0..1000).all(|_| c.sample(&mut rng) == 0));
        let c = Categorical::new(vec![0.2, -1.0, 0.7]).unwrap();
        let p = c.probs().to_vec();
        assert!((c.cross_entropy(&p).unwrap() - c.entropy()).abs() < 1e-12);
        assert!(c.cross_entropy(&[0.5, 0.4, 0.0]).is_err());
        assert!(c.log_prob(3).is_err());
    }

    #[test]
    fn categorical_frequencies_match_probs() {
        let c = Categorical::new(vec![0.5, -0.3, 1.2, 0.0]).unwrap();
        let mut rng = stream(5, "test.freq");
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[c.sample(&mut rng)] += 1;
        }
        for (k, &p) in c.probs().iter().enumerate() {
            let freq = counts[k] as f64 / n as f64;
            let se = libm::sqrt(p * (1.0 - p) / n as f64);
            assert!((freq - p).abs() < 3.0 * se, "class {k}: {freq} vs {p}");
        }
    }
}
