//! Scalar math that works without `std`.

pub use libm::{exp, log as ln, sin, sqrt, tanh};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Entropy of a unit-variance univariate Gaussian, `½ ln(2πe)`.
pub const UNIT_GAUSSIAN_ENTROPY: f64 = 0.5 * (LN_2PI + 1.0);

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + ln(xs.iter().map(|&x| exp(x - max)).sum::<f64>())
}

pub fn softmax(logits: &[f64]) -> alloc::vec::Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&l| exp(l - lse)).collect()
}

/// `x ln x` with the `0 ln 0 = 0` convention.
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * ln(x)
    }
}
