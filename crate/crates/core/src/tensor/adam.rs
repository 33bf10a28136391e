use super::mlp::ParamStore;
use crate::error::{invalid, Error, Result};
use crate::math;
use alloc::{format, vec, vec::Vec};

/// Adam with bias correction over every tensor of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Result<Self> {
        Self::with_betas(store, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(
        store: &ParamStore,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && epsilon > 0.0) {
            return Err(invalid(format!(
                "adam needs learning_rate > 0 and epsilon > 0 (got {learning_rate}, {epsilon})"
            )));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(invalid(format!("adam betas must lie in [0, 1), got {beta1}, {beta2}")));
        }
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Ok(AdamState {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update using the gradients currently accumulated in
    /// `store`. Tensors without a gradient are treated as having zero
    /// gradient. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first_moment.len() {
            return Err(invalid(format!(
                "adam state tracks {} tensors, store has {}",
                self.first_moment.len(),
                store.len()
            )));
        }
        for id in store.ids() {
            if let Some(g) = store.get(id).grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: format!("gradient of `{}`", store.name(id)) });
                }
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for id in store.ids() {
            let (m, v) = (&mut self.first_moment[id.0], &mut self.second_moment[id.0]);
            let tensor = store.get_mut(id);
            let grad = tensor.grad().map(<[f64]>::to_vec);
            let data = tensor.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}
