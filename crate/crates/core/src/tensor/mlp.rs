use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{invalid, shape_err, Result};
use crate::math;
use alloc::{format, string::String, vec, vec::Vec};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamId(pub usize);

/// Named trainable tensors. Gradients accumulate in each tensor's grad slot
/// across backward calls until [`ParamStore::zero_grad`].
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Tanh,
    Relu,
}

/// Fully connected network, row-vector convention: `h = act(x W + b)`.
/// The last layer is linear.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    dims: Vec<usize>,
    activation: Activation,
}

/// Nodes recorded by [`Mlp::forward`], needed by [`Mlp::explicit_backward`].
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub output: Var,
    /// Post-activation outputs of the hidden layers.
    pub hidden: Vec<Var>,
    pub weights: Vec<Var>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`. Weights are drawn from `N(0, 1/fan_in)`,
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid(format!("mlp `{prefix}` needs >= 2 positive dims, got {dims:?}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = 1.0 / math::sqrt(fan_in as f64);
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let w = store.add(format!("{prefix}.{l}.w"), Tensor::matrix(fan_in, fan_out, w)?);
            let b = store.add(format!("{prefix}.{l}.b"), Tensor::zeros(vec![1, fan_out]));
            layers.push((w, b));
        }
        Ok(Mlp { layers, dims: dims.to_vec(), activation })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_params(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    fn activate(&self, tape: &mut Tape, v: Var) -> Var {
        match self.activation {
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
        }
    }

    fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        detach_weights: bool,
    ) -> Result<MlpTrace> {
        let cols = tape.value(x).dims2()?.1;
        if cols != self.input_dim() {
            return Err(shape_err(
                "mlp",
                format!("input has {cols} columns, network expects {}", self.input_dim()),
            ));
        }
        let mut h = x;
        let mut hidden = Vec::new();
        let mut weights = Vec::new();
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = if detach_weights {
                (tape.param_detached(store, w), tape.param_detached(store, b))
            } else {
                (tape.param(store, w), tape.param(store, b))
            };
            weights.push(wv);
            let pre = tape.matmul(h, wv)?;
            let pre = tape.add(pre, bv)?;
            if l + 1 < self.layers.len() {
                h = self.activate(tape, pre);
                hidden.push(h);
            } else {
                h = pre;
            }
        }
        Ok(MlpTrace { output: h, hidden, weights })
    }

    /// Records the forward pass of a `[batch, in]` input.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<MlpTrace> {
        self.run(tape, store, x, false)
    }

    /// Forward pass with the weights entered as constants.
    pub fn forward_detached(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
    ) -> Result<MlpTrace> {
        self.run(tape, store, x, true)
    }

    /// Gradient of `⟨upstream, mlp(x)⟩` with respect to `x`, built from
    /// ordinary recorded ops (transposed-weight matmuls and activation
    /// derivatives). The result is itself differentiable with respect to the
    /// weights, the input and `upstream`.
    pub fn explicit_backward(&self, tape: &mut Tape, trace: &MlpTrace, upstream: Var) -> Result<Var> {
        if tape.shape(upstream) != tape.shape(trace.output) {
            return Err(shape_err(
                "explicit_mlp_backward",
                format!(
                    "upstream {:?} does not match output {:?}",
                    tape.shape(upstream),
                    tape.shape(trace.output)
                ),
            ));
        }
        let mut delta = upstream;
        for l in (0..self.layers.len()).rev() {
            let wt = tape.transpose(trace.weights[l])?;
            let g = tape.matmul(delta, wt)?;
            if l == 0 {
                return Ok(g);
            }
            let h = trace.hidden[l - 1];
            let deriv = match self.activation {
                Activation::Tanh => {
                    let sq = tape.square(h);
                    let neg = tape.neg(sq);
                    tape.shift(neg, 1.0)
                }
                Activation::Relu => {
                    let mask = tape.data(h).iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                    let shape = tape.shape(h).to_vec();
                    tape.leaf(Tensor::new(shape, mask)?)
                }
            };
            delta = tape.mul(g, deriv)?;
        }
        unreachable!("mlp has at least one layer")
    }

    /// Tape-free forward pass over a `[rows, in]` row-major buffer.
    pub fn forward_plain(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let in_dim = self.input_dim();
        if x.is_empty() || !x.len().is_multiple_of(in_dim) {
            return Err(shape_err(
                "mlp",
                format!("{} inputs do not form rows of {in_dim}", x.len()),
            ));
        }
        let rows = x.len() / in_dim;
        let mut h = x.to_vec();
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let (k, n) = (self.dims[l], self.dims[l + 1]);
            let (wd, bd) = (store.get(w).data(), store.get(b).data());
            let mut out = Vec::with_capacity(rows * n);
            for r in 0..rows {
                out.extend_from_slice(bd);
                let row = &mut out[r * n..(r + 1) * n];
                for p in 0..k {
                    let hv = h[r * k + p];
                    if hv == 0.0 {
                        continue;
                    }
                    for (o, wv) in row.iter_mut().zip(&wd[p * n..(p + 1) * n]) {
                        *o += hv * wv;
                    }
                }
            }
            if l + 1 < self.layers.len() {
                for v in &mut out {
                    *v = match self.activation {
                        Activation::Tanh => math::tanh(*v),
                        Activation::Relu => v.max(0.0),
                    };
                }
            }
            h = out;
        }
        Ok(h)
    }
}
