//! Reverse-mode gradients checked against central finite differences.

use rand::Rng;
use vfunc_core::model::{
    training_objective, BoundKind, EntropyTermConfig, FhatMode, ModelConfig, VFuncModel,
};
use vfunc_core::rng::stream;
use vfunc_core::tensor::{Activation, Mlp, ParamStore, Tape, Tensor, Var};

const H: f64 = 1e-5;

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff < 1e-6 || diff / analytic.abs().max(numeric.abs()) < 1e-4
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = stream(seed, "fd.input");
    let data = (0..rows * cols).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Checks every input entry of `f`, whose output is contracted with fixed
/// random weights so each output element matters.
fn check_op(name: &str, inputs: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let eval = |inputs: &[Tensor]| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let n = tape.value(out).len();
        let shape = tape.shape(out).to_vec();
        let mut rng = stream(99, "fd.weights");
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.3).collect();
        let w = tape.leaf(Tensor::new(shape, w).unwrap());
        let prod = tape.mul(out, w).unwrap();
        let root = tape.sum(prod);
        let grads = tape.backward(root).unwrap();
        (tape.scalar_value(root).unwrap(), vars.iter().map(|&v| grads.wrt(v)).collect())
    };
    let (_, analytic) = eval(&inputs);
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * H);
            assert!(
                close(analytic[i][j], numeric),
                "{name}: input {i} entry {j}: analytic {} vs numeric {numeric}",
                analytic[i][j]
            );
        }
    }
}

#[test]
fn every_op_matches_finite_differences() {
    let a = || random_tensor(3, 4, -2.0, 2.0, 1);
    let b = || random_tensor(3, 4, -2.0, 2.0, 2);
    check_op("matmul", vec![random_tensor(3, 3, -2.0, 2.0, 3), random_tensor(3, 3, -2.0, 2.0, 4)], |t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
    check_op("matmul chain", vec![random_tensor(3, 3, -2.0, 2.0, 5), random_tensor(3, 3, -2.0, 2.0, 6), random_tensor(3, 3, -2.0, 2.0, 7)], |t, v| {
        let ab = t.matmul(v[0], v[1]).unwrap();
        t.matmul(ab, v[2]).unwrap()
    });
    check_op("add", vec![a(), b()], |t, v| t.add(v[0], v[1]).unwrap());
    check_op("add row broadcast", vec![a(), random_tensor(1, 4, -2.0, 2.0, 8)], |t, v| t.add(v[0], v[1]).unwrap());
    check_op("add col broadcast", vec![a(), random_tensor(3, 1, -2.0, 2.0, 9)], |t, v| t.add(v[0], v[1]).unwrap());
    check_op("sub scalar broadcast", vec![a(), Tensor::scalar(0.7)], |t, v| t.sub(v[0], v[1]).unwrap());
    check_op("mul", vec![a(), b()], |t, v| t.mul(v[0], v[1]).unwrap());
    check_op("mul row broadcast", vec![a(), random_tensor(1, 4, -2.0, 2.0, 10)], |t, v| t.mul(v[0], v[1]).unwrap());
    check_op("scale", vec![a()], |t, v| t.scale(v[0], -1.7));
    check_op("shift", vec![a()], |t, v| t.shift(v[0], 0.4));
    check_op("tanh", vec![a()], |t, v| t.tanh(v[0]));
    check_op("relu", vec![random_tensor(3, 4, 0.1, 2.0, 11)], |t, v| t.relu(v[0]));
    check_op("relu negative side", vec![random_tensor(3, 4, -2.0, -0.1, 12)], |t, v| t.relu(v[0]));
    check_op("exp", vec![a()], |t, v| t.exp(v[0]));
    check_op("log", vec![random_tensor(3, 4, 0.2, 2.0, 13)], |t, v| t.log(v[0]));
    check_op("square", vec![a()], |t, v| t.square(v[0]));
    check_op("clamp interior", vec![a()], |t, v| t.clamp(v[0], -5.0, 5.0));
    check_op("softmax", vec![a()], |t, v| t.softmax(v[0]).unwrap());
    check_op("log_softmax", vec![a()], |t, v| t.log_softmax(v[0]).unwrap());
    check_op("sum", vec![a()], |t, v| t.sum(v[0]));
    check_op("mean", vec![a()], |t, v| t.mean(v[0]));
    check_op("sum_rows", vec![a()], |t, v| t.sum_rows(v[0]).unwrap());
    check_op("sum_cols", vec![a()], |t, v| t.sum_cols(v[0]).unwrap());
    check_op("concat", vec![a(), random_tensor(3, 2, -2.0, 2.0, 14)], |t, v| t.concat(&[v[0], v[1]]).unwrap());
    check_op("slice", vec![a()], |t, v| t.slice(v[0], 1, 3).unwrap());
    check_op("transpose", vec![a()], |t, v| t.transpose(v[0]).unwrap());
    check_op("reshape", vec![a()], |t, v| t.reshape(v[0], vec![2, 6]).unwrap());
    check_op("group_sum", vec![random_tensor(6, 2, -2.0, 2.0, 15)], |t, v| t.group_sum(v[0], 3).unwrap());
    check_op("repeat_rows", vec![random_tensor(2, 3, -2.0, 2.0, 16)], |t, v| t.repeat_rows(v[0], 3).unwrap());
}

#[test]
fn gradient_of_x_squared() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![3.0]));
    let sq = tape.mul(x, x).unwrap();
    let root = tape.sum(sq);
    assert_eq!(tape.backward(root).unwrap().wrt(x), vec![6.0]);
}

#[test]
fn unreachable_leaf_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
    let y = tape.leaf(Tensor::row(vec![5.0, 6.0]));
    let root = tape.sum(x);
    let g = tape.backward(root).unwrap();
    assert_eq!(g.wrt(y), vec![0.0, 0.0]);
    assert!(g.get(y).is_none());
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn shape_errors_name_the_op() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(Tensor::zeros(vec![2, 3]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    let c = tape.leaf(Tensor::zeros(vec![3, 2]));
    assert!(tape.add(a, c).unwrap_err().to_string().contains("add"));
}

#[test]
fn forward_values() {
    let mut tape = Tape::new();
    let a = tape.matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let id = tape.matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let p = tape.matmul(a, id).unwrap();
    assert_eq!(tape.data(p), &[1.0, 2.0, 3.0, 4.0]);
    let z = tape.matrix(1, 2, vec![0.0, 0.0]).unwrap();
    let s = tape.softmax(z).unwrap();
    assert_eq!(tape.data(s), &[0.5, 0.5]);
    let zero = tape.matrix(1, 1, vec![0.0]).unwrap();
    let th = tape.tanh(zero);
    assert_eq!(tape.data(th), &[0.0]);
}

/// `d⟨u, mlp(x)⟩/dx` by the generic reverse sweep.
fn generic_input_grad(mlp: &Mlp, store: &ParamStore, x: &Tensor, u: &Tensor) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let uv = tape.leaf(u.clone());
    let out = mlp.forward(&mut tape, store, xv).unwrap().output;
    let prod = tape.mul(out, uv).unwrap();
    let root = tape.sum(prod);
    tape.backward(root).unwrap().wrt(xv)
}

#[test]
fn explicit_backward_matches_generic_backward() {
    for (layers, act) in [(vec![4, 3], Activation::Tanh), (vec![4, 6, 3], Activation::Tanh), (vec![4, 6, 5, 3], Activation::Tanh), (vec![4, 6, 5, 3], Activation::Relu)] {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &layers, act, &mut stream(1, "mlp")).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            let n = store.get(id).len();
            let mut rng = stream(id.0 as u64, "bias");
            store.get_mut(id).data_mut().iter_mut().take(n).for_each(|v| *v += 0.3 * (rng.random::<f64>() - 0.5));
        }
        let x = random_tensor(5, 4, -2.0, 2.0, 20);
        let u = random_tensor(5, 3, -1.0, 1.0, 21);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let uv = tape.leaf(u.clone());
        let trace = mlp.forward(&mut tape, &store, xv).unwrap();
        let g = mlp.explicit_backward(&mut tape, &trace, uv).unwrap();
        let generic = generic_input_grad(&mlp, &store, &x, &u);
        for (a, b) in tape.data(g).iter().zip(&generic) {
            assert!((a - b).abs() < 1e-10, "{layers:?}: {a} vs {b}");
        }
    }
}

#[test]
fn explicit_backward_of_linear_layer_is_adjoint() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "lin", &[2, 3], Activation::Tanh, &mut stream(2, "lin")).unwrap();
    let w = store.get(mlp.layer_params()[0].0).data().to_vec();
    let mut tape = Tape::new();
    let x = tape.matrix(1, 2, vec![0.5, -1.0]).unwrap();
    let u = tape.matrix(1, 3, vec![1.0, 2.0, -1.0]).unwrap();
    let trace = mlp.forward(&mut tape, &store, x).unwrap();
    let g = mlp.explicit_backward(&mut tape, &trace, u).unwrap();
    // W is [2, 3]; the input gradient is W u.
    let expected: Vec<f64> = (0..2).map(|i| (0..3).map(|j| w[i * 3 + j] * [1.0, 2.0, -1.0][j]).sum()).collect();
    for (a, b) in tape.data(g).iter().zip(&expected) {
        assert!((a - b).abs() < 1e-14);
    }
    let zero = tape.matrix(1, 3, vec![0.0; 3]).unwrap();
    let gz = mlp.explicit_backward(&mut tape, &trace, zero).unwrap();
    assert!(tape.data(gz).iter().all(|&v| v == 0.0));
    let bad = tape.matrix(1, 2, vec![0.0; 2]).unwrap();
    assert!(mlp.explicit_backward(&mut tape, &trace, bad).is_err());
}

#[test]
fn explicit_backward_is_differentiable_in_weights() {
    // Second-order path: FD on a weight of ⟨c, d⟨u, mlp(x)⟩/dx⟩.
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], Activation::Tanh, &mut stream(3, "m")).unwrap();
    let x = random_tensor(4, 3, -1.5, 1.5, 30);
    let u = random_tensor(4, 2, -1.0, 1.0, 31);
    let c = random_tensor(4, 3, -1.0, 1.0, 32);
    let eval = |store: &mut ParamStore, accumulate: bool| -> f64 {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let uv = tape.leaf(u.clone());
        let cv = tape.leaf(c.clone());
        let trace = mlp.forward(&mut tape, store, xv).unwrap();
        let g = mlp.explicit_backward(&mut tape, &trace, uv).unwrap();
        let prod = tape.mul(g, cv).unwrap();
        let root = tape.sum(prod);
        if accumulate {
            tape.backward_into(root, store).unwrap();
        }
        tape.scalar_value(root).unwrap()
    };
    eval(&mut store, true);
    for id in store.ids().collect::<Vec<_>>() {
        let analytic = store.get(id).grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.get(id).len()]);
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + H;
            let up = eval(&mut store, false);
            store.get_mut(id).data_mut()[j] = orig - H;
            let down = eval(&mut store, false);
            store.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * H);
            assert!(close(analytic[j], numeric), "{} [{j}]: {} vs {numeric}", store.name(id), analytic[j]);
        }
    }
}

/// Full objective `−(R + λ·bound)` on a tiny model; every parameter's
/// gradient is checked against finite differences.
fn check_objective(config: ModelConfig, entropy: EntropyTermConfig, data_rows: usize, only: Option<&str>) {
    let mut model = VFuncModel::new(config, &mut stream(4, "tiny")).unwrap();
    let x_dim = model.net.x_dim;
    let y_dim = model.net.head.y_dim();
    let data_x = random_tensor(data_rows, x_dim, -1.0, 1.0, 40);
    let data_y = random_tensor(data_rows, y_dim, -1.0, 1.0, 41);
    let eval = |model: &mut VFuncModel, accumulate: bool| -> f64 {
        let mut rng = stream(5, "objective");
        let mut tape = Tape::new();
        let xs: Vec<Vec<Vec<f64>>> = (0..entropy.z_batch)
            .map(|_| (0..entropy.k).map(|_| (0..x_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect())
            .collect();
        let term = model.entropy_bound(&mut tape, &entropy, &xs, &mut rng).unwrap();
        let z = model.sample_latent(&mut rng);
        let xv = tape.leaf(data_x.clone());
        let yv = tape.leaf(data_y.clone());
        let zv = tape.matrix(1, z.len(), z).unwrap();
        let zr = tape.repeat_rows(zv, data_rows).unwrap();
        let head = model.net.forward_rows(&mut tape, &model.params, xv, zr, false).unwrap().output;
        let data_term = match model.net.head {
            vfunc_core::model::Head::Gaussian { .. } => {
                let g = vfunc_core::dist::GaussianVars::from_head(&mut tape, head).unwrap();
                let lp = g.log_prob_rows(&mut tape, yv).unwrap();
                tape.mean(lp)
            }
            vfunc_core::model::Head::Categorical { .. } => {
                let lp = tape.log_softmax(head).unwrap();
                let p = tape.softmax(yv).unwrap();
                let prod = tape.mul(lp, p).unwrap();
                tape.mean(prod)
            }
        };
        let prior = tape.scalar(0.0);
        let loss = training_objective(&mut tape, data_term, prior, term.bound, 1.0).unwrap();
        if accumulate {
            model.params.zero_grad();
            tape.backward_into(loss, &mut model.params).unwrap();
        }
        tape.scalar_value(loss).unwrap()
    };
    eval(&mut model, true);
    let mut checked = 0;
    let mut expected = 0;
    for id in model.params.ids().collect::<Vec<_>>() {
        if only.is_some_and(|prefix| !model.params.name(id).starts_with(prefix)) {
            continue;
        }
        expected += model.params.get(id).len();
        let analytic = model.params.get(id).grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; model.params.get(id).len()]);
        for j in 0..model.params.get(id).len() {
            let orig = model.params.get(id).data()[j];
            model.params.get_mut(id).data_mut()[j] = orig + H;
            let up = eval(&mut model, false);
            model.params.get_mut(id).data_mut()[j] = orig - H;
            let down = eval(&mut model, false);
            model.params.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * H);
            assert!(close(analytic[j], numeric), "{} [{j}]: analytic {} vs numeric {numeric}", model.params.name(id), analytic[j]);
            checked += 1;
        }
    }
    assert_eq!(checked, expected);
    assert!(checked > 0);
}

fn tiny(head_y: Option<usize>, classes: Option<usize>, embed_dim: usize) -> ModelConfig {
    let head = match (head_y, classes) {
        (Some(y_dim), _) => vfunc_core::model::Head::Gaussian { y_dim },
        (_, Some(classes)) => vfunc_core::model::Head::Categorical { classes },
        _ => unreachable!(),
    };
    ModelConfig { x_dim: if classes.is_some() { 3 } else { 1 }, latent_dim: 2, head, hidden: vec![8], rec_hidden: vec![8], embed_dim }
}

fn entropy_cfg(bound: BoundKind, mode: FhatMode, detach: bool) -> EntropyTermConfig {
    EntropyTermConfig { bound, k: 3, z_batch: 2, subset_size: 3, mode, detach_encoder_path: detach }
}

#[test]
fn objective_gradient_gaussian_sampled_outputs() {
    check_objective(tiny(Some(1), None, 0), entropy_cfg(BoundKind::Variational, FhatMode::SampledOutputs, false), 4, None);
}

#[test]
fn objective_gradient_gaussian_parameter_outputs() {
    check_objective(tiny(Some(1), None, 0), entropy_cfg(BoundKind::Variational, FhatMode::ParameterOutputs, false), 4, None);
}

#[test]
fn objective_gradient_policy_head() {
    check_objective(tiny(None, Some(4), 0), entropy_cfg(BoundKind::Variational, FhatMode::ParameterOutputs, false), 4, None);
}

#[test]
fn objective_gradient_detached_encoder() {
    // Detaching hides the encoder path from the prediction network, so only
    // the recognition parameters carry the exact gradient.
    check_objective(tiny(Some(1), None, 0), entropy_cfg(BoundKind::Variational, FhatMode::SampledOutputs, true), 4, Some("rec."));
}

#[test]
fn objective_gradient_dynamic_discretization() {
    check_objective(tiny(Some(1), None, 6), entropy_cfg(BoundKind::DynamicDiscretization, FhatMode::SampledOutputs, false), 4, None);
}
