//! A one-step bandit where only the `Right` arm pays: the REINFORCE
//! estimator, averaged over both outcomes by brute force, must equal the
//! exact gradient of the expected reward.

use vfunc_core::gridworld::{reinforce_surrogate, reinforce_update, Action, Baseline, Gridworld, Trajectory};
use vfunc_core::model::{ModelConfig, VFuncModel};
use vfunc_core::rng::stream;
use vfunc_core::tensor::{AdamState, ParamStore, Tape};

fn bandit() -> (Gridworld, VFuncModel, Vec<f64>) {
    let world = Gridworld::from_ascii("bandit", "SG").unwrap();
    let cfg = ModelConfig { hidden: vec![8], rec_hidden: vec![8], ..ModelConfig::policy(world.num_states(), 4, 2) };
    let model = VFuncModel::new(cfg, &mut stream(4, "bandit.init")).unwrap();
    (world, model, vec![0.3, -0.7])
}

fn pull(world: &Gridworld, arm: Action) -> Trajectory {
    let t = world.step(world.start, arm, 0).unwrap();
    Trajectory { states: vec![world.start, t.next], actions: vec![arm], rewards: vec![t.reward], done: true }
}

fn flat_grads(store: &ParamStore) -> Vec<f64> {
    store
        .ids()
        .flat_map(|id| {
            let t = store.get(id);
            t.grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect()
}

/// `π(a | start, z)` for every arm, and the gradient of `π(Right)`.
fn arm_probs(world: &Gridworld, model: &mut VFuncModel, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new();
    let x = tape.matrix(1, world.num_states(), world.one_hot(world.start).unwrap()).unwrap();
    let zv = tape.matrix(1, z.len(), z.to_vec()).unwrap();
    let logits = model.net.forward_rows(&mut tape, &model.params, x, zv, false).unwrap().output;
    let p = tape.softmax(logits).unwrap();
    let right = tape.slice(p, Action::Right.index(), Action::Right.index() + 1).unwrap();
    let root = tape.sum(right);
    model.params.zero_grad();
    tape.backward_into(root, &mut model.params).unwrap();
    (tape.data(p).to_vec(), flat_grads(&model.params))
}

#[test]
fn expected_reinforce_gradient_equals_reward_gradient() {
    let (world, mut model, z) = bandit();
    let (probs, grad_p_right) = arm_probs(&world, &mut model, &z);
    let mut expected = vec![0.0; grad_p_right.len()];
    for arm in Action::ALL {
        let traj = pull(&world, arm);
        assert_eq!(traj.rewards[0], if arm == Action::Right { 1.0 } else { 0.0 });
        let mut tape = Tape::new();
        let loss = reinforce_surrogate(&mut tape, &world, &model, &[(z.clone(), traj)], 0.0, 0.99).unwrap();
        model.params.zero_grad();
        tape.backward_into(loss, &mut model.params).unwrap();
        for (e, g) in expected.iter_mut().zip(flat_grads(&model.params)) {
            *e += probs[arm.index()] * g;
        }
    }
    // The surrogate is a loss, so its expected gradient is −∇E[R] = −∇π(Right).
    let norm = grad_p_right.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm > 1e-6);
    for (e, g) in expected.iter().zip(&grad_p_right) {
        assert!((e + g).abs() < 1e-10 * norm.max(1.0), "{e} vs {}", -g);
    }
    let descent: f64 = expected.iter().zip(&grad_p_right).map(|(e, g)| -e * g).sum();
    assert!(descent > 0.0, "descent direction must raise π(Right)");
}

#[test]
fn rewarded_pull_raises_its_probability() {
    let (world, mut model, z) = bandit();
    let before = arm_probs(&world, &mut model, &z).0[Action::Right.index()];
    let mut adam = AdamState::new(&model.params, 1e-2).unwrap();
    let mut baseline = Baseline::new(0.99);
    reinforce_update(&world, &mut model, &mut adam, &[(z.clone(), pull(&world, Action::Right))], &mut baseline, 0.99)
        .unwrap();
    let after = arm_probs(&world, &mut model, &z).0[Action::Right.index()];
    assert!(after > before, "{before} -> {after}");
    assert!((baseline.value - 0.01).abs() < 1e-15);

    // With the baseline above zero, an unrewarded pull has negative advantage.
    let left = arm_probs(&world, &mut model, &z).0[Action::Left.index()];
    reinforce_update(&world, &mut model, &mut adam, &[(z.clone(), pull(&world, Action::Left))], &mut baseline, 0.99)
        .unwrap();
    assert!(arm_probs(&world, &mut model, &z).0[Action::Left.index()] < left);
}
