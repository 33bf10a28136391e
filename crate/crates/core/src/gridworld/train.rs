use super::buffer::ReplayBuffer;
use super::world::{Action, Cell, Gridworld};
use crate::dist::Categorical;
use crate::error::{invalid, Error, Result};
use crate::model::{BoundKind, EntropyTermConfig, FhatMode, VFuncModel};
use crate::rng;
use crate::tensor::{AdamState, Tape, Var};
use alloc::{format, string::String, vec, vec::Vec};
use rand::Rng;

/// One episode: `states` has one more entry than `actions` and `rewards`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Cell>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn reached(&self, cell: Cell) -> bool {
        self.states.contains(&cell)
    }
}

/// `π(· | s, z)` for every free cell, indexed like [`Gridworld::cells`].
pub fn policy_table(world: &Gridworld, model: &VFuncModel, z: &[f64]) -> Result<Vec<Categorical>> {
    let xs: Vec<Vec<f64>> = world.cells().iter().map(|&c| world.one_hot(c)).collect::<Result<_>>()?;
    let raw = model.net.head_plain(&model.params, &xs, z)?;
    raw.into_iter().map(Categorical::new).collect()
}

pub fn rollout_with_table<R: Rng + ?Sized>(world: &Gridworld, table: &[Categorical], rng: &mut R) -> Result<Trajectory> {
    if table.len() != world.num_states() {
        return Err(invalid(format!("policy table has {} rows for {} states", table.len(), world.num_states())));
    }
    let mut traj = Trajectory { states: vec![world.start], actions: Vec::new(), rewards: Vec::new(), done: false };
    let mut state = world.start;
    while !traj.done {
        let idx = world.state_index(state).ok_or_else(|| invalid("rollout left the free cells"))?;
        let action = Action::from_index(table[idx].sample(rng))?;
        let t = world.step(state, action, traj.actions.len())?;
        traj.actions.push(action);
        traj.rewards.push(t.reward);
        traj.states.push(t.next);
        traj.done = t.done;
        state = t.next;
    }
    Ok(traj)
}

/// Samples one episode from `π(a | s, z)`.
pub fn rollout<R: Rng + ?Sized>(world: &Gridworld, model: &VFuncModel, z: &[f64], rng: &mut R) -> Result<Trajectory> {
    let table = policy_table(world, model, z)?;
    rollout_with_table(world, &table, rng)
}

/// `G_t = Σ_{t' >= t} γ^{t'-t} r_{t'}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Exponential running mean of undiscounted episode returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    pub value: f64,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Baseline { value: 0.0, decay }
    }

    pub fn observe(&mut self, episode_return: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * episode_return;
    }
}

/// Records `−(1/N) Σ_i Σ_t log π(a_t | s_t, z_i) (G_t − b)` on `tape`.
pub fn reinforce_surrogate(
    tape: &mut Tape,
    world: &Gridworld,
    model: &VFuncModel,
    batch: &[(Vec<f64>, Trajectory)],
    baseline: f64,
    gamma: f64,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(invalid("reinforce_update needs at least one trajectory"));
    }
    let ns = world.num_states();
    let na = Action::ALL.len();
    let ld = model.latent_dim();
    let rows: usize = batch.iter().map(|(_, t)| t.len()).sum();
    if rows == 0 {
        return Err(invalid("reinforce_update needs at least one step"));
    }
    let (mut xs, mut zs, mut weights) = (Vec::with_capacity(rows * ns), Vec::with_capacity(rows * ld), vec![0.0; rows * na]);
    let scale = 1.0 / batch.len() as f64;
    let mut row = 0;
    for (z, traj) in batch {
        if z.len() != ld {
            return Err(invalid(format!("latent of length {} for a model with {ld}", z.len())));
        }
        let returns = discounted_returns(&traj.rewards, gamma);
        for (t, &a) in traj.actions.iter().enumerate() {
            xs.extend(world.one_hot(traj.states[t])?);
            zs.extend_from_slice(z);
            weights[row * na + a.index()] = (returns[t] - baseline) * scale;
            row += 1;
        }
    }
    let xv = tape.matrix(rows, ns, xs)?;
    let zv = tape.matrix(rows, ld, zs)?;
    let logits = model.net.forward_rows(tape, &model.params, xv, zv, false)?.output;
    let logp = tape.log_softmax(logits)?;
    let w = tape.matrix(rows, na, weights)?;
    let weighted = tape.mul(logp, w)?;
    let total = tape.sum(weighted);
    let loss = tape.neg(total);
    tape.check_finite(loss, "policy-gradient loss")?;
    Ok(loss)
}

/// One Adam step on [`reinforce_surrogate`]. The baseline used is the one
/// held before this batch; it then absorbs the batch's returns. Returns the
/// surrogate loss.
pub fn reinforce_update(
    world: &Gridworld,
    model: &mut VFuncModel,
    adam: &mut AdamState,
    batch: &[(Vec<f64>, Trajectory)],
    baseline: &mut Baseline,
    gamma: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = reinforce_surrogate(&mut tape, world, model, batch, baseline.value, gamma)?;
    model.params.zero_grad();
    tape.backward_into(loss, &mut model.params)?;
    adam.step(&mut model.params)?;
    for (_, traj) in batch {
        baseline.observe(traj.total_reward());
    }
    tape.scalar_value(loss)
}

/// Outcome of [`entropy_update`].
#[derive(Clone, Debug, PartialEq)]
pub enum EntropyUpdate {
    Applied { bound: f64 },
    /// `λ_ent = 0`: nothing to optimize.
    Disabled,
    Skipped { reason: String },
}

/// One ascent step on `λ_ent · bound`, where each partial function pairs
/// `k` replayed states with the policy's action probabilities.
pub fn entropy_update<R: Rng + ?Sized>(
    world: &Gridworld,
    model: &mut VFuncModel,
    adam: &mut AdamState,
    buffer: &ReplayBuffer,
    cfg: &EntropyTermConfig,
    lambda_ent: f64,
    rng: &mut R,
) -> Result<EntropyUpdate> {
    if lambda_ent.is_nan() || lambda_ent < 0.0 {
        return Err(invalid(format!("lambda_ent must be >= 0, got {lambda_ent}")));
    }
    if lambda_ent == 0.0 {
        return Ok(EntropyUpdate::Disabled);
    }
    if buffer.len() < cfg.k {
        return Ok(EntropyUpdate::Skipped {
            reason: format!("replay buffer holds {} states, need k = {}", buffer.len(), cfg.k),
        });
    }
    if cfg.mode != FhatMode::ParameterOutputs {
        return Err(invalid("policy partial functions use parameter_outputs mode"));
    }
    let xs: Vec<Vec<Vec<f64>>> = (0..cfg.z_batch.max(1))
        .map(|_| buffer.sample(cfg.k, rng).into_iter().map(|c| world.one_hot(c)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut tape = Tape::new();
    let term = model.entropy_bound(&mut tape, cfg, &xs, rng)?;
    tape.check_finite(term.bound, "entropy bound")?;
    let scaled = tape.scale(term.bound, -lambda_ent);
    model.params.zero_grad();
    tape.backward_into(scaled, &mut model.params)?;
    adam.step(&mut model.params)?;
    Ok(EntropyUpdate::Applied { bound: tape.scalar_value(term.bound)? })
}

/// Policy-training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RlConfig {
    pub iterations: usize,
    /// Rollouts (each under a fresh latent) per REINFORCE step.
    pub rollouts_per_iteration: usize,
    /// Entropy steps after each REINFORCE step.
    pub entropy_updates_per_iteration: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub lambda_ent: f64,
    pub entropy: EntropyTermConfig,
    pub buffer_capacity: usize,
    pub baseline_decay: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            iterations: 400,
            rollouts_per_iteration: 8,
            entropy_updates_per_iteration: 2,
            gamma: 0.99,
            learning_rate: 1e-3,
            lambda_ent: 1.0,
            entropy: EntropyTermConfig {
                bound: BoundKind::Variational,
                k: 32,
                z_batch: 8,
                subset_size: 16,
                mode: FhatMode::ParameterOutputs,
                detach_encoder_path: false,
            },
            buffer_capacity: 10_000,
            baseline_decay: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Mean bound over this iteration's applied entropy steps.
    pub entropy_bound: Option<f64>,
    pub notices: Vec<String>,
}

/// Alternates `N_pg` rollouts and one REINFORCE step with `N_ent` entropy
/// steps. Every rollout draws from its own stream keyed by iteration and
/// index, so results do not depend on collection order.
pub fn train_rl(world: &Gridworld, model: &mut VFuncModel, cfg: &RlConfig, seed: u64) -> Result<Vec<IterationMetrics>> {
    if cfg.rollouts_per_iteration == 0 || cfg.buffer_capacity == 0 {
        return Err(invalid("rollouts_per_iteration and buffer_capacity must be >= 1"));
    }
    if !(0.0..=1.0).contains(&cfg.gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1], got {}", cfg.gamma)));
    }
    let mut adam = AdamState::new(&model.params, cfg.learning_rate)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut baseline = Baseline::new(cfg.baseline_decay);
    let mut ent_rng = rng::stream(seed, "rl.entropy");
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.rollouts_per_iteration);
        for i in 0..cfg.rollouts_per_iteration {
            let mut r = rng::stream(seed ^ ((it as u64) << 20 | i as u64), "rl.rollout");
            let z = model.sample_latent(&mut r);
            let traj = rollout(world, model, &z, &mut r)?;
            buffer.extend(traj.states.iter().copied());
            batch.push((z, traj));
        }
        let mean_return = batch.iter().map(|(_, t)| t.total_reward()).sum::<f64>() / batch.len() as f64;
        let success_rate =
            batch.iter().filter(|(_, t)| t.reached(world.goal)).count() as f64 / batch.len() as f64;
        reinforce_update(world, model, &mut adam, &batch, &mut baseline, cfg.gamma)
            .map_err(|e| Error::Diverged { step: it, detail: format!("{e}") })?;
        let (mut bound_sum, mut applied, mut notices) = (0.0, 0usize, Vec::new());
        for _ in 0..cfg.entropy_updates_per_iteration {
            match entropy_update(world, model, &mut adam, &buffer, &cfg.entropy, cfg.lambda_ent, &mut ent_rng)
                .map_err(|e| Error::Diverged { step: it, detail: format!("{e}") })?
            {
                EntropyUpdate::Applied { bound } => {
                    bound_sum += bound;
                    applied += 1;
                }
                EntropyUpdate::Disabled => {}
                EntropyUpdate::Skipped { reason } => notices.push(reason),
            }
        }
        log.push(IterationMetrics {
            iteration: it,
            mean_return,
            success_rate,
            entropy_bound: (applied > 0).then(|| bound_sum / applied as f64),
            notices,
        });
    }
    Ok(log)
}
