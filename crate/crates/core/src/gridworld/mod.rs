//! Deterministic gridworlds, latent-conditioned policies trained with
//! REINFORCE plus the entropy bound, and visitation analysis.

mod analysis;
mod buffer;
mod train;
mod world;

pub use analysis::{
    diversity_metric, interpolation_study, landmark_fractions, total_variation, visitation_map, VisitationMap,
};
pub use buffer::ReplayBuffer;
pub use train::{
    discounted_returns, entropy_update, policy_table, reinforce_surrogate, reinforce_update, rollout, rollout_with_table, train_rl,
    Baseline, EntropyUpdate, IterationMetrics, RlConfig, Trajectory,
};
pub use world::{make_world, Action, Cell, Gridworld, Transition, WORLD_NAMES};
