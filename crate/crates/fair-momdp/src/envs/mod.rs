//! Simulation environments with vector rewards.
//!
//! Two environments are provided: a queueing model of a signalized traffic
//! intersection ([`TrafficEnv`]) and a sampler over any explicit model
//! ([`MoMdpEnv`]). Both expose the tabular [`Environment`] interface the
//! learners consume: encoded integer states, integer actions, one reward
//! component per objective.

mod momdp_env;
mod traffic;

pub use momdp_env::MoMdpEnv;
pub use traffic::{
    as_momdp, decode_state, encode_state, state_space_size, traffic_step, EnvState, StepOutcome,
    TrafficConfig, TrafficEnv, TrafficError, STATE_SPACE_LIMIT,
};

/// One sampled transition as seen by a tabular learner.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledStep {
    pub state: usize,
    pub reward: Vec<f64>,
    pub done: bool,
}

/// A finite-state, finite-action environment with vector rewards and
/// episode boundaries. Implementations own their RNG; identical seeds and
/// action sequences reproduce trajectories bit-exactly.
pub trait Environment {
    /// Number of encoded states (table size for tabular learners).
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_objectives(&self) -> usize;
    /// Steps per episode; [`SampledStep::done`] turns true after this many.
    fn horizon(&self) -> usize;
    /// Start a new episode, continuing the current RNG stream; returns the
    /// encoded initial state.
    fn reset(&mut self) -> usize;
    /// Advance one step. Callers must pass `action < n_actions()`.
    fn step(&mut self, action: usize) -> SampledStep;
    /// Restart the RNG stream from `seed` and reset the episode.
    fn reseed(&mut self, seed: u64);
}
