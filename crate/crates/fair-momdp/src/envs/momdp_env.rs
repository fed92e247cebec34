//! Sampler exposing any explicit model through the [`Environment`] trait,
//! so the model-free learners can be exercised on instances the exact
//! planner also solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, SampledStep};
use crate::momdp::{ModelError, MoMdp};

pub struct MoMdpEnv {
    mdp: MoMdp,
    horizon: usize,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
}

impl MoMdpEnv {
    pub fn new(mdp: MoMdp, horizon: usize, seed: u64) -> Result<Self, ModelError> {
        let problems = mdp.validate();
        if !problems.is_empty() {
            return Err(ModelError::Invalid(problems.join("; ")));
        }
        Ok(MoMdpEnv {
            mdp,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: 0,
            steps: 0,
        })
    }

    pub fn model(&self) -> &MoMdp {
        &self.mdp
    }

    fn sample_categorical(&mut self, probs: &[f64]) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

impl Environment for MoMdpEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn n_objectives(&self) -> usize {
        self.mdp.n_objectives
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self) -> usize {
        let mu = self.mdp.mu.clone();
        self.state = self.sample_categorical(&mu);
        self.steps = 0;
        self.state
    }

    fn step(&mut self, action: usize) -> SampledStep {
        let row = self.mdp.transition[self.state][action].clone();
        let reward = self.mdp.reward[self.state][action].clone();
        self.state = self.sample_categorical(&row);
        self.steps += 1;
        SampledStep {
            state: self.state,
            reward,
            done: self.steps >= self.horizon,
        }
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = 0;
        self.steps = 0;
    }
}
