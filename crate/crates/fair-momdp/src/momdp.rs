//! Finite multiobjective MDPs with exact vector-valued policy evaluation.
//!
//! A model carries dense transition and reward tensors plus a discount factor
//! strictly below one, so every evaluation reduces to a nonsingular linear
//! system. Two independent evaluation routes are exposed: direct solves of the
//! Bellman system per objective, and occupancy measures (expected discounted
//! visit mass) whose reward-weighted sum must agree with the direct route.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::welfare::{ValueVector, WelfareError, WelfareSpec};

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
}

/// Finite multiobjective MDP.
///
/// `transition[s][a][s']` is the probability of moving to `s'`, and
/// `reward[s][a]` is the per-objective immediate reward vector. This struct is
/// also the JSON interchange format used by the planner, harness and CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_objectives: usize,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
}

/// Stationary stochastic policy: one action distribution per state.
/// Serializes as the bare `[n_states][n_actions]` probability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Deterministic policy from an action index per state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Policy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        for (s, row) in self.probs.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                diags.push(format!("policy row {s} has a negative or NaN entry"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                diags.push(format!("policy row {s} sums to {sum}, expected 1"));
            }
        }
        diags
    }
}

/// Expected discounted state-action visit mass (unnormalized: totals 1/(1-gamma)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub x: Vec<Vec<f64>>,
}

impl OccupancyMeasure {
    pub fn total_mass(&self) -> f64 {
        self.x.iter().flatten().sum()
    }

    /// Largest absolute violation of the flow constraints for `mdp`.
    pub fn flow_residual(&self, mdp: &MoMdp) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..mdp.n_states {
            let outflow: f64 = self.x[s].iter().sum();
            let mut inflow = mdp.mu[s];
            for s_prev in 0..mdp.n_states {
                for a in 0..mdp.n_actions {
                    inflow += mdp.gamma * mdp.transition[s_prev][a][s] * self.x[s_prev][a];
                }
            }
            worst = worst.max((outflow - inflow).abs());
        }
        worst
    }
}

impl MoMdp {
    /// Check every model invariant; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        if self.n_states == 0 || self.n_actions == 0 || self.n_objectives == 0 {
            diags.push("n_states, n_actions and n_objectives must all be >= 1".to_string());
            return diags;
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            diags.push(format!("discount must be < 1 (and >= 0), got {}", self.gamma));
        }
        if self.mu.len() != self.n_states {
            diags.push(format!(
                "mu has length {}, expected {}",
                self.mu.len(),
                self.n_states
            ));
        } else {
            if self.mu.iter().any(|&p| !(p >= 0.0)) {
                diags.push("mu has a negative or NaN entry".to_string());
            }
            let sum: f64 = self.mu.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                diags.push(format!("mu sums to {sum}, expected 1"));
            }
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            diags.push("transition/reward tensors must have n_states rows".to_string());
            return diags;
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions || self.reward[s].len() != self.n_actions
            {
                diags.push(format!("state {s}: tensors must have n_actions entries"));
                continue;
            }
            for a in 0..self.n_actions {
                let row = &self.transition[s][a];
                if row.len() != self.n_states {
                    diags.push(format!(
                        "transition row (s={s}, a={a}) has length {}, expected {}",
                        row.len(),
                        self.n_states
                    ));
                    continue;
                }
                if row.iter().any(|&p| !(p >= 0.0)) {
                    diags.push(format!(
                        "transition row (s={s}, a={a}) has a negative or NaN entry"
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    diags.push(format!(
                        "transition row (s={s}, a={a}) sums to {sum}, expected 1"
                    ));
                }
                if self.reward[s][a].len() != self.n_objectives {
                    diags.push(format!(
                        "reward vector (s={s}, a={a}) has length {}, expected {}",
                        self.reward[s][a].len(),
                        self.n_objectives
                    ));
                } else if self.reward[s][a].iter().any(|r| !r.is_finite()) {
                    diags.push(format!("reward vector (s={s}, a={a}) has a non-finite entry"));
                }
            }
        }
        diags
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    fn check_policy(&self, pi: &Policy) -> Result<(), ModelError> {
        if pi.probs.len() != self.n_states {
            return Err(ModelError::Dimension(format!(
                "policy has {} states, model has {}",
                pi.probs.len(),
                self.n_states
            )));
        }
        for (s, row) in pi.probs.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(ModelError::Dimension(format!(
                    "policy row {s} has {} actions, model has {}",
                    row.len(),
                    self.n_actions
                )));
            }
        }
        Ok(())
    }

    /// Policy-averaged transition matrix `P_pi[s][s']`.
    fn policy_transition(&self, pi: &Policy) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; self.n_states]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = pi.probs[s][a];
                if w == 0.0 {
                    continue;
                }
                for s_next in 0..self.n_states {
                    p[s][s_next] += w * self.transition[s][a][s_next];
                }
            }
        }
        p
    }

    /// Exact per-state value vectors `V[s][objective]` under `pi`.
    ///
    /// Solves `(I - gamma P_pi) V_i = r_{pi,i}` for each objective `i` with a
    /// single factorization of the shared system matrix.
    pub fn evaluate_policy(&self, pi: &Policy) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_policy(pi)?;
        let s_count = self.n_states;
        let p_pi = self.policy_transition(pi);
        let mut a_mat = vec![vec![0.0; s_count]; s_count];
        for s in 0..s_count {
            for s_next in 0..s_count {
                a_mat[s][s_next] = -self.gamma * p_pi[s][s_next];
            }
            a_mat[s][s] += 1.0;
        }
        let rhs: Vec<Vec<f64>> = (0..self.n_objectives)
            .map(|i| {
                (0..s_count)
                    .map(|s| {
                        (0..self.n_actions)
                            .map(|a| pi.probs[s][a] * self.reward[s][a][i])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let per_objective = linalg::solve_multi(&a_mat, &rhs)?;
        let mut values = vec![vec![0.0; self.n_objectives]; s_count];
        for (i, column) in per_objective.iter().enumerate() {
            for s in 0..s_count {
                values[s][i] = column[s];
            }
        }
        Ok(values)
    }

    /// Initial-state average of the per-state values: `sum_s mu(s) V(s)`.
    pub fn initial_value(&self, pi: &Policy) -> Result<ValueVector, ModelError> {
        let values = self.evaluate_policy(pi)?;
        Ok(self.average_values(&values))
    }

    /// `mu`-average of an `evaluate_policy` table.
    pub fn average_values(&self, values: &[Vec<f64>]) -> ValueVector {
        let mut avg = vec![0.0; self.n_objectives];
        for (s, row) in values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                avg[i] += self.mu[s] * v;
            }
        }
        ValueVector::new(avg).expect("averaged value is finite and non-empty")
    }

    /// The scalarized objective: welfare applied after the `mu`-average.
    pub fn objective_value(&self, pi: &Policy, welfare: &WelfareSpec) -> Result<f64, ModelError> {
        let v = self.initial_value(pi)?;
        Ok(welfare.evaluate(&v)?)
    }

    /// Expected discounted visit mass of each state-action pair under `pi`.
    pub fn occupancy_measure(&self, pi: &Policy) -> Result<OccupancyMeasure, ModelError> {
        self.check_policy(pi)?;
        let s_count = self.n_states;
        let p_pi = self.policy_transition(pi);
        // State mass d solves (I - gamma P_pi^T) d = mu.
        let mut a_mat = vec![vec![0.0; s_count]; s_count];
        for s in 0..s_count {
            for s_next in 0..s_count {
                a_mat[s_next][s] = -self.gamma * p_pi[s][s_next];
            }
            a_mat[s][s] += 1.0;
        }
        let d = linalg::solve(&a_mat, &self.mu)?;
        let x = (0..s_count)
            .map(|s| {
                let mass = d[s].max(0.0); // rounding can leave -1e-17 on unreachable states
                (0..self.n_actions).map(|a| mass * pi.probs[s][a]).collect()
            })
            .collect();
        Ok(OccupancyMeasure { x })
    }

    /// Reward-weighted total of an occupancy measure, one entry per objective.
    pub fn value_from_occupancy(&self, occ: &OccupancyMeasure) -> ValueVector {
        let mut v = vec![0.0; self.n_objectives];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mass = occ.x[s][a];
                for i in 0..self.n_objectives {
                    v[i] += mass * self.reward[s][a][i];
                }
            }
        }
        ValueVector::new(v).expect("occupancy value is finite and non-empty")
    }
}

/// Normalize occupancy rows into a policy; zero-mass states get a uniform row.
pub fn policy_from_occupancy(occ: &OccupancyMeasure) -> Policy {
    let probs = occ
        .x
        .iter()
        .map(|row| {
            let mass: f64 = row.iter().sum();
            if mass < 1e-12 {
                vec![1.0 / row.len() as f64; row.len()]
            } else {
                row.iter().map(|&m| m / mass).collect()
            }
        })
        .collect();
    Policy { probs }
}

/// Deterministic random test instance: normalized-uniform transition rows,
/// rewards uniform in `[0, 1)`, uniform initial distribution, `gamma = 0.9`.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, n_objectives: usize) -> MoMdp {
    assert!(n_states >= 1 && n_actions >= 1 && n_objectives >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let draws: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 1e-9).collect();
            let sum: f64 = draws.iter().sum();
            for (s_next, u) in draws.iter().enumerate() {
                transition[s][a][s_next] = u / sum;
            }
        }
    }
    let mut reward = vec![vec![vec![0.0; n_objectives]; n_actions]; n_states];
    for row in reward.iter_mut().flatten() {
        for r in row.iter_mut() {
            *r = rng.gen::<f64>();
        }
    }
    MoMdp {
        n_states,
        n_actions,
        n_objectives,
        gamma: 0.9,
        mu: vec![1.0 / n_states as f64; n_states],
        transition,
        reward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::welfare::GiniWeights;
    use approx::assert_relative_eq;

    /// Single-action 2-state chain: s0 -> s1 -> s1, gamma 0.5,
    /// r(s0) = (1, 0), r(s1) = (0, 1).
    fn chain() -> MoMdp {
        MoMdp {
            n_states: 2,
            n_actions: 1,
            n_objectives: 2,
            gamma: 0.5,
            mu: vec![1.0, 0.0],
            transition: vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            reward: vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        }
    }

    fn single_state() -> MoMdp {
        MoMdp {
            n_states: 1,
            n_actions: 1,
            n_objectives: 2,
            gamma: 0.5,
            mu: vec![1.0],
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![vec![2.0, 4.0]]],
        }
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(chain().validate().is_empty());
        assert!(single_state().validate().is_empty());
    }

    #[test]
    fn validate_names_bad_transition_row() {
        let mut mdp = chain();
        mdp.transition[1][0] = vec![0.0, 0.9];
        let diags = mdp.validate();
        assert_eq!(diags.len(), 1);
        assert!(diags[0].contains("s=1"), "diagnostic was: {}", diags[0]);
        assert!(diags[0].contains("a=0"));
    }

    #[test]
    fn validate_rejects_gamma_one() {
        let mut mdp = chain();
        mdp.gamma = 1.0;
        let diags = mdp.validate();
        assert!(diags.iter().any(|d| d.contains("discount must be < 1")));
    }

    #[test]
    fn evaluate_geometric_series() {
        let mdp = single_state();
        let pi = Policy::uniform(1, 1);
        let values = mdp.evaluate_policy(&pi).unwrap();
        assert_relative_eq!(values[0][0], 4.0, epsilon = 1e-10);
        assert_relative_eq!(values[0][1], 8.0, epsilon = 1e-10);
    }

    #[test]
    fn evaluate_myopic_when_gamma_zero() {
        let mut mdp = random_mdp(3, 4, 3, 2);
        mdp.gamma = 0.0;
        let pi = Policy::uniform(4, 3);
        let values = mdp.evaluate_policy(&pi).unwrap();
        for s in 0..4 {
            for i in 0..2 {
                let expected: f64 = (0..3).map(|a| pi.probs[s][a] * mdp.reward[s][a][i]).sum();
                assert_relative_eq!(values[s][i], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_chain_by_hand() {
        // Hand-solved 2x2 systems: V(s1) = (0, 2), V(s0) = (1, 1).
        let mdp = chain();
        let pi = Policy::uniform(2, 1);
        let values = mdp.evaluate_policy(&pi).unwrap();
        assert_relative_eq!(values[0][0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(values[0][1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(values[1][0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(values[1][1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn evaluate_residual_is_small() {
        let mdp = random_mdp(11, 6, 3, 4);
        let pi = Policy::uniform(6, 3);
        let values = mdp.evaluate_policy(&pi).unwrap();
        let p_pi = mdp.policy_transition(&pi);
        for i in 0..4 {
            for s in 0..6 {
                let r_pi: f64 = (0..3).map(|a| pi.probs[s][a] * mdp.reward[s][a][i]).sum();
                let lhs: f64 =
                    values[s][i] - mdp.gamma * (0..6).map(|t| p_pi[s][t] * values[t][i]).sum::<f64>();
                assert!((lhs - r_pi).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn objective_value_examples() {
        let mdp = chain();
        let pi = Policy::uniform(2, 1);
        assert_relative_eq!(
            mdp.objective_value(&pi, &WelfareSpec::Utilitarian).unwrap(),
            2.0,
            epsilon = 1e-10
        );
        let ggi_spec = WelfareSpec::Ggi {
            weights: GiniWeights::new(vec![0.7, 0.3]).unwrap(),
        };
        assert_relative_eq!(mdp.objective_value(&pi, &ggi_spec).unwrap(), 1.0, epsilon = 1e-10);

        let mut half = chain();
        half.mu = vec![0.5, 0.5];
        assert_relative_eq!(
            half.objective_value(&pi, &WelfareSpec::Maximin).unwrap(),
            0.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn occupancy_single_state() {
        let mdp = single_state();
        let occ = mdp.occupancy_measure(&Policy::uniform(1, 1)).unwrap();
        assert_relative_eq!(occ.x[0][0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn occupancy_symmetric_two_state() {
        // Uniform everything: mass 1/(1-0.9) = 10 split equally 4 ways.
        let mdp = MoMdp {
            n_states: 2,
            n_actions: 2,
            n_objectives: 1,
            gamma: 0.9,
            mu: vec![0.5, 0.5],
            transition: vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            reward: vec![
                vec![vec![1.0], vec![0.0]],
                vec![vec![0.0], vec![1.0]],
            ],
        };
        let occ = mdp.occupancy_measure(&Policy::uniform(2, 2)).unwrap();
        for row in &occ.x {
            for &m in row {
                assert_relative_eq!(m, 2.5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn occupancy_mass_and_flow() {
        for seed in 0..5 {
            let mdp = random_mdp(seed, 5, 2, 3);
            let pi = Policy::uniform(5, 2);
            let occ = mdp.occupancy_measure(&pi).unwrap();
            assert_relative_eq!(occ.total_mass(), 10.0, epsilon = 1e-8);
            assert!(occ.flow_residual(&mdp) <= 1e-8);
        }
    }

    #[test]
    fn value_from_occupancy_single_pair() {
        let mdp = single_state();
        let occ = OccupancyMeasure { x: vec![vec![2.0]] };
        let v = mdp.value_from_occupancy(&occ);
        assert_relative_eq!(v[0], 4.0);
        assert_relative_eq!(v[1], 8.0);

        let sparse = OccupancyMeasure { x: vec![vec![0.5]] };
        let v = mdp.value_from_occupancy(&sparse);
        assert_relative_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], 2.0);
    }

    #[test]
    fn dual_consistency_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..40 {
            let s = rng.gen_range(2..6);
            let a = rng.gen_range(1..4);
            let n = rng.gen_range(1..4);
            let mdp = random_mdp(seed, s, a, n);
            let mut pi = Policy::uniform(s, a);
            // Random stochastic policy.
            for row in pi.probs.iter_mut() {
                let draws: Vec<f64> = (0..a).map(|_| rng.gen::<f64>() + 1e-9).collect();
                let sum: f64 = draws.iter().sum();
                for (p, d) in row.iter_mut().zip(&draws) {
                    *p = d / sum;
                }
            }
            let direct = mdp.initial_value(&pi).unwrap();
            let occ = mdp.occupancy_measure(&pi).unwrap();
            let via_occ = mdp.value_from_occupancy(&occ);
            for i in 0..n {
                assert!(
                    (direct[i] - via_occ[i]).abs() <= 1e-8,
                    "seed {seed}: objective {i} disagrees: {} vs {}",
                    direct[i],
                    via_occ[i]
                );
            }
        }
    }

    #[test]
    fn policy_from_occupancy_rows() {
        let occ = OccupancyMeasure {
            x: vec![vec![3.0, 1.0], vec![0.0, 0.0]],
        };
        let pi = policy_from_occupancy(&occ);
        assert_eq!(pi.probs[0], vec![0.75, 0.25]);
        assert_eq!(pi.probs[1], vec![0.5, 0.5]);
    }

    #[test]
    fn occupancy_round_trip() {
        for seed in 0..10 {
            let mdp = random_mdp(seed, 4, 3, 2);
            let mut pi = Policy::uniform(4, 3);
            pi.probs[0] = vec![0.8, 0.1, 0.1];
            pi.probs[2] = vec![0.0, 0.0, 1.0];
            let x = mdp.occupancy_measure(&pi).unwrap();
            let x2 = mdp.occupancy_measure(&policy_from_occupancy(&x)).unwrap();
            for (row, row2) in x.x.iter().zip(&x2.x) {
                for (m, m2) in row.iter().zip(row2) {
                    assert!((m - m2).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn utilitarian_objective_is_linear() {
        let mdp = random_mdp(17, 5, 2, 3);
        let pi = Policy::uniform(5, 2);
        let util = mdp.objective_value(&pi, &WelfareSpec::Utilitarian).unwrap();

        // Scalar MDP with summed rewards must agree.
        let mut scalar = mdp.clone();
        scalar.n_objectives = 1;
        scalar.reward = mdp
            .reward
            .iter()
            .map(|per_a| per_a.iter().map(|r| vec![r.iter().sum()]).collect())
            .collect();
        let scalar_value = scalar.initial_value(&pi).unwrap();
        assert!((util - scalar_value[0]).abs() <= 1e-8);
    }

    #[test]
    fn ggi_objective_invariant_under_objective_relabeling() {
        let mdp = random_mdp(23, 4, 2, 3);
        let pi = Policy::uniform(4, 2);
        let spec = WelfareSpec::Ggi {
            weights: GiniWeights::default_for(3).unwrap(),
        };
        let base = mdp.objective_value(&pi, &spec).unwrap();

        let mut permuted = mdp.clone();
        for per_a in permuted.reward.iter_mut() {
            for r in per_a.iter_mut() {
                r.rotate_left(1);
            }
        }
        let rotated = permuted.objective_value(&pi, &spec).unwrap();
        assert_eq!(base, rotated);
    }

    #[test]
    fn random_mdp_is_deterministic_and_valid() {
        let a = random_mdp(0, 4, 2, 3);
        let b = random_mdp(0, 4, 2, 3);
        assert_eq!(a, b);
        assert!(a.validate().is_empty());
        let c = random_mdp(1, 4, 2, 3);
        assert_ne!(a.reward, c.reward);
    }

    #[test]
    fn momdp_json_round_trip() {
        let mdp = chain();
        let json = serde_json::to_string(&mdp).unwrap();
        assert!(json.starts_with(r#"{"n_states":2,"n_actions":1,"n_objectives":2,"gamma":0.5"#));
        let back: MoMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mdp);
    }
}
