//! Exact Gini-welfare-optimal planning.
//!
//! The welfare of a value vector under strictly decreasing Gini weights is
//! concave piecewise-linear: writing L_k(v) for the sum of the k smallest
//! components,
//!
//! ```text
//! G_w(v) = sum_k (w_k - w_{k+1}) * L_k(v),      w_{n+1} = 0,
//! L_k(v) = max_t { k*t - sum_i max(0, t - v_i) },
//! ```
//!
//! and every difference `w_k - w_{k+1}` is positive, so maximizing welfare
//! over the occupancy polytope is a single linear program in the occupancy
//! variables `x(s,a)` plus auxiliaries `t_k` (free) and `d_{ik} >= 0`.
//!
//! [`oracle_ggi_optimum`] solves the same problem by brute force — enumerate
//! every deterministic policy, then optimize over mixtures of their value
//! vectors — through a separately constructed program, giving an independent
//! check on the occupancy route.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpError, LpOutcome, Relation};
use crate::momdp::{policy_from_occupancy, ModelError, MoMdp, OccupancyMeasure, Policy};
use crate::welfare::{ggi, GiniWeights, ValueVector, WelfareError};

/// Largest deterministic-policy count the enumeration oracle will attempt.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("model failed validation: {0}")]
    InvalidModel(String),
    #[error("got {got} weights for {expected} objectives")]
    WeightMismatch { expected: usize, got: usize },
    #[error("{count} deterministic policies exceed the enumeration limit {ENUMERATION_LIMIT}; shrink the instance")]
    EnumerationGuard { count: u64 },
    #[error("internal planner failure: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Outcome of a planning call.
///
/// `value` is the start-distribution-averaged per-objective value of
/// `policy`, and `welfare` its Gini welfare. On a non-`Optimal` status the
/// policy is uniform and `value`/`welfare` are zero placeholders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub welfare: f64,
    pub value: ValueVector,
    pub policy: Policy,
}

fn check_inputs(mdp: &MoMdp, w: &GiniWeights) -> Result<(), PlannerError> {
    let problems = mdp.validate();
    if !problems.is_empty() {
        return Err(PlannerError::InvalidModel(problems.join("; ")));
    }
    if w.len() != mdp.n_objectives {
        return Err(PlannerError::WeightMismatch {
            expected: mdp.n_objectives,
            got: w.len(),
        });
    }
    Ok(())
}

/// `w_k - w_{k+1}` with the convention `w_{n+1} = 0`; positive throughout.
fn weight_steps(w: &GiniWeights) -> Vec<f64> {
    let ws = w.as_slice();
    let n = ws.len();
    (0..n)
        .map(|k| if k + 1 < n { ws[k] - ws[k + 1] } else { ws[n - 1] })
        .collect()
}

/// Solve for a stationary stochastic policy maximizing the Gini welfare of
/// the start-distribution-averaged value vector.
pub fn ggi_plan(mdp: &MoMdp, w: &GiniWeights) -> Result<PlanResult, PlannerError> {
    check_inputs(mdp, w)?;
    let ns = mdp.n_states;
    let na = mdp.n_actions;
    let n = mdp.n_objectives;
    let n_x = ns * na;
    // Column layout: x(s,a) blocked by state, then t_1..t_n, then d_{ik}
    // blocked by objective i.
    let t_col = |k: usize| n_x + k;
    let d_col = |i: usize, k: usize| n_x + n + i * n + k;
    let n_vars = n_x + n + n * n;

    let steps = weight_steps(w);
    let mut objective = vec![0.0; n_vars];
    for k in 0..n {
        objective[t_col(k)] = steps[k] * (k + 1) as f64;
        for i in 0..n {
            objective[d_col(i, k)] = -steps[k];
        }
    }
    let mut prog = LinearProgram::maximize(objective);
    for k in 0..n {
        prog.set_free(t_col(k));
    }

    // Flow conservation: out-mass of s minus discounted in-mass equals mu(s).
    for s in 0..ns {
        let mut row = vec![0.0; n_vars];
        for a in 0..na {
            row[s * na + a] += 1.0;
        }
        for sp in 0..ns {
            for ap in 0..na {
                row[sp * na + ap] -= mdp.gamma * mdp.transition[sp][ap][s];
            }
        }
        prog.add_constraint(row, Relation::Eq, mdp.mu[s]);
    }

    // d_{ik} - t_k + <r_i, x> >= 0, i.e. d_{ik} >= t_k - v_i.
    for i in 0..n {
        for k in 0..n {
            let mut row = vec![0.0; n_vars];
            row[d_col(i, k)] = 1.0;
            row[t_col(k)] = -1.0;
            for s in 0..ns {
                for a in 0..na {
                    row[s * na + a] += mdp.reward[s][a][i];
                }
            }
            prog.add_constraint(row, Relation::Ge, 0.0);
        }
    }

    match lp::solve_lp(&prog, lp::DEFAULT_TOL) {
        Ok(LpOutcome::Optimal { x, .. }) => {
            let occ = OccupancyMeasure {
                x: (0..ns)
                    .map(|s| (0..na).map(|a| x[s * na + a].max(0.0)).collect())
                    .collect(),
            };
            let policy = policy_from_occupancy(&occ);
            let value = mdp.initial_value(&policy)?;
            let welfare = ggi(&value, w)?;
            Ok(PlanResult {
                status: PlanStatus::Optimal,
                welfare,
                value,
                policy,
            })
        }
        Ok(LpOutcome::Infeasible) => Err(PlannerError::Internal(
            "occupancy program infeasible for a valid model".into(),
        )),
        Ok(LpOutcome::Unbounded) => Err(PlannerError::Internal(
            "occupancy program unbounded for a valid model".into(),
        )),
        Err(LpError::IterationLimit(_)) => Ok(PlanResult {
            status: PlanStatus::NumericalFailure,
            welfare: 0.0,
            value: ValueVector::new(vec![0.0; n])?,
            policy: Policy::uniform(ns, na),
        }),
        Err(e @ LpError::Malformed(_)) => Err(PlannerError::Internal(e.to_string())),
    }
}

/// Maximin planning as the limit of Gini planning: weights `(1, d, d^2, ...)`
/// with `d = 1e-6`, normalized. The welfare error against the true maximin
/// objective is bounded by `d * n * max|v_i|`.
pub fn maximin_plan(mdp: &MoMdp) -> Result<PlanResult, PlannerError> {
    let w = GiniWeights::egalitarian(mdp.n_objectives, 1e-6)?;
    ggi_plan(mdp, &w)
}

/// All deterministic stationary policies with their averaged value vectors,
/// in lexicographic order of the action assignment `(a(s_0), a(s_1), ...)`.
pub fn enumerate_deterministic_policies(
    mdp: &MoMdp,
) -> Result<DeterministicPolicies<'_>, PlannerError> {
    let problems = mdp.validate();
    if !problems.is_empty() {
        return Err(PlannerError::InvalidModel(problems.join("; ")));
    }
    let count = deterministic_policy_count(mdp)?;
    Ok(DeterministicPolicies {
        mdp,
        assignment: vec![0; mdp.n_states],
        remaining: count,
    })
}

/// `n_actions ^ n_states`, guarded by [`ENUMERATION_LIMIT`].
pub fn deterministic_policy_count(mdp: &MoMdp) -> Result<u64, PlannerError> {
    let mut count: u64 = 1;
    for _ in 0..mdp.n_states {
        count = count
            .checked_mul(mdp.n_actions as u64)
            .filter(|&c| c <= ENUMERATION_LIMIT)
            .ok_or(PlannerError::EnumerationGuard { count: u64::MAX })?;
    }
    Ok(count)
}

pub struct DeterministicPolicies<'a> {
    mdp: &'a MoMdp,
    assignment: Vec<usize>,
    remaining: u64,
}

impl Iterator for DeterministicPolicies<'_> {
    type Item = (Policy, ValueVector);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let policy = Policy::deterministic(&self.assignment, self.mdp.n_actions);
        let value = self
            .mdp
            .initial_value(&policy)
            .expect("validated model evaluates every policy");
        // Advance the assignment like an odometer, last state fastest.
        for slot in self.assignment.iter_mut().rev() {
            *slot += 1;
            if *slot < self.mdp.n_actions {
                break;
            }
            *slot = 0;
        }
        Some((policy, value))
    }
}

/// Brute-force optimum: maximize Gini welfare over mixtures of the
/// deterministic-policy value vectors. The achievable averaged value vectors
/// of stationary policies form exactly the convex hull of the deterministic
/// ones under discounting, so this is a full-strength reference solution.
///
/// The mixture program is built here from scratch — it shares no constraint
/// construction with [`ggi_plan`], only the generic solver.
pub fn oracle_ggi_optimum(
    mdp: &MoMdp,
    w: &GiniWeights,
) -> Result<(f64, ValueVector), PlannerError> {
    check_inputs(mdp, w)?;
    let vectors: Vec<Vec<f64>> = enumerate_deterministic_policies(mdp)?
        .map(|(_, v)| v.into_vec())
        .collect();
    let kpol = vectors.len();
    let n = mdp.n_objectives;
    // Columns: lambda_1..lambda_K, then t_1..t_n, then d_{ik} by objective.
    let n_vars = kpol + n + n * n;
    let steps = weight_steps(w);
    let mut objective = vec![0.0; n_vars];
    for k in 0..n {
        objective[kpol + k] = steps[k] * (k + 1) as f64;
        for i in 0..n {
            objective[kpol + n + i * n + k] = -steps[k];
        }
    }
    let mut prog = LinearProgram::maximize(objective);
    for k in 0..n {
        prog.set_free(kpol + k);
    }

    let mut simplex_row = vec![0.0; n_vars];
    simplex_row[..kpol].fill(1.0);
    prog.add_constraint(simplex_row, Relation::Eq, 1.0);

    for i in 0..n {
        for k in 0..n {
            let mut row = vec![0.0; n_vars];
            for (j, v) in vectors.iter().enumerate() {
                row[j] = v[i];
            }
            row[kpol + k] = -1.0;
            row[kpol + n + i * n + k] = 1.0;
            prog.add_constraint(row, Relation::Ge, 0.0);
        }
    }

    match lp::solve_lp(&prog, lp::DEFAULT_TOL) {
        Ok(LpOutcome::Optimal { x, .. }) => {
            let mut value = vec![0.0; n];
            for (j, v) in vectors.iter().enumerate() {
                for i in 0..n {
                    value[i] += x[j].max(0.0) * v[i];
                }
            }
            let value = ValueVector::new(value)?;
            let welfare = ggi(&value, w)?;
            Ok((welfare, value))
        }
        Ok(other) => Err(PlannerError::Internal(format!(
            "mixture program did not reach an optimum: {other:?}"
        ))),
        Err(e) => Err(PlannerError::Internal(e.to_string())),
    }
}
