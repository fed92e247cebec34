//! Tabular model-free learners.
//!
//! Three algorithms: classic Q-learning on the summed scalar reward
//! ([`utilitarian_q_learning`]), a vector-valued variant whose greedy
//! operator picks the action with the best Gini welfare of its Q-vector
//! ([`ggi_q_learning`]), and batch REINFORCE ascending the Gini welfare of
//! the mean discounted return through its subgradient
//! ([`ggi_policy_gradient`]). The first two are heuristic adaptations of
//! standard TD control; the policy gradient directly optimizes the concave
//! welfare objective and is the principled option of the three.
//!
//! Everything is deterministic given `(environment seed, config seed)`:
//! learners draw exactly one uniform per action choice (plus one per
//! exploration), so streams align across algorithms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::Environment;
use crate::momdp::Policy;
use crate::seeding;
use crate::welfare::{ggi, ggi_subgradient, GiniWeights, ValueVector, WelfareError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learn config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
}

fn default_alpha_init() -> f64 {
    0.1
}
fn default_alpha_tau() -> f64 {
    1e4
}
fn default_epsilon_init() -> f64 {
    1.0
}
fn default_epsilon_final() -> f64 {
    0.05
}
fn default_batch_size() -> usize {
    16
}

/// Hyperparameters shared by all learners.
///
/// The step size decays as `alpha_init / (1 + t / alpha_tau)` where `t`
/// counts environment steps for the Q-learners and iterations for the policy
/// gradient. Exploration decays linearly from `epsilon_init` to
/// `epsilon_final` over the first half of training, then stays flat. The
/// policy gradient reads `episodes` as a total episode budget and consumes
/// it in batches of `batch_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    #[serde(default = "default_alpha_init")]
    pub alpha_init: f64,
    #[serde(default = "default_alpha_tau")]
    pub alpha_tau: f64,
    #[serde(default = "default_epsilon_init")]
    pub epsilon_init: f64,
    #[serde(default = "default_epsilon_final")]
    pub epsilon_final: f64,
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let mut problems = Vec::new();
        if self.episodes == 0 {
            problems.push("episodes must be at least 1".to_string());
        }
        if self.steps_per_episode == 0 {
            problems.push("steps_per_episode must be at least 1".to_string());
        }
        if !(self.alpha_init > 0.0 && self.alpha_init <= 1.0) {
            problems.push(format!("alpha_init {} outside (0, 1]", self.alpha_init));
        }
        if !(self.alpha_tau > 0.0) {
            problems.push(format!("alpha_tau {} must be positive", self.alpha_tau));
        }
        for (name, eps) in [
            ("epsilon_init", self.epsilon_init),
            ("epsilon_final", self.epsilon_final),
        ] {
            if !(eps > 0.0 && eps <= 1.0) {
                problems.push(format!("{name} {eps} outside (0, 1]"));
            }
        }
        if self.epsilon_final > self.epsilon_init {
            problems.push("epsilon_final must not exceed epsilon_init".to_string());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LearnError::InvalidConfig(problems.join("; ")))
        }
    }

    fn alpha_at(&self, t: usize) -> f64 {
        self.alpha_init / (1.0 + t as f64 / self.alpha_tau)
    }

    /// Linear decay over the first half of `total` steps, flat afterwards.
    fn epsilon_at(&self, t: usize, total: usize) -> f64 {
        let half = (total / 2).max(1);
        if t >= half {
            self.epsilon_final
        } else {
            let frac = t as f64 / half as f64;
            self.epsilon_init + (self.epsilon_final - self.epsilon_init) * frac
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarQTable {
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorQTable {
    /// Per-objective action values, indexed `[state][action][objective]`.
    pub q: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicyParams {
    pub theta: Vec<Vec<f64>>,
}

impl SoftmaxPolicyParams {
    pub fn policy(&self) -> Policy {
        Policy {
            probs: self.theta.iter().map(|row| softmax_row(row)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QLearnOutput {
    pub table: ScalarQTable,
    pub policy: Policy,
    /// Mean per-step scalar reward of each training episode.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorQLearnOutput {
    pub table: VectorQTable,
    pub policy: Policy,
    /// Gini welfare of each episode's mean per-step reward vector.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyGradientOutput {
    pub params: SoftmaxPolicyParams,
    pub policy: Policy,
    /// Gini welfare of the batch-mean discounted return, per iteration.
    pub curve: Vec<f64>,
}

/// First index attaining the maximum — deterministic tie-breaking.
fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn epsilon_greedy(rng: &mut ChaCha8Rng, epsilon: f64, greedy: usize, n_actions: usize) -> usize {
    let u: f64 = rng.gen();
    if u < epsilon {
        rng.gen_range(0..n_actions)
    } else {
        greedy
    }
}

fn softmax_row(theta: &[f64]) -> Vec<f64> {
    let peak = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|t| (t - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Q-learning on the summed reward `sum_i r_i` with epsilon-greedy
/// exploration; the returned policy is greedy with ties to the lowest
/// action index.
pub fn utilitarian_q_learning<E: Environment>(
    env: &mut E,
    cfg: &LearnConfig,
) -> Result<QLearnOutput, LearnError> {
    cfg.validate()?;
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.episodes * cfg.steps_per_episode;
    let mut t_global = 0usize;
    let mut curve = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let mut s = env.reset();
        let mut ep_sum = 0.0;
        let mut ep_steps = 0usize;
        for _ in 0..cfg.steps_per_episode {
            let epsilon = cfg.epsilon_at(t_global, total);
            let alpha = cfg.alpha_at(t_global);
            let a = epsilon_greedy(&mut rng, epsilon, argmax_lowest(&q[s]), na);
            let out = env.step(a);
            let r: f64 = out.reward.iter().sum();
            let bootstrap = q[out.state][argmax_lowest(&q[out.state])];
            q[s][a] += alpha * (r + cfg.gamma * bootstrap - q[s][a]);
            s = out.state;
            ep_sum += r;
            ep_steps += 1;
            t_global += 1;
            if out.done {
                break;
            }
        }
        curve.push(ep_sum / ep_steps as f64);
    }
    let actions: Vec<usize> = q.iter().map(|row| argmax_lowest(row)).collect();
    Ok(QLearnOutput {
        policy: Policy::deterministic(&actions, na),
        table: ScalarQTable { q },
        curve,
    })
}

fn ggi_of(values: &[f64], w: &GiniWeights) -> Result<f64, WelfareError> {
    ggi(&ValueVector::new(values.to_vec())?, w)
}

/// Vector Q-learning whose greedy operator maximizes the Gini welfare of the
/// Q-vector: the TD target bootstraps every objective through the single
/// action `a* = argmax_a ggi(Q(s',a), w)`.
///
/// With one objective and weight `(1)` this performs exactly the updates of
/// [`utilitarian_q_learning`] under the same seeds.
pub fn ggi_q_learning<E: Environment>(
    env: &mut E,
    w: &GiniWeights,
    cfg: &LearnConfig,
) -> Result<VectorQLearnOutput, LearnError> {
    cfg.validate()?;
    let (ns, na, n) = (env.n_states(), env.n_actions(), env.n_objectives());
    if w.len() != n {
        return Err(LearnError::Dimension(format!(
            "{} weights for {} objectives",
            w.len(),
            n
        )));
    }
    let mut q = vec![vec![vec![0.0; n]; na]; ns];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.episodes * cfg.steps_per_episode;
    let mut t_global = 0usize;
    let mut curve = Vec::with_capacity(cfg.episodes);
    let greedy_action = |q: &Vec<Vec<Vec<f64>>>, s: usize| -> Result<usize, WelfareError> {
        let mut welfare = Vec::with_capacity(na);
        for a in 0..na {
            welfare.push(ggi_of(&q[s][a], w)?);
        }
        Ok(argmax_lowest(&welfare))
    };
    for _ in 0..cfg.episodes {
        let mut s = env.reset();
        let mut ep_sum = vec![0.0; n];
        let mut ep_steps = 0usize;
        for _ in 0..cfg.steps_per_episode {
            let epsilon = cfg.epsilon_at(t_global, total);
            let alpha = cfg.alpha_at(t_global);
            let a = epsilon_greedy(&mut rng, epsilon, greedy_action(&q, s)?, na);
            let out = env.step(a);
            let a_star = greedy_action(&q, out.state)?;
            for i in 0..n {
                let target = out.reward[i] + cfg.gamma * q[out.state][a_star][i];
                q[s][a][i] += alpha * (target - q[s][a][i]);
            }
            for (acc, r) in ep_sum.iter_mut().zip(&out.reward) {
                *acc += r;
            }
            s = out.state;
            ep_steps += 1;
            t_global += 1;
            if out.done {
                break;
            }
        }
        let mean: Vec<f64> = ep_sum.iter().map(|v| v / ep_steps as f64).collect();
        curve.push(ggi_of(&mean, w)?);
    }
    let mut actions = Vec::with_capacity(ns);
    for s in 0..ns {
        actions.push(greedy_action(&q, s)?);
    }
    Ok(VectorQLearnOutput {
        policy: Policy::deterministic(&actions, na),
        table: VectorQTable { q },
        curve,
    })
}

/// Batch REINFORCE on the Gini welfare of the mean discounted return.
///
/// Each iteration rolls out `batch_size` episodes under the current softmax
/// policy, forms the batch value estimate `V` (mean discounted return per
/// objective), takes the welfare subgradient `g` at `V`, and follows the
/// policy gradient of `sum_i g_i V_i` using per-episode scalarized returns
/// `sum_i g_i G_i` against the batch-mean baseline. Because the welfare is
/// concave and `g` is an exact supergradient, this is stochastic ascent on
/// the true objective.
pub fn ggi_policy_gradient<E: Environment>(
    env: &mut E,
    w: &GiniWeights,
    cfg: &LearnConfig,
) -> Result<PolicyGradientOutput, LearnError> {
    cfg.validate()?;
    let (ns, na, n) = (env.n_states(), env.n_actions(), env.n_objectives());
    if w.len() != n {
        return Err(LearnError::Dimension(format!(
            "{} weights for {} objectives",
            w.len(),
            n
        )));
    }
    let mut theta = vec![vec![0.0; na]; ns];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let iterations = (cfg.episodes / cfg.batch_size).max(1);
    let mut curve = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let mut pairs: Vec<Vec<(usize, usize)>> = Vec::with_capacity(cfg.batch_size);
        let mut returns: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let mut s = env.reset();
            let mut discount = 1.0;
            let mut ret = vec![0.0; n];
            let mut visited = Vec::with_capacity(cfg.steps_per_episode);
            for _ in 0..cfg.steps_per_episode {
                let a = sample_index(&mut rng, &softmax_row(&theta[s]));
                visited.push((s, a));
                let out = env.step(a);
                for (acc, r) in ret.iter_mut().zip(&out.reward) {
                    *acc += discount * r;
                }
                discount *= cfg.gamma;
                s = out.state;
                if out.done {
                    break;
                }
            }
            pairs.push(visited);
            returns.push(ret);
        }
        let batch = cfg.batch_size as f64;
        let v_hat: Vec<f64> = (0..n)
            .map(|i| returns.iter().map(|g| g[i]).sum::<f64>() / batch)
            .collect();
        let g = ggi_subgradient(&ValueVector::new(v_hat.clone())?, w)?;
        let scalarized: Vec<f64> = returns
            .iter()
            .map(|ret| ret.iter().zip(g.as_slice()).map(|(r, gi)| gi * r).sum())
            .collect();
        let baseline: f64 = scalarized.iter().sum::<f64>() / batch;
        let mut grad = vec![vec![0.0; na]; ns];
        for (visited, &score) in pairs.iter().zip(&scalarized) {
            let advantage = score - baseline;
            for &(s, a) in visited {
                let pi = softmax_row(&theta[s]);
                for (ap, grad_sa) in grad[s].iter_mut().enumerate() {
                    let indicator = if ap == a { 1.0 } else { 0.0 };
                    *grad_sa += advantage * (indicator - pi[ap]);
                }
            }
        }
        let lr = cfg.alpha_at(it);
        for (theta_row, grad_row) in theta.iter_mut().zip(&grad) {
            for (t, gr) in theta_row.iter_mut().zip(grad_row) {
                *t += lr * gr / batch;
            }
        }
        curve.push(ggi_of(&v_hat, w)?);
    }
    let params = SoftmaxPolicyParams { theta };
    Ok(PolicyGradientOutput {
        policy: params.policy(),
        params,
        curve,
    })
}

/// Monte Carlo evaluation summary of a fixed policy.
///
/// `per_objective_mean` averages each episode's per-step mean reward across
/// episodes; `utilitarian_mean` is its sum, `ggi_welfare` its Gini welfare
/// under the supplied weights, `min_objective` its worst component. The
/// standard deviation is the population deviation across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_objective_mean: Vec<f64>,
    pub per_objective_std: Vec<f64>,
    pub utilitarian_mean: f64,
    pub ggi_welfare: f64,
    pub min_objective: f64,
}

/// Evaluate `policy` over `episodes` full-horizon episodes.
///
/// Bit-identical across calls with equal seeds: the environment stream and
/// the action stream are derived from `seed` with fixed labels.
pub fn evaluate_learned<E: Environment>(
    env: &mut E,
    policy: &Policy,
    episodes: usize,
    seed: u64,
    w: &GiniWeights,
) -> Result<EvalReport, LearnError> {
    if episodes == 0 {
        return Err(LearnError::InvalidConfig("episodes must be at least 1".into()));
    }
    if policy.n_states() != env.n_states() {
        return Err(LearnError::Dimension(format!(
            "policy covers {} states, environment has {}",
            policy.n_states(),
            env.n_states()
        )));
    }
    let n = env.n_objectives();
    env.reseed(seeding::derive_seed(seed, "eval-env", &[]));
    let mut action_rng =
        ChaCha8Rng::seed_from_u64(seeding::derive_seed(seed, "eval-actions", &[]));
    let mut episode_means: Vec<Vec<f64>> = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset();
        let mut sums = vec![0.0; n];
        let mut steps = 0usize;
        for _ in 0..env.horizon() {
            let a = sample_index(&mut action_rng, &policy.probs[s]);
            let out = env.step(a);
            for (acc, r) in sums.iter_mut().zip(&out.reward) {
                *acc += r;
            }
            steps += 1;
            s = out.state;
            if out.done {
                break;
            }
        }
        episode_means.push(sums.into_iter().map(|v| v / steps as f64).collect());
    }
    let e = episodes as f64;
    let per_objective_mean: Vec<f64> = (0..n)
        .map(|i| episode_means.iter().map(|m| m[i]).sum::<f64>() / e)
        .collect();
    // Shifted-data variance: exact zero when every episode is identical.
    let per_objective_std: Vec<f64> = (0..n)
        .map(|i| {
            let shift = episode_means[0][i];
            let (mut d_sum, mut d2_sum) = (0.0, 0.0);
            for m in &episode_means {
                let d = m[i] - shift;
                d_sum += d;
                d2_sum += d * d;
            }
            let var = d2_sum / e - (d_sum / e).powi(2);
            var.max(0.0).sqrt()
        })
        .collect();
    let utilitarian_mean = per_objective_mean.iter().sum();
    let ggi_welfare = ggi_of(&per_objective_mean, w)?;
    let min_objective = per_objective_mean
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    Ok(EvalReport {
        per_objective_mean,
        per_objective_std,
        utilitarian_mean,
        ggi_welfare,
        min_objective,
    })
}
