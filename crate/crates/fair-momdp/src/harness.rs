//! Experiment orchestration.
//!
//! An experiment is a JSON config naming an environment, a list of
//! algorithms, a seed count and an output directory. Each (algorithm, seed)
//! cell trains a fresh learner and evaluates the resulting policy; cells are
//! independent and may run concurrently (capped by `FAIR_MOMDP_THREADS`,
//! `0` forcing serial execution) without affecting any output byte.
//!
//! Reproducibility rules: all randomness descends from the config's
//! `master_seed` through labeled streams — the training environment stream
//! and the evaluation stream depend only on the seed index (so algorithms
//! are compared on identical arrival sequences), while the learner stream
//! also folds in the algorithm index. Emitted CSV is UTF-8 with LF endings,
//! JSON has sorted keys, and wallclock timings stay out of files so reruns
//! are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{
    Environment, MoMdpEnv, SampledStep, TrafficConfig, TrafficEnv, TrafficError,
};
use crate::learner::{
    self, evaluate_learned, EvalReport, LearnConfig, LearnError,
};
use crate::momdp::{ModelError, MoMdp, Policy};
use crate::planner::{self, PlannerError};
use crate::seeding::derive_seed;
use crate::welfare::{GiniWeights, WelfareError, WelfareSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
}

fn default_n_seeds() -> usize {
    20
}

/// Environment reference inside an experiment config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    /// Inline traffic configuration.
    Traffic { config: TrafficConfig },
    /// Bundled traffic preset by name.
    Preset { name: String },
    /// Explicit model from a JSON file, sampled with the given horizon.
    /// Relative paths resolve against the config file's directory.
    Momdp { path: String, horizon: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    /// One of `utilitarian_q`, `ggi_q`, `ggi_pg`.
    pub name: String,
    pub welfare: WelfareSpec,
    pub learn: LearnConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    pub eval_episodes: usize,
    pub output_path: String,
    #[serde(default)]
    pub master_seed: u64,
    /// Weights for the reported welfare column; defaults to the halving
    /// weights for the environment's objective count.
    #[serde(default)]
    pub report_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    UtilitarianQ,
    GgiQ,
    GgiPg,
}

impl AlgorithmKind {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "utilitarian_q" => Some(AlgorithmKind::UtilitarianQ),
            "ggi_q" => Some(AlgorithmKind::GgiQ),
            "ggi_pg" => Some(AlgorithmKind::GgiPg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum EnvTemplate {
    Traffic(TrafficConfig),
    Momdp { mdp: MoMdp, horizon: usize },
}

impl EnvTemplate {
    fn n_objectives(&self) -> usize {
        match self {
            EnvTemplate::Traffic(cfg) => cfg.n_lanes,
            EnvTemplate::Momdp { mdp, .. } => mdp.n_objectives,
        }
    }

    fn build(&self, seed: u64) -> Result<EnvInstance, HarnessError> {
        match self {
            EnvTemplate::Traffic(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = seed;
                Ok(EnvInstance::Traffic(TrafficEnv::new(cfg)?))
            }
            EnvTemplate::Momdp { mdp, horizon } => Ok(EnvInstance::Momdp(MoMdpEnv::new(
                mdp.clone(),
                *horizon,
                seed,
            )?)),
        }
    }
}

/// Concrete environment behind a uniform face, avoiding trait objects.
enum EnvInstance {
    Traffic(TrafficEnv),
    Momdp(MoMdpEnv),
}

impl Environment for EnvInstance {
    fn n_states(&self) -> usize {
        match self {
            EnvInstance::Traffic(e) => e.n_states(),
            EnvInstance::Momdp(e) => e.n_states(),
        }
    }
    fn n_actions(&self) -> usize {
        match self {
            EnvInstance::Traffic(e) => e.n_actions(),
            EnvInstance::Momdp(e) => e.n_actions(),
        }
    }
    fn n_objectives(&self) -> usize {
        match self {
            EnvInstance::Traffic(e) => e.n_objectives(),
            EnvInstance::Momdp(e) => e.n_objectives(),
        }
    }
    fn horizon(&self) -> usize {
        match self {
            EnvInstance::Traffic(e) => e.horizon(),
            EnvInstance::Momdp(e) => e.horizon(),
        }
    }
    fn reset(&mut self) -> usize {
        match self {
            EnvInstance::Traffic(e) => e.reset(),
            EnvInstance::Momdp(e) => e.reset(),
        }
    }
    fn step(&mut self, action: usize) -> SampledStep {
        match self {
            EnvInstance::Traffic(e) => e.step(action),
            EnvInstance::Momdp(e) => e.step(action),
        }
    }
    fn reseed(&mut self, seed: u64) {
        match self {
            EnvInstance::Traffic(e) => e.reseed(seed),
            EnvInstance::Momdp(e) => e.reseed(seed),
        }
    }
}

/// A loaded, validated experiment ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    template: EnvTemplate,
    kinds: Vec<AlgorithmKind>,
    /// Training weights per algorithm (`None` for the utilitarian learner).
    train_weights: Vec<Option<GiniWeights>>,
    report_weights: GiniWeights,
}

impl Experiment {
    /// Validate `config`, resolving file references against `base_dir`.
    pub fn prepare(config: ExperimentConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        let template = match &config.env {
            EnvSpec::Traffic { config: cfg } => {
                cfg.validate()?;
                EnvTemplate::Traffic(cfg.clone())
            }
            EnvSpec::Preset { name } => EnvTemplate::Traffic(TrafficConfig::preset(name)?),
            EnvSpec::Momdp { path, horizon } => {
                if *horizon == 0 {
                    return Err(HarnessError::Config("momdp horizon must be at least 1".into()));
                }
                let resolved = base_dir.join(path);
                let text = std::fs::read_to_string(&resolved).map_err(|e| {
                    HarnessError::Config(format!("cannot read {}: {e}", resolved.display()))
                })?;
                let mdp: MoMdp = serde_json::from_str(&text)?;
                let problems = mdp.validate();
                if !problems.is_empty() {
                    return Err(HarnessError::Config(format!(
                        "{}: {}",
                        resolved.display(),
                        problems.join("; ")
                    )));
                }
                EnvTemplate::Momdp {
                    mdp,
                    horizon: *horizon,
                }
            }
        };
        let n = template.n_objectives();
        if config.algorithms.is_empty() {
            return Err(HarnessError::Config("at least one algorithm required".into()));
        }
        if config.n_seeds == 0 {
            return Err(HarnessError::Config("n_seeds must be at least 1".into()));
        }
        if config.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be at least 1".into()));
        }
        let mut kinds = Vec::new();
        let mut train_weights = Vec::new();
        for alg in &config.algorithms {
            let kind = AlgorithmKind::from_name(&alg.name).ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown algorithm '{}' (have: utilitarian_q, ggi_q, ggi_pg)",
                    alg.name
                ))
            })?;
            alg.learn.validate()?;
            let weights = match (kind, &alg.welfare) {
                (AlgorithmKind::UtilitarianQ, WelfareSpec::Utilitarian) => None,
                (AlgorithmKind::UtilitarianQ, _) => {
                    return Err(HarnessError::Config(format!(
                        "algorithm '{}' optimizes the utilitarian sum; set welfare kind 'utilitarian'",
                        alg.name
                    )))
                }
                (_, WelfareSpec::Ggi { weights }) => {
                    if weights.len() != n {
                        return Err(HarnessError::Config(format!(
                            "algorithm '{}' has {} weights for {} objectives",
                            alg.name,
                            weights.len(),
                            n
                        )));
                    }
                    Some(weights.clone())
                }
                (_, WelfareSpec::Maximin) => Some(GiniWeights::egalitarian(n, 1e-6)?),
                (_, WelfareSpec::Utilitarian) => {
                    return Err(HarnessError::Config(format!(
                        "algorithm '{}' needs ggi or maximin welfare",
                        alg.name
                    )))
                }
            };
            kinds.push(kind);
            train_weights.push(weights);
        }
        let report_weights = match &config.report_weights {
            Some(w) => {
                let w = GiniWeights::new(w.clone())?;
                if w.len() != n {
                    return Err(HarnessError::Config(format!(
                        "{} report weights for {n} objectives",
                        w.len()
                    )));
                }
                w
            }
            None => GiniWeights::default_for(n)?,
        };
        Ok(Experiment {
            config,
            template,
            kinds,
            train_weights,
            report_weights,
        })
    }

    /// Load a config file and prepare it (paths resolve against its parent).
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Experiment::prepare(config, base)
    }

    pub fn n_objectives(&self) -> usize {
        self.template.n_objectives()
    }

    pub fn report_weights(&self) -> &GiniWeights {
        &self.report_weights
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.config.output_path)
    }
}

/// Per-cell seed derivation. Training environment and evaluation streams
/// depend only on the seed index, pairing algorithms on identical
/// randomness; the learner stream also distinguishes the algorithm.
pub fn cell_seeds(master: u64, alg_index: usize, seed_index: u64) -> (u64, u64, u64) {
    let env = derive_seed(master, "train-env", &[seed_index]);
    let learn = derive_seed(master, "train-learn", &[alg_index as u64, seed_index]);
    let eval = derive_seed(master, "eval", &[seed_index]);
    (env, learn, eval)
}

/// Evaluation summary for one trained (algorithm, seed) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub seed: u64,
    pub per_objective_mean: Vec<f64>,
    pub per_objective_std: Vec<f64>,
    pub utilitarian_mean: f64,
    pub ggi_welfare: f64,
    pub min_objective: f64,
    /// Wallclock is reported on stderr and kept out of files, which must be
    /// byte-identical across reruns.
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub algorithm: String,
    pub alg_index: usize,
    pub seed_index: u64,
    pub outcome: Result<RunResult, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

pub struct ExperimentOutcome {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
}

/// Trained artifact for one cell, as written by the CLI `train` flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedArtifact {
    pub algorithm: String,
    pub seed: u64,
    pub policy: Policy,
    pub curve: Vec<f64>,
}

fn train_cell(
    experiment: &Experiment,
    alg_index: usize,
    seed_index: u64,
) -> Result<(Policy, Vec<f64>), HarnessError> {
    let (env_seed, learn_seed, _) =
        cell_seeds(experiment.config.master_seed, alg_index, seed_index);
    let mut env = experiment.template.build(env_seed)?;
    let mut learn = experiment.config.algorithms[alg_index].learn.clone();
    learn.seed = learn_seed;
    let kind = experiment.kinds[alg_index];
    let out = match kind {
        AlgorithmKind::UtilitarianQ => {
            let out = learner::utilitarian_q_learning(&mut env, &learn)?;
            (out.policy, out.curve)
        }
        AlgorithmKind::GgiQ => {
            let w = experiment.train_weights[alg_index]
                .as_ref()
                .expect("prepare() fixes weights for ggi algorithms");
            let out = learner::ggi_q_learning(&mut env, w, &learn)?;
            (out.policy, out.curve)
        }
        AlgorithmKind::GgiPg => {
            let w = experiment.train_weights[alg_index]
                .as_ref()
                .expect("prepare() fixes weights for ggi algorithms");
            let out = learner::ggi_policy_gradient(&mut env, w, &learn)?;
            (out.policy, out.curve)
        }
    };
    Ok(out)
}

fn run_cell(experiment: &Experiment, alg_index: usize, seed_index: u64) -> CellResult {
    let algorithm = experiment.config.algorithms[alg_index].name.clone();
    let started = Instant::now();
    let outcome = (|| -> Result<RunResult, HarnessError> {
        let (policy, _) = train_cell(experiment, alg_index, seed_index)?;
        let (_, _, eval_seed) =
            cell_seeds(experiment.config.master_seed, alg_index, seed_index);
        let mut env = experiment.template.build(0)?; // reseeded by evaluate_learned
        let report: EvalReport = evaluate_learned(
            &mut env,
            &policy,
            experiment.config.eval_episodes,
            eval_seed,
            &experiment.report_weights,
        )?;
        Ok(RunResult {
            algorithm: algorithm.clone(),
            seed: seed_index,
            per_objective_mean: report.per_objective_mean,
            per_objective_std: report.per_objective_std,
            utilitarian_mean: report.utilitarian_mean,
            ggi_welfare: report.ggi_welfare,
            min_objective: report.min_objective,
            wallclock_s: started.elapsed().as_secs_f64(),
        })
    })()
    .map_err(|e| e.to_string());
    CellResult {
        algorithm,
        alg_index,
        seed_index,
        outcome,
    }
}

/// How many cells may run at once; `None` means "let rayon decide".
fn parse_thread_cap(raw: Option<&str>) -> Result<Option<usize>, HarnessError> {
    match raw {
        None => Ok(None),
        Some(text) => text
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| HarnessError::Config(format!("FAIR_MOMDP_THREADS not a count: {text:?}"))),
    }
}

fn thread_cap_from_env() -> Result<Option<usize>, HarnessError> {
    parse_thread_cap(std::env::var("FAIR_MOMDP_THREADS").ok().as_deref())
}

/// Train and evaluate every (algorithm, seed) cell.
///
/// Failures abort only their own cell; the row is recorded with the error
/// text. Cell order in the output is (algorithm index, seed index)
/// regardless of execution interleaving.
pub fn run_experiment(experiment: &Experiment) -> Result<ExperimentOutcome, HarnessError> {
    let mut cells_idx = Vec::new();
    for alg_index in 0..experiment.config.algorithms.len() {
        for seed_index in 0..experiment.config.n_seeds as u64 {
            cells_idx.push((alg_index, seed_index));
        }
    }
    let cap = thread_cap_from_env()?;
    let cells: Vec<CellResult> = match cap {
        Some(0) | Some(1) => cells_idx
            .iter()
            .map(|&(a, s)| run_cell(experiment, a, s))
            .collect(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(|| {
                cells_idx
                    .par_iter()
                    .map(|&(a, s)| run_cell(experiment, a, s))
                    .collect()
            }),
        None => cells_idx
            .par_iter()
            .map(|&(a, s)| run_cell(experiment, a, s))
            .collect(),
    };
    let summary = summarize(experiment, &cells);
    Ok(ExperimentOutcome { cells, summary })
}

/// Mean and population standard deviation, shifted for exactness on
/// constant data.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let shift = values[0];
    let (mut d_sum, mut d2_sum) = (0.0, 0.0);
    for v in values {
        let d = v - shift;
        d_sum += d;
        d2_sum += d * d;
    }
    let var = (d2_sum / n - (d_sum / n).powi(2)).max(0.0);
    (mean, var.sqrt())
}

fn summarize(experiment: &Experiment, cells: &[CellResult]) -> Vec<SummaryRow> {
    let n = experiment.n_objectives();
    let mut rows = Vec::new();
    for (alg_index, alg) in experiment.config.algorithms.iter().enumerate() {
        let ok: Vec<&RunResult> = cells
            .iter()
            .filter(|c| c.alg_index == alg_index)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect();
        if ok.is_empty() {
            continue;
        }
        let mut push = |metric: String, values: Vec<f64>| {
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                algorithm: alg.name.clone(),
                metric,
                mean,
                std,
            });
        };
        for i in 0..n {
            push(
                format!("obj{i}_mean"),
                ok.iter().map(|r| r.per_objective_mean[i]).collect(),
            );
        }
        push(
            "utilitarian_mean".into(),
            ok.iter().map(|r| r.utilitarian_mean).collect(),
        );
        push(
            "ggi_welfare".into(),
            ok.iter().map(|r| r.ggi_welfare).collect(),
        );
        push(
            "min_objective".into(),
            ok.iter().map(|r| r.min_objective).collect(),
        );
    }
    rows
}

/// Format a float for CSV: shortest round-trip form, negative zero folded.
fn fmt_f64(v: f64) -> String {
    format!("{}", v + 0.0)
}

/// Fixed results schema: `algorithm,seed,status`, per-objective means, then
/// per-objective standard deviations, then the three aggregates.
pub fn results_csv_header(n_objectives: usize) -> String {
    let mut header = String::from("algorithm,seed,status");
    for i in 0..n_objectives {
        let _ = write!(header, ",obj{i}_mean");
    }
    for i in 0..n_objectives {
        let _ = write!(header, ",obj{i}_std");
    }
    header.push_str(",utilitarian_mean,ggi_welfare,min_objective");
    header
}

pub fn results_csv(experiment: &Experiment, cells: &[CellResult]) -> String {
    let n = experiment.n_objectives();
    let mut out = results_csv_header(n);
    out.push('\n');
    for cell in cells {
        match &cell.outcome {
            Ok(r) => {
                let _ = write!(out, "{},{},ok", r.algorithm, r.seed);
                for v in &r.per_objective_mean {
                    let _ = write!(out, ",{}", fmt_f64(*v));
                }
                for v in &r.per_objective_std {
                    let _ = write!(out, ",{}", fmt_f64(*v));
                }
                let _ = writeln!(
                    out,
                    ",{},{},{}",
                    fmt_f64(r.utilitarian_mean),
                    fmt_f64(r.ggi_welfare),
                    fmt_f64(r.min_objective)
                );
            }
            Err(_) => {
                let _ = write!(out, "{},{},failed", cell.algorithm, cell.seed_index);
                for _ in 0..(2 * n + 3) {
                    out.push(',');
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("algorithm,metric,mean,std\n");
    for row in summary {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.algorithm,
            row.metric,
            fmt_f64(row.mean),
            fmt_f64(row.std)
        );
    }
    out
}

/// Per-lane waiting-cost table in the shape a grouped bar chart needs:
/// one row per (lane, algorithm) with the cross-seed mean and standard
/// deviation of the lane's waiting cost (cost = negated mean reward).
pub fn emit_fig1_data(
    experiment: &Experiment,
    cells: &[CellResult],
) -> Result<String, HarnessError> {
    let n = experiment.n_objectives();
    let algorithms: Vec<(usize, &str)> = experiment
        .config
        .algorithms
        .iter()
        .enumerate()
        .map(|(i, a)| (i, a.name.as_str()))
        .collect();
    if algorithms.len() < 2 {
        return Err(HarnessError::Config(
            "waiting-cost comparison needs at least two algorithms".into(),
        ));
    }
    for cell in cells {
        if let Ok(r) = &cell.outcome {
            if r.per_objective_mean.len() != n {
                return Err(HarnessError::Config(format!(
                    "cell ({}, {}) has {} objectives, expected {n}",
                    cell.algorithm,
                    cell.seed_index,
                    r.per_objective_mean.len()
                )));
            }
        }
    }
    let mut out = String::from("lane,algorithm,mean_waiting_cost,std\n");
    for lane in 0..n {
        for &(alg_index, name) in &algorithms {
            let costs: Vec<f64> = cells
                .iter()
                .filter(|c| c.alg_index == alg_index)
                .filter_map(|c| c.outcome.as_ref().ok())
                .map(|r| -r.per_objective_mean[lane])
                .collect();
            if costs.is_empty() {
                return Err(HarnessError::Config(format!(
                    "algorithm '{name}' has no successful cells"
                )));
            }
            let (mean, std) = mean_std(&costs);
            let _ = writeln!(out, "{lane},{name},{},{}", fmt_f64(mean), fmt_f64(std));
        }
    }
    Ok(out)
}

/// Serialize with sorted keys (via `serde_json::Value`, whose object map is
/// ordered) and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

fn strip_wallclock(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("wallclock_s");
            for v in map.values_mut() {
                strip_wallclock(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                strip_wallclock(v);
            }
        }
        _ => {}
    }
}

fn results_json(outcome: &ExperimentOutcome) -> Result<String, HarnessError> {
    #[derive(Serialize)]
    struct CellJson<'a> {
        algorithm: &'a str,
        seed: u64,
        status: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<&'a str>,
        #[serde(skip_serializing_if = "Option::is_none")]
        result: Option<&'a RunResult>,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        cells: Vec<CellJson<'a>>,
        summary: &'a [SummaryRow],
    }
    let cells: Vec<CellJson> = outcome
        .cells
        .iter()
        .map(|c| match &c.outcome {
            Ok(r) => CellJson {
                algorithm: &c.algorithm,
                seed: c.seed_index,
                status: "ok",
                error: None,
                result: Some(r),
            },
            Err(e) => CellJson {
                algorithm: &c.algorithm,
                seed: c.seed_index,
                status: "failed",
                error: Some(e),
                result: None,
            },
        })
        .collect();
    let mut value = serde_json::to_value(Doc {
        cells,
        summary: &outcome.summary,
    })?;
    strip_wallclock(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

/// Write `results.csv`, `summary.csv`, `results.json` and (when two or more
/// algorithms ran) `fig1.csv` into `dir`.
pub fn write_outputs(
    experiment: &Experiment,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(experiment, &outcome.cells))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&outcome.summary))?;
    std::fs::write(dir.join("results.json"), results_json(outcome)?)?;
    if experiment.config.algorithms.len() >= 2 {
        std::fs::write(
            dir.join("fig1.csv"),
            emit_fig1_data(experiment, &outcome.cells)?,
        )?;
    }
    Ok(())
}

/// Train every cell and write one policy artifact per cell into `dir`.
pub fn train_artifacts(experiment: &Experiment, dir: &Path) -> Result<usize, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = 0;
    for alg_index in 0..experiment.config.algorithms.len() {
        for seed_index in 0..experiment.config.n_seeds as u64 {
            let (policy, curve) = train_cell(experiment, alg_index, seed_index)?;
            let artifact = TrainedArtifact {
                algorithm: experiment.config.algorithms[alg_index].name.clone(),
                seed: seed_index,
                policy,
                curve,
            };
            let name = format!(
                "policy_{}_{seed_index}.json",
                experiment.config.algorithms[alg_index].name
            );
            std::fs::write(dir.join(name), to_sorted_json(&artifact)?)?;
            written += 1;
        }
    }
    Ok(written)
}

/// Evaluate a stored policy artifact on the experiment's environment.
pub fn evaluate_artifact(
    experiment: &Experiment,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let mut env = experiment.template.build(0)?;
    Ok(evaluate_learned(
        &mut env,
        policy,
        episodes,
        seed,
        &experiment.report_weights,
    )?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanVsOracleConfig {
    pub n_instances: usize,
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_objectives: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanVsOracleReport {
    pub n_instances: usize,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
    pub failures: Vec<String>,
}

/// Cross-validate the exact planner against brute-force enumeration on
/// random instances; per-instance failures are recorded, not fatal.
pub fn run_plan_vs_oracle(cfg: &PlanVsOracleConfig) -> Result<PlanVsOracleReport, HarnessError> {
    let weights = GiniWeights::default_for(cfg.n_objectives)?;
    let mut max_abs_gap: f64 = 0.0;
    let mut max_rel_gap: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..cfg.n_instances {
        let instance_seed = derive_seed(cfg.seed, "plan-vs-oracle", &[i as u64]);
        let mdp = crate::momdp::random_mdp(
            instance_seed,
            cfg.n_states,
            cfg.n_actions,
            cfg.n_objectives,
        );
        let run = || -> Result<(f64, f64), HarnessError> {
            let plan = planner::ggi_plan(&mdp, &weights)?;
            if plan.status != planner::PlanStatus::Optimal {
                return Err(HarnessError::Config(format!(
                    "planner status {:?}",
                    plan.status
                )));
            }
            let (oracle, _) = planner::oracle_ggi_optimum(&mdp, &weights)?;
            Ok((plan.welfare, oracle))
        };
        match run() {
            Ok((plan, oracle)) => {
                let abs = (plan - oracle).abs();
                max_abs_gap = max_abs_gap.max(abs);
                max_rel_gap = max_rel_gap.max(abs / (1.0 + oracle.abs()));
            }
            Err(e) => failures.push(format!("instance {i}: {e}")),
        }
    }
    Ok(PlanVsOracleReport {
        n_instances: cfg.n_instances,
        max_abs_gap,
        max_rel_gap,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momdp::random_mdp;

    fn tiny_momdp_experiment(dir: &Path, algorithms: Vec<AlgorithmSpec>) -> Experiment {
        let mdp = random_mdp(50, 3, 2, 2);
        let mdp_path = dir.join("model.json");
        std::fs::write(&mdp_path, serde_json::to_string(&mdp).unwrap()).unwrap();
        let config = ExperimentConfig {
            env: EnvSpec::Momdp {
                path: "model.json".into(),
                horizon: 10,
            },
            algorithms,
            n_seeds: 2,
            eval_episodes: 5,
            output_path: dir.join("out").to_string_lossy().into_owned(),
            master_seed: 7,
            report_weights: None,
        };
        Experiment::prepare(config, dir).unwrap()
    }

    fn q_spec(name: &str) -> AlgorithmSpec {
        let welfare = match name {
            "utilitarian_q" => WelfareSpec::Utilitarian,
            _ => WelfareSpec::Ggi {
                weights: GiniWeights::default_for(2).unwrap(),
            },
        };
        AlgorithmSpec {
            name: name.into(),
            welfare,
            learn: LearnConfig {
                episodes: 30,
                steps_per_episode: 10,
                alpha_init: 0.1,
                alpha_tau: 1e4,
                epsilon_init: 1.0,
                epsilon_final: 0.1,
                gamma: 0.9,
                seed: 0,
                batch_size: 4,
            },
        }
    }

    #[test]
    fn prepare_rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let mdp = random_mdp(51, 2, 2, 2);
        std::fs::write(
            dir.path().join("model.json"),
            serde_json::to_string(&mdp).unwrap(),
        )
        .unwrap();
        let base = ExperimentConfig {
            env: EnvSpec::Momdp {
                path: "model.json".into(),
                horizon: 5,
            },
            algorithms: vec![q_spec("utilitarian_q")],
            n_seeds: 1,
            eval_episodes: 1,
            output_path: "out".into(),
            master_seed: 0,
            report_weights: None,
        };
        assert!(Experiment::prepare(base.clone(), dir.path()).is_ok());

        let mut cfg = base.clone();
        cfg.algorithms.clear();
        assert!(Experiment::prepare(cfg, dir.path()).is_err());

        let mut cfg = base.clone();
        cfg.algorithms[0].name = "dqn".into();
        assert!(Experiment::prepare(cfg, dir.path()).is_err());

        let mut cfg = base.clone();
        cfg.algorithms[0].welfare = WelfareSpec::Maximin;
        assert!(Experiment::prepare(cfg, dir.path()).is_err(), "utilitarian_q + maximin");

        let mut cfg = base.clone();
        cfg.env = EnvSpec::Momdp {
            path: "missing.json".into(),
            horizon: 5,
        };
        assert!(Experiment::prepare(cfg, dir.path()).is_err());

        let mut cfg = base.clone();
        cfg.report_weights = Some(vec![0.9, 0.6, 0.3]);
        assert!(Experiment::prepare(cfg, dir.path()).is_err(), "weight count");

        let mut cfg = base;
        cfg.algorithms.push(q_spec("ggi_q"));
        cfg.algorithms[1].welfare = WelfareSpec::Ggi {
            weights: GiniWeights::new(vec![1.0]).unwrap(),
        };
        assert!(Experiment::prepare(cfg, dir.path()).is_err(), "ggi weight count");
    }

    #[test]
    fn one_algorithm_two_seeds_yields_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let experiment = tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q")]);
        let outcome = run_experiment(&experiment).unwrap();
        assert_eq!(outcome.cells.len(), 2);
        assert!(outcome.cells.iter().all(|c| c.outcome.is_ok()));
        // Summary: per-objective means + three aggregates for one algorithm.
        assert_eq!(outcome.summary.len(), 2 + 3);
        let csv = results_csv(&experiment, &outcome.cells);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn run_result_invariants_hold() {
        let dir = tempfile::tempdir().unwrap();
        let experiment =
            tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q"), q_spec("ggi_q")]);
        let outcome = run_experiment(&experiment).unwrap();
        for cell in &outcome.cells {
            let r = cell.outcome.as_ref().unwrap();
            let total: f64 = r.per_objective_mean.iter().sum();
            assert!((r.utilitarian_mean - total).abs() <= 1e-9);
            let ggi = crate::welfare::ggi(
                &crate::welfare::ValueVector::new(r.per_objective_mean.clone()).unwrap(),
                experiment.report_weights(),
            )
            .unwrap();
            assert!((r.ggi_welfare - ggi).abs() <= 1e-9);
        }
    }

    #[test]
    fn outputs_are_deterministic_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let experiment =
            tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q"), q_spec("ggi_pg")]);
        let a = run_experiment(&experiment).unwrap();
        let b = run_experiment(&experiment).unwrap();
        assert_eq!(
            results_csv(&experiment, &a.cells),
            results_csv(&experiment, &b.cells)
        );
        assert_eq!(summary_csv(&a.summary), summary_csv(&b.summary));
        assert_eq!(
            emit_fig1_data(&experiment, &a.cells).unwrap(),
            emit_fig1_data(&experiment, &b.cells).unwrap()
        );
        assert_eq!(results_json(&a).unwrap(), results_json(&b).unwrap());
    }

    #[test]
    fn csv_schema_is_pinned() {
        assert_eq!(
            results_csv_header(2),
            "algorithm,seed,status,obj0_mean,obj1_mean,obj0_std,obj1_std,utilitarian_mean,ggi_welfare,min_objective"
        );
        let dir = tempfile::tempdir().unwrap();
        let experiment = tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q")]);
        let outcome = run_experiment(&experiment).unwrap();
        let csv = results_csv(&experiment, &outcome.cells);
        assert!(csv.starts_with(
            "algorithm,seed,status,obj0_mean,obj1_mean,obj0_std,obj1_std,utilitarian_mean,ggi_welfare,min_objective\n"
        ));
        let summary = summary_csv(&outcome.summary);
        assert!(summary.starts_with("algorithm,metric,mean,std\n"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn fig1_rows_and_consistency() {
        let dir = tempfile::tempdir().unwrap();
        let experiment =
            tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q"), q_spec("ggi_q")]);
        let outcome = run_experiment(&experiment).unwrap();
        let fig1 = emit_fig1_data(&experiment, &outcome.cells).unwrap();
        let rows: Vec<&str> = fig1.lines().skip(1).collect();
        assert_eq!(rows.len(), 2 * 2, "objectives x algorithms");
        // Per algorithm, summed mean costs equal the mean negated
        // utilitarian value across seeds.
        for (alg_index, alg) in experiment.config.algorithms.iter().enumerate() {
            let total_cost: f64 = rows
                .iter()
                .filter(|r| r.split(',').nth(1) == Some(alg.name.as_str()))
                .map(|r| r.split(',').nth(2).unwrap().parse::<f64>().unwrap())
                .sum();
            let mean_util: f64 = outcome
                .cells
                .iter()
                .filter(|c| c.alg_index == alg_index)
                .map(|c| c.outcome.as_ref().unwrap().utilitarian_mean)
                .sum::<f64>()
                / experiment.config.n_seeds as f64;
            assert!((total_cost - (-mean_util)).abs() <= 1e-9);
        }

        let single = tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q")]);
        let single_out = run_experiment(&single).unwrap();
        assert!(emit_fig1_data(&single, &single_out.cells).is_err());
    }

    #[test]
    fn write_outputs_produces_the_file_set() {
        let dir = tempfile::tempdir().unwrap();
        let experiment =
            tiny_momdp_experiment(dir.path(), vec![q_spec("utilitarian_q"), q_spec("ggi_q")]);
        let outcome = run_experiment(&experiment).unwrap();
        let out = dir.path().join("artifacts");
        write_outputs(&experiment, &outcome, &out).unwrap();
        for name in ["results.csv", "summary.csv", "results.json", "fig1.csv"] {
            assert!(out.join(name).exists(), "{name}");
        }
        let json = std::fs::read_to_string(out.join("results.json")).unwrap();
        assert!(!json.contains("wallclock"), "timings must stay out of files");
    }

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(parse_thread_cap(None).unwrap(), None);
        assert_eq!(parse_thread_cap(Some("0")).unwrap(), Some(0));
        assert_eq!(parse_thread_cap(Some(" 4 ")).unwrap(), Some(4));
        assert!(parse_thread_cap(Some("many")).is_err());
    }

    #[test]
    fn paired_seeds_share_env_and_eval_streams() {
        let (env_a, learn_a, eval_a) = cell_seeds(9, 0, 3);
        let (env_b, learn_b, eval_b) = cell_seeds(9, 1, 3);
        assert_eq!(env_a, env_b, "training env stream pairs across algorithms");
        assert_eq!(eval_a, eval_b, "evaluation stream pairs across algorithms");
        assert_ne!(learn_a, learn_b, "learner streams stay distinct");
        let (env_c, _, eval_c) = cell_seeds(9, 0, 4);
        assert_ne!(env_a, env_c);
        assert_ne!(eval_a, eval_c);
    }

    #[test]
    fn plan_vs_oracle_campaign() {
        let empty = run_plan_vs_oracle(&PlanVsOracleConfig {
            n_instances: 0,
            seed: 0,
            n_states: 3,
            n_actions: 2,
            n_objectives: 2,
        })
        .unwrap();
        assert_eq!(empty.max_abs_gap, 0.0);
        assert!(empty.failures.is_empty());

        let cfg = PlanVsOracleConfig {
            n_instances: 5,
            seed: 11,
            n_states: 3,
            n_actions: 2,
            n_objectives: 2,
        };
        let report = run_plan_vs_oracle(&cfg).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert!(report.max_rel_gap <= 1e-6, "gap {}", report.max_rel_gap);
        let again = run_plan_vs_oracle(&cfg).unwrap();
        assert_eq!(report.max_abs_gap, again.max_abs_gap);
    }

    #[test]
    fn trained_artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let experiment = tiny_momdp_experiment(dir.path(), vec![q_spec("ggi_q")]);
        let out = dir.path().join("trained");
        let written = train_artifacts(&experiment, &out).unwrap();
        assert_eq!(written, 2);
        let text = std::fs::read_to_string(out.join("policy_ggi_q_0.json")).unwrap();
        let artifact: TrainedArtifact = serde_json::from_str(&text).unwrap();
        let report = evaluate_artifact(&experiment, &artifact.policy, 5, 1).unwrap();
        assert_eq!(report.per_objective_mean.len(), 2);
    }
}
