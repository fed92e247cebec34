//! Command-line front end: exact planning, brute-force cross-checks,
//! experiment training/evaluation and model validation.
//!
//! Machine-readable output goes to stdout as JSON with sorted keys;
//! progress and timings go to stderr so files and pipes stay
//! byte-deterministic.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use fair_momdp::harness::{
    self, evaluate_artifact, run_experiment, run_plan_vs_oracle, to_sorted_json, train_artifacts,
    Experiment, PlanVsOracleConfig, TrainedArtifact,
};
use fair_momdp::momdp::MoMdp;
use fair_momdp::planner::{self, deterministic_policy_count};
use fair_momdp::{GiniWeights, Policy};

#[derive(Parser)]
#[command(
    name = "fair-momdp",
    version,
    about = "Fair multiobjective sequential decision making: exact GGI planning, tabular learners and a queueing benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model exactly for the GGI-optimal stochastic policy.
    Plan {
        /// Model JSON file.
        mdp: PathBuf,
        /// Comma-separated strictly decreasing positive weights.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<f64>>,
        /// Optimize the worst objective instead (near-egalitarian weights).
        #[arg(long, conflicts_with = "weights")]
        maximin: bool,
    },
    /// Brute-force the same optimum by enumerating deterministic policies.
    Oracle {
        mdp: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<f64>>,
    },
    /// Train every (algorithm, seed) cell and store policy artifacts.
    Train {
        experiment: PathBuf,
        /// Directory for policy_<algorithm>_<seed>.json artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full train/evaluate grid and write CSV/JSON result tables.
    Bench {
        experiment: PathBuf,
        /// Override the config's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a stored policy on an experiment's environment.
    Eval {
        experiment: PathBuf,
        /// Policy artifact (or bare action-probability table) JSON.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a model file for stochasticity and shape problems.
    Validate { mdp: PathBuf },
    /// Compare the planner against enumeration on random instances.
    Crosscheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 3)]
        objectives: usize,
    },
}

fn load_mdp(path: &Path) -> Result<MoMdp, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mdp: MoMdp =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(mdp)
}

fn load_valid_mdp(path: &Path) -> Result<MoMdp, String> {
    let mdp = load_mdp(path)?;
    let problems = mdp.validate();
    if !problems.is_empty() {
        return Err(format!("{}: {}", path.display(), problems.join("; ")));
    }
    Ok(mdp)
}

fn resolve_weights(n: usize, weights: Option<Vec<f64>>) -> Result<GiniWeights, String> {
    match weights {
        Some(w) => {
            if w.len() != n {
                return Err(format!("{} weights for {n} objectives", w.len()));
            }
            GiniWeights::new(w).map_err(|e| e.to_string())
        }
        None => GiniWeights::default_for(n).map_err(|e| e.to_string()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Plan {
            mdp,
            weights,
            maximin,
        } => {
            let model = load_valid_mdp(&mdp)?;
            let result = if maximin {
                planner::maximin_plan(&model).map_err(|e| e.to_string())?
            } else {
                let w = resolve_weights(model.n_objectives, weights)?;
                planner::ggi_plan(&model, &w).map_err(|e| e.to_string())?
            };
            print!("{}", to_sorted_json(&result).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { mdp, weights } => {
            let model = load_valid_mdp(&mdp)?;
            let w = resolve_weights(model.n_objectives, weights)?;
            let count = deterministic_policy_count(&model)
                .map_err(|e| e.to_string())?;
            let (welfare, value) =
                planner::oracle_ggi_optimum(&model, &w).map_err(|e| e.to_string())?;
            #[derive(serde::Serialize)]
            struct OracleOut {
                welfare: f64,
                value: Vec<f64>,
                n_deterministic_policies: u64,
            }
            let out = OracleOut {
                welfare,
                value: value.into_vec(),
                n_deterministic_policies: count,
            };
            print!("{}", to_sorted_json(&out).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { experiment, out } => {
            let experiment = Experiment::load(&experiment).map_err(|e| e.to_string())?;
            let started = Instant::now();
            let written = train_artifacts(&experiment, &out).map_err(|e| e.to_string())?;
            eprintln!(
                "wrote {written} policy artifacts to {} in {:.1}s",
                out.display(),
                started.elapsed().as_secs_f64()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { experiment, out } => {
            let experiment = Experiment::load(&experiment).map_err(|e| e.to_string())?;
            let dir = out.unwrap_or_else(|| experiment.output_dir());
            let started = Instant::now();
            let outcome = run_experiment(&experiment).map_err(|e| e.to_string())?;
            harness::write_outputs(&experiment, &outcome, &dir).map_err(|e| e.to_string())?;
            let failed = outcome
                .cells
                .iter()
                .filter(|c| c.outcome.is_err())
                .count();
            for cell in &outcome.cells {
                if let Err(e) = &cell.outcome {
                    eprintln!("cell ({}, {}) failed: {e}", cell.algorithm, cell.seed_index);
                }
            }
            eprintln!(
                "{} cells ({failed} failed) in {:.1}s; tables in {}",
                outcome.cells.len(),
                started.elapsed().as_secs_f64(),
                dir.display()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Eval {
            experiment,
            policy,
            episodes,
            seed,
        } => {
            let experiment = Experiment::load(&experiment).map_err(|e| e.to_string())?;
            let text = std::fs::read_to_string(&policy)
                .map_err(|e| format!("cannot read {}: {e}", policy.display()))?;
            let policy: Policy = match serde_json::from_str::<TrainedArtifact>(&text) {
                Ok(artifact) => artifact.policy,
                Err(_) => serde_json::from_str(&text)
                    .map_err(|e| format!("not a policy artifact: {e}"))?,
            };
            let report = evaluate_artifact(&experiment, &policy, episodes, seed)
                .map_err(|e| e.to_string())?;
            print!("{}", to_sorted_json(&report).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { mdp } => {
            let model = load_mdp(&mdp)?;
            let problems = model.validate();
            if problems.is_empty() {
                eprintln!(
                    "ok: {} states, {} actions, {} objectives, gamma {}",
                    model.n_states, model.n_actions, model.n_objectives, model.gamma
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for problem in &problems {
                    eprintln!("problem: {problem}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Crosscheck {
            instances,
            seed,
            states,
            actions,
            objectives,
        } => {
            let report = run_plan_vs_oracle(&PlanVsOracleConfig {
                n_instances: instances,
                seed,
                n_states: states,
                n_actions: actions,
                n_objectives: objectives,
            })
            .map_err(|e| e.to_string())?;
            let ok = report.failures.is_empty();
            print!("{}", to_sorted_json(&report).map_err(|e| e.to_string())?);
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
