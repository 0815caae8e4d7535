//! Command-line interface definition and dispatch.

use crate::commands;
use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use itr_core::{Arm, ForestParams, LearnerConfig, OutcomeModelKind, Surrogate};
use std::path::PathBuf;

pub const DEFAULT_SEED: u64 = 20240101;

#[derive(Parser)]
#[command(
    name = "itr",
    version,
    about = "Estimate and evaluate individualized treatment rules for right-censored outcomes"
)]
pub struct Cli {
    /// Master seed for all randomized procedures (pipeline: overrides the
    /// config seed when given)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieArm {
    /// The -1 arm
    Neg,
    /// The +1 arm
    Pos,
}

impl From<TieArm> for Arm {
    fn from(v: TieArm) -> Arm {
        match v {
            TieArm::Neg => Arm::Neg,
            TieArm::Pos => Arm::Pos,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SurrogateArg {
    RampDc,
    Hinge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutcomeModelArg {
    Forest,
    Linear,
}

#[derive(Subcommand)]
pub enum Command {
    /// Stratified-table analysis: per-stratum risks, standardized risks, and
    /// the tailored rule (built-in `table1` / `table3`, or a table CSV path)
    Toy {
        /// `table1`, `table3`, or a CSV with modifier columns plus arm/died/alive
        table: String,
        /// Arm picked when a stratum's risks tie exactly
        #[arg(long, value_enum, default_value_t = TieArm::Neg)]
        tie_default: TieArm,
    },
    /// Draw a synthetic cohort from a scenario spec and write it as CSV
    Simulate {
        /// Scenario spec JSON (exclusive with --builtin)
        #[arg(long, conflicts_with = "builtin")]
        spec: Option<PathBuf>,
        /// Built-in scenario name (see --list)
        #[arg(long)]
        builtin: Option<String>,
        /// List the built-in scenario names and exit
        #[arg(long)]
        list: bool,
        /// Number of subjects
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Output cohort CSV
        #[arg(long, required_unless_present = "list")]
        out: Option<PathBuf>,
        /// Also write the oracle rule values to this JSON file
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Impute reward times for subjects censored before the horizon
    Impute {
        #[arg(long)]
        input: PathBuf,
        /// Schema-config JSON (column mapping); defaults assume itr layout
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Restriction horizon in days
        #[arg(long)]
        horizon: f64,
        /// Survival trees per ensemble
        #[arg(long, default_value_t = 50)]
        trees: usize,
        /// Fit-and-impute cycles
        #[arg(long, default_value_t = 2)]
        cycles: usize,
        /// Random thresholds per candidate covariate
        #[arg(long, default_value_t = 10)]
        splits: usize,
        /// Minimum events per leaf
        #[arg(long, default_value_t = 1)]
        min_events: usize,
        /// Output CSV with completed rewards
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one treatment rule on the full cohort and save it as JSON
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Learner: zero, rf, rwl, or earl
        #[arg(long)]
        learner: String,
        #[arg(long)]
        horizon: f64,
        /// Output rule JSON
        #[arg(long)]
        out: PathBuf,
        /// Trees per forest (propensity, policy, and outcome forests)
        #[arg(long, default_value_t = 200)]
        trees: usize,
        /// Fixed ridge penalty (default: inner cross-validation)
        #[arg(long)]
        lambda: Option<f64>,
        /// RWL surrogate loss
        #[arg(long, value_enum, default_value_t = SurrogateArg::RampDc)]
        surrogate: SurrogateArg,
        /// Outcome-model family for RWL/EARL
        #[arg(long, value_enum, default_value_t = OutcomeModelArg::Forest)]
        outcome_model: OutcomeModelArg,
        /// Propensity clipping bound
        #[arg(long, default_value_t = 0.01)]
        clip: f64,
        #[arg(long, value_enum, default_value_t = TieArm::Neg)]
        tie_default: TieArm,
    },
    /// Cross-validated permutation-importance ranking of the covariates
    Importance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Optional restriction horizon for the screening outcome
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Covariates to keep (default: min(10, p))
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        /// Output CSV with per-fold and aggregate ranks
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated value of a saved rule on a cohort
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Rule JSON produced by `fit`
        #[arg(long)]
        rule: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        /// Use the unnormalized estimator instead of the Hajek form
        #[arg(long)]
        unnormalized: bool,
        #[arg(long, default_value_t = 0.01)]
        clip: f64,
        /// Optional output CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: variable screening, per-learner cross-validated values,
    /// and the comparison report for every configured horizon
    Pipeline {
        /// Run-config JSON
        #[arg(long)]
        config: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Toy { table, tie_default } => commands::cmd_toy(&table, tie_default.into()),
        Command::Simulate {
            spec,
            builtin,
            list,
            n,
            out,
            truth,
        } => {
            if list {
                for name in itr_core::ScenarioSpec::builtin_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            let out = out.expect("clap enforces --out unless --list");
            commands::ensure_parent(&out)?;
            commands::cmd_simulate(
                spec.as_deref(),
                builtin.as_deref(),
                n,
                seed,
                &out,
                truth.as_deref(),
            )
        }
        Command::Impute {
            input,
            schema,
            horizon,
            trees,
            cycles,
            splits,
            min_events,
            out,
        } => {
            commands::ensure_parent(&out)?;
            commands::cmd_impute(
                &input,
                schema.as_deref(),
                horizon,
                trees,
                cycles,
                splits,
                min_events,
                seed,
                &out,
            )
        }
        Command::Fit {
            input,
            schema,
            learner,
            horizon,
            out,
            trees,
            lambda,
            surrogate,
            outcome_model,
            clip,
            tie_default,
        } => {
            commands::ensure_parent(&out)?;
            let forest = ForestParams {
                n_trees: trees,
                ..ForestParams::default()
            };
            let learner_config = LearnerConfig {
                surrogate: match surrogate {
                    SurrogateArg::RampDc => Surrogate::RampDc,
                    SurrogateArg::Hinge => Surrogate::Hinge,
                },
                lambda,
                outcome_model: match outcome_model {
                    OutcomeModelArg::Forest => OutcomeModelKind::RegressionForest,
                    OutcomeModelArg::Linear => OutcomeModelKind::LinearLeastSquares,
                },
                outcome_forest: forest.clone(),
                tie_default: tie_default.into(),
                ..LearnerConfig::default()
            };
            commands::cmd_fit(
                &input,
                schema.as_deref(),
                &learner,
                horizon,
                seed,
                &out,
                &forest,
                &learner_config,
                clip,
            )
        }
        Command::Importance {
            input,
            schema,
            horizon,
            folds,
            top,
            trees,
            out,
        } => {
            commands::ensure_parent(&out)?;
            let forest = ForestParams {
                n_trees: trees,
                ..ForestParams::default()
            };
            commands::cmd_importance(
                &input,
                schema.as_deref(),
                horizon,
                folds,
                top,
                &forest,
                seed,
                &out,
            )
        }
        Command::Evaluate {
            input,
            schema,
            rule,
            horizon,
            k,
            trees,
            unnormalized,
            clip,
            out,
        } => {
            if let Some(path) = &out {
                commands::ensure_parent(path)?;
            }
            let forest = ForestParams {
                n_trees: trees,
                ..ForestParams::default()
            };
            commands::cmd_evaluate(
                &input,
                schema.as_deref(),
                &rule,
                horizon,
                k,
                seed,
                &forest,
                !unnormalized,
                clip,
                out.as_deref(),
            )
        }
        Command::Pipeline { config } => commands::cmd_pipeline(&config, cli.seed),
    }
}
