//! Estimation and evaluation of individualized treatment rules for a binary
//! treatment with right-censored outcomes.
//!
//! The crate covers the full pipeline: cohort data model and fold handling,
//! contingency-table standardization for stratified toy populations, a
//! self-contained random forest (classification, probability, regression,
//! out-of-bag permutation importance), survival-tree imputation of censored
//! reward times, four rule learners (zero-order, paired regression forests,
//! residual weighted learning, efficient augmentation relaxed learning), and
//! inverse-probability-weighted value estimation with cross-validated
//! comparison against the zero-order comparator.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm` feature
//! instead of the default `std` feature for no_std targets. All randomized
//! procedures are deterministic functions of an explicit `u64` seed.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("itr-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod cohort;
pub mod error;
mod float;
pub mod forest;
pub mod km;
pub mod learners;
pub mod matrix;
mod optim;
pub mod rist;
pub mod rng;
pub mod strata;
pub mod synth;
pub mod value;

pub use cohort::{kfold_split, Arm, Cohort, FoldAssignment, Subject};
pub use error::{Error, Result};
pub use forest::{
    fit_propensity, gini_impurity, oob_permutation_importance, select_top_variables, Forest,
    ForestMode, ForestParams, ImportanceScores, Node, PropensityEstimator, PropensityModel,
    SelectionReport, Target, Tree,
};
pub use km::KmCurve;
pub use learners::{
    apply_rule, fit_earl, fit_rf_policy, fit_rwl, fit_zero_order, pseudo_contrasts, LearnerConfig,
    LinearFit, OutcomeModel, OutcomeModelKind, Policy, Surrogate, TreatmentRule, ZeroOrderFit,
};
pub use matrix::Matrix;
pub use rist::{
    complete_cohort, fit_rist, impute_censored, impute_once, logrank_statistic, RistModel,
    RistParams, SurvTree,
};
pub use rng::{derive_seed, derive_seed_indexed, Rng};
pub use strata::{table1, table3, CellCounts, StratifiedTable, StratumRule};
pub use synth::{
    generate_cohort, generate_from_table, generate_scenario, true_value, Assignment, CensoringLaw,
    CovariateLaw, OracleRule, RewardLaw, ScenarioFunction, ScenarioSpec, ScenarioTruth,
};
pub use value::{
    compare_to_zero_order, cross_validated_value, evaluate_learners, ipw_value, Comparison,
    ComparisonRow, CvConfig, Difference, EvalRun, FoldDiagnostics, LearnerSpec, ValueEstimate,
};
