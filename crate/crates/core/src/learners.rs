//! Treatment-rule learners.
//!
//! Four ways to produce a [`TreatmentRule`] from a completed (imputed) cohort
//! and a fitted propensity model:
//!
//! - [`fit_zero_order`]: the better of the two universal rules by weighted
//!   value — the one-size-fits-all comparator;
//! - [`fit_rf_policy`]: one regression forest per arm, recommending the arm
//!   with the larger predicted reward;
//! - [`fit_rwl`]: residual weighted learning — residuals from a main-effects
//!   outcome model become classification weights, optimized with a ramp
//!   surrogate by difference-of-convex iterations from a hinge warm start;
//! - [`fit_earl`]: efficient augmentation relaxed learning — a doubly robust
//!   pseudo-contrast per subject, classified under a smooth logistic
//!   surrogate.
//!
//! RWL and EARL produce linear decision functions over the raw covariates
//! (features are standardized internally for optimization only). The ridge
//! penalty is chosen by inner cross-validation on the weighted value unless
//! fixed in the config.

use crate::cohort::{Arm, Cohort};
use crate::error::{Error, Result};
use crate::float;
use crate::forest::{Forest, ForestParams, PropensityModel};
use crate::matrix::Matrix;
use crate::optim::{
    linear_least_squares, solve_ramp_dc, solve_weighted_hinge, solve_weighted_logistic,
    LinearSolution, Standardizer, WeightedProblem,
};
use crate::rng::{derive_seed, derive_seed_indexed};
use crate::strata::StratumRule;
use crate::value::ipw_value;
use alloc::format;

use alloc::vec;
use alloc::vec::Vec;

/// A decision function from covariates to a treatment arm.
#[derive(Debug, Clone)]
pub enum TreatmentRule {
    /// One arm for everyone.
    Universal(Arm),
    /// `sign(weights . x + intercept)`, zero mapping to the tie default.
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        tie_default: Arm,
    },
    /// Arm with the larger predicted reward from per-arm regression forests.
    PairedForest {
        neg: Forest,
        pos: Forest,
        tie_default: Arm,
    },
    /// Lookup over binary-modifier strata (covariates > 0.5 count as set).
    StratumLookup { rule: StratumRule },
}

/// Anything that can map covariates to an arm.
pub trait Policy {
    fn decide(&self, x: &[f64]) -> Result<Arm>;
}

impl Policy for TreatmentRule {
    fn decide(&self, x: &[f64]) -> Result<Arm> {
        match self {
            TreatmentRule::Universal(arm) => Ok(*arm),
            TreatmentRule::Linear {
                weights,
                intercept,
                tie_default,
            } => {
                if weights.len() != x.len() {
                    return Err(Error::Argument(format!(
                        "rule expects {} covariates, got {}",
                        weights.len(),
                        x.len()
                    )));
                }
                let score: f64 =
                    intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                Ok(if score > 0.0 {
                    Arm::Pos
                } else if score < 0.0 {
                    Arm::Neg
                } else {
                    *tie_default
                })
            }
            TreatmentRule::PairedForest {
                neg,
                pos,
                tie_default,
            } => {
                let value_neg = neg.predict_value(x)?;
                let value_pos = pos.predict_value(x)?;
                Ok(if value_pos > value_neg {
                    Arm::Pos
                } else if value_neg > value_pos {
                    Arm::Neg
                } else {
                    *tie_default
                })
            }
            TreatmentRule::StratumLookup { rule } => {
                let stratum: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
                rule.arm_for(&stratum).ok_or_else(|| {
                    Error::Argument("stratum lookup rule does not cover this input".into())
                })
            }
        }
    }
}

/// Applies a rule to one covariate vector.
pub fn apply_rule(rule: &TreatmentRule, x: &[f64]) -> Result<Arm> {
    rule.decide(x)
}

/// Surrogate loss used by residual weighted learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Surrogate {
    /// Ramp loss by difference-of-convex iterations (default).
    RampDc,
    /// Plain weighted hinge.
    Hinge,
}

/// Outcome-model family used by RWL residuals and EARL augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OutcomeModelKind {
    RegressionForest,
    LinearLeastSquares,
}

/// Configuration shared by the RWL and EARL learners.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LearnerConfig {
    pub surrogate: Surrogate,
    /// Ridge penalty; `None` selects from `lambda_grid` by inner CV.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub inner_folds: usize,
    pub max_dc_iterations: usize,
    pub tolerance: f64,
    pub outcome_model: OutcomeModelKind,
    /// Forest parameters for forest-based outcome models.
    pub outcome_forest: ForestParams,
    pub tie_default: Arm,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            surrogate: Surrogate::RampDc,
            lambda: None,
            lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            inner_folds: 5,
            max_dc_iterations: 20,
            tolerance: 1e-6,
            outcome_model: OutcomeModelKind::RegressionForest,
            outcome_forest: ForestParams::default(),
            tie_default: Arm::Neg,
        }
    }
}

impl LearnerConfig {
    fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::Argument("lambda must be > 0".into()));
            }
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Argument("lambda_grid must be positive and non-empty".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::Argument("inner_folds must be >= 2".into()));
        }
        if self.max_dc_iterations == 0 {
            return Err(Error::Argument("max_dc_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Argument("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Fitted outcome model `E[Y | X]` (or `E[Y | X, A = a]` when fit per arm).
#[derive(Debug, Clone)]
pub enum OutcomeModel {
    Forest(Forest),
    Linear { weights: Vec<f64>, intercept: f64 },
}

impl OutcomeModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            OutcomeModel::Forest(f) => f.predict_value(x),
            OutcomeModel::Linear { weights, intercept } => {
                if weights.len() != x.len() {
                    return Err(Error::Argument("outcome model dimension mismatch".into()));
                }
                Ok(intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            }
        }
    }

    fn fit(
        x: &Matrix,
        y: &[f64],
        kind: OutcomeModelKind,
        forest_params: &ForestParams,
        seed: u64,
    ) -> Result<OutcomeModel> {
        match kind {
            OutcomeModelKind::RegressionForest => {
                Ok(OutcomeModel::Forest(Forest::fit_regressor(x, y, forest_params, seed)?))
            }
            OutcomeModelKind::LinearLeastSquares => {
                let (weights, intercept) = linear_least_squares(x, y)?;
                Ok(OutcomeModel::Linear { weights, intercept })
            }
        }
    }
}

/// Zero-order fit: the better universal rule plus both candidate values.
#[derive(Debug, Clone)]
pub struct ZeroOrderFit {
    pub rule: TreatmentRule,
    pub value_neg: f64,
    pub value_pos: f64,
}

/// Picks the universal rule with the larger weighted value.
pub fn fit_zero_order(
    cohort: &Cohort,
    propensity: &PropensityModel,
    normalized: bool,
    tie_default: Arm,
) -> Result<ZeroOrderFit> {
    let value_neg = ipw_value(cohort, &TreatmentRule::Universal(Arm::Neg), propensity, normalized)?;
    let value_pos = ipw_value(cohort, &TreatmentRule::Universal(Arm::Pos), propensity, normalized)?;
    let arm = if value_pos > value_neg {
        Arm::Pos
    } else if value_neg > value_pos {
        Arm::Neg
    } else {
        tie_default
    };
    Ok(ZeroOrderFit {
        rule: TreatmentRule::Universal(arm),
        value_neg,
        value_pos,
    })
}

/// Fits one regression forest per arm on `(X -> reward)` and recommends the
/// arm with the larger predicted reward.
pub fn fit_rf_policy(
    cohort: &Cohort,
    params: &ForestParams,
    tie_default: Arm,
    seed: u64,
) -> Result<TreatmentRule> {
    cohort.require_both_arms()?;
    let rewards = cohort.rewards()?;
    let mut fits: Vec<Forest> = Vec::with_capacity(2);
    for (arm, label) in [(Arm::Neg, "rf-policy-neg"), (Arm::Pos, "rf-policy-pos")] {
        let indices: Vec<usize> = cohort
            .subjects()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.treatment == arm)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < 2 * params.min_leaf {
            return Err(Error::Fit(format!(
                "arm {} has {} subjects, need at least {}",
                arm.sign(),
                indices.len(),
                2 * params.min_leaf
            )));
        }
        let sub = cohort.subset(&indices);
        let y: Vec<f64> = indices.iter().map(|&i| rewards[i]).collect();
        fits.push(Forest::fit_regressor(
            &sub.feature_matrix(),
            &y,
            params,
            derive_seed(seed, label),
        )?);
    }
    let pos = fits.pop().expect("two fits");
    let neg = fits.pop().expect("two fits");
    Ok(TreatmentRule::PairedForest {
        neg,
        pos,
        tie_default,
    })
}

/// A fitted linear rule with optimizer diagnostics.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub rule: TreatmentRule,
    /// False when the surrogate optimizer hit its iteration cap before the
    /// objective settled; the best iterate is still returned.
    pub converged: bool,
    pub lambda: f64,
    pub iterations: usize,
}

/// Per-subject inverse-propensity weights of the arm actually received.
fn received_propensities(cohort: &Cohort, propensity: &PropensityModel) -> Result<Vec<f64>> {
    cohort
        .subjects()
        .iter()
        .map(|s| propensity.prob_of(&s.covariates, s.treatment))
        .collect()
}

struct SurrogateFit<'a> {
    config: &'a LearnerConfig,
    use_logistic: bool,
}

impl SurrogateFit<'_> {
    fn solve(&self, x: &Matrix, weights: &[f64], labels: &[f64], lambda: f64) -> LinearSolution {
        let problem = WeightedProblem {
            x,
            weights,
            labels,
            lambda,
        };
        if self.use_logistic {
            solve_weighted_logistic(&problem, self.config.tolerance)
        } else {
            match self.config.surrogate {
                Surrogate::RampDc => {
                    solve_ramp_dc(&problem, self.config.max_dc_iterations, self.config.tolerance)
                }
                Surrogate::Hinge => solve_weighted_hinge(
                    &problem,
                    &vec![false; x.rows()],
                    None,
                    self.config.tolerance,
                ),
            }
        }
    }

    /// Ridge penalty by inner k-fold CV, maximizing the weighted value of the
    /// candidate rule on held-out subjects. Grid ties keep the smaller value.
    #[allow(clippy::too_many_arguments)]
    fn select_lambda(
        &self,
        cohort: &Cohort,
        propensity: &PropensityModel,
        x_std: &Matrix,
        standardizer: &Standardizer,
        weights: &[f64],
        labels: &[f64],
        seed: u64,
    ) -> Result<f64> {
        if let Some(l) = self.config.lambda {
            return Ok(l);
        }
        let folds = crate::cohort::kfold_split(
            cohort,
            self.config.inner_folds,
            derive_seed(seed, "inner-lambda-folds"),
        )?;
        let p = x_std.cols();
        let mut best: Option<(f64, f64)> = None; // (mean value, lambda)
        for &lambda in &self.config.lambda_grid {
            let mut total = 0.0;
            let mut usable = true;
            for fold in 0..folds.k() {
                let (train, test) = folds.split(fold);
                let mut data = Vec::with_capacity(train.len() * p);
                let mut w = Vec::with_capacity(train.len());
                let mut z = Vec::with_capacity(train.len());
                for &i in &train {
                    data.extend_from_slice(x_std.row(i));
                    w.push(weights[i]);
                    z.push(labels[i]);
                }
                if w.iter().sum::<f64>() <= 0.0 {
                    usable = false;
                    break;
                }
                let x_train = Matrix::new(train.len(), p, data)?;
                let sol = self.solve(&x_train, &w, &z, lambda);
                let (raw_w, raw_b) = standardizer.unstandardize(&sol.weights, sol.intercept);
                let rule = TreatmentRule::Linear {
                    weights: raw_w,
                    intercept: raw_b,
                    tie_default: self.config.tie_default,
                };
                match ipw_value(&cohort.subset(&test), &rule, propensity, true) {
                    Ok(v) => total += v,
                    Err(_) => {
                        usable = false;
                        break;
                    }
                }
            }
            if !usable {
                continue;
            }
            let mean = total / folds.k() as f64;
            if best.is_none_or(|(b, _)| mean > b) {
                best = Some((mean, lambda));
            }
        }
        best.map(|(_, l)| l).ok_or_else(|| {
            Error::Fit("no usable ridge penalty found during inner cross-validation".into())
        })
    }

    fn fit(
        &self,
        cohort: &Cohort,
        propensity: &PropensityModel,
        weights: &[f64],
        labels: &[f64],
        seed: u64,
    ) -> Result<LinearFit> {
        let x = cohort.feature_matrix();
        let standardizer = Standardizer::fit(&x);
        let x_std = standardizer.transform(&x);
        let lambda = self.select_lambda(
            cohort,
            propensity,
            &x_std,
            &standardizer,
            weights,
            labels,
            seed,
        )?;
        let sol = self.solve(&x_std, weights, labels, lambda);
        let (raw_w, raw_b) = standardizer.unstandardize(&sol.weights, sol.intercept);
        Ok(LinearFit {
            rule: TreatmentRule::Linear {
                weights: raw_w,
                intercept: raw_b,
                tie_default: self.config.tie_default,
            },
            converged: sol.converged,
            lambda,
            iterations: sol.iterations,
        })
    }
}

/// Residual weighted learning.
///
/// 1. fit a main-effects outcome model on all subjects;
/// 2. residual = observed reward minus its prediction;
/// 3. weighted surrogate classification with weight `|residual| / propensity`
///    and label `treatment * sign(residual)`.
pub fn fit_rwl(
    cohort: &Cohort,
    propensity: &PropensityModel,
    config: &LearnerConfig,
    seed: u64,
) -> Result<LinearFit> {
    config.validate()?;
    cohort.require_both_arms()?;
    let rewards = cohort.rewards()?;
    let x = cohort.feature_matrix();
    let outcome = OutcomeModel::fit(
        &x,
        &rewards,
        config.outcome_model,
        &config.outcome_forest,
        derive_seed(seed, "rwl-outcome"),
    )?;

    let n = cohort.len();
    let mut weights = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let received = received_propensities(cohort, propensity)?;
    // a residual is "zero" relative to the reward scale, so least-squares
    // jitter does not masquerade as signal
    let reward_scale = rewards.iter().fold(0.0f64, |m, &y| m.max(float::abs(y)));
    let threshold = 1e-7 * (1.0 + reward_scale);
    let mut any_residual = false;
    for (i, s) in cohort.subjects().iter().enumerate() {
        let residual = rewards[i] - outcome.predict(&s.covariates)?;
        if float::abs(residual) > threshold {
            any_residual = true;
        }
        weights.push(float::abs(residual) / received[i]);
        labels.push(if residual >= 0.0 {
            s.treatment.sign()
        } else {
            -s.treatment.sign()
        });
    }
    if !any_residual {
        return Err(Error::Degenerate(
            "all outcome residuals are zero; fall back to the zero-order rule".into(),
        ));
    }

    SurrogateFit {
        config,
        use_logistic: false,
    }
    .fit(cohort, propensity, &weights, &labels, seed)
}

/// Doubly robust pseudo-contrast per subject:
/// `mu(x,+1) - mu(x,-1) + a * (y - mu(x,a)) / propensity(a; x)`.
///
/// Exposed so the augmentation term can be studied with externally supplied
/// (for instance deliberately misspecified) models.
pub fn pseudo_contrasts(
    cohort: &Cohort,
    propensity: &PropensityModel,
    outcome_neg: &OutcomeModel,
    outcome_pos: &OutcomeModel,
) -> Result<Vec<f64>> {
    let rewards = cohort.rewards()?;
    let received = received_propensities(cohort, propensity)?;
    cohort
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mu_neg = outcome_neg.predict(&s.covariates)?;
            let mu_pos = outcome_pos.predict(&s.covariates)?;
            let mu_received = match s.treatment {
                Arm::Neg => mu_neg,
                Arm::Pos => mu_pos,
            };
            Ok(mu_pos - mu_neg + s.treatment.sign() * (rewards[i] - mu_received) / received[i])
        })
        .collect()
}

/// Efficient augmentation relaxed learning.
///
/// Arm-specific outcome models feed the doubly robust pseudo-contrast; the
/// rule is the linear classifier of `sign(contrast)` weighted by
/// `|contrast|` under a smooth logistic surrogate.
pub fn fit_earl(
    cohort: &Cohort,
    propensity: &PropensityModel,
    config: &LearnerConfig,
    seed: u64,
) -> Result<LinearFit> {
    config.validate()?;
    cohort.require_both_arms()?;
    let rewards = cohort.rewards()?;
    let mut models: Vec<OutcomeModel> = Vec::with_capacity(2);
    for (arm, label) in [(Arm::Neg, "earl-outcome-neg"), (Arm::Pos, "earl-outcome-pos")] {
        let indices: Vec<usize> = cohort
            .subjects()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.treatment == arm)
            .map(|(i, _)| i)
            .collect();
        let sub = cohort.subset(&indices);
        let y: Vec<f64> = indices.iter().map(|&i| rewards[i]).collect();
        models.push(OutcomeModel::fit(
            &sub.feature_matrix(),
            &y,
            config.outcome_model,
            &config.outcome_forest,
            derive_seed(seed, label),
        )?);
    }
    let outcome_pos = models.pop().expect("two models");
    let outcome_neg = models.pop().expect("two models");

    let contrasts = pseudo_contrasts(cohort, propensity, &outcome_neg, &outcome_pos)?;
    let reward_scale = rewards.iter().fold(0.0f64, |m, &y| m.max(float::abs(y)));
    let threshold = 1e-7 * (1.0 + reward_scale);
    if contrasts.iter().all(|c| float::abs(*c) <= threshold) {
        return Err(Error::Degenerate("all pseudo-contrasts are zero".into()));
    }
    let weights: Vec<f64> = contrasts.iter().map(|c| float::abs(*c)).collect();
    let labels: Vec<f64> = contrasts
        .iter()
        .map(|&c| if c >= 0.0 { 1.0 } else { -1.0 })
        .collect();

    SurrogateFit {
        config,
        use_logistic: true,
    }
    .fit(cohort, propensity, &weights, &labels, seed)
}

/// Seed helper so per-(learner, fold) fits stay order-independent.
pub(crate) fn learner_seed(master: u64, learner: &str, fold: usize) -> u64 {
    derive_seed_indexed(master, learner, fold as u64)
}
