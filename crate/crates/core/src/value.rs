//! Inverse-probability-weighted value estimation and cross-validated
//! comparison of rule learners against the zero-order comparator.
//!
//! The weighted value of a rule is the propensity-reweighted mean reward over
//! subjects whose observed arm matches the rule's recommendation. The default
//! is the weight-normalized (Hajek) form; the unnormalized form divides by n
//! instead. Cross-validation fits propensity, imputation, and learner on the
//! training folds and evaluates the fitted rule on the held-out fold with the
//! training-fitted models carried over. Fold values give the point estimate,
//! its standard error, and paired-difference intervals against the
//! zero-order rule. Larger values (more outcome-free days) are better.

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::float;
use crate::forest::{fit_propensity, ForestParams, PropensityModel};
use crate::learners::{
    fit_earl, fit_rf_policy, fit_rwl, fit_zero_order, learner_seed, LearnerConfig, Policy,
    TreatmentRule,
};
use crate::rist::{complete_cohort, impute_once, RistParams};
use crate::rng::{derive_seed, derive_seed_indexed};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Weighted value of a rule on a completed cohort.
///
/// Normalized: `sum(y w m) / sum(w m)`; unnormalized: `mean(y w m)` — where
/// `m` indicates the observed arm matches the rule and `w` is the inverse
/// clipped propensity of the arm actually received.
pub fn ipw_value(
    cohort: &Cohort,
    rule: &dyn Policy,
    propensity: &PropensityModel,
    normalized: bool,
) -> Result<f64> {
    let rewards = cohort.rewards()?;
    let mut numerator = 0.0;
    let mut weight_sum = 0.0;
    let mut matched = 0usize;
    for (s, &y) in cohort.subjects().iter().zip(&rewards) {
        if rule.decide(&s.covariates)? != s.treatment {
            continue;
        }
        let weight = 1.0 / propensity.prob_of(&s.covariates, s.treatment)?;
        numerator += y * weight;
        weight_sum += weight;
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::Eval(
            "no subject's observed arm matches the rule; value undefined".into(),
        ));
    }
    Ok(if normalized {
        numerator / weight_sum
    } else {
        numerator / cohort.len() as f64
    })
}

/// Point value with fold-based uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_folds: usize,
    pub fold_values: Vec<f64>,
    /// Difference versus the zero-order comparator, once compared.
    pub comparator_difference: Option<Difference>,
}

/// Paired difference with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn summarize_folds(fold_values: Vec<f64>) -> ValueEstimate {
    let k = fold_values.len();
    let point = fold_values.iter().sum::<f64>() / k as f64;
    let var = fold_values
        .iter()
        .map(|v| (v - point) * (v - point))
        .sum::<f64>()
        / (k as f64 - 1.0);
    let se = float::sqrt(var / k as f64);
    ValueEstimate {
        point,
        se,
        ci_low: point - 1.96 * se,
        ci_high: point + 1.96 * se,
        n_folds: k,
        fold_values,
        comparator_difference: None,
    }
}

/// Which learner to evaluate under cross-validation.
#[derive(Debug, Clone)]
pub enum LearnerSpec {
    /// Evaluate a fixed, pre-built rule.
    Fixed(TreatmentRule),
    ZeroOrder,
    RfPolicy,
    Rwl,
    Earl,
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Fixed(_) => "fixed",
            LearnerSpec::ZeroOrder => "zero",
            LearnerSpec::RfPolicy => "rf",
            LearnerSpec::Rwl => "rwl",
            LearnerSpec::Earl => "earl",
        }
    }
}

/// Cross-validation configuration.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub k: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Hajek normalization of the value estimator (default true).
    pub normalized: bool,
    /// Propensity clipping bound.
    pub clip: f64,
    pub propensity_forest: ForestParams,
    /// Forest parameters for the paired-forest learner.
    pub policy_forest: ForestParams,
    pub rist: RistParams,
    pub learner: LearnerConfig,
}

impl CvConfig {
    pub fn new(horizon: f64, seed: u64) -> CvConfig {
        CvConfig {
            k: 10,
            horizon,
            seed,
            normalized: true,
            clip: PropensityModel::DEFAULT_CLIP,
            propensity_forest: ForestParams::default(),
            policy_forest: ForestParams::default(),
            rist: RistParams::new(horizon),
            learner: LearnerConfig::default(),
        }
    }

    fn rist_params(&self) -> RistParams {
        RistParams {
            horizon: self.horizon,
            ..self.rist.clone()
        }
    }
}

/// Per-(learner, fold) diagnostics captured during cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldDiagnostics {
    pub learner: String,
    pub fold: usize,
    pub fold_value: f64,
    pub propensity_min: f64,
    pub propensity_max: f64,
    /// Fraction of training subjects out-of-bag for at least one propensity
    /// tree; below 1 the permutation machinery is undersampled.
    pub propensity_oob_coverage: f64,
    /// Fraction of the training fold censored before the horizon.
    pub censored_fraction: f64,
    /// Surrogate-optimizer convergence, for the linear learners.
    pub converged: Option<bool>,
}

/// Result of evaluating one or more learners on shared folds.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub estimates: Vec<(String, ValueEstimate)>,
    pub diagnostics: Vec<FoldDiagnostics>,
}

struct FoldContext {
    fold: usize,
    train: Cohort,
    test: Cohort,
    propensity: PropensityModel,
    propensity_oob_coverage: f64,
    censored_fraction: f64,
}

fn prepare_fold(restricted: &Cohort, cfg: &CvConfig, fold: usize, folds: &crate::cohort::FoldAssignment) -> Result<FoldContext> {
    let (train_idx, test_idx) = folds.split(fold);
    let train_raw = restricted.subset(&train_idx);
    let test_raw = restricted.subset(&test_idx);
    let censored_fraction = train_raw.n_needing_imputation() as f64 / train_raw.len() as f64;

    let propensity = fit_propensity(
        &train_raw,
        &cfg.propensity_forest,
        cfg.clip,
        derive_seed_indexed(cfg.seed, "cv-propensity", fold as u64),
    )
    .map_err(|e| Error::Fit(format!("fold {fold} propensity: {e}")))?;
    let propensity_oob_coverage = match propensity.estimator() {
        crate::forest::PropensityEstimator::Forest(f) => f.oob_coverage(),
        _ => 1.0,
    };

    let needs_model = train_raw.n_needing_imputation() > 0 || test_raw.n_needing_imputation() > 0;
    let (train, test) = if needs_model {
        let (train_completed, model) = complete_cohort(
            &train_raw,
            &cfg.rist_params(),
            derive_seed_indexed(cfg.seed, "cv-rist", fold as u64),
        )
        .map_err(|e| Error::Fit(format!("fold {fold} imputation: {e}")))?;
        let test_completed = if test_raw.n_needing_imputation() > 0 {
            impute_once(
                &model,
                &test_raw,
                derive_seed_indexed(cfg.seed, "cv-impute-test", fold as u64),
            )
            .map_err(|e| Error::Fit(format!("fold {fold} test imputation: {e}")))?
        } else {
            test_raw
        };
        (train_completed, test_completed)
    } else {
        (train_raw, test_raw)
    };

    Ok(FoldContext {
        fold,
        train,
        test,
        propensity,
        propensity_oob_coverage,
        censored_fraction,
    })
}

fn fit_on_fold(
    spec: &LearnerSpec,
    ctx: &FoldContext,
    cfg: &CvConfig,
) -> Result<(TreatmentRule, Option<bool>)> {
    let seed = learner_seed(cfg.seed, spec.name(), ctx.fold);
    match spec {
        LearnerSpec::Fixed(rule) => Ok((rule.clone(), None)),
        LearnerSpec::ZeroOrder => {
            let fit = fit_zero_order(
                &ctx.train,
                &ctx.propensity,
                cfg.normalized,
                cfg.learner.tie_default,
            )?;
            Ok((fit.rule, None))
        }
        LearnerSpec::RfPolicy => {
            let rule = fit_rf_policy(&ctx.train, &cfg.policy_forest, cfg.learner.tie_default, seed)?;
            Ok((rule, None))
        }
        LearnerSpec::Rwl => {
            let fit = fit_rwl(&ctx.train, &ctx.propensity, &cfg.learner, seed)?;
            Ok((fit.rule, Some(fit.converged)))
        }
        LearnerSpec::Earl => {
            let fit = fit_earl(&ctx.train, &ctx.propensity, &cfg.learner, seed)?;
            Ok((fit.rule, Some(fit.converged)))
        }
    }
}

/// Cross-validates several learners on shared folds, propensity fits, and
/// imputations. Deterministic in `(cohort, specs, cfg)`.
pub fn evaluate_learners(
    cohort: &Cohort,
    specs: &[(String, LearnerSpec)],
    cfg: &CvConfig,
) -> Result<EvalRun> {
    if specs.is_empty() {
        return Err(Error::Argument("no learners requested".into()));
    }
    let restricted = cohort.restrict_horizon(cfg.horizon)?;
    let folds = crate::cohort::kfold_split(&restricted, cfg.k, derive_seed(cfg.seed, "cv-folds"))?;

    let mut fold_values: Vec<Vec<f64>> = specs.iter().map(|_| Vec::with_capacity(cfg.k)).collect();
    let mut diagnostics = Vec::with_capacity(cfg.k * specs.len());
    for fold in 0..cfg.k {
        let ctx = prepare_fold(&restricted, cfg, fold, &folds)?;
        let (prop_min, prop_max) = propensity_range(&ctx)?;
        for ((name, spec), values) in specs.iter().zip(fold_values.iter_mut()) {
            let (rule, converged) = fit_on_fold(spec, &ctx, cfg)
                .map_err(|e| Error::Fit(format!("fold {fold} learner {name}: {e}")))?;
            let value = ipw_value(&ctx.test, &rule, &ctx.propensity, cfg.normalized)
                .map_err(|e| Error::Eval(format!("fold {fold} learner {name}: {e}")))?;
            values.push(value);
            diagnostics.push(FoldDiagnostics {
                learner: name.clone(),
                fold,
                fold_value: value,
                propensity_min: prop_min,
                propensity_max: prop_max,
                propensity_oob_coverage: ctx.propensity_oob_coverage,
                censored_fraction: ctx.censored_fraction,
                converged,
            });
        }
    }

    let estimates = specs
        .iter()
        .zip(fold_values)
        .map(|((name, _), values)| (name.clone(), summarize_folds(values)))
        .collect();
    Ok(EvalRun {
        estimates,
        diagnostics,
    })
}

fn propensity_range(ctx: &FoldContext) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in ctx.test.subjects() {
        let p = ctx.propensity.prob_pos(&s.covariates)?;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    Ok((lo, hi))
}

/// Cross-validated value of a single learner.
pub fn cross_validated_value(
    cohort: &Cohort,
    spec: &LearnerSpec,
    cfg: &CvConfig,
) -> Result<ValueEstimate> {
    let run = evaluate_learners(
        cohort,
        &[(spec.name().to_string(), spec.clone())],
        cfg,
    )?;
    Ok(run.estimates.into_iter().next().expect("one learner").1)
}

/// One comparison row: a learner's estimate, with its difference versus the
/// zero-order comparator filled in (the comparator row has none).
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub estimate: ValueEstimate,
}

/// Learners versus the zero-order rule, with paired per-fold difference CIs.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Builds the comparison table. All estimates must come from the same fold
/// structure (same k, evaluated on the same folds).
pub fn compare_to_zero_order(
    learners: &[(String, ValueEstimate)],
    zero_order: &ValueEstimate,
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(learners.len() + 1);
    rows.push(ComparisonRow {
        name: "zero".to_string(),
        estimate: zero_order.clone(),
    });
    for (name, estimate) in learners {
        if estimate.n_folds != zero_order.n_folds
            || estimate.fold_values.len() != zero_order.fold_values.len()
        {
            return Err(Error::Argument(format!(
                "learner {name} was evaluated on a different fold structure"
            )));
        }
        let diffs: Vec<f64> = estimate
            .fold_values
            .iter()
            .zip(&zero_order.fold_values)
            .map(|(a, b)| a - b)
            .collect();
        let summary = summarize_folds(diffs);
        let mut estimate = estimate.clone();
        estimate.comparator_difference = Some(Difference {
            point: summary.point,
            ci_low: summary.ci_low,
            ci_high: summary.ci_high,
        });
        rows.push(ComparisonRow {
            name: name.clone(),
            estimate,
        });
    }
    Ok(Comparison { rows })
}
