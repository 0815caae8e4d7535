//! Synthetic cohorts: exact reconstruction of the bundled stratified tables,
//! configurable scenarios with known optimal rules, censoring mechanisms,
//! and Monte Carlo oracles for true rule values.

use crate::cohort::{Arm, Cohort, Subject};
use crate::error::{Error, Result};
use crate::float;
use crate::learners::Policy;
use crate::rng::{derive_seed, Rng};
use crate::strata::StratifiedTable;
use alloc::format;

use alloc::vec;
use alloc::vec::Vec;

/// Covariate sampling law (independent across coordinates).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovariateLaw {
    Uniform { low: f64, high: f64 },
    StandardNormal,
    Binary { prevalences: Vec<f64> },
}

/// Treatment assignment mechanism.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Assignment {
    Randomized { prob_pos: f64 },
    Logistic { weights: Vec<f64>, intercept: f64 },
}

/// Closed catalogue of scenario mean functions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioFunction {
    Constant { value: f64 },
    Linear { weights: Vec<f64>, intercept: f64 },
    /// `below` when `x[feature] <= threshold`, else `above`.
    Threshold {
        feature: usize,
        threshold: f64,
        below: f64,
        above: f64,
    },
    /// `scale * sign(x[a] * x[b])`.
    Interaction { feature_a: usize, feature_b: usize, scale: f64 },
}

impl ScenarioFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScenarioFunction::Constant { value } => *value,
            ScenarioFunction::Linear { weights, intercept } => {
                intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
            ScenarioFunction::Threshold {
                feature,
                threshold,
                below,
                above,
            } => {
                if x[*feature] > *threshold {
                    *above
                } else {
                    *below
                }
            }
            ScenarioFunction::Interaction {
                feature_a,
                feature_b,
                scale,
            } => {
                let prod = x[*feature_a] * x[*feature_b];
                if prod > 0.0 {
                    *scale
                } else if prod < 0.0 {
                    -*scale
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            ScenarioFunction::Constant { .. } => Ok(()),
            ScenarioFunction::Linear { weights, .. } => {
                if weights.len() != p {
                    return Err(Error::Argument(format!(
                        "function weights have length {}, scenario has {p} covariates",
                        weights.len()
                    )));
                }
                Ok(())
            }
            ScenarioFunction::Threshold { feature, .. } => {
                if *feature >= p {
                    return Err(Error::Argument("threshold feature out of range".into()));
                }
                Ok(())
            }
            ScenarioFunction::Interaction {
                feature_a, feature_b, ..
            } => {
                if *feature_a >= p || *feature_b >= p {
                    return Err(Error::Argument("interaction feature out of range".into()));
                }
                Ok(())
            }
        }
    }
}

/// Reward-generating law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RewardLaw {
    /// Restricted time `clamp(baseline + sign(a) * contrast / 2 + noise, 0, horizon)`.
    MeanModel {
        baseline: ScenarioFunction,
        contrast: ScenarioFunction,
        noise_sd: f64,
    },
    /// Exponential event time with rate
    /// `exp(log_rate_baseline + sign(a) * log_rate_contrast / 2)`.
    ExponentialTime {
        log_rate_baseline: ScenarioFunction,
        log_rate_contrast: ScenarioFunction,
    },
}

/// Censoring mechanism for the observational cohort.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CensoringLaw {
    None,
    /// Independent `Uniform(0, b)` censoring with `b` calibrated so the
    /// within-horizon censoring fraction hits `rate`.
    UniformRate { rate: f64 },
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub p: usize,
    pub covariates: CovariateLaw,
    pub assignment: Assignment,
    pub reward: RewardLaw,
    pub censoring: CensoringLaw,
    pub horizon: f64,
}

/// The scenario's true optimal rule: follow the sign of the contrast
/// (flipped for event-time laws, where a positive log-rate contrast means the
/// positive arm fails sooner).
#[derive(Debug, Clone)]
pub struct OracleRule {
    contrast: ScenarioFunction,
    higher_contrast_favors_pos: bool,
    tie_default: Arm,
}

impl Policy for OracleRule {
    fn decide(&self, x: &[f64]) -> Result<Arm> {
        let c = self.contrast.eval(x);
        let score = if self.higher_contrast_favors_pos { c } else { -c };
        Ok(if score > 0.0 {
            Arm::Pos
        } else if score < 0.0 {
            Arm::Neg
        } else {
            self.tie_default
        })
    }
}

/// Ground truth for a scenario: the optimal rule and oracle values.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub optimal: OracleRule,
    pub value_optimal: f64,
    pub value_neg: f64,
    pub value_pos: f64,
    /// Largest Monte Carlo standard error among the three values.
    pub mc_se: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Argument("scenario needs at least one covariate".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Argument("scenario horizon must be > 0".into()));
        }
        match &self.covariates {
            CovariateLaw::Uniform { low, high } => {
                if !(low < high) {
                    return Err(Error::Argument("uniform law needs low < high".into()));
                }
            }
            CovariateLaw::StandardNormal => {}
            CovariateLaw::Binary { prevalences } => {
                if prevalences.len() != self.p
                    || prevalences.iter().any(|q| !(0.0..=1.0).contains(q))
                {
                    return Err(Error::Argument(
                        "binary law needs one prevalence in [0,1] per covariate".into(),
                    ));
                }
            }
        }
        match &self.assignment {
            Assignment::Randomized { prob_pos } => {
                if !(*prob_pos > 0.0 && *prob_pos < 1.0) {
                    return Err(Error::Argument("assignment probability must be in (0,1)".into()));
                }
            }
            Assignment::Logistic { weights, .. } => {
                if weights.len() != self.p {
                    return Err(Error::Argument("assignment weights length mismatch".into()));
                }
            }
        }
        match &self.reward {
            RewardLaw::MeanModel {
                baseline,
                contrast,
                noise_sd,
            } => {
                baseline.validate(self.p)?;
                contrast.validate(self.p)?;
                if *noise_sd < 0.0 {
                    return Err(Error::Argument("noise_sd must be >= 0".into()));
                }
            }
            RewardLaw::ExponentialTime {
                log_rate_baseline,
                log_rate_contrast,
            } => {
                log_rate_baseline.validate(self.p)?;
                log_rate_contrast.validate(self.p)?;
            }
        }
        if let CensoringLaw::UniformRate { rate } = &self.censoring {
            if !(*rate > 0.0 && *rate < 1.0) {
                return Err(Error::Argument("censoring rate must be in (0,1)".into()));
            }
        }
        Ok(())
    }

    fn draw_covariates(&self, rng: &mut Rng) -> Vec<f64> {
        match &self.covariates {
            CovariateLaw::Uniform { low, high } => {
                (0..self.p).map(|_| rng.uniform(*low, *high)).collect()
            }
            CovariateLaw::StandardNormal => (0..self.p).map(|_| rng.normal()).collect(),
            CovariateLaw::Binary { prevalences } => prevalences
                .iter()
                .map(|&q| f64::from(u8::from(rng.next_f64() < q)))
                .collect(),
        }
    }

    fn draw_arm(&self, x: &[f64], rng: &mut Rng) -> Arm {
        let prob_pos = match &self.assignment {
            Assignment::Randomized { prob_pos } => *prob_pos,
            Assignment::Logistic { weights, intercept } => {
                let z: f64 = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                1.0 / (1.0 + float::exp(-z))
            }
        };
        if rng.next_f64() < prob_pos {
            Arm::Pos
        } else {
            Arm::Neg
        }
    }

    /// Uncensored restricted event time for `(x, arm)` in `[0, horizon]`.
    fn draw_restricted_time(&self, x: &[f64], arm: Arm, rng: &mut Rng) -> f64 {
        match &self.reward {
            RewardLaw::MeanModel {
                baseline,
                contrast,
                noise_sd,
            } => {
                let mean = baseline.eval(x) + arm.sign() * contrast.eval(x) / 2.0;
                let noise = if *noise_sd > 0.0 {
                    noise_sd * rng.normal()
                } else {
                    0.0
                };
                (mean + noise).clamp(0.0, self.horizon)
            }
            RewardLaw::ExponentialTime {
                log_rate_baseline,
                log_rate_contrast,
            } => {
                let rate = float::exp(
                    log_rate_baseline.eval(x) + arm.sign() * log_rate_contrast.eval(x) / 2.0,
                );
                rng.exponential(rate).min(self.horizon)
            }
        }
    }

    /// The true optimal rule implied by the contrast function.
    pub fn oracle_rule(&self, tie_default: Arm) -> OracleRule {
        match &self.reward {
            RewardLaw::MeanModel { contrast, .. } => OracleRule {
                contrast: contrast.clone(),
                higher_contrast_favors_pos: true,
                tie_default,
            },
            RewardLaw::ExponentialTime {
                log_rate_contrast, ..
            } => OracleRule {
                contrast: log_rate_contrast.clone(),
                higher_contrast_favors_pos: false,
                tie_default,
            },
        }
    }

    /// Calibrates the uniform censoring bound against a Monte Carlo sample of
    /// restricted event times (bisection on the censored fraction).
    fn calibrate_censor_bound(&self, rate: f64, seed: u64) -> f64 {
        let mut rng = Rng::seed_from_u64(derive_seed(seed, "censor-calibration"));
        let m = 4000;
        let mut times = Vec::with_capacity(m);
        for _ in 0..m {
            let x = self.draw_covariates(&mut rng);
            let arm = self.draw_arm(&x, &mut rng);
            times.push(self.draw_restricted_time(&x, arm, &mut rng));
        }
        // censored fraction under Uniform(0,b): mean(min(t, b)) / b, decreasing in b
        let frac = |b: f64| times.iter().map(|&t| t.min(b)).sum::<f64>() / (m as f64 * b);
        let mut lo = self.horizon * 1e-6;
        let mut hi = self.horizon * 1e4;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if frac(mid) > rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Emits one subject per table count unit (exact reconstruction): covariates
/// are the stratum's modifier indicators, treatment is the arm, and the
/// reward maps died/survived to `0/1` (or `0/365` days when `day_scale`).
/// Subject order is shuffled by the seed.
pub fn generate_from_table(table: &StratifiedTable, day_scale: bool, seed: u64) -> Cohort {
    let survived_reward = if day_scale { 365.0 } else { 1.0 };
    let mut subjects = Vec::new();
    let mut counter = 0usize;
    for stratum in table.strata() {
        let covariates: Vec<f64> = stratum.iter().map(|&b| f64::from(u8::from(b))).collect();
        for arm in [Arm::Neg, Arm::Pos] {
            let cell = table.cell(&stratum, arm).unwrap_or_default();
            for (count, died) in [(cell.died, true), (cell.alive, false)] {
                for _ in 0..count {
                    let reward = if died { 0.0 } else { survived_reward };
                    let mut s = Subject::new(
                        format!("t{counter}"),
                        covariates.clone(),
                        arm,
                        reward,
                        died,
                    );
                    s.reward = Some(reward);
                    subjects.push(s);
                    counter += 1;
                }
            }
        }
    }
    let mut rng = Rng::seed_from_u64(derive_seed(seed, "table-shuffle"));
    rng.shuffle(&mut subjects);
    let schema = table.modifiers().to_vec();
    Cohort::new(schema, subjects).expect("table reconstruction is schema-consistent")
}

/// Draws an observational cohort from the scenario (no oracle computation).
pub fn generate_cohort(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<Cohort> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    let censor_bound = match &spec.censoring {
        CensoringLaw::None => None,
        CensoringLaw::UniformRate { rate } => Some(spec.calibrate_censor_bound(*rate, seed)),
    };
    let mut rng = Rng::seed_from_u64(derive_seed(seed, "scenario"));
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let x = spec.draw_covariates(&mut rng);
        let arm = spec.draw_arm(&x, &mut rng);
        let event_time = spec.draw_restricted_time(&x, arm, &mut rng);
        let (time, event) = match censor_bound {
            Some(bound) => {
                let censor = rng.uniform(0.0, bound);
                if censor < event_time {
                    (censor, false)
                } else {
                    (event_time, true)
                }
            }
            None => (event_time, true),
        };
        subjects.push(Subject::new(format!("s{i}"), x, arm, time, event));
    }
    let schema = (0..spec.p).map(|j| format!("x{}", j + 1)).collect();
    Cohort::new(schema, subjects)
}

/// Draws an observational cohort from the scenario and computes its ground
/// truth (optimal rule plus oracle values by forced-assignment Monte Carlo).
pub fn generate_scenario(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<(Cohort, ScenarioTruth)> {
    let cohort = generate_cohort(spec, n, seed)?;

    let optimal = spec.oracle_rule(Arm::Neg);
    let mc_n = 200_000;
    let (value_optimal, se_opt) = true_value(spec, &optimal, mc_n, derive_seed(seed, "truth-opt"))?;
    let (value_neg, se_neg) = true_value(
        spec,
        &crate::learners::TreatmentRule::Universal(Arm::Neg),
        mc_n,
        derive_seed(seed, "truth-neg"),
    )?;
    let (value_pos, se_pos) = true_value(
        spec,
        &crate::learners::TreatmentRule::Universal(Arm::Pos),
        mc_n,
        derive_seed(seed, "truth-pos"),
    )?;
    Ok((
        cohort,
        ScenarioTruth {
            optimal,
            value_optimal,
            value_neg,
            value_pos,
            mc_se: se_opt.max(se_neg).max(se_pos),
        },
    ))
}

/// Monte Carlo oracle: mean uncensored restricted reward under forced
/// assignment `A = rule(X)`, with its standard error.
pub fn true_value(
    spec: &ScenarioSpec,
    rule: &dyn Policy,
    mc_n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if mc_n < 10_000 {
        return Err(Error::Argument("true_value needs mc_n >= 10000".into()));
    }
    let mut rng = Rng::seed_from_u64(derive_seed(seed, "true-value"));
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_n {
        let x = spec.draw_covariates(&mut rng);
        let arm = rule.decide(&x)?;
        let reward = spec.draw_restricted_time(&x, arm, &mut rng);
        sum += reward;
        sum_sq += reward * reward;
    }
    let mean = sum / mc_n as f64;
    let var = (sum_sq / mc_n as f64 - mean * mean).max(0.0);
    Ok((mean, float::sqrt(var / mc_n as f64)))
}

impl ScenarioSpec {
    /// Treatment-by-threshold interaction: contrast `20 * sign(x1)`, optimal
    /// rule `sign(x1)`, oracle value gap about 10 days over the better
    /// universal rule.
    pub fn planted_threshold(p: usize) -> ScenarioSpec {
        ScenarioSpec {
            p,
            covariates: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
            assignment: Assignment::Randomized { prob_pos: 0.5 },
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Constant { value: 150.0 },
                contrast: ScenarioFunction::Threshold {
                    feature: 0,
                    threshold: 0.0,
                    below: -20.0,
                    above: 20.0,
                },
                noise_sd: 20.0,
            },
            censoring: CensoringLaw::None,
            horizon: 365.0,
        }
    }

    /// Two-covariate interaction: contrast `20 * sign(x1 * x2)`; the optimal
    /// rule is not linearly representable.
    pub fn planted_interaction(p: usize) -> ScenarioSpec {
        ScenarioSpec {
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Constant { value: 150.0 },
                contrast: ScenarioFunction::Interaction {
                    feature_a: 0,
                    feature_b: 1,
                    scale: 20.0,
                },
                noise_sd: 20.0,
            },
            ..ScenarioSpec::planted_threshold(p)
        }
    }

    /// No effect heterogeneity: zero contrast everywhere.
    pub fn null_effect(p: usize) -> ScenarioSpec {
        ScenarioSpec {
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Constant { value: 150.0 },
                contrast: ScenarioFunction::Constant { value: 0.0 },
                noise_sd: 20.0,
            },
            ..ScenarioSpec::planted_threshold(p)
        }
    }

    /// Randomized design with linear baseline and contrast; the calibration
    /// scenario for value-estimator checks.
    pub fn randomized_linear(p: usize) -> ScenarioSpec {
        let mut baseline = vec![0.0; p];
        baseline[0] = 30.0;
        if p > 1 {
            baseline[1] = -20.0;
        }
        let mut contrast = vec![0.0; p];
        contrast[0] = 10.0;
        if p > 1 {
            contrast[1] = 5.0;
        }
        ScenarioSpec {
            p,
            covariates: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
            assignment: Assignment::Randomized { prob_pos: 0.5 },
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Linear {
                    weights: baseline,
                    intercept: 200.0,
                },
                contrast: ScenarioFunction::Linear {
                    weights: contrast,
                    intercept: 5.0,
                },
                noise_sd: 25.0,
            },
            censoring: CensoringLaw::None,
            horizon: 365.0,
        }
    }

    /// Exponential event times (mean `mean_days`, no covariate effect) with
    /// uniform censoring calibrated to `censor_rate`.
    pub fn survival_exponential(p: usize, mean_days: f64, censor_rate: f64) -> ScenarioSpec {
        ScenarioSpec {
            p,
            covariates: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
            assignment: Assignment::Randomized { prob_pos: 0.5 },
            reward: RewardLaw::ExponentialTime {
                log_rate_baseline: ScenarioFunction::Constant {
                    value: float::ln(1.0 / mean_days),
                },
                log_rate_contrast: ScenarioFunction::Constant { value: 0.0 },
            },
            censoring: CensoringLaw::UniformRate { rate: censor_rate },
            horizon: 365.0,
        }
    }

    /// Two strong outcome predictors (x1, x2) among noise; used for variable
    /// screening checks. No treatment effect.
    pub fn screening_signals(p: usize) -> ScenarioSpec {
        let mut weights = vec![0.0; p];
        weights[0] = 50.0;
        if p > 1 {
            weights[1] = 35.0;
        }
        ScenarioSpec {
            p,
            covariates: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
            assignment: Assignment::Randomized { prob_pos: 0.5 },
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Linear {
                    weights,
                    intercept: 150.0,
                },
                contrast: ScenarioFunction::Constant { value: 0.0 },
                noise_sd: 15.0,
            },
            censoring: CensoringLaw::None,
            horizon: 365.0,
        }
    }

    /// The bundled 1-modifier toy population as a generative scenario on the
    /// survival-probability scale (reward in [0, 1], horizon 1).
    pub fn toy_table1_survival() -> ScenarioSpec {
        let surv = |died: f64, total: f64| 1.0 - died / total;
        let s_reduced_neg = surv(7000.0, 9000.0);
        let s_reduced_pos = surv(100.0, 1100.0);
        let s_preserved_neg = surv(2000.0, 8000.0);
        let s_preserved_pos = surv(1500.0, 1750.0);
        let baseline_preserved = (s_preserved_neg + s_preserved_pos) / 2.0;
        let baseline_reduced = (s_reduced_neg + s_reduced_pos) / 2.0;
        let contrast_preserved = s_preserved_pos - s_preserved_neg;
        let contrast_reduced = s_reduced_pos - s_reduced_neg;
        let logit = |q: f64| float::ln(q / (1.0 - q));
        let share_reduced = 1100.0 / 10_100.0;
        let share_preserved = 1750.0 / 9750.0;
        ScenarioSpec {
            p: 1,
            covariates: CovariateLaw::Binary {
                prevalences: vec![10_100.0 / 19_850.0],
            },
            assignment: Assignment::Logistic {
                weights: vec![logit(share_reduced) - logit(share_preserved)],
                intercept: logit(share_preserved),
            },
            reward: RewardLaw::MeanModel {
                baseline: ScenarioFunction::Linear {
                    weights: vec![baseline_reduced - baseline_preserved],
                    intercept: baseline_preserved,
                },
                contrast: ScenarioFunction::Linear {
                    weights: vec![contrast_reduced - contrast_preserved],
                    intercept: contrast_preserved,
                },
                noise_sd: 0.0,
            },
            censoring: CensoringLaw::None,
            horizon: 1.0,
        }
    }

    /// Catalogue lookup by name (used by the CLI's built-in scenarios).
    pub fn builtin(name: &str) -> Option<ScenarioSpec> {
        match name {
            "planted_threshold" => Some(ScenarioSpec::planted_threshold(10)),
            "planted_interaction" => Some(ScenarioSpec::planted_interaction(10)),
            "null_effect" => Some(ScenarioSpec::null_effect(10)),
            "randomized_linear" => Some(ScenarioSpec::randomized_linear(5)),
            "survival_exponential" => Some(ScenarioSpec::survival_exponential(3, 200.0, 0.3)),
            "screening_signals" => Some(ScenarioSpec::screening_signals(12)),
            "toy_table1_survival" => Some(ScenarioSpec::toy_table1_survival()),
            _ => None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &[
            "planted_threshold",
            "planted_interaction",
            "null_effect",
            "randomized_linear",
            "survival_exponential",
            "screening_signals",
            "toy_table1_survival",
        ]
    }
}
