//! Recursively imputed survival trees for censoring.
//!
//! An ensemble of extremely randomized survival trees is fit to the
//! horizon-restricted data (treatment included as a split candidate, each
//! tree on a per-arm half-sample). Splits are random thresholds scored by the
//! two-sample log-rank statistic, and every leaf keeps at least
//! `min_events_per_leaf` events together with its Kaplan–Meier curve.
//! Subjects censored before the horizon receive an event time drawn from
//! their ensemble-averaged conditional survival curve restricted to
//! `(censor time, horizon]`; the fit-and-impute pass repeats for
//! `n_imputation_cycles`, refitting on the completed data each cycle.

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::km::{average_curves, KmCurve};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, derive_seed_indexed, Rng};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// RIST hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RistParams {
    pub n_trees: usize,
    pub n_imputation_cycles: usize,
    pub min_events_per_leaf: usize,
    /// Random thresholds drawn per candidate covariate at each node.
    pub n_random_splits: usize,
    pub horizon: f64,
}

impl RistParams {
    pub fn new(horizon: f64) -> Self {
        RistParams {
            n_trees: 50,
            n_imputation_cycles: 2,
            min_events_per_leaf: 1,
            n_random_splits: 10,
            horizon,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.n_imputation_cycles == 0 || self.min_events_per_leaf == 0 {
            return Err(Error::Argument(
                "rist: n_trees, cycles and min_events_per_leaf must be >= 1".into(),
            ));
        }
        if self.n_random_splits == 0 {
            return Err(Error::Argument("rist: n_random_splits must be >= 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Argument("rist: horizon must be > 0".into()));
        }
        Ok(())
    }
}

/// Two-sample log-rank chi-square statistic.
///
/// Each side is `(times, event flags)`. Errors when there are no events on
/// either side (the split is undefined); returns 0 when the variance term
/// degenerates.
pub fn logrank_statistic(left: (&[f64], &[bool]), right: (&[f64], &[bool])) -> Result<f64> {
    if left.0.len() != left.1.len() || right.0.len() != right.1.len() {
        return Err(Error::Argument("times and event flags must align".into()));
    }
    if left.0.is_empty() || right.0.is_empty() {
        return Err(Error::Argument("both sides must be non-empty".into()));
    }
    let lobs: Vec<(f64, bool)> = left.0.iter().copied().zip(left.1.iter().copied()).collect();
    let robs: Vec<(f64, bool)> = right.0.iter().copied().zip(right.1.iter().copied()).collect();
    if !lobs.iter().chain(robs.iter()).any(|&(_, e)| e) {
        return Err(Error::Degenerate(
            "log-rank undefined: no events on either side".into(),
        ));
    }
    Ok(logrank_chi2(&lobs, &robs))
}

/// Chi-square statistic over pre-paired observations; 0 when degenerate.
fn logrank_chi2(left: &[(f64, bool)], right: &[(f64, bool)]) -> f64 {
    let mut merged: Vec<(f64, bool, bool)> = Vec::with_capacity(left.len() + right.len());
    merged.extend(left.iter().map(|&(t, e)| (t, e, true)));
    merged.extend(right.iter().map(|&(t, e)| (t, e, false)));
    merged.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk_left = left.len() as f64;
    let mut at_risk_right = right.len() as f64;
    let mut observed_minus_expected = 0.0;
    let mut variance = 0.0;

    let mut i = 0;
    while i < merged.len() {
        let t = merged[i].0;
        let mut events_left = 0.0;
        let mut events_right = 0.0;
        let mut leave_left = 0.0;
        let mut leave_right = 0.0;
        while i < merged.len() && merged[i].0 == t {
            let (_, event, is_left) = merged[i];
            if is_left {
                leave_left += 1.0;
                if event {
                    events_left += 1.0;
                }
            } else {
                leave_right += 1.0;
                if event {
                    events_right += 1.0;
                }
            }
            i += 1;
        }
        let deaths = events_left + events_right;
        let at_risk = at_risk_left + at_risk_right;
        if deaths > 0.0 && at_risk > 1.0 {
            observed_minus_expected += events_left - deaths * at_risk_left / at_risk;
            variance += at_risk_left * at_risk_right * deaths * (at_risk - deaths)
                / (at_risk * at_risk * (at_risk - 1.0));
        }
        at_risk_left -= leave_left;
        at_risk_right -= leave_right;
    }
    if variance <= 0.0 {
        0.0
    } else {
        observed_minus_expected * observed_minus_expected / variance
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SurvNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        km: KmCurve,
    },
}

/// One extremely randomized survival tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvTree {
    nodes: Vec<SurvNode>,
}

impl SurvTree {
    fn leaf_curve(&self, x: &[f64]) -> &KmCurve {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                SurvNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                SurvNode::Leaf { km } => return km,
            }
        }
    }

    /// Covariate index of the root split, if the tree splits at all.
    pub fn root_split_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(SurvNode::Split { feature, .. }) => Some(*feature as usize),
            _ => None,
        }
    }
}

/// A fitted RIST ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct RistModel {
    trees: Vec<SurvTree>,
    params: RistParams,
    seed: u64,
    n_features: usize,
}

impl RistModel {
    pub fn params(&self) -> &RistParams {
        &self.params
    }

    pub fn trees(&self) -> &[SurvTree] {
        &self.trees
    }

    /// Ensemble-averaged survival curve for the feature vector
    /// (covariates plus treatment sign).
    pub fn survival_curve(&self, features: &[f64]) -> Result<KmCurve> {
        if features.len() != self.n_features {
            return Err(Error::Argument(format!(
                "expected {} features, got {}",
                self.n_features,
                features.len()
            )));
        }
        let curves: Vec<&KmCurve> = self.trees.iter().map(|t| t.leaf_curve(features)).collect();
        Ok(average_curves(&curves))
    }
}

/// Survival observations `(restricted time, event-within-horizon)` per subject.
fn survival_observations(cohort: &Cohort, horizon: f64) -> Vec<(f64, bool)> {
    cohort
        .subjects()
        .iter()
        .map(|s| match s.reward {
            Some(r) => (r, r < horizon),
            None => (s.time, false),
        })
        .collect()
}

// Nodes smaller than this are not considered for splitting.
const MIN_SPLIT_SIZE: usize = 10;

struct SurvTreeBuilder<'a> {
    x: &'a Matrix,
    obs: &'a [(f64, bool)],
    params: &'a RistParams,
}

impl SurvTreeBuilder<'_> {
    fn events_in(&self, indices: &[usize]) -> usize {
        indices.iter().filter(|&&i| self.obs[i].1).count()
    }

    fn obs_of(&self, indices: &[usize]) -> Vec<(f64, bool)> {
        indices.iter().map(|&i| self.obs[i]).collect()
    }

    fn build(&self, in_sample: Vec<usize>, rng: &mut Rng) -> SurvTree {
        let mut nodes = vec![SurvNode::Leaf {
            km: KmCurve::fit(&self.obs_of(&in_sample)),
        }];
        let mut stack = vec![(0usize, in_sample)];
        while let Some((slot, indices)) = stack.pop() {
            let Some((feature, threshold, left_idx, right_idx)) = self.try_split(&indices, rng)
            else {
                nodes[slot] = SurvNode::Leaf {
                    km: KmCurve::fit(&self.obs_of(&indices)),
                };
                continue;
            };
            let left_slot = nodes.len();
            nodes.push(SurvNode::Leaf { km: KmCurve::fit(&[]) });
            let right_slot = nodes.len();
            nodes.push(SurvNode::Leaf { km: KmCurve::fit(&[]) });
            nodes[slot] = SurvNode::Split {
                feature: feature as u32,
                threshold,
                left: left_slot as u32,
                right: right_slot as u32,
            };
            stack.push((right_slot, right_idx));
            stack.push((left_slot, left_idx));
        }
        SurvTree { nodes }
    }

    /// Best admissible random split by log-rank statistic, if any. A split is
    /// admissible when both children keep `min_events_per_leaf` events.
    #[allow(clippy::type_complexity)]
    fn try_split(
        &self,
        indices: &[usize],
        rng: &mut Rng,
    ) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let min_events = self.params.min_events_per_leaf;
        if indices.len() < MIN_SPLIT_SIZE || self.events_in(indices) < 2 * min_events {
            return None;
        }
        let mut best: Option<(f64, usize, f64)> = None; // (statistic, feature, threshold)
        for feature in 0..self.x.cols() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in indices {
                let v = self.x.get(i, feature);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo >= hi {
                continue;
            }
            for _ in 0..self.params.n_random_splits {
                let threshold = rng.uniform(lo, hi);
                let mut left = Vec::new();
                let mut right = Vec::new();
                for &i in indices {
                    if self.x.get(i, feature) <= threshold {
                        left.push(self.obs[i]);
                    } else {
                        right.push(self.obs[i]);
                    }
                }
                if left.is_empty() || right.is_empty() {
                    continue;
                }
                let left_events = left.iter().filter(|&&(_, e)| e).count();
                let right_events = right.iter().filter(|&&(_, e)| e).count();
                if left_events < min_events || right_events < min_events {
                    continue;
                }
                let stat = logrank_chi2(&left, &right);
                if stat > 0.0 && best.as_ref().is_none_or(|&(s, _, _)| stat > s) {
                    best = Some((stat, feature, threshold));
                }
            }
        }
        let (_, feature, threshold) = best?;
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x.get(i, feature) <= threshold);
        Some((feature, threshold, left_idx, right_idx))
    }
}

/// Fits the survival-tree ensemble on a horizon-restricted cohort.
///
/// Each tree trains on a 50% per-arm subsample drawn without replacement
/// (redrawn in the unlikely case the subsample carries no events).
pub fn fit_rist(cohort: &Cohort, params: &RistParams, seed: u64) -> Result<RistModel> {
    params.validate()?;
    let horizon = cohort.horizon().ok_or_else(|| {
        Error::Argument("cohort has no horizon; call restrict_horizon first".into())
    })?;
    if horizon != params.horizon {
        return Err(Error::Argument(format!(
            "cohort horizon {horizon} differs from rist horizon {}",
            params.horizon
        )));
    }
    let obs = survival_observations(cohort, horizon);
    if !obs.iter().any(|&(_, e)| e) {
        return Err(Error::Fit("cannot fit survival trees without any event".into()));
    }
    let x = cohort.feature_matrix_with_arm();
    let mut neg_indices = Vec::new();
    let mut pos_indices = Vec::new();
    for (i, s) in cohort.subjects().iter().enumerate() {
        match s.treatment {
            crate::cohort::Arm::Neg => neg_indices.push(i),
            crate::cohort::Arm::Pos => pos_indices.push(i),
        }
    }
    let builder = SurvTreeBuilder {
        x: &x,
        obs: &obs,
        params,
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = Rng::seed_from_u64(derive_seed_indexed(seed, "rist-tree", t as u64));
        let mut attempts = 0;
        let sample = loop {
            let mut sample = Vec::new();
            for arm_indices in [&neg_indices, &pos_indices] {
                if arm_indices.is_empty() {
                    continue;
                }
                let take = arm_indices.len().div_ceil(2);
                for pick in rng.sample_distinct(arm_indices.len(), take) {
                    sample.push(arm_indices[pick]);
                }
            }
            if builder.events_in(&sample) >= params.min_events_per_leaf {
                break sample;
            }
            attempts += 1;
            if attempts > 100 {
                return Err(Error::Fit(
                    "could not draw a half-sample containing events".into(),
                ));
            }
        };
        trees.push(builder.build(sample, &mut rng));
    }
    Ok(RistModel {
        trees,
        params: params.clone(),
        seed,
        n_features: x.cols(),
    })
}

/// Draws one imputed event time in `(censor_time, horizon]` from the
/// ensemble-averaged conditional survival curve; survival mass beyond the
/// last event time maps to the horizon.
fn conditional_draw(curve: &KmCurve, censor_time: f64, horizon: f64, rng: &mut Rng) -> f64 {
    let s_at_censor = curve.eval(censor_time);
    if s_at_censor <= 0.0 {
        return horizon;
    }
    let u = s_at_censor * rng.open01();
    match curve.first_time_at_or_below(u) {
        Some(t) => {
            debug_assert!(t > censor_time);
            t.min(horizon)
        }
        None => horizon,
    }
}

/// One conditional-draw pass over the flagged subjects, without refitting.
/// Used to complete held-out data with a training-fitted model.
pub fn impute_once(model: &RistModel, cohort: &Cohort, seed: u64) -> Result<Cohort> {
    check_compatible(model, cohort)?;
    let horizon = model.params.horizon;
    let mut rewards: Vec<f64> = Vec::with_capacity(cohort.len());
    for (i, s) in cohort.subjects().iter().enumerate() {
        match s.reward {
            Some(r) => rewards.push(r),
            None => {
                let mut features = s.covariates.clone();
                features.push(s.treatment.sign());
                let curve = model.survival_curve(&features)?;
                let mut rng = Rng::seed_from_u64(derive_seed_indexed(seed, "draw", i as u64));
                rewards.push(conditional_draw(&curve, s.time, horizon, &mut rng));
            }
        }
    }
    Ok(cohort.with_rewards(&rewards))
}

fn check_compatible(model: &RistModel, cohort: &Cohort) -> Result<()> {
    match cohort.horizon() {
        Some(h) if h == model.params.horizon => {}
        Some(h) => {
            return Err(Error::Argument(format!(
                "cohort horizon {h} does not match model horizon {}",
                model.params.horizon
            )))
        }
        None => return Err(Error::Argument("cohort has no horizon set".into())),
    }
    if cohort.n_covariates() + 1 != model.n_features {
        return Err(Error::Argument("covariate dimension does not match model".into()));
    }
    Ok(())
}

fn run_cycles(
    initial: &RistModel,
    cohort: &Cohort,
    seed: u64,
) -> Result<(Cohort, RistModel)> {
    let params = initial.params.clone();
    let mut model = initial.clone();
    let mut completed = cohort.clone();
    for cycle in 0..params.n_imputation_cycles {
        // always condition on the original censoring times
        completed = impute_once(&model, cohort, derive_seed_indexed(seed, "cycle", cycle as u64))?;
        if cycle + 1 < params.n_imputation_cycles {
            model = fit_rist(
                &completed,
                &params,
                derive_seed_indexed(seed, "refit", cycle as u64),
            )?;
        }
    }
    Ok((completed, model))
}

/// Imputes event times for subjects censored before the horizon.
///
/// Runs `n_imputation_cycles` fit-and-impute passes (the provided model
/// serves as the first fit; later cycles refit on the completed data).
/// Complete observations are unchanged, and the returned cohort has no
/// pending imputation flags.
pub fn impute_censored(model: &RistModel, cohort: &Cohort, seed: u64) -> Result<Cohort> {
    check_compatible(model, cohort)?;
    if cohort.n_needing_imputation() == 0 {
        return Ok(cohort.clone());
    }
    let (completed, _) = run_cycles(model, cohort, seed)?;
    Ok(completed)
}

/// Full censoring workflow: fit, run the imputation cycles, and return both
/// the completed cohort and the final-cycle model (for completing held-out
/// subjects consistently).
pub fn complete_cohort(
    cohort: &Cohort,
    params: &RistParams,
    seed: u64,
) -> Result<(Cohort, RistModel)> {
    let model = fit_rist(cohort, params, derive_seed(seed, "rist-fit"))?;
    if cohort.n_needing_imputation() == 0 {
        return Ok((cohort.clone(), model));
    }
    run_cycles(&model, cohort, derive_seed(seed, "rist-impute"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Arm, Subject};
    use alloc::string::String;

    #[test]
    fn logrank_identical_samples_is_zero() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0];
        let events = [true, true, false, true, false];
        let stat = logrank_statistic((&times, &events), (&times, &events)).unwrap();
        assert!(stat.abs() < 1e-12);
    }

    #[test]
    fn logrank_fully_separated_groups() {
        // left: 20 events at t=1; right: 20 events at t=100.
        // hand oracle: single informative time with O-E = 10, V = 160000/62400,
        // so the statistic is exactly 39.
        let left_times = [1.0; 20];
        let right_times = [100.0; 20];
        let events = [true; 20];
        let stat = logrank_statistic((&left_times, &events), (&right_times, &events)).unwrap();
        assert!((stat - 39.0).abs() < 1e-9, "stat={stat}");
        assert!(stat > 15.0);
    }

    #[test]
    fn logrank_is_symmetric_under_swap() {
        let lt = [1.0, 3.0, 7.0, 9.0, 12.0];
        let le = [true, false, true, true, false];
        let rt = [2.0, 5.0, 6.0, 10.0];
        let re = [true, true, false, true];
        let a = logrank_statistic((&lt, &le), (&rt, &re)).unwrap();
        let b = logrank_statistic((&rt, &re), (&lt, &le)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn logrank_without_events_is_degenerate() {
        let t = [1.0, 2.0];
        let e = [false, false];
        assert!(matches!(
            logrank_statistic((&t, &e), (&t, &e)),
            Err(Error::Degenerate(_))
        ));
    }

    fn survival_cohort(
        n: usize,
        horizon: f64,
        seed: u64,
        rate_fn: impl Fn(&[f64]) -> f64,
        censor_scale: Option<f64>,
    ) -> (Cohort, Vec<f64>) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut subjects = Vec::with_capacity(n);
        let mut true_times = Vec::with_capacity(n);
        for i in 0..n {
            let x = alloc::vec![rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0)];
            let arm = if rng.next_f64() < 0.5 { Arm::Pos } else { Arm::Neg };
            let t = rng.exponential(rate_fn(&x));
            true_times.push(t.min(horizon));
            let (time, event) = match censor_scale {
                Some(scale) => {
                    let c = rng.uniform(0.0, scale);
                    if c < t {
                        (c, false)
                    } else {
                        (t, true)
                    }
                }
                None => (t, true),
            };
            subjects.push(Subject::new(format!("s{i}"), x, arm, time, event));
        }
        let cohort = Cohort::new(alloc::vec![String::from("x1"), String::from("x2")], subjects)
            .unwrap()
            .restrict_horizon(horizon)
            .unwrap();
        (cohort, true_times)
    }

    #[test]
    fn uncensored_ensemble_matches_empirical_survival() {
        let (cohort, true_times) = survival_cohort(500, 365.0, 3, |_| 1.0 / 120.0, None);
        let params = RistParams::new(365.0);
        let model = fit_rist(&cohort, &params, 11).unwrap();
        let empirical = KmCurve::fit(
            &true_times
                .iter()
                .map(|&t| (t, t < 365.0))
                .collect::<Vec<_>>(),
        );
        // the covariates carry no signal, so the ensemble curve averaged over
        // the covariate law must track the marginal survival when nothing is
        // censored (a single query point only sees its own noisy leaves)
        let mut rng = Rng::seed_from_u64(77);
        let queries: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                alloc::vec![
                    rng.uniform(0.0, 1.0),
                    rng.uniform(-1.0, 1.0),
                    if rng.next_f64() < 0.5 { 1.0 } else { -1.0 },
                ]
            })
            .collect();
        let mut worst = 0.0f64;
        for t in [30.0, 90.0, 180.0, 270.0, 360.0] {
            let mean: f64 = queries
                .iter()
                .map(|q| model.survival_curve(q).unwrap().eval(t))
                .sum::<f64>()
                / queries.len() as f64;
            worst = worst.max((mean - empirical.eval(t)).abs());
        }
        assert!(worst < 0.05, "sup deviation {worst}");
    }

    #[test]
    fn planted_hazard_split_found_by_most_trees() {
        // two subpopulations split on x1 with very different hazards
        let mut rng = Rng::seed_from_u64(7);
        let n = 400;
        let mut subjects = Vec::with_capacity(n);
        for i in 0..n {
            let flag = rng.next_f64() < 0.5;
            let x = alloc::vec![f64::from(u8::from(flag)), rng.uniform(-1.0, 1.0)];
            let rate = if flag { 1.0 / 15.0 } else { 1.0 / 250.0 };
            let t = rng.exponential(rate);
            let arm = if rng.next_f64() < 0.5 { Arm::Pos } else { Arm::Neg };
            subjects.push(Subject::new(format!("s{i}"), x, arm, t, true));
        }
        let cohort = Cohort::new(alloc::vec![String::from("flag"), String::from("noise")], subjects)
            .unwrap()
            .restrict_horizon(365.0)
            .unwrap();
        let model = fit_rist(&cohort, &RistParams::new(365.0), 21).unwrap();
        let on_flag = model
            .trees()
            .iter()
            .filter(|t| t.root_split_feature() == Some(0))
            .count();
        assert!(
            on_flag as f64 >= 0.8 * model.trees().len() as f64,
            "{on_flag}/{} trees split on the planted covariate first",
            model.trees().len()
        );
    }

    #[test]
    fn refit_with_same_seed_is_identical() {
        let (cohort, _) = survival_cohort(200, 365.0, 5, |_| 1.0 / 150.0, Some(500.0));
        let a = fit_rist(&cohort, &RistParams::new(365.0), 99).unwrap();
        let b = fit_rist(&cohort, &RistParams::new(365.0), 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn imputed_times_stay_in_support() {
        let (cohort, _) = survival_cohort(400, 365.0, 13, |_| 1.0 / 150.0, Some(500.0));
        let params = RistParams::new(365.0);
        let model = fit_rist(&cohort, &params, 3).unwrap();
        let completed = impute_censored(&model, &cohort, 17).unwrap();
        assert_eq!(completed.n_needing_imputation(), 0);
        for (before, after) in cohort.subjects().iter().zip(completed.subjects()) {
            match before.reward {
                Some(r) => assert_eq!(after.reward, Some(r)), // complete cases untouched
                None => {
                    let r = after.reward.unwrap();
                    assert!(r > before.time && r <= 365.0, "imputed {r} from censor {}", before.time);
                }
            }
        }
    }

    #[test]
    fn imputation_near_horizon_lands_in_narrow_window() {
        let (mut cohort, _) = survival_cohort(300, 365.0, 29, |_| 1.0 / 150.0, None);
        // append one subject censored at 360
        let mut subjects: Vec<Subject> = cohort.subjects().to_vec();
        subjects.push(Subject::new("late", alloc::vec![0.5, 0.0], Arm::Pos, 360.0, false));
        cohort = Cohort::new(cohort.schema().to_vec(), subjects)
            .unwrap()
            .restrict_horizon(365.0)
            .unwrap();
        let params = RistParams::new(365.0);
        let model = fit_rist(&cohort, &params, 31).unwrap();
        let completed = impute_censored(&model, &cohort, 37).unwrap();
        let r = completed.subjects().last().unwrap().reward.unwrap();
        assert!(r > 360.0 && r <= 365.0, "imputed {r}");
    }

    #[test]
    fn imputation_is_noop_without_censoring() {
        let (cohort, _) = survival_cohort(150, 365.0, 41, |_| 1.0 / 100.0, None);
        assert_eq!(cohort.n_needing_imputation(), 0);
        let model = fit_rist(&cohort, &RistParams::new(365.0), 1).unwrap();
        let completed = impute_censored(&model, &cohort, 2).unwrap();
        assert_eq!(&cohort, &completed);
    }

    #[test]
    fn fit_without_events_is_an_error() {
        let subjects: Vec<Subject> = (0..40)
            .map(|i| {
                Subject::new(
                    format!("s{i}"),
                    alloc::vec![i as f64 / 40.0, 0.0],
                    if i % 2 == 0 { Arm::Pos } else { Arm::Neg },
                    50.0 + i as f64,
                    false,
                )
            })
            .collect();
        let cohort = Cohort::new(alloc::vec![String::from("x1"), String::from("x2")], subjects)
            .unwrap()
            .restrict_horizon(365.0)
            .unwrap();
        assert!(matches!(
            fit_rist(&cohort, &RistParams::new(365.0), 1),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn mismatched_horizon_rejected() {
        let (cohort, _) = survival_cohort(100, 365.0, 43, |_| 1.0 / 100.0, Some(400.0));
        let model = fit_rist(&cohort, &RistParams::new(365.0), 1).unwrap();
        let other = cohort.restrict_horizon(180.0).unwrap();
        assert!(matches!(
            impute_censored(&model, &other, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn completed_km_recovers_truth_and_cycles_stabilize() {
        // exponential event times, independent uniform censoring (~30%)
        let horizon = 365.0;
        let (cohort, true_times) = survival_cohort(1500, horizon, 57, |_| 1.0 / 150.0, Some(520.0));
        let frac_censored = cohort.n_needing_imputation() as f64 / cohort.len() as f64;
        assert!((0.2..0.45).contains(&frac_censored), "censored {frac_censored}");

        let truth = KmCurve::fit(
            &true_times
                .iter()
                .map(|&t| (t, t < horizon))
                .collect::<Vec<_>>(),
        );
        let completed_km = |cycles: usize, seed: u64| {
            let params = RistParams {
                n_imputation_cycles: cycles,
                ..RistParams::new(horizon)
            };
            let (completed, _) = complete_cohort(&cohort, &params, seed).unwrap();
            KmCurve::fit(
                &completed
                    .subjects()
                    .iter()
                    .map(|s| {
                        let r = s.reward.unwrap();
                        (r, r < horizon)
                    })
                    .collect::<Vec<_>>(),
            )
        };
        let km2 = completed_km(2, 5);
        let d = km2.sup_distance(&truth);
        assert!(d < 0.08, "completed-vs-truth sup distance {d}");

        // recursion refines rather than diverges
        let km1 = completed_km(1, 5);
        let drift = km1.sup_distance(&km2);
        assert!(drift < 0.1, "cycle drift {drift}");
    }
}
