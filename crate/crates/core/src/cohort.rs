//! Cohort data model: subjects, horizon restriction, and fold assignment.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Rng};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Treatment arm, coded `-1` / `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Neg,
    Pos,
}

#[cfg(feature = "serde")]
impl serde::Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(match self {
            Arm::Neg => -1,
            Arm::Pos => 1,
        })
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> core::result::Result<Arm, D::Error> {
        let v = i8::deserialize(deserializer)?;
        Arm::from_i8(v).map_err(|_| serde::de::Error::custom("treatment arm must be -1 or 1"))
    }
}

impl Arm {
    pub fn from_i8(v: i8) -> Result<Arm> {
        match v {
            -1 => Ok(Arm::Neg),
            1 => Ok(Arm::Pos),
            other => Err(Error::Value(format!(
                "treatment must be -1 or +1, got {other}"
            ))),
        }
    }

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Arm::Neg => -1.0,
            Arm::Pos => 1.0,
        }
    }

    #[inline]
    pub fn opposite(self) -> Arm {
        match self {
            Arm::Neg => Arm::Pos,
            Arm::Pos => Arm::Neg,
        }
    }

    /// Class index used by probability forests (`Neg -> 0`, `Pos -> 1`).
    #[inline]
    pub fn class_index(self) -> u32 {
        match self {
            Arm::Neg => 0,
            Arm::Pos => 1,
        }
    }
}

/// One study subject.
///
/// `time` is the observed follow-up in days; `event` records whether the
/// outcome occurred at `time` (otherwise the subject was censored there).
/// `reward` is the restricted outcome-free time in `[0, horizon]`, set by
/// [`Cohort::restrict_horizon`] for complete observations and by survival-tree
/// imputation for subjects censored before the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub covariates: Vec<f64>,
    pub treatment: Arm,
    pub time: f64,
    pub event: bool,
    pub reward: Option<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, covariates: Vec<f64>, treatment: Arm, time: f64, event: bool) -> Self {
        Subject {
            id: id.into(),
            covariates,
            treatment,
            time,
            event,
            reward: None,
        }
    }
}

/// A validated collection of subjects sharing one covariate schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: Vec<String>,
    subjects: Vec<Subject>,
    horizon: Option<f64>,
}

impl Cohort {
    /// Builds a cohort, validating dimensions and field ranges.
    pub fn new(schema: Vec<String>, subjects: Vec<Subject>) -> Result<Cohort> {
        for (i, s) in subjects.iter().enumerate() {
            if s.covariates.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "subject {} ({}) has {} covariates, schema has {}",
                    i,
                    s.id,
                    s.covariates.len(),
                    schema.len()
                )));
            }
            if !(s.time >= 0.0) {
                return Err(Error::Value(format!(
                    "subject {} ({}) has negative or non-finite time {}",
                    i, s.id, s.time
                )));
            }
            if s.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::Value(format!(
                    "subject {} ({}) has a non-finite covariate",
                    i, s.id
                )));
            }
        }
        Ok(Cohort {
            schema,
            subjects,
            horizon: None,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.schema.len()
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    /// Subject counts per arm as `(neg, pos)`.
    pub fn arm_counts(&self) -> (usize, usize) {
        let pos = self
            .subjects
            .iter()
            .filter(|s| s.treatment == Arm::Pos)
            .count();
        (self.subjects.len() - pos, pos)
    }

    /// Errors unless both arms are present.
    pub fn require_both_arms(&self) -> Result<()> {
        let (neg, pos) = self.arm_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::Argument(format!(
                "both treatment arms must be non-empty (got {neg} / {pos})"
            )));
        }
        Ok(())
    }

    /// True when every subject has a reward (no pending imputation).
    pub fn rewards_complete(&self) -> bool {
        self.subjects.iter().all(|s| s.reward.is_some())
    }

    /// Number of subjects flagged for imputation (censored before horizon).
    pub fn n_needing_imputation(&self) -> usize {
        self.subjects.iter().filter(|s| s.reward.is_none()).count()
    }

    /// Rewards as a vector; errors if any are missing.
    pub fn rewards(&self) -> Result<Vec<f64>> {
        self.subjects
            .iter()
            .map(|s| {
                s.reward.ok_or_else(|| {
                    Error::Argument(format!("subject {} has no reward; impute or restrict first", s.id))
                })
            })
            .collect()
    }

    /// Covariate matrix, one row per subject.
    pub fn feature_matrix(&self) -> Matrix {
        let p = self.schema.len();
        let mut data = Vec::with_capacity(self.subjects.len() * p);
        for s in &self.subjects {
            data.extend_from_slice(&s.covariates);
        }
        Matrix::new(self.subjects.len(), p, data).expect("dimensions validated at construction")
    }

    /// Covariates plus the treatment sign as a trailing column.
    pub fn feature_matrix_with_arm(&self) -> Matrix {
        let p = self.schema.len();
        let mut data = Vec::with_capacity(self.subjects.len() * (p + 1));
        for s in &self.subjects {
            data.extend_from_slice(&s.covariates);
            data.push(s.treatment.sign());
        }
        Matrix::new(self.subjects.len(), p + 1, data).expect("dimensions validated at construction")
    }

    /// New cohort with the given subject indices (order preserved).
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            schema: self.schema.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            horizon: self.horizon,
        }
    }

    /// New cohort keeping only the named covariate columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Cohort> {
        let mut keep = Vec::with_capacity(names.len());
        for n in names {
            let idx = self
                .schema
                .iter()
                .position(|s| s == n)
                .ok_or_else(|| Error::Schema(format!("unknown covariate column `{n}`")))?;
            keep.push(idx);
        }
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut t = s.clone();
                t.covariates = keep.iter().map(|&j| s.covariates[j]).collect();
                t
            })
            .collect();
        Ok(Cohort {
            schema: names.to_vec(),
            subjects,
            horizon: self.horizon,
        })
    }

    /// Applies the restricted-time convention at `horizon` (days).
    ///
    /// Complete observations get `reward = min(time, horizon)`; follow-up of
    /// `horizon` or longer counts as event-free through the horizon. Subjects
    /// censored strictly before the horizon keep `reward = None`, which flags
    /// them for imputation. Idempotent for a fixed horizon.
    pub fn restrict_horizon(&self, horizon: f64) -> Result<Cohort> {
        if !(horizon > 0.0) {
            return Err(Error::Argument(format!("horizon must be > 0, got {horizon}")));
        }
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut t = s.clone();
                if s.time >= horizon {
                    t.reward = Some(horizon);
                    t.event = false;
                } else if s.event {
                    t.reward = Some(s.time);
                } else {
                    t.reward = None;
                }
                t
            })
            .collect();
        Ok(Cohort {
            schema: self.schema.clone(),
            subjects,
            horizon: Some(horizon),
        })
    }

    /// Replaces the subjects' rewards with the given completed values.
    pub(crate) fn with_rewards(&self, rewards: &[f64]) -> Cohort {
        debug_assert_eq!(rewards.len(), self.subjects.len());
        let subjects = self
            .subjects
            .iter()
            .zip(rewards)
            .map(|(s, &r)| {
                let mut t = s.clone();
                t.reward = Some(r);
                t
            })
            .collect();
        Cohort {
            schema: self.schema.clone(),
            subjects,
            horizon: self.horizon,
        }
    }
}

/// Assignment of subjects to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, subject: usize) -> usize {
        self.assignment[subject]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Indices of the held-out fold and of the remaining training folds.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut test = Vec::new();
        let mut train = Vec::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Splits a cohort into `k` folds, stratified by treatment arm.
///
/// Within each arm the subject order is shuffled by the seed and dealt
/// round-robin, continuing the deal across arms so overall fold sizes differ
/// by at most one while each fold's per-arm count stays within one of the
/// proportional share.
pub fn kfold_split(cohort: &Cohort, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {k}")));
    }
    if k > cohort.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds cohort size {}",
            cohort.len()
        )));
    }
    let mut neg: Vec<usize> = Vec::new();
    let mut pos: Vec<usize> = Vec::new();
    for (i, s) in cohort.subjects().iter().enumerate() {
        match s.treatment {
            Arm::Neg => neg.push(i),
            Arm::Pos => pos.push(i),
        }
    }
    let mut rng = Rng::seed_from_u64(derive_seed(seed, "kfold"));
    rng.shuffle(&mut neg);
    rng.shuffle(&mut pos);

    let mut assignment = alloc::vec![0usize; cohort.len()];
    let mut next = 0usize;
    for &i in neg.iter().chain(pos.iter()) {
        assignment[i] = next;
        next = (next + 1) % k;
    }
    Ok(FoldAssignment { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subject(id: &str, x: f64, arm: Arm, time: f64, event: bool) -> Subject {
        Subject::new(id, alloc::vec![x], arm, time, event)
    }

    fn small_cohort(n: usize) -> Cohort {
        let subjects: Vec<Subject> = (0..n)
            .map(|i| {
                subject(
                    &format!("s{i}"),
                    i as f64,
                    if i % 3 == 0 { Arm::Pos } else { Arm::Neg },
                    100.0 + i as f64,
                    i % 2 == 0,
                )
            })
            .collect();
        Cohort::new(alloc::vec!["x1".into()], subjects).unwrap()
    }

    #[test]
    fn restrict_truncates_event_past_horizon() {
        let c = Cohort::new(
            alloc::vec!["x1".into()],
            alloc::vec![subject("a", 0.0, Arm::Pos, 400.0, true)],
        )
        .unwrap();
        let r = c.restrict_horizon(365.0).unwrap();
        let s = &r.subjects()[0];
        assert_eq!(s.reward, Some(365.0));
        assert!(!s.event);
        assert_eq!(r.n_needing_imputation(), 0);
    }

    #[test]
    fn restrict_keeps_event_below_horizon() {
        let c = Cohort::new(
            alloc::vec!["x1".into()],
            alloc::vec![subject("a", 0.0, Arm::Pos, 100.0, true)],
        )
        .unwrap();
        let r = c.restrict_horizon(365.0).unwrap();
        assert_eq!(r.subjects()[0].reward, Some(100.0));
        assert!(r.subjects()[0].event);
    }

    #[test]
    fn restrict_flags_censored_within_horizon() {
        let c = Cohort::new(
            alloc::vec!["x1".into()],
            alloc::vec![subject("a", 0.0, Arm::Pos, 200.0, false)],
        )
        .unwrap();
        let r = c.restrict_horizon(365.0).unwrap();
        assert_eq!(r.subjects()[0].reward, None);
        assert_eq!(r.n_needing_imputation(), 1);
    }

    #[test]
    fn restrict_is_idempotent() {
        let c = small_cohort(30).restrict_horizon(110.0).unwrap();
        let twice = c.restrict_horizon(110.0).unwrap();
        assert_eq!(c, twice);
    }

    #[test]
    fn restrict_rejects_nonpositive_horizon() {
        let c = small_cohort(3);
        assert!(matches!(c.restrict_horizon(0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn kfold_exact_division() {
        let c = small_cohort(100);
        let folds = kfold_split(&c, 10, 1).unwrap();
        let mut sizes = [0usize; 10];
        for &f in folds.assignment() {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 10));
    }

    #[test]
    fn kfold_remainder_distribution() {
        let c = small_cohort(101);
        let folds = kfold_split(&c, 10, 1).unwrap();
        let mut sizes = [0usize; 10];
        for &f in folds.assignment() {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        assert_eq!(sizes.iter().sum::<usize>(), 101);
    }

    #[test]
    fn kfold_is_deterministic() {
        let c = small_cohort(57);
        let a = kfold_split(&c, 5, 99).unwrap();
        let b = kfold_split(&c, 5, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_rejects_k_above_n() {
        let c = small_cohort(4);
        assert!(matches!(kfold_split(&c, 5, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let bad = Subject::new("a", alloc::vec![1.0, 2.0], Arm::Neg, 1.0, false);
        assert!(Cohort::new(alloc::vec!["x1".into()], alloc::vec![bad]).is_err());
    }

    #[test]
    fn select_columns_reorders_and_validates() {
        let s = Subject::new("a", alloc::vec![1.0, 2.0, 3.0], Arm::Neg, 1.0, false);
        let c = Cohort::new(
            alloc::vec!["x1".into(), "x2".into(), "x3".into()],
            alloc::vec![s],
        )
        .unwrap();
        let picked = c.select_columns(&["x3".into(), "x1".into()]).unwrap();
        assert_eq!(picked.schema(), ["x3".to_string(), "x1".to_string()]);
        assert_eq!(picked.subjects()[0].covariates, alloc::vec![3.0, 1.0]);
        assert!(matches!(
            c.select_columns(&["nope".into()]),
            Err(Error::Schema(_))
        ));
    }

    proptest! {
        #[test]
        fn kfold_partitions_with_arm_balance(n in 10usize..120, k in 2usize..8, seed in 0u64..1000) {
            prop_assume!(k <= n);
            let c = small_cohort(n);
            let folds = kfold_split(&c, k, seed).unwrap();
            prop_assert_eq!(folds.assignment().len(), n);
            // every subject in exactly one fold, fold sizes within 1
            let mut sizes = alloc::vec![0usize; k];
            let mut arm_pos = alloc::vec![0usize; k];
            for (i, &f) in folds.assignment().iter().enumerate() {
                prop_assert!(f < k);
                sizes[f] += 1;
                if c.subjects()[i].treatment == Arm::Pos {
                    arm_pos[f] += 1;
                }
            }
            let min = *sizes.iter().min().unwrap();
            let max = *sizes.iter().max().unwrap();
            prop_assert!(max - min <= 1);
            // per-arm counts within 1 of the proportional share
            let (_, total_pos) = c.arm_counts();
            for f in 0..k {
                let share = total_pos as f64 / k as f64;
                prop_assert!((arm_pos[f] as f64 - share).abs() <= 1.0);
            }
        }
    }
}
