//! Kaplan–Meier product-limit estimator as a right-continuous step function.

use alloc::vec::Vec;

/// A survival step function `S(t)`, starting at 1 and dropping at event times.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    /// `(event time, S(t) just after the drop)`, strictly increasing in time.
    steps: Vec<(f64, f64)>,
}

impl KmCurve {
    /// Fits the product-limit estimator to `(time, event)` observations.
    pub fn fit(observations: &[(f64, bool)]) -> KmCurve {
        let mut obs: Vec<(f64, bool)> = observations.to_vec();
        obs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = obs.len();
        let mut steps = Vec::new();
        let mut survival = 1.0;
        let mut i = 0;
        while i < n {
            let t = obs[i].0;
            let mut events = 0usize;
            let mut removed = 0usize;
            while i < n && obs[i].0 == t {
                if obs[i].1 {
                    events += 1;
                }
                removed += 1;
                i += 1;
            }
            let at_risk = n - (i - removed);
            if events > 0 && at_risk > 0 {
                survival *= 1.0 - events as f64 / at_risk as f64;
                steps.push((t, survival));
            }
        }
        KmCurve { steps }
    }

    /// `S(t)`: probability of surviving past `t`.
    pub fn eval(&self, t: f64) -> f64 {
        // last step with time <= t
        match self.steps.partition_point(|&(time, _)| time <= t) {
            0 => 1.0,
            k => self.steps[k - 1].1,
        }
    }

    /// Event times at which the curve drops.
    pub fn step_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|&(t, _)| t)
    }

    /// Earliest time where the curve has dropped to `u` or below.
    pub fn first_time_at_or_below(&self, u: f64) -> Option<f64> {
        let k = self.steps.partition_point(|&(_, s)| s > u);
        self.steps.get(k).map(|&(t, _)| t)
    }

    pub fn is_flat(&self) -> bool {
        self.steps.is_empty()
    }

    /// Survival value after the final drop (1 if no events).
    pub fn tail_value(&self) -> f64 {
        self.steps.last().map_or(1.0, |&(_, s)| s)
    }

    /// Supremum distance to another curve, evaluated at both curves' steps.
    pub fn sup_distance(&self, other: &KmCurve) -> f64 {
        let mut d = 0.0f64;
        for &(t, _) in self.steps.iter().chain(other.steps.iter()) {
            let diff = (self.eval(t) - other.eval(t)).abs();
            if diff > d {
                d = diff;
            }
            // also compare just before the drop
            let before = t - t.abs().max(1.0) * 1e-12;
            let diff = (self.eval(before) - other.eval(before)).abs();
            if diff > d {
                d = diff;
            }
        }
        d
    }
}

/// Pointwise average of several survival curves, as a new step function.
pub fn average_curves(curves: &[&KmCurve]) -> KmCurve {
    let mut times: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.step_times())
        .collect();
    times.sort_unstable_by(f64::total_cmp);
    times.dedup();
    let k = curves.len() as f64;
    let steps = times
        .into_iter()
        .map(|t| {
            let s = curves.iter().map(|c| c.eval(t)).sum::<f64>() / k;
            (t, s)
        })
        .collect();
    KmCurve { steps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_censoring_matches_empirical_survival() {
        let obs = [(1.0, true), (2.0, true), (3.0, true), (4.0, true)];
        let km = KmCurve::fit(&obs);
        assert_eq!(km.eval(0.5), 1.0);
        assert!((km.eval(1.0) - 0.75).abs() < 1e-12);
        assert!((km.eval(2.5) - 0.5).abs() < 1e-12);
        assert!((km.eval(4.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn censored_subjects_leave_risk_set_without_drop() {
        // events at 1 and 3, censored at 2
        let obs = [(1.0, true), (2.0, false), (3.0, true)];
        let km = KmCurve::fit(&obs);
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((km.eval(2.5) - 2.0 / 3.0).abs() < 1e-12);
        // at t=3 the risk set is a single subject
        assert!((km.eval(3.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn tied_events_handled_together() {
        let obs = [(1.0, true), (1.0, true), (2.0, true), (2.0, false)];
        let km = KmCurve::fit(&obs);
        assert!((km.eval(1.0) - 0.5).abs() < 1e-12);
        assert!((km.eval(2.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn average_of_identical_curves_is_identity() {
        let obs = [(1.0, true), (2.0, true), (5.0, false)];
        let km = KmCurve::fit(&obs);
        let avg = average_curves(&[&km, &km, &km]);
        assert!(km.sup_distance(&avg) < 1e-12);
    }

    #[test]
    fn sup_distance_detects_shift() {
        let a = KmCurve::fit(&[(1.0, true), (2.0, true)]);
        let b = KmCurve::fit(&[(10.0, true), (20.0, true)]);
        assert!(a.sup_distance(&b) > 0.9);
        assert_eq!(a.sup_distance(&a), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn survival_is_a_non_increasing_probability(
                obs in proptest::collection::vec((0.0f64..500.0, proptest::bool::ANY), 1..60)
            ) {
                let km = KmCurve::fit(&obs);
                let mut last = 1.0;
                for t in km.step_times().collect::<Vec<_>>() {
                    let s = km.eval(t);
                    prop_assert!((0.0..=1.0).contains(&s));
                    prop_assert!(s <= last + 1e-12);
                    last = s;
                }
                // fully uncensored data ends at zero survival
                if obs.iter().all(|&(_, e)| e) {
                    let t_max = obs.iter().map(|&(t, _)| t).fold(0.0f64, f64::max);
                    prop_assert!(km.eval(t_max).abs() < 1e-12);
                }
            }
        }
    }
}
