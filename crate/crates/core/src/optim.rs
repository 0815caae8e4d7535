//! Deterministic solvers for weighted linear surrogate classification.
//!
//! All objectives are normalized by the total sample weight, so rescaling
//! every weight by a positive constant leaves the optimization problem (and
//! its iterates) unchanged:
//!
//! - weighted hinge, optionally with a linear correction term (the convex
//!   subproblem of the ramp DC iteration), by subgradient descent with a
//!   fixed diminishing step schedule;
//! - ramp loss by difference-of-convex iterations from a hinge warm start;
//! - weighted logistic loss by gradient descent with Armijo backtracking.

use crate::error::{Error, Result};
use crate::float;
use crate::matrix::Matrix;
use alloc::vec;
use alloc::vec::Vec;

/// Linear decision function in standardized feature space.
#[derive(Debug, Clone)]
pub(crate) struct LinearSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Per-column centering and scaling, folded back into raw-space coefficients
/// after optimization.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let (n, p) = (x.rows(), x.cols());
        let mut means = vec![0.0; p];
        for i in 0..n {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v / n as f64;
            }
        }
        let mut scales = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                let d = x.get(i, j) - means[j];
                scales[j] += d * d / n as f64;
            }
        }
        for s in &mut scales {
            *s = float::sqrt(*s);
            if *s < 1e-12 {
                *s = 1.0; // constant column
            }
        }
        Standardizer { means, scales }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let (n, p) = (x.rows(), x.cols());
        let mut out = Matrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                out.set(i, j, (x.get(i, j) - self.means[j]) / self.scales[j]);
            }
        }
        out
    }

    /// Maps standardized-space coefficients back to raw covariates.
    pub fn unstandardize(&self, weights: &[f64], intercept: f64) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = weights
            .iter()
            .zip(&self.scales)
            .map(|(w, s)| w / s)
            .collect();
        let shift: f64 = raw.iter().zip(&self.means).map(|(w, m)| w * m).sum();
        (raw, intercept - shift)
    }
}

/// A weighted binary classification problem over standardized features.
pub(crate) struct WeightedProblem<'a> {
    pub x: &'a Matrix,
    /// Non-negative sample weights.
    pub weights: &'a [f64],
    /// Labels in {-1, +1}.
    pub labels: &'a [f64],
    pub lambda: f64,
}

impl WeightedProblem<'_> {
    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn margin(&self, i: usize, weights: &[f64], intercept: f64) -> f64 {
        let f: f64 = intercept
            + self
                .x
                .row(i)
                .iter()
                .zip(weights)
                .map(|(v, w)| v * w)
                .sum::<f64>();
        self.labels[i] * f
    }

    fn ridge(&self, weights: &[f64]) -> f64 {
        0.5 * self.lambda * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Ramp loss value: `min(2, max(0, 1 - u))`.
    pub fn ramp_objective(&self, weights: &[f64], intercept: f64) -> f64 {
        let w_total = self.total_weight();
        let mut loss = 0.0;
        for i in 0..self.x.rows() {
            let u = self.margin(i, weights, intercept);
            loss += self.weights[i] * (1.0 - u).clamp(0.0, 2.0);
        }
        loss / w_total + self.ridge(weights)
    }
}

const HINGE_MAX_EPOCHS: usize = 600;
const HINGE_PATIENCE: usize = 40;

/// Minimizes the weighted hinge objective plus an optional per-sample linear
/// correction (`correction[i] * margin_i` terms with the DC-active set) by
/// deterministic subgradient descent.
pub(crate) fn solve_weighted_hinge(
    problem: &WeightedProblem<'_>,
    dc_active: &[bool],
    init: Option<(&[f64], f64)>,
    tolerance: f64,
) -> LinearSolution {
    let (n, p) = (problem.x.rows(), problem.x.cols());
    let w_total = problem.total_weight();
    let mut beta = init.map_or_else(|| vec![0.0; p], |(b, _)| b.to_vec());
    let mut intercept = init.map_or(0.0, |(_, b0)| b0);

    let objective = |beta: &[f64], intercept: f64| -> f64 {
        let mut loss = 0.0;
        for i in 0..n {
            let u = problem.margin(i, beta, intercept);
            loss += problem.weights[i] * (1.0 - u).max(0.0);
            if dc_active[i] {
                loss += problem.weights[i] * u;
            }
        }
        loss / w_total + problem.ridge(beta)
    };

    let mut best_obj = objective(&beta, intercept);
    let mut best = (beta.clone(), intercept);
    let mut since_improvement = 0usize;
    let mut grad = vec![0.0; p];

    for epoch in 0..HINGE_MAX_EPOCHS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad0 = 0.0;
        for i in 0..n {
            let u = problem.margin(i, &beta, intercept);
            let mut pull = 0.0;
            if u < 1.0 {
                pull -= 1.0; // hinge subgradient
            }
            if dc_active[i] {
                pull += 1.0; // DC linearization
            }
            if pull != 0.0 {
                let coeff = pull * problem.weights[i] * problem.labels[i] / w_total;
                for (g, v) in grad.iter_mut().zip(problem.x.row(i)) {
                    *g += coeff * v;
                }
                grad0 += coeff;
            }
        }
        for (g, b) in grad.iter_mut().zip(&beta) {
            *g += problem.lambda * b;
        }

        let step = 0.5 / float::sqrt(epoch as f64 + 1.0);
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= step * g;
        }
        intercept -= step * grad0;

        let obj = objective(&beta, intercept);
        if obj < best_obj - tolerance * (1.0 + float::abs(best_obj)) {
            best_obj = obj;
            best = (beta.clone(), intercept);
            since_improvement = 0;
        } else {
            if obj < best_obj {
                best_obj = obj;
                best = (beta.clone(), intercept);
            }
            since_improvement += 1;
            if since_improvement >= HINGE_PATIENCE {
                return LinearSolution {
                    weights: best.0,
                    intercept: best.1,
                    converged: true,
                    iterations: epoch + 1,
                };
            }
        }
    }
    LinearSolution {
        weights: best.0,
        intercept: best.1,
        converged: true, // subgradient descent ran its full schedule
        iterations: HINGE_MAX_EPOCHS,
    }
}

/// Ramp-loss minimization by difference-of-convex iterations: the concave
/// part is linearized at the current iterate and the resulting weighted-hinge
/// problem is re-solved from a warm start. Converged when the linearization's
/// active set reaches a fixpoint (the subproblem would repeat exactly) or the
/// ramp objective stops moving.
pub(crate) fn solve_ramp_dc(
    problem: &WeightedProblem<'_>,
    max_iterations: usize,
    tolerance: f64,
) -> LinearSolution {
    let n = problem.x.rows();
    let mut active = vec![false; n];
    let mut current = solve_weighted_hinge(problem, &active, None, tolerance);
    let mut best_obj = problem.ramp_objective(&current.weights, current.intercept);
    let mut best = current.clone();
    let mut converged = false;

    for iter in 0..max_iterations {
        let mut active_changed = false;
        for i in 0..n {
            let now = problem.margin(i, &current.weights, current.intercept) < -1.0;
            if now != active[i] {
                active_changed = true;
                active[i] = now;
            }
        }
        if iter > 0 && !active_changed {
            converged = true;
            best.iterations = iter;
            break;
        }
        let next = solve_weighted_hinge(
            problem,
            &active,
            Some((&current.weights, current.intercept)),
            tolerance,
        );
        let obj = problem.ramp_objective(&next.weights, next.intercept);
        let moved = float::abs(obj - best_obj);
        if obj < best_obj {
            best_obj = obj;
            best = next.clone();
        }
        current = next;
        best.iterations = iter + 1;
        if moved < tolerance * (1.0 + float::abs(best_obj)) {
            converged = true;
            break;
        }
    }
    LinearSolution {
        weights: best.weights,
        intercept: best.intercept,
        converged,
        iterations: best.iterations,
    }
}

const LOGISTIC_MAX_ITERATIONS: usize = 500;

/// Minimizes the weighted logistic objective by gradient descent with Armijo
/// backtracking. Smooth and convex, so convergence is checked on both the
/// gradient norm and the objective change.
pub(crate) fn solve_weighted_logistic(
    problem: &WeightedProblem<'_>,
    tolerance: f64,
) -> LinearSolution {
    let (n, p) = (problem.x.rows(), problem.x.cols());
    let w_total = problem.total_weight();
    let mut beta = vec![0.0; p];
    let mut intercept = 0.0;

    let softplus = |v: f64| v.max(0.0) + float::ln(1.0 + float::exp(-float::abs(v)));
    let objective = |beta: &[f64], intercept: f64| -> f64 {
        let mut loss = 0.0;
        for i in 0..n {
            let u = problem.margin(i, beta, intercept);
            loss += problem.weights[i] * softplus(-u);
        }
        loss / w_total + problem.ridge(beta)
    };

    let mut obj = objective(&beta, intercept);
    let mut grad = vec![0.0; p];
    for iter in 0..LOGISTIC_MAX_ITERATIONS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad0 = 0.0;
        for i in 0..n {
            let u = problem.margin(i, &beta, intercept);
            // d softplus(-u) / du = -sigmoid(-u)
            let sig = 1.0 / (1.0 + float::exp(u));
            let coeff = -problem.weights[i] * problem.labels[i] * sig / w_total;
            for (g, v) in grad.iter_mut().zip(problem.x.row(i)) {
                *g += coeff * v;
            }
            grad0 += coeff;
        }
        for (g, b) in grad.iter_mut().zip(&beta) {
            *g += problem.lambda * b;
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad0 * grad0;
        if float::sqrt(grad_sq) < 1e-10 {
            return LinearSolution {
                weights: beta,
                intercept,
                converged: true,
                iterations: iter,
            };
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_beta: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
            let cand_intercept = intercept - step * grad0;
            let cand_obj = objective(&cand_beta, cand_intercept);
            if cand_obj <= obj - 1e-4 * step * grad_sq {
                let done = float::abs(obj - cand_obj) < tolerance * (1.0 + float::abs(cand_obj));
                beta = cand_beta;
                intercept = cand_intercept;
                obj = cand_obj;
                accepted = true;
                if done {
                    return LinearSolution {
                        weights: beta,
                        intercept,
                        converged: true,
                        iterations: iter + 1,
                    };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent step found: gradient is numerically stale
            return LinearSolution {
                weights: beta,
                intercept,
                converged: true,
                iterations: iter,
            };
        }
    }
    LinearSolution {
        weights: beta,
        intercept,
        converged: false,
        iterations: LOGISTIC_MAX_ITERATIONS,
    }
}

/// Ordinary least squares with an intercept (tiny ridge jitter for stability).
pub(crate) fn linear_least_squares(x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || n == 0 {
        return Err(Error::Argument("least squares: shape mismatch".into()));
    }
    let d = p + 1; // intercept column appended last
    let mut normal = vec![0.0f64; d * d];
    let mut rhs = vec![0.0f64; d];
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            let va = if a < p { row[a] } else { 1.0 };
            rhs[a] += va * y[i];
            for b in a..d {
                let vb = if b < p { row[b] } else { 1.0 };
                normal[a * d + b] += va * vb;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            normal[a * d + b] = normal[b * d + a];
        }
    }
    let jitter = 1e-10 * (0..d).map(|a| normal[a * d + a]).fold(1.0f64, f64::max);
    for a in 0..d {
        normal[a * d + a] += jitter;
    }
    let solution = solve_dense(&mut normal, &mut rhs, d)?;
    let intercept = solution[p];
    Ok((solution[..p].to_vec(), intercept))
}

/// Gaussian elimination with partial pivoting on a dense system.
fn solve_dense(a: &mut [f64], b: &mut [f64], d: usize) -> Result<Vec<f64>> {
    for col in 0..d {
        let mut pivot = col;
        for r in col + 1..d {
            if float::abs(a[r * d + col]) > float::abs(a[pivot * d + col]) {
                pivot = r;
            }
        }
        if float::abs(a[pivot * d + col]) < 1e-14 {
            return Err(Error::Fit("singular design in least squares".into()));
        }
        if pivot != col {
            for c in 0..d {
                a.swap(col * d + c, pivot * d + c);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * d + col];
        for r in col + 1..d {
            let factor = a[r * d + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..d {
                a[r * d + c] -= factor * a[col * d + c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for c in col + 1..d {
            acc -= a[col * d + c] * x[c];
        }
        x[col] = acc / a[col * d + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn separable_problem(n: usize, seed: u64) -> (Matrix, Vec<f64>, Vec<f64>) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            // keep a margin of 0.1 around the true boundary
            let sign = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
            let x0 = sign * rng.uniform(0.1, 1.0);
            let x1 = rng.uniform(-1.0, 1.0);
            data.extend_from_slice(&[x0, x1]);
            labels.push(sign);
        }
        let x = Matrix::new(n, 2, data).unwrap();
        let weights = vec![1.0; n];
        (x, weights, labels)
    }

    fn training_accuracy(x: &Matrix, labels: &[f64], sol: &LinearSolution) -> f64 {
        let n = x.rows();
        let correct = (0..n)
            .filter(|&i| {
                let f: f64 = sol.intercept
                    + x.row(i).iter().zip(&sol.weights).map(|(v, w)| v * w).sum::<f64>();
                (f > 0.0) == (labels[i] > 0.0)
            })
            .count();
        correct as f64 / n as f64
    }

    #[test]
    fn hinge_separates_separable_data() {
        let (x, weights, labels) = separable_problem(300, 5);
        let problem = WeightedProblem {
            x: &x,
            weights: &weights,
            labels: &labels,
            lambda: 1e-3,
        };
        let sol = solve_weighted_hinge(&problem, &vec![false; 300], None, 1e-6);
        assert!(training_accuracy(&x, &labels, &sol) >= 0.98);
    }

    #[test]
    fn ramp_dc_matches_hinge_on_clean_data_and_resists_outliers() {
        let (x, mut weights, mut labels) = separable_problem(300, 9);
        let problem = WeightedProblem {
            x: &x,
            weights: &weights,
            labels: &labels,
            lambda: 1e-3,
        };
        let sol = solve_ramp_dc(&problem, 20, 1e-6);
        assert!(sol.converged);
        assert!(training_accuracy(&x, &labels, &sol) >= 0.98);

        // append gross mislabeled outliers far on the wrong side with heavy
        // weight: the unbounded hinge loss drags the boundary toward them,
        // the bounded ramp saturates them and keeps the clean boundary
        let n_clean = x.rows();
        let mut data: Vec<f64> = (0..n_clean).flat_map(|i| x.row(i).to_vec()).collect();
        for k in 0..8 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            data.extend_from_slice(&[6.0 * sign, 0.0]);
            labels.push(-sign); // mislabeled
            weights.push(2.5);
        }
        let x_noisy = Matrix::new(n_clean + 8, 2, data).unwrap();
        let noisy = WeightedProblem {
            x: &x_noisy,
            weights: &weights,
            labels: &labels,
            lambda: 1e-3,
        };
        let clean_accuracy = |sol: &LinearSolution| {
            let mut correct = 0;
            for i in 0..n_clean {
                let f: f64 = sol.intercept
                    + x_noisy.row(i).iter().zip(&sol.weights).map(|(v, w)| v * w).sum::<f64>();
                if (f > 0.0) == (labels[i] > 0.0) {
                    correct += 1;
                }
            }
            correct as f64 / n_clean as f64
        };
        let ramp = solve_ramp_dc(&noisy, 20, 1e-6);
        let hinge = solve_weighted_hinge(&noisy, &vec![false; n_clean + 8], None, 1e-6);
        assert!(clean_accuracy(&ramp) >= 0.98, "ramp {}", clean_accuracy(&ramp));
        assert!(
            clean_accuracy(&ramp) >= clean_accuracy(&hinge) - 1e-12,
            "ramp {} vs hinge {}",
            clean_accuracy(&ramp),
            clean_accuracy(&hinge)
        );
    }

    #[test]
    fn weight_rescaling_leaves_decisions_unchanged() {
        // the weight-normalized objective is invariant to rescaling all
        // weights; trajectories agree up to float rounding, so decisions and
        // coefficients match tightly
        let (x, weights, labels) = separable_problem(150, 13);
        let scaled: Vec<f64> = weights.iter().map(|w| w * 37.5).collect();
        let base = WeightedProblem {
            x: &x,
            weights: &weights,
            labels: &labels,
            lambda: 0.01,
        };
        let big = WeightedProblem {
            x: &x,
            weights: &scaled,
            labels: &labels,
            lambda: 0.01,
        };
        let check = |a: &LinearSolution, b: &LinearSolution| {
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                assert!((wa - wb).abs() < 1e-9 * (1.0 + wa.abs()), "{wa} vs {wb}");
            }
            assert!((a.intercept - b.intercept).abs() < 1e-9);
            for i in 0..x.rows() {
                let fa: f64 = a.intercept
                    + x.row(i).iter().zip(&a.weights).map(|(v, w)| v * w).sum::<f64>();
                let fb: f64 = b.intercept
                    + x.row(i).iter().zip(&b.weights).map(|(v, w)| v * w).sum::<f64>();
                assert_eq!(fa > 0.0, fb > 0.0);
            }
        };
        check(&solve_ramp_dc(&base, 20, 1e-6), &solve_ramp_dc(&big, 20, 1e-6));
        check(
            &solve_weighted_logistic(&base, 1e-8),
            &solve_weighted_logistic(&big, 1e-8),
        );
    }

    #[test]
    fn logistic_separates_and_converges() {
        let (x, weights, labels) = separable_problem(250, 21);
        let problem = WeightedProblem {
            x: &x,
            weights: &weights,
            labels: &labels,
            lambda: 0.01,
        };
        let sol = solve_weighted_logistic(&problem, 1e-8);
        assert!(sol.converged);
        assert!(training_accuracy(&x, &labels, &sol) >= 0.98);
    }

    #[test]
    fn least_squares_recovers_exact_coefficients() {
        let mut rng = Rng::seed_from_u64(2);
        let n = 120;
        let mut data = Vec::with_capacity(n * 3);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row = [rng.normal(), rng.normal(), rng.normal()];
            data.extend_from_slice(&row);
            y.push(3.0 * row[0] - 2.0 * row[1] + 0.5 * row[2] + 7.0);
        }
        let x = Matrix::new(n, 3, data).unwrap();
        let (w, b) = linear_least_squares(&x, &y).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-6);
        assert!((w[1] + 2.0).abs() < 1e-6);
        assert!((w[2] - 0.5).abs() < 1e-6);
        assert!((b - 7.0).abs() < 1e-6);
    }

    #[test]
    fn standardizer_round_trips_decision_values() {
        let mut rng = Rng::seed_from_u64(3);
        let n = 60;
        let data: Vec<f64> = (0..n * 2)
            .map(|i| rng.uniform(0.0, 10.0) + if i % 2 == 0 { 100.0 } else { 0.0 })
            .collect();
        let x = Matrix::new(n, 2, data).unwrap();
        let std = Standardizer::fit(&x);
        let xs = std.transform(&x);
        let weights = [1.5, -0.75];
        let intercept = 0.2;
        let (raw_w, raw_b) = std.unstandardize(&weights, intercept);
        for i in 0..n {
            let standardized: f64 = intercept
                + xs.row(i).iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>();
            let raw: f64 =
                raw_b + x.row(i).iter().zip(&raw_w).map(|(v, w)| v * w).sum::<f64>();
            assert!((standardized - raw).abs() < 1e-9);
        }
    }
}
