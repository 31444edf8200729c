//! L1-regularized logistic regression.
//!
//! Minimizes `Σ_i bce(σ(w·x_i + b), y_i) + ‖w‖₁ / C` (bias unpenalized) by
//! cyclic coordinate descent. Each coordinate takes the soft-thresholded
//! Newton step of a local quadratic model, then backtracks until the true
//! objective decreases by a sufficient fraction of the predicted amount, so the
//! objective never rises between sweeps.

use serde::{Deserialize, Serialize};

use super::{check_training_set, ModelError};
use crate::features::SparseVector;
use crate::num::{sigmoid, softplus};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Convergence threshold on the largest coordinate change in a sweep.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            c: 20.0,
            tolerance: 1e-6,
            max_sweeps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
    pub converged: bool,
    pub sweeps: usize,
    pub objective: F,
}

impl<F: Scalar> LogisticModel<F> {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![F::zero(); dim],
            bias: F::zero(),
            converged: false,
            sweeps: 0,
            objective: F::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &SparseVector<F>) -> F {
        x.dot_dense(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: &SparseVector<F>) -> F {
        sigmoid(self.decision(x))
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != F::zero()).count()
    }
}

// per-sample loss as a function of the margin
#[inline]
fn sample_loss<F: Scalar>(z: F, y: bool) -> F {
    if y {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[inline]
fn target<F: Scalar>(y: bool) -> F {
    if y {
        F::one()
    } else {
        F::zero()
    }
}

/// Full regularized objective.
pub fn logistic_objective<F: Scalar>(model: &LogisticModel<F>, xs: &[&SparseVector<F>], ys: &[bool], c: f64) -> F {
    let lambda = F::of(1.0 / c);
    let data: F = xs.iter().zip(ys).map(|(x, &y)| sample_loss(model.decision(x), y)).sum();
    data + lambda * model.weights.iter().map(|w| w.abs()).sum::<F>()
}

/// Gradient of the objective: weights first, bias last. For zero weights the
/// L1 term contributes nothing (the subgradient choice at the kink).
pub fn logistic_gradient<F: Scalar>(model: &LogisticModel<F>, xs: &[&SparseVector<F>], ys: &[bool], c: f64) -> Vec<F> {
    let lambda = F::of(1.0 / c);
    let mut grad = vec![F::zero(); model.dim() + 1];
    for (x, &y) in xs.iter().zip(ys) {
        let r = sigmoid(model.decision(x)) - target::<F>(y);
        for (j, v) in x.iter() {
            grad[j] = grad[j] + r * v;
        }
        grad[model.dim()] = grad[model.dim()] + r;
    }
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        if *w != F::zero() {
            *g = *g + lambda * w.signum();
        }
    }
    grad
}

const SUFFICIENT_DECREASE: f64 = 0.01;
const MAX_BACKTRACKS: usize = 30;

pub fn train_logistic<F: Scalar>(
    xs: &[&SparseVector<F>],
    ys: &[bool],
    cfg: &LogisticConfig,
) -> Result<LogisticModel<F>, ModelError> {
    let dim = check_training_set(xs.iter().map(|x| x.dim()), ys)?;
    if !(cfg.c > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(ModelError::InvalidConfig("C and tolerance must be positive".into()));
    }
    let n = xs.len();
    let lambda = F::of(1.0 / cfg.c);
    let sigma = F::of(SUFFICIENT_DECREASE);
    let half = F::of(0.5);
    let tiny = F::of(1e-12);

    // column-major copy for per-coordinate passes
    let mut columns: Vec<Vec<(usize, F)>> = vec![Vec::new(); dim];
    for (i, x) in xs.iter().enumerate() {
        for (j, v) in x.iter() {
            columns[j].push((i, v));
        }
    }

    let mut model = LogisticModel::zeros(dim);
    let mut margins = vec![F::zero(); n];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_change = F::zero();

        // bias: plain Newton step with backtracking
        {
            let (mut g, mut h) = (F::zero(), F::zero());
            for (&z, &y) in margins.iter().zip(ys) {
                let p = sigmoid(z);
                g = g + p - target::<F>(y);
                h = h + p * (F::one() - p);
            }
            let d = -g / (h + tiny);
            let predicted = g * d;
            let mut beta = F::one();
            for _ in 0..MAX_BACKTRACKS {
                let step = beta * d;
                let diff: F = margins
                    .iter()
                    .zip(ys)
                    .map(|(&z, &y)| sample_loss(z + step, y) - sample_loss(z, y))
                    .sum();
                if diff <= sigma * beta * predicted {
                    model.bias = model.bias + step;
                    margins.iter_mut().for_each(|z| *z = *z + step);
                    max_change = max_change.max(step.abs());
                    break;
                }
                beta = beta * half;
            }
        }

        for (j, column) in columns.iter().enumerate() {
            if column.is_empty() {
                continue;
            }
            let (mut g, mut h) = (F::zero(), F::zero());
            for &(i, v) in column {
                let p = sigmoid(margins[i]);
                g = g + (p - target::<F>(ys[i])) * v;
                h = h + p * (F::one() - p) * v * v;
            }
            h = h + tiny;
            let w = model.weights[j];
            // minimizer of g·d + h·d²/2 + λ|w + d|
            let d = if g + lambda <= h * w {
                -(g + lambda) / h
            } else if g - lambda >= h * w {
                -(g - lambda) / h
            } else {
                -w
            };
            if d == F::zero() {
                continue;
            }
            let predicted = g * d + lambda * ((w + d).abs() - w.abs());
            let mut beta = F::one();
            for _ in 0..MAX_BACKTRACKS {
                let step = beta * d;
                let data: F = column
                    .iter()
                    .map(|&(i, v)| sample_loss(margins[i] + step * v, ys[i]) - sample_loss(margins[i], ys[i]))
                    .sum();
                let diff = data + lambda * ((w + step).abs() - w.abs());
                if diff <= sigma * beta * predicted {
                    model.weights[j] = if beta == F::one() && d == -w { F::zero() } else { w + step };
                    for &(i, v) in column {
                        margins[i] = margins[i] + step * v;
                    }
                    max_change = max_change.max(step.abs());
                    break;
                }
                beta = beta * half;
            }
        }

        if max_change < F::of(cfg.tolerance) {
            converged = true;
            break;
        }
    }

    model.converged = converged;
    model.sweeps = sweeps;
    model.objective = logistic_objective(&model, xs, ys, cfg.c);
    if !converged {
        log::warn!(
            "logistic regression stopped after {} sweeps without converging; objective {}",
            sweeps,
            model.objective
        );
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: &[Vec<f64>]) -> Vec<SparseVector<f64>> {
        rows.iter().map(|r| SparseVector::from_dense(r)).collect()
    }

    fn refs<F>(v: &[SparseVector<F>]) -> Vec<&SparseVector<F>> {
        v.iter().collect()
    }

    fn noisy_problem(seed: u64, n: usize, d: usize) -> (Vec<SparseVector<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..d).map(|j| if j % 3 == 0 { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..d)
                .map(|_| if rng.random_bool(0.6) { rng.random_range(-1.0..1.0) } else { 0.0 })
                .collect();
            let z: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3;
            ys.push(rng.random::<f64>() < sigmoid(z));
            xs.push(SparseVector::from_dense(&x));
        }
        (xs, ys)
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let xs = dense(&[vec![2.0, 0.0], vec![1.5, 0.5], vec![0.0, 2.0], vec![0.5, 1.5]]);
        let ys = [true, true, false, false];
        let m = train_logistic(&refs(&xs), &ys, &LogisticConfig::default()).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            assert_eq!(m.predict_proba(x) > 0.5, y);
        }
    }

    #[test]
    fn strong_penalty_zeroes_every_weight() {
        let xs = dense(&[vec![2.0, 0.0], vec![1.5, 0.5], vec![0.0, 2.0], vec![0.5, 1.5]]);
        let ys = [true, true, false, false];
        let cfg = LogisticConfig {
            c: 0.001,
            ..LogisticConfig::default()
        };
        let m = train_logistic(&refs(&xs), &ys, &cfg).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0), "{:?}", m.weights);
        assert!(m.converged);
    }

    #[test]
    fn single_class_is_rejected() {
        let xs = dense(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            train_logistic(&refs(&xs), &[true, true], &LogisticConfig::default()),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let m = LogisticModel::<f64>::zeros(4);
        let x = SparseVector::from_dense(&[1.0, -3.0, 0.0, 9.0]);
        assert_eq!(m.predict_proba(&x), 0.5);
    }

    fn brute_objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[bool], c: f64) -> f64 {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            total -= if y { p.ln() } else { (1.0 - p).ln() };
        }
        total + w.iter().map(|v| v.abs()).sum::<f64>() / c
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (xs, ys) = noisy_problem(2, 60, 6);
        let dense_xs: Vec<Vec<f64>> = xs.iter().map(|x| x.to_dense()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut m = LogisticModel::zeros(6);
            m.weights = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
            m.bias = rng.random_range(-1.0..1.0);
            let g = logistic_gradient(&m, &refs(&xs), &ys, 20.0);
            let eps = 1e-6;
            for j in 0..=6 {
                let mut plus = m.weights.clone();
                let mut minus = m.weights.clone();
                let (bp, bm) = if j == 6 {
                    (m.bias + eps, m.bias - eps)
                } else {
                    plus[j] += eps;
                    minus[j] -= eps;
                    (m.bias, m.bias)
                };
                let fd = (brute_objective(&plus, bp, &dense_xs, &ys, 20.0)
                    - brute_objective(&minus, bm, &dense_xs, &ys, 20.0))
                    / (2.0 * eps);
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-8);
                assert!(rel < 1e-4, "coord {j}: fd {fd} analytic {}", g[j]);
            }
        }
    }

    #[test]
    fn solution_satisfies_optimality_conditions() {
        let (xs, ys) = noisy_problem(5, 80, 8);
        let cfg = LogisticConfig::default();
        let m = train_logistic(&refs(&xs), &ys, &cfg).unwrap();
        assert!(m.converged);
        let g = logistic_gradient(&m, &refs(&xs), &ys, cfg.c);
        let active: f64 = g
            .iter()
            .enumerate()
            .filter(|(j, _)| *j == m.dim() || m.weights[*j] != 0.0)
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(active < 10.0 * cfg.tolerance, "gradient norm {active}");
        for (j, &w) in m.weights.iter().enumerate() {
            if w == 0.0 {
                assert!(g[j].abs() <= 1.0 / cfg.c + cfg.tolerance, "coord {j}: {}", g[j]);
            }
        }
    }

    #[test]
    fn objective_never_rises_between_sweeps() {
        let (xs, ys) = noisy_problem(8, 50, 5);
        let mut last = f64::INFINITY;
        for sweeps in 1..25 {
            let cfg = LogisticConfig {
                max_sweeps: sweeps,
                tolerance: 1e-14,
                ..LogisticConfig::default()
            };
            let m = train_logistic(&refs(&xs), &ys, &cfg).unwrap();
            assert!(m.objective <= last + 1e-12, "sweep {sweeps}: {} > {last}", m.objective);
            last = m.objective;
        }
    }

    #[test]
    fn trains_in_single_precision() {
        let (xs, ys) = noisy_problem(9, 60, 4);
        let xs32: Vec<SparseVector<f32>> = xs
            .iter()
            .map(|x| SparseVector::from_dense(&x.to_dense().iter().map(|&v| v as f32).collect::<Vec<_>>()))
            .collect();
        let m64 = train_logistic(&refs(&xs), &ys, &LogisticConfig::default()).unwrap();
        let m32 = train_logistic(&refs(&xs32), &ys, &LogisticConfig::default()).unwrap();
        for (a, b) in m64.weights.iter().zip(&m32.weights) {
            assert!((a - *b as f64).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn probabilities_match_dense_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let d = rng.random_range(1..20);
            let mut m = LogisticModel::zeros(d);
            m.weights = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            m.bias = rng.random_range(-1.0..1.0);
            let x: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..2.0) } else { 0.0 }).collect();
            let z: f64 = x.iter().zip(&m.weights).map(|(a, b)| a * b).sum::<f64>() + m.bias;
            let oracle = 1.0 / (1.0 + (-z).exp());
            assert!((m.predict_proba(&SparseVector::from_dense(&x)) - oracle).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn probability_is_monotone_in_positive_weight_features(
            w in proptest::collection::vec(0.0f64..3.0, 3),
            x in proptest::collection::vec(0.0f64..2.0, 3),
            j in 0usize..3,
            bump in 0.0f64..2.0,
        ) {
            let mut m = LogisticModel::zeros(3);
            m.weights = w;
            let before = m.predict_proba(&SparseVector::from_dense(&x));
            let mut y = x.clone();
            y[j] += bump;
            let after = m.predict_proba(&SparseVector::from_dense(&y));
            prop_assert!(after >= before);
            prop_assert!((0.0..=1.0).contains(&after));
        }
    }
}
