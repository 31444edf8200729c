//! RBF-kernel support vector machine trained by SMO, with Platt-calibrated
//! probabilities.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_training_set, ModelError};
use crate::corpus::stratified_folds;
use crate::features::SparseVector;
use crate::num::sigmoid;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// RBF bandwidth; `None` uses `1 / (n_features · variance)` of the
    /// training matrix.
    pub gamma: Option<f64>,
    /// Stop once the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cache_mb: usize,
    /// Folds used to collect out-of-sample decision values for calibration.
    pub calibration_folds: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 3000.0,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
            cache_mb: 256,
            calibration_folds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSvmModel<F> {
    pub support_vectors: Vec<SparseVector<F>>,
    /// α_i of each support vector.
    pub alphas: Vec<F>,
    /// Labels of the support vectors.
    pub labels: Vec<bool>,
    pub intercept: F,
    pub gamma: f64,
    pub c: f64,
    /// `P(y=1 | f) = 1 / (1 + exp(A·f + B))`.
    pub platt_a: f64,
    pub platt_b: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<F: Scalar> KernelSvmModel<F> {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, |v| v.dim())
    }

    pub fn decision(&self, x: &SparseVector<F>) -> F {
        let gamma = F::of(self.gamma);
        let xn = x.squared_norm();
        let mut f = self.intercept;
        for ((sv, &a), &y) in self.support_vectors.iter().zip(&self.alphas).zip(&self.labels) {
            let k = rbf(gamma, sv.squared_norm(), xn, sv.dot(x));
            f = if y { f + a * k } else { f - a * k };
        }
        f
    }

    pub fn predict_proba(&self, x: &SparseVector<F>) -> F {
        platt_probability(self.platt_a, self.platt_b, self.decision(x))
    }
}

fn platt_probability<F: Scalar>(a: f64, b: f64, f: F) -> F {
    sigmoid(-(F::of(a) * f + F::of(b)))
}

#[inline]
fn rbf<F: Scalar>(gamma: F, na: F, nb: F, ab: F) -> F {
    // clamp tiny negatives from cancellation
    let d = (na + nb - (ab + ab)).max(F::zero());
    (-gamma * d).exp()
}

/// `1 / (n_features · var)` over every entry of the (implicitly dense) matrix;
/// 1.0 when the matrix is constant.
pub fn default_gamma<F: Scalar>(xs: &[&SparseVector<F>]) -> f64 {
    let dim = xs.first().map_or(0, |x| x.dim());
    let cells = (xs.len() * dim) as f64;
    if cells == 0.0 {
        return 1.0;
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for x in xs {
        for &v in x.values() {
            let v = v.as_f64();
            s += v;
            s2 += v * v;
        }
    }
    let mean = s / cells;
    let var = s2 / cells - mean * mean;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

/// Lazily computed kernel rows with a bounded least-recently-used cache.
struct KernelCache<'a, F> {
    xs: Vec<&'a SparseVector<F>>,
    norms: Vec<F>,
    gamma: F,
    rows: HashMap<usize, (Arc<Vec<F>>, u64)>,
    capacity: usize,
    tick: u64,
}

impl<'a, F: Scalar> KernelCache<'a, F> {
    fn new(xs: Vec<&'a SparseVector<F>>, gamma: F, cache_mb: usize) -> Self {
        let n = xs.len().max(1);
        let per_row = n * std::mem::size_of::<F>();
        let capacity = ((cache_mb << 20) / per_row).max(2);
        KernelCache {
            norms: xs.iter().map(|x| x.squared_norm()).collect(),
            xs,
            gamma,
            rows: HashMap::new(),
            capacity,
            tick: 0,
        }
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn row(&mut self, i: usize) -> Arc<Vec<F>> {
        self.tick += 1;
        if let Some((row, used)) = self.rows.get_mut(&i) {
            *used = self.tick;
            return row.clone();
        }
        if self.rows.len() >= self.capacity {
            let oldest = self.rows.iter().min_by_key(|(_, (_, used))| *used).map(|(k, _)| *k);
            if let Some(k) = oldest {
                self.rows.remove(&k);
            }
        }
        let xi = self.xs[i];
        let row: Vec<F> = self
            .xs
            .iter()
            .zip(&self.norms)
            .map(|(xt, &nt)| rbf(self.gamma, self.norms[i], nt, xi.dot(xt)))
            .collect();
        let row = Arc::new(row);
        self.rows.insert(i, (row.clone(), self.tick));
        row
    }
}

/// SMO state for `min ½αᵀQα − eᵀα  s.t.  0 ≤ α ≤ C, yᵀα = 0`, where
/// `Q_ij = y_i y_j K_ij`. Pairs are chosen by maximal KKT violation.
struct Smo<'a, F> {
    kernel: KernelCache<'a, F>,
    y: Vec<F>,
    alpha: Vec<F>,
    grad: Vec<F>,
    c: F,
    iterations: usize,
}

const TAU: f64 = 1e-12;

impl<'a, F: Scalar> Smo<'a, F> {
    fn new(kernel: KernelCache<'a, F>, ys: &[bool], c: f64) -> Self {
        let n = kernel.len();
        Smo {
            kernel,
            y: ys.iter().map(|&y| if y { F::one() } else { -F::one() }).collect(),
            alpha: vec![F::zero(); n],
            grad: vec![-F::one(); n],
            c: F::of(c),
            iterations: 0,
        }
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > F::zero() && self.alpha[t] < self.c) || (self.y[t] < F::zero() && self.alpha[t] > F::zero())
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < F::zero() && self.alpha[t] < self.c) || (self.y[t] > F::zero() && self.alpha[t] > F::zero())
    }

    /// Maximal violating pair and the size of the violation.
    fn select(&self) -> Option<(usize, usize, F)> {
        let mut up: Option<(usize, F)> = None;
        let mut low: Option<(usize, F)> = None;
        for t in 0..self.alpha.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && up.is_none_or(|(_, best)| v > best) {
                up = Some((t, v));
            }
            if self.in_low(t) && low.is_none_or(|(_, best)| v < best) {
                low = Some((t, v));
            }
        }
        let ((i, m), (j, big_m)) = (up?, low?);
        Some((i, j, m - big_m))
    }

    /// Runs one pair update. Returns false once the violation is below `tol`.
    fn step(&mut self, tol: F) -> bool {
        let Some((i, j, gap)) = self.select() else {
            return false;
        };
        if gap < tol {
            return false;
        }
        self.iterations += 1;
        let ki = self.kernel.row(i);
        let kj = self.kernel.row(j);
        let (yi, yj) = (self.y[i], self.y[j]);
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let tau = F::of(TAU);
        if yi != yj {
            let mut quad = ki[i] + kj[j] - (ki[j] + ki[j]);
            if quad <= F::zero() {
                quad = tau;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai = ai + delta;
            aj = aj + delta;
            if diff > F::zero() {
                if aj < F::zero() {
                    aj = F::zero();
                    ai = diff;
                }
            } else if ai < F::zero() {
                ai = F::zero();
                aj = -diff;
            }
            if diff > F::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = ki[i] + kj[j] - (ki[j] + ki[j]);
            if quad <= F::zero() {
                quad = tau;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai = ai - delta;
            aj = aj + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < F::zero() {
                aj = F::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < F::zero() {
                ai = F::zero();
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.grad.len() {
            let yt = self.y[t];
            self.grad[t] = self.grad[t] + yt * (yi * ki[t] * di + yj * kj[t] * dj);
        }
        debug_assert!(self.alpha.iter().all(|&a| a >= F::zero() && a <= c));
        debug_assert!({
            let s: f64 = self.alpha.iter().zip(&self.y).map(|(a, y)| (*a * *y).as_f64()).sum();
            s.abs() <= 1e-9 * c.as_f64().max(1.0)
        });
        true
    }

    /// Intercept `b` of `f(x) = Σ α_i y_i K(x_i, x) + b`.
    fn intercept(&self) -> F {
        let (mut sum, mut free) = (F::zero(), 0usize);
        let (mut ub, mut lb) = (F::infinity(), F::neg_infinity());
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] > F::zero() && self.alpha[t] < self.c {
                sum = sum + yg;
                free += 1;
            } else if (self.alpha[t] >= self.c && self.y[t] < F::zero()) || (self.alpha[t] <= F::zero() && self.y[t] > F::zero()) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if free > 0 {
            sum / F::of(free as f64)
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) * F::of(0.5)
        } else if ub.is_finite() {
            ub
        } else {
            lb
        };
        -rho
    }
}

struct DualSolution<F> {
    alpha: Vec<F>,
    intercept: F,
    iterations: usize,
    converged: bool,
}

fn solve_dual<F: Scalar>(xs: Vec<&SparseVector<F>>, ys: &[bool], gamma: f64, cfg: &SvmConfig) -> DualSolution<F> {
    let kernel = KernelCache::new(xs, F::of(gamma), cfg.cache_mb);
    let mut smo = Smo::new(kernel, ys, cfg.c);
    let tol = F::of(cfg.tolerance);
    let mut converged = false;
    while smo.iterations < cfg.max_iterations {
        if !smo.step(tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {} iterations without reaching tolerance", smo.iterations);
    }
    DualSolution {
        intercept: smo.intercept(),
        alpha: smo.alpha,
        iterations: smo.iterations,
        converged,
    }
}

fn into_model<F: Scalar>(
    xs: &[&SparseVector<F>],
    ys: &[bool],
    sol: DualSolution<F>,
    gamma: f64,
    c: f64,
) -> KernelSvmModel<F> {
    let mut model = KernelSvmModel {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        labels: Vec::new(),
        intercept: sol.intercept,
        gamma,
        c,
        platt_a: -1.0,
        platt_b: 0.0,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > F::zero() {
            model.support_vectors.push(xs[t].clone());
            model.alphas.push(a);
            model.labels.push(ys[t]);
        }
    }
    model
}

/// Fits `(A, B)` of `P(y=1|f) = 1/(1+exp(A f + B))` by Newton's method with
/// backtracking on smoothed targets.
pub fn fit_platt(decisions: &[f64], ys: &[bool]) -> (f64, f64) {
    let prior1 = ys.iter().filter(|&&y| y).count() as f64;
    let prior0 = ys.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = ys.iter().map(|&y| if y { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                // t·z + log(1 + exp(−z)), written stably
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&f, &ti) in decisions.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

pub fn train_svm<F: Scalar>(
    xs: &[&SparseVector<F>],
    ys: &[bool],
    cfg: &SvmConfig,
    seed: u64,
) -> Result<KernelSvmModel<F>, ModelError> {
    check_training_set(xs.iter().map(|x| x.dim()), ys)?;
    if !(cfg.c > 0.0) || !(cfg.tolerance > 0.0) || cfg.gamma.is_some_and(|g| !(g > 0.0)) {
        return Err(ModelError::InvalidConfig("C, gamma and tolerance must be positive".into()));
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(ModelError::DegenerateData(
            "every training point is identical, so the kernel matrix cannot separate the classes".into(),
        ));
    }
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(xs));
    let sol = solve_dual(xs.to_vec(), ys, gamma, cfg);
    let mut model = into_model(xs, ys, sol, gamma, cfg.c);

    // out-of-fold decision values; in-sample if a class is too small to split
    let decisions: Vec<f64> = match stratified_folds(ys, cfg.calibration_folds.max(2), seed) {
        Ok(folds) => {
            let mut out = vec![0.0; xs.len()];
            for f in 0..folds.k() {
                let held = folds.members(f);
                let rest = folds.members_of(&(0..folds.k()).filter(|&g| g != f).collect::<Vec<_>>());
                let sub_x: Vec<&SparseVector<F>> = rest.iter().map(|&t| xs[t]).collect();
                let sub_y: Vec<bool> = rest.iter().map(|&t| ys[t]).collect();
                let sub = solve_dual(sub_x.clone(), &sub_y, gamma, cfg);
                let sub_model = into_model(&sub_x, &sub_y, sub, gamma, cfg.c);
                for t in held {
                    out[t] = sub_model.decision(xs[t]).as_f64();
                }
            }
            out
        }
        Err(_) => xs.iter().map(|x| model.decision(x).as_f64()).collect(),
    };
    let (a, b) = fit_platt(&decisions, ys);
    model.platt_a = a;
    model.platt_b = b;
    Ok(model)
}
