//! Corrected lasso: ℓ1-constrained least squares with the measurement-error
//! covariance subtracted from the Gram matrix.
//!
//! The objective `βᵀ H β - 2 cᵀ β` with `H = G - w̄ Σ` may be indefinite, so
//! the solver is projected gradient with Nesterov momentum, backtracking and
//! a function-value restart. A radius whose solve fails to settle within the
//! iteration cap is reported as not converged and skipped by the caller.

use nalgebra::{DMatrix, DVector};

pub const MAX_ITER: usize = 2000;
const STEP_TOL: f64 = 1e-8;

/// Euclidean projection onto `{β : ||β||₁ ≤ radius}` by the sort-based
/// threshold search.
pub fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    if radius <= 0.0 {
        return DVector::zeros(v.len());
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

/// Quadratic `βᵀ H β - 2 cᵀ β`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Quadratic {
    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&(&self.h * beta)) - 2.0 * self.c.dot(beta)
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.h * beta - &self.c) * 2.0
    }

    fn lipschitz(&self) -> f64 {
        let m = self.c.len();
        if m == 0 {
            return 1.0;
        }
        let mut v = DVector::from_fn(m, |i, _| 1.0 + (i % 3) as f64);
        let mut est = 0.0;
        for _ in 0..50 {
            let w = &self.h * &v;
            let norm = w.norm();
            if norm == 0.0 {
                break;
            }
            est = norm / v.norm();
            v = w / norm;
        }
        (2.0 * est).max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdFit {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize over the ℓ1 ball of the given radius from `init` (zero if none).
pub fn minimize_l1_ball(problem: &Quadratic, radius: f64, init: Option<&DVector<f64>>) -> PgdFit {
    let m = problem.c.len();
    let mut x = project_l1_ball(&init.cloned().unwrap_or_else(|| DVector::zeros(m)), radius);
    let mut fx = problem.value(&x);
    let mut y = x.clone();
    let mut momentum: f64 = 1.0;
    let mut step = 1.0 / problem.lipschitz();
    for it in 1..=MAX_ITER {
        let fy = problem.value(&y);
        let gy = problem.gradient(&y);
        let mut next;
        loop {
            next = project_l1_ball(&(&y - &gy * step), radius);
            let diff = &next - &y;
            let bound = fy + gy.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if problem.value(&next) <= bound + 1e-12 * bound.abs().max(1.0) || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let f_next = problem.value(&next);
        if !f_next.is_finite() {
            return PgdFit { beta: x, objective: fx, iterations: it, converged: false };
        }
        let moved = (&next - &x).amax();
        if f_next > fx {
            // Restart: drop momentum and take a plain step from x.
            momentum = 1.0;
            y = x.clone();
            if moved < STEP_TOL * x.amax().max(1.0) {
                return PgdFit { beta: x, objective: fx, iterations: it, converged: true };
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &x) * ((momentum - 1.0) / t_next);
        momentum = t_next;
        x = next;
        fx = f_next;
        if moved < STEP_TOL * x.amax().max(1.0) {
            return PgdFit { beta: x, objective: fx, iterations: it, converged: true };
        }
    }
    PgdFit { beta: x, objective: fx, iterations: MAX_ITER, converged: false }
}
