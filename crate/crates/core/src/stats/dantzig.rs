//! Dantzig selector paths and the matrix-uncertainty selector.
//!
//! For a Gram matrix `G` and score vector `c` the Dantzig problem at level
//! `κ` is
//!
//! ```text
//! min ||β||₁  subject to  ||c - G β||∞ ≤ κ
//! ```
//!
//! Written as an LP in `β = u - v` with slacks, only the right-hand side
//! depends on `κ`, so the optimal basis is piecewise constant in `κ` and the
//! solution is piecewise linear. [`DantzigPath`] traces every breakpoint from
//! `κ = ||c||∞` (where `β = 0`) downwards with dual simplex pivots, which
//! makes the solution at any `κ` available by interpolation.
//!
//! The matrix-uncertainty selector replaces the constraint by
//! `||c - G β||∞ ≤ λ + δ ||β||₁`; at the optimum it coincides with the
//! Dantzig solution at `κ = λ + δ t` where `t = ||β_DS(κ)||₁`, found by the
//! fixed-point iteration in [`mu_selector`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
/// Refactor after `max(MIN_REFACTOR, 4m)` pivots; a refactor costs about
/// as much as `2m` pivots.
const MIN_REFACTOR: usize = 100;

/// The parametric LP in tableau form.
///
/// Rows: `G(u - v) + s1 = c + κ` and `-G(u - v) + s2 = κ - c`.
/// Variables: `u` (0..m), `v` (m..2m), `s1` (2m..3m), `s2` (3m..4m).
struct Tableau {
    m: usize,
    gram: DMatrix<f64>,
    c: DVector<f64>,
    /// Row-major `[B⁻¹A_u | B⁻¹ | B⁻¹b | B⁻¹1]`, `2m` rows.
    t: Vec<f64>,
    width: usize,
    basis: Vec<usize>,
    /// Reduced costs for all `4m` variables.
    d: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn new(gram: &DMatrix<f64>, c: &DVector<f64>) -> Self {
        let m = c.len();
        let rows = 2 * m;
        let width = m + rows + 2;
        let mut t = vec![0.0; rows * width];
        for i in 0..m {
            for j in 0..m {
                t[i * width + j] = gram[(i, j)];
                t[(m + i) * width + j] = -gram[(i, j)];
            }
        }
        for r in 0..rows {
            t[r * width + m + r] = 1.0;
            t[r * width + m + rows] = if r < m { c[r] } else { -c[r - m] };
            t[r * width + m + rows + 1] = 1.0;
        }
        let mut d = vec![0.0; 4 * m];
        d[..2 * m].fill(1.0);
        Self {
            m,
            gram: gram.clone(),
            c: c.clone(),
            t,
            width,
            basis: (0..rows).map(|r| 2 * m + r).collect(),
            d,
            pivots: 0,
        }
    }

    fn rows(&self) -> usize {
        2 * self.m
    }

    fn p(&self, r: usize) -> f64 {
        self.t[r * self.width + self.m + self.rows()]
    }

    fn q(&self, r: usize) -> f64 {
        self.t[r * self.width + self.m + self.rows() + 1]
    }

    /// Entry of `B⁻¹ A` at row `r`, variable `var`.
    fn entry(&self, r: usize, var: usize) -> f64 {
        let m = self.m;
        let row = &self.t[r * self.width..];
        if var < m {
            row[var]
        } else if var < 2 * m {
            -row[var - m]
        } else {
            row[m + var - 2 * m]
        }
    }

    fn beta(&self, kappa: f64) -> DVector<f64> {
        let m = self.m;
        let mut beta = DVector::zeros(m);
        for (r, &var) in self.basis.iter().enumerate() {
            let x = self.p(r) + kappa * self.q(r);
            if var < m {
                beta[var] += x;
            } else if var < 2 * m {
                beta[var - m] -= x;
            }
        }
        beta
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let m = self.m;
        let w = self.width;
        let alpha = self.entry(r, e);
        let de = self.d[e];
        let ratio = de / alpha;
        for var in 0..4 * m {
            let a = self.entry(r, var);
            if a != 0.0 {
                self.d[var] -= ratio * a;
            }
        }
        self.d[e] = 0.0;
        let col: Vec<f64> = (0..self.rows()).map(|i| self.entry(i, e)).collect();
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= alpha;
            }
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for (i, &f) in col.iter().enumerate() {
            if i == r || f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.basis[r] = e;
        self.pivots += 1;
        if self.pivots % MIN_REFACTOR.max(4 * self.m) == 0 {
            self.refactor();
        }
    }

    /// Column of the original constraint matrix for a variable.
    fn column(&self, var: usize) -> DVector<f64> {
        let m = self.m;
        let rows = self.rows();
        let mut a = DVector::zeros(rows);
        if var < 2 * m {
            let j = var % m;
            let sign = if var < m { 1.0 } else { -1.0 };
            for i in 0..m {
                a[i] = sign * self.gram[(i, j)];
                a[m + i] = -sign * self.gram[(i, j)];
            }
        } else {
            a[var - 2 * m] = 1.0;
        }
        a
    }

    /// Recompute the tableau from the basis to stop error build-up.
    fn refactor(&mut self) {
        let m = self.m;
        let rows = self.rows();
        let mut b = DMatrix::zeros(rows, rows);
        for (r, &var) in self.basis.iter().enumerate() {
            b.set_column(r, &self.column(var));
        }
        let lu = b.lu();
        let mut rhs = DMatrix::zeros(rows, m + rows + 2);
        for j in 0..m {
            rhs.set_column(j, &self.column(j));
        }
        for r in 0..rows {
            rhs[(r, m + r)] = 1.0;
            rhs[(r, m + rows)] = if r < m { self.c[r] } else { -self.c[r - m] };
            rhs[(r, m + rows + 1)] = 1.0;
        }
        let Some(sol) = lu.solve(&rhs) else {
            return;
        };
        for r in 0..rows {
            for k in 0..self.width {
                self.t[r * self.width + k] = sol[(r, k)];
            }
        }
        // y = c_Bᵀ B⁻¹, then d_j = cost_j - y·A_j.
        let mut y = vec![0.0; rows];
        for (r, &var) in self.basis.iter().enumerate() {
            if var < 2 * m {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += self.t[r * self.width + m + k];
                }
            }
        }
        for var in 0..4 * m {
            let cost = if var < 2 * m { 1.0 } else { 0.0 };
            let a = self.column(var);
            let dot: f64 = a.iter().zip(&y).map(|(ai, yi)| ai * yi).sum();
            self.d[var] = (cost - dot).max(0.0);
        }
        for &var in &self.basis {
            self.d[var] = 0.0;
        }
    }
}

/// Piecewise-linear Dantzig solution path.
#[derive(Debug, Clone)]
pub struct DantzigPath {
    /// Breakpoints in decreasing order; the first is `||c||∞`.
    pub kappas: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
    /// Smallest `κ` at which the problem is known to be feasible.
    pub floor: f64,
}

impl DantzigPath {
    /// Trace the path from `||c||∞` down to `kappa_min`.
    pub fn solve(gram: &DMatrix<f64>, c: &DVector<f64>, kappa_min: f64) -> Result<Self> {
        let m = c.len();
        if gram.nrows() != m || gram.ncols() != m {
            return Err(Error::Parameter("Gram matrix and score vector disagree in size".into()));
        }
        let top = c.amax();
        if m == 0 || top <= kappa_min {
            let k = top.max(kappa_min);
            return Ok(Self { kappas: vec![k], betas: vec![DVector::zeros(m)], floor: kappa_min.min(k) });
        }
        let mut tab = Tableau::new(gram, c);
        let mut kappa = top;
        let mut kappas = vec![kappa];
        let mut betas = vec![DVector::zeros(m)];
        let max_pivots = 200 * m + 1000;
        let scale = top.max(1e-300);
        loop {
            // Next breakpoint: the largest κ below the current one at which a
            // basic variable reaches zero.
            let mut next = f64::NEG_INFINITY;
            let mut leave = usize::MAX;
            for r in 0..tab.rows() {
                let q = tab.q(r);
                if q > PIVOT_TOL {
                    let k = (-tab.p(r) / q).min(kappa);
                    if k > next + 1e-13 * scale {
                        next = k;
                        leave = r;
                    }
                }
            }
            if leave == usize::MAX || next <= kappa_min {
                kappas.push(kappa_min);
                betas.push(tab.beta(kappa_min));
                return Ok(Self { kappas, betas, floor: kappa_min });
            }
            kappa = next;
            if kappa < kappas[kappas.len() - 1] {
                kappas.push(kappa);
                betas.push(tab.beta(kappa));
            }
            // Dual ratio test over columns with a negative pivot-row entry.
            let mut enter = usize::MAX;
            let mut best = f64::INFINITY;
            let mut best_mag = 0.0;
            for var in 0..4 * m {
                let a = tab.entry(leave, var);
                if a < -PIVOT_TOL {
                    let ratio = tab.d[var].max(0.0) / -a;
                    if ratio < best - 1e-12 || (ratio <= best + 1e-12 && -a > best_mag) {
                        best = ratio;
                        best_mag = -a;
                        enter = var;
                    }
                }
            }
            if enter == usize::MAX {
                return Ok(Self { kappas, betas, floor: kappa });
            }
            tab.pivot(leave, enter);
            if tab.pivots > max_pivots {
                return Err(Error::NonConvergence {
                    solver: "Dantzig path",
                    iterations: tab.pivots,
                    last_iterate: tab.beta(kappa).as_slice().to_vec(),
                });
            }
        }
    }

    /// Solution at `kappa`, interpolated between breakpoints. Above the
    /// first breakpoint the solution is zero.
    pub fn at(&self, kappa: f64) -> Result<DVector<f64>> {
        if kappa >= self.kappas[0] {
            return Ok(self.betas[0].clone());
        }
        if kappa < self.floor - 1e-12 * self.kappas[0].max(1.0) {
            return Err(Error::Solver(format!("Dantzig problem infeasible or not traced below {}", self.floor)));
        }
        let kappa = kappa.max(self.floor);
        let k = self.kappas.partition_point(|&v| v > kappa);
        let k = k.clamp(1, self.kappas.len() - 1);
        let (hi, lo) = (self.kappas[k - 1], self.kappas[k]);
        if hi - lo <= 0.0 {
            return Ok(self.betas[k].clone());
        }
        let w = (hi - kappa) / (hi - lo);
        Ok(&self.betas[k - 1] * (1.0 - w) + &self.betas[k] * w)
    }

    pub fn l1_at(&self, kappa: f64) -> Result<f64> {
        Ok(self.at(kappa)?.lp_norm(1))
    }
}

/// Iterates of the matrix-uncertainty fixed point, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MuTrace {
    pub t: Vec<f64>,
    pub converged: bool,
}

/// Matrix-uncertainty selector at `lambda` with slack `delta`.
///
/// Iterates `t ← ||β_DS(λ + δ t)||₁` from `t = 0`. The map is nonincreasing,
/// so successive iterates bracket the fixed point; when the plain iteration
/// stops contracting the bracket midpoint is used instead.
pub fn mu_selector(path: &DantzigPath, lambda: f64, delta: f64, tol: f64, max_iter: usize) -> Result<(DVector<f64>, MuTrace)> {
    let f = |t: f64| path.l1_at(lambda + delta * t);
    let mut trace = vec![0.0];
    if delta == 0.0 {
        let beta = path.at(lambda)?;
        trace.push(beta.lp_norm(1));
        return Ok((beta, MuTrace { t: trace, converged: true }));
    }
    let mut lo = 0.0;
    let mut hi = f(0.0)?;
    let mut t = 0.0;
    let mut last_step = f64::INFINITY;
    for _ in 0..max_iter {
        let mut next = f(t)?;
        let step = (next - t).abs();
        if step > 0.5 * last_step {
            next = 0.5 * (lo + hi);
        }
        // g(t) = f(t) - t is decreasing: its sign says which side t* is on.
        let g = f(next)? - next;
        if g >= 0.0 {
            lo = lo.max(next);
        } else {
            hi = hi.min(next);
        }
        last_step = (next - t).abs();
        t = next;
        trace.push(t);
        if last_step < tol {
            return Ok((path.at(lambda + delta * t)?, MuTrace { t: trace, converged: true }));
        }
    }
    Err(Error::NonConvergence { solver: "matrix-uncertainty fixed point", iterations: max_iter, last_iterate: trace })
}

/// Root of `κ - δ ||β_DS(κ)||₁ = λ` located exactly on the piecewise-linear
/// path. Used to check the fixed-point iteration.
pub fn mu_kappa_exact(path: &DantzigPath, lambda: f64, delta: f64) -> Result<f64> {
    let g = |k: f64| -> Result<f64> { Ok(k - delta * path.l1_at(k)? - lambda) };
    if lambda >= path.kappas[0] {
        return Ok(lambda);
    }
    let mut hi = path.kappas[0];
    let mut lo = lambda;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
