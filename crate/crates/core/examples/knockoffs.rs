//! Second-order Gaussian knockoffs for an AR(1) design, with the empirical
//! joint covariance compared against its target.

use knockoff_mem::datagen::{ar_cov, ArSpec};
use knockoff_mem::knockoff::{fit_gaussian, sample_knockoffs, KnockoffPlan, SMethod};
use knockoff_mem::linalg::sample_mvn_rows;
use knockoff_mem::rng::{Role, Streams};
use nalgebra::DMatrix;

fn main() -> knockoff_mem::error::Result<()> {
    let p = 8;
    let sigma = ar_cov(ArSpec { sigma2: 1.0, rho: 0.5, p })?;
    let streams = Streams::new(11);
    let w = sample_mvn_rows(20_000, &sigma, &mut streams.rng(Role::Features))?;

    for method in [SMethod::Equi, SMethod::Block { size: 4 }] {
        let plan = KnockoffPlan::build(fit_gaussian(&w, Some(0.0))?, method)?;
        let wt = sample_knockoffs(&w, &plan, &mut streams.rng(Role::Knockoff))?;
        println!("{method:?}: s = {:.3?}", plan.s.as_slice());

        let joint = covariance(&DMatrix::from_fn(w.nrows(), 2 * p, |i, j| if j < p { w[(i, j)] } else { wt[(i, j - p)] }));
        let mut worst = 0.0f64;
        for a in 0..p {
            for b in 0..p {
                let target = plan.model.sigma[(a, b)] - if a == b { plan.s[a] } else { 0.0 };
                worst = worst.max((joint[(a, p + b)] - target).abs());
                worst = worst.max((joint[(p + a, p + b)] - plan.model.sigma[(a, b)]).abs());
            }
        }
        println!("  largest deviation of Cov([W, W~]) from its target: {worst:.4}");
    }
    Ok(())
}

fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let means = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &means;
    }
    c.tr_mul(&c) / (n - 1.0)
}
