//! Estimate a measurement-error covariance from simulated QC replicates,
//! both from plain repeats and from within-pair differences.

use knockoff_mem::datagen::{ar_cov, ArSpec};
use knockoff_mem::errorcov::{psd_repair, qc_cov, qc_paired_cov, QcOptions, QcSamples};
use knockoff_mem::linalg::sample_mvn_rows;
use knockoff_mem::rng::{Role, Streams};
use nalgebra::DMatrix;

fn main() -> knockoff_mem::error::Result<()> {
    let p = 5;
    let truth = ar_cov(ArSpec { sigma2: 0.4, rho: 0.3, p })?;
    let streams = Streams::new(5);
    let noise = sample_mvn_rows(400, &truth, &mut streams.rng(Role::Errors))?;
    // Each QC row is a reference level plus measurement error.
    let qc = QcSamples::new(noise.map(|e| 10.0 + e));

    let direct = qc_cov(&qc, QcOptions::default())?;
    println!("max |error| of the repeat estimate: {:.3}", (direct.matrix() - &truth).abs().max());

    // Pairs measured in the same batch share a batch offset that the
    // paired estimator cancels out.
    let offsets = sample_mvn_rows(200, &DMatrix::identity(p, p), &mut streams.rng(Role::Features))?;
    let shifted = DMatrix::from_fn(400, p, |i, j| qc.values[(i, j)] + offsets[(i / 2, j)]);
    let batches: Vec<String> = (0..400).map(|i| format!("b{}", i / 2)).collect();
    let paired = QcSamples::new(shifted.clone()).with_batches(batches)?;
    let by_pair = qc_paired_cov(&paired, QcOptions::default())?;
    let naive = qc_cov(&QcSamples::new(shifted), QcOptions::default())?;
    println!("max |error| with batch offsets, paired: {:.3}", (by_pair.matrix() - &truth).abs().max());
    println!("max |error| with batch offsets, naive:  {:.3}", (naive.matrix() - &truth).abs().max());

    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
    let repaired = psd_repair(&indefinite, 1e-4)?;
    println!("repaired eigenvalues: {:.4?}", repaired.symmetric_eigenvalues().as_slice());
    Ok(())
}
