//! All six importance statistics on one knockoff-augmented design from the
//! measurement-error scenario.

use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::harness::pipeline::{complete, PipelineConfig};
use knockoff_mem::knockoff::knockoff_copies;
use knockoff_mem::rng::Streams;
use knockoff_mem::stats::{compute, AugmentedDesign, ErrorCov, Family, StatKind, StatOptions};

fn main() -> knockoff_mem::error::Result<()> {
    let mut spec = ScenarioSpec::preset(Setting::ErrorOnly);
    spec.p = 36;
    spec.n = 600;
    spec.a_beta = 1.0;
    let streams = Streams::new(3);
    let scenario = generate_scenario(&spec, &streams)?;
    let data = scenario.datasets[0].to_observed()?;

    let cfg = PipelineConfig::default();
    let completed = complete(&data, &cfg.impute, 1, &streams)?;
    let knockoffs = knockoff_copies(&completed, &cfg.knockoff, &streams)?;
    let design = AugmentedDesign::new(&completed.copies[0], &knockoffs[0], &data.outcome, Family::Binomial, &streams)?;
    let sigma = ErrorCov::new(scenario.datasets[0].sigma_eps.clone())?;
    let opts = StatOptions { cv_folds: 5, trees: 200, ..StatOptions::default() };

    println!("signals: {:?}", scenario.truth);
    for kind in [StatKind::LassoCoef, StatKind::LassoOrder, StatKind::RandomForest, StatKind::Gds, StatKind::Gmus, StatKind::CorrectedLasso] {
        let pair = compute(kind, &design, Some(&sigma), &opts)?;
        let wins: Vec<usize> = (0..pair.p()).filter(|&j| pair.z[j] > pair.z_tilde[j]).collect();
        let hits = wins.iter().filter(|j| scenario.truth.contains(j)).count();
        println!("{:<16} original beats knockoff on {:>2} features ({hits} signals)", kind.name(), wins.len());
    }
    Ok(())
}
