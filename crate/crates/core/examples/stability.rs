//! Stability selection: rerun the randomized pipeline with fresh imputation
//! and knockoff draws and report how often each feature is chosen.

use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::filter::stability_select;
use knockoff_mem::harness::pipeline::{analyze, PipelineConfig};
use knockoff_mem::rng::{Role, Streams};
use knockoff_mem::stats::{Family, StatKind};

fn main() -> knockoff_mem::error::Result<()> {
    let mut spec = ScenarioSpec::preset(Setting::MissingOnly);
    spec.n = 500;
    spec.p = 36;
    let root = Streams::new(7);
    let scenario = generate_scenario(&spec, &root)?;
    let data = vec![scenario.datasets[0].to_observed()?];
    let mut cfg = PipelineConfig::default();
    cfg.impute.k = 3;
    cfg.stats.cv_folds = 5;

    let report = stability_select(spec.p, 6, |r| {
        let run = analyze(&data, Family::Binomial, StatKind::LassoCoef, &cfg, &root.role(Role::Stability).child(r as u64))?;
        Ok(run.selected_1)
    })?;
    println!("signals: {:?}", scenario.truth);
    for (j, f) in report.frequency.iter().enumerate().filter(|(_, f)| **f > 0.0) {
        println!("feature {j:>2}: selected in {:>3.0}% of runs", 100.0 * f);
    }
    println!("stable at 50%: {:?}", report.stable(0.5));
    Ok(())
}
