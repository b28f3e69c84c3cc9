//! Simultaneous knockoffs over two datasets that share most of their
//! signals: only features relevant to both outcomes count as discoveries.

use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::harness::fdp_power;
use knockoff_mem::harness::pipeline::{analyze, PipelineConfig};
use knockoff_mem::rng::Streams;
use knockoff_mem::stats::{Family, StatKind};

fn main() -> knockoff_mem::error::Result<()> {
    let mut spec = ScenarioSpec::preset(Setting::Simultaneous);
    spec.sigma2_eps = 0.1;
    let streams = Streams::new(8);
    let scenario = generate_scenario(&spec, &streams)?;
    for (m, d) in scenario.datasets.iter().enumerate() {
        println!("outcome {m}: signals {:?}", d.truth);
    }
    println!("shared signals: {:?}", scenario.truth);

    let observed: Vec<_> = scenario.datasets.iter().map(|d| d.to_observed()).collect::<Result<_, _>>()?;
    let mut cfg = PipelineConfig::default();
    cfg.stats.cv_folds = 5;
    let report = analyze(&observed, Family::Binomial, StatKind::LassoCoef, &cfg, &streams.child(1))?;
    let (fdp, power) = fdp_power(&report.selected_1, &scenario.truth, spec.p)?;
    println!("ordering {}: selected {:?}", report.mode, report.selected_1);
    println!("FDP {fdp:.3}, power {:.3}", power.unwrap_or(f64::NAN));
    Ok(())
}
