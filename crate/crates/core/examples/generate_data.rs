//! Draw one replicate of the missing-data-plus-measurement-error scenario
//! and describe what an analyst would receive.

use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::rng::Streams;

fn main() -> knockoff_mem::error::Result<()> {
    let spec = ScenarioSpec::preset(Setting::Both);
    let scenario = generate_scenario(&spec, &Streams::new(2024).replicate(0))?;
    let data = &scenario.datasets[0];

    println!("n = {}, p = {}, sigma2_eps = {}", spec.n, spec.p, spec.sigma2_eps);
    println!("signals: {:?}", scenario.truth);
    println!("prevalence of Y = 1: {:.3}", data.y.mean());

    for &j in &data.missing_columns {
        let missing = data.observed.column(j).iter().filter(|o| !**o).count();
        let kind = if scenario.truth.contains(&j) { "signal" } else { "null" };
        println!("column {j:>2} ({kind}): {:.1}% missing", 100.0 * missing as f64 / spec.n as f64);
    }

    let noise = (&data.w - &data.x).column(0).variance();
    println!("empirical measurement-error variance in column 0: {noise:.3}");
    Ok(())
}
