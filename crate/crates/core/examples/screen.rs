//! Screen a CSV file with missing values plus a QC file, the way the
//! `screen` subcommand does.

use std::fs::File;
use std::io::Write;

use knockoff_mem::datagen::{generate_scenario, ScenarioSpec, Setting};
use knockoff_mem::harness::screen::{screen_files, write_data_csv, ScreenOptions};
use knockoff_mem::linalg::sample_mvn_rows;
use knockoff_mem::rng::{Role, Streams};
use knockoff_mem::stats::StatKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ScenarioSpec::preset(Setting::Both);
    let streams = Streams::new(21);
    let scenario = generate_scenario(&spec, &streams)?;
    let dataset = &scenario.datasets[0];
    let names: Vec<String> = (0..spec.p).map(|j| format!("m{j:02}")).collect();
    let data = dataset.to_observed()?.with_names(names.clone())?;

    let dir = std::env::temp_dir().join("knockoff-mem-screen-example");
    std::fs::create_dir_all(&dir)?;
    let data_path = dir.join("data.csv");
    write_data_csv(File::create(&data_path)?, &data, "case")?;

    // Eighty QC runs of one pooled specimen.
    let qc_path = dir.join("qc.csv");
    let qc = sample_mvn_rows(80, &dataset.sigma_eps, &mut streams.rng(Role::Errors))?;
    let mut out = File::create(&qc_path)?;
    writeln!(out, "{}", names.join(","))?;
    for row in qc.row_iter() {
        writeln!(out, "{}", row.iter().map(|v| (5.0 + v).to_string()).collect::<Vec<_>>().join(","))?;
    }

    let mut opts = ScreenOptions { statistic: StatKind::Gmus, seed: 1, ..ScreenOptions::default() };
    opts.pipeline.q = 0.2;
    opts.pipeline.stats.cv_folds = 5;
    let result = screen_files(&data_path, Some(&qc_path), &["case".to_string()], &[], &opts)?;
    println!("family: {:?}, dropped: {:?}", result.family, result.dropped);
    println!("selected: {:?}", result.selected_names);
    let truth: Vec<&str> = scenario.truth.iter().map(|&j| names[j].as_str()).collect();
    println!("true signals: {truth:?}");
    Ok(())
}
