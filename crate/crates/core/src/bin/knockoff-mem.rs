use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use serde_json::{json, Map, Value};

use knockoff_mem::errorcov::{qc_cov, qc_paired_cov, read_qc_csv, write_cov_csv, QcOptions};
use knockoff_mem::filter::write_selection_csv;
use knockoff_mem::harness::pipeline::complete;
use knockoff_mem::harness::screen::{outcome_datasets, read_data_csv, screen_files, write_imputations_csv, ScreenOptions, ScreenResult};
use knockoff_mem::harness::{merge_json, run_replicates, SimConfig};
use knockoff_mem::impute::ImputeConfig;
use knockoff_mem::rng::Streams;
use knockoff_mem::{Error, Result};

#[derive(Parser)]
#[command(name = "knockoff-mem", version, about = "Knockoff variable selection with missing data and measurement error")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulation replicates and summarize FDP and power.
    Simulate(SimulateArgs),
    /// Screen a data file against one outcome.
    Screen(ScreenArgs),
    /// Screen for features related to both of two outcomes.
    ScreenMulti(ScreenArgs),
    /// Estimate the measurement-error covariance from QC samples.
    ErrorCov(ErrorCovArgs),
    /// Export multiply imputed copies of a data file.
    Impute(ImputeArgs),
}

#[derive(Args, Default)]
struct ImputeFlags {
    /// Imputation method: half_min, mean, default, cart or pmm.
    #[arg(long)]
    impute_method: Option<String>,
    /// Number of imputed copies.
    #[arg(long)]
    k: Option<usize>,
    /// Leave the outcome out of the imputation models.
    #[arg(long)]
    no_include_outcome: bool,
    #[arg(long)]
    sweeps: Option<usize>,
}

impl ImputeFlags {
    fn to_value(&self) -> Result<Value> {
        let mut impute = Map::new();
        if let Some(m) = &self.impute_method {
            let method: knockoff_mem::impute::ImputeMethod = m.parse()?;
            impute.insert("method".into(), serde_json::to_value(method)?);
        }
        if let Some(k) = self.k {
            impute.insert("k".into(), json!(k));
        }
        if self.no_include_outcome {
            impute.insert("include_outcome".into(), json!(false));
        }
        if let Some(s) = self.sweeps {
            impute.insert("sweeps".into(), json!(s));
        }
        Ok(Value::Object(impute))
    }
}

/// Options shared by every command that runs the selection pipeline.
#[derive(Args, Default)]
struct PipelineArgs {
    #[command(flatten)]
    impute: ImputeFlags,
    /// Target FDR level.
    #[arg(long)]
    q: Option<f64>,
    /// Ordering for several outcomes: max_max, max_prod or sum_prod.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Trees in the random-forest statistic.
    #[arg(long)]
    trees: Option<usize>,
    /// Use block-diagonal S with this block size instead of equicorrelated.
    #[arg(long)]
    block_size: Option<usize>,
    /// Fit one knockoff model across all imputed copies.
    #[arg(long)]
    pool: bool,
}

impl PipelineArgs {
    fn to_value(&self) -> Result<Value> {
        let mut stats = Map::new();
        if let Some(f) = self.cv_folds {
            stats.insert("cv_folds".into(), json!(f));
        }
        if let Some(t) = self.trees {
            stats.insert("trees".into(), json!(t));
        }
        let mut knockoff = Map::new();
        if let Some(b) = self.block_size {
            knockoff.insert("s_method".into(), json!({ "block": { "size": b } }));
        }
        if self.pool {
            knockoff.insert("pool".into(), json!(true));
        }
        let mut out = Map::new();
        out.insert("impute".into(), self.impute.to_value()?);
        out.insert("stats".into(), Value::Object(stats));
        out.insert("knockoff".into(), Value::Object(knockoff));
        if let Some(q) = self.q {
            out.insert("q".into(), json!(q));
        }
        if let Some(m) = &self.mode {
            let mode: knockoff_mem::filter::OrderMode = m.parse()?;
            out.insert("mode".into(), serde_json::to_value(mode)?);
        }
        Ok(Value::Object(out))
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// 1, 2, 3 or simul.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long, required = true)]
    seed: u64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    a_beta: Option<f64>,
    #[arg(long)]
    sigma2_eps: Option<f64>,
    #[arg(long)]
    rho_eps: Option<f64>,
    #[arg(long)]
    pi_mis: Option<f64>,
    #[arg(long)]
    p_mis: Option<f64>,
    /// Missingness driven by W (error-prone) or X (true values).
    #[arg(long)]
    mis_basis: Option<String>,
    /// Comma-separated statistics: lasso, lasso_order, rf, gds, gmus, cl.
    #[arg(long, value_delimiter = ',')]
    statistic: Vec<String>,
    /// SeqStep offset, 0 or 1.
    #[arg(long)]
    c: Option<u32>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// JSON configuration; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScreenArgs {
    /// Data CSV with a header row; "NA" marks missing values.
    #[arg(long)]
    data: PathBuf,
    /// Outcome column; give it twice for screen-multi.
    #[arg(long, required = true)]
    outcome: Vec<String>,
    /// Columns to skip, such as sample identifiers.
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
    /// QC CSV for the measurement-error covariance.
    #[arg(long)]
    qc: Option<PathBuf>,
    /// QC samples come in batch pairs (needs a `batch` column).
    #[arg(long)]
    qc_paired: bool,
    /// Keep only the QC variances.
    #[arg(long)]
    qc_diagonal: bool,
    #[arg(long)]
    statistic: Option<String>,
    /// gaussian or binomial; detected from the outcome when omitted.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    log_transform: bool,
    #[arg(long)]
    no_truncate: bool,
    /// Largest tolerated fraction of missing values per feature.
    #[arg(long)]
    max_missing: Option<f64>,
    /// Stability-selection repetitions.
    #[arg(long)]
    stability: Option<usize>,
    #[arg(long)]
    stability_threshold: Option<f64>,
    #[arg(long)]
    c: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ErrorCovArgs {
    #[arg(long)]
    qc: PathBuf,
    #[arg(long)]
    paired: bool,
    #[arg(long)]
    diagonal: bool,
    /// Smallest eigenvalue allowed on the correlation scale.
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    log_transform: bool,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    impute: ImputeFlags,
    /// JSON imputation settings; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_config(path: &Option<PathBuf>) -> Result<Option<Value>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok(Some(serde_json::from_str(&text)?))
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn insert_some<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        map.insert(key.into(), serde_json::to_value(v)?);
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    // Pipeline fields sit at the top level of a simulation config.
    let Value::Object(mut flags) = args.pipeline.to_value()? else { unreachable!() };
    insert_some(&mut flags, "setting", args.setting)?;
    flags.insert("seed".into(), json!(args.seed));
    insert_some(&mut flags, "n", args.n)?;
    insert_some(&mut flags, "p", args.p)?;
    insert_some(&mut flags, "a_beta", args.a_beta)?;
    insert_some(&mut flags, "sigma2_eps", args.sigma2_eps)?;
    insert_some(&mut flags, "rho_eps", args.rho_eps)?;
    insert_some(&mut flags, "pi_mis", args.pi_mis)?;
    insert_some(&mut flags, "p_mis", args.p_mis)?;
    insert_some(&mut flags, "mis_basis", args.mis_basis)?;
    insert_some(&mut flags, "c", args.c)?;
    insert_some(&mut flags, "replicates", args.replicates)?;
    if !args.statistic.is_empty() {
        let kinds = args.statistic.iter().map(|s| s.parse()).collect::<Result<Vec<knockoff_mem::stats::StatKind>>>()?;
        flags.insert("statistics".into(), serde_json::to_value(kinds)?);
    }
    let mut value = Value::Object(flags);
    if let Some(file) = read_config(&args.config)? {
        merge_json(&mut value, file);
    }
    let cfg = SimConfig::from_value(value)?;
    let summary = run_replicates(&cfg)?;
    if let Some(path) = &args.out_json {
        fs::write(path, summary.to_json()?)?;
    }
    if let Some(path) = &args.out_csv {
        summary.write_csv(File::create(path)?)?;
    }
    print!("{}", summary.table());
    Ok(())
}

fn screen(args: ScreenArgs, multi: bool) -> Result<()> {
    let wanted = if multi { 2 } else { 1 };
    if args.outcome.len() != wanted {
        return Err(Error::Config(format!("expected {wanted} --outcome column(s), got {}", args.outcome.len())));
    }
    let mut flags = Map::new();
    flags.insert("pipeline".into(), args.pipeline.to_value()?);
    insert_some(&mut flags, "statistic", args.statistic.map(|s| s.parse::<knockoff_mem::stats::StatKind>()).transpose()?)?;
    insert_some(&mut flags, "family", args.family)?;
    flags.insert("log_transform".into(), json!(args.log_transform));
    flags.insert("truncate".into(), json!(!args.no_truncate));
    insert_some(&mut flags, "max_missing", args.max_missing)?;
    flags.insert("qc_paired".into(), json!(args.qc_paired));
    flags.insert("qc_diagonal".into(), json!(args.qc_diagonal));
    insert_some(&mut flags, "stability", args.stability)?;
    insert_some(&mut flags, "stability_threshold", args.stability_threshold)?;
    insert_some(&mut flags, "c", args.c)?;
    flags.insert("seed".into(), json!(args.seed));
    let mut value = serde_json::to_value(ScreenOptions::default())?;
    merge_json(&mut value, Value::Object(flags));
    if let Some(file) = read_config(&args.config)? {
        merge_json(&mut value, file);
    }
    let opts: ScreenOptions = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    let result = screen_files(&args.data, args.qc.as_deref(), &args.outcome, &args.ignore, &opts)?;
    write_screen_outputs(&result, args.out_json.as_deref(), args.out_csv.as_deref())?;
    println!("family: {:?}, mode: {}, q = {}", result.family, result.report.mode, result.report.q);
    if !result.dropped.is_empty() {
        println!("dropped (too many missing): {}", result.dropped.join(", "));
    }
    println!("selected ({}): {}", result.selected_names.len(), result.selected_names.join(", "));
    Ok(())
}

fn write_screen_outputs(result: &ScreenResult, json_path: Option<&Path>, csv_path: Option<&Path>) -> Result<()> {
    if let Some(path) = json_path {
        fs::write(path, result.to_json()?)?;
    }
    if let Some(path) = csv_path {
        write_selection_csv(File::create(path)?, &result.report, &result.names, result.stability.as_ref())?;
    }
    Ok(())
}

fn error_cov(args: ErrorCovArgs) -> Result<()> {
    let mut qc = read_qc_csv(File::open(&args.qc)?)?;
    if args.log_transform {
        if qc.values.iter().any(|v| *v <= 0.0) {
            return Err(Error::Data("QC values must be positive to log-transform".into()));
        }
        qc.values.apply(|v| *v = v.ln());
    }
    let mut opts = QcOptions { diagonal: args.diagonal, ..QcOptions::default() };
    if let Some(f) = args.floor {
        opts.floor = f;
    }
    let cov = if args.paired { qc_paired_cov(&qc, opts)? } else { qc_cov(&qc, opts)? };
    let mut out = output(&args.out)?;
    write_cov_csv(&mut out, &qc.names, cov.matrix())?;
    out.flush()?;
    Ok(())
}

fn impute_cmd(args: ImputeArgs) -> Result<()> {
    let mut value = serde_json::to_value(ImputeConfig::default())?;
    merge_json(&mut value, args.impute.to_value()?);
    if let Some(file) = read_config(&args.config)? {
        merge_json(&mut value, file);
    }
    let cfg: ImputeConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    let table = read_data_csv(File::open(&args.data)?, std::slice::from_ref(&args.outcome), &args.ignore)?;
    let data = outcome_datasets(&table, None)?.remove(0);
    let copies = if cfg.method.is_multiple() { cfg.k } else { 1 };
    let completed = complete(&data, &cfg, copies, &Streams::new(args.seed))?;
    let mut out = output(&args.out)?;
    write_imputations_csv(&mut out, &data, &completed, &args.outcome)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Screen(a) => screen(a, false),
        Command::ScreenMulti(a) => screen(a, true),
        Command::ErrorCov(a) => error_cov(a),
        Command::Impute(a) => impute_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
