use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poolbounds::estimator::Target;
use poolbounds::io::{self as pio, PStarSpec, RunConfig};
use poolbounds::popweights::Order;
use poolbounds::simulate::{run_study, CovariateKind, StudySpec, Variant};
use poolbounds::Error;

const THREADS_ENV: &str = "POOLBOUNDS_THREADS";

#[derive(Parser)]
#[command(name = "poolbounds", version, about = "Treatment effect bounds without overlap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate bounds and confidence intervals from a CSV file.
    Bounds(BoundsArgs),
    /// Run the Monte Carlo study and write summary tables.
    Simulate(SimulateArgs),
    /// Emit sample and population weight curves as CSV.
    Weights(WeightsArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// JSON run configuration, or a report produced by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long, allow_hyphen_values = true)]
    a_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a_max: Option<f64>,
    #[arg(long = "Q")]
    order: Option<Order>,
    #[arg(long = "L")]
    cluster_size: Option<f64>,
    /// Number of clusters; overrides L.
    #[arg(long)]
    m: Option<usize>,
    /// A number, `column:<name>` or `sample-proportion`.
    #[arg(long)]
    p_star: Option<PStarSpec>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<Target>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-cluster contributions as CSV.
    #[arg(long)]
    clusters_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "A")]
    dgp: Variant,
    #[arg(long, default_value = "continuous")]
    covariate: CovariateKind,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long = "Q", value_delimiter = ',', default_value = "1,2,3,4")]
    orders: Vec<Order>,
    #[arg(long = "L", default_value_t = 10.0)]
    cluster_size: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    p_star: f64,
    /// Directory for table1.csv and table2.csv.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long, default_value_t = 0.5)]
    p_star: f64,
    #[arg(long = "Q", default_value = "3")]
    order: Order,
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Steps in the population curve grid over [0, 1].
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Data(String),
    Other(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_data_error() => Failure::Data(e.to_string()),
            Error::InvalidInput(_) | Error::Domain(_) | Error::Json(_) => Failure::Config(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Config(format!("--{name} is required without --config")))
}

fn build_config(a: BoundsArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(Failure::config)?
        }
        None => {
            let covariates = required(a.covariates.clone(), "covariates")?;
            let mut cfg = RunConfig::new(
                required(a.input.clone(), "input")?,
                &required(a.outcome.clone(), "outcome")?,
                &required(a.treatment.clone(), "treatment")?,
                &covariates.iter().map(String::as_str).collect::<Vec<_>>(),
            );
            cfg.a_min = required(a.a_min, "a-min")?;
            cfg.a_max = required(a.a_max, "a-max")?;
            cfg
        }
    };
    if let Some(v) = a.input {
        cfg.input = v;
    }
    if let Some(v) = a.outcome {
        cfg.outcome = v;
    }
    if let Some(v) = a.treatment {
        cfg.treatment = v;
    }
    if let Some(v) = a.covariates {
        cfg.covariates = v;
    }
    if let Some(v) = a.a_min {
        cfg.a_min = v;
    }
    if let Some(v) = a.a_max {
        cfg.a_max = v;
    }
    if let Some(v) = a.order {
        cfg.order = v;
    }
    if let Some(v) = a.cluster_size {
        cfg.cluster_size = v;
        cfg.m = None;
    }
    if a.m.is_some() {
        cfg.m = a.m;
    }
    if let Some(v) = a.p_star {
        cfg.p_star = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.targets {
        cfg.targets = v;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    if a.output.is_some() {
        cfg.output = a.output;
    }
    if a.clusters_csv.is_some() {
        cfg.clusters_output = a.clusters_csv;
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn bounds(a: BoundsArgs) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    let (report, table) = pio::run_bounds(&cfg)?;
    for w in &report.provenance.warnings {
        eprintln!("warning: {w}");
    }
    pio::write_outputs(&cfg, &report, &table)?;
    if cfg.output.is_none() {
        println!("{}", report.to_json()?);
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut spec = StudySpec::new(a.dgp, a.covariate);
    spec.reps = a.reps;
    spec.n = a.n;
    spec.orders = a.orders;
    spec.cluster_size = a.cluster_size;
    spec.seed = a.seed;
    spec.alpha = a.alpha;
    spec.p_star = a.p_star;
    let result = run_study(&spec)?;
    let (t1, t2) = (result.table1(), result.table2());
    println!("DGP {} with a {} covariate, n = {}, {} replications\n", spec.variant, spec.covariate, spec.n, spec.reps);
    println!("{t1}");
    println!("{t2}");
    if let Some(dir) = a.output_dir {
        std::fs::create_dir_all(&dir)?;
        t1.write_csv(File::create(dir.join("table1.csv"))?)?;
        t2.write_csv(File::create(dir.join("table2.csv"))?)?;
    }
    Ok(())
}

fn weights(a: WeightsArgs) -> Result<(), Failure> {
    let points = pio::weight_curves(a.p_star, a.order, a.n, a.grid)?;
    match a.output {
        Some(path) => pio::write_weight_csv(&points, File::create(path)?)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            pio::write_weight_csv(&points, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Other(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Simulate(a) => simulate(a),
        Command::Weights(a) => weights(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
