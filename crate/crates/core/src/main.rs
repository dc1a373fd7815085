use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use covsketch::bounds::{
    baseline_bounds, coefficients_tau_rho, expectation_bound, probability_bound, solve_ut, BaselineBounds,
    BoundCoefficients, DEFAULT_DELTA,
};
use covsketch::daproblem::{assemble_da_matrix, DaScenario};
use covsketch::experiments::{
    emit, run_covariance_comparison, run_sweep, to_csv, to_json, ExperimentConfig, ExperimentRecord, OutputFormat,
};
use covsketch::linalg::svd_partition;
use covsketch::matrix_io::{read_matrix, write_matrix};
use covsketch::oracle::{run_default_suite, DEFAULT_SAMPLES};
use covsketch::sampling::{covariance_from_matrix, CovarianceOperator};
use covsketch::{Error, Result};

#[derive(Parser)]
#[command(name = "covsketch", version, about = "Randomized SVD with general Gaussian sketch covariance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the matrices of a data-assimilation scenario
    GenProblem(GenProblemArgs),
    /// Run a sweep over k or p
    Sweep(RunArgs),
    /// Run the covariance comparison (with pilot pass for approximation-based cases)
    Compare(RunArgs),
    /// Single-point bound report for a matrix and a covariance
    Bounds(BoundsArgs),
    /// Run the Monte Carlo verification oracles
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenProblemArgs {
    /// LowObs or HighObs
    #[arg(long, default_value = "LowObs")]
    scenario: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Overrides base_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output path; without any output the records go to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct BoundsArgs {
    /// A in the plain-text matrix format
    #[arg(long)]
    matrix: PathBuf,
    /// Sketch covariance K (m×m); identity when omitted
    #[arg(long)]
    covariance: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    ell: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoundsReport {
    coefficients: BoundCoefficients,
    expectation_bound: Option<f64>,
    probability_bound: Option<f64>,
    u: Option<f64>,
    t: Option<f64>,
    delta: f64,
    baselines: Option<BaselineBounds>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn gen_problem(args: GenProblemArgs) -> Result<()> {
    let mut s = DaScenario::named(&args.scenario)
        .ok_or_else(|| Error::Config(format!("unknown scenario {:?} (LowObs or HighObs)", args.scenario)))?;
    if let Some(n) = args.n {
        s.n = n;
    }
    if let Some(m) = args.m {
        s.m = m;
    }
    if let Some(v) = args.sigma_r {
        s.sigma_r = v;
    }
    if let Some(v) = args.gamma {
        s.gamma = v;
    }
    s.validate().map_err(|e| Error::Config(e.to_string()))?;
    let da = assemble_da_matrix(&s)?;
    fs::create_dir_all(&args.out)?;
    write_matrix(args.out.join("A.txt"), &da.a)?;
    write_matrix(args.out.join("B.txt"), &da.b)?;
    write_matrix(args.out.join("L.txt"), &da.l)?;
    let scenario = serde_json::to_string_pretty(&s).expect("scenario serializes");
    fs::write(args.out.join("scenario.json"), scenario + "\n")?;
    Ok(())
}

fn run(args: RunArgs, compare: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    let format = match args.format.as_deref() {
        Some(f) => Some(f.parse::<OutputFormat>()?),
        None => None,
    };
    if let Some(path) = args.out {
        let format = format.or(cfg.output.as_ref().map(|o| o.format)).unwrap_or_default();
        cfg.output = Some(covsketch::experiments::OutputSpec { path, format });
    } else if let (Some(f), Some(o)) = (format, cfg.output.as_mut()) {
        o.format = f;
    }
    let records: Vec<ExperimentRecord> = if compare {
        run_covariance_comparison(&cfg)?
    } else {
        run_sweep(&cfg)?
    };
    match &cfg.output {
        Some(o) => emit(&records, o.format, &o.path),
        None => {
            let text = match format.unwrap_or_default() {
                OutputFormat::Csv => to_csv(&records),
                OutputFormat::Json => to_json(&records) + "\n",
            };
            write_or_print(None, &text)
        }
    }
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let a = read_matrix(&args.matrix)?;
    let cov = match &args.covariance {
        Some(p) => covariance_from_matrix(&read_matrix(p)?)?,
        None => CovarianceOperator::identity(a.nrows()),
    };
    if cov.dim() != a.nrows() {
        return Err(Error::Config(format!(
            "covariance is {0}x{0} but A has {1} rows",
            cov.dim(),
            a.nrows()
        )));
    }
    let part = svd_partition(&a, args.k).map_err(|e| Error::Config(e.to_string()))?;
    let c = coefficients_tau_rho(&part, &cov, args.ell)?;
    let mut report = BoundsReport {
        coefficients: c,
        expectation_bound: expectation_bound(&c).ok(),
        probability_bound: None,
        u: None,
        t: None,
        delta: args.delta,
        baselines: None,
    };
    if args.k + 4 <= args.ell {
        let (u, t) = solve_ut(args.ell, args.k, args.delta)?;
        report.probability_bound = Some(probability_bound(&c, u, t)?);
        report.u = Some(u);
        report.t = Some(t);
        report.baselines = baseline_bounds(&part, 0, args.ell, u, t).ok();
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_or_print(args.out.as_deref(), &text)
}

fn oracle(args: OracleArgs) -> Result<bool> {
    let report = run_default_suite(args.samples, args.seed)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_or_print(args.out.as_deref(), &text)?;
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenProblem(a) => gen_problem(a).map(|_| true),
        Command::Sweep(a) => run(a, false).map(|_| true),
        Command::Compare(a) => run(a, true).map(|_| true),
        Command::Bounds(a) => bounds(a).map(|_| true),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one oracle check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 3,
                Error::Config(_) | Error::Parse(_) | Error::Parameter(_) => 2,
                _ => 1,
            })
        }
    }
}
