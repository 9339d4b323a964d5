//! Batch front end for the solver engine: `solve`, `spectra`, and `bench`
//! subcommands over TNTP inputs. Exit codes are 0 for a converged run, 2 for
//! a run stopped by its iteration or wall-clock budget, 1 for any error.

mod bench;
mod run;
mod spectra;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "logit-sue",
    version,
    about = "Logit stochastic user equilibrium solver for TNTP road networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one assignment; writes trace.csv, summary.json, paths.txt, and
    /// paths.meta.json into the output directory
    Solve(SolveArgs),
    /// Report the fixed-point Jacobian spectrum and step bounds at
    /// equilibrium or at supplied path flows; writes spectra.json
    Spectra(SpectraArgs),
    /// Solve a grid of (network, method, theta, multiplier) rows and
    /// aggregate gap milestones into bench.csv
    Bench(BenchArgs),
}

/// Where the problem comes from and how its path set is built.
#[derive(Args, Clone)]
struct ProblemArgs {
    /// TNTP network file
    #[arg(long, alias = "net", value_name = "FILE")]
    net_path: PathBuf,

    /// TNTP trip table
    #[arg(long, alias = "trips", value_name = "FILE")]
    trips_path: PathBuf,

    /// Logit dispersion parameter
    #[arg(long, default_value_t = 1.0)]
    theta: f64,

    /// Uniform scale applied to every demand entry
    #[arg(long, default_value_t = 1.0)]
    demand_multiplier: f64,

    #[command(flatten)]
    gen: GenArgs,
}

#[derive(Args, Clone)]
struct GenArgs {
    /// Paths generated per OD pair
    #[arg(long, default_value_t = 20)]
    k_paths: usize,

    /// Path generator: yen or penalty
    #[arg(long, default_value = "yen")]
    path_method: String,

    /// Master seed for the randomized penalty generator
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Solver tuning shared by `solve` and `bench`.
#[derive(Args, Clone)]
struct TuneArgs {
    /// Relative-gap level that counts as converged
    #[arg(long, default_value_t = 1e-10)]
    rgap_target: f64,

    /// Iteration cap
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,

    /// Wall-clock budget in seconds, measured from iteration 1
    #[arg(long, alias = "time-budget")]
    time_budget_s: Option<f64>,

    /// Harmonic warm-up length of the adaptive constant-step rule
    #[arg(long, default_value_t = 10)]
    i_s: usize,

    /// Relative residual decrease under which the constant step resets
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,

    /// Residual-history window length of the reset decision
    #[arg(long, default_value_t = 3)]
    q: usize,

    /// Ceiling on the Newton forcing term
    #[arg(long, default_value_t = 1e-2)]
    eta_tol: f64,

    /// Sufficient-decrease fraction of the Newton acceptance test
    #[arg(long, default_value_t = 1e-4)]
    nu1: f64,

    /// Residual-norm multiplier inside the Newton forcing term
    #[arg(long, default_value_t = 1e3)]
    nu2: f64,

    /// Comma-separated relative-gap levels that trigger Newton attempts
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10]
    )]
    thresholds: Vec<f64>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Directory receiving the run artifacts
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,

    /// Zero wall-clock columns and cap worker threads so repeated runs
    /// produce byte-identical artifacts
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// msa-hs, msa-acs, bb1, bb2, bb1-acs, bb2-acs, or bb-newton
    #[arg(long, default_value = "bb-newton")]
    method: String,

    #[command(flatten)]
    tune: TuneArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SpectraArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// File of path flows to analyze, one value per line in path-set order;
    /// without it the flows come from an internal bb-newton solve
    #[arg(long, value_name = "FILE")]
    flows: Option<PathBuf>,

    /// Relative-gap target of the internal equilibrium solve
    #[arg(long, default_value_t = 1e-10)]
    rgap_target: f64,

    /// Largest path count for which the dense eigenvalue list is computed
    #[arg(long, default_value_t = 2000)]
    dense_limit: usize,

    /// Fail instead of omitting the eigenvalue list when the path count
    /// exceeds the dense limit
    #[arg(long)]
    full_spectrum: bool,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid CSV with header `network,method,theta,multiplier`
    #[arg(long, value_name = "FILE")]
    grid: PathBuf,

    /// Directory holding `<network>_net.tntp` and `<network>_trips.tntp`
    #[arg(long, value_name = "DIR")]
    data_dir: PathBuf,

    /// Grid rows solved concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    #[command(flatten)]
    gen: GenArgs,

    #[command(flatten)]
    tune: TuneArgs,

    #[command(flatten)]
    output: OutputArgs,
}

impl Cli {
    fn deterministic(&self) -> bool {
        match &self.command {
            Command::Solve(a) => a.output.deterministic,
            Command::Spectra(a) => a.output.deterministic,
            Command::Bench(a) => a.output.deterministic,
        }
    }
}

/// Builds the global worker pool before any parallel region runs. The
/// `LOGIT_SUE_THREADS` variable caps it; `--deterministic` forces one thread.
fn setup_threads(deterministic: bool) {
    let mut threads = None;
    if let Ok(raw) = std::env::var("LOGIT_SUE_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => threads = Some(n),
            _ => eprintln!("warning: ignoring LOGIT_SUE_THREADS={raw:?}; expected a positive integer"),
        }
    }
    if deterministic {
        threads = Some(1);
    }
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    setup_threads(cli.deterministic());
    let outcome = match &cli.command {
        Command::Solve(args) => run::cmd_solve(args),
        Command::Spectra(args) => spectra::cmd_spectra(args),
        Command::Bench(args) => bench::cmd_bench(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
