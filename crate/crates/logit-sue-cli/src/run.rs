//! Problem loading shared by every subcommand, plus the `solve` command.

use crate::{OutputArgs, ProblemArgs, SolveArgs, TuneArgs};
use logit_sue::equilibrium::{Assignment, LogitParams};
use logit_sue::network::{parse_net_file, parse_trips_file};
use logit_sue::pathset::{generate_path_set, path_set_metrics, Generator, PathSetMeta};
use logit_sue::solvers::{
    solve, summarize, write_trace_csv, AcsConfig, Method, NewtonConfig, SolverOptions, StopReason,
};
use logit_sue::{Error, Result};
use serde::Serialize;

fn require(ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(message.to_string()))
    }
}

pub(crate) fn stop_str(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::Budget => "budget",
        StopReason::IterationLimit => "iteration_limit",
        StopReason::StepUndefined => "step_undefined",
    }
}

/// Parses the input files, scales demand, and generates the path set.
/// Warnings from parsing and generation go to stderr; they never fail a run.
pub(crate) fn load_problem(p: &ProblemArgs) -> Result<(Assignment, PathSetMeta)> {
    require(
        p.theta.is_finite() && p.theta > 0.0,
        "--theta must be a positive number",
    )?;
    require(
        p.demand_multiplier.is_finite() && p.demand_multiplier > 0.0,
        "--demand-multiplier must be a positive number",
    )?;
    require(p.gen.k_paths >= 1, "--k-paths must be at least 1")?;
    let generator: Generator = p.gen.path_method.parse()?;
    let net = parse_net_file(&p.net_path)?;
    let demand = parse_trips_file(&p.trips_path)?.scaled(p.demand_multiplier)?;
    for w in &demand.warnings {
        eprintln!("warning: {}: {w}", p.trips_path.display());
    }
    let generated = generate_path_set(&net, &demand, generator, p.gen.k_paths, p.gen.seed)?;
    for w in &generated.warnings {
        eprintln!("warning: {w}");
    }
    let metrics = path_set_metrics(&generated.paths, &net)?;
    let meta = PathSetMeta {
        generator,
        k: p.gen.k_paths,
        seed: match generator {
            Generator::Penalty => Some(p.gen.seed),
            Generator::Yen => None,
        },
        n_ods: generated.paths.n_ods(),
        n_paths: generated.paths.n_paths(),
        metrics,
    };
    let asg = Assignment::new(
        net,
        generated.demand,
        generated.paths,
        LogitParams::new(p.theta)?,
    )?;
    Ok((asg, meta))
}

/// Maps tuning flags onto solver options. Newton thresholds are sorted
/// descending and deduplicated; the solver burns them in that order.
pub(crate) fn solver_options(method: Method, t: &TuneArgs) -> Result<SolverOptions> {
    require(
        t.rgap_target > 0.0 && t.rgap_target < 1.0,
        "--rgap-target must lie in (0, 1)",
    )?;
    require(
        t.thresholds.iter().all(|v| v.is_finite() && *v > 0.0),
        "--thresholds must be positive numbers",
    )?;
    let mut thresholds = t.thresholds.clone();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut newton = NewtonConfig::default();
    newton.eta_tol = t.eta_tol;
    newton.nu1 = t.nu1;
    newton.nu2 = t.nu2;
    newton.thresholds = thresholds;
    Ok(SolverOptions {
        method,
        rgap_target: t.rgap_target,
        max_iterations: t.max_iterations,
        time_budget_s: t.time_budget_s,
        acs: AcsConfig {
            i_s: t.i_s,
            epsilon: t.epsilon,
            q: t.q,
        },
        newton,
    })
}

/// Every flag the run consumed, echoed verbatim into summary.json.
#[derive(Serialize)]
pub(crate) struct ConfigEcho {
    pub net_path: String,
    pub trips_path: String,
    pub theta: f64,
    pub demand_multiplier: f64,
    pub k_paths: usize,
    pub path_method: Generator,
    pub seed: u64,
    pub method: Method,
    pub rgap_target: f64,
    pub max_iterations: usize,
    pub time_budget_s: Option<f64>,
    pub i_s: usize,
    pub epsilon: f64,
    pub q: usize,
    pub eta_tol: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub thresholds: Vec<f64>,
    pub output_dir: String,
    pub deterministic: bool,
}

pub(crate) fn config_echo(
    p: &ProblemArgs,
    method: Method,
    opts: &SolverOptions,
    o: &OutputArgs,
) -> ConfigEcho {
    ConfigEcho {
        net_path: p.net_path.display().to_string(),
        trips_path: p.trips_path.display().to_string(),
        theta: p.theta,
        demand_multiplier: p.demand_multiplier,
        k_paths: p.gen.k_paths,
        path_method: p.gen.path_method.parse().expect("validated during loading"),
        seed: p.gen.seed,
        method,
        rgap_target: opts.rgap_target,
        max_iterations: opts.max_iterations,
        time_budget_s: opts.time_budget_s,
        i_s: opts.acs.i_s,
        epsilon: opts.acs.epsilon,
        q: opts.acs.q,
        eta_tol: opts.newton.eta_tol,
        nu1: opts.newton.nu1,
        nu2: opts.newton.nu2,
        thresholds: opts.newton.thresholds.clone(),
        output_dir: o.output_dir.display().to_string(),
        deterministic: o.deterministic,
    }
}

pub(crate) fn pretty(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub(crate) fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let method: Method = args.method.parse()?;
    let opts = solver_options(method, &args.tune)?;
    let (asg, meta) = load_problem(&args.problem)?;
    let run = solve(&asg, &opts)?;

    let dir = &args.output.output_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("trace.csv"),
        write_trace_csv(&run.trace, args.output.deterministic),
    )?;
    std::fs::write(dir.join("paths.txt"), asg.paths().to_text(asg.demand()))?;
    std::fs::write(dir.join("paths.meta.json"), pretty(&meta)?)?;
    let summary = serde_json::json!({
        "config": config_echo(&args.problem, method, &opts, &args.output),
        "path_set": meta,
        "result": summarize(&run, method, args.output.deterministic),
    });
    std::fs::write(dir.join("summary.json"), pretty(&summary)?)?;

    println!(
        "{} on {} paths: stop={} iterations={} rgap={:e} wall={:.3}s",
        method,
        asg.n_paths(),
        stop_str(run.stop),
        run.iterations,
        run.final_gaps.rgap,
        run.wall_s,
    );
    Ok(match run.stop {
        StopReason::Converged => 0,
        StopReason::Budget | StopReason::IterationLimit => 2,
        StopReason::StepUndefined => {
            eprintln!("error: the step rule produced no usable step; switch methods or loosen the target");
            1
        }
    })
}
