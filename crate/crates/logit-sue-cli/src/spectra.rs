//! Spectrum reporting at an equilibrium or a supplied flow vector.

use crate::run::{load_problem, pretty, stop_str};
use crate::SpectraArgs;
use logit_sue::operators::spectral_analysis;
use logit_sue::solvers::{solve, SolverOptions, StopReason};
use logit_sue::{Error, Result};
use std::path::Path;

/// One flow value per line, blank lines skipped, length checked against the
/// generated path set.
fn read_flows(path: &Path, n_paths: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut flows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: f64 = s.parse().map_err(|_| Error::Parse {
            source_name: path.display().to_string(),
            line: idx + 1,
            message: format!("expected a flow value, found {s:?}"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Infeasible(format!(
                "{}:{}: flow {v} is not a finite nonnegative number",
                path.display(),
                idx + 1
            )));
        }
        flows.push(v);
    }
    if flows.len() != n_paths {
        return Err(Error::Invalid(format!(
            "{} holds {} flow values but the path set has {} paths",
            path.display(),
            flows.len(),
            n_paths
        )));
    }
    Ok(flows)
}

pub(crate) fn cmd_spectra(args: &SpectraArgs) -> Result<u8> {
    let (asg, _meta) = load_problem(&args.problem)?;
    if args.full_spectrum && asg.n_paths() > args.dense_limit {
        return Err(Error::TooLargeForDense {
            n: asg.n_paths(),
            limit: args.dense_limit,
        });
    }

    let state = match &args.flows {
        Some(path) => {
            let h = read_flows(path, asg.n_paths())?;
            asg.evaluate(&h)
        }
        None => {
            if !(args.rgap_target > 0.0 && args.rgap_target < 1.0) {
                return Err(Error::Invalid(
                    "--rgap-target must lie in (0, 1)".to_string(),
                ));
            }
            let opts = SolverOptions {
                rgap_target: args.rgap_target,
                ..SolverOptions::default()
            };
            let run = solve(&asg, &opts)?;
            if run.stop != StopReason::Converged {
                return Err(Error::Invalid(format!(
                    "equilibrium solve stopped ({}) before reaching rgap {:e}; pass --flows to analyze a specific point",
                    stop_str(run.stop),
                    args.rgap_target
                )));
            }
            run.final_state
        }
    };

    let report = spectral_analysis(&asg, &state, args.dense_limit)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.output.output_dir)?;
    std::fs::write(args.output.output_dir.join("spectra.json"), pretty(&report)?)?;
    println!(
        "lambda_min={:.6} lambda_max={:.6} s_g={:.6} s_conservative={:.6e}",
        report.lambda_min, report.lambda_max, report.s_g, report.s_conservative,
    );
    Ok(0)
}
