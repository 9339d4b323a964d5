//! Grid sweep: one solve per grid row, aggregated into a milestone CSV.
//! A failed row becomes an error entry; the sweep itself keeps going.

use crate::run::{load_problem, solver_options, stop_str};
use crate::{BenchArgs, ProblemArgs};
use logit_sue::solvers::{solve, Method};
use logit_sue::{Error, Result};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

const GRID_HEADER: [&str; 4] = ["network", "method", "theta", "multiplier"];
const MILESTONES: [f64; 10] = [
    1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10,
];

struct GridRow {
    line: usize,
    network: String,
    method: String,
    theta: String,
    multiplier: String,
}

/// One output line of bench.csv. Numeric fields are empty strings when the
/// run never produced them.
struct ResultRow {
    network: String,
    method: String,
    theta: String,
    multiplier: String,
    status: String,
    iterations: String,
    wall_s: String,
    final_rgap: String,
    empirical_order: String,
    milestones: [String; MILESTONES.len()],
    error: String,
}

impl ResultRow {
    fn failed(row: &GridRow, message: String) -> Self {
        ResultRow {
            network: row.network.clone(),
            method: row.method.clone(),
            theta: row.theta.clone(),
            multiplier: row.multiplier.clone(),
            status: "error".to_string(),
            iterations: String::new(),
            wall_s: String::new(),
            final_rgap: String::new(),
            empirical_order: String::new(),
            milestones: Default::default(),
            error: message,
        }
    }
}

fn parse_grid(text: &str, source: &str) -> Result<Vec<GridRow>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let fields: Vec<String> = header
        .split(',')
        .map(|f| f.trim().to_ascii_lowercase())
        .collect();
    if fields != GRID_HEADER {
        return Err(Error::Parse {
            source_name: source.to_string(),
            line: 1,
            message: format!("grid header must be `{}`", GRID_HEADER.join(",")),
        });
    }
    Ok(lines
        .map(|(idx, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            GridRow {
                line: idx + 1,
                network: cells.first().copied().unwrap_or("").to_string(),
                method: cells.get(1).copied().unwrap_or("").to_string(),
                theta: cells.get(2).copied().unwrap_or("").to_string(),
                multiplier: cells.get(3).copied().unwrap_or("").to_string(),
                // A wrong cell count is caught when the row runs, so the
                // report carries whatever was present.
            }
        })
        .collect())
}

fn run_row(row: &GridRow, args: &BenchArgs) -> Result<ResultRow> {
    let method: Method = row.method.parse()?;
    let theta: f64 = row
        .theta
        .parse()
        .map_err(|_| Error::Invalid(format!("grid line {}: bad theta {:?}", row.line, row.theta)))?;
    let multiplier: f64 = row.multiplier.parse().map_err(|_| {
        Error::Invalid(format!(
            "grid line {}: bad multiplier {:?}",
            row.line, row.multiplier
        ))
    })?;
    if row.network.is_empty() {
        return Err(Error::Invalid(format!(
            "grid line {}: empty network name",
            row.line
        )));
    }
    let problem = ProblemArgs {
        net_path: args.data_dir.join(format!("{}_net.tntp", row.network)),
        trips_path: args.data_dir.join(format!("{}_trips.tntp", row.network)),
        theta,
        demand_multiplier: multiplier,
        gen: args.gen.clone(),
    };
    let opts = solver_options(method, &args.tune)?;
    let (asg, _meta) = load_problem(&problem)?;
    let run = solve(&asg, &opts)?;

    let mut milestones: [String; MILESTONES.len()] = Default::default();
    for (slot, level) in milestones.iter_mut().zip(MILESTONES) {
        if let Some(hit) = run.trace.iter().find(|r| r.rgap <= level) {
            *slot = hit.iter.to_string();
        }
    }
    Ok(ResultRow {
        network: row.network.clone(),
        method: row.method.clone(),
        theta: row.theta.clone(),
        multiplier: row.multiplier.clone(),
        status: stop_str(run.stop).to_string(),
        iterations: run.iterations.to_string(),
        wall_s: format!(
            "{:.6}",
            if args.output.deterministic { 0.0 } else { run.wall_s }
        ),
        final_rgap: format!("{}", run.final_gaps.rgap),
        empirical_order: run
            .empirical_order
            .map(|o| format!("{o}"))
            .unwrap_or_default(),
        milestones,
        error: String::new(),
    })
}

/// Quotes a CSV cell only when it needs it.
fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render(results: &[ResultRow]) -> String {
    let mut out = String::from("network,method,theta,multiplier,status,iterations,wall_s,final_rgap,empirical_order");
    for level in MILESTONES {
        out.push_str(&format!(",iters_to_{level:.0e}"));
    }
    out.push_str(",error\n");
    for r in results {
        let mut cells = vec![
            csv_cell(&r.network),
            csv_cell(&r.method),
            csv_cell(&r.theta),
            csv_cell(&r.multiplier),
            r.status.clone(),
            r.iterations.clone(),
            r.wall_s.clone(),
            r.final_rgap.clone(),
            r.empirical_order.clone(),
        ];
        cells.extend(r.milestones.iter().cloned());
        cells.push(csv_cell(&r.error));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Runs rows through a fixed-size worker pool; results keep grid order.
fn run_grid(rows: &[GridRow], args: &BenchArgs) -> Vec<ResultRow> {
    let workers = args.jobs.clamp(1, rows.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<ResultRow>>> = rows.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= rows.len() {
                    break;
                }
                let result = run_row(&rows[i], args)
                    .unwrap_or_else(|e| ResultRow::failed(&rows[i], e.to_string()));
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

pub(crate) fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.grid)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", args.grid.display())))?;
    let rows = parse_grid(&text, &args.grid.display().to_string())?;
    let results = run_grid(&rows, args);
    let failures = results.iter().filter(|r| r.status == "error").count();

    std::fs::create_dir_all(&args.output.output_dir)?;
    let out_path = args.output.output_dir.join("bench.csv");
    std::fs::write(&out_path, render(&results))?;
    println!(
        "{} runs ({} failed) -> {}",
        results.len(),
        failures,
        out_path.display()
    );
    Ok(0)
}
