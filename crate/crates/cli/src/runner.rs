//! Sweep execution and CSV output. Each sweep cell (one parameter value
//! × one repeat) runs independently with seed = base_seed + repeat
//! index; cells execute in parallel on a worker pool and their rows are
//! merged in cell order, so the output bytes do not depend on the
//! worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use qsnash_core::dynamics::{self, Ensemble, RunConfig};
use qsnash_core::gridref::{self, FixedPointOptions, GridDensity, GridKernel};
use qsnash_core::kernel::Kernel;
use qsnash_core::metrics::{self, Reference};

use crate::config::{Metric, ValidatedConfig};
use crate::error::CliError;

/// Formats a float with 17 significant digits for bit-exact round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One (sweep value, repeat) execution unit.
struct Cell {
    index: usize,
    value: f64,
    repeat: usize,
    run: RunConfig,
}

struct CellOutcome {
    rows: Vec<String>,
    final_metric: Option<f64>,
    error: Option<String>,
}

/// Outcome of `cmd_run` on success.
pub struct RunArtifacts {
    pub rows_path: PathBuf,
    pub summary_path: PathBuf,
    pub data_rows: usize,
}

pub fn worker_count(cfg: &ValidatedConfig) -> usize {
    std::env::var("QSNASH_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(cfg.workers)
}

/// Executes the `run` subcommand: every sweep cell, metric rows at the
/// recording cadence, and a per-value summary. On numerical failure the
/// partial rows and an error row are still written and the error is
/// returned afterwards.
pub fn cmd_run(cfg: &ValidatedConfig) -> Result<RunArtifacts, CliError> {
    let algorithm = cfg
        .algorithm
        .ok_or_else(|| CliError::config("algorithm: required by the run subcommand"))?;
    let base = cfg
        .base_run
        .clone()
        .ok_or_else(|| CliError::config("run: section required by the run subcommand"))?;
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::config("output_dir: required by the run subcommand"))?;

    // a missing sweep is a single cell with value 0
    let (param, values, repeats) = match &cfg.sweep {
        Some((p, v, r)) => (Some(*p), v.clone(), *r),
        None => (None, vec![0.0], 1),
    };

    let mut cells = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        for repeat in 0..repeats {
            let mut run = base.clone();
            if let Some(p) = param {
                p.apply(&mut run, value)?;
            }
            run.seed = base.seed + repeat as u64;
            cells.push(Cell {
                index: vi * repeats + repeat,
                value,
                repeat,
                run,
            });
        }
    }

    let workers = worker_count(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("workers: {e}")))?;
    let mut outcomes: Vec<(usize, CellOutcome)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| (cell.index, run_cell(cfg, algorithm, cell)))
            .collect()
    });
    outcomes.sort_by_key(|(i, _)| *i);

    fs::create_dir_all(&out_dir)?;
    let rows_path = Path::new(&out_dir).join("runs.csv");
    let summary_path = Path::new(&out_dir).join("summary.csv");

    let metric_col = cfg.metric.column_name();
    let mut rows_text =
        format!("sweep_value,repeat,seed,outer_iter,{metric_col},elapsed_seconds\n");
    let mut data_rows = 0usize;
    let mut first_error: Option<String> = None;
    for (_, outcome) in &outcomes {
        for row in &outcome.rows {
            rows_text.push_str(row);
            rows_text.push('\n');
            data_rows += 1;
        }
        if let Some(err) = &outcome.error {
            rows_text.push_str(&format!("# error: {err}\n"));
            first_error.get_or_insert_with(|| err.clone());
        }
    }
    write_atomic(&rows_path, &rows_text)?;

    // summary: mean and standard error of the final metric per value
    let mut summary_text =
        format!("sweep_value,repeats,final_iter,mean_{metric_col},stderr_{metric_col}\n");
    for (vi, &value) in values.iter().enumerate() {
        let finals: Vec<f64> = outcomes
            .iter()
            .filter(|(i, o)| i / repeats == vi && o.final_metric.is_some())
            .map(|(_, o)| o.final_metric.unwrap())
            .collect();
        if finals.is_empty() {
            continue;
        }
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let stderr = if finals.len() > 1 {
            let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        // the final iteration depends on the sweep value when t is swept
        let mut final_iter = base.outer_iters;
        if let Some(p) = param {
            let mut probe = base.clone();
            p.apply(&mut probe, value)?;
            final_iter = probe.outer_iters;
        }
        let _ = writeln!(
            summary_text,
            "{},{},{},{},{}",
            fmt_f64(value),
            finals.len(),
            final_iter,
            fmt_f64(mean),
            fmt_f64(stderr)
        );
    }
    write_atomic(&summary_path, &summary_text)?;

    match first_error {
        Some(err) => Err(CliError::Numerical(err)),
        None => Ok(RunArtifacts {
            rows_path,
            summary_path,
            data_rows,
        }),
    }
}

fn run_cell(cfg: &ValidatedConfig, algorithm: dynamics::Algorithm, cell: &Cell) -> CellOutcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut final_metric = None;
    let mut metric_error: Option<qsnash_core::Error> = None;
    let t_final = cell.run.outer_iters;
    let record_every = cfg.record_every;
    {
        let mut observer = |t: usize, x: &Ensemble, y: &Ensemble| {
            if metric_error.is_some() || (!t.is_multiple_of(record_every) && t != t_final) {
                return;
            }
            match eval_metric(cfg, x, y) {
                Ok(m) => {
                    rows.push(format!(
                        "{},{},{},{},{},{:.6}",
                        fmt_f64(cell.value),
                        cell.repeat,
                        cell.run.seed,
                        t,
                        fmt_f64(m),
                        start.elapsed().as_secs_f64()
                    ));
                    if t == t_final {
                        final_metric = Some(m);
                    }
                }
                Err(e) => metric_error = Some(e),
            }
        };
        let result = dynamics::run(algorithm, &cell.run, &cfg.kernel, &mut observer);
        if let Err(e) = result {
            return CellOutcome {
                rows,
                final_metric: None,
                error: Some(format!(
                    "{e} (sweep_value={}, repeat={})",
                    fmt_f64(cell.value),
                    cell.repeat
                )),
            };
        }
    }
    if let Some(e) = metric_error {
        return CellOutcome {
            rows,
            final_metric: None,
            error: Some(format!(
                "metric: {e} (sweep_value={}, repeat={})",
                fmt_f64(cell.value),
                cell.repeat
            )),
        };
    }
    CellOutcome {
        rows,
        final_metric,
        error: None,
    }
}

fn eval_metric(cfg: &ValidatedConfig, x: &Ensemble, y: &Ensemble) -> qsnash_core::Result<f64> {
    match cfg.metric {
        Metric::Kl(bins) => metrics::kl_to_reference(x, bins, Reference::Uniform),
        Metric::Ni => Ok(metrics::ni_error(x, y, &cfg.kernel, &cfg.estimator)?.ni_value),
    }
}

/// Outcome of `cmd_oracle` on success.
pub struct OracleArtifacts {
    pub densities_path: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub iterations: usize,
    pub residual: f64,
}

/// Executes the `oracle` subcommand: the Boltzmann fixed point (always)
/// and optionally an explicit density-flow evolution with a free-energy
/// trace.
pub fn cmd_oracle(cfg: &ValidatedConfig) -> Result<OracleArtifacts, CliError> {
    let oracle = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::config("oracle: section required by the oracle subcommand"))?;
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::config("output_dir: required by the oracle subcommand"))?;

    let grid = GridKernel::from_kernel(&cfg.kernel, oracle.n_cells)
        .map_err(|e| CliError::config(format!("oracle: {e}")))?;
    let opts = FixedPointOptions {
        damping: oracle.damping,
        tol: oracle.tol,
        max_iter: oracle.max_iter,
    };
    let fp = gridref::fixed_point_solve(&grid, oracle.beta, &opts).map_err(CliError::from_run)?;

    fs::create_dir_all(&out_dir)?;
    let densities_path = Path::new(&out_dir).join("densities.csv");
    let mut text = String::from("cell_center,p_star,q_star\n");
    for i in 0..fp.p.n() {
        let _ = writeln!(
            text,
            "{},{},{}",
            fmt_f64(fp.p.cell_center(i)),
            fmt_f64(fp.p.values()[i]),
            fmt_f64(fp.q.values()[i])
        );
    }
    write_atomic(&densities_path, &text)?;

    let trace_path = match &oracle.pde {
        Some(pde) => {
            let path = Path::new(&out_dir).join("trace.csv");
            let trace = evolve_pde(&grid, oracle.beta, oracle.n_cells, pde)?;
            write_atomic(&path, &trace)?;
            Some(path)
        }
        None => None,
    };

    Ok(OracleArtifacts {
        densities_path,
        trace_path,
        iterations: fp.iterations,
        residual: fp.residual,
    })
}

fn evolve_pde(
    grid: &GridKernel,
    beta: f64,
    n_cells: usize,
    pde: &crate::config::PdeSection,
) -> Result<String, CliError> {
    let mut p = match pde.init.as_str() {
        "uniform" => GridDensity::uniform(n_cells),
        _ => bump_density(n_cells),
    };
    let mut text = String::from("step,time,free_energy_grid,clipped_mass\n");
    let mut time = 0.0;
    for step_idx in 0..pde.steps {
        let step = gridref::pde_step_auto(&p, grid, beta).map_err(CliError::from_run)?;
        if step_idx % pde.record_every == 0 {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                step_idx,
                fmt_f64(time),
                fmt_f64(step.free_energy),
                fmt_f64(step.clipped_mass)
            );
        }
        time += step.dt;
        p = step.density;
    }
    let final_f = gridref::free_energy(&p, grid, beta).map_err(CliError::from_run)?;
    let _ = writeln!(
        text,
        "{},{},{},{}",
        pde.steps,
        fmt_f64(time),
        fmt_f64(final_f),
        fmt_f64(0.0)
    );
    Ok(text)
}

/// Gaussian bump centered mid-domain over a small floor.
fn bump_density(n: usize) -> GridDensity {
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            (-(x - 0.5).powi(2) / 0.005).exp() + 0.05
        })
        .collect();
    GridDensity::from_unnormalized(values).expect("bump is positive")
}

/// Sanity-checks a config by constructing the kernel for its reported
/// summary line.
pub fn describe(cfg: &ValidatedConfig) -> String {
    let mut s = format!(
        "manifold {} | kernel {} | metric {}",
        cfg.manifold,
        kernel_name(&cfg.kernel),
        cfg.metric.column_name()
    );
    if let Some((p, values, repeats)) = &cfg.sweep {
        let _ = write!(s, " | sweep {p:?} x{} repeats {repeats}", values.len());
    }
    s
}

fn kernel_name(k: &Kernel) -> &'static str {
    match k {
        Kernel::SineTorus => "sine_torus",
        Kernel::PolySphere(_) => "poly_sphere",
    }
}

/// Writes through a temp file + rename so readers never see partial
/// output.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
