//! Monte Carlo sweeps over channel realizations and schemes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use super::config::{ExperimentConfig, Mode, SchemeConfig, SchemeKind};
use super::diagnostics::{quality_factor, transmitted_power_density};
use crate::array_model::ArrayGeometry;
use crate::channel::{CouplingModel, OfdmGrid, PathSet};
use crate::error::Result;
use crate::optimizer::{evaluate_fixed, nc_ma_mode, run_bca, OptimizerState, OuterRecord, Problem};
use crate::scenario::{draw_scenario, trial_seed};

/// Outcome of one scheme on one channel realization.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    /// Objective under physical coupling, bits/s/Hz.
    pub objective: f64,
    /// Objective under the scheme's own coupling model.
    pub modeled: f64,
    pub state: OptimizerState,
}

impl SchemeRun {
    pub fn outer_iters(&self) -> usize {
        self.state.outer_iters()
    }
}

/// Optimization problem for `scheme` on `paths` at `cfg`'s operating point.
pub fn build_problem(cfg: &ExperimentConfig, scheme: &SchemeConfig, paths: &PathSet) -> Result<Problem> {
    let k = cfg.wavenumber();
    let lam = k.wavelength;
    let d_min = scheme.d_min_lambda() * lam;
    let geometry = |count: usize| -> Result<ArrayGeometry> {
        if scheme.kind.is_movable() {
            ArrayGeometry::uniform_spread(count, cfg.aperture(count), d_min)
        } else {
            ArrayGeometry::uniform_spacing(count, d_min)
        }
    };
    let t0 = geometry(cfg.antennas_tx)?;
    let r0 = geometry(cfg.antennas_rx)?;
    let model = match scheme.kind {
        SchemeKind::NcMa => CouplingModel::Ignored,
        _ => CouplingModel::Physical,
    };
    Ok(match cfg.mode {
        Mode::Narrowband => Problem::narrowband(t0, r0, paths.clone(), k, model, cfg.noise_w, cfg.p_max_w),
        Mode::Wideband => {
            let grid = OfdmGrid::for_paths(cfg.subcarriers, cfg.subcarrier_spacing_hz, paths)?;
            Problem::wideband(t0, r0, paths.clone(), &grid, k, model, cfg.noise_wb_w, cfg.p_max_wb_w())
        }
    })
}

pub fn run_scheme(cfg: &ExperimentConfig, scheme: &SchemeConfig, paths: &PathSet) -> Result<SchemeRun> {
    let problem = build_problem(cfg, scheme, paths)?;
    match scheme.kind {
        SchemeKind::CMa => {
            let state = run_bca(&problem, &cfg.bca)?;
            Ok(SchemeRun {
                objective: state.objective,
                modeled: state.objective,
                state,
            })
        }
        SchemeKind::NcMa => {
            let physical = Problem {
                model: CouplingModel::Physical,
                ..problem
            };
            let out = nc_ma_mode(&physical, &cfg.bca)?;
            Ok(SchemeRun {
                objective: out.physical,
                modeled: out.modeled,
                state: out.state,
            })
        }
        SchemeKind::Ula | SchemeKind::Cla => {
            let state = evaluate_fixed(&problem)?;
            Ok(SchemeRun {
                objective: state.objective,
                modeled: state.objective,
                state,
            })
        }
    }
}

/// Quality factors of both final arrays and the transmitted power density
/// summed over carriers.
pub fn diagnostics(cfg: &ExperimentConfig, run: &SchemeRun, paths: &PathSet) -> Result<(f64, f64, f64)> {
    let k = cfg.wavenumber();
    let qf_tx = quality_factor(run.state.tx_geometry(), &k)?;
    let qf_rx = quality_factor(run.state.rx_geometry(), &k)?;
    let mut p_trans = 0.0;
    for c in &run.state.allocation.carriers {
        p_trans += transmitted_power_density(run.state.tx_geometry(), &c.q, paths.aod(), &k)?;
    }
    Ok((qf_tx, qf_rx, p_trans))
}

/// One CSV row. Empty numeric cells mark values that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub objective_bits: Option<f64>,
    pub modeled_objective_bits: Option<f64>,
    pub outer_iters: Option<usize>,
    pub qf_tx: Option<f64>,
    pub qf_rx: Option<f64>,
    pub p_trans: Option<f64>,
    pub wall_s: Option<f64>,
    pub error: Option<String>,
}

/// Convergence trace of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub objective: Vec<f64>,
    pub iterations: Vec<OuterRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of one (scheme, sweep point, trial) cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub scheme_index: usize,
    pub sweep_index: usize,
    pub row: ResultRow,
    pub trace: TrialTrace,
    pub paths: Option<PathSet>,
}

fn run_cell(
    point: &ExperimentConfig,
    scheme: &SchemeConfig,
    paths: &std::result::Result<PathSet, String>,
    sweep_var: &str,
    sweep_value: f64,
    trial: usize,
    seed: u64,
) -> (ResultRow, TrialTrace) {
    let mut row = ResultRow {
        scheme: scheme.label(),
        sweep_var: sweep_var.to_owned(),
        sweep_value,
        trial,
        seed,
        objective_bits: None,
        modeled_objective_bits: None,
        outer_iters: None,
        qf_tx: None,
        qf_rx: None,
        p_trans: None,
        wall_s: None,
        error: None,
    };
    let mut trace = TrialTrace {
        trial,
        seed,
        converged: None,
        objective: Vec::new(),
        iterations: Vec::new(),
        error: None,
    };
    let paths = match paths {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(format!("scenario: {e}"));
            trace.error = row.error.clone();
            return (row, trace);
        }
    };
    let start = Instant::now();
    match run_scheme(point, scheme, paths) {
        Ok(run) => {
            row.objective_bits = Some(run.objective);
            row.modeled_objective_bits = Some(run.modeled);
            row.outer_iters = Some(run.outer_iters());
            match diagnostics(point, &run, paths) {
                Ok((qf_tx, qf_rx, p_trans)) => {
                    row.qf_tx = Some(qf_tx);
                    row.qf_rx = Some(qf_rx);
                    row.p_trans = Some(p_trans);
                }
                Err(e) => row.error = Some(format!("diagnostics: {e}")),
            }
            trace.converged = Some(run.state.converged);
            trace.objective = run.state.outer_objectives();
            trace.iterations = run.state.outer;
        }
        Err(e) => {
            warn!("{} trial {trial}: {e}", scheme.label());
            row.error = Some(e.to_string());
            trace.error = row.error.clone();
        }
    }
    if point.record_wall_time {
        row.wall_s = Some(start.elapsed().as_secs_f64());
    }
    (row, trace)
}

/// Runs every (sweep point, trial) job, each job drawing one realization and
/// running all schemes on it. Cells come back sorted by scheme, sweep point
/// and trial regardless of which worker finished first.
pub fn run_cells(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<Cell>> {
    let points = cfg.sweep_points();
    let resolved: Vec<ExperimentConfig> = points.iter().map(|(_, v)| cfg.at_sweep_point(*v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(jobs.len() * cfg.schemes.len()));
    let workers = workers.clamp(1, jobs.len().max(1));
    info!("{} jobs x {} schemes on {workers} workers", jobs.len(), cfg.schemes.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(sweep_index, trial)) = jobs.get(j) else {
                    break;
                };
                let point = &resolved[sweep_index];
                let (sweep_var, sweep_value) = &points[sweep_index];
                let seed = trial_seed(cfg.master_seed, trial as u64);
                let paths = draw_scenario(&point.scenario, point.rng, seed).map_err(|e| e.to_string());
                let mut local = Vec::with_capacity(cfg.schemes.len());
                for (scheme_index, scheme) in point.schemes.iter().enumerate() {
                    let (row, trace) = run_cell(point, scheme, &paths, sweep_var, *sweep_value, trial, seed);
                    local.push(Cell {
                        scheme_index,
                        sweep_index,
                        row,
                        trace,
                        paths: if scheme_index == 0 && cfg.dump_paths { paths.clone().ok() } else { None },
                    });
                }
                done.lock().expect("result lock").extend(local);
            });
        }
    });
    let mut cells = done.into_inner().expect("result lock");
    cells.sort_by_key(|c| (c.scheme_index, c.sweep_index, c.row.trial));
    Ok(cells)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
