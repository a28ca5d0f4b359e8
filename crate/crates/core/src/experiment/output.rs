//! Result files: `results.csv`, `summary.json`, `traces/` and `paths/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, Mode, Profile, SCHEMA_VERSION};
use super::runner::{default_workers, run_cells, Cell, ResultRow, TrialTrace};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_objective_bits: Option<f64>,
    pub mean_modeled_objective_bits: Option<f64>,
    pub mean_outer_iters: Option<f64>,
    pub mean_qf_tx: Option<f64>,
    pub mean_qf_rx: Option<f64>,
    pub mean_p_trans: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub profile: Profile,
    pub mode: Mode,
    pub master_seed: u64,
    pub trials: usize,
    pub entries: Vec<SummaryEntry>,
    /// Schemes for which no row produced an objective.
    pub failed_schemes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn success(&self) -> bool {
        self.summary.failed_schemes.is_empty()
    }
}

#[derive(Serialize)]
struct TraceFile<'a> {
    scheme: &'a str,
    sweep_var: &'a str,
    sweep_value: f64,
    trials: Vec<&'a TrialTrace>,
}

fn mean<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(cfg: &ExperimentConfig, cells: &[Cell]) -> Summary {
    let mut groups: BTreeMap<(usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.scheme_index, c.sweep_index)).or_default().push(&c.row);
    }
    let entries = groups
        .values()
        .map(|rows| SummaryEntry {
            scheme: rows[0].scheme.clone(),
            sweep_var: rows[0].sweep_var.clone(),
            sweep_value: rows[0].sweep_value,
            trials: rows.len(),
            failed: rows.iter().filter(|r| r.error.is_some()).count(),
            mean_objective_bits: mean(rows.iter().map(|r| r.objective_bits)),
            mean_modeled_objective_bits: mean(rows.iter().map(|r| r.modeled_objective_bits)),
            mean_outer_iters: mean(rows.iter().map(|r| r.outer_iters.map(|n| n as f64))),
            mean_qf_tx: mean(rows.iter().map(|r| r.qf_tx)),
            mean_qf_rx: mean(rows.iter().map(|r| r.qf_rx)),
            mean_p_trans: mean(rows.iter().map(|r| r.p_trans)),
        })
        .collect();
    let failed_schemes = cfg
        .schemes
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            !cells
                .iter()
                .any(|c| c.scheme_index == *i && c.row.objective_bits.is_some())
        })
        .map(|(_, s)| s.label())
        .collect();
    Summary {
        schema_version: SCHEMA_VERSION,
        profile: cfg.profile,
        mode: cfg.mode,
        master_seed: cfg.master_seed,
        trials: cfg.trials,
        entries,
        failed_schemes,
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the whole experiment and writes its files under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    run_experiment_with_workers(cfg, out, default_workers())
}

pub fn run_experiment_with_workers(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cells = run_cells(cfg, workers)?;
    fs::create_dir_all(out.join("traces"))?;
    let rows: Vec<ResultRow> = cells.iter().map(|c| c.row.clone()).collect();
    write_csv(&out.join("results.csv"), &rows)?;

    let summary = summarize(cfg, &cells);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;

    let mut traces: BTreeMap<(usize, usize), Vec<&Cell>> = BTreeMap::new();
    for c in &cells {
        traces.entry((c.scheme_index, c.sweep_index)).or_default().push(c);
    }
    for ((_, sweep_index), group) in &traces {
        let first = &group[0].row;
        let file = TraceFile {
            scheme: &first.scheme,
            sweep_var: &first.sweep_var,
            sweep_value: first.sweep_value,
            trials: group.iter().map(|c| &c.trace).collect(),
        };
        let name = format!("{}_sweep{:03}.json", first.scheme, sweep_index);
        fs::write(out.join("traces").join(name), serde_json::to_string(&file)? + "\n")?;
    }

    if cfg.dump_paths {
        fs::create_dir_all(out.join("paths"))?;
        for c in cells.iter().filter(|c| c.paths.is_some()) {
            let name = format!("sweep{:03}_trial{:05}.json", c.sweep_index, c.row.trial);
            let paths = c.paths.as_ref().expect("filtered");
            fs::write(out.join("paths").join(name), paths.to_json()? + "\n")?;
        }
    }
    Ok(ExperimentReport { rows, summary })
}
