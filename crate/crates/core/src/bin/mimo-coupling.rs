use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mimo_coupling::array_model::{ArrayGeometry, Wavenumber};
use mimo_coupling::channel::PathSet;
use mimo_coupling::experiment::{
    quality_factor, run_experiment, runner::diagnostics, run_scheme, ExperimentConfig, Profile, SchemeConfig, SchemeKind,
};
use mimo_coupling::optimizer::OuterRecord;

#[derive(Parser)]
#[command(name = "mimo-coupling", version, about = "Movable-antenna MIMO optimization with mutual coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
    },
    /// Print the quality factor of a uniform array.
    Qf {
        /// Element spacing in wavelengths.
        spacing_in_lambda: f64,
        count: usize,
    },
    /// Run one scheme on a saved path set and print the result as JSON.
    Replay {
        pathset: PathBuf,
        scheme: String,
        /// Config supplying everything except the paths; profile defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
    },
}

#[derive(Serialize)]
struct ReplayOutput {
    scheme: String,
    objective_bits: f64,
    modeled_objective_bits: f64,
    outer_iters: usize,
    converged: bool,
    tx_positions_lambda: Vec<f64>,
    rx_positions_lambda: Vec<f64>,
    qf_tx: f64,
    qf_rx: f64,
    p_trans: f64,
    trace: Vec<OuterRecord>,
}

fn load_config(path: Option<&PathBuf>, profile: Option<Profile>) -> anyhow::Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?, profile)?,
        None => ExperimentConfig::from_profile(profile.unwrap_or_default())?,
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            profile,
        } => {
            let base = load_config(Some(&config), profile)?;
            let mut file = base.file.clone();
            if let Some(n) = trials {
                file.trials = n;
            }
            if let Some(s) = seed {
                file.master_seed = s;
            }
            let cfg = ExperimentConfig::resolve(file)?;
            let report = run_experiment(&cfg, &out)?;
            for e in &report.summary.entries {
                let mean = e.mean_objective_bits.map_or("-".to_owned(), |v| format!("{v:.4}"));
                println!(
                    "{:<8} {}={:<8} mean {} bits/s/Hz over {} trials ({} failed)",
                    e.scheme, e.sweep_var, e.sweep_value, mean, e.trials, e.failed
                );
            }
            println!("wrote {}", out.display());
            if report.success() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("schemes failed on every trial: {}", report.summary.failed_schemes.join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Qf {
            spacing_in_lambda,
            count,
        } => {
            let geom = ArrayGeometry::uniform_spacing(count, spacing_in_lambda)?;
            let qf = quality_factor(&geom, &Wavenumber::from_wavelength(1.0))?;
            println!("{qf:.6e}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            pathset,
            scheme,
            config,
            profile,
        } => {
            let cfg = load_config(config.as_ref(), profile)?;
            let paths = PathSet::from_json(&std::fs::read_to_string(&pathset)?)?;
            let scheme = SchemeConfig::new(SchemeKind::parse(&scheme)?);
            let run = run_scheme(&cfg, &scheme, &paths)?;
            let (qf_tx, qf_rx, p_trans) = diagnostics(&cfg, &run, &paths)?;
            let lam = cfg.wavenumber().wavelength;
            let out = ReplayOutput {
                scheme: scheme.label(),
                objective_bits: run.objective,
                modeled_objective_bits: run.modeled,
                outer_iters: run.outer_iters(),
                converged: run.state.converged,
                tx_positions_lambda: run.state.tx_geometry().positions().iter().map(|p| p / lam).collect(),
                rx_positions_lambda: run.state.rx_geometry().positions().iter().map(|p| p / lam).collect(),
                qf_tx,
                qf_rx,
                p_trans,
                trace: run.state.outer,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
