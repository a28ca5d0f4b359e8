//! Block coordinate ascent over the covariances and every element position.
//!
//! Narrowband and wideband runs share one engine; a narrowband problem is a
//! single carrier with no cyclic-prefix discount.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::trust_region::{feasible_interval, trm_step, QuadraticModel, TrustRegionConfig};
use crate::array_model::{ArrayGeometry, Wavenumber, C64};
use crate::channel::{freq_domain_prm, ArrayFactors, CouplingModel, EffectiveChannel, OfdmGrid, PathSet};
use crate::deriv::{Side, SideObjective};
use crate::error::{Error, Result};
use crate::rate::{log_det_bits, optimal_covariances, PowerAllocation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcaConfig {
    pub trust_region: TrustRegionConfig,
    /// Stop once the relative objective change of an outer iteration drops below this.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
}

impl BcaConfig {
    pub fn for_wavelength(lambda: f64) -> Self {
        Self {
            trust_region: TrustRegionConfig::for_wavelength(lambda),
            outer_tol: 1e-4,
            max_outer_iters: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trust_region.validate()?;
        if !(self.outer_tol >= 0.0) {
            return Err(Error::Config("outer tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything fixed during one optimization run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub t0: ArrayGeometry,
    pub r0: ArrayGeometry,
    pub paths: PathSet,
    pub prms: Vec<DVector<C64>>,
    pub k: Wavenumber,
    pub model: CouplingModel,
    pub noise: f64,
    pub p_max: f64,
    /// `S/(S + S_cp)`; 1 for narrowband.
    pub cp_factor: f64,
}

impl Problem {
    pub fn narrowband(
        t0: ArrayGeometry,
        r0: ArrayGeometry,
        paths: PathSet,
        k: Wavenumber,
        model: CouplingModel,
        noise: f64,
        p_max: f64,
    ) -> Self {
        let prms = vec![DVector::from_column_slice(paths.gains())];
        Self {
            t0,
            r0,
            paths,
            prms,
            k,
            model,
            noise,
            p_max,
            cp_factor: 1.0,
        }
    }

    pub fn wideband(
        t0: ArrayGeometry,
        r0: ArrayGeometry,
        paths: PathSet,
        grid: &OfdmGrid,
        k: Wavenumber,
        model: CouplingModel,
        noise: f64,
        p_max: f64,
    ) -> Self {
        let prms = freq_domain_prm(&paths, grid, &k);
        Self {
            t0,
            r0,
            paths,
            prms,
            k,
            model,
            noise,
            p_max,
            cp_factor: grid.cp_efficiency(),
        }
    }

    pub fn initial_channel(&self) -> Result<EffectiveChannel> {
        EffectiveChannel::build(&self.t0, &self.r0, &self.paths, self.prms.clone(), &self.k, self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Covariances refreshed by water-filling.
    Covariance,
    Transmit,
    Receive,
}

/// One entry of the convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer: usize,
    pub stage: Stage,
    pub index: Option<usize>,
    pub objective: f64,
    pub accepted: bool,
    pub radius: Option<f64>,
    pub ratio: Option<f64>,
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub tx_radii: Vec<f64>,
    pub rx_radii: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub channel: EffectiveChannel,
    pub allocation: PowerAllocation,
    pub objective: f64,
    pub tx_radii: Vec<f64>,
    pub rx_radii: Vec<f64>,
    pub steps: Vec<TraceRecord>,
    pub outer: Vec<OuterRecord>,
    pub converged: bool,
    /// Candidate evaluations or coordinate updates that failed and were skipped.
    pub failures: Vec<String>,
}

impl OptimizerState {
    pub fn tx_geometry(&self) -> &ArrayGeometry {
        self.channel.tx().geometry()
    }

    pub fn rx_geometry(&self) -> &ArrayGeometry {
        self.channel.rx().geometry()
    }

    /// Completed outer iterations.
    pub fn outer_iters(&self) -> usize {
        self.outer.len().saturating_sub(1)
    }

    /// Objective after each outer iteration, starting with the initial point.
    pub fn outer_objectives(&self) -> Vec<f64> {
        self.outer.iter().map(|o| o.objective).collect()
    }
}

/// Water-filled objective of `channel`.
fn refresh(channel: &EffectiveChannel, problem: &Problem) -> Result<(PowerAllocation, f64)> {
    let alloc = optimal_covariances(channel.matrices(), problem.noise, problem.p_max)?;
    let mut total = 0.0;
    for (h, c) in channel.matrices().iter().zip(&alloc.carriers) {
        total += log_det_bits(h, &c.q, problem.noise)?;
    }
    Ok((alloc, problem.cp_factor * total))
}

struct StepCounts {
    accepted: usize,
    rejected: usize,
}

/// Runs the inner trust-region loop on one coordinate and returns the
/// updated channel.
#[allow(clippy::too_many_arguments)]
fn optimize_coordinate(
    channel: EffectiveChannel,
    side: Side,
    index: usize,
    covs: &[DMatrix<C64>],
    problem: &Problem,
    cfg: &TrustRegionConfig,
    radius: &mut f64,
    outer: usize,
    state_steps: &mut Vec<TraceRecord>,
    failures: &mut Vec<String>,
    counts: &mut StepCounts,
) -> Result<EffectiveChannel> {
    let mut channel = channel;
    *radius = radius.max(cfg.min_radius);
    let stage = match side {
        Side::Transmit => Stage::Transmit,
        Side::Receive => Stage::Receive,
    };
    let mut value: Option<f64> = None;
    for _ in 0..cfg.max_inner_iters {
        let next = {
            let objective = SideObjective::new(&channel, side, covs, problem.noise, problem.cp_factor, problem.k)?;
            let current = match value {
                Some(v) => v,
                None => objective.value()?,
            };
            let geom = objective.geometry();
            let cap = geom.aperture().max(cfg.min_radius);
            let interval = feasible_interval(geom, index, *radius);
            if !(interval.1 > interval.0) {
                break;
            }
            let d = match objective.derivs(index) {
                Ok(d) => d,
                Err(e) => {
                    failures.push(format!("{side:?} {index}: derivative failed: {e}"));
                    break;
                }
            };
            let model = QuadraticModel {
                center: geom.positions()[index],
                value: current,
                g: d.g,
                h: d.h,
            };
            let mut candidate: Option<ArrayFactors> = None;
            let out = trm_step(model, interval, *radius, cap, cfg, |x| {
                let f = objective.moved_factors(index, x)?;
                let v = objective.value_with(&f)?;
                candidate = Some(f);
                Ok(v)
            });
            if let Some(msg) = &out.failure {
                debug!("{side:?} {index}: candidate rejected: {msg}");
                failures.push(format!("{side:?} {index}: {msg}"));
            }
            state_steps.push(TraceRecord {
                outer,
                stage,
                index: Some(index),
                objective: out.value,
                accepted: out.accepted,
                radius: Some(out.radius),
                ratio: out.ratio,
            });
            *radius = out.radius;
            (out, candidate)
        };
        let (out, candidate) = next;
        value = Some(out.value);
        if out.accepted {
            counts.accepted += 1;
            let factors = candidate.expect("accepted steps were evaluated");
            channel = match side {
                Side::Transmit => channel.with_tx(factors)?,
                Side::Receive => channel.with_rx(factors)?,
            };
            if out.actual.unwrap_or(0.0).abs() < cfg.inner_tol {
                break;
            }
        } else {
            counts.rejected += 1;
            if *radius < cfg.min_radius {
                break;
            }
        }
        if out.predicted < cfg.inner_tol {
            break;
        }
    }
    Ok(channel)
}

/// Water-filled state at the problem's initial geometry, with no position
/// updates. Used for fixed arrays.
pub fn evaluate_fixed(problem: &Problem) -> Result<OptimizerState> {
    let channel = problem.initial_channel()?;
    let (allocation, objective) = refresh(&channel, problem)?;
    Ok(OptimizerState {
        channel,
        allocation,
        objective,
        tx_radii: Vec::new(),
        rx_radii: Vec::new(),
        steps: vec![TraceRecord {
            outer: 0,
            stage: Stage::Covariance,
            index: None,
            objective,
            accepted: true,
            radius: None,
            ratio: None,
        }],
        outer: vec![OuterRecord {
            iteration: 0,
            objective,
            tx_radii: Vec::new(),
            rx_radii: Vec::new(),
            accepted: 0,
            rejected: 0,
        }],
        converged: true,
        failures: Vec::new(),
    })
}

/// Block coordinate ascent: water-fill, sweep transmit elements, refresh the
/// covariances, sweep receive elements, refresh again; repeat until the
/// relative objective change falls below `outer_tol`.
///
/// Every transmit sweep holds the covariances from the preceding refresh.
/// Every receive sweep holds the receive covariances `S̄` from the refresh
/// just before it, so the water-filled objective never decreases.
pub fn run_bca(problem: &Problem, cfg: &BcaConfig) -> Result<OptimizerState> {
    cfg.validate()?;
    let mut channel = problem.initial_channel()?;
    let (mut alloc, mut objective) = refresh(&channel, problem)?;
    let trm = &cfg.trust_region;
    let mut tx_radii = vec![trm.initial_radius; problem.t0.len()];
    let mut rx_radii = vec![trm.initial_radius; problem.r0.len()];
    let mut steps = vec![TraceRecord {
        outer: 0,
        stage: Stage::Covariance,
        index: None,
        objective,
        accepted: true,
        radius: None,
        ratio: None,
    }];
    let mut outer = vec![OuterRecord {
        iteration: 0,
        objective,
        tx_radii: tx_radii.clone(),
        rx_radii: rx_radii.clone(),
        accepted: 0,
        rejected: 0,
    }];
    let mut failures = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.max_outer_iters {
        let previous = objective;
        let mut counts = StepCounts {
            accepted: 0,
            rejected: 0,
        };
        for side in [Side::Transmit, Side::Receive] {
            let covs = match side {
                Side::Transmit => alloc.covariances(),
                Side::Receive => alloc.receive_covariances(),
            };
            let radii = match side {
                Side::Transmit => &mut tx_radii,
                Side::Receive => &mut rx_radii,
            };
            for (index, radius) in radii.iter_mut().enumerate() {
                channel = optimize_coordinate(
                    channel,
                    side,
                    index,
                    &covs,
                    problem,
                    trm,
                    radius,
                    it,
                    &mut steps,
                    &mut failures,
                    &mut counts,
                )?;
            }
            let (a, v) = refresh(&channel, problem)?;
            alloc = a;
            objective = v;
            steps.push(TraceRecord {
                outer: it,
                stage: Stage::Covariance,
                index: None,
                objective,
                accepted: true,
                radius: None,
                ratio: None,
            });
        }
        outer.push(OuterRecord {
            iteration: it,
            objective,
            tx_radii: tx_radii.clone(),
            rx_radii: rx_radii.clone(),
            accepted: counts.accepted,
            rejected: counts.rejected,
        });
        let change = (objective - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        debug!("outer {it}: objective {objective:.9} (relative change {change:.3e})");
        if change < cfg.outer_tol || objective == previous {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("no convergence after {} outer iterations", cfg.max_outer_iters);
    }
    Ok(OptimizerState {
        channel,
        allocation: alloc,
        objective,
        tx_radii,
        rx_radii,
        steps,
        outer,
        converged,
        failures,
    })
}

/// Narrowband capacity maximization.
pub fn bca_narrowband(problem: &Problem, cfg: &BcaConfig) -> Result<OptimizerState> {
    if problem.prms.len() != 1 || problem.cp_factor != 1.0 {
        return Err(Error::contract("narrowband problem must have one carrier and no CP discount"));
    }
    run_bca(problem, cfg)
}

/// Wideband CP-discounted sum-rate maximization.
pub fn bca_wideband(problem: &Problem, cfg: &BcaConfig) -> Result<OptimizerState> {
    run_bca(problem, cfg)
}
