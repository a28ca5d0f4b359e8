//! Fixed-array baselines and the coupling-blind movable-array mode.

use serde::{Deserialize, Serialize};

use super::bca::{run_bca, BcaConfig, OptimizerState, Problem};
use crate::array_model::ArrayGeometry;
use crate::channel::{CouplingModel, EffectiveChannel};
use crate::error::{Error, Result};
use crate::rate::log_det_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Half-wavelength spacing.
    Ula,
    /// 0.2λ spacing.
    Cla,
}

impl BaselineKind {
    pub fn spacing(self, lambda: f64) -> f64 {
        match self {
            BaselineKind::Ula => 0.5 * lambda,
            BaselineKind::Cla => 0.2 * lambda,
        }
    }
}

/// Uniform array starting at the origin.
pub fn baseline_positions(kind: BaselineKind, count: usize, lambda: f64) -> Result<ArrayGeometry> {
    if count == 0 {
        return Err(Error::InvalidGeometry("baseline array needs at least one element".into()));
    }
    ArrayGeometry::uniform_spacing(count, kind.spacing(lambda))
}

/// Rate of `state`'s final geometry and covariances re-evaluated on the
/// channel with physical coupling.
pub fn physical_objective(problem: &Problem, state: &OptimizerState) -> Result<f64> {
    let truth = EffectiveChannel::build(
        state.tx_geometry(),
        state.rx_geometry(),
        &problem.paths,
        problem.prms.clone(),
        &problem.k,
        CouplingModel::Physical,
    )?;
    let mut total = 0.0;
    for (h, c) in truth.matrices().iter().zip(&state.allocation.carriers) {
        total += log_det_bits(h, &c.q, problem.noise)?;
    }
    Ok(problem.cp_factor * total)
}

#[derive(Debug, Clone)]
pub struct NcMaOutcome {
    pub state: OptimizerState,
    /// Objective the coupling-blind optimizer believes it reached.
    pub modeled: f64,
    /// The same positions and covariances under physical coupling.
    pub physical: f64,
}

/// Runs the optimizer with both coupling matrices frozen at identity, then
/// re-evaluates the result under physical coupling.
pub fn nc_ma_mode(problem: &Problem, cfg: &BcaConfig) -> Result<NcMaOutcome> {
    let blind = Problem {
        model: CouplingModel::Ignored,
        ..problem.clone()
    };
    let state = run_bca(&blind, cfg)?;
    let physical = physical_objective(problem, &state)?;
    Ok(NcMaOutcome {
        modeled: state.objective,
        physical,
        state,
    })
}
