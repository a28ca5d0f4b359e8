//! Superdirectivity diagnostics.

use nalgebra::DMatrix;

use crate::array_model::{mc_matrix, ArrayGeometry, Wavenumber, C64};
use crate::channel::{ArrayFactors, CouplingModel};
use crate::error::{Error, Result};

/// `1/λ_min` of the coupling matrix.
pub fn quality_factor(geom: &ArrayGeometry, k: &Wavenumber) -> Result<f64> {
    Ok(1.0 / mc_matrix(geom, k)?.min_eigenvalue())
}

/// `Σ_l g_lᵀ C^{-1/2} Q C^{-1/2} g_l*` over the departure angles, with the
/// true coupling of `t`.
pub fn transmitted_power_density(t: &ArrayGeometry, q: &DMatrix<C64>, aod: &[f64], k: &Wavenumber) -> Result<f64> {
    if q.nrows() != t.len() || q.ncols() != t.len() {
        return Err(Error::contract(format!(
            "covariance is {}x{}, array has {} elements",
            q.nrows(),
            q.ncols(),
            t.len()
        )));
    }
    let factors = ArrayFactors::new(t.clone(), aod, k, CouplingModel::Physical)?;
    let p = factors.projected();
    Ok((p * q * p.adjoint()).trace().re)
}
