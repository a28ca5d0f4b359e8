//! First and second derivatives of the rate objective with respect to one
//! element position.
//!
//! Both sides share one routine. Seen from the moving array, every carrier's
//! channel is `K = Aᴴ · diag(β) · P(x)` where `P = G·W` is the moving side's
//! projected response and `A` the frozen side's. Transmit moves use
//! `K = H`, `β = b` and the transmit covariance; receive moves use the
//! reversed link `K = Hᴴ`, `β = conj(b)` and `S̄`.
//!
//! With `M = K Q Kᴴ/σ²` and `Φ = (I + M)⁻¹`, the objective
//! `log det(I + M)` has derivatives `tr(Φ M′)` and
//! `tr(Φ M″) − tr(Φ M′ Φ M′)`, where `M′ = (K′QKᴴ + KQK′ᴴ)/σ²` and
//! `M″ = (K″QKᴴ + 2K′QK′ᴴ + KQK″ᴴ)/σ²`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::array_model::{mc_matrix_d1, mc_matrix_d2, steering_column_derivs, ArrayGeometry, Wavenumber, C64};
use crate::channel::{sandwich, ArrayFactors, EffectiveChannel};
use crate::error::{Error, Result};
use crate::matfun::inv_sqrt_derivs;
use crate::rate::log_det_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Transmit,
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinateSide {
    pub side: Side,
    pub index: usize,
}

impl CoordinateSide {
    pub fn tx(index: usize) -> Self {
        Self {
            side: Side::Transmit,
            index,
        }
    }

    pub fn rx(index: usize) -> Self {
        Self {
            side: Side::Receive,
            index,
        }
    }
}

/// First (`g`, bits/m) and second (`h`, bits/m²) derivative. `imag_residue`
/// is the imaginary part of the second-order trace expression relative to
/// the magnitude of its terms (at least `k²`, one nat per radian²); it
/// vanishes in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivPair {
    pub g: f64,
    pub h: f64,
    pub imag_residue: f64,
}

fn real_to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// `∂(G·W)/∂x_m` and `∂²(G·W)/∂x_m²` for one side's element `m`.
pub fn projected_derivs(factors: &ArrayFactors, k: &Wavenumber, m: usize) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let geom = factors.geometry();
    if m >= geom.len() {
        return Err(Error::contract(format!(
            "element index {m} out of range for {} elements",
            geom.len()
        )));
    }
    let (c1, c2) = steering_column_derivs(geom.positions()[m], factors.angles(), k.k);
    let w = factors.inv_sqrt();
    // G′ and G″ are zero outside column m, so G′W = c1 · W[m, :].
    let w_row = w.row(m).map(|v| C64::new(v, 0.0));
    let mut p1 = &c1 * &w_row;
    let mut p2 = &c2 * &w_row;
    if let Some(c) = factors.coupling() {
        let dc = mc_matrix_d1(geom, k, m);
        let d2c = mc_matrix_d2(geom, k, m);
        let dw = inv_sqrt_derivs(c, &dc, &d2c)?;
        let g = factors.frm();
        let w1 = real_to_complex(dw.first.as_matrix());
        let w2 = real_to_complex(dw.second.as_matrix());
        p1 += g * &w1;
        p2 += g * w2 + (&c1 * (w1.row(m).into_owned())) * C64::new(2.0, 0.0);
    }
    Ok((p1, p2))
}

/// `∂H_ν/∂x` and `∂²H_ν/∂x²` for every carrier, with the opposite array's
/// factors held at their cached values.
pub fn channel_derivs(
    channel: &EffectiveChannel,
    coord: CoordinateSide,
    k: &Wavenumber,
) -> Result<Vec<(DMatrix<C64>, DMatrix<C64>)>> {
    let out = match coord.side {
        Side::Transmit => {
            let (p1, p2) = projected_derivs(channel.tx(), k, coord.index)?;
            let pr = channel.rx().projected();
            channel
                .prms()
                .iter()
                .map(|b| (sandwich(pr, b, &p1), sandwich(pr, b, &p2)))
                .collect()
        }
        Side::Receive => {
            let (p1, p2) = projected_derivs(channel.rx(), k, coord.index)?;
            let pt = channel.tx().projected();
            channel
                .prms()
                .iter()
                .map(|b| (sandwich(&p1, b, pt), sandwich(&p2, b, pt)))
                .collect()
        }
    };
    Ok(out)
}

/// Rate objective of one side with everything but that side's element
/// positions frozen: covariances, noise, CP factor and the opposite array.
#[derive(Debug, Clone)]
pub struct SideObjective<'a> {
    side: Side,
    moving: &'a ArrayFactors,
    fixed: &'a ArrayFactors,
    prms: Vec<DVector<C64>>,
    covariances: &'a [DMatrix<C64>],
    noise: f64,
    scale: f64,
    k: Wavenumber,
}

impl<'a> SideObjective<'a> {
    /// `covariances` are the transmit covariances `Q̄_ν` for
    /// [`Side::Transmit`] and the receive covariances `S̄_ν` for
    /// [`Side::Receive`]. `cp_factor` multiplies the summed rate.
    pub fn new(
        channel: &'a EffectiveChannel,
        side: Side,
        covariances: &'a [DMatrix<C64>],
        noise: f64,
        cp_factor: f64,
        k: Wavenumber,
    ) -> Result<Self> {
        let (moving, fixed, prms) = match side {
            Side::Transmit => (channel.tx(), channel.rx(), channel.prms().to_vec()),
            Side::Receive => (
                channel.rx(),
                channel.tx(),
                channel.prms().iter().map(|b| b.map(|z| z.conj())).collect(),
            ),
        };
        if covariances.len() != prms.len() {
            return Err(Error::contract(format!(
                "{} covariances for {} carriers",
                covariances.len(),
                prms.len()
            )));
        }
        let n = moving.geometry().len();
        if covariances.iter().any(|q| q.shape() != (n, n)) {
            return Err(Error::contract(format!("covariances must be {n}x{n}")));
        }
        if !(noise > 0.0) {
            return Err(Error::contract("noise power must be positive"));
        }
        Ok(Self {
            side,
            moving,
            fixed,
            prms,
            covariances,
            noise,
            scale: cp_factor,
            k,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        self.moving.geometry()
    }

    fn rate_of(&self, projected: &DMatrix<C64>) -> Result<f64> {
        let a = self.fixed.projected();
        let mut total = 0.0;
        for (b, q) in self.prms.iter().zip(self.covariances) {
            total += log_det_bits(&sandwich(a, b, projected), q, self.noise)?;
        }
        Ok(self.scale * total)
    }

    /// Objective at the cached geometry.
    pub fn value(&self) -> Result<f64> {
        self.rate_of(self.moving.projected())
    }

    /// Objective with element `index` moved to `x`; fails when the move
    /// breaks the geometry or the coupling matrix becomes ill-conditioned.
    pub fn value_at(&self, index: usize, x: f64) -> Result<f64> {
        let moved = self.moving.moved(self.geometry().with_position(index, x)?, &self.k)?;
        self.rate_of(moved.projected())
    }

    /// Objective with the moving side replaced by `factors`.
    pub fn value_with(&self, factors: &ArrayFactors) -> Result<f64> {
        self.rate_of(factors.projected())
    }

    /// Moving-side factors after placing element `index` at `x`.
    pub fn moved_factors(&self, index: usize, x: f64) -> Result<ArrayFactors> {
        self.moving.moved(self.geometry().with_position(index, x)?, &self.k)
    }

    /// Exact first and second derivative with respect to element `index`.
    pub fn derivs(&self, index: usize) -> Result<DerivPair> {
        let (p1, p2) = projected_derivs(self.moving, &self.k, index)?;
        let a = self.fixed.projected();
        let p0 = self.moving.projected();
        let mut d1 = C64::new(0.0, 0.0);
        let mut d2 = C64::new(0.0, 0.0);
        let mut magnitude = 0.0;
        for (b, q) in self.prms.iter().zip(self.covariances) {
            let k0 = sandwich(a, b, p0);
            let k1 = sandwich(a, b, &p1);
            let k2 = sandwich(a, b, &p2);
            let t = carrier_traces(&k0, &k1, &k2, q, self.noise)?;
            d1 += t.first;
            d2 += t.second;
            magnitude += t.second_magnitude;
        }
        let to_bits = self.scale / std::f64::consts::LN_2;
        Ok(DerivPair {
            g: d1.re * to_bits,
            h: d2.re * to_bits,
            imag_residue: d2.im.abs() / magnitude.max(self.k.k * self.k.k),
        })
    }
}

/// `(tr(Φ M′), tr(Φ M″) − tr(Φ M′ Φ M′))` in nats.
struct CarrierTraces {
    first: C64,
    second: C64,
    /// Sum of the magnitudes of the two second-order terms.
    second_magnitude: f64,
}

fn carrier_traces(
    k0: &DMatrix<C64>,
    k1: &DMatrix<C64>,
    k2: &DMatrix<C64>,
    q: &DMatrix<C64>,
    noise: f64,
) -> Result<CarrierTraces> {
    let n = k0.nrows();
    let inv_noise = C64::new(1.0 / noise, 0.0);
    let qk0h = q * k0.adjoint();
    let qk1h = q * k1.adjoint();
    let m0 = k0 * &qk0h * inv_noise;
    let a = DMatrix::<C64>::identity(n, n) + (&m0 + m0.adjoint()) * C64::new(0.5, 0.0);
    let chol: Cholesky<C64, Dyn> =
        Cholesky::new(a).ok_or_else(|| Error::contract("I + KQKᴴ/σ² is not positive definite"))?;
    let cross = k1 * &qk0h;
    let m1 = (&cross + cross.adjoint()) * inv_noise;
    let curv = k2 * &qk0h;
    let m2 = (&curv + curv.adjoint() + k1 * &qk1h * C64::new(2.0, 0.0)) * inv_noise;
    let phi_m1 = chol.solve(&m1);
    let phi_m2 = chol.solve(&m2);
    let curvature = phi_m2.trace();
    let square = (&phi_m1 * &phi_m1).trace();
    Ok(CarrierTraces {
        first: phi_m1.trace(),
        second: curvature - square,
        second_magnitude: curvature.norm() + square.norm(),
    })
}

/// Narrowband derivative pair for `coord`; `cov` is `Q̄` (transmit) or `S̄` (receive).
pub fn objective_derivs_nb(
    channel: &EffectiveChannel,
    coord: CoordinateSide,
    cov: &DMatrix<C64>,
    noise: f64,
    k: &Wavenumber,
) -> Result<DerivPair> {
    let covs = std::slice::from_ref(cov);
    SideObjective::new(channel, coord.side, covs, noise, 1.0, *k)?.derivs(coord.index)
}

/// Wideband derivative pair of the CP-discounted sum-rate.
pub fn objective_derivs_wb(
    channel: &EffectiveChannel,
    coord: CoordinateSide,
    covs: &[DMatrix<C64>],
    noise: f64,
    cp_factor: f64,
    k: &Wavenumber,
) -> Result<DerivPair> {
    SideObjective::new(channel, coord.side, covs, noise, cp_factor, *k)?.derivs(coord.index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CouplingModel, PathSet};

    fn k() -> Wavenumber {
        Wavenumber::from_wavelength(1.0)
    }

    #[test]
    fn zero_covariance_gives_zero() {
        let t = ArrayGeometry::new(vec![0.0, 0.3, 0.7], 1.0, 0.2).unwrap();
        let r = ArrayGeometry::new(vec![0.0, 0.25], 1.0, 0.2).unwrap();
        let paths = PathSet::new(vec![0.3, -0.2], vec![0.1, 0.5], vec![0.0; 2], vec![C64::new(1.0, 0.2); 2]).unwrap();
        let b = DVector::from_column_slice(paths.gains());
        let ch = EffectiveChannel::build(&t, &r, &paths, vec![b], &k(), CouplingModel::Physical).unwrap();
        let d = objective_derivs_nb(&ch, CoordinateSide::tx(1), &DMatrix::zeros(3, 3), 1.0, &k()).unwrap();
        assert_eq!((d.g, d.h), (0.0, 0.0));
        let d = objective_derivs_nb(&ch, CoordinateSide::rx(0), &DMatrix::zeros(2, 2), 1.0, &k()).unwrap();
        assert_eq!((d.g, d.h), (0.0, 0.0));
    }

    #[test]
    fn broadside_paths_without_coupling_are_flat() {
        let t = ArrayGeometry::new(vec![0.0, 0.3, 0.7], 1.0, 0.2).unwrap();
        let paths = PathSet::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![C64::new(0.4, -0.1); 2]).unwrap();
        let b = DVector::from_column_slice(paths.gains());
        let ch = EffectiveChannel::build(&t, &t, &paths, vec![b], &k(), CouplingModel::Ignored).unwrap();
        for m in 0..3 {
            let d = channel_derivs(&ch, CoordinateSide::tx(m), &k()).unwrap();
            assert_eq!(d[0].0.norm(), 0.0);
            assert_eq!(d[0].1.norm(), 0.0);
        }
    }

    #[test]
    fn single_element_has_only_steering_term() {
        let t = ArrayGeometry::new(vec![0.4], 1.0, 0.2).unwrap();
        let r = ArrayGeometry::new(vec![0.0, 0.5], 1.0, 0.2).unwrap();
        let paths = PathSet::new(vec![0.3], vec![0.1], vec![0.0], vec![C64::new(1.0, 0.0)]).unwrap();
        let b = DVector::from_column_slice(paths.gains());
        let ch = EffectiveChannel::build(&t, &r, &paths, vec![b], &k(), CouplingModel::Physical).unwrap();
        let (p1, _) = projected_derivs(ch.tx(), &k(), 0).unwrap();
        let (c1, _) = steering_column_derivs(0.4, &[0.3], k().k);
        assert!((p1[(0, 0)] - c1[0]).norm() < 1e-14);
    }

    #[test]
    fn bad_index_and_shapes_rejected() {
        let t = ArrayGeometry::new(vec![0.0, 0.3], 1.0, 0.2).unwrap();
        let paths = PathSet::new(vec![0.3], vec![0.1], vec![0.0], vec![C64::new(1.0, 0.0)]).unwrap();
        let b = DVector::from_column_slice(paths.gains());
        let ch = EffectiveChannel::build(&t, &t, &paths, vec![b], &k(), CouplingModel::Physical).unwrap();
        assert!(channel_derivs(&ch, CoordinateSide::tx(2), &k()).is_err());
        assert!(objective_derivs_nb(&ch, CoordinateSide::tx(0), &DMatrix::zeros(3, 3), 1.0, &k()).is_err());
    }
}
