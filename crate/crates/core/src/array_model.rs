//! Linear-array geometry, far-field responses and the sinc coupling matrix of
//! isotropic elements, with element-wise position derivatives.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{SpdMatrix, SymMatrix};

pub type C64 = Complex<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Below this argument `sinc` is evaluated from its Taylor series.
const SINC_SERIES_CUTOFF: f64 = 1e-4;

/// Free-space wavenumber at a carrier frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavenumber {
    /// rad/m
    pub k: f64,
    /// m
    pub wavelength: f64,
    /// Hz
    pub carrier_hz: f64,
}

impl Wavenumber {
    pub fn from_carrier(carrier_hz: f64) -> Self {
        let wavelength = SPEED_OF_LIGHT / carrier_hz;
        Self {
            k: 2.0 * std::f64::consts::PI / wavelength,
            wavelength,
            carrier_hz,
        }
    }

    pub fn from_wavelength(wavelength: f64) -> Self {
        Self::from_carrier(SPEED_OF_LIGHT / wavelength)
    }
}

/// Ordered element positions on `[0, aperture]` with adjacent gaps of at
/// least `min_spacing`.
///
/// Comparisons allow a slack of `1e-9 · min_spacing` so that positions
/// produced by clamping to `neighbour ± min_spacing` validate despite
/// rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<f64>,
    aperture: f64,
    min_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<f64>, aperture: f64, min_spacing: f64) -> Result<Self> {
        let geom = Self {
            positions,
            aperture,
            min_spacing,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Evenly spreads `count` elements over `[0, aperture]`; a single element
    /// sits at the origin.
    pub fn uniform_spread(count: usize, aperture: f64, min_spacing: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidGeometry("array needs at least one element".into()));
        }
        let positions = if count == 1 {
            vec![0.0]
        } else {
            let step = aperture / (count - 1) as f64;
            (0..count).map(|i| i as f64 * step).collect()
        };
        Self::new(positions, aperture, min_spacing)
    }

    /// Evenly spaced elements starting at the origin; the aperture is exactly
    /// the span of the array.
    pub fn uniform_spacing(count: usize, spacing: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidGeometry("array needs at least one element".into()));
        }
        let positions: Vec<f64> = (0..count).map(|i| i as f64 * spacing).collect();
        let aperture = positions[count - 1];
        Self::new(positions, aperture, spacing)
    }

    pub fn tolerance(&self) -> f64 {
        1e-9 * self.min_spacing
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGeometry(msg));
        if self.positions.is_empty() {
            return bad("array needs at least one element".into());
        }
        if !(self.min_spacing > 0.0 && self.min_spacing.is_finite()) {
            return bad(format!("minimum spacing must be positive, got {}", self.min_spacing));
        }
        if !(self.aperture >= 0.0 && self.aperture.is_finite()) {
            return bad(format!("aperture must be non-negative, got {}", self.aperture));
        }
        let tol = self.tolerance();
        if self.positions.iter().any(|p| !p.is_finite()) {
            return bad("non-finite position".into());
        }
        let first = self.positions[0];
        let last = self.positions[self.positions.len() - 1];
        if first < -tol {
            return bad(format!("first element at {first} lies below 0"));
        }
        if last > self.aperture + tol {
            return bad(format!("last element at {last} exceeds aperture {}", self.aperture));
        }
        for (i, pair) in self.positions.windows(2).enumerate() {
            let gap = pair[1] - pair[0];
            if gap < self.min_spacing - tol {
                return bad(format!(
                    "gap {gap} between elements {i} and {} is below the minimum spacing {}",
                    i + 1,
                    self.min_spacing
                ));
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// Copy of this geometry with element `index` moved to `x`, re-validated.
    pub fn with_position(&self, index: usize, x: f64) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::contract(format!(
                "element index {index} out of range for {} elements",
                self.len()
            )));
        }
        let mut positions = self.positions.clone();
        positions[index] = x;
        Self::new(positions, self.aperture, self.min_spacing)
    }
}

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `d/dΔ sinc(kΔ)`.
fn sinc_slope(k: f64, delta: f64) -> f64 {
    debug_assert!((k * delta).abs() >= SINC_SERIES_CUTOFF, "coupling derivative at coincident elements");
    let kd = k * delta;
    kd.cos() / delta - kd.sin() / (k * delta * delta)
}

/// `d²/dΔ² sinc(kΔ)`.
fn sinc_curvature(k: f64, delta: f64) -> f64 {
    debug_assert!((k * delta).abs() >= SINC_SERIES_CUTOFF, "coupling derivative at coincident elements");
    let kd = k * delta;
    let d2 = delta * delta;
    -k * kd.sin() / delta - 2.0 * kd.cos() / d2 + 2.0 * kd.sin() / (k * d2 * delta)
}

/// Unit-modulus response `exp(j·k·pᵢ·sin θ)` of every element toward
/// elevation `theta`.
pub fn steering_vector(geom: &ArrayGeometry, theta: f64, k: &Wavenumber) -> DVector<C64> {
    let u = k.k * theta.sin();
    DVector::from_iterator(geom.len(), geom.positions.iter().map(|&p| C64::cis(u * p)))
}

/// `L×M` matrix whose row `l` is the transposed steering vector toward
/// `angles[l]`.
pub fn field_response_matrix(geom: &ArrayGeometry, angles: &[f64], k: &Wavenumber) -> Result<DMatrix<C64>> {
    if angles.is_empty() {
        return Err(Error::contract("field response matrix needs at least one angle"));
    }
    let p = geom.positions();
    Ok(DMatrix::from_fn(angles.len(), p.len(), |l, m| C64::cis(k.k * p[m] * angles[l].sin())))
}

/// Coupling matrix of isotropic elements, `[C]ᵢⱼ = sinc(k(pᵢ − pⱼ))`.
pub fn mc_matrix(geom: &ArrayGeometry, k: &Wavenumber) -> Result<SpdMatrix> {
    SpdMatrix::new(mc_matrix_raw(geom.positions(), k.k))
}

pub(crate) fn mc_matrix_raw(p: &[f64], k: f64) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { sinc(k * (p[i] - p[j])) })
}

/// `∂C/∂p_m`: only row and column `m` are populated, the diagonal is zero.
pub fn mc_matrix_d1(geom: &ArrayGeometry, k: &Wavenumber, m: usize) -> SymMatrix {
    let p = geom.positions();
    let mut d = DMatrix::zeros(p.len(), p.len());
    for i in (0..p.len()).filter(|&i| i != m) {
        // ∂/∂p_m sinc(k(pᵢ − p_m)) = slope(p_m − pᵢ) since the slope is odd.
        let v = sinc_slope(k.k, p[m] - p[i]);
        d[(i, m)] = v;
        d[(m, i)] = v;
    }
    SymMatrix::from_symmetric_parts(d)
}

/// `∂²C/∂p_m²`, same sparsity as [`mc_matrix_d1`].
pub fn mc_matrix_d2(geom: &ArrayGeometry, k: &Wavenumber, m: usize) -> SymMatrix {
    let p = geom.positions();
    let mut d = DMatrix::zeros(p.len(), p.len());
    for i in (0..p.len()).filter(|&i| i != m) {
        let v = sinc_curvature(k.k, p[i] - p[m]);
        d[(i, m)] = v;
        d[(m, i)] = v;
    }
    SymMatrix::from_symmetric_parts(d)
}

/// Column `m` of `∂G/∂p_m` and `∂²G/∂p_m²` (all other columns are zero).
pub(crate) fn steering_column_derivs(position: f64, angles: &[f64], k: f64) -> (DVector<C64>, DVector<C64>) {
    let n = angles.len();
    let mut d1 = DVector::zeros(n);
    let mut d2 = DVector::zeros(n);
    for (l, theta) in angles.iter().enumerate() {
        let u = k * theta.sin();
        let e = C64::cis(u * position);
        d1[l] = C64::new(0.0, u) * e;
        d2[l] = e * (-u * u);
    }
    (d1, d2)
}

/// Full `L×M` first and second derivatives of the field response matrix
/// with respect to element `m`.
pub fn steering_derivs(
    geom: &ArrayGeometry,
    angles: &[f64],
    k: &Wavenumber,
    m: usize,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if angles.is_empty() {
        return Err(Error::contract("field response matrix needs at least one angle"));
    }
    if m >= geom.len() {
        return Err(Error::contract(format!("element index {m} out of range")));
    }
    let (c1, c2) = steering_column_derivs(geom.positions()[m], angles, k.k);
    let mut d1 = DMatrix::zeros(angles.len(), geom.len());
    let mut d2 = DMatrix::zeros(angles.len(), geom.len());
    d1.set_column(m, &c1);
    d2.set_column(m, &c2);
    Ok((d1, d2))
}
