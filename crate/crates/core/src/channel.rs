//! Coupling-aware effective channel, narrowband and per OFDM subcarrier.
//!
//! The channel is always stored in factored form. Each array side keeps its
//! field response matrix `G` (or `F`), the inverse square root `W` of its
//! coupling matrix and the product `G·W`; the effective channel for a path
//! response diagonal `b` is then `(F·W_R)ᴴ · diag(b) · (G·W_T)`. Moving one
//! element only rebuilds the factors of its own side.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::array_model::{field_response_matrix, mc_matrix, ArrayGeometry, Wavenumber, C64};
use crate::error::{Error, Result};
use crate::matfun::{spd_inv_sqrt, SpdMatrix};

/// Multipath description: per path the departure and arrival elevations
/// (rad), absolute delay (s) and complex amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    aod: Vec<f64>,
    aoa: Vec<f64>,
    delays: Vec<f64>,
    gains: Vec<C64>,
}

impl PathSet {
    pub fn new(aod: Vec<f64>, aoa: Vec<f64>, delays: Vec<f64>, gains: Vec<C64>) -> Result<Self> {
        let l = aod.len();
        if l == 0 {
            return Err(Error::contract("path set needs at least one path"));
        }
        if aoa.len() != l || delays.len() != l || gains.len() != l {
            return Err(Error::contract(format!(
                "path set fields disagree in length: aod {l}, aoa {}, delays {}, gains {}",
                aoa.len(),
                delays.len(),
                gains.len()
            )));
        }
        if aod.iter().chain(&aoa).any(|a| !a.is_finite()) {
            return Err(Error::contract("non-finite path angle"));
        }
        if delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::contract("path delays must be finite and non-negative"));
        }
        if gains.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::contract("non-finite path gain"));
        }
        Ok(Self {
            aod,
            aoa,
            delays,
            gains,
        })
    }

    pub fn len(&self) -> usize {
        self.aod.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aod.is_empty()
    }

    pub fn aod(&self) -> &[f64] {
        &self.aod
    }

    pub fn aoa(&self) -> &[f64] {
        &self.aoa
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn gains(&self) -> &[C64] {
        &self.gains
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same paths with every delay collapsed onto the earliest one.
    pub fn without_delay_spread(&self) -> Self {
        let tmin = self.min_delay();
        Self {
            delays: vec![tmin; self.len()],
            ..self.clone()
        }
    }

    pub fn to_records(&self) -> PathSetFile {
        let paths = (0..self.len())
            .map(|l| PathRecord {
                aod: self.aod[l],
                aoa: self.aoa[l],
                delay: self.delays[l],
                gain_re: self.gains[l].re,
                gain_im: self.gains[l].im,
            })
            .collect();
        PathSetFile { paths }
    }

    pub fn from_records(file: &PathSetFile) -> Result<Self> {
        let p = &file.paths;
        Self::new(
            p.iter().map(|r| r.aod).collect(),
            p.iter().map(|r| r.aoa).collect(),
            p.iter().map(|r| r.delay).collect(),
            p.iter().map(|r| C64::new(r.gain_re, r.gain_im)).collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_records())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_records(&serde_json::from_str(text)?)
    }
}

/// One path in the JSON fixture format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub aod: f64,
    pub aoa: f64,
    pub delay: f64,
    pub gain_re: f64,
    pub gain_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSetFile {
    pub paths: Vec<PathRecord>,
}

/// OFDM numerology. The cyclic prefix always spans the maximum tap index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmGrid {
    subcarriers: usize,
    spacing_hz: f64,
    max_tap: usize,
}

impl OfdmGrid {
    /// Grid whose maximum tap index is `⌈SΔ(τ_max − τ_min)⌉` for `paths`.
    pub fn for_paths(subcarriers: usize, spacing_hz: f64, paths: &PathSet) -> Result<Self> {
        if subcarriers == 0 {
            return Err(Error::contract("OFDM grid needs at least one subcarrier"));
        }
        if !(spacing_hz > 0.0 && spacing_hz.is_finite()) {
            return Err(Error::contract("subcarrier spacing must be positive"));
        }
        let spread = paths.max_delay() - paths.min_delay();
        let max_tap = (subcarriers as f64 * spacing_hz * spread).ceil() as usize;
        Ok(Self {
            subcarriers,
            spacing_hz,
            max_tap,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn spacing_hz(&self) -> f64 {
        self.spacing_hz
    }

    pub fn max_tap(&self) -> usize {
        self.max_tap
    }

    pub fn cp_len(&self) -> usize {
        self.max_tap
    }

    /// `S / (S + S_cp)`.
    pub fn cp_efficiency(&self) -> f64 {
        self.subcarriers as f64 / (self.subcarriers + self.cp_len()) as f64
    }
}

/// Triangular pulse `1 − |t|` on `[−1, 1]`.
pub fn pulse(t: f64) -> f64 {
    if t.abs() <= 1.0 {
        1.0 - t.abs()
    } else {
        0.0
    }
}

/// Gain of path `l` at delay tap `tap`:
/// `α_l · exp(−j2π f_c (τ_l − τ_min)) · pulse(tap − SΔ(τ_l − τ_min))`.
pub fn time_domain_gain(paths: &PathSet, l: usize, tap: usize, grid: &OfdmGrid, k: &Wavenumber) -> C64 {
    let rel = paths.delays[l] - paths.min_delay();
    // k·c = 2π f_c
    let phase = C64::cis(-k.k * rel * crate::array_model::SPEED_OF_LIGHT);
    let offset = grid.subcarriers as f64 * grid.spacing_hz * rel;
    paths.gains[l] * phase * pulse(tap as f64 - offset)
}

/// Per-subcarrier path responses `b_l[ν] = Σ_τ b_l^td[τ] e^{−j2πντ/S}`,
/// returned as one length-`L` vector per subcarrier.
pub fn freq_domain_prm(paths: &PathSet, grid: &OfdmGrid, k: &Wavenumber) -> Vec<DVector<C64>> {
    let s = grid.subcarriers;
    let taps: Vec<Vec<C64>> = (0..paths.len())
        .map(|l| (0..=grid.max_tap).map(|tap| time_domain_gain(paths, l, tap, grid, k)).collect())
        .collect();
    (0..s)
        .map(|nu| {
            DVector::from_iterator(
                paths.len(),
                taps.iter().map(|tl| {
                    tl.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (tap, g)| {
                        let turn = (nu * tap) % s;
                        acc + g * C64::cis(-2.0 * std::f64::consts::PI * turn as f64 / s as f64)
                    })
                }),
            )
        })
        .collect()
}

/// Whether a side's coupling matrix enters the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingModel {
    /// `C^{-1/2}` from the sinc coupling matrix.
    Physical,
    /// Coupling matrices replaced by identity.
    Ignored,
}

/// Cached per-side factors: geometry, field response `G`, `W = C^{-1/2}` and
/// the projected response `G·W`.
#[derive(Debug, Clone)]
pub struct ArrayFactors {
    geometry: ArrayGeometry,
    angles: Vec<f64>,
    coupling: Option<SpdMatrix>,
    inv_sqrt: DMatrix<f64>,
    frm: DMatrix<C64>,
    projected: DMatrix<C64>,
}

impl ArrayFactors {
    pub fn new(geometry: ArrayGeometry, angles: &[f64], k: &Wavenumber, model: CouplingModel) -> Result<Self> {
        let frm = field_response_matrix(&geometry, angles, k)?;
        let n = geometry.len();
        let (coupling, inv_sqrt) = match model {
            CouplingModel::Physical => {
                let c = mc_matrix(&geometry, k)?;
                let w = spd_inv_sqrt(&c).as_matrix().clone();
                (Some(c), w)
            }
            CouplingModel::Ignored => (None, DMatrix::identity(n, n)),
        };
        let projected = &frm * inv_sqrt.map(|v| C64::new(v, 0.0));
        Ok(Self {
            geometry,
            angles: angles.to_vec(),
            coupling,
            inv_sqrt,
            frm,
            projected,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn model(&self) -> CouplingModel {
        if self.coupling.is_some() {
            CouplingModel::Physical
        } else {
            CouplingModel::Ignored
        }
    }

    /// The coupling matrix, `None` when coupling is ignored.
    pub fn coupling(&self) -> Option<&SpdMatrix> {
        self.coupling.as_ref()
    }

    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    pub fn frm(&self) -> &DMatrix<C64> {
        &self.frm
    }

    /// `FRM · C^{-1/2}`, `L × elements`.
    pub fn projected(&self) -> &DMatrix<C64> {
        &self.projected
    }

    /// Same side rebuilt for a new geometry.
    pub fn moved(&self, geometry: ArrayGeometry, k: &Wavenumber) -> Result<Self> {
        Self::new(geometry, &self.angles, k, self.model())
    }
}

/// `leftᴴ · diag(b) · right`.
pub(crate) fn sandwich(left: &DMatrix<C64>, b: &DVector<C64>, right: &DMatrix<C64>) -> DMatrix<C64> {
    let mut scaled = right.clone();
    for (l, mut row) in scaled.row_iter_mut().enumerate() {
        row *= b[l];
    }
    left.adjoint() * scaled
}

/// Effective channel `H_ν = C_R^{-1/2} Fᴴ Σ_ν G C_T^{-1/2}` for one or more
/// path-response diagonals, with the factors it was built from.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    tx: ArrayFactors,
    rx: ArrayFactors,
    prms: Vec<DVector<C64>>,
    matrices: Vec<DMatrix<C64>>,
}

impl EffectiveChannel {
    pub fn from_factors(tx: ArrayFactors, rx: ArrayFactors, prms: Vec<DVector<C64>>) -> Result<Self> {
        if prms.is_empty() {
            return Err(Error::contract("channel needs at least one path response"));
        }
        let l = tx.frm.nrows();
        if rx.frm.nrows() != l || prms.iter().any(|b| b.len() != l) {
            return Err(Error::contract("path counts of the factors disagree"));
        }
        let matrices = prms.iter().map(|b| sandwich(&rx.projected, b, &tx.projected)).collect();
        Ok(Self {
            tx,
            rx,
            prms,
            matrices,
        })
    }

    pub fn build(
        t: &ArrayGeometry,
        r: &ArrayGeometry,
        paths: &PathSet,
        prms: Vec<DVector<C64>>,
        k: &Wavenumber,
        model: CouplingModel,
    ) -> Result<Self> {
        let tx = ArrayFactors::new(t.clone(), paths.aod(), k, model)?;
        let rx = ArrayFactors::new(r.clone(), paths.aoa(), k, model)?;
        Self::from_factors(tx, rx, prms)
    }

    pub fn tx(&self) -> &ArrayFactors {
        &self.tx
    }

    pub fn rx(&self) -> &ArrayFactors {
        &self.rx
    }

    pub fn prms(&self) -> &[DVector<C64>] {
        &self.prms
    }

    /// One matrix for a narrowband channel, one per subcarrier otherwise.
    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.matrices
    }

    pub fn subcarriers(&self) -> usize {
        self.matrices.len()
    }

    /// Channel after replacing the transmit factors; receive factors and path
    /// responses are reused as-is.
    pub fn with_tx(&self, tx: ArrayFactors) -> Result<Self> {
        Self::from_factors(tx, self.rx.clone(), self.prms.clone())
    }

    pub fn with_rx(&self, rx: ArrayFactors) -> Result<Self> {
        Self::from_factors(self.tx.clone(), rx, self.prms.clone())
    }

    /// Re-evaluates `C_R^{-1/2} Fᴴ Σ_ν G C_T^{-1/2}` term by term from the
    /// cached factors, without using the projected products.
    pub fn reconstruct(&self, nu: usize) -> DMatrix<C64> {
        let to_c = |m: &DMatrix<f64>| m.map(|v| C64::new(v, 0.0));
        let sigma = DMatrix::from_diagonal(&self.prms[nu]);
        to_c(&self.rx.inv_sqrt) * self.rx.frm.adjoint() * sigma * &self.tx.frm * to_c(&self.tx.inv_sqrt)
    }
}

/// Narrowband channel with `b_l = α_l`.
pub fn assemble_narrowband(
    t: &ArrayGeometry,
    r: &ArrayGeometry,
    paths: &PathSet,
    k: &Wavenumber,
) -> Result<EffectiveChannel> {
    let b = DVector::from_column_slice(paths.gains());
    EffectiveChannel::build(t, r, paths, vec![b], k, CouplingModel::Physical)
}

/// Per-subcarrier channels sharing one set of array factors.
pub fn assemble_wideband(
    t: &ArrayGeometry,
    r: &ArrayGeometry,
    paths: &PathSet,
    grid: &OfdmGrid,
    k: &Wavenumber,
) -> Result<EffectiveChannel> {
    EffectiveChannel::build(t, r, paths, freq_domain_prm(paths, grid, k), k, CouplingModel::Physical)
}
