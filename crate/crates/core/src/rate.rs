//! Log-det capacity, water-filling and the CP-discounted OFDM sum-rate.
//!
//! Rates are in bits/s/Hz (base-2 logarithm).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::array_model::C64;
use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A covariance eigenvalue below `−PSD_TOLERANCE · tr(Q)` is a contract violation.
pub const PSD_TOLERANCE: f64 = 1e-10;

const BISECTION_MAX_ITERS: usize = 200;

/// Water level and per-carrier eigenchannel powers.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    pub level: f64,
    pub powers: Vec<Vec<f64>>,
}

impl WaterFilling {
    pub fn total(&self) -> f64 {
        self.powers.iter().flatten().sum()
    }
}

/// Single-carrier water-filling over `singulars` (all positive).
pub fn water_fill(singulars: &[f64], noise: f64, p_max: f64) -> Result<WaterFilling> {
    water_fill_multicarrier(&[singulars.to_vec()], noise, p_max)
}

/// Water-filling with one global level across every (carrier, eigenchannel)
/// pair: `P_γ^ν = max(0, μ − σ²/λ_γ,ν²)`, `Σ P = P_max`.
///
/// The level is bracketed by bisection; once the active set is known it is
/// recomputed in closed form so the budget is met to rounding.
pub fn water_fill_multicarrier(singulars: &[Vec<f64>], noise: f64, p_max: f64) -> Result<WaterFilling> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::contract(format!("power budget must be positive, got {p_max}")));
    }
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::contract(format!("noise power must be positive, got {noise}")));
    }
    if singulars.iter().flatten().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::contract("water-filling needs strictly positive singular values"));
    }
    let floors: Vec<Vec<f64>> = singulars
        .iter()
        .map(|c| c.iter().map(|s| noise / (s * s)).collect())
        .collect();
    let lowest = floors.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !lowest.is_finite() {
        return Err(Error::contract("water-filling needs at least one eigenchannel"));
    }
    let poured = |mu: f64| -> f64 { floors.iter().flatten().map(|f| (mu - f).max(0.0)).sum() };

    let (mut lo, mut hi) = (lowest, lowest + p_max);
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poured(mid) < p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bracket = 0.5 * (lo + hi);
    let active: Vec<f64> = floors.iter().flatten().copied().filter(|f| *f < bracket).collect();
    let level = if active.is_empty() {
        bracket
    } else {
        (p_max + active.iter().sum::<f64>()) / active.len() as f64
    };
    let powers = floors
        .iter()
        .map(|c| c.iter().map(|f| (level - f).max(0.0)).collect())
        .collect();
    Ok(WaterFilling { level, powers })
}

/// Water-filled transmit covariance for one carrier, with its receive-side
/// counterpart `S̄ = Ū diag(P) Ūᴴ`.
#[derive(Debug, Clone)]
pub struct CarrierAllocation {
    /// Nonzero singular values, descending.
    pub singulars: Vec<f64>,
    pub powers: Vec<f64>,
    pub q: DMatrix<C64>,
    pub s_bar: DMatrix<C64>,
}

#[derive(Debug, Clone)]
pub struct PowerAllocation {
    pub water_level: f64,
    pub carriers: Vec<CarrierAllocation>,
}

impl PowerAllocation {
    pub fn total_power(&self) -> f64 {
        self.carriers.iter().flat_map(|c| &c.powers).sum()
    }

    pub fn covariances(&self) -> Vec<DMatrix<C64>> {
        self.carriers.iter().map(|c| c.q.clone()).collect()
    }

    pub fn receive_covariances(&self) -> Vec<DMatrix<C64>> {
        self.carriers.iter().map(|c| c.s_bar.clone()).collect()
    }
}

struct Modes {
    singulars: Vec<f64>,
    left: DMatrix<C64>,
    right: DMatrix<C64>,
}

/// Singular triplets above the rank threshold, sorted by decreasing singular value.
fn significant_modes(h: &DMatrix<C64>) -> Modes {
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let top = order.first().map_or(0.0, |i| svd.singular_values[*i]);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|i| top > 0.0 && svd.singular_values[*i] > RANK_TOLERANCE * top)
        .collect();
    Modes {
        singulars: keep.iter().map(|i| svd.singular_values[*i]).collect(),
        left: DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]),
        right: DMatrix::from_fn(v.nrows(), keep.len(), |r, c| v[(r, keep[c])]),
    }
}

fn weighted_projector(basis: &DMatrix<C64>, powers: &[f64]) -> DMatrix<C64> {
    let mut scaled = basis.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= C64::new(powers[j], 0.0);
    }
    let p = scaled * basis.adjoint();
    hermitian_part(&p)
}

fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Capacity-achieving covariances for a set of carriers sharing one budget.
pub fn optimal_covariances(channels: &[DMatrix<C64>], noise: f64, p_max: f64) -> Result<PowerAllocation> {
    if channels.is_empty() {
        return Err(Error::contract("no channels to allocate over"));
    }
    let modes: Vec<Modes> = channels.iter().map(significant_modes).collect();
    if modes.iter().all(|m| m.singulars.is_empty()) {
        return Err(Error::contract("channel is identically zero"));
    }
    let wf = water_fill_multicarrier(
        &modes.iter().map(|m| m.singulars.clone()).collect::<Vec<_>>(),
        noise,
        p_max,
    )?;
    let carriers = modes
        .into_iter()
        .zip(wf.powers)
        .map(|(m, powers)| CarrierAllocation {
            q: weighted_projector(&m.right, &powers),
            s_bar: weighted_projector(&m.left, &powers),
            singulars: m.singulars,
            powers,
        })
        .collect();
    Ok(PowerAllocation {
        water_level: wf.level,
        carriers,
    })
}

/// Water-filled covariance `Q = V̄ diag(P) V̄ᴴ` for a single channel.
pub fn optimal_q(h: &DMatrix<C64>, noise: f64, p_max: f64) -> Result<PowerAllocation> {
    optimal_covariances(std::slice::from_ref(h), noise, p_max)
}

fn check_psd(q: &DMatrix<C64>) -> Result<()> {
    if !q.is_square() {
        return Err(Error::contract("covariance must be square"));
    }
    let trace = q.trace().re;
    let eig = SymmetricEigen::new(hermitian_part(q));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * trace.abs() || !min.is_finite() {
        return Err(Error::contract(format!(
            "covariance is not positive semidefinite (eigenvalue {min:e}, trace {trace:e})"
        )));
    }
    Ok(())
}

/// `log₂ det(I + H Q Hᴴ / σ²)` without validating `Q`.
///
/// Evaluated as `log₂ det(I + BᴴB)` with `B = H V Λ^{1/2} / σ` from the
/// eigendecomposition of `Q`, through a QR factorization of `[B; I]`. Forming
/// `H Q Hᴴ / σ²` directly loses up to `cond · ε` of the rate at high SNR when
/// the channel is rank deficient.
pub(crate) fn log_det_bits(h: &DMatrix<C64>, q: &DMatrix<C64>, noise: f64) -> Result<f64> {
    let (n, m) = (h.nrows(), h.ncols());
    let eig = SymmetricEigen::new(hermitian_part(q));
    let mut b = h * &eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        b.column_mut(j).scale_mut((lam.max(0.0) / noise).sqrt());
    }
    let mut stacked = DMatrix::<C64>::zeros(n + m, m);
    stacked.rows_mut(0, n).copy_from(&b);
    stacked.rows_mut(n, m).fill_with_identity();
    let r = stacked.qr().r();
    let nats: f64 = r.diagonal().iter().map(|d| 2.0 * d.norm().ln()).sum();
    if !nats.is_finite() {
        return Err(Error::contract("I + HQHᴴ/σ² is not positive definite"));
    }
    Ok(nats / std::f64::consts::LN_2)
}

/// `log₂ det(I + H Q Hᴴ / σ²)` in bits/s/Hz.
pub fn capacity_bits(h: &DMatrix<C64>, q: &DMatrix<C64>, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::contract("noise power must be positive"));
    }
    if q.nrows() != h.ncols() {
        return Err(Error::contract(format!(
            "covariance is {}x{}, channel has {} inputs",
            q.nrows(),
            q.ncols(),
            h.ncols()
        )));
    }
    check_psd(q)?;
    log_det_bits(h, q, noise)
}

/// `S/(S + S_cp) · Σ_ν log₂ det(I + H_ν Q_ν H_νᴴ / σ_w²)`.
pub fn sum_rate(channels: &[DMatrix<C64>], covariances: &[DMatrix<C64>], noise: f64, s: usize, s_cp: usize) -> Result<f64> {
    if channels.len() != covariances.len() {
        return Err(Error::contract(format!(
            "{} channels but {} covariances",
            channels.len(),
            covariances.len()
        )));
    }
    let mut total = 0.0;
    for (h, q) in channels.iter().zip(covariances) {
        total += capacity_bits(h, q, noise)?;
    }
    Ok(cp_factor(s, s_cp) * total)
}

pub fn cp_factor(s: usize, s_cp: usize) -> f64 {
    s as f64 / (s + s_cp) as f64
}
