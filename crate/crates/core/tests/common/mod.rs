#![allow(dead_code)]

use mimo_coupling::array_model::{ArrayGeometry, Wavenumber, C64};
use mimo_coupling::channel::{freq_domain_prm, CouplingModel, EffectiveChannel, OfdmGrid, PathSet};
use mimo_coupling::deriv::{objective_derivs_wb, CoordinateSide, Side};
use mimo_coupling::rate::{capacity_bits, cp_factor, optimal_covariances};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn k28() -> Wavenumber {
    Wavenumber::from_carrier(28e9)
}

/// Random feasible geometry: gaps uniform in `[d_min + margin, max_gap]`,
/// aperture slightly beyond the last element.
pub fn random_geometry<R: Rng>(rng: &mut R, count: usize, lambda: f64, d_min: f64, max_gap: f64) -> ArrayGeometry {
    let margin = 0.02 * lambda;
    let mut x = margin + rng.gen::<f64>() * 0.3 * lambda;
    let mut positions = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            x += d_min + margin + rng.gen::<f64>() * (max_gap - d_min - margin);
        }
        positions.push(x);
    }
    let aperture = x + margin + rng.gen::<f64>() * 0.3 * lambda;
    ArrayGeometry::new(positions, aperture, d_min).unwrap()
}

pub fn random_paths<R: Rng>(rng: &mut R, count: usize, max_delay: f64) -> PathSet {
    let ang = |rng: &mut R| (rng.gen::<f64>() * 2.0 - 1.0) * 1.4;
    let aod = (0..count).map(|_| ang(rng)).collect();
    let aoa = (0..count).map(|_| ang(rng)).collect();
    let delays = (0..count).map(|_| rng.gen::<f64>() * max_delay).collect();
    let gains = (0..count)
        .map(|_| C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    PathSet::new(aod, aoa, delays, gains).unwrap()
}

/// Random Hermitian PSD matrix with trace `power`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, power: f64) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let q = &a * a.adjoint();
    let tr = q.trace().re;
    q * C64::new(power / tr, 0.0)
}

pub fn random_complex<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0))
}

pub fn rel_err(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / analytic.abs().max(1e-12)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(1/4π) ∮ a aᴴ dΩ` for isotropic elements on the x axis, with the polar
/// angle integrated by Gauss–Legendre in `cos θ` and azimuth by the
/// trapezoid rule. The imaginary part vanishes by symmetry.
pub fn quadrature_coupling_complex(positions: &[f64], k: f64, n_theta: usize, n_phi: usize) -> DMatrix<C64> {
    let (xs, ws) = gauss_legendre(n_theta);
    let n = positions.len();
    let mut c = DMatrix::<C64>::zeros(n, n);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    for (x, w) in xs.iter().zip(&ws) {
        let s = (1.0 - x * x).sqrt();
        for p in 0..n_phi {
            let u = s * (p as f64 * dphi).cos();
            let weight = w * dphi / (4.0 * std::f64::consts::PI);
            for i in 0..n {
                for j in 0..n {
                    c[(i, j)] += C64::cis(k * (positions[i] - positions[j]) * u) * weight;
                }
            }
        }
    }
    c
}

/// Euclidean projection onto `{x ≥ 0, Σx = total}` by sorting.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - total) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub fn rate_of(gains: &[f64], p: &[f64]) -> f64 {
    gains.iter().zip(p).map(|(g, x)| (1.0 + g * x).log2()).sum()
}

/// Accelerated projected gradient ascent on `Σ log₂(1 + g_i p_i)`.
pub fn projected_gradient(gains: &[f64], total: f64) -> Vec<f64> {
    let lip = gains.iter().map(|g| g * g).fold(0.0, f64::max) / std::f64::consts::LN_2;
    let step = 1.0 / lip;
    let n = gains.len();
    let mut x = vec![total / n as f64; n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..50_000 {
        let grad: Vec<f64> = gains
            .iter()
            .zip(&y)
            .map(|(g, p)| g / ((1.0 + g * p) * std::f64::consts::LN_2))
            .collect();
        let ascent: Vec<f64> = y.iter().zip(&grad).map(|(p, d)| p + step * d).collect();
        let next = project_simplex(&ascent, total);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        y = project_simplex(&y, total);
        x = next;
        t = t_next;
    }
    x
}

pub fn moved(t: &ArrayGeometry, r: &ArrayGeometry, coord: CoordinateSide, dx: f64) -> (ArrayGeometry, ArrayGeometry) {
    match coord.side {
        Side::Transmit => (t.with_position(coord.index, t.positions()[coord.index] + dx).unwrap(), r.clone()),
        Side::Receive => (t.clone(), r.with_position(coord.index, r.positions()[coord.index] + dx).unwrap()),
    }
}

/// Side objective rebuilt from scratch: capacity of `H` with `Q̄` for
/// transmit moves, of `Hᴴ` with `S̄` for receive moves.
pub fn brute_objective(
    t: &ArrayGeometry,
    r: &ArrayGeometry,
    paths: &PathSet,
    prms: &[DVector<C64>],
    side: Side,
    covs: &[DMatrix<C64>],
    noise: f64,
    scale: f64,
    k: &Wavenumber,
) -> f64 {
    let ch = EffectiveChannel::build(t, r, paths, prms.to_vec(), k, CouplingModel::Physical).unwrap();
    let total: f64 = ch
        .matrices()
        .iter()
        .zip(covs)
        .map(|(h, q)| match side {
            Side::Transmit => capacity_bits(h, q, noise).unwrap(),
            Side::Receive => capacity_bits(&h.adjoint(), q, noise).unwrap(),
        })
        .sum();
    scale * total
}

pub struct Instance {
    pub t: ArrayGeometry,
    pub r: ArrayGeometry,
    pub paths: PathSet,
    pub prms: Vec<DVector<C64>>,
    pub scale: f64,
}

pub fn instance(seed: u64, m: usize, n: usize, l: usize, s: usize) -> Instance {
    let k = k28();
    let lam = k.wavelength;
    let mut g = rng(seed);
    let t = random_geometry(&mut g, m, lam, 0.2 * lam, 1.2 * lam);
    let r = random_geometry(&mut g, n, lam, 0.2 * lam, 1.2 * lam);
    let paths = random_paths(&mut g, l, 2e-6);
    let (prms, scale) = if s == 0 {
        (vec![DVector::from_column_slice(paths.gains())], 1.0)
    } else {
        let grid = OfdmGrid::for_paths(s, 15e3 * 300.0 / s as f64, &paths).unwrap();
        (freq_domain_prm(&paths, &grid, &k), cp_factor(s, grid.cp_len()))
    };
    Instance {
        t,
        r,
        paths,
        prms,
        scale,
    }
}

pub fn check_objective_fd(inst: &Instance, coord: CoordinateSide, noise: f64, p_max: f64) -> (f64, f64) {
    let k = k28();
    let lam = k.wavelength;
    let ch = EffectiveChannel::build(&inst.t, &inst.r, &inst.paths, inst.prms.clone(), &k, CouplingModel::Physical).unwrap();
    let alloc = optimal_covariances(ch.matrices(), noise, p_max).unwrap();
    let covs = match coord.side {
        Side::Transmit => alloc.covariances(),
        Side::Receive => alloc.receive_covariances(),
    };
    let d = objective_derivs_wb(&ch, coord, &covs, noise, inst.scale, &k).unwrap();
    assert!(d.imag_residue < 1e-10, "imag residue {}", d.imag_residue);
    let f = |dx: f64| {
        let (t, r) = moved(&inst.t, &inst.r, coord, dx);
        brute_objective(&t, &r, &inst.paths, &inst.prms, coord.side, &covs, noise, inst.scale, &k)
    };
    let h1 = 1e-6 * lam;
    let h2 = 1e-4 * lam;
    let g_fd = (f(h1) - f(-h1)) / (2.0 * h1);
    let h_fd = (f(h2) - 2.0 * f(0.0) + f(-h2)) / (h2 * h2);
    (rel_err(d.g, g_fd), rel_err(d.h, h_fd))
}

