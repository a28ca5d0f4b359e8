mod common;

use std::f64::consts::PI;

use mimo_coupling::array_model::{field_response_matrix, ArrayGeometry, Wavenumber, C64};
use mimo_coupling::channel::{
    assemble_narrowband, assemble_wideband, freq_domain_prm, pulse, time_domain_gain, ArrayFactors, CouplingModel,
    EffectiveChannel, OfdmGrid, PathSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const SPACING: f64 = 120e3;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn rel_norm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// `Fᴴ diag(b) G` with no coupling, built entry by entry.
fn uncoupled(t: &ArrayGeometry, r: &ArrayGeometry, paths: &PathSet, b: &[C64], k: &Wavenumber) -> DMatrix<C64> {
    let g = field_response_matrix(t, paths.aod(), k).unwrap();
    let f = field_response_matrix(r, paths.aoa(), k).unwrap();
    DMatrix::from_fn(r.len(), t.len(), |n, m| {
        (0..paths.len()).fold(c(0.0), |acc, l| acc + f[(l, n)].conj() * b[l] * g[(l, m)])
    })
}

#[test]
fn single_antenna_line_of_sight() {
    let k = common::k28();
    let one = ArrayGeometry::new(vec![0.0], 0.0, 0.2 * k.wavelength).unwrap();
    let paths = PathSet::new(vec![0.3], vec![-0.7], vec![0.0], vec![c(1.0)]).unwrap();
    let h = assemble_narrowband(&one, &one, &paths, &k).unwrap();
    assert_eq!(h.matrices().len(), 1);
    assert!((h.matrices()[0][(0, 0)] - c(1.0)).norm() < 1e-15);
}

#[test]
fn half_wave_arrays_see_no_coupling() {
    let mut rng = common::rng(31);
    let k = common::k28();
    for _ in 0..10 {
        let t = ArrayGeometry::uniform_spacing(rng.gen_range(1..=6), k.wavelength / 2.0).unwrap();
        let r = ArrayGeometry::uniform_spacing(rng.gen_range(1..=6), k.wavelength).unwrap();
        let paths = common::random_paths(&mut rng, 9, 0.0);
        let h = assemble_narrowband(&t, &r, &paths, &k).unwrap();
        let reference = uncoupled(&t, &r, &paths, paths.gains(), &k);
        assert!(rel_norm(&h.matrices()[0], &reference) < 1e-12);
    }
}

#[test]
fn narrowband_matches_direct_assembly() {
    let mut rng = common::rng(32);
    let k = common::k28();
    let lam = k.wavelength;
    for _ in 0..30 {
        let (m, n, l) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=25));
        let t = common::random_geometry(&mut rng, m, lam, 0.2 * lam, 1.5 * lam);
        let r = common::random_geometry(&mut rng, n, lam, 0.2 * lam, 1.5 * lam);
        let paths = common::random_paths(&mut rng, l, 0.0);
        let h = assemble_narrowband(&t, &r, &paths, &k).unwrap();
        assert!(rel_norm(&h.reconstruct(0), &h.matrices()[0]) < 1e-12);

        // W_R · (Fᴴ Σ G) · W_T with the whitening matrices taken from an
        // eigendecomposition of the coupling matrices.
        let whiten = |g: &ArrayGeometry| {
            let cm = mimo_coupling::array_model::mc_matrix(g, &k).unwrap().as_matrix().clone();
            let eig = cm.symmetric_eigen();
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
            (&eig.eigenvectors * d * eig.eigenvectors.transpose()).map(c)
        };
        let direct = whiten(&r) * uncoupled(&t, &r, &paths, paths.gains(), &k) * whiten(&t);
        assert!(rel_norm(&h.matrices()[0], &direct) < 1e-9);
        assert_eq!(h.matrices()[0].shape(), (r.len(), t.len()));
    }
}

#[test]
fn time_domain_taps() {
    let k = common::k28();
    let s = 16;
    let offset_delay = 0.5 / (s as f64 * SPACING);
    let paths = PathSet::new(
        vec![0.0, 0.1],
        vec![0.0, -0.1],
        vec![1e-7, 1e-7 + offset_delay],
        vec![C64::new(0.3, -0.4), C64::new(2.0, 1.0)],
    )
    .unwrap();
    let grid = OfdmGrid::for_paths(s, SPACING, &paths).unwrap();
    assert_eq!(grid.max_tap(), 1);
    assert_eq!(grid.cp_len(), 1);
    assert_eq!(time_domain_gain(&paths, 0, 0, &grid, &k), paths.gains()[0]);
    assert_eq!(time_domain_gain(&paths, 0, 1, &grid, &k), c(0.0));
    let half = 0.5 * paths.gains()[1].norm();
    assert!((time_domain_gain(&paths, 1, 0, &grid, &k).norm() - half).abs() < 1e-12);
    assert!((time_domain_gain(&paths, 1, 1, &grid, &k).norm() - half).abs() < 1e-12);
    assert_eq!(pulse(1.0), 0.0);
    assert_eq!(pulse(-0.25), 0.75);
    assert_eq!(pulse(1.5), 0.0);
}

#[test]
fn every_path_has_a_nonzero_tap() {
    let mut rng = common::rng(33);
    let k = common::k28();
    for _ in 0..50 {
        let paths = common::random_paths(&mut rng, 12, 4e-7);
        let grid = OfdmGrid::for_paths(64, SPACING, &paths).unwrap();
        for l in 0..paths.len() {
            let nonzero = (0..=grid.max_tap()).any(|tap| time_domain_gain(&paths, l, tap, &grid, &k).norm() > 0.0);
            assert!(nonzero, "path {l} has no tap");
        }
    }
}

#[test]
fn flat_channel_has_constant_response() {
    let k = common::k28();
    let mut rng = common::rng(34);
    let mut paths = common::random_paths(&mut rng, 7, 3e-7);
    paths = paths.without_delay_spread();
    let grid = OfdmGrid::for_paths(32, SPACING, &paths).unwrap();
    assert_eq!(grid.max_tap(), 0);
    let prm = freq_domain_prm(&paths, &grid, &k);
    assert_eq!(prm.len(), 32);
    for b in &prm {
        for (bl, a) in b.iter().zip(paths.gains()) {
            assert!((bl - a).norm() < 1e-15);
        }
    }
    let lam = k.wavelength;
    let t = common::random_geometry(&mut rng, 4, lam, 0.2 * lam, lam);
    let r = common::random_geometry(&mut rng, 3, lam, 0.2 * lam, lam);
    let h = assemble_wideband(&t, &r, &paths, &grid, &k).unwrap();
    let first = &h.matrices()[0];
    assert!(h.matrices().iter().all(|m| (m - first).norm() <= 1e-14 * first.norm()));
}

#[test]
fn single_tap_gives_unit_modulus_progression() {
    let k = common::k28();
    let s = 24;
    let tap0 = 3.0;
    // The earlier path sits at τ_min with a vanishing gain; the second lands
    // exactly on tap 3.
    let paths = PathSet::new(
        vec![0.0, 0.2],
        vec![0.0, 0.4],
        vec![0.0, tap0 / (s as f64 * SPACING)],
        vec![c(0.0), c(1.0)],
    )
    .unwrap();
    let grid = OfdmGrid::for_paths(s, SPACING, &paths).unwrap();
    let g = time_domain_gain(&paths, 1, 3, &grid, &k);
    assert!((g.norm() - 1.0).abs() < 1e-12);
    let prm = freq_domain_prm(&paths, &grid, &k);
    for (nu, b) in prm.iter().enumerate() {
        let expected = g * C64::cis(-2.0 * PI * nu as f64 * tap0 / s as f64);
        assert!((b[1] - expected).norm() < 1e-9);
        assert!((b[1].norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn prm_matches_brute_force_dft_and_parseval() {
    let mut rng = common::rng(35);
    let k = common::k28();
    for _ in 0..20 {
        let s = rng.gen_range(4..=96);
        let l = rng.gen_range(1..=10);
        let paths = common::random_paths(&mut rng, l, 6e-7);
        let grid = OfdmGrid::for_paths(s, SPACING, &paths).unwrap();
        let prm = freq_domain_prm(&paths, &grid, &k);
        for l in 0..paths.len() {
            let taps: Vec<C64> = (0..=grid.max_tap()).map(|tap| time_domain_gain(&paths, l, tap, &grid, &k)).collect();
            let mut energy_f = 0.0;
            for (nu, b) in prm.iter().enumerate() {
                // Plain sum with the angle computed in floating point.
                let dft = taps.iter().enumerate().fold(c(0.0), |acc, (tap, g)| {
                    let angle = -2.0 * PI * (nu as f64) * (tap as f64) / s as f64;
                    acc + g * C64::new(angle.cos(), angle.sin())
                });
                assert!((b[l] - dft).norm() < 1e-9 * (1.0 + dft.norm()));
                energy_f += b[l].norm_sqr();
            }
            // Only the first S taps are distinct after wrapping.
            if grid.max_tap() < s {
                let energy_t: f64 = taps.iter().map(|g| g.norm_sqr()).sum();
                assert!((energy_f - s as f64 * energy_t).abs() < 1e-10 * energy_f.max(1.0));
            }
        }
    }
}

#[test]
fn single_subcarrier_degenerates_to_narrowband() {
    let mut rng = common::rng(36);
    let k = common::k28();
    let lam = k.wavelength;
    for _ in 0..10 {
        let paths = common::random_paths(&mut rng, 9, 5e-7).without_delay_spread();
        let grid = OfdmGrid::for_paths(1, SPACING, &paths).unwrap();
        assert_eq!(grid.max_tap(), 0);
        let t = common::random_geometry(&mut rng, 5, lam, 0.2 * lam, lam);
        let r = common::random_geometry(&mut rng, 4, lam, 0.2 * lam, lam);
        let wb = assemble_wideband(&t, &r, &paths, &grid, &k).unwrap();
        let nb = assemble_narrowband(&t, &r, &paths, &k).unwrap();
        assert_eq!(wb.subcarriers(), 1);
        assert!((&wb.matrices()[0] - &nb.matrices()[0]).norm() <= 1e-14 * nb.matrices()[0].norm());
    }
}

#[test]
fn wideband_factors_are_shared() {
    let mut rng = common::rng(37);
    let k = common::k28();
    let lam = k.wavelength;
    let paths = common::random_paths(&mut rng, 13, 5e-7);
    let grid = OfdmGrid::for_paths(48, SPACING, &paths).unwrap();
    let t = common::random_geometry(&mut rng, 6, lam, 0.2 * lam, lam);
    let r = common::random_geometry(&mut rng, 5, lam, 0.2 * lam, lam);
    let h = assemble_wideband(&t, &r, &paths, &grid, &k).unwrap();
    assert_eq!(h.subcarriers(), 48);
    let prm = freq_domain_prm(&paths, &grid, &k);
    for nu in 0..48 {
        assert!(rel_norm(&h.reconstruct(nu), &h.matrices()[nu]) < 1e-12);
        let single = EffectiveChannel::build(&t, &r, &paths, vec![prm[nu].clone()], &k, CouplingModel::Physical).unwrap();
        assert!(rel_norm(&single.matrices()[0], &h.matrices()[nu]) < 1e-12);
    }
}

#[test]
fn moving_one_side_keeps_the_other() {
    let mut rng = common::rng(38);
    let k = common::k28();
    let lam = k.wavelength;
    let paths = common::random_paths(&mut rng, 8, 0.0);
    let t = common::random_geometry(&mut rng, 4, lam, 0.2 * lam, lam);
    let r = common::random_geometry(&mut rng, 4, lam, 0.2 * lam, lam);
    let h = assemble_narrowband(&t, &r, &paths, &k).unwrap();
    let t2 = t.with_position(0, t.positions()[0] * 0.5).unwrap();
    let moved = h.with_tx(h.tx().moved(t2.clone(), &k).unwrap()).unwrap();
    let fresh = assemble_narrowband(&t2, &r, &paths, &k).unwrap();
    assert!(rel_norm(&moved.matrices()[0], &fresh.matrices()[0]) < 1e-12);
    assert_eq!(moved.rx().projected(), h.rx().projected());
}

#[test]
fn ignored_coupling_uses_identity() {
    let mut rng = common::rng(39);
    let k = common::k28();
    let lam = k.wavelength;
    let paths = common::random_paths(&mut rng, 6, 0.0);
    let t = common::random_geometry(&mut rng, 5, lam, 0.2 * lam, lam);
    let f = ArrayFactors::new(t.clone(), paths.aod(), &k, CouplingModel::Ignored).unwrap();
    assert!(f.coupling().is_none());
    assert_eq!(f.inv_sqrt(), &DMatrix::identity(5, 5));
    assert_eq!(f.projected(), f.frm());
}

#[test]
fn pathset_contract_and_json() {
    assert!(PathSet::new(vec![], vec![], vec![], vec![]).is_err());
    assert!(PathSet::new(vec![0.0], vec![0.0], vec![-1.0], vec![c(1.0)]).is_err());
    assert!(PathSet::new(vec![0.0], vec![0.0, 1.0], vec![0.0], vec![c(1.0)]).is_err());
    assert!(PathSet::new(vec![0.0], vec![0.0], vec![0.0], vec![C64::new(f64::NAN, 0.0)]).is_err());
    let mut rng = common::rng(40);
    let paths = common::random_paths(&mut rng, 25, 1e-6);
    let back = PathSet::from_json(&paths.to_json().unwrap()).unwrap();
    assert_eq!(back.aod(), paths.aod());
    assert_eq!(back.aoa(), paths.aoa());
    assert_eq!(back.delays(), paths.delays());
    assert_eq!(back.gains(), paths.gains());
}

proptest! {
    #[test]
    fn coupling_whitening_preserves_power(
        gaps in proptest::collection::vec(0.2f64..1.5, 1..8),
        seed in any::<u64>(),
    ) {
        let k = Wavenumber::from_wavelength(1.0);
        let mut p = vec![0.0];
        for g in &gaps {
            p.push(p.last().unwrap() + g);
        }
        let d = *p.last().unwrap();
        let geom = ArrayGeometry::new(p, d, 0.2).unwrap();
        let f = ArrayFactors::new(geom.clone(), &[0.0], &k, CouplingModel::Physical).unwrap();
        let n = geom.len();
        let mut rng = common::rng(seed);
        let q = common::random_psd(&mut rng, n, 1.7);
        let w = f.inv_sqrt().map(c);
        let cm = f.coupling().unwrap().as_matrix().map(c);
        let radiated = (cm * &w * &q * &w).trace().re;
        prop_assert!((radiated - q.trace().re).abs() < 1e-10 * 1.7);
    }

    #[test]
    fn grid_tap_count_follows_delay_spread(s in 1usize..400, spread in 0.0f64..2e-6) {
        let paths = PathSet::new(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1e-7, 1e-7 + spread],
            vec![c(1.0), c(1.0)],
        ).unwrap();
        let grid = OfdmGrid::for_paths(s, SPACING, &paths).unwrap();
        let expected = (s as f64 * SPACING * (paths.max_delay() - paths.min_delay())).ceil() as usize;
        prop_assert_eq!(grid.max_tap(), expected);
        prop_assert_eq!(grid.cp_len(), grid.max_tap());
        prop_assert!(grid.cp_efficiency() > 0.0 && grid.cp_efficiency() <= 1.0);
    }
}

#[test]
fn dimensions_are_checked() {
    let k = common::k28();
    let lam = k.wavelength;
    let t = ArrayGeometry::uniform_spacing(3, lam).unwrap();
    let paths2 = PathSet::new(vec![0.0, 0.1], vec![0.0, 0.2], vec![0.0, 0.0], vec![c(1.0), c(1.0)]).unwrap();
    let paths3 = PathSet::new(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![c(1.0); 3]).unwrap();
    let tx = ArrayFactors::new(t.clone(), paths2.aod(), &k, CouplingModel::Physical).unwrap();
    let rx = ArrayFactors::new(t.clone(), paths3.aoa(), &k, CouplingModel::Physical).unwrap();
    assert!(EffectiveChannel::from_factors(tx.clone(), rx, vec![DVector::from_element(2, c(1.0))]).is_err());
    assert!(EffectiveChannel::from_factors(tx.clone(), tx, vec![]).is_err());
    assert!(OfdmGrid::for_paths(0, SPACING, &paths2).is_err());
    assert!(OfdmGrid::for_paths(4, 0.0, &paths2).is_err());
}
