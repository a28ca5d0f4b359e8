//! Clustered Rician multipath generator with deterministic seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array_model::{SPEED_OF_LIGHT, C64};
use crate::channel::PathSet;
use crate::error::{Error, Result};

/// Random generator used for every scenario draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RngAlgorithm {
    #[default]
    Chacha20,
}

/// Statistical channel parameters. Angles in degrees, everything else in SI
/// units and linear scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Rician factor, linear. `f64::INFINITY` gives a pure LoS channel.
    pub kappa: f64,
    pub clusters: usize,
    pub subpaths: usize,
    pub carrier_hz: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub los_spread_deg: f64,
    pub cluster_spread_deg: f64,
    pub subpath_spread_deg: f64,
    /// dB²
    pub shadowing_var_db2: f64,
    pub delay_factor_min: f64,
    pub delay_factor_max: f64,
    /// dB², variance of the per-cluster PDP perturbation `z_i`.
    pub pdp_var_db2: f64,
    /// Scale cluster `i`'s sub-path amplitudes by `√(q_i·L_clu)`.
    pub use_pdp_weights: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            clusters: 3,
            subpaths: 8,
            carrier_hz: 28e9,
            r_min: 100.0,
            r_max: 300.0,
            los_spread_deg: 5.0,
            cluster_spread_deg: 40.0,
            subpath_spread_deg: 5.0,
            shadowing_var_db2: 16.0,
            delay_factor_min: 1.0,
            delay_factor_max: 10.0,
            pdp_var_db2: 9.0,
            use_pdp_weights: false,
        }
    }
}

impl ScenarioParams {
    pub fn path_count(&self) -> usize {
        1 + self.clusters * self.subpaths
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("scenario: {what}")));
        if !(self.kappa >= 0.0) {
            return bad("kappa must be non-negative");
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return bad("carrier frequency must be positive");
        }
        if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.r_max.is_finite()) {
            return bad("need 0 < r_min <= r_max");
        }
        let spreads = [self.los_spread_deg, self.cluster_spread_deg, self.subpath_spread_deg];
        if spreads.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("angle spreads must be finite and non-negative");
        }
        if !(self.shadowing_var_db2 >= 0.0 && self.pdp_var_db2 >= 0.0) {
            return bad("variances must be non-negative");
        }
        if !(self.delay_factor_min > 0.0 && self.delay_factor_max >= self.delay_factor_min) {
            return bad("need 0 < delay_factor_min <= delay_factor_max");
        }
        if self.clusters > 0 && self.subpaths == 0 {
            return bad("clusters need at least one sub-path");
        }
        Ok(())
    }

    /// Share of the average path gain carried by the LoS component.
    pub fn los_fraction(&self) -> f64 {
        if self.kappa.is_infinite() {
            1.0
        } else {
            self.kappa / (1.0 + self.kappa)
        }
    }

    pub fn nlos_fraction(&self) -> f64 {
        1.0 / (self.kappa + 1.0)
    }
}

/// Path loss in dB for carrier `fc` (Hz), distance `r` (m) and shadowing `δ_SF` (dB).
pub fn path_loss_db(fc: f64, r: f64, shadowing_db: f64) -> f64 {
    32.4 + 20.0 * (fc / 1e9).log10() + 26.0 * r.log10() + shadowing_db
}

/// Cluster weights `q_i ∝ 10^{−τ_i/1µs + z_i/10}`, normalized to sum to one.
pub fn power_delay_profile(delays: &[f64], z_db: &[f64]) -> Vec<f64> {
    assert_eq!(delays.len(), z_db.len());
    let exps: Vec<f64> = delays.iter().zip(z_db).map(|(t, z)| -t / 1e-6 + z / 10.0).collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = exps.iter().map(|e| 10f64.powf(e - top)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// splitmix64 finalizer over `(master, trial)`; gives each trial its own stream.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(algorithm: RngAlgorithm, seed: u64) -> ChaCha20Rng {
    match algorithm {
        RngAlgorithm::Chacha20 => ChaCha20Rng::seed_from_u64(seed),
    }
}

fn uniform_deg<R: Rng>(rng: &mut R, half_width_deg: f64) -> f64 {
    (rng.gen::<f64>() * 2.0 - 1.0) * half_width_deg.to_radians()
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Large-scale quantities of one draw, exposed for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub paths: PathSet,
    pub distance: f64,
    pub shadowing_db: f64,
    pub path_loss_db: f64,
    pub pdp: Vec<f64>,
}

/// Draws one channel realization.
///
/// Draw order: `r²`, `δ_SF`, LoS AoD, LoS AoA, LoS gain (re, im), then per
/// cluster (offset AoD, offset AoA, delay factor, `z_i`), then per sub-path
/// (AoD, AoA, gain re, gain im). `z_i` is drawn even when PDP weighting is
/// off, so toggling it does not shift the stream.
pub fn draw_realization<R: Rng>(params: &ScenarioParams, rng: &mut R) -> Result<Realization> {
    params.validate()?;
    let r2 = params.r_min.powi(2) + rng.gen::<f64>() * (params.r_max.powi(2) - params.r_min.powi(2));
    let distance = r2.sqrt();
    let shadow = Normal::new(0.0, params.shadowing_var_db2.sqrt()).expect("variance checked");
    let shadowing_db = shadow.sample(rng);
    let pl_db = path_loss_db(params.carrier_hz, distance, shadowing_db);
    let pl_inv = 10f64.powf(-pl_db / 10.0);

    let los_aod = uniform_deg(rng, params.los_spread_deg);
    let los_aoa = uniform_deg(rng, params.los_spread_deg);
    let los_gain = complex_gaussian(rng, params.los_fraction() * pl_inv);
    let los_delay = distance / SPEED_OF_LIGHT;

    let n = params.path_count();
    let mut aod = Vec::with_capacity(n);
    let mut aoa = Vec::with_capacity(n);
    let mut delays = Vec::with_capacity(n);
    let mut gains = Vec::with_capacity(n);
    aod.push(los_aod);
    aoa.push(los_aoa);
    delays.push(los_delay);
    gains.push(los_gain);

    let pdp_noise = Normal::new(0.0, params.pdp_var_db2.sqrt()).expect("variance checked");
    let mut centres = Vec::with_capacity(params.clusters);
    let mut cluster_delays = Vec::with_capacity(params.clusters);
    let mut z = Vec::with_capacity(params.clusters);
    for _ in 0..params.clusters {
        let dt = uniform_deg(rng, params.cluster_spread_deg);
        let dr = uniform_deg(rng, params.cluster_spread_deg);
        let factor = params.delay_factor_min + rng.gen::<f64>() * (params.delay_factor_max - params.delay_factor_min);
        centres.push((dt, dr));
        cluster_delays.push(factor * los_delay);
        z.push(pdp_noise.sample(rng));
    }
    let pdp = power_delay_profile(&cluster_delays, &z);

    let sub_var = if params.clusters == 0 {
        0.0
    } else {
        params.nlos_fraction() * pl_inv / (params.clusters * params.subpaths) as f64
    };
    for i in 0..params.clusters {
        let scale = if params.use_pdp_weights {
            (pdp[i] * params.clusters as f64).sqrt()
        } else {
            1.0
        };
        for _ in 0..params.subpaths {
            let st = uniform_deg(rng, params.subpath_spread_deg);
            let sr = uniform_deg(rng, params.subpath_spread_deg);
            aod.push(los_aod + centres[i].0 + st);
            aoa.push(los_aoa + centres[i].1 + sr);
            delays.push(cluster_delays[i]);
            gains.push(complex_gaussian(rng, sub_var) * scale);
        }
    }

    Ok(Realization {
        paths: PathSet::new(aod, aoa, delays, gains)?,
        distance,
        shadowing_db,
        path_loss_db: pl_db,
        pdp,
    })
}

/// Path set for `seed` under the given generator.
pub fn draw_scenario(params: &ScenarioParams, algorithm: RngAlgorithm, seed: u64) -> Result<PathSet> {
    let mut rng = rng_from_seed(algorithm, seed);
    Ok(draw_realization(params, &mut rng)?.paths)
}
