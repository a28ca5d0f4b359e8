//! Experiment configuration: JSON file merged over a named profile.
//!
//! Files carry dB quantities; [`ExperimentConfig`] holds linear watts.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::array_model::Wavenumber;
use crate::error::{Error, Result};
use crate::optimizer::{BcaConfig, TrustRegionConfig};
use crate::scenario::{RngAlgorithm, ScenarioParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Narrowband,
    Wideband,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `M = N = 4`, 50 trials, 16 subcarriers.
    #[default]
    Desk,
    /// Full table scale: `M = N = 8`, 1000 trials, 300 subcarriers.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "c-ma")]
    CMa,
    #[serde(rename = "nc-ma")]
    NcMa,
    #[serde(rename = "ula")]
    Ula,
    #[serde(rename = "cla")]
    Cla,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::CMa => "c-ma",
            SchemeKind::NcMa => "nc-ma",
            SchemeKind::Ula => "ula",
            SchemeKind::Cla => "cla",
        }
    }

    /// Minimum spacing for movable schemes, element spacing for fixed arrays.
    pub fn default_d_min_lambda(self) -> f64 {
        match self {
            SchemeKind::CMa | SchemeKind::Cla => 0.2,
            SchemeKind::NcMa | SchemeKind::Ula => 0.5,
        }
    }

    pub fn is_movable(self) -> bool {
        matches!(self, SchemeKind::CMa | SchemeKind::NcMa)
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(Value::String(name.to_owned()))
            .map_err(|_| Error::Config(format!("unknown scheme {name:?} (expected c-ma, nc-ma, ula or cla)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind) -> Self {
        Self {
            kind,
            d_min_lambda: None,
            label: None,
        }
    }

    pub fn d_min_lambda(&self) -> f64 {
        self.d_min_lambda.unwrap_or_else(|| self.kind.default_d_min_lambda())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// `M = N`.
    Antennas,
    PMaxDbm,
    RhoDbmPerMhz,
    KappaDb,
    /// Normalized movable range `p = D/((M−1)λ)`.
    RangeP,
    Subcarriers,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Antennas => "antennas",
            SweepVar::PMaxDbm => "p_max_dbm",
            SweepVar::RhoDbmPerMhz => "rho_dbm_per_mhz",
            SweepVar::KappaDb => "kappa_db",
            SweepVar::RangeP => "range_p",
            SweepVar::Subcarriers => "subcarriers",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRegionFile {
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub initial_radius_lambda: f64,
    pub min_radius_lambda: f64,
    pub max_inner_iters: usize,
    pub inner_tol: f64,
}

/// On-disk configuration, all keys required after merging over the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    pub mode: Mode,
    pub trials: usize,
    pub master_seed: u64,
    pub rng: RngAlgorithm,
    pub antennas_tx: usize,
    pub antennas_rx: usize,
    pub range_p: f64,
    pub carrier_hz: f64,
    pub kappa_db: f64,
    pub clusters: usize,
    pub subpaths: usize,
    pub r_min_m: f64,
    pub r_max_m: f64,
    pub los_spread_deg: f64,
    pub cluster_spread_deg: f64,
    pub subpath_spread_deg: f64,
    pub shadowing_var_db2: f64,
    pub delay_factor_min: f64,
    pub delay_factor_max: f64,
    pub pdp_var_db2: f64,
    pub use_pdp_weights: bool,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub rho_dbm_per_mhz: f64,
    pub n0_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub trust_region: TrustRegionFile,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub schemes: Vec<SchemeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub record_wall_time: bool,
    pub dump_paths: bool,
}

impl ConfigFile {
    pub fn profile_defaults(profile: Profile) -> Self {
        let (antennas, trials, subcarriers) = match profile {
            Profile::Desk => (4, 50, 16),
            Profile::Paper => (8, 1000, 300),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            profile: None,
            mode: Mode::Narrowband,
            trials,
            master_seed: 1,
            rng: RngAlgorithm::Chacha20,
            antennas_tx: antennas,
            antennas_rx: antennas,
            range_p: 2.0,
            carrier_hz: 28e9,
            kappa_db: 0.0,
            clusters: 3,
            subpaths: 8,
            r_min_m: 100.0,
            r_max_m: 300.0,
            los_spread_deg: 5.0,
            cluster_spread_deg: 40.0,
            subpath_spread_deg: 5.0,
            shadowing_var_db2: 16.0,
            delay_factor_min: 1.0,
            delay_factor_max: 10.0,
            pdp_var_db2: 9.0,
            use_pdp_weights: false,
            p_max_dbm: 30.0,
            noise_dbm: -80.0,
            rho_dbm_per_mhz: 0.0,
            n0_dbm_per_hz: -174.0,
            noise_figure_db: 5.0,
            subcarriers,
            subcarrier_spacing_hz: 15e3,
            trust_region: TrustRegionFile {
                rho1: 0.25,
                rho2: 0.75,
                nu1: 2.0,
                nu2: 4.0,
                initial_radius_lambda: 0.25,
                min_radius_lambda: 1e-6,
                max_inner_iters: 50,
                inner_tol: 1e-8,
            },
            outer_tol: 1e-4,
            max_outer_iters: 100,
            schemes: [SchemeKind::CMa, SchemeKind::NcMa, SchemeKind::Ula, SchemeKind::Cla]
                .into_iter()
                .map(SchemeConfig::new)
                .collect(),
            sweep: None,
            record_wall_time: false,
            dump_paths: false,
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge key by key,
/// anything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, value) in p {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Resolved experiment description in SI units and linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub profile: Profile,
    pub mode: Mode,
    pub trials: usize,
    pub master_seed: u64,
    pub rng: RngAlgorithm,
    pub antennas_tx: usize,
    pub antennas_rx: usize,
    pub range_p: f64,
    pub scenario: ScenarioParams,
    /// Narrowband budget, W.
    pub p_max_w: f64,
    /// Narrowband noise, W.
    pub noise_w: f64,
    /// Wideband power density, W/Hz.
    pub rho_w_per_hz: f64,
    /// Per-subcarrier noise `N₀·Δ·10^{NF/10}`, W.
    pub noise_wb_w: f64,
    pub subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub bca: BcaConfig,
    pub schemes: Vec<SchemeConfig>,
    pub sweep: Option<Sweep>,
    pub record_wall_time: bool,
    pub dump_paths: bool,
}

impl ExperimentConfig {
    /// Parses `text` and merges it over the profile chosen by
    /// `profile_override`, the file's `profile` key, or the desk default.
    pub fn from_json(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let obj = user
            .as_object()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        match obj.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Config(format!("unsupported schema_version {v}"))),
            None => return Err(Error::Config("missing schema_version".into())),
        }
        let file_profile = match obj.get("profile") {
            Some(p) => Some(serde_json::from_value::<Profile>(p.clone()).map_err(|e| Error::Config(e.to_string()))?),
            None => None,
        };
        let profile = profile_override.or(file_profile).unwrap_or_default();
        let mut merged = serde_json::to_value(ConfigFile::profile_defaults(profile))?;
        merge(&mut merged, user);
        let mut file: ConfigFile = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        file.profile = Some(profile);
        Self::resolve(file)
    }

    pub fn from_profile(profile: Profile) -> Result<Self> {
        let mut file = ConfigFile::profile_defaults(profile);
        file.profile = Some(profile);
        Self::resolve(file)
    }

    pub fn resolve(file: ConfigFile) -> Result<Self> {
        let k = Wavenumber::from_carrier(file.carrier_hz);
        let lam = k.wavelength;
        let tr = &file.trust_region;
        let bca = BcaConfig {
            trust_region: TrustRegionConfig {
                rho1: tr.rho1,
                rho2: tr.rho2,
                nu1: tr.nu1,
                nu2: tr.nu2,
                initial_radius: tr.initial_radius_lambda * lam,
                min_radius: tr.min_radius_lambda * lam,
                max_inner_iters: tr.max_inner_iters,
                inner_tol: tr.inner_tol,
            },
            outer_tol: file.outer_tol,
            max_outer_iters: file.max_outer_iters,
        };
        let kappa = db_to_linear(file.kappa_db);
        let scenario = ScenarioParams {
            kappa,
            clusters: file.clusters,
            subpaths: file.subpaths,
            carrier_hz: file.carrier_hz,
            r_min: file.r_min_m,
            r_max: file.r_max_m,
            los_spread_deg: file.los_spread_deg,
            cluster_spread_deg: file.cluster_spread_deg,
            subpath_spread_deg: file.subpath_spread_deg,
            shadowing_var_db2: file.shadowing_var_db2,
            delay_factor_min: file.delay_factor_min,
            delay_factor_max: file.delay_factor_max,
            pdp_var_db2: file.pdp_var_db2,
            use_pdp_weights: file.use_pdp_weights,
        };
        let cfg = Self {
            profile: file.profile.unwrap_or_default(),
            mode: file.mode,
            trials: file.trials,
            master_seed: file.master_seed,
            rng: file.rng,
            antennas_tx: file.antennas_tx,
            antennas_rx: file.antennas_rx,
            range_p: file.range_p,
            scenario,
            p_max_w: dbm_to_watts(file.p_max_dbm),
            noise_w: dbm_to_watts(file.noise_dbm),
            rho_w_per_hz: dbm_to_watts(file.rho_dbm_per_mhz) / 1e6,
            noise_wb_w: dbm_to_watts(file.n0_dbm_per_hz)
                * file.subcarrier_spacing_hz
                * db_to_linear(file.noise_figure_db),
            subcarriers: file.subcarriers,
            subcarrier_spacing_hz: file.subcarrier_spacing_hz,
            bca,
            schemes: file.schemes.clone(),
            sweep: file.sweep.clone(),
            record_wall_time: file.record_wall_time,
            dump_paths: file.dump_paths,
            file,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.antennas_tx == 0 || self.antennas_rx == 0 {
            return bad("antenna counts must be at least 1".into());
        }
        if !(self.range_p > 0.0 && self.range_p.is_finite()) {
            return bad("range_p must be positive".into());
        }
        if self.subcarriers == 0 || !(self.subcarrier_spacing_hz > 0.0) {
            return bad("need at least one subcarrier and a positive spacing".into());
        }
        for (what, v) in [
            ("p_max", self.p_max_w),
            ("noise", self.noise_w),
            ("rho", self.rho_w_per_hz),
            ("wideband noise", self.noise_wb_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{what} must be positive and finite"));
            }
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        let mut labels = std::collections::BTreeSet::new();
        for s in &self.schemes {
            if !(s.d_min_lambda() > 0.0) {
                return bad(format!("scheme {} needs d_min_lambda > 0", s.label()));
            }
            if !labels.insert(s.label()) {
                return bad(format!("duplicate scheme label {}", s.label()));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return bad("sweep grid is empty".into());
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return bad("sweep values must be finite".into());
            }
            if matches!(sweep.variable, SweepVar::Antennas | SweepVar::Subcarriers)
                && sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
            {
                return bad(format!("{} sweep needs positive integers", sweep.variable.name()));
            }
        }
        self.scenario.validate()?;
        self.bca.validate()
    }

    pub fn wavenumber(&self) -> Wavenumber {
        Wavenumber::from_carrier(self.scenario.carrier_hz)
    }

    /// Movable range `D = p·(count − 1)·λ`; a single element gets `p·λ`.
    pub fn aperture(&self, count: usize) -> f64 {
        self.range_p * (count.max(2) - 1) as f64 * self.wavenumber().wavelength
    }

    /// Wideband budget `P_max = ρ·S·Δ`.
    pub fn p_max_wb_w(&self) -> f64 {
        self.rho_w_per_hz * self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Sweep points as `(variable name, value)`; a single unnamed point when
    /// no sweep is configured.
    pub fn sweep_points(&self) -> Vec<(String, f64)> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|v| (s.variable.name().to_owned(), *v)).collect(),
            None => vec![("none".to_owned(), 0.0)],
        }
    }

    /// Copy with the sweep variable set to `value`.
    pub fn at_sweep_point(&self, value: f64) -> Result<Self> {
        let Some(sweep) = &self.sweep else {
            return Ok(self.clone());
        };
        let mut file = self.file.clone();
        match sweep.variable {
            SweepVar::Antennas => {
                file.antennas_tx = value as usize;
                file.antennas_rx = value as usize;
            }
            SweepVar::PMaxDbm => file.p_max_dbm = value,
            SweepVar::RhoDbmPerMhz => file.rho_dbm_per_mhz = value,
            SweepVar::KappaDb => file.kappa_db = value,
            SweepVar::RangeP => file.range_p = value,
            SweepVar::Subcarriers => file.subcarriers = value as usize,
        }
        Self::resolve(file)
    }
}
