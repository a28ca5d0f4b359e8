//! One-dimensional trust-region ascent on a single element coordinate.

use serde::{Deserialize, Serialize};

use crate::array_model::ArrayGeometry;
use crate::error::{Error, Result};

/// Trust-region constants. Radii are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub initial_radius: f64,
    pub min_radius: f64,
    pub max_inner_iters: usize,
    /// Inner loop stops once an accepted step gains less than this (bits).
    pub inner_tol: f64,
}

impl TrustRegionConfig {
    /// Defaults scaled to wavelength `lambda`: `A₀ = λ/4`, `A_min = 10⁻⁶λ`.
    pub fn for_wavelength(lambda: f64) -> Self {
        Self {
            rho1: 0.25,
            rho2: 0.75,
            nu1: 2.0,
            nu2: 4.0,
            initial_radius: 0.25 * lambda,
            min_radius: 1e-6 * lambda,
            max_inner_iters: 50,
            inner_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.rho1
            && self.rho1 < self.rho2
            && self.rho2 < 1.0
            && self.nu1 > 1.0
            && self.nu2 > 1.0
            && self.min_radius > 0.0
            && self.initial_radius > self.min_radius
            && self.inner_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trust-region constants: {self:?}")))
        }
    }
}

/// `[max(x̄ − A, x̄_{m−1} + d_min), min(x̄ + A, x̄_{m+1} − d_min)]` with the
/// virtual neighbours `−d_min` and `D + d_min`.
///
/// The interval always contains `x̄`, even when a neighbour sits slightly
/// closer than `d_min` within the geometry's rounding slack.
pub fn feasible_interval(geom: &ArrayGeometry, index: usize, radius: f64) -> (f64, f64) {
    let p = geom.positions();
    let d = geom.min_spacing();
    let x = p[index];
    let prev = if index == 0 { -d } else { p[index - 1] };
    let next = p.get(index + 1).copied().unwrap_or(geom.aperture() + d);
    let lo = (x - radius).max(prev + d).min(x);
    let hi = (x + radius).min(next - d).max(x);
    (lo, hi)
}

/// Local quadratic model `w(x) = h̄ + g(x − x̄) + ½h(x − x̄)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel {
    pub center: f64,
    pub value: f64,
    pub g: f64,
    pub h: f64,
}

impl QuadraticModel {
    pub fn eval(&self, x: f64) -> f64 {
        let dx = x - self.center;
        self.value + self.g * dx + 0.5 * self.h * dx * dx
    }

    /// Exact maximizer over `[lo, hi]`: the better endpoint, or the
    /// projected Newton point when the model is strictly concave.
    pub fn maximize(&self, lo: f64, hi: f64) -> f64 {
        let mut best = lo;
        let mut best_w = self.eval(lo);
        let mut consider = |x: f64| {
            let w = self.eval(x);
            if w > best_w {
                best = x;
                best_w = w;
            }
        };
        consider(hi);
        if self.h < -1e-12 {
            consider((self.center - self.g / self.h).clamp(lo, hi));
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: f64,
    pub value: f64,
    pub radius: f64,
    pub accepted: bool,
    /// `w(x*) − w(x̄)`.
    pub predicted: f64,
    /// `h(x*) − h(x̄)`, `None` when the candidate was not evaluated.
    pub actual: Option<f64>,
    pub ratio: Option<f64>,
    /// Why the candidate could not be evaluated, if it could not.
    pub failure: Option<String>,
}

/// One trust-region iteration. `eval` returns the true objective at a
/// candidate; a failing evaluation counts as a rejection.
pub fn trm_step<F>(model: QuadraticModel, interval: (f64, f64), radius: f64, cap: f64, cfg: &TrustRegionConfig, mut eval: F) -> StepOutcome
where
    F: FnMut(f64) -> Result<f64>,
{
    let unchanged = |radius: f64, predicted: f64| StepOutcome {
        x: model.center,
        value: model.value,
        radius,
        accepted: false,
        predicted,
        actual: None,
        ratio: None,
        failure: None,
    };
    let (lo, hi) = interval;
    if !(hi > lo) {
        return unchanged(radius, 0.0);
    }
    let x_star = model.maximize(lo, hi);
    let predicted = model.eval(x_star) - model.value;
    if !(predicted >= 1e-14 * (1.0 + model.value.abs())) || x_star == model.center {
        return unchanged(radius / cfg.nu2, predicted);
    }
    let value = match eval(x_star) {
        Ok(v) if v.is_finite() => v,
        Ok(v) => {
            return StepOutcome {
                failure: Some(format!("non-finite objective {v} at {x_star:e}")),
                ..unchanged(radius / cfg.nu2, predicted)
            }
        }
        Err(e) => {
            return StepOutcome {
                failure: Some(e.to_string()),
                ..unchanged(radius / cfg.nu2, predicted)
            }
        }
    };
    let actual = value - model.value;
    let ratio = actual / predicted;
    let on_boundary = (x_star - model.center).abs() >= radius * (1.0 - 1e-12);
    let (accepted, new_radius) = if ratio > cfg.rho2 {
        (true, if on_boundary { (cfg.nu1 * radius).min(cap) } else { radius })
    } else if ratio > cfg.rho1 {
        (true, radius)
    } else {
        (false, radius / cfg.nu2)
    };
    StepOutcome {
        x: if accepted { x_star } else { model.center },
        value: if accepted { value } else { model.value },
        radius: new_radius,
        accepted,
        predicted,
        actual: Some(actual),
        ratio: Some(ratio),
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrustRegionConfig {
        TrustRegionConfig::for_wavelength(1.0)
    }

    #[test]
    fn interval_cases() {
        let single = ArrayGeometry::new(vec![0.4], 1.0, 0.2).unwrap();
        assert_eq!(feasible_interval(&single, 0, 2.0), (0.0, 1.0));
        let packed = ArrayGeometry::new(vec![0.0, 0.2, 0.4], 1.0, 0.2).unwrap();
        let (lo, hi) = feasible_interval(&packed, 1, 0.1);
        assert!((lo - 0.2).abs() < 1e-15 && (hi - 0.2).abs() < 1e-15);
        let g = ArrayGeometry::new(vec![0.3, 0.7], 1.0, 0.2).unwrap();
        let (lo, hi) = feasible_interval(&g, 0, 0.05);
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 0.35).abs() < 1e-15);
        let (lo, hi) = feasible_interval(&g, 0, 0.5);
        assert!((lo - 0.0).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_objective_lands_on_maximizer() {
        let f = |x: f64| 3.0 - 2.0 * (x - 0.3).powi(2);
        let x0 = 0.1;
        let model = QuadraticModel {
            center: x0,
            value: f(x0),
            g: -4.0 * (x0 - 0.3),
            h: -4.0,
        };
        let out = trm_step(model, (0.0, 0.5), 0.4, 1.0, &cfg(), |x| Ok(f(x)));
        assert!(out.accepted);
        assert!((out.x - 0.3).abs() < 1e-15);
        assert!((out.ratio.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(out.radius, 0.4);
    }

    #[test]
    fn convex_model_picks_an_endpoint() {
        let model = QuadraticModel {
            center: 0.5,
            value: 0.0,
            g: 0.1,
            h: 5.0,
        };
        let x = model.maximize(0.4, 0.6);
        assert!(x == 0.4 || x == 0.6);
        assert_eq!(x, 0.6);
    }

    #[test]
    fn poor_agreement_rejects_and_shrinks() {
        let model = QuadraticModel {
            center: 0.5,
            value: 1.0,
            g: 1.0,
            h: 0.0,
        };
        let out = trm_step(model, (0.4, 0.6), 0.1, 1.0, &cfg(), |_| Ok(0.0));
        assert!(!out.accepted);
        assert_eq!(out.x, 0.5);
        assert_eq!(out.value, 1.0);
        assert!((out.radius - 0.025).abs() < 1e-15);
    }

    #[test]
    fn boundary_success_grows_radius_up_to_cap() {
        let model = QuadraticModel {
            center: 0.5,
            value: 0.0,
            g: 1.0,
            h: 0.0,
        };
        let out = trm_step(model, (0.4, 0.6), 0.1, 1.0, &cfg(), |x| Ok(x - 0.5));
        assert!(out.accepted);
        assert!((out.radius - 0.2).abs() < 1e-15);
        let capped = trm_step(model, (0.4, 0.6), 0.1, 0.15, &cfg(), |x| Ok(x - 0.5));
        assert_eq!(capped.radius, 0.15);
    }

    #[test]
    fn degenerate_cases_leave_state() {
        let model = QuadraticModel {
            center: 0.2,
            value: 1.0,
            g: 0.0,
            h: 0.0,
        };
        let out = trm_step(model, (0.2, 0.2), 0.1, 1.0, &cfg(), |_| panic!("must not evaluate"));
        assert!(!out.accepted && out.radius == 0.1);
        let flat = trm_step(model, (0.1, 0.3), 0.1, 1.0, &cfg(), |_| panic!("must not evaluate"));
        assert!(!flat.accepted && flat.radius < 0.1);
    }

    #[test]
    fn evaluation_failure_is_a_reject() {
        let model = QuadraticModel {
            center: 0.2,
            value: 1.0,
            g: 1.0,
            h: -1.0,
        };
        let out = trm_step(model, (0.1, 0.3), 0.1, 1.0, &cfg(), |_| Err(Error::contract("boom")));
        assert!(!out.accepted);
        assert!(out.failure.is_some());
    }
}
