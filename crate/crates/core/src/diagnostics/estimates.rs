use serde::{Deserialize, Serialize};

use super::flux::{circle_integral, LateralIntegral, Sampler};
use super::multiplier::{momentum_at, Multiplier};
use super::quadrature::disk_integral_with;
use super::{energy_density, ConeRegion, DiagnosticsError};
use crate::evolve::History;
use crate::field::{MapState, SpacetimePoint};

/// Parameters of the weighted-estimate suite. Times are measured from the apex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub apex: SpacetimePoint,
    pub t_end: f64,
    pub epsilon: f64,
    pub t0: f64,
    pub delta0: f64,
    pub delta1: f64,
    /// Pass factor `K` in `LHS ≤ K · RHS`.
    pub k_factor: f64,
    /// Number of log-uniform offsets in the pigeonhole scan.
    pub n_delta: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            apex: SpacetimePoint::origin(),
            t_end: 1.0,
            epsilon: 0.1,
            t0: 0.5,
            delta0: 0.1,
            delta1: 0.4,
            k_factor: 10.0,
            n_delta: 32,
        }
    }
}

impl EstimateConfig {
    /// Checks `4h ≤ ε ≤ δ₀ < δ₁ ≤ t₀ < t_end`.
    pub fn validate(&self, h: f64) -> Result<(), DiagnosticsError> {
        let ok = 4.0 * h <= self.epsilon
            && self.epsilon <= self.delta0
            && self.delta0 < self.delta1
            && self.delta1 <= self.t0
            && self.t0 < self.t_end
            && self.k_factor > 0.0
            && self.n_delta >= 2;
        if ok {
            Ok(())
        } else {
            Err(DiagnosticsError::BadRegion(format!(
                "estimate parameters need 4h ({:.3e}) ≤ ε ≤ δ0 < δ1 ≤ t0 < t_end, K > 0, n_delta ≥ 2; got {self:?}",
                4.0 * h
            )))
        }
    }

    pub fn deltas(&self) -> Vec<f64> {
        let (a, b) = (self.delta0.ln(), self.delta1.ln());
        (0..self.n_delta)
            .map(|i| (a + (b - a) * i as f64 / (self.n_delta - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

impl EstimateReport {
    fn new(name: &str, lhs: f64, rhs: f64, bound: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            ratio,
            bound,
            pass: lhs <= bound * rhs,
        }
    }
}

/// Streaming evaluation of the weighted estimates; push states in time order.
///
/// Reports, with `E = 𝓔_{S_1}` and `F` the flux over `[ε, 1]`:
/// - `enxe`: `sup_t ∫_{S_t} P₀^{X_ε} + ∬_C ρ_ε⁻¹|X_εΦ|²` against `E + ε^{-½} F`
/// - `enxea`: `∫_{S_1} P₀^{X_ε}` against `E`
/// - `xphi`: `sup_t ∫_{S_t^ε} P₀^{X₀} + ∬_{C^ε} ρ⁻¹|X₀Φ|²` against `E`
/// - `penergyup`: `∫_{S_1^{δ₁}} P₀^{X₀}` against
///   `∫_{S_{t₀}^{δ₀}} P₀^{X₀} + ((δ₁/t₀)^½ + ln(δ₁/δ₀)⁻¹) E`
/// - `pigeonhole`: the smallest lateral integral of
///   `(u/v)^½|X₀Φ|² + (u/v)^{3/2}|L̲Φ|²` over `δ ∈ [δ₀, δ₁]` against `E / ln(δ₁/δ₀)`
///
/// Sections narrower than `4h` contribute zero.
pub struct EstimateSuite {
    cfg: EstimateConfig,
    h: f64,
    flux: LateralIntegral,
    lateral: Vec<LateralIntegral>,
    sup_enxe: f64,
    st_enxe: Trapezoid,
    sup_xphi: f64,
    st_xphi: Trapezoid,
    energy: Option<f64>,
    enxea: Option<f64>,
    pe_top: Option<f64>,
    pe_base: Option<f64>,
    first: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct Trapezoid {
    last: Option<(f64, f64)>,
    sum: f64,
}

impl Trapezoid {
    fn push(&mut self, t: f64, v: f64) {
        if let Some((tp, vp)) = self.last {
            self.sum += 0.5 * (t - tp) * (vp + v);
        }
        self.last = Some((t, v));
    }
}

impl EstimateSuite {
    pub fn new(cfg: EstimateConfig, h: f64) -> Result<Self, DiagnosticsError> {
        cfg.validate(h)?;
        let apex = cfg.apex;
        let region = |t0: f64, delta: f64| ConeRegion {
            apex,
            t0: apex.t + t0,
            t1: apex.t + cfg.t_end,
            delta,
        };
        let flux = LateralIntegral::new(region(cfg.epsilon, 0.0), h);
        let lateral = cfg
            .deltas()
            .into_iter()
            .map(|d| LateralIntegral::new(region(cfg.t0, d), h))
            .collect();
        Ok(Self {
            cfg,
            h,
            flux,
            lateral,
            sup_enxe: 0.0,
            st_enxe: Trapezoid::default(),
            sup_xphi: 0.0,
            st_xphi: Trapezoid::default(),
            energy: None,
            enxea: None,
            pe_top: None,
            pe_base: None,
            first: None,
        })
    }

    fn near(&self, tau: f64, target: f64) -> bool {
        (tau - target).abs() <= 1e-9 * (1.0 + target.abs())
    }

    pub fn push(&mut self, state: &MapState) -> Result<(), DiagnosticsError> {
        if state.phi.is_radial() {
            return Err(DiagnosticsError::Unsupported("estimate_suite"));
        }
        let cfg = self.cfg.clone();
        let tau = state.t - cfg.apex.t;
        let tol = 1e-9 * (1.0 + cfg.t_end);
        if tau < cfg.epsilon - tol || tau > cfg.t_end + tol {
            return Ok(());
        }
        if self.first.is_none() {
            self.first = Some(tau);
        }
        let s = Sampler::new(state);
        let f = &state.phi;
        let c = cfg.apex.x;
        let h = self.h;
        let sr = &s;
        let density = |m: Multiplier, pick: fn(&super::MultiplierSample) -> f64| {
            move |i: usize, j: usize| {
                let p = f.position(i, j);
                let (dt, dx, dy) = sr.node(j * f.nx + i);
                momentum_at(dt, dx, dy, tau, [p[0] - c[0], p[1] - c[1]], m)
                    .map(|v| pick(&v))
                    .unwrap_or(f64::NAN)
            }
        };
        let disk = |radius: f64, g: &dyn Fn(usize, usize) -> f64| -> Result<f64, DiagnosticsError> {
            if radius < 4.0 * h {
                return Ok(0.0);
            }
            let v = disk_integral_with(f.nx, f.ny, f.h, f.origin, c, radius, g)?;
            if v.is_nan() {
                return Err(DiagnosticsError::BadRegion(format!(
                    "multiplier undefined on a section of radius {radius} at t = {tau}"
                )));
            }
            Ok(v)
        };
        let xe = Multiplier::XEps(cfg.epsilon);
        let p0_xe = disk(tau, &density(xe, |v| v.p0))?;
        let ct_xe = disk(tau, &density(xe, |v| v.contraction))?;
        self.sup_enxe = self.sup_enxe.max(p0_xe);
        self.st_enxe.push(tau, ct_xe);
        let p0_x0 = disk(tau - cfg.epsilon, &density(Multiplier::X0, |v| v.p0))?;
        let ct_x0 = disk(tau - cfg.epsilon, &density(Multiplier::X0, |v| v.contraction))?;
        self.sup_xphi = self.sup_xphi.max(p0_x0);
        self.st_xphi.push(tau, ct_x0);

        if self.flux.wants(state.t) {
            let v = circle_integral(&s, c, tau, |q| {
                let (a, _, b) = q.squares();
                0.5 * (a + b)
            });
            self.flux.push_value(state.t, v);
        }
        for lat in self.lateral.iter_mut() {
            if !lat.wants(state.t) {
                continue;
            }
            let d = lat.region.delta;
            let r = tau - d;
            let (u, v) = (d, tau + r);
            let rho2 = u * v;
            let w = (u / v).sqrt();
            let val = circle_integral(&s, c, r, |q| {
                let mut x0 = 0.0;
                let mut lb = 0.0;
                for k in 0..3 {
                    let dr = 0.5 * (q.l[k] - q.lbar[k]);
                    x0 += (tau * q.dt[k] + r * dr).powi(2);
                    lb += q.lbar[k] * q.lbar[k];
                }
                w * x0 / rho2 + w * w * w * lb
            });
            lat.push_value(state.t, val);
        }
        if self.near(tau, cfg.t0) {
            self.pe_base = Some(disk(tau - cfg.delta0, &density(Multiplier::X0, |v| v.p0))?);
        }
        if self.near(tau, cfg.t_end) {
            let e = energy_density(state);
            self.energy = Some(disk(tau, &|i, j| e.values[j * f.nx + i])?);
            self.enxea = Some(p0_xe);
            self.pe_top = Some(disk(tau - cfg.delta1, &density(Multiplier::X0, |v| v.p0))?);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<Vec<EstimateReport>, DiagnosticsError> {
        let cfg = &self.cfg;
        let missing = |what: &str| DiagnosticsError::InsufficientCoverage(what.to_string());
        match self.first {
            Some(t) if self.near(t, cfg.epsilon) => {}
            _ => return Err(missing(&format!("the section at t = ε = {}", cfg.epsilon))),
        }
        let e = self.energy.ok_or_else(|| missing(&format!("the section at t = {}", cfg.t_end)))?;
        let enxea = self.enxea.unwrap_or_default();
        let pe_top = self.pe_top.unwrap_or_default();
        let pe_base = self
            .pe_base
            .ok_or_else(|| missing(&format!("the section at t0 = {}", cfg.t0)))?;
        let f = self.flux.finish()?;
        let mut pig = f64::INFINITY;
        for lat in &self.lateral {
            pig = pig.min(lat.finish()?);
        }
        let k = cfg.k_factor;
        let log = (cfg.delta1 / cfg.delta0).ln();
        Ok(vec![
            EstimateReport::new(
                "enxe",
                self.sup_enxe + self.st_enxe.sum,
                e + f / cfg.epsilon.sqrt(),
                k,
            ),
            EstimateReport::new("enxea", enxea, e, k),
            EstimateReport::new("xphi", self.sup_xphi + self.st_xphi.sum, e, k),
            EstimateReport::new(
                "penergyup",
                pe_top,
                pe_base + ((cfg.delta1 / cfg.t0).sqrt() + 1.0 / log) * e,
                k,
            ),
            EstimateReport::new("pigeonhole", pig, e / log, k),
        ])
    }
}

/// Run the suite over a stored history.
pub fn estimate_suite(history: &History, cfg: &EstimateConfig) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    let h = history
        .snapshots
        .first()
        .map(|s| s.h())
        .ok_or_else(|| DiagnosticsError::InsufficientCoverage("an empty history".into()))?;
    let mut suite = EstimateSuite::new(cfg.clone(), h)?;
    for s in &history.snapshots {
        suite.push(s)?;
    }
    suite.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_history(t0: f64, t1: f64, n: usize) -> History {
        History::from_snapshots(
            (0..=n)
                .map(|i| MapState::constant(128, 1.2, &[0.0, 0.0, 1.0], t0 + (t1 - t0) * i as f64 / n as f64))
                .collect(),
        )
    }

    #[test]
    fn constant_map_passes_with_zero_lhs() {
        let cfg = EstimateConfig::default();
        let reps = estimate_suite(&constant_history(0.1, 1.0, 90), &cfg).unwrap();
        assert_eq!(reps.len(), 5);
        for r in reps {
            assert_eq!(r.lhs, 0.0, "{}", r.name);
            assert!(r.pass);
        }
    }

    #[test]
    fn truncated_history_is_insufficient() {
        let cfg = EstimateConfig::default();
        assert!(matches!(
            estimate_suite(&constant_history(0.1, 0.8, 70), &cfg),
            Err(DiagnosticsError::InsufficientCoverage(_))
        ));
        assert!(matches!(
            estimate_suite(&constant_history(0.2, 1.0, 80), &cfg),
            Err(DiagnosticsError::InsufficientCoverage(_))
        ));
    }

    #[test]
    fn parameters_are_checked() {
        let cfg = EstimateConfig {
            delta0: 0.05,
            ..Default::default()
        };
        assert!(cfg.validate(0.01).is_err());
        let cfg = EstimateConfig::default();
        assert!(cfg.validate(0.1).is_err());
        assert!(cfg.validate(0.01).is_ok());
        let d = cfg.deltas();
        assert_eq!(d.len(), 32);
        assert!((d[0] - 0.1).abs() < 1e-15 && (d[31] - 0.4).abs() < 1e-14);
    }
}
