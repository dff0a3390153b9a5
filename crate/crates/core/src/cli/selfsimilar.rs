//! Diagnostics of the self-similar wave map built from a hyperbolic profile.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diagnostics::{hyperbolic_weighted_energy, HyperbolicSlice};
use crate::evolve::wave_map_residual_with_margin;
use crate::field::{gradient, MapState};
use crate::harmonic::{
    self_similar_state, selfsimilar_energy_divergence, shoot_hyperbolic, DivergenceFit,
    HarmonicError, HyperbolicProfile,
};
use crate::manifold::corotational_point;
use crate::manifold::Sphere;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfSimilarSpec {
    pub degree: u32,
    /// Boundary value `ψ(∞)` of the profile, in `(0, π)`.
    pub limit: f64,
    pub y_max: f64,
    /// Cone offsets for the section-energy fit.
    pub deltas: Vec<f64>,
    /// Sampling time; the check region is `r ≤ inner_fraction · t`.
    pub t: f64,
    pub inner_fraction: f64,
    /// Grid sizes for the residual order and the `X₀Φ` check (finest).
    pub levels: Vec<usize>,
    pub cfl: f64,
    /// `y_max` values for the weighted hyperbolic energy.
    pub weighted_y: Vec<f64>,
    pub slice_ny: usize,
    pub slice_ntheta: usize,
    pub x0_tol: f64,
    pub fit_tol: f64,
    pub order_range: (f64, f64),
}

impl Default for SelfSimilarSpec {
    fn default() -> Self {
        Self {
            degree: 1,
            limit: PI / 2.0,
            y_max: 12.0,
            deltas: (0..7).map(|i| 10f64.powf(-1.0 - 0.5 * i as f64)).collect(),
            t: 1.0,
            inner_fraction: 0.5,
            levels: vec![128, 256, 512],
            cfl: 0.25,
            weighted_y: vec![4.0, 8.0, 12.0],
            slice_ny: 2001,
            slice_ntheta: 64,
            x0_tol: 1e-8,
            fit_tol: 0.02,
            order_range: (1.8, 2.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimilarReport {
    pub slope: f64,
    pub limit: f64,
    pub max_abs: f64,
    pub bounded: bool,
    /// `max |t ∂_tΦ + x·∇Φ|` with stencil gradients, on the finest level.
    pub x0_max: f64,
    pub x0_pass: bool,
    /// `(h, residual)` per level.
    pub residuals: Vec<(f64, f64)>,
    pub orders: Vec<f64>,
    pub residual_pass: bool,
    pub slope_fit: f64,
    pub intercept_fit: f64,
    pub energies: Vec<(f64, f64)>,
    pub fit_residual: f64,
    pub fit_pass: bool,
    /// `(y_max, weighted energy)`.
    pub weighted: Vec<(f64, f64)>,
    pub weighted_pass: bool,
}

impl SelfSimilarReport {
    pub fn passed(&self) -> bool {
        self.bounded && self.x0_pass && self.residual_pass && self.fit_pass && self.weighted_pass
    }
}

/// Square `[-L, L)²` inside `r ≤ f t` for `L = f t / √2`.
fn inner_half_width(spec: &SelfSimilarSpec) -> f64 {
    spec.inner_fraction * spec.t / 2f64.sqrt()
}

/// Stencil margin: the periodic wrap spoils two nodes per edge.
const MARGIN: usize = 4;

fn x0_defect(p: &HyperbolicProfile, spec: &SelfSimilarSpec, nx: usize) -> f64 {
    let s = self_similar_state(p, spec.t, nx, inner_half_width(spec));
    let (gx, gy) = gradient(&s.phi);
    let mut worst: f64 = 0.0;
    for j in MARGIN..nx - MARGIN {
        for i in MARGIN..nx - MARGIN {
            let x = s.phi.position(i, j);
            let (a, b, c) = (s.dphi.node(i, j), gx.node(i, j), gy.node(i, j));
            let w: f64 = (0..3)
                .map(|m| (spec.t * a[m] + x[0] * b[m] + x[1] * c[m]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(w);
        }
    }
    worst
}

fn residual_at(p: &HyperbolicProfile, spec: &SelfSimilarSpec, nx: usize) -> Result<(f64, f64), HarmonicError> {
    let hw = inner_half_width(spec);
    let h = 2.0 * hw / nx as f64;
    let dt = spec.cfl * h;
    let states: Vec<MapState> = [-dt, 0.0, dt]
        .iter()
        .map(|d| self_similar_state(p, spec.t + d, nx, hw))
        .collect();
    let r = wave_map_residual_with_margin(&states, &Sphere::default(), MARGIN)
        .map_err(|e| HarmonicError::InvalidArgument(e.to_string()))?;
    Ok((h, r[0]))
}

/// Weighted hyperbolic energy of the profile's `ρ = 1` slice up to `y_max`.
fn weighted_energy(p: &HyperbolicProfile, y_max: f64, ny: usize, ntheta: usize) -> f64 {
    let k = p.k;
    let slice = HyperbolicSlice::from_fn(0.0, y_max, ny, ntheta, |y, th| corotational_point(p.eval(y).0, k, th));
    hyperbolic_weighted_energy(&slice).value
}

pub fn selfsimilar_report(spec: &SelfSimilarSpec) -> Result<SelfSimilarReport, HarmonicError> {
    if spec.levels.len() < 2 || spec.weighted_y.len() < 2 {
        return Err(HarmonicError::InvalidArgument(
            "need at least two grid levels and two weighted-energy radii".into(),
        ));
    }
    if !(spec.inner_fraction > 0.0 && spec.inner_fraction < 1.0 && spec.t > 0.0 && spec.cfl > 0.0) {
        return Err(HarmonicError::InvalidArgument(format!(
            "need t > 0, cfl > 0 and inner_fraction in (0, 1); got {}, {}, {}",
            spec.t, spec.cfl, spec.inner_fraction
        )));
    }
    let y_top = spec.weighted_y.iter().cloned().fold(spec.y_max, f64::max);
    let p = shoot_hyperbolic(spec.degree, spec.limit, y_top)?;
    let max_abs = p.max_abs();
    let finest = *spec.levels.iter().max().unwrap_or(&64);
    let x0_max = x0_defect(&p, spec, finest);
    let residuals = spec
        .levels
        .iter()
        .map(|&n| residual_at(&p, spec, n))
        .collect::<Result<Vec<_>, _>>()?;
    let orders: Vec<f64> = residuals
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let (lo, hi) = spec.order_range;
    let fit: DivergenceFit = selfsimilar_energy_divergence(&p, &spec.deltas)?;
    let weighted: Vec<(f64, f64)> = spec
        .weighted_y
        .iter()
        .map(|&y| (y, weighted_energy(&p, y, spec.slice_ny, spec.slice_ntheta)))
        .collect();
    let weighted_pass = weighted.windows(2).all(|w| w[1].1 > w[0].1 * 1.01);
    Ok(SelfSimilarReport {
        slope: p.slope,
        limit: p.limit(),
        max_abs,
        bounded: max_abs <= PI,
        x0_max,
        x0_pass: x0_max <= spec.x0_tol,
        residual_pass: orders.iter().all(|o| (lo..=hi).contains(o)),
        residuals,
        orders,
        slope_fit: fit.slope,
        intercept_fit: fit.intercept,
        energies: fit.energies,
        fit_residual: fit.max_relative_residual,
        fit_pass: fit.max_relative_residual <= spec.fit_tol,
        weighted,
        weighted_pass,
    })
}
