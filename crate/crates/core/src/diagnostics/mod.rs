//! Energies, fluxes, the energy-momentum tensor and multiplier identities on
//! light cones `C = {r ≤ t - δ}` with a chosen apex.

mod estimates;
mod flux;
mod hyperbolic;
mod multiplier;
mod quadrature;

pub use estimates::{estimate_suite, EstimateConfig, EstimateReport, EstimateSuite};
pub use flux::{flux, line_density, CircleSample, FluxAccumulator};
pub use hyperbolic::{hyperbolic_weighted_energy, HyperbolicEnergy, HyperbolicSlice};
pub use multiplier::{
    contraction_identity_residual, momentum_at, momentum_density, null_squares, Multiplier,
    MultiplierField, MultiplierSample,
};
pub use quadrature::{disk_cell_moments, disk_integral};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{gradient, radial_derivative, FieldError, GridField, MapState, SpacetimePoint};
use crate::manifold::corotational_point;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("section radius {radius:.4e} is below 4h = {min:.4e}")]
    SectionTooSmall { radius: f64, min: f64 },
    #[error("section of radius {radius} around ({cx}, {cy}) leaves the grid")]
    SectionOutsideGrid { radius: f64, cx: f64, cy: f64 },
    #[error("snapshot time {t} lies outside the region [{t0}, {t1}]")]
    TimeOutsideRegion { t: f64, t0: f64, t1: f64 },
    #[error("snapshot gap {gap:.4e} exceeds the grid spacing {h:.4e}")]
    CadenceTooCoarse { gap: f64, h: f64 },
    #[error("history does not cover {0}")]
    InsufficientCoverage(String),
    #[error("invalid cone region: {0}")]
    BadRegion(String),
    #[error("{0} is only available for 2D periodic states")]
    Unsupported(&'static str),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Truncated forward cone `{t0 ≤ t ≤ t1, |x - apex.x| ≤ t - apex.t - δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeRegion {
    pub apex: SpacetimePoint,
    pub t0: f64,
    pub t1: f64,
    pub delta: f64,
}

impl ConeRegion {
    pub fn new(apex: SpacetimePoint, t0: f64, t1: f64, delta: f64) -> Result<Self, DiagnosticsError> {
        let r = Self { apex, t0, t1, delta };
        r.validate()?;
        Ok(r)
    }

    /// Cone with apex at the origin.
    pub fn centered(t0: f64, t1: f64, delta: f64) -> Result<Self, DiagnosticsError> {
        Self::new(SpacetimePoint::origin(), t0, t1, delta)
    }

    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.t0 <= self.t1) {
            return Err(DiagnosticsError::BadRegion(format!(
                "t0 = {} exceeds t1 = {}",
                self.t0, self.t1
            )));
        }
        if !(self.delta >= 0.0) || self.delta > self.t0 - self.apex.t {
            return Err(DiagnosticsError::BadRegion(format!(
                "delta = {} must lie in [0, t0 - apex.t]",
                self.delta
            )));
        }
        Ok(())
    }

    /// Section radius `t - apex.t - δ`.
    pub fn radius(&self, t: f64) -> f64 {
        t - self.apex.t - self.delta
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn contains_time(&self, t: f64) -> bool {
        let tol = 1e-9 * (1.0 + self.t1.abs());
        t >= self.t0 - tol && t <= self.t1 + tol
    }
}

/// `e = ½(|∂_tΦ|² + |∇Φ|²)` per node.
///
/// For radial states the corotational density `½(u_t² + u_r² + k² sin²u / r²)`.
pub fn energy_density(state: &MapState) -> GridField {
    if let crate::field::Topology::Radial { degree } = state.topology() {
        return radial_energy_density(state, degree);
    }
    let (gx, gy) = gradient(&state.phi);
    let mut e = state.phi.zeros_like(1);
    let nc = state.phi.ncomp;
    for (n, out) in e.values.iter_mut().enumerate() {
        let k = n * nc;
        let mut s = 0.0;
        for c in 0..nc {
            s += state.dphi.values[k + c].powi(2) + gx.values[k + c].powi(2) + gy.values[k + c].powi(2);
        }
        *out = 0.5 * s;
    }
    e
}

fn radial_energy_density(state: &MapState, degree: u32) -> GridField {
    let ur = radial_derivative(&state.phi);
    let k2 = (degree as f64).powi(2);
    let h = state.h();
    let mut e = state.phi.zeros_like(1);
    for i in 0..state.phi.nx {
        let u = state.phi.values[i];
        let ang = if i == 0 {
            if degree == 1 {
                ur.values[0].powi(2)
            } else {
                0.0
            }
        } else {
            k2 * u.sin().powi(2) / (i as f64 * h).powi(2)
        };
        e.values[i] = 0.5 * (state.dphi.values[i].powi(2) + ur.values[i].powi(2) + ang);
    }
    e
}

/// Total energy: `h² Σ e` on periodic grids, `2π ∫ e r dr` (Simpson) on radial ones.
pub fn total_energy(state: &MapState) -> f64 {
    let e = energy_density(state);
    if state.phi.is_radial() {
        let h = state.h();
        let f: Vec<f64> = e.values.iter().enumerate().map(|(i, v)| v * i as f64 * h).collect();
        2.0 * std::f64::consts::PI * quadrature::simpson(&f, h)
    } else {
        state.h() * state.h() * crate::field::pairwise_sum(&e.values)
    }
}

/// Energy conserved exactly by the periodic semi-discretisation,
/// `½ h² Σ (|∂_tΦ|² - ⟨Φ, Δ_hΦ⟩)` with the evolution's 4th-order Laplacian `Δ_h`.
///
/// Differs from [`total_energy`] by `O(h⁴)`. Radial states return [`total_energy`].
pub fn discrete_energy(state: &MapState) -> f64 {
    if state.phi.is_radial() {
        return total_energy(state);
    }
    let lap = crate::field::laplacian(&state.phi);
    let nc = state.phi.ncomp;
    let terms: Vec<f64> = (0..state.phi.len_nodes())
        .map(|n| {
            let r = n * nc..(n + 1) * nc;
            let kinetic: f64 = state.dphi.values[r.clone()].iter().map(|v| v * v).sum();
            let potential: f64 = state.phi.values[r.clone()].iter().zip(&lap.values[r]).map(|(p, l)| p * l).sum();
            0.5 * (kinetic - potential)
        })
        .collect();
    state.h() * state.h() * crate::field::pairwise_sum(&terms)
}

/// `max |∇Φ|` over nodes (Frobenius norm of the spatial Jacobian).
pub fn max_gradient(state: &MapState) -> f64 {
    gradient_norms(state).into_iter().fold(0.0, f64::max)
}

/// Per-node `|∇Φ|`.
pub fn gradient_norms(state: &MapState) -> Vec<f64> {
    match state.topology() {
        crate::field::Topology::Radial { degree } => {
            let ur = radial_derivative(&state.phi);
            let h = state.h();
            let k = degree as f64;
            (0..state.phi.nx)
                .map(|i| {
                    let a = ur.values[i];
                    let b = if i == 0 {
                        if degree == 1 {
                            a
                        } else {
                            0.0
                        }
                    } else {
                        k * state.phi.values[i].sin() / (i as f64 * h)
                    };
                    a.hypot(b)
                })
                .collect()
        }
        crate::field::Topology::Periodic => {
            let (gx, gy) = gradient(&state.phi);
            gx.values
                .chunks_exact(state.phi.ncomp)
                .zip(gy.values.chunks_exact(state.phi.ncomp))
                .map(|(a, b)| a.iter().chain(b).map(|x| x * x).sum::<f64>().sqrt())
                .collect()
        }
    }
}

/// Energy on the section `|x - apex.x| ≤ state.t - apex.t - δ`.
pub fn section_energy(state: &MapState, region: &ConeRegion) -> Result<f64, DiagnosticsError> {
    region.validate()?;
    if !region.contains_time(state.t) {
        return Err(DiagnosticsError::TimeOutsideRegion {
            t: state.t,
            t0: region.t0,
            t1: region.t1,
        });
    }
    let e = energy_density(state);
    disk_energy(&e, region.apex.x, region.radius(state.t))
}

/// Integral of a scalar density over the disk of radius `radius`, with the
/// 4h minimum enforced.
pub fn disk_energy(density: &GridField, center: [f64; 2], radius: f64) -> Result<f64, DiagnosticsError> {
    let min = 4.0 * density.h;
    if !(radius >= min) {
        return Err(DiagnosticsError::SectionTooSmall { radius, min });
    }
    if density.is_radial() {
        if center != [0.0, 0.0] {
            return Err(DiagnosticsError::Unsupported("an off-centre section of a radial state"));
        }
        return radial_disk_integral(density, radius);
    }
    disk_integral(density, center, radius)
}

/// `2π ∫_0^R f(r) r dr` by trapezoid on the nodes and an exact linear last cell.
pub fn radial_disk_integral(density: &GridField, radius: f64) -> Result<f64, DiagnosticsError> {
    let h = density.h;
    let n = density.nx;
    let rmax = (n - 1) as f64 * h;
    if radius > rmax {
        return Err(DiagnosticsError::SectionOutsideGrid {
            radius,
            cx: 0.0,
            cy: 0.0,
        });
    }
    let g = |i: usize| density.values[i] * i as f64 * h;
    let m = ((radius / h).floor() as usize).min(n - 1);
    let samples: Vec<f64> = (0..=m).map(g).collect();
    let mut s = quadrature::simpson(&samples, h);
    if m + 1 < n {
        let w = radius - m as f64 * h;
        let gr = g(m) + (g(m + 1) - g(m)) * w / h;
        s += 0.5 * w * (g(m) + gr);
    }
    Ok(2.0 * std::f64::consts::PI * s)
}

/// Lift a corotational state onto a periodic square of `nx²` nodes and half-width `half_width`.
pub fn lift_radial(state: &MapState, nx: usize, half_width: f64) -> Result<MapState, DiagnosticsError> {
    let degree = match state.topology() {
        crate::field::Topology::Radial { degree } => degree,
        _ => return Err(DiagnosticsError::Unsupported("lifting needs a radial state; this")),
    };
    let rmax = (state.phi.nx - 1) as f64 * state.h();
    if half_width * std::f64::consts::SQRT_2 > rmax {
        return Err(DiagnosticsError::SectionOutsideGrid {
            radius: half_width * std::f64::consts::SQRT_2,
            cx: 0.0,
            cy: 0.0,
        });
    }
    let grid = GridField::zeros_square(nx, half_width, 3);
    let mut phi = grid.clone();
    let mut dphi = grid;
    let mut u = [0.0];
    let mut ut = [0.0];
    for j in 0..nx {
        for i in 0..nx {
            let x = phi.position(i, j);
            let r = x[0].hypot(x[1]);
            let th = x[1].atan2(x[0]);
            state.phi.interpolate([r, 0.0], &mut u);
            state.dphi.interpolate([r, 0.0], &mut ut);
            phi.node_mut(i, j).copy_from_slice(&corotational_point(u[0], degree, th));
            let (s, c) = u[0].sin_cos();
            let kt = degree as f64 * th;
            dphi.node_mut(i, j)
                .copy_from_slice(&[ut[0] * c * kt.cos(), ut[0] * c * kt.sin(), -ut[0] * s]);
        }
    }
    Ok(MapState::new(phi, dphi, state.t))
}

/// Symmetric energy-momentum tensor per node, components `(tt, tx, ty, xx, xy, yy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub nx: usize,
    pub ny: usize,
    pub t: Vec<[f64; 6]>,
}

/// `T` as a full 3×3 matrix with indices `(t, x¹, x²)`.
pub fn stress_matrix(c: &[f64; 6]) -> [[f64; 3]; 3] {
    [[c[0], c[1], c[2]], [c[1], c[3], c[4]], [c[2], c[4], c[5]]]
}

/// `T(X, Y)` for spacetime vectors `X, Y`.
pub fn stress_contract(c: &[f64; 6], x: [f64; 3], y: [f64; 3]) -> f64 {
    let m = stress_matrix(c);
    let mut s = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            s += m[a][b] * x[a] * y[b];
        }
    }
    s
}

/// `T(L,L), T(L̲,L̲), T(L,L̲)` at polar angle `theta` around the apex.
pub fn stress_null_components(c: &[f64; 6], theta: f64) -> (f64, f64, f64) {
    let (s, co) = theta.sin_cos();
    let l = [1.0, co, s];
    let lb = [1.0, -co, -s];
    (
        stress_contract(c, l, l),
        stress_contract(c, lb, lb),
        stress_contract(c, l, lb),
    )
}

/// Stress tensor from the velocities `(∂_tΦ, ∂_xΦ, ∂_yΦ)` at one point.
pub fn stress_from_derivatives(dt: &[f64], dx: &[f64], dy: &[f64]) -> [f64; 6] {
    let d = crate::manifold::dot;
    let (tt, xx, yy) = (d(dt, dt), d(dx, dx), d(dy, dy));
    let q = -tt + xx + yy;
    [
        tt + 0.5 * q,
        d(dt, dx),
        d(dt, dy),
        xx - 0.5 * q,
        d(dx, dy),
        yy - 0.5 * q,
    ]
}

/// `T_{αβ} = ⟨∂_αΦ, ∂_βΦ⟩ - ½ g_{αβ} ⟨∂^γΦ, ∂_γΦ⟩`, signature `(-, +, +)`.
pub fn stress(state: &MapState) -> Result<StressField, DiagnosticsError> {
    if state.phi.is_radial() {
        return Err(DiagnosticsError::Unsupported("stress"));
    }
    let (gx, gy) = gradient(&state.phi);
    let nc = state.phi.ncomp;
    let t = (0..state.phi.len_nodes())
        .map(|n| {
            let r = n * nc..(n + 1) * nc;
            stress_from_derivatives(
                &state.dphi.values[r.clone()],
                &gx.values[r.clone()],
                &gy.values[r],
            )
        })
        .collect();
    Ok(StressField {
        nx: state.phi.nx,
        ny: state.phi.ny,
        t,
    })
}
