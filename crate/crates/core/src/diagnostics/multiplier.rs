use serde::{Deserialize, Serialize};

use super::flux::Sampler;
use super::{stress_from_derivatives, DiagnosticsError};
use crate::field::{FieldError, MapState, SpacetimePoint};

/// Multiplier vector field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    /// `∂_t`
    Time,
    /// `X₀ = ρ⁻¹(t ∂_t + r ∂_r)`
    X0,
    /// `X_ε`: `X₀` with `t` replaced by `t + ε`.
    XEps(f64),
}

impl Multiplier {
    /// Time shift applied to the optical functions.
    fn shift(&self) -> f64 {
        match self {
            Multiplier::XEps(e) => *e,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierSample {
    /// `P₀ = T(∂_t, X)`
    pub p0: f64,
    /// `P_L = T(L, X)`
    pub pl: f64,
    /// `½ T·π^{(X)}`, equal to `ρ⁻¹|XΦ|²` for `X₀, X_ε` and zero for `∂_t`.
    pub contraction: f64,
}

/// `(|LΦ|², |L̲Φ|², |∂̸Φ|²)` from Cartesian derivatives at `x` relative to the apex.
pub fn null_squares(dt: &[f64], dx: &[f64], dy: &[f64], x: [f64; 2]) -> (f64, f64, f64) {
    let r = x[0].hypot(x[1]);
    let (c, s) = if r > 0.0 { (x[0] / r, x[1] / r) } else { (1.0, 0.0) };
    let (mut a, mut b, mut q) = (0.0, 0.0, 0.0);
    for k in 0..dt.len() {
        let dr = c * dx[k] + s * dy[k];
        let da = -s * dx[k] + c * dy[k];
        a += (dt[k] + dr).powi(2);
        b += (dt[k] - dr).powi(2);
        q += da * da;
    }
    (a, b, q)
}

/// Momentum densities at one point from Cartesian derivatives.
///
/// `tau = t - apex.t`, `x` relative to the apex.
pub fn momentum_at(
    dt: &[f64],
    dx: &[f64],
    dy: &[f64],
    tau: f64,
    x: [f64; 2],
    m: Multiplier,
) -> Result<MultiplierSample, FieldError> {
    let (a, b, q) = null_squares(dt, dx, dy, x);
    let r = x[0].hypot(x[1]);
    if let Multiplier::Time = m {
        return Ok(MultiplierSample {
            p0: 0.25 * (a + b) + 0.5 * q,
            pl: 0.5 * (a + q),
            contraction: 0.0,
        });
    }
    let ts = tau + m.shift();
    let (u, v) = (ts - r, ts + r);
    if !(u > 0.0) {
        return Err(FieldError::OutsideCone { t: tau, r });
    }
    let rho = (u * v).sqrt();
    let (p, q_) = ((v / u).sqrt(), (u / v).sqrt());
    let mut xs = 0.0;
    for k in 0..dt.len() {
        let w = ts * dt[k] + x[0] * dx[k] + x[1] * dy[k];
        xs += w * w;
    }
    Ok(MultiplierSample {
        p0: 0.25 * p * a + 0.25 * (p + q_) * q + 0.25 * q_ * b,
        pl: 0.5 * p * a + 0.5 * q_ * q,
        contraction: xs / (rho * rho * rho),
    })
}

/// Per-node multiplier densities. Nodes outside the cone of definition are
/// marked invalid and hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierField {
    pub multiplier: Multiplier,
    pub p0: Vec<f64>,
    pub pl: Vec<f64>,
    pub contraction: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn momentum_density(
    state: &MapState,
    apex: SpacetimePoint,
    m: Multiplier,
) -> Result<MultiplierField, DiagnosticsError> {
    if state.phi.is_radial() {
        return Err(DiagnosticsError::Unsupported("momentum_density"));
    }
    let tau = state.t - apex.t;
    if m != Multiplier::Time && !(tau + m.shift() > 0.0) {
        return Err(FieldError::OutsideCone { t: tau, r: 0.0 }.into());
    }
    let s = Sampler::new(state);
    let n = state.phi.len_nodes();
    let mut out = MultiplierField {
        multiplier: m,
        p0: vec![0.0; n],
        pl: vec![0.0; n],
        contraction: vec![0.0; n],
        valid: vec![false; n],
    };
    for j in 0..state.phi.ny {
        for i in 0..state.phi.nx {
            let node = j * state.phi.nx + i;
            let p = state.phi.position(i, j);
            let x = [p[0] - apex.x[0], p[1] - apex.x[1]];
            let (dt, dx, dy) = s.node(node);
            if let Ok(v) = momentum_at(dt, dx, dy, tau, x, m) {
                out.p0[node] = v.p0;
                out.pl[node] = v.pl;
                out.contraction[node] = v.contraction;
                out.valid[node] = true;
            }
        }
    }
    Ok(out)
}

/// `½ T_{αβ} π^{αβ}` for `X₀` assembled from the stress tensor and the
/// deformation tensor `π_{αβ} = 2(η_{αβ} / ρ + x_α x_β / ρ³)`.
pub(crate) fn deformation_contraction(t: &[f64; 6], tau: f64, x: [f64; 2]) -> (f64, f64) {
    let rho = (tau * tau - x[0] * x[0] - x[1] * x[1]).sqrt();
    let eta = [-1.0, 1.0, 1.0];
    let lower = [-tau, x[0], x[1]];
    let m = super::stress_matrix(t);
    let (mut s, mut scale) = (0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            let d = if a == b { eta[a] } else { 0.0 };
            let pi_lower = 2.0 * (d / rho + lower[a] * lower[b] / rho.powi(3));
            let pi_upper = eta[a] * eta[b] * pi_lower;
            s += 0.5 * m[a][b] * pi_upper;
            scale += 0.5 * (m[a][b] * pi_upper).abs();
        }
    }
    (s, scale)
}

/// Max over nodes with `ρ ≥ 10h` of `|½T·π^{(X₀)} - ρ⁻¹|X₀Φ|²|`, relative to the
/// largest term magnitude `½Σ|T_{αβ}π^{αβ}|` over the same nodes.
pub fn contraction_identity_residual(state: &MapState, apex: SpacetimePoint) -> Result<f64, DiagnosticsError> {
    if state.phi.is_radial() {
        return Err(DiagnosticsError::Unsupported("contraction_identity_residual"));
    }
    let s = Sampler::new(state);
    let tau = state.t - apex.t;
    let h = state.h();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for j in 0..state.phi.ny {
        for i in 0..state.phi.nx {
            let p = state.phi.position(i, j);
            let x = [p[0] - apex.x[0], p[1] - apex.x[1]];
            let r2 = x[0] * x[0] + x[1] * x[1];
            if tau <= 0.0 || tau * tau - r2 < 100.0 * h * h || r2.sqrt() >= tau {
                continue;
            }
            let (dt, dx, dy) = s.node(j * state.phi.nx + i);
            let t = stress_from_derivatives(dt, dx, dy);
            let (lhs, sc) = deformation_contraction(&t, tau, x);
            let rhs = momentum_at(dt, dx, dy, tau, x, Multiplier::X0)?.contraction;
            worst = worst.max((lhs - rhs).abs());
            scale = scale.max(sc);
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::InitialData;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn p0_is_nonnegative_and_time_p0_is_energy(
            dt in prop::array::uniform3(-2.0f64..2.0),
            dx in prop::array::uniform3(-2.0f64..2.0),
            dy in prop::array::uniform3(-2.0f64..2.0),
            frac in 0.0f64..0.99, th in 0.0f64..std::f64::consts::TAU, tau in 0.1f64..2.0, eps in 0.01f64..1.0,
        ) {
            let x = [frac * tau * th.cos(), frac * tau * th.sin()];
            let e = 0.5 * (dt.iter().chain(&dx).chain(&dy).map(|v| v * v).sum::<f64>());
            let t = momentum_at(&dt, &dx, &dy, tau, x, Multiplier::Time).unwrap();
            prop_assert!((t.p0 - e).abs() < 1e-12 * (1.0 + e));
            for m in [Multiplier::X0, Multiplier::XEps(eps)] {
                let v = momentum_at(&dt, &dx, &dy, tau, x, m).unwrap();
                prop_assert!(v.p0 >= 0.0 && v.pl >= 0.0 && v.contraction >= 0.0);
            }
            let st = stress_from_derivatives(&dt, &dx, &dy);
            let (lhs, scale) = deformation_contraction(&st, tau, x);
            let rhs = momentum_at(&dt, &dx, &dy, tau, x, Multiplier::X0).unwrap().contraction;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn shifted_p0_is_comparable_to_energy_early(
            dt in prop::array::uniform3(-2.0f64..2.0),
            dx in prop::array::uniform3(-2.0f64..2.0),
            dy in prop::array::uniform3(-2.0f64..2.0),
            frac in 0.0f64..1.0, th in 0.0f64..std::f64::consts::TAU, tfrac in 0.01f64..1.0,
        ) {
            let eps = 0.05;
            let tau = tfrac * eps;
            let x = [frac * tau * th.cos(), frac * tau * th.sin()];
            let a = momentum_at(&dt, &dx, &dy, tau, x, Multiplier::XEps(eps)).unwrap().p0;
            let b = momentum_at(&dt, &dx, &dy, tau, x, Multiplier::Time).unwrap().p0;
            prop_assume!(b > 1e-9);
            prop_assert!((0.25..=4.0).contains(&(a / b)), "{}", a / b);
        }
    }

    #[test]
    fn x0_outside_the_cone_is_an_error() {
        let z = [0.0; 3];
        assert!(matches!(
            momentum_at(&z, &z, &z, 1.0, [1.0, 0.0], Multiplier::X0),
            Err(FieldError::OutsideCone { .. })
        ));
        assert!(momentum_at(&z, &z, &z, 1.0, [1.0, 0.0], Multiplier::XEps(0.1)).is_ok());
    }

    #[test]
    fn time_multiplier_has_zero_deformation() {
        let s = InitialData::GeodesicBump {
            amplitude: 0.5,
            width: 0.4,
            center: [0.0; 2],
            velocity: 1.0,
        }
        .sample_2d(32, 2.0, 1.0);
        let f = momentum_density(&s, SpacetimePoint::origin(), Multiplier::Time).unwrap();
        assert!(f.contraction.iter().all(|c| *c == 0.0));
        assert!(f.valid.iter().all(|v| *v));
        let g = momentum_density(&s, SpacetimePoint::origin(), Multiplier::X0).unwrap();
        assert!(g.valid.iter().any(|v| !v));
    }

    #[test]
    fn self_similar_field_has_vanishing_x0_derivative() {
        // Φ(t, x) = F(x / t) has t Φ_t + x·∇Φ = 0
        let t = 1.0;
        let f = |y: [f64; 2]| {
            let a = 0.7 * (y[0] + 0.3 * y[1]);
            [a.sin(), 0.0, a.cos()]
        };
        let phi = crate::field::GridField::zeros_square(128, 2.0, 3).from_fn(|p, v| v.copy_from_slice(&f([p[0] / t, p[1] / t])));
        let dphi = phi.zeros_like(3).from_fn(|p, v| {
            // ∂_t F(x / t) = -(x / t²)·∇F
            let a = 0.7 * (p[0] + 0.3 * p[1]) / t;
            let da = -a / t;
            v.copy_from_slice(&[a.cos() * da, 0.0, -a.sin() * da]);
        });
        let s = MapState::new(phi, dphi, t);
        let g = momentum_density(&s, SpacetimePoint::origin(), Multiplier::X0).unwrap();
        let mut m = 0.0f64;
        for j in 0..128 {
            for i in 0..128 {
                let p = s.phi.position(i, j);
                if p[0].hypot(p[1]) <= 0.8 * t {
                    m = m.max(g.contraction[j * 128 + i]);
                }
            }
        }
        // linear phase is exact for the 4th-order stencil up to O(h⁴)
        assert!(m < 1e-6, "{m}");
        let r = contraction_identity_residual(&s, SpacetimePoint::origin()).unwrap();
        assert!(r < 1e-12);
    }
}
