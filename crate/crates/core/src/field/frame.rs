//! Cone-adapted derivatives: the null frame `L = ∂_t + ∂_r`, `L̲ = ∂_t - ∂_r`,
//! `∂̸ = r⁻¹ ∂_θ` and hyperbolic coordinates `t = ρ cosh y`, `r = ρ sinh y`.
//!
//! Everything is relative to an explicit apex; shifted cones and shifted
//! optical functions are obtained by moving the apex or passing an offset.

use serde::{Deserialize, Serialize};

use super::stencil::{periodic_gradient_into, radial_derivative};
use super::{FieldError, GridField, MapState, SpacetimePoint, Topology};

/// Null-frame derivatives of a state relative to a cone apex.
///
/// For radial states the stored scalars are `L u`, `L̲ u` and `k sin(u) / r`,
/// whose squares equal the squared ambient norms of the lifted quantities.
#[derive(Debug, Clone)]
pub struct NullFrameDerivs {
    pub apex: SpacetimePoint,
    pub l: GridField,
    pub lbar: GridField,
    pub slash: GridField,
    /// `false` at nodes with `r ≤ 2h`, where the frame is not evaluated.
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullSample {
    pub l: Vec<f64>,
    pub lbar: Vec<f64>,
    pub slash: Vec<f64>,
}

impl NullFrameDerivs {
    pub fn sample(&self, i: usize, j: usize) -> Result<NullSample, FieldError> {
        if !self.valid[j * self.l.nx + i] {
            return Err(FieldError::ApexOnGrid { i, j });
        }
        Ok(NullSample {
            l: self.l.node(i, j).to_vec(),
            lbar: self.lbar.node(i, j).to_vec(),
            slash: self.slash.node(i, j).to_vec(),
        })
    }

    /// `(|LΦ|², |L̲Φ|², |∂̸Φ|²)` at a node; zeros at invalid nodes.
    pub fn squares(&self, node: usize) -> (f64, f64, f64) {
        if !self.valid[node] {
            return (0.0, 0.0, 0.0);
        }
        let sq = |f: &GridField| f.at(node).iter().map(|x| x * x).sum::<f64>();
        (sq(&self.l), sq(&self.lbar), sq(&self.slash))
    }
}

pub fn null_frame(state: &MapState, apex: SpacetimePoint) -> Result<NullFrameDerivs, FieldError> {
    let phi = &state.phi;
    let h = phi.h;
    let nc = phi.ncomp;
    let mut l = phi.zeros_like(nc);
    let mut lbar = phi.zeros_like(nc);
    let mut slash = phi.zeros_like(nc);
    let mut valid = vec![false; phi.len_nodes()];
    match phi.topology {
        Topology::Periodic => {
            let mut gx = vec![0.0; phi.values.len()];
            let mut gy = vec![0.0; phi.values.len()];
            periodic_gradient_into(phi, &mut gx, &mut gy);
            for j in 0..phi.ny {
                for i in 0..phi.nx {
                    let p = phi.position(i, j);
                    let dx = p[0] - apex.x[0];
                    let dy = p[1] - apex.x[1];
                    let r = dx.hypot(dy);
                    let node = j * phi.nx + i;
                    if r <= 2.0 * h {
                        continue;
                    }
                    valid[node] = true;
                    let (er, et) = ([dx / r, dy / r], [-dy / r, dx / r]);
                    for c in 0..nc {
                        let k = node * nc + c;
                        let dr = er[0] * gx[k] + er[1] * gy[k];
                        let dt = state.dphi.values[k];
                        l.values[k] = dt + dr;
                        lbar.values[k] = dt - dr;
                        slash.values[k] = et[0] * gx[k] + et[1] * gy[k];
                    }
                }
            }
        }
        Topology::Radial { degree } => {
            if apex.x != [0.0, 0.0] {
                return Err(FieldError::Shape(
                    "radial states only admit cones centred at the origin".into(),
                ));
            }
            let ur = radial_derivative(phi);
            for i in 0..phi.nx {
                let r = i as f64 * h;
                if r <= 2.0 * h {
                    continue;
                }
                valid[i] = true;
                let ut = state.dphi.values[i];
                l.values[i] = ut + ur.values[i];
                lbar.values[i] = ut - ur.values[i];
                slash.values[i] = degree as f64 * phi.values[i].sin() / r;
            }
        }
    }
    Ok(NullFrameDerivs {
        apex,
        l,
        lbar,
        slash,
        valid,
    })
}

/// Hyperbolic (CMC) coordinates of a point strictly inside a forward cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypCoords {
    pub rho: f64,
    pub y: f64,
    pub theta: f64,
}

impl HypCoords {
    /// Time since the apex, `ρ cosh y`.
    pub fn t(&self) -> f64 {
        self.rho * self.y.cosh()
    }

    /// Distance from the apex axis, `ρ sinh y`.
    pub fn r(&self) -> f64 {
        self.rho * self.y.sinh()
    }

    /// Optical function `u = t - r = ρ e^{-y}`.
    pub fn u(&self) -> f64 {
        self.rho * (-self.y).exp()
    }

    /// Optical function `v = t + r = ρ e^{y}`.
    pub fn v(&self) -> f64 {
        self.rho * self.y.exp()
    }
}

pub fn to_hyperbolic(t: f64, x: [f64; 2], apex: SpacetimePoint) -> Result<HypCoords, FieldError> {
    let tau = t - apex.t;
    let dx = x[0] - apex.x[0];
    let dy = x[1] - apex.x[1];
    let r = dx.hypot(dy);
    if !(tau > r) {
        return Err(FieldError::OutsideCone { t: tau, r });
    }
    // (τ - r)(τ + r) avoids cancellation near the null boundary
    let (u, v) = (tau - r, tau + r);
    Ok(HypCoords {
        rho: (u * v).sqrt(),
        y: 0.5 * (v / u).ln(),
        theta: dy.atan2(dx),
    })
}

/// Inverse of [`to_hyperbolic`]: returns `(t, x)`.
pub fn from_hyperbolic(c: HypCoords, apex: SpacetimePoint) -> (f64, [f64; 2]) {
    let r = c.r();
    (
        apex.t + c.t(),
        [
            apex.x[0] + r * c.theta.cos(),
            apex.x[1] + r * c.theta.sin(),
        ],
    )
}

/// Optical functions `(u, v) = (τ + shift - r, τ + shift + r)` where `τ` is
/// the time since the apex. A positive shift gives `u_ε, v_ε`.
pub fn optical(tau: f64, r: f64, shift: f64) -> (f64, f64) {
    (tau + shift - r, tau + shift + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::corotational_point;

    #[test]
    fn hyperbolic_examples() {
        let o = SpacetimePoint::origin();
        let c = to_hyperbolic(1.0, [0.0, 0.0], o).unwrap();
        assert!((c.rho - 1.0).abs() < 1e-15 && c.y.abs() < 1e-15);
        let c = to_hyperbolic(1f64.cosh(), [1f64.sinh(), 0.0], o).unwrap();
        assert!((c.rho - 1.0).abs() < 1e-14 && (c.y - 1.0).abs() < 1e-14);
        assert!(matches!(
            to_hyperbolic(1.0, [1.0, 0.0], o),
            Err(FieldError::OutsideCone { .. })
        ));
    }

    #[test]
    fn hyperbolic_round_trip() {
        let apex = SpacetimePoint::new(-0.3, [0.2, -0.1]);
        for &(t, x, y) in &[(1.0, 0.3, 0.4), (2.0, -1.2, 0.9), (0.5, 0.0, 0.1), (7.0, 5.0, 4.0)] {
            let c = to_hyperbolic(t, [x, y], apex).unwrap();
            let (t2, p) = from_hyperbolic(c, apex);
            assert!((t2 - t).abs() <= 1e-12 * t.abs().max(1.0));
            assert!((p[0] - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((p[1] - y).abs() <= 1e-12 * y.abs().max(1.0));
            assert!((c.u() * c.v() - c.rho * c.rho).abs() < 1e-12 * c.rho * c.rho);
        }
    }

    fn lifted(nx: usize, half: f64, f: impl Fn(f64, f64) -> (f64, f64)) -> MapState {
        // f(r, θ) -> (u, u_t)
        let phi = GridField::zeros_square(nx, half, 3).from_fn(|p, v| {
            let (u, _) = f(p[0].hypot(p[1]), p[1].atan2(p[0]));
            v.copy_from_slice(&corotational_point(u, 1, p[1].atan2(p[0])));
        });
        let dphi = GridField::zeros_square(nx, half, 3).from_fn(|p, v| {
            let th = p[1].atan2(p[0]);
            let (u, ut) = f(p[0].hypot(p[1]), th);
            let (s, c) = u.sin_cos();
            v.copy_from_slice(&[c * th.cos() * ut, c * th.sin() * ut, -s * ut]);
        });
        MapState::new(phi, dphi, 0.0)
    }

    #[test]
    fn outgoing_profile_is_annihilated_by_l() {
        // u = g(t - r) at t = 0: u_t = g'(-r), u_r = -g'(-r)
        let g = |s: f64| 0.4 * (-(s + 1.5) * (s + 1.5) * 8.0).exp();
        let dg = |s: f64| -16.0 * (s + 1.5) * g(s);
        let st = lifted(128, 3.0, |r, _| (g(-r), dg(-r)));
        let nf = null_frame(&st, SpacetimePoint::origin()).unwrap();
        let mut lmax: f64 = 0.0;
        let mut lbmax: f64 = 0.0;
        for node in 0..st.phi.len_nodes() {
            let (l2, lb2, _) = nf.squares(node);
            lmax = lmax.max(l2.sqrt());
            lbmax = lbmax.max(lb2.sqrt());
        }
        assert!(lmax < 2e-3 * lbmax, "L = {lmax}, Lbar = {lbmax}");
    }

    #[test]
    fn static_radial_and_angular_profiles() {
        // radial: Φ = f(r) on the meridian, static
        let st = lifted(128, 3.0, |r, _| ((-r * r).exp(), 0.0));
        let nf = null_frame(&st, SpacetimePoint::origin()).unwrap();
        let (i, j) = (96, 64); // x = 1.5, y = 0
        let s = nf.sample(i, j).unwrap();
        let r: f64 = 1.5;
        let fp = -2.0 * r * (-r * r).exp();
        // ambient derivative of (sin u, 0, cos u) along r at θ = 0
        let u = (-r * r).exp();
        let exact = [u.cos() * fp, 0.0, -u.sin() * fp];
        for c in 0..3 {
            assert!((s.l[c] - exact[c]).abs() < 1e-5);
            assert!((s.lbar[c] + exact[c]).abs() < 1e-5);
        }
        // angular: the sphere point depends only on θ through the lift
        let st = lifted(128, 3.0, |_, _| (0.7, 0.0));
        let nf = null_frame(&st, SpacetimePoint::origin()).unwrap();
        let s = nf.sample(i, j).unwrap();
        let slash2: f64 = s.slash.iter().map(|x| x * x).sum();
        assert!((slash2.sqrt() - 0.7f64.sin() / r).abs() < 1e-6);
        assert!(s.l.iter().all(|x| x.abs() < 1e-6));
        assert!(s.lbar.iter().all(|x| x.abs() < 1e-6));
        assert!(matches!(nf.sample(64, 64), Err(FieldError::ApexOnGrid { .. })));
    }

    #[test]
    fn frame_decomposes_energy_density() {
        let st = lifted(128, 3.0, |r, _| ((-r * r).exp() * 1.3, 0.2 * (-r * r).exp()));
        let nf = null_frame(&st, SpacetimePoint::origin()).unwrap();
        let (gx, gy) = crate::field::gradient(&st.phi);
        for node in (0..st.phi.len_nodes()).step_by(97) {
            if !nf.valid[node] {
                continue;
            }
            let sq = |f: &GridField| f.at(node).iter().map(|x| x * x).sum::<f64>();
            let cart = sq(&st.dphi) + sq(&gx) + sq(&gy);
            let (l2, lb2, s2) = nf.squares(node);
            assert!((cart - (0.5 * l2 + 0.5 * lb2 + s2)).abs() < 1e-12 * (1.0 + cart));
        }
    }
}
