//! Harmonic maps into the sphere: residuals, the ground state `Q`, Lorentz
//! boosts of static maps, and equivariant profiles on the hyperbolic plane.

mod hyperbolic;
mod ode;

pub use hyperbolic::{
    self_similar_point, self_similar_state, selfsimilar_energy_divergence, shoot_hyperbolic,
    DivergenceFit, HyperbolicProfile,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{gradient, stencil::wrap, GridField, MapState};
use crate::manifold::Target;

#[derive(Debug, Error)]
pub enum HarmonicError {
    #[error("scale λ = {scale} is below 4h = {min}")]
    ScaleUnresolvable { scale: f64, min: f64 },
    #[error("boosted slice needs source data at ({t}, {x}, {y}), outside the source")]
    FrameExceedsData { t: f64, x: f64, y: f64 },
    #[error("no bounded profile: {0}")]
    NoBoundedProfile(String),
    #[error("boost speed {0} must be below 1")]
    Superluminal(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Sampling grid for a static map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Periodic `[-L, L)²` with `nx²` nodes.
    Square { nx: usize, half_width: f64 },
    /// Radial `r = i h`, `h = r_max / nx`, degree-1 corotational.
    Radial { nx: usize, r_max: f64 },
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        match *self {
            GridSpec::Square { nx, half_width } => 2.0 * half_width / nx as f64,
            GridSpec::Radial { nx, r_max } => r_max / nx as f64,
        }
    }
}

/// `Q(x) = (2λx, 2λy, λ² - r²) / (λ² + r²)`: inverse stereographic projection,
/// i.e. the corotational map with `u = 2 arctan(r / λ)`.
pub fn q_point(x: [f64; 2], scale: f64) -> [f64; 3] {
    let d = scale * scale + x[0] * x[0] + x[1] * x[1];
    [
        2.0 * scale * x[0] / d,
        2.0 * scale * x[1] / d,
        (scale * scale - x[0] * x[0] - x[1] * x[1]) / d,
    ]
}

/// `(∂_xQ, ∂_yQ)` at `x`.
pub fn q_jacobian(x: [f64; 2], scale: f64) -> ([f64; 3], [f64; 3]) {
    let l = scale;
    let d = l * l + x[0] * x[0] + x[1] * x[1];
    let d2 = d * d;
    let dx = [
        2.0 * l / d - 4.0 * l * x[0] * x[0] / d2,
        -4.0 * l * x[0] * x[1] / d2,
        -4.0 * l * l * x[0] / d2,
    ];
    let dy = [
        -4.0 * l * x[0] * x[1] / d2,
        2.0 * l / d - 4.0 * l * x[1] * x[1] / d2,
        -4.0 * l * l * x[1] / d2,
    ];
    (dx, dy)
}

/// Value and first derivatives of a spacetime map at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: [f64; 3],
    pub dt: [f64; 3],
    pub dx: [f64; 3],
    pub dy: [f64; 3],
}

/// A map on (part of) Minkowski space that can be sampled with derivatives.
pub trait SpacetimeSource {
    fn jet(&self, t: f64, x: [f64; 2]) -> Option<Jet>;
}

/// Static `Q` at scale `λ` centred at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticQ {
    pub scale: f64,
    pub center: [f64; 2],
}

impl SpacetimeSource for StaticQ {
    fn jet(&self, _t: f64, x: [f64; 2]) -> Option<Jet> {
        let y = [x[0] - self.center[0], x[1] - self.center[1]];
        let (dx, dy) = q_jacobian(y, self.scale);
        Some(Jet {
            value: q_point(y, self.scale),
            dt: [0.0; 3],
            dx,
            dy,
        })
    }
}

/// A sampled static map; derivatives from the 4th-order stencil, values off
/// the nodes by cubic interpolation. Points outside the grid are rejected.
pub struct StaticSampled {
    phi: GridField,
    gx: GridField,
    gy: GridField,
}

impl StaticSampled {
    pub fn new(phi: GridField) -> Self {
        let (gx, gy) = gradient(&phi);
        Self { phi, gx, gy }
    }
}

impl SpacetimeSource for StaticSampled {
    fn jet(&self, _t: f64, x: [f64; 2]) -> Option<Jet> {
        let p = self.phi.period();
        let o = self.phi.origin;
        if x[0] < o[0] || x[1] < o[1] || x[0] > o[0] + p[0] || x[1] > o[1] + p[1] {
            return None;
        }
        let mut j = Jet::default();
        self.phi.interpolate(x, &mut j.value);
        self.gx.interpolate(x, &mut j.dx);
        self.gy.interpolate(x, &mut j.dy);
        Some(j)
    }
}

/// Lorentz boost with velocity `v` (|v| < 1): `Φ_v(t, x) = Φ(t', x')` where
/// `t' = γ(t - v·x)` and `x' = x + (γ - 1)(x·n)n - γ t v`, `n = v / |v|`.
///
/// Returns `(Φ_v, ∂_tΦ_v)` at the spacetime point `(t, x)`.
pub fn boost_jet(src: &dyn SpacetimeSource, t: f64, x: [f64; 2], v: [f64; 2]) -> Result<([f64; 3], [f64; 3]), HarmonicError> {
    let beta = v[0].hypot(v[1]);
    if beta >= 1.0 {
        return Err(HarmonicError::Superluminal(beta));
    }
    let n = if beta > 0.0 { [v[0] / beta, v[1] / beta] } else { [1.0, 0.0] };
    let g = 1.0 / (1.0 - beta * beta).sqrt();
    let xn = x[0] * n[0] + x[1] * n[1];
    let tp = g * (t - beta * xn);
    let shift = (g - 1.0) * xn - g * beta * t;
    let xp = [x[0] + shift * n[0], x[1] + shift * n[1]];
    let j = src.jet(tp, xp).ok_or(HarmonicError::FrameExceedsData {
        t: tp,
        x: xp[0],
        y: xp[1],
    })?;
    let mut dt = [0.0; 3];
    for c in 0..3 {
        dt[c] = g * j.dt[c] - g * beta * (n[0] * j.dx[c] + n[1] * j.dy[c]);
    }
    Ok((j.value, dt))
}

/// Boosted `Q` at time `t`: `(Φ, ∂_tΦ)`.
pub fn boosted_q(x: [f64; 2], t: f64, scale: f64, v: [f64; 2]) -> ([f64; 3], [f64; 3]) {
    boost_jet(
        &StaticQ {
            scale,
            center: [0.0; 2],
        },
        t,
        x,
        v,
    )
    .expect("static Q is defined everywhere and speeds are validated by callers")
}

/// Sample the boosted source on a periodic square at time `t`.
pub fn lorentz_boost(
    src: &dyn SpacetimeSource,
    v: [f64; 2],
    nx: usize,
    half_width: f64,
    t: f64,
) -> Result<MapState, HarmonicError> {
    let mut phi = GridField::zeros_square(nx, half_width, 3);
    let mut dphi = phi.clone();
    for j in 0..nx {
        for i in 0..nx {
            let (p, w) = boost_jet(src, t, phi.position(i, j), v)?;
            phi.node_mut(i, j).copy_from_slice(&p);
            dphi.node_mut(i, j).copy_from_slice(&w);
        }
    }
    Ok(MapState::new(phi, dphi, t))
}

/// Static `Q` at scale `λ` (`λ ≥ 4h`), with zero velocity.
pub fn make_q(scale: f64, grid: GridSpec) -> Result<MapState, HarmonicError> {
    let h = grid.spacing();
    if !(scale >= 4.0 * h) {
        return Err(HarmonicError::ScaleUnresolvable { scale, min: 4.0 * h });
    }
    let phi = match grid {
        GridSpec::Square { nx, half_width } => {
            GridField::zeros_square(nx, half_width, 3).from_fn(|p, v| v.copy_from_slice(&q_point(p, scale)))
        }
        GridSpec::Radial { nx, .. } => {
            GridField::zeros_radial(nx, h, 1).from_fn(|p, v| v[0] = 2.0 * (p[0] / scale).atan())
        }
    };
    let dphi = phi.zeros_like(phi.ncomp);
    Ok(MapState::new(phi, dphi, 0.0))
}

/// Tension field `ΔΦ + Σ_i S(Φ)(∂_iΦ, ∂_iΦ)` with second-order stencils
/// (5-point Laplacian, central first differences).
///
/// Returns the per-node residual vectors and their max norm over nodes at least
/// `margin` nodes from every edge.
pub fn harmonic_residual(phi: &GridField, target: &dyn Target, margin: usize) -> (GridField, f64) {
    let (nx, ny, nc) = (phi.nx, phi.ny, phi.ncomp);
    let h = phi.h;
    let mut out = phi.zeros_like(nc);
    let mut s = vec![0.0; nc];
    let mut gx = vec![0.0; nc];
    let mut gy = vec![0.0; nc];
    let mut worst: f64 = 0.0;
    let v = &phi.values;
    for j in 0..ny {
        let (jm, jp) = (wrap(j as isize - 1, ny), wrap(j as isize + 1, ny));
        for i in 0..nx {
            let (im, ip) = (wrap(i as isize - 1, nx), wrap(i as isize + 1, nx));
            let k = (j * nx + i) * nc;
            let at = |ii: usize, jj: usize, c: usize| v[(jj * nx + ii) * nc + c];
            for c in 0..nc {
                out.values[k + c] = (at(ip, j, c) + at(im, j, c) + at(i, jp, c) + at(i, jm, c) - 4.0 * v[k + c]) / (h * h);
                gx[c] = (at(ip, j, c) - at(im, j, c)) / (2.0 * h);
                gy[c] = (at(i, jp, c) - at(i, jm, c)) / (2.0 * h);
            }
            let p = &v[k..k + nc];
            target.second_fundamental_form(p, &gx, &gx, &mut s);
            for c in 0..nc {
                out.values[k + c] += s[c];
            }
            target.second_fundamental_form(p, &gy, &gy, &mut s);
            for c in 0..nc {
                out.values[k + c] += s[c];
            }
            if i >= margin && j >= margin && i + margin < nx && j + margin < ny {
                let n: f64 = out.values[k..k + nc].iter().map(|x| x * x).sum::<f64>().sqrt();
                worst = worst.max(n);
            }
        }
    }
    (out, worst)
}
