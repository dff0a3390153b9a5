use serde::{Deserialize, Serialize};

use super::{EvolveError, RunConfig};
use crate::field::{GridField, MapState};
use crate::harmonic;
use crate::manifold::corotational_point;

/// `r ↦ (u₀(r), u₁(r))`.
pub type RadialProfile<'a> = Box<dyn Fn(f64) -> (f64, f64) + 'a>;

/// Direction of travel for a ring pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    Outgoing,
    Incoming,
}

/// Initial-data families.
///
/// Corotational families (`arctan_bump`, `harmonic_q` with zero velocity) work
/// on both grids; on a 2D grid they are lifted with degree 1 unless the run
/// itself is equivariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Constant map with zero velocity.
    Constant { point: [f64; 3] },
    /// `u₀(r) = A · 2 arctan(r / λ) · exp(-(r / cutoff)²)`, `u₁ = velocity · r u₀'(r)`.
    ArctanBump {
        amplitude: f64,
        scale: f64,
        cutoff: f64,
        #[serde(default)]
        velocity: f64,
    },
    /// Geodesic bump `Φ = (sin a, 0, cos a)` with `a = A exp(-|x - c|² / w²)` and
    /// `∂_t a = velocity · a`.
    GeodesicBump {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        velocity: f64,
    },
    /// Annular geodesic pulse `a = A exp(-(|x - c| - R)² / w²)` moving radially.
    RingPulse {
        amplitude: f64,
        radius: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 2],
        direction: Propagation,
    },
    /// Harmonic map `u = 2 arctan((r / λ)^k)`, optionally Lorentz-boosted (2D only).
    HarmonicQ {
        scale: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        velocity: [f64; 2],
    },
}

impl InitialData {
    pub(crate) fn check_degree(&self, degree: u32) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        match self {
            InitialData::GeodesicBump { .. } | InitialData::RingPulse { .. } if degree > 0 => {
                bad("geodesic and ring data are not corotational; use degree = 0")
            }
            InitialData::Constant { .. } if degree > 0 => {
                bad("constant data is not corotational; use degree = 0")
            }
            InitialData::HarmonicQ { velocity, center, .. }
                if degree > 0 && (*velocity != [0.0; 2] || *center != [0.0; 2]) =>
            {
                bad("boosted or shifted Q needs degree = 0")
            }
            InitialData::HarmonicQ { velocity, .. } if velocity[0].hypot(velocity[1]) >= 1.0 => {
                bad("boost speed must be below 1")
            }
            InitialData::ArctanBump { scale, cutoff, .. } if !(*scale > 0.0 && *cutoff > 0.0) => {
                bad("scale and cutoff must be positive")
            }
            InitialData::Constant { point } if {
                let n = point.iter().map(|x| x * x).sum::<f64>().sqrt();
                (n - 1.0).abs() > 1e-12
            } =>
            {
                bad("constant point must lie on the unit sphere")
            }
            _ => Ok(()),
        }
    }

    /// Corotational profile `(u₀(r), u₁(r))`, if this family has one.
    pub fn profile(&self, degree: u32) -> Option<RadialProfile<'_>> {
        match *self {
            InitialData::ArctanBump {
                amplitude,
                scale,
                cutoff,
                velocity,
            } => Some(Box::new(move |r: f64| {
                let chi = (-(r / cutoff).powi(2)).exp();
                let a = 2.0 * (r / scale).atan();
                let u = amplitude * a * chi;
                let da = 2.0 * scale / (scale * scale + r * r);
                let du = amplitude * (da * chi - a * chi * 2.0 * r / (cutoff * cutoff));
                (u, velocity * r * du)
            })),
            InitialData::HarmonicQ { scale, .. } => {
                let k = degree.max(1) as i32;
                Some(Box::new(move |r: f64| (2.0 * (r / scale).powi(k).atan(), 0.0)))
            }
            _ => None,
        }
    }

    pub(crate) fn build(&self, c: &RunConfig) -> Result<MapState, EvolveError> {
        self.check_degree(c.degree)?;
        if c.degree > 0 {
            let h = c.spacing();
            let prof = self.profile(c.degree).expect("checked by check_degree");
            let mut dphi = GridField::zeros_radial(c.nx, h, c.degree);
            let phi = GridField::zeros_radial(c.nx, h, c.degree).from_fn(|p, v| {
                let (u, _) = prof(p[0]);
                v[0] = u;
            });
            for (i, v) in dphi.values.iter_mut().enumerate() {
                *v = prof(i as f64 * h).1;
            }
            return Ok(MapState::new(phi, dphi, c.t_start));
        }
        Ok(self.sample_2d(c.nx, c.half_width, c.t_start))
    }

    /// Sample on the periodic square `[-L, L)²`.
    pub fn sample_2d(&self, nx: usize, half_width: f64, t: f64) -> MapState {
        let grid = GridField::zeros_square(nx, half_width, 3);
        let mut dphi = grid.zeros_like(3);
        let mut phi = grid;
        for j in 0..nx {
            for i in 0..nx {
                let x = phi.position(i, j);
                let (p, w) = self.point_2d(x);
                phi.node_mut(i, j).copy_from_slice(&p);
                dphi.node_mut(i, j).copy_from_slice(&w);
            }
        }
        MapState::new(phi, dphi, t)
    }

    /// `(Φ, ∂_tΦ)` at a point of the plane.
    pub fn point_2d(&self, x: [f64; 2]) -> ([f64; 3], [f64; 3]) {
        let geodesic = |a: f64, at: f64| {
            let (s, c) = a.sin_cos();
            ([s, 0.0, c], [at * c, 0.0, -at * s])
        };
        match *self {
            InitialData::Constant { point } => (point, [0.0; 3]),
            InitialData::GeodesicBump {
                amplitude,
                width,
                center,
                velocity,
            } => {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                let a = amplitude * (-d2 / (width * width)).exp();
                geodesic(a, velocity * a)
            }
            InitialData::RingPulse {
                amplitude,
                radius,
                width,
                center,
                direction,
            } => {
                let r = (x[0] - center[0]).hypot(x[1] - center[1]);
                let s = (r - radius) / width;
                let a = amplitude * (-s * s).exp();
                let da = -2.0 * s / width * a;
                let sign = match direction {
                    Propagation::Outgoing => -1.0,
                    Propagation::Incoming => 1.0,
                };
                geodesic(a, sign * da)
            }
            InitialData::HarmonicQ {
                scale,
                center,
                velocity,
            } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                harmonic::boosted_q(y, 0.0, scale, velocity)
            }
            InitialData::ArctanBump { .. } => {
                let prof = self.profile(1).unwrap();
                let r = x[0].hypot(x[1]);
                let theta = x[1].atan2(x[0]);
                let (u, ut) = prof(r);
                let p = corotational_point(u, 1, theta);
                let (s, c) = u.sin_cos();
                let (st, ct) = theta.sin_cos();
                (p, [ut * c * ct, ut * c * st, -ut * s])
            }
        }
    }
}
