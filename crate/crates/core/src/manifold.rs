//! Target-manifold geometry for the extrinsic formulation.
//!
//! A target is a compact submanifold of some ambient `R^N`. Fields store
//! ambient coordinates, so everything the evolution needs is the nearest-point
//! projection, the tangent projection and the second fundamental form
//! `S(p)(X, Y)`, which drives the nonlinearity of the wave-map system.
//!
//! Only the unit sphere `S^2 ⊂ R^3` ships; other targets plug in through the
//! [`Target`] trait.

use std::fmt::Debug;

use thiserror::Error;

/// Default membership tolerance for points accepted as on-manifold.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-12;

/// Distance from the projection's singular set below which projection fails.
pub const SINGULAR_GUARD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("point {0:?} is within {SINGULAR_GUARD:e} of the projection's singular set")]
    SingularProjection(Vec<f64>),
    #[error("unknown target '{0}' (known targets: s2)")]
    UnknownTarget(String),
    #[error("dimension mismatch: target lives in R^{expected}, got a vector of length {got}")]
    Dimension { expected: usize, got: usize },
}

/// An embedded compact target manifold.
///
/// All methods operate on ambient coordinate slices of length
/// [`Target::ambient_dim`] and write into caller-provided buffers so that the
/// per-node loops of the integrator do not allocate.
pub trait Target: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn ambient_dim(&self) -> usize;

    fn tolerance(&self) -> f64;

    /// Euclidean distance from `p` to the manifold.
    fn distance(&self, p: &[f64]) -> f64;

    /// Nearest-point projection onto the manifold.
    fn project_point(&self, p: &[f64], out: &mut [f64]) -> Result<(), ManifoldError>;

    /// Orthogonal projection of `w` onto `T_p M`.
    fn project_tangent(&self, p: &[f64], w: &[f64], out: &mut [f64]);

    /// `S(p)(x, y)`, a normal vector at `p`.
    fn second_fundamental_form(&self, p: &[f64], x: &[f64], y: &[f64], out: &mut [f64]);

    fn contains(&self, p: &[f64]) -> bool {
        self.distance(p) <= self.tolerance()
    }
}

/// The unit sphere `S^2 ⊂ R^3` with outward normal `N(p) = p`.
///
/// With the convention `<S(X,Y), N> = <∂_X N, Y>` the second fundamental form
/// is `S(p)(X, Y) = <X, Y> p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub tolerance: f64,
}

impl Default for Sphere {
    fn default() -> Self {
        Self {
            tolerance: MEMBERSHIP_TOLERANCE,
        }
    }
}

impl Sphere {
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 3], ManifoldError> {
        let mut out = [0.0; 3];
        self.project_point(&p, &mut out)?;
        Ok(out)
    }

    pub fn tangent(&self, p: [f64; 3], w: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.project_tangent(&p, &w, &mut out);
        out
    }

    pub fn sff(&self, p: [f64; 3], x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.second_fundamental_form(&p, &x, &y, &mut out);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Target for Sphere {
    fn name(&self) -> &str {
        "s2"
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn distance(&self, p: &[f64]) -> f64 {
        (norm(p) - 1.0).abs()
    }

    fn project_point(&self, p: &[f64], out: &mut [f64]) -> Result<(), ManifoldError> {
        let n = norm(p);
        if !(n > SINGULAR_GUARD) {
            return Err(ManifoldError::SingularProjection(p.to_vec()));
        }
        for (o, x) in out.iter_mut().zip(p) {
            *o = x / n;
        }
        Ok(())
    }

    fn project_tangent(&self, p: &[f64], w: &[f64], out: &mut [f64]) {
        // p is unit, so the normal component is <w, p> p.
        let c = dot(p, w);
        for ((o, wi), pi) in out.iter_mut().zip(w).zip(p) {
            *o = wi - c * pi;
        }
    }

    fn second_fundamental_form(&self, p: &[f64], x: &[f64], y: &[f64], out: &mut [f64]) {
        let c = dot(x, y);
        for (o, pi) in out.iter_mut().zip(p) {
            *o = c * pi;
        }
    }
}

/// Resolve a target by its configuration name.
pub fn target_by_name(name: &str) -> Result<Box<dyn Target>, ManifoldError> {
    match name {
        "s2" => Ok(Box::new(Sphere::default())),
        other => Err(ManifoldError::UnknownTarget(other.to_string())),
    }
}

/// Lift of a corotational profile value: `(sin u cos kθ, sin u sin kθ, cos u)`.
#[inline]
pub fn corotational_point(u: f64, k: u32, theta: f64) -> [f64; 3] {
    let (s, c) = u.sin_cos();
    let kt = k as f64 * theta;
    [s * kt.cos(), s * kt.sin(), c]
}
