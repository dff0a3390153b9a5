//! Sampled fields on uniform grids.
//!
//! Two layouts are supported. The full 2D problem lives on a uniform periodic
//! grid with node `(i, j)` at `origin + h (i, j)`. Corotational runs store the
//! scalar profile `u(r)` on a radial grid with node `i` at `r = i h`; the lifted
//! map is `(sin u cos kθ, sin u sin kθ, cos u)`.
//!
//! Values are stored node-major: component `c` of node `(i, j)` sits at
//! `(j * nx + i) * ncomp + c`.

mod frame;
mod snapshot;
pub(crate) mod stencil;

pub use frame::{
    from_hyperbolic, null_frame, optical, to_hyperbolic, HypCoords, NullFrameDerivs, NullSample,
};
pub use snapshot::{read_snapshot, snapshot_file_name, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use stencil::{
    check_resolution, gradient, gradient_checked, laplacian, radial_derivative,
    radial_second_derivative, D1, D2,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::Target;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid {nx}x{ny} is too small (need at least 16 nodes per axis)")]
    TooSmall { nx: usize, ny: usize },
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("non-finite value at node {node}, component {comp}")]
    NonFinite { node: usize, comp: usize },
    #[error("field is under-resolved: {fraction:.3e} of its variance sits at the Nyquist frequency along {axis}")]
    UnderResolved { axis: char, fraction: f64 },
    #[error("node ({i}, {j}) is within 2h of the cone apex; null-frame values are undefined there")]
    ApexOnGrid { i: usize, j: usize },
    #[error("point (t = {t}, r = {r}) is not strictly inside the cone")]
    OutsideCone { t: f64, r: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("state violates the manifold constraint: {0}")]
    Constraint(String),
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file: {0}")]
    BadSnapshot(String),
}

/// Grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Uniform 2D grid with periodic wrap in both directions.
    Periodic,
    /// Radial half-line `r = i h` carrying a corotational profile of the given degree.
    Radial { degree: u32 },
}

impl Topology {
    /// Equivariance degree, `0` for the full 2D problem.
    pub fn degree(&self) -> u32 {
        match self {
            Topology::Periodic => 0,
            Topology::Radial { degree } => *degree,
        }
    }

    pub fn from_degree(degree: u32) -> Self {
        if degree == 0 {
            Topology::Periodic
        } else {
            Topology::Radial { degree }
        }
    }
}

/// A point of Minkowski space `R^{2+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: [f64; 2],
}

impl SpacetimePoint {
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        Self { t, x }
    }

    pub fn origin() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub nx: usize,
    pub ny: usize,
    pub ncomp: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub topology: Topology,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros_periodic(nx: usize, ny: usize, ncomp: usize, h: f64, origin: [f64; 2]) -> Self {
        Self {
            nx,
            ny,
            ncomp,
            h,
            origin,
            topology: Topology::Periodic,
            values: vec![0.0; nx * ny * ncomp],
        }
    }

    /// Square periodic grid covering `[-half_width, half_width)^2`.
    pub fn zeros_square(nx: usize, half_width: f64, ncomp: usize) -> Self {
        let h = 2.0 * half_width / nx as f64;
        Self::zeros_periodic(nx, nx, ncomp, h, [-half_width, -half_width])
    }

    pub fn zeros_radial(n: usize, h: f64, degree: u32) -> Self {
        Self {
            nx: n,
            ny: 1,
            ncomp: 1,
            h,
            origin: [0.0, 0.0],
            topology: Topology::Radial { degree },
            values: vec![0.0; n],
        }
    }

    /// Same grid, fresh zero values with `ncomp` components.
    pub fn zeros_like(&self, ncomp: usize) -> Self {
        Self {
            ncomp,
            values: vec![0.0; self.nx * self.ny * ncomp],
            ..self.clone()
        }
    }

    /// Sample a function of the node position. For radial grids `f` receives `[r, 0]`.
    pub fn from_fn(mut self, mut f: impl FnMut([f64; 2], &mut [f64])) -> Self {
        let nc = self.ncomp;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.position(i, j);
                let k = (j * self.nx + i) * nc;
                f(p, &mut self.values[k..k + nc]);
            }
        }
        self
    }

    #[inline]
    pub fn len_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let k = (j * self.nx + i) * self.ncomp;
        &self.values[k..k + self.ncomp]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = (j * self.nx + i) * self.ncomp;
        &mut self.values[k..k + self.ncomp]
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.topology, Topology::Radial { .. })
    }

    /// Period lengths `(nx h, ny h)` of a periodic grid.
    pub fn period(&self) -> [f64; 2] {
        [self.nx as f64 * self.h, self.ny as f64 * self.h]
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.h == other.h
            && self.origin == other.origin
            && self.topology == other.topology
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        match self.topology {
            Topology::Periodic => {
                if self.nx < 16 || self.ny < 16 {
                    return Err(FieldError::TooSmall {
                        nx: self.nx,
                        ny: self.ny,
                    });
                }
            }
            Topology::Radial { .. } => {
                if self.nx < 16 || self.ny != 1 || self.ncomp != 1 {
                    return Err(FieldError::TooSmall {
                        nx: self.nx,
                        ny: self.ny,
                    });
                }
            }
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(FieldError::BadSpacing(self.h));
        }
        if self.values.len() != self.nx * self.ny * self.ncomp {
            return Err(FieldError::Shape(format!(
                "{} values for {}x{}x{}",
                self.values.len(),
                self.nx,
                self.ny,
                self.ncomp
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite {
                node: k / self.ncomp,
                comp: k % self.ncomp,
            });
        }
        Ok(())
    }

    /// Max over nodes of the Euclidean norm of the node vector.
    pub fn max_norm(&self) -> f64 {
        self.values
            .chunks_exact(self.ncomp)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Per-node Euclidean norms.
    pub fn node_norms(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.ncomp)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Cubic interpolation at an arbitrary point.
    ///
    /// Periodic grids wrap; radial grids use the parity of the corotational
    /// profile at the origin and clamp at the outer edge.
    pub fn interpolate(&self, x: [f64; 2], out: &mut [f64]) {
        stencil::interpolate(self, x, out)
    }
}

/// One time slice `(Φ, ∂_tΦ)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapState {
    pub phi: GridField,
    pub dphi: GridField,
    pub t: f64,
}

impl MapState {
    pub fn new(phi: GridField, dphi: GridField, t: f64) -> Self {
        Self { phi, dphi, t }
    }

    pub fn topology(&self) -> Topology {
        self.phi.topology
    }

    pub fn h(&self) -> f64 {
        self.phi.h
    }

    /// Check finiteness, shapes, and (for 2D states) the manifold constraints
    /// `dist(Φ, M) ≤ 1e-9` and `|normal part of ∂_tΦ| ≤ 1e-9 (1 + |∂_tΦ|)`.
    pub fn validate(&self, target: &dyn Target) -> Result<(), FieldError> {
        self.phi.validate()?;
        self.dphi.validate()?;
        if !self.phi.same_grid(&self.dphi) || self.phi.ncomp != self.dphi.ncomp {
            return Err(FieldError::Shape("phi and dphi grids differ".into()));
        }
        if self.phi.is_radial() {
            return Ok(());
        }
        if self.phi.ncomp != target.ambient_dim() {
            return Err(FieldError::Shape(format!(
                "field has {} components, target '{}' lives in R^{}",
                self.phi.ncomp,
                target.name(),
                target.ambient_dim()
            )));
        }
        let (dist, normal) = self.constraint_violation(target);
        if dist > 1e-9 {
            return Err(FieldError::Constraint(format!(
                "max distance to target {dist:.3e} > 1e-9"
            )));
        }
        if normal > 1e-9 {
            return Err(FieldError::Constraint(format!(
                "max relative normal velocity {normal:.3e} > 1e-9"
            )));
        }
        Ok(())
    }

    /// `(max dist(Φ, M), max |N ∂_tΦ| / (1 + |∂_tΦ|))` over nodes.
    pub fn constraint_violation(&self, target: &dyn Target) -> (f64, f64) {
        if self.phi.is_radial() {
            return (0.0, 0.0);
        }
        let nc = self.phi.ncomp;
        let mut tan = vec![0.0; nc];
        let mut dist: f64 = 0.0;
        let mut normal: f64 = 0.0;
        for (p, w) in self
            .phi
            .values
            .chunks_exact(nc)
            .zip(self.dphi.values.chunks_exact(nc))
        {
            dist = dist.max(target.distance(p));
            target.project_tangent(p, w, &mut tan);
            let nw: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nn: f64 = w
                .iter()
                .zip(&tan)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            normal = normal.max(nn / (1.0 + nw));
        }
        (dist, normal)
    }

    /// Constant map `p` with zero velocity.
    pub fn constant(nx: usize, half_width: f64, p: &[f64], t: f64) -> Self {
        let nc = p.len();
        let phi = GridField::zeros_square(nx, half_width, nc).from_fn(|_, v| v.copy_from_slice(p));
        let dphi = phi.zeros_like(nc);
        Self { phi, dphi, t }
    }
}

/// Sum in a fixed pairwise order; results are bit-reproducible for a given length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
