//! Algebraic identity suite on random smooth maps into `S²`.
//!
//! Each random map is `Φ = w / |w|` with `w` a trigonometric polynomial on the
//! `2π`-periodic square, and velocity the tangent projection of a second one.
//! All derivatives are known in closed form, so stencil errors can be measured
//! against exact values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diagnostics::{contraction_identity_residual, stress, stress_null_components, DiagnosticsError};
use crate::field::{null_frame, GridField, MapState, SpacetimePoint};
use crate::spectral::{DyadicBand, LittlewoodPaley, SpectralError};

#[derive(Debug, Clone)]
struct Mode {
    k: [f64; 2],
    a: [f64; 3],
    b: [f64; 3],
    va: [f64; 3],
    vb: [f64; 3],
}

/// Smooth map `T² → S²` with exact derivatives.
#[derive(Debug, Clone)]
pub struct RandomMap {
    base: [f64; 3],
    modes: Vec<Mode>,
}

/// `(Φ, ∂_tΦ, ∂_xΦ, ∂_yΦ)` at one point.
pub type Jet = ([f64; 3], [f64; 3], [f64; 3], [f64; 3]);

impl RandomMap {
    /// Wavevectors with integer components and `2 ≤ |k| ≤ k_max`.
    pub fn sample(rng: &mut impl Rng, n_modes: usize, k_max: f64) -> Self {
        let mut unit = || {
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            v
        };
        let base = unit();
        let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt().max(0.1);
        let base = base.map(|x| 3.0 * x / norm);
        let mut modes = Vec::with_capacity(n_modes);
        let amp = 1.0 / n_modes as f64;
        while modes.len() < n_modes {
            let k = [rng.gen_range(-4i32..=4) as f64, rng.gen_range(-4i32..=4) as f64];
            let m = k[0].hypot(k[1]);
            if !(2.0..=k_max).contains(&m) {
                continue;
            }
            let scale = |v: [f64; 3]| v.map(|x| amp * x / 3f64.sqrt());
            modes.push(Mode {
                k,
                a: scale(unit_vec(rng)),
                b: scale(unit_vec(rng)),
                va: scale(unit_vec(rng)),
                vb: scale(unit_vec(rng)),
            });
        }
        Self { base, modes }
    }

    pub fn jet(&self, x: [f64; 2]) -> Jet {
        let mut w = self.base;
        let mut v = [0.0; 3];
        let mut wx = [0.0; 3];
        let mut wy = [0.0; 3];
        for m in &self.modes {
            let (s, c) = (m.k[0] * x[0] + m.k[1] * x[1]).sin_cos();
            for i in 0..3 {
                w[i] += m.a[i] * c + m.b[i] * s;
                v[i] += m.va[i] * c + m.vb[i] * s;
                let d = -m.a[i] * s + m.b[i] * c;
                wx[i] += m.k[0] * d;
                wy[i] += m.k[1] * d;
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p = w.map(|x| x / n);
        let tangent = |d: [f64; 3]| {
            let pd = p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
            std::array::from_fn(|i| (d[i] - pd * p[i]) / n)
        };
        // w_t = v
        (p, tangent(v), tangent(wx), tangent(wy))
    }

    pub fn state(&self, nx: usize, t: f64) -> MapState {
        let mut phi = GridField::zeros_square(nx, PI, 3);
        let mut dphi = phi.clone();
        for j in 0..nx {
            for i in 0..nx {
                let (p, pt, _, _) = self.jet(phi.position(i, j));
                phi.node_mut(i, j).copy_from_slice(&p);
                dphi.node_mut(i, j).copy_from_slice(&pt);
            }
        }
        MapState::new(phi, dphi, t)
    }
}

fn unit_vec(rng: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityConfig {
    pub fields: usize,
    pub seed: u64,
    pub modes: usize,
    /// Grids for the null-frame refinement study.
    pub levels: Vec<usize>,
    pub contraction_tol: f64,
    /// Accepted range for the error ratio per grid halving.
    pub order_ratio: (f64, f64),
    pub partition_tol: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            fields: 100,
            seed: 20240917,
            modes: 4,
            levels: vec![64, 128, 256],
            contraction_tol: 1e-12,
            order_ratio: (12.0, 20.0),
            partition_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// Worst relative residual of `½T·π^{(X₀)} = ρ⁻¹|X₀Φ|²`.
    pub contraction: f64,
    /// Per level: worst error of `T(L,L), T(L,L̲), T(L̲,L̲)` against the exact
    /// `|LΦ|², |∂̸Φ|², |L̲Φ|²`, relative to the largest exact value.
    pub null_frame_errors: Vec<f64>,
    pub null_frame_ratios: Vec<f64>,
    /// `max |Σ_k P_k f - (f - mean)|` over band-limited random fields, plus the
    /// symbol-level partition defect.
    pub partition: f64,
    pub contraction_pass: bool,
    pub null_frame_pass: bool,
    pub partition_pass: bool,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.contraction_pass && self.null_frame_pass && self.partition_pass
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
}

fn null_frame_error(map: &RandomMap, nx: usize, apex: SpacetimePoint, t: f64) -> Result<f64, VerifyError> {
    let s = map.state(nx, t);
    let st = stress(&s)?;
    let frame = null_frame(&s, apex)?;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for j in 0..nx {
        for i in 0..nx {
            let node = j * nx + i;
            if !frame.valid[node] {
                continue;
            }
            let x = s.phi.position(i, j);
            let d = [x[0] - apex.x[0], x[1] - apex.x[1]];
            let r = d[0].hypot(d[1]);
            let (er, et) = ([d[0] / r, d[1] / r], [-d[1] / r, d[0] / r]);
            let (_, pt, px, py) = map.jet(x);
            let mut exact = [0.0; 3];
            for c in 0..3 {
                let dr = er[0] * px[c] + er[1] * py[c];
                let da = et[0] * px[c] + et[1] * py[c];
                exact[0] += (pt[c] + dr).powi(2);
                exact[1] += (pt[c] - dr).powi(2);
                exact[2] += da * da;
            }
            let (ll, lblb, llb) = stress_null_components(&st.t[node], d[1].atan2(d[0]));
            for (num, ex) in [(ll, exact[0]), (lblb, exact[1]), (llb, exact[2])] {
                err = err.max((num - ex).abs());
                scale = scale.max(ex.abs());
            }
        }
    }
    Ok(if scale > 0.0 { err / scale } else { err })
}

fn partition_defect(rng: &mut impl Rng) -> Result<f64, VerifyError> {
    let n = 128;
    let grid = GridField::zeros_periodic(n, n, 1, 2.0 * PI / n as f64, [-PI, -PI]);
    let lp = LittlewoodPaley::new(&grid)?;
    let (a, b) = lp.range();
    let lo = 2f64.powi(a);
    let hi = 2f64.powi(b);
    let mut modes = Vec::new();
    while modes.len() < 6 {
        let k = [rng.gen_range(-40i32..=40) as f64, rng.gen_range(-40i32..=40) as f64];
        let m = k[0].hypot(k[1]);
        if m >= lo && m <= hi {
            modes.push((k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)));
        }
    }
    let mean = rng.gen_range(-1.0..1.0);
    let f = grid.from_fn(|x, v| {
        v[0] = mean + modes.iter().map(|(k, c, ph)| c * (k[0] * x[0] + k[1] * x[1] + ph).cos()).sum::<f64>();
    });
    let mut sum = vec![0.0; f.values.len()];
    for k in a..=b {
        for (s, v) in sum.iter_mut().zip(&lp.project(&f, k)?.values) {
            *s += v;
        }
    }
    let mut worst = sum.iter().zip(&f.values).fold(0.0f64, |m, (s, v)| m.max((s - (v - mean)).abs()));
    for _ in 0..64 {
        let xi = (rng.gen_range(lo.ln()..hi.ln())).exp();
        let total: f64 = (a - 1..=b + 1).map(|k| DyadicBand::new(k).symbol(xi)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok(worst)
}

pub fn identity_suite(cfg: &IdentityConfig) -> Result<IdentityReport, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut contraction: f64 = 0.0;
    let mut errs = vec![0.0f64; cfg.levels.len()];
    let mut partition: f64 = 0.0;
    for _ in 0..cfg.fields {
        let map = RandomMap::sample(&mut rng, cfg.modes, 4.0);
        let apex = SpacetimePoint::new(rng.gen_range(-0.5..0.0), [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
        let t = 1.5;
        contraction = contraction.max(contraction_identity_residual(&map.state(cfg.levels[0], t), apex)?);
        for (e, &nx) in errs.iter_mut().zip(&cfg.levels) {
            *e = e.max(null_frame_error(&map, nx, apex, t)?);
        }
        partition = partition.max(partition_defect(&mut rng)?);
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(IdentityReport {
        contraction,
        null_frame_pass: !ratios.is_empty()
            && ratios.iter().all(|r| *r >= cfg.order_ratio.0 && *r <= cfg.order_ratio.1),
        null_frame_errors: errs,
        null_frame_ratios: ratios,
        partition,
        contraction_pass: contraction <= cfg.contraction_tol,
        partition_pass: partition <= cfg.partition_tol,
    })
}
