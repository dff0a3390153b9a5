//! Corotational harmonic maps from the hyperbolic plane and the self-similar
//! wave maps they generate.
//!
//! With `t = ρ cosh y`, `r = ρ sinh y`, a map `Φ = (sin ψ(y) cos kθ, sin ψ(y) sin kθ, cos ψ(y))`
//! is a wave map inside the cone iff `ψ'' + coth(y) ψ' = k² sin(2ψ) / (2 sinh² y)`.

use std::f64::consts::PI;

use super::ode::{dopri, Trajectory};
use super::HarmonicError;
use crate::field::{GridField, MapState};

/// Series start point.
pub const Y_START: f64 = 1e-4;
/// Largest supported `y_max`.
pub const Y_MAX_LIMIT: f64 = 20.0;
const ODE_TOL: f64 = 1e-10;
const BISECTIONS: usize = 60;

/// Solution of the hyperbolic corotational equation with `ψ ~ s y^k` at the origin.
///
/// Alongside `(ψ, ψ')` the integrator carries the cumulative cone-section energy
/// at `t = 1` and the cumulative weighted hyperbolic energy, both as functions of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicProfile {
    pub k: u32,
    pub slope: f64,
    pub y_max: f64,
    traj: Trajectory<4>,
}

impl HyperbolicProfile {
    /// Integrate from the series at [`Y_START`] to `y_max` for a given slope.
    pub fn integrate(k: u32, slope: f64, y_max: f64) -> Result<Self, HarmonicError> {
        if k == 0 {
            return Err(HarmonicError::InvalidArgument("degree must be at least 1".into()));
        }
        if !(y_max > Y_START && y_max <= Y_MAX_LIMIT) {
            return Err(HarmonicError::InvalidArgument(format!(
                "y_max must lie in ({Y_START}, {Y_MAX_LIMIT}], got {y_max}"
            )));
        }
        let kf = k as f64;
        let y0 = Y_START;
        let (psi0, dpsi0) = series(k, slope, y0);
        let e0 = PI * kf * slope * slope * y0.powi(2 * k as i32);
        let traj = dopri(
            |y, s: &[f64; 4]| {
                let (sh, ch) = (y.sinh(), y.cosh());
                let th = sh / ch;
                let sin = s[0].sin();
                let acc = -s[1] * ch / sh + kf * kf * (2.0 * s[0]).sin() / (2.0 * sh * sh);
                let de = PI
                    * (s[1] * s[1] * ch * ch * th * (1.0 + th * th) + kf * kf * sin * sin / (ch * ch * th));
                let dw = PI * (s[1] * s[1] * ch * sh + kf * kf * sin * sin * ch / sh);
                [s[1], acc, de, dw]
            },
            y0,
            [psi0, dpsi0, e0, e0],
            y_max,
            ODE_TOL,
            f64::MIN_POSITIVE,
        )
        .ok_or_else(|| HarmonicError::NoBoundedProfile(format!("integration failed for slope {slope}")))?;
        Ok(Self {
            k,
            slope,
            y_max,
            traj,
        })
    }

    /// `(ψ(y), ψ'(y))`; the series is used below [`Y_START`].
    pub fn eval(&self, y: f64) -> (f64, f64) {
        if y < Y_START {
            return series(self.k, self.slope, y);
        }
        self.traj.eval_c2(y, 0, 1)
    }

    /// `ψ(y_max)`.
    pub fn limit(&self) -> f64 {
        self.traj.last()[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.traj.ys.iter().map(|s| s[0].abs()).fold(0.0, f64::max)
    }

    /// Energy of the self-similar map on `{t = 1, r ≤ tanh y}`.
    pub fn section_energy_to(&self, y: f64) -> f64 {
        self.traj.eval(y).0[2]
    }

    /// `½ ∫_0^y ∫ (|∂_yΦ|² + sinh⁻² |∂_ΘΦ|²) cosh sinh dy dΘ`.
    pub fn weighted_energy_to(&self, y: f64) -> f64 {
        self.traj.eval(y).0[3]
    }

    /// Sample values `(y, ψ)` at the accepted integration steps.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.traj.xs.iter().zip(&self.traj.ys).map(|(x, s)| (*x, s[0]))
    }
}

/// `ψ ≈ s y^k (1 + c y² + d y⁴)` near the origin.
fn series(k: u32, s: f64, y: f64) -> (f64, f64) {
    if k == 1 {
        let cs = -(s + s.powi(3)) / 12.0;
        let ds = (-cs * (4.0 / 3.0 + 2.0 * s * s) + 4.0 * s / 45.0 + 2.0 * s.powi(3) / 9.0 + 2.0 * s.powi(5) / 15.0)
            / 24.0;
        (
            s * y + cs * y.powi(3) + ds * y.powi(5),
            s + 3.0 * cs * y * y + 5.0 * ds * y.powi(4),
        )
    } else {
        let kf = k as f64;
        let c = -kf / 12.0;
        let yk = y.powi(k as i32);
        (
            s * yk * (1.0 + c * y * y),
            s * (kf * yk / y + c * (kf + 2.0) * yk * y),
        )
    }
}

/// Bisect on the slope so that `ψ(y_max)` hits `target ∈ (0, π)`.
pub fn shoot_hyperbolic(k: u32, target: f64, y_max: f64) -> Result<HyperbolicProfile, HarmonicError> {
    if !(target > 0.0 && target < PI) {
        return Err(HarmonicError::NoBoundedProfile(format!(
            "limit {target} is outside (0, π)"
        )));
    }
    let bounded = |p: &HyperbolicProfile| p.max_abs() <= PI + 1e-9;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grow = 0;
    loop {
        let p = HyperbolicProfile::integrate(k, hi, y_max)?;
        if !bounded(&p) {
            return Err(HarmonicError::NoBoundedProfile(format!(
                "profile with slope {hi} leaves [0, π]"
            )));
        }
        if p.limit() >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(HarmonicError::NoBoundedProfile(format!(
                "no slope below {hi} reaches {target}"
            )));
        }
    }
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let p = HyperbolicProfile::integrate(k, mid, y_max)?;
        if p.limit() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    HyperbolicProfile::integrate(k, 0.5 * (lo + hi), y_max)
}

/// Self-similar map `Φ(t, x) = ψ(artanh(r / t))` lifted with degree `k`:
/// `(Φ, ∂_tΦ, ∂_xΦ, ∂_yΦ)` with analytic derivatives.
///
/// Outside the cone the map is continued by its boundary value, which is
/// static and homogeneous of degree zero.
pub fn self_similar_point(p: &HyperbolicProfile, t: f64, x: [f64; 2]) -> [[f64; 3]; 4] {
    let r = x[0].hypot(x[1]);
    let kf = p.k as f64;
    let th = x[1].atan2(x[0]);
    let (skt, ckt) = (kf * th).sin_cos();
    let (psi, dpsi, yt, yr) = if r < t {
        let y = (r / t).atanh();
        let (a, b) = p.eval(y);
        let den = t * t - r * r;
        (a, b, -r / den, t / den)
    } else {
        (p.eval(p.y_max).0, 0.0, 0.0, 0.0)
    };
    let (sp, cp) = psi.sin_cos();
    let value = [sp * ckt, sp * skt, cp];
    let du = [cp * ckt, cp * skt, -sp];
    let dth = [-kf * sp * skt, kf * sp * ckt, 0.0];
    let mut dt = [0.0; 3];
    let mut dx = [0.0; 3];
    let mut dy = [0.0; 3];
    if r < 1e-14 {
        if p.k == 1 && t > 0.0 {
            // ψ ≈ s r / t
            dx = [p.slope / t, 0.0, 0.0];
            dy = [0.0, p.slope / t, 0.0];
        }
        return [value, dt, dx, dy];
    }
    let (c, s) = (x[0] / r, x[1] / r);
    for m in 0..3 {
        dt[m] = dpsi * yt * du[m];
        let dr = dpsi * yr * du[m];
        dx[m] = c * dr - s * dth[m] / r;
        dy[m] = s * dr + c * dth[m] / r;
    }
    [value, dt, dx, dy]
}

/// Sample the self-similar map on the periodic square `[-L, L)²` at time `t`.
pub fn self_similar_state(p: &HyperbolicProfile, t: f64, nx: usize, half_width: f64) -> MapState {
    let grid = GridField::zeros_square(nx, half_width, 3);
    let mut phi = grid.clone();
    let mut dphi = grid;
    for j in 0..nx {
        for i in 0..nx {
            let s = self_similar_point(p, t, phi.position(i, j));
            phi.node_mut(i, j).copy_from_slice(&s[0]);
            dphi.node_mut(i, j).copy_from_slice(&s[1]);
        }
    }
    MapState::new(phi, dphi, t)
}

/// Least-squares fit `E(δ) ≈ a |ln δ| + b` of section energies.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceFit {
    pub slope: f64,
    pub intercept: f64,
    /// `max |E - fit| / E` over the δ list (0 when all energies vanish).
    pub max_relative_residual: f64,
    pub energies: Vec<(f64, f64)>,
}

/// Energy of the self-similar map on `S_1^δ = {t = 1, r ≤ 1 - δ}` for each δ,
/// and its fit against `|ln δ|`.
pub fn selfsimilar_energy_divergence(p: &HyperbolicProfile, deltas: &[f64]) -> Result<DivergenceFit, HarmonicError> {
    if deltas.len() < 2 {
        return Err(HarmonicError::InvalidArgument("need at least two offsets".into()));
    }
    let mut energies = Vec::with_capacity(deltas.len());
    for &d in deltas {
        if !(d > 0.0 && d < 1.0) {
            return Err(HarmonicError::InvalidArgument(format!("offset {d} outside (0, 1)")));
        }
        let y = (1.0 - d).atanh();
        if y > p.y_max {
            return Err(HarmonicError::InvalidArgument(format!(
                "offset {d} needs y = {y:.3} beyond the profile's y_max = {}",
                p.y_max
            )));
        }
        energies.push((d, p.section_energy_to(y)));
    }
    let n = energies.len() as f64;
    let xs: Vec<f64> = energies.iter().map(|(d, _)| d.ln().abs()).collect();
    let ys: Vec<f64> = energies.iter().map(|(_, e)| *e).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_relative_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| if *y > 0.0 { (y - slope * x - intercept).abs() / y } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(DivergenceFit {
        slope,
        intercept,
        max_relative_residual,
        energies,
    })
}
