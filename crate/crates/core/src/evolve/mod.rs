//! Time integration of the wave-map system.
//!
//! The extrinsic equation is
//!
//! ```text
//! ∂_t²Φ = ΔΦ - S(Φ)(∂_tΦ, ∂_tΦ) + Σ_i S(Φ)(∂_iΦ, ∂_iΦ)
//! ```
//!
//! i.e. `□Φ = -S(Φ)(∂^αΦ, ∂_αΦ)` in signature `(-, +, +)`. The full 2D system
//! runs on a periodic grid; corotational data `Φ = (sin u cos kθ, sin u sin kθ, cos u)`
//! reduces to `u_tt = u_rr + u_r / r - k² sin(2u) / (2r²)` on a radial grid.
//!
//! Both are advanced by classical RK4 followed by projection back onto the
//! target and its tangent bundle.

mod data;
mod residual;

pub use data::{InitialData, Propagation};
pub use residual::{wave_map_residual, wave_map_residual_with_margin};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics;
use crate::field::stencil::{periodic_gradient_into, radial_parity, radial_value, wrap};
use crate::field::stencil::{d1, d2};
use crate::field::{FieldError, GridField, MapState, Topology};
use crate::manifold::{target_by_name, ManifoldError, Target};

/// Default CFL factor `dt = c h`.
pub const DEFAULT_CFL: f64 = 0.5;
/// CFL factors above this are rejected.
pub const MAX_CFL: f64 = 0.8;
/// A run stops once `h · max|∇Φ|` exceeds this.
pub const DEFAULT_BLOWUP_FACTOR: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("resolution lost at t = {t}: max |∇Φ| = {max_grad:.4e} exceeds {limit:.4e}")]
    BlowupOverflow { t: f64, max_grad: f64, limit: f64 },
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("snapshots are not at uniform cadence (gap {a} vs {b})")]
    NonuniformCadence { a: f64, b: f64 },
    #[error("need at least 3 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// Failure of a whole run. Blow-up carries the history up to the last valid state.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("resolution lost at t = {t} (max |∇Φ| = {max_grad:.4e}); history holds {} snapshots", history.snapshots.len())]
    BlowupOverflow {
        t: f64,
        max_grad: f64,
        history: Box<History>,
    },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: String,
    /// Half-width of the periodic square, or the outer radius of a radial grid.
    pub half_width: f64,
    pub nx: usize,
    pub cfl: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Steps between stored snapshots.
    pub snapshot_every: usize,
    /// Equivariance degree; 0 is the full 2D problem.
    pub degree: u32,
    pub blowup_factor: f64,
    pub data: InitialData,
}

impl RunConfig {
    pub fn new(data: InitialData, t_end: f64) -> Self {
        Self {
            target: "s2".into(),
            half_width: 4.0,
            nx: 256,
            cfl: DEFAULT_CFL,
            t_start: 0.0,
            t_end,
            snapshot_every: 1,
            degree: 0,
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            data,
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::Config(m));
        if !(self.cfl > 0.0 && self.cfl <= MAX_CFL) {
            return bad(format!("cfl must lie in (0, {MAX_CFL}], got {}", self.cfl));
        }
        if !(self.t_end > self.t_start) {
            return bad(format!(
                "t_end ({}) must exceed t_start ({})",
                self.t_end, self.t_start
            ));
        }
        if !self.nx.is_power_of_two() || self.nx < 16 {
            return bad(format!("nx must be a power of two ≥ 16, got {}", self.nx));
        }
        if !(self.half_width > 0.0) {
            return bad(format!("half_width must be positive, got {}", self.half_width));
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if !(self.blowup_factor > 0.0) {
            return bad(format!(
                "blowup_factor must be positive, got {}",
                self.blowup_factor
            ));
        }
        target_by_name(&self.target)?;
        self.data.check_degree(self.degree)?;
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.degree == 0 {
            2.0 * self.half_width / self.nx as f64
        } else {
            self.half_width / self.nx as f64
        }
    }

    /// Uniform step `≤ cfl h` that lands exactly on `t_end`.
    pub fn time_step(&self) -> (f64, usize) {
        let span = self.t_end - self.t_start;
        let steps = (span / (self.cfl * self.spacing()) - 1e-9).ceil().max(1.0) as usize;
        (span / steps as f64, steps)
    }

    pub fn initial_state(&self) -> Result<MapState, EvolveError> {
        self.data.build(self)
    }
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub max_grad: f64,
    /// Max distance to the target before renormalisation.
    pub constraint_drift: f64,
    /// The scheme's conserved energy, see [`diagnostics::discrete_energy`].
    pub discrete_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExitReason {
    Completed,
    BlowupOverflow { t: f64, max_grad: f64 },
}

#[derive(Debug, Clone)]
pub struct History {
    pub snapshots: Vec<MapState>,
    pub series: Vec<StepRecord>,
    pub dt: f64,
    pub exit: ExitReason,
}

impl History {
    pub fn from_snapshots(snapshots: Vec<MapState>) -> Self {
        let dt = if snapshots.len() > 1 {
            snapshots[1].t - snapshots[0].t
        } else {
            0.0
        };
        Self {
            snapshots,
            series: Vec::new(),
            dt,
            exit: ExitReason::Completed,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&MapState> {
        self.snapshots.last()
    }
}

/// Time integrator bound to a target, with reusable scratch space.
pub struct Integrator<'a> {
    target: &'a dyn Target,
    blowup_factor: f64,
    scratch: Vec<Vec<f64>>,
}

impl<'a> Integrator<'a> {
    pub fn new(target: &'a dyn Target) -> Self {
        Self {
            target,
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            scratch: Vec::new(),
        }
    }

    pub fn with_blowup_factor(mut self, f: f64) -> Self {
        self.blowup_factor = f;
        self
    }

    pub fn target(&self) -> &dyn Target {
        self.target
    }

    /// Acceleration `∂_t²Φ` of a state.
    pub fn rhs(&self, state: &MapState) -> GridField {
        let mut acc = state.phi.zeros_like(state.phi.ncomp);
        rhs_into(
            self.target,
            &state.phi,
            &state.dphi.values,
            &mut acc.values,
            &mut Vec::new(),
        );
        acc
    }

    /// One RK4 step followed by constraint renormalisation.
    ///
    /// Returns the new state and the pre-renormalisation constraint drift.
    pub fn step(&mut self, state: &MapState, dt: f64) -> Result<(MapState, f64), EvolveError> {
        let h = state.phi.h;
        if dt > MAX_CFL * h * (1.0 + 1e-12) {
            return Err(EvolveError::CflViolation {
                dt,
                limit: MAX_CFL * h,
            });
        }
        let n = state.phi.values.len();
        self.scratch.resize_with(9, Vec::new);
        for s in self.scratch.iter_mut() {
            s.resize(n, 0.0);
        }
        let [a1, a2, a3, a4, p, v, grad, _, _] = &mut self.scratch[..] else {
            unreachable!()
        };
        let phi0 = &state.phi.values;
        let v0 = &state.dphi.values;
        let mut stage = state.phi.clone();

        // k1
        rhs_into(self.target, &state.phi, v0, a1, grad);
        // k2
        for k in 0..n {
            stage.values[k] = phi0[k] + 0.5 * dt * v0[k];
            v[k] = v0[k] + 0.5 * dt * a1[k];
        }
        rhs_into(self.target, &stage, v, a2, grad);
        p.copy_from_slice(v); // V2
        // k3
        for k in 0..n {
            stage.values[k] = phi0[k] + 0.5 * dt * p[k];
            v[k] = v0[k] + 0.5 * dt * a2[k];
        }
        rhs_into(self.target, &stage, v, a3, grad);
        // k4
        let v3 = v.clone();
        for k in 0..n {
            stage.values[k] = phi0[k] + dt * v3[k];
            v[k] = v0[k] + dt * a3[k];
        }
        rhs_into(self.target, &stage, v, a4, grad);
        let v4 = v.clone();

        let mut phi = state.phi.clone();
        let mut dphi = state.dphi.clone();
        for k in 0..n {
            phi.values[k] = phi0[k] + dt / 6.0 * (v0[k] + 2.0 * p[k] + 2.0 * v3[k] + v4[k]);
            dphi.values[k] = v0[k] + dt / 6.0 * (a1[k] + 2.0 * a2[k] + 2.0 * a3[k] + a4[k]);
        }
        let drift = renormalize(self.target, &mut phi, &mut dphi)?;
        let next = MapState::new(phi, dphi, state.t + dt);
        let max_grad = diagnostics::max_gradient(&next);
        let limit = self.blowup_factor / h;
        if max_grad > limit || !max_grad.is_finite() {
            return Err(EvolveError::BlowupOverflow {
                t: next.t,
                max_grad,
                limit,
            });
        }
        Ok((next, drift))
    }
}

/// Project `phi` onto the target and `dphi` onto the tangent space at the new
/// `phi`. Returns the max distance to the target before projection.
pub fn renormalize(
    target: &dyn Target,
    phi: &mut GridField,
    dphi: &mut GridField,
) -> Result<f64, EvolveError> {
    if phi.is_radial() {
        if let Some(u0) = phi.values.first_mut() {
            *u0 = 0.0;
        }
        if let Some(v0) = dphi.values.first_mut() {
            *v0 = 0.0;
        }
        return Ok(0.0);
    }
    let nc = phi.ncomp;
    let mut buf = vec![0.0; nc];
    let mut drift: f64 = 0.0;
    for (p, w) in phi
        .values
        .chunks_exact_mut(nc)
        .zip(dphi.values.chunks_exact_mut(nc))
    {
        drift = drift.max(target.distance(p));
        target.project_point(p, &mut buf)?;
        p.copy_from_slice(&buf);
        target.project_tangent(p, w, &mut buf);
        w.copy_from_slice(&buf);
    }
    Ok(drift)
}

fn rhs_into(
    target: &dyn Target,
    phi: &GridField,
    dphi: &[f64],
    acc: &mut [f64],
    grad: &mut Vec<f64>,
) {
    match phi.topology {
        Topology::Periodic => planar_rhs_into(target, phi, dphi, acc, grad),
        Topology::Radial { degree } => equivariant_rhs_into(phi, degree, acc),
    }
}

fn planar_rhs_into(
    target: &dyn Target,
    phi: &GridField,
    dphi: &[f64],
    acc: &mut [f64],
    grad: &mut Vec<f64>,
) {
    let (nx, ny, nc) = (phi.nx, phi.ny, phi.ncomp);
    let n = phi.values.len();
    grad.resize(2 * n, 0.0);
    let (gx, gy) = grad.split_at_mut(n);
    periodic_gradient_into(phi, gx, gy);
    let inv2 = 1.0 / (phi.h * phi.h);
    let v = &phi.values;
    let mut s = vec![0.0; nc];
    for j in 0..ny {
        let js = [
            wrap(j as isize - 2, ny),
            wrap(j as isize - 1, ny),
            j,
            wrap(j as isize + 1, ny),
            wrap(j as isize + 2, ny),
        ];
        for i in 0..nx {
            let is = [
                wrap(i as isize - 2, nx),
                wrap(i as isize - 1, nx),
                i,
                wrap(i as isize + 1, nx),
                wrap(i as isize + 2, nx),
            ];
            let node = j * nx + i;
            let k = node * nc;
            for c in 0..nc {
                let row = |m: usize| v[(j * nx + is[m]) * nc + c];
                let col = |m: usize| v[(js[m] * nx + i) * nc + c];
                acc[k + c] = inv2
                    * (d2(row(0), row(1), row(2), row(3), row(4))
                        + d2(col(0), col(1), col(2), col(3), col(4)));
            }
            let p = &v[k..k + nc];
            target.second_fundamental_form(p, &dphi[k..k + nc], &dphi[k..k + nc], &mut s);
            for c in 0..nc {
                acc[k + c] -= s[c];
            }
            target.second_fundamental_form(p, &gx[k..k + nc], &gx[k..k + nc], &mut s);
            for c in 0..nc {
                acc[k + c] += s[c];
            }
            target.second_fundamental_form(p, &gy[k..k + nc], &gy[k..k + nc], &mut s);
            for c in 0..nc {
                acc[k + c] += s[c];
            }
        }
    }
}

fn equivariant_rhs_into(u: &GridField, degree: u32, acc: &mut [f64]) {
    let n = u.nx;
    let h = u.h;
    let k2 = (degree as f64).powi(2);
    let parity = radial_parity(u.topology);
    let v = &u.values;
    acc[0] = 0.0;
    for i in 1..n {
        if i + 2 >= n {
            // outer edge is frozen; it lies outside the trusted region anyway
            acc[i] = 0.0;
            continue;
        }
        let ii = i as isize;
        let x = [-2isize, -1, 0, 1, 2].map(|m| radial_value(v, ii + m, parity));
        let ur = d1(x[0], x[1], x[3], x[4]);
        let urr = d2(x[0], x[1], x[2], x[3], x[4]);
        let r = i as f64 * h;
        acc[i] = urr / (h * h) + ur / (h * r) - k2 * (2.0 * v[i]).sin() / (2.0 * r * r);
    }
}

/// Corotational acceleration `u_rr + u_r / r - k² sin(2u) / (2r²)`.
pub fn equivariant_rhs(u: &GridField, degree: u32) -> GridField {
    let mut acc = u.zeros_like(1);
    equivariant_rhs_into(u, degree, &mut acc.values);
    acc
}

/// Acceleration of a state (free-function form of [`Integrator::rhs`]).
pub fn rhs(target: &dyn Target, state: &MapState) -> GridField {
    Integrator::new(target).rhs(state)
}

/// Integrate `config`, calling `observe` on every state (initial state included).
///
/// Snapshots are stored every `snapshot_every` steps plus the final state.
pub fn run_observed(
    config: &RunConfig,
    mut observe: impl FnMut(&MapState, &StepRecord),
) -> Result<History, RunError> {
    config.validate()?;
    let target = target_by_name(&config.target).map_err(EvolveError::from)?;
    let mut state = config.initial_state()?;
    state.validate(target.as_ref()).map_err(EvolveError::from)?;
    let (dt, steps) = config.time_step();
    let mut integrator = Integrator::new(target.as_ref()).with_blowup_factor(config.blowup_factor);
    let record = |step: usize, s: &MapState, drift: f64| StepRecord {
        step,
        t: s.t,
        energy: diagnostics::total_energy(s),
        max_grad: diagnostics::max_gradient(s),
        constraint_drift: drift,
        discrete_energy: diagnostics::discrete_energy(s),
    };
    let first = record(0, &state, 0.0);
    observe(&state, &first);
    let mut history = History {
        snapshots: vec![state.clone()],
        series: vec![first],
        dt,
        exit: ExitReason::Completed,
    };
    for step in 1..=steps {
        match integrator.step(&state, dt) {
            Ok((mut next, drift)) => {
                if step == steps {
                    next.t = config.t_end;
                } else {
                    next.t = config.t_start + step as f64 * dt;
                }
                let rec = record(step, &next, drift);
                observe(&next, &rec);
                history.series.push(rec);
                if step % config.snapshot_every == 0 || step == steps {
                    history.snapshots.push(next.clone());
                }
                state = next;
            }
            Err(EvolveError::BlowupOverflow { t, max_grad, .. }) => {
                if history.snapshots.last().map(|s| s.t) != Some(state.t) {
                    history.snapshots.push(state.clone());
                }
                history.exit = ExitReason::BlowupOverflow { t, max_grad };
                return Err(RunError::BlowupOverflow {
                    t,
                    max_grad,
                    history: Box::new(history),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(history)
}

pub fn run(config: &RunConfig) -> Result<History, RunError> {
    run_observed(config, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{corotational_point, Sphere};

    #[test]
    fn constant_map_is_a_fixed_point() {
        let s = MapState::constant(32, 2.0, &[0.0, 0.6, 0.8], 0.0);
        let target = Sphere::default();
        let mut int = Integrator::new(&target);
        assert!(int.rhs(&s).max_norm() == 0.0);
        let (next, drift) = int.step(&s, 0.5 * s.h()).unwrap();
        assert_eq!(next.phi, s.phi);
        assert_eq!(next.dphi, s.dphi);
        assert!(drift < 1e-15);
    }

    #[test]
    fn geodesic_flow_residual_vanishes() {
        // Φ = cos(ct) p + sin(ct) q, x-independent: ∂_t²Φ = -c² Φ
        let c = 1.7;
        let t = 0.3;
        let p = [0.0, 0.0, 1.0];
        let q = [0.6, 0.8, 0.0];
        let g = |s: f64| [0, 1, 2].map(|i| (c * s).cos() * p[i] + (c * s).sin() * q[i]);
        let dg = |s: f64| [0, 1, 2].map(|i| c * (-(c * s).sin() * p[i] + (c * s).cos() * q[i]));
        let phi = GridField::zeros_square(16, 1.0, 3).from_fn(|_, v| v.copy_from_slice(&g(t)));
        let dphi = phi.zeros_like(3).from_fn(|_, v| v.copy_from_slice(&dg(t)));
        let acc = rhs(&Sphere::default(), &MapState::new(phi, dphi, t));
        let exact = g(t).map(|x| -c * c * x);
        for node in 0..acc.len_nodes() {
            for k in 0..3 {
                assert!((acc.at(node)[k] - exact[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn equivariant_rhs_examples() {
        let z = GridField::zeros_radial(64, 0.05, 1);
        assert_eq!(equivariant_rhs(&z, 1).max_norm(), 0.0);
        let pi = GridField::zeros_radial(64, 0.05, 1).from_fn(|_, v| v[0] = std::f64::consts::PI);
        let acc = equivariant_rhs(&pi, 1);
        // interior nodes only: node 0 is pinned and the parity ghost of a constant π is -π
        for i in 3..61 {
            assert!(acc.values[i].abs() < 1e-12, "{i}: {}", acc.values[i]);
        }
    }

    // away from the origin; the first node loses one order to the 1/r factors
    fn q_residual(h: f64) -> f64 {
        let n = (8.0 / h) as usize;
        let u = GridField::zeros_radial(n, h, 1).from_fn(|p, v| v[0] = 2.0 * p[0].atan());
        let acc = equivariant_rhs(&u, 1);
        acc.values[n / 16..n / 2].iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn equivariant_q_residual_is_fourth_order() {
        let r1 = q_residual(0.04) / q_residual(0.02);
        let r2 = q_residual(0.02) / q_residual(0.01);
        assert!(q_residual(0.01) < 1e-5);
        assert!((12.0..20.0).contains(&r1), "{r1}");
        assert!((12.0..20.0).contains(&r2), "{r2}");
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(InitialData::Constant { point: [0.0, 0.0, 1.0] }, 1.0);
        c.validate().unwrap();
        c.cfl = 0.9;
        assert!(c.validate().is_err());
        c.cfl = 0.5;
        c.nx = 100;
        assert!(c.validate().is_err());
        c.nx = 64;
        c.t_end = -1.0;
        assert!(c.validate().is_err());
        c.t_end = 1.0;
        c.target = "torus".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn time_step_lands_on_t_end() {
        let mut c = RunConfig::new(InitialData::Constant { point: [0.0, 0.0, 1.0] }, 1.0);
        c.nx = 512;
        c.half_width = 2.0;
        let (dt, steps) = c.time_step();
        assert_eq!(steps, 256);
        assert_eq!(dt, 1.0 / 256.0);
        c.t_end = 0.3;
        let (dt, steps) = c.time_step();
        assert!(dt <= c.cfl * c.spacing());
        assert!((dt * steps as f64 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_flat_history() {
        let mut c = RunConfig::new(InitialData::Constant { point: [0.0, 0.0, 1.0] }, 0.25);
        c.nx = 32;
        c.half_width = 1.0;
        let h = run(&c).unwrap();
        assert!(h.series.iter().all(|r| r.energy == 0.0 && r.max_grad == 0.0));
        assert_eq!(h.snapshots.len(), h.series.len());
    }

    #[test]
    fn lifted_point_helper_is_unit() {
        let p = corotational_point(1.1, 3, 0.4);
        assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
