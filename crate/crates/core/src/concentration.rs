//! Concentration detection, rescaling, compactness checks and profile
//! classification for sampled wave-map histories.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::diagnostics::{
    disk_energy, energy_density, line_density, momentum_density, radial_disk_integral, ConeRegion,
    DiagnosticsError, Multiplier,
};
use crate::evolve::{renormalize, EvolveError, History};
use crate::field::{gradient, radial_derivative, GridField, MapState, SpacetimePoint, Topology};
use crate::harmonic::harmonic_residual;
use crate::manifold::{corotational_point, Sphere};
use crate::spectral::{energy_dispersion, smooth_step, SpectralError};

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("no dyadic window [ε t_n, t_n] with t_n = {t_n} satisfies the flux bound")]
    WindowNotFound { t_n: f64 },
    #[error("rescaled frame exceeds the source data: {0}")]
    FrameExceedsData(String),
    #[error("incompatible frames: {0}")]
    IncompatibleFrames(String),
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

/// Which detections become events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsequence {
    /// Every snapshot above the dispersion threshold.
    All,
    /// The first detection, then each detection whose scale has at least
    /// halved since the previous event.
    Dyadic,
}

/// Periodic window onto which radial states are lifted for the dispersion scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftWindow {
    pub half_width: f64,
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Dispersion threshold `ε`.
    pub epsilon: f64,
    /// Ball-energy threshold `E_thr`.
    pub energy_threshold: f64,
    /// Time-like aperture `γ ∈ (0, 1)`.
    pub aperture: f64,
    /// `r_min = min_scale_factor · h`.
    pub min_scale_factor: f64,
    pub flux_exponent: f64,
    pub bisection_steps: usize,
    pub subsequence: Subsequence,
    /// Scan every `stride`-th snapshot.
    pub stride: usize,
    pub lift: LiftWindow,
    /// Blow-up point, when known, for the time-like energy fraction.
    pub apex: Option<SpacetimePoint>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            energy_threshold: 0.1 * 4.0 * PI,
            aperture: 0.5,
            min_scale_factor: 4.0,
            flux_exponent: 0.5,
            bisection_steps: 16,
            subsequence: Subsequence::Dyadic,
            stride: 1,
            lift: LiftWindow {
                half_width: 0.5,
                nx: 256,
            },
            apex: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConcentrationError> {
        let bad = |m: String| Err(ConcentrationError::Config(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.energy_threshold > 0.0) {
            return bad(format!("energy_threshold must be positive, got {}", self.energy_threshold));
        }
        if !(self.aperture > 0.0 && self.aperture < 1.0) {
            return bad(format!("aperture must lie in (0, 1), got {}", self.aperture));
        }
        if !(self.min_scale_factor >= 4.0) {
            return bad(format!("min_scale_factor must be at least 4, got {}", self.min_scale_factor));
        }
        if !(self.flux_exponent > 0.0) {
            return bad(format!("flux_exponent must be positive, got {}", self.flux_exponent));
        }
        if self.bisection_steps == 0 || self.stride == 0 {
            return bad("bisection_steps and stride must be at least 1".into());
        }
        if !(self.lift.half_width > 0.0) || self.lift.nx < 16 || !self.lift.nx.is_multiple_of(2) {
            return bad(format!("lift window needs half_width > 0 and an even nx ≥ 16, got {:?}", self.lift));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEvent {
    pub t: f64,
    /// Ball centre: the dispersion argmax, or the symmetry centre for radial states.
    pub x: [f64; 2],
    pub k: i32,
    pub dispersion: f64,
    pub dispersion_argmax: [f64; 2],
    /// Smallest radius whose ball holds `E_thr`.
    pub r: f64,
    pub ball_energy: f64,
    /// False when the threshold is already reached at `r_min`.
    pub resolved: bool,
    /// `E(B(x*, γτ)) / E(B(x*, τ))` with `τ` the time to the configured apex.
    pub timelike_fraction: Option<f64>,
}

/// Lift a corotational state onto a periodic window, tapering the profile to 0
/// between 0.6 and 0.9 of the half-width so the lifted map is smooth across
/// the seam.
pub fn lift_window(state: &MapState, window: LiftWindow) -> Result<MapState, ConcentrationError> {
    let degree = match state.topology() {
        Topology::Radial { degree } => degree,
        Topology::Periodic => return Err(DiagnosticsError::Unsupported("lift_window needs a radial state; this").into()),
    };
    let w = window.half_width;
    let rmax = (state.phi.nx - 3) as f64 * state.h();
    if 0.9 * w > rmax {
        return Err(ConcentrationError::FrameExceedsData(format!(
            "lift window of half-width {w} needs the profile up to r = {}, have {rmax}",
            0.9 * w
        )));
    }
    let grid = GridField::zeros_square(window.nx, w, 3);
    let mut phi = grid.clone();
    let mut dphi = grid;
    let (mut u, mut ut) = ([0.0], [0.0]);
    for j in 0..window.nx {
        for i in 0..window.nx {
            let x = phi.position(i, j);
            let r = x[0].hypot(x[1]);
            let chi = 1.0 - smooth_step((r / w - 0.6) / 0.3);
            if chi > 0.0 {
                state.phi.interpolate([r, 0.0], &mut u);
                state.dphi.interpolate([r, 0.0], &mut ut);
            } else {
                u[0] = 0.0;
                ut[0] = 0.0;
            }
            let th = x[1].atan2(x[0]);
            let (uu, vv) = (chi * u[0], chi * ut[0]);
            phi.node_mut(i, j).copy_from_slice(&corotational_point(uu, degree, th));
            let (s, c) = uu.sin_cos();
            let kt = degree as f64 * th;
            dphi.node_mut(i, j)
                .copy_from_slice(&[vv * c * kt.cos(), vv * c * kt.sin(), -vv * s]);
        }
    }
    Ok(MapState::new(phi, dphi, state.t))
}

/// Energy in balls around a fixed centre of one state.
struct Balls {
    density: GridField,
    center: [f64; 2],
    radial: bool,
    r_min: f64,
    r_max: f64,
}

impl Balls {
    fn new(state: &MapState, center: [f64; 2], min_scale_factor: f64) -> Self {
        let density = energy_density(state);
        let h = state.h();
        let radial = state.phi.is_radial();
        let r_max = if radial {
            (state.phi.nx - 1) as f64 * h
        } else {
            let lo = state.phi.origin;
            let hi = state.phi.position(state.phi.nx - 1, state.phi.ny - 1);
            let d = (center[0] - lo[0]).min(hi[0] - center[0]).min(center[1] - lo[1]).min(hi[1] - center[1]);
            d - 3.0 * h
        };
        Self {
            density,
            center,
            radial,
            r_min: min_scale_factor * h,
            r_max,
        }
    }

    fn energy(&self, r: f64) -> Result<f64, DiagnosticsError> {
        if self.radial {
            radial_disk_integral(&self.density, r)
        } else {
            disk_energy(&self.density, self.center, r)
        }
    }

    /// Smallest radius in `[r_min, r_max]` holding `threshold`, by bisection.
    fn scale(&self, threshold: f64, steps: usize) -> Result<Option<(f64, f64, bool)>, DiagnosticsError> {
        if self.r_max < self.r_min {
            return Ok(None);
        }
        let e_lo = self.energy(self.r_min)?;
        if e_lo >= threshold {
            return Ok(Some((self.r_min, e_lo, false)));
        }
        let e_hi = self.energy(self.r_max)?;
        if e_hi < threshold {
            return Ok(None);
        }
        let (mut lo, mut hi, mut e) = (self.r_min, self.r_max, e_hi);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            let em = self.energy(mid)?;
            if em >= threshold {
                hi = mid;
                e = em;
            } else {
                lo = mid;
            }
        }
        Ok(Some((hi, e, true)))
    }
}

fn timelike_fraction(balls: &Balls, t: f64, apex: SpacetimePoint, gamma: f64) -> Option<f64> {
    let tau = (apex.t - t).abs();
    if balls.radial && apex.x != [0.0, 0.0] {
        return None;
    }
    if (balls.center[0] - apex.x[0]).hypot(balls.center[1] - apex.x[1]) > 0.0 {
        return None;
    }
    if gamma * tau < balls.r_min || tau > balls.r_max {
        return None;
    }
    let inner = balls.energy(gamma * tau).ok()?;
    let outer = balls.energy(tau).ok()?;
    (outer > 0.0).then(|| inner / outer)
}

/// Scan a history for concentration events.
pub fn scan(history: &History, cfg: &DetectorConfig) -> Result<Vec<ConcentrationEvent>, ConcentrationError> {
    cfg.validate()?;
    let mut events: Vec<ConcentrationEvent> = Vec::new();
    for state in history.snapshots.iter().step_by(cfg.stride) {
        if let Some(ev) = detect(state, cfg)? {
            let keep = match (cfg.subsequence, events.last()) {
                (Subsequence::All, _) | (_, None) => true,
                (Subsequence::Dyadic, Some(prev)) => ev.r <= 0.5 * prev.r,
            };
            if keep {
                events.push(ev);
            }
        }
    }
    Ok(events)
}

/// Concentration test for a single state.
pub fn detect(state: &MapState, cfg: &DetectorConfig) -> Result<Option<ConcentrationEvent>, ConcentrationError> {
    let (ed, center) = match state.topology() {
        Topology::Radial { .. } => (energy_dispersion(&lift_window(state, cfg.lift)?, None)?, [0.0, 0.0]),
        Topology::Periodic => {
            let d = energy_dispersion(state, None)?;
            let x = d.x;
            (d, x)
        }
    };
    if !(ed.value > cfg.epsilon) {
        return Ok(None);
    }
    let balls = Balls::new(state, center, cfg.min_scale_factor);
    let Some((r, e, resolved)) = balls.scale(cfg.energy_threshold, cfg.bisection_steps)? else {
        return Ok(None);
    };
    let timelike_fraction = cfg.apex.and_then(|a| timelike_fraction(&balls, state.t, a, cfg.aperture));
    Ok(Some(ConcentrationEvent {
        t: state.t,
        x: center,
        k: ed.k,
        dispersion: ed.value,
        dispersion_argmax: ed.x,
        r,
        ball_energy: e,
        resolved,
        timelike_fraction,
    }))
}

/// The history seen backwards from `t_star`: snapshot times `t_star - t`,
/// velocities negated, order reversed. A singularity at `t_star` becomes the
/// apex of a forward cone at time 0.
pub fn time_reversed(history: &History, t_star: f64) -> History {
    let snapshots = history
        .snapshots
        .iter()
        .rev()
        .map(|s| {
            let mut dphi = s.dphi.clone();
            for v in dphi.values.iter_mut() {
                *v = -*v;
            }
            MapState::new(s.phi.clone(), dphi, t_star - s.t)
        })
        .collect();
    History::from_snapshots(snapshots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxWindow {
    /// Largest dyadic `ε = 2^{-j}` with `F[ε t_n, t_n] ≤ ε^a E`.
    pub epsilon: f64,
    /// Smallest dyadic `ε` available in the history for which the bound holds
    /// at `ε` and at every larger dyadic value.
    pub smallest: f64,
    /// `(ε, window start actually used, flux)` per tested level.
    pub table: Vec<(f64, f64, f64)>,
    pub energy: f64,
}

/// Dyadic flux windows `[ε t_n, t_n]` (times from `apex.t`) through the
/// cone `|x - apex.x| = t - apex.t`.
///
/// Window starts snap down to the latest snapshot at or before `ε t_n`, so
/// each tested window contains the nominal one.
pub fn flux_window(
    history: &History,
    apex: SpacetimePoint,
    t_n: f64,
    exponent: f64,
    energy: f64,
) -> Result<FluxWindow, ConcentrationError> {
    let tau_n = t_n - apex.t;
    let tol = 1e-9 * (1.0 + t_n.abs());
    let snaps: Vec<&MapState> = history
        .snapshots
        .iter()
        .filter(|s| s.t >= apex.t - tol && s.t <= t_n + tol)
        .collect();
    let not_found = || ConcentrationError::WindowNotFound { t_n };
    if !(tau_n > 0.0) || snaps.last().is_none_or(|s| (s.t - t_n).abs() > tol) {
        return Err(not_found());
    }
    let h = snaps[0].h();
    let region = ConeRegion::new(apex, apex.t, t_n, 0.0)?;
    // cumulative flux from t_n backwards
    let mut cum = vec![0.0; snaps.len()];
    let mut prev = line_density(snaps[snaps.len() - 1], &region);
    for a in (0..snaps.len() - 1).rev() {
        let gap = snaps[a + 1].t - snaps[a].t;
        if gap > h * (1.0 + 1e-9) {
            // windows reaching past this gap are not computable
            for c in cum.iter_mut().take(a + 1) {
                *c = f64::NAN;
            }
            break;
        }
        let v = line_density(snaps[a], &region);
        cum[a] = cum[a + 1] + 0.5 * gap * (v + prev);
        prev = v;
    }
    let mut table = Vec::new();
    let mut largest = None;
    let mut smallest = None;
    for j in 1..=60 {
        let eps = 2f64.powi(-j);
        let start = apex.t + eps * tau_n;
        let Some(a) = snaps.iter().rposition(|s| s.t <= start + tol) else { break };
        let f = cum[a];
        if !f.is_finite() {
            break;
        }
        table.push((eps, snaps[a].t, f));
        if f <= eps.powf(exponent) * energy {
            largest.get_or_insert(eps);
            if smallest.is_none() || smallest == Some(2.0 * eps) {
                smallest = Some(eps);
            }
        }
        if snaps[a].t <= apex.t + tol {
            break;
        }
    }
    match (largest, smallest) {
        (Some(epsilon), Some(smallest)) => Ok(FluxWindow {
            epsilon,
            smallest,
            table,
            energy,
        }),
        _ => Err(not_found()),
    }
}

/// Rescaled frame: periodic square of half-width `half_width` with `nx` nodes
/// per side, sampled at rescaled times `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaleFrame {
    pub half_width: f64,
    pub nx: usize,
    pub times: Vec<f64>,
}

impl Default for RescaleFrame {
    fn default() -> Self {
        Self {
            half_width: 4.0,
            nx: 128,
            times: vec![-0.5, 0.0, 0.5],
        }
    }
}

/// Source state at time `t`: exact snapshot if one matches, else cubic
/// Lagrange interpolation through the four nearest snapshots.
fn state_at(history: &History, t: f64) -> Result<MapState, ConcentrationError> {
    let s = &history.snapshots;
    let tol = 1e-12 * (1.0 + t.abs());
    if let Some(x) = s.iter().find(|x| (x.t - t).abs() <= tol) {
        return Ok(x.clone());
    }
    let n = s.len();
    let exceed = || {
        ConcentrationError::FrameExceedsData(format!(
            "time {t} is outside the snapshots [{:?}, {:?}]",
            s.first().map(|x| x.t),
            s.last().map(|x| x.t)
        ))
    };
    if n < 4 || t < s[0].t || t > s[n - 1].t {
        return Err(exceed());
    }
    let i = s.partition_point(|x| x.t <= t);
    let a = i.saturating_sub(2).min(n - 4);
    let nodes = &s[a..a + 4];
    let w: Vec<f64> = (0..4)
        .map(|m| {
            (0..4)
                .filter(|&q| q != m)
                .map(|q| (t - nodes[q].t) / (nodes[m].t - nodes[q].t))
                .product()
        })
        .collect();
    let mut phi = nodes[0].phi.zeros_like(nodes[0].phi.ncomp);
    let mut dphi = phi.clone();
    for (m, node) in nodes.iter().enumerate() {
        for (o, v) in phi.values.iter_mut().zip(&node.phi.values) {
            *o += w[m] * v;
        }
        for (o, v) in dphi.values.iter_mut().zip(&node.dphi.values) {
            *o += w[m] * v;
        }
    }
    Ok(MapState::new(phi, dphi, t))
}

/// Sample `Φ(t, x_n + r x')` and `r ∂_tΦ` on the frame grid.
fn resample(src: &MapState, x_n: [f64; 2], r: f64, frame: &RescaleFrame, t_frame: f64) -> Result<MapState, ConcentrationError> {
    let grid = GridField::zeros_square(frame.nx, frame.half_width, 3);
    let mut phi = grid.clone();
    let mut dphi = grid;
    let reach = frame.half_width * std::f64::consts::SQRT_2 * r;
    match src.topology() {
        Topology::Radial { degree } => {
            if x_n != [0.0, 0.0] {
                return Err(ConcentrationError::FrameExceedsData(
                    "radial sources can only be rescaled about the origin".into(),
                ));
            }
            let rmax = (src.phi.nx - 3) as f64 * src.h();
            if reach > rmax {
                return Err(ConcentrationError::FrameExceedsData(format!(
                    "frame reaches r = {reach}, profile ends at {rmax}"
                )));
            }
            let (mut u, mut ut) = ([0.0], [0.0]);
            for j in 0..frame.nx {
                for i in 0..frame.nx {
                    let xp = phi.position(i, j);
                    let rr = r * xp[0].hypot(xp[1]);
                    let th = xp[1].atan2(xp[0]);
                    src.phi.interpolate([rr, 0.0], &mut u);
                    src.dphi.interpolate([rr, 0.0], &mut ut);
                    phi.node_mut(i, j).copy_from_slice(&corotational_point(u[0], degree, th));
                    let (s, c) = u[0].sin_cos();
                    let kt = degree as f64 * th;
                    let v = r * ut[0];
                    dphi.node_mut(i, j).copy_from_slice(&[v * c * kt.cos(), v * c * kt.sin(), -v * s]);
                }
            }
        }
        Topology::Periodic => {
            let lo = src.phi.position(2, 2);
            let hi = src.phi.position(src.phi.nx - 3, src.phi.ny - 3);
            let half = frame.half_width * r;
            if x_n[0] - half < lo[0] || x_n[0] + half > hi[0] || x_n[1] - half < lo[1] || x_n[1] + half > hi[1] {
                return Err(ConcentrationError::FrameExceedsData(format!(
                    "frame of half-width {half} around {x_n:?} leaves the source grid"
                )));
            }
            let nc = src.phi.ncomp;
            let mut a = vec![0.0; nc];
            let mut b = vec![0.0; nc];
            for j in 0..frame.nx {
                for i in 0..frame.nx {
                    let xp = phi.position(i, j);
                    let x = [x_n[0] + r * xp[0], x_n[1] + r * xp[1]];
                    src.phi.interpolate(x, &mut a);
                    src.dphi.interpolate(x, &mut b);
                    phi.node_mut(i, j).copy_from_slice(&a);
                    for (o, v) in dphi.node_mut(i, j).iter_mut().zip(&b) {
                        *o = r * v;
                    }
                }
            }
            renormalize(&Sphere::default(), &mut phi, &mut dphi)?;
        }
    }
    Ok(MapState::new(phi, dphi, t_frame))
}

/// `Φ^{(n)}(t', x') = Φ(t_n + r_n t', x_n + r_n x')` on the frame, one state per
/// frame time.
pub fn rescale(history: &History, event: &ConcentrationEvent, frame: &RescaleFrame) -> Result<Vec<MapState>, ConcentrationError> {
    if frame.nx < 16 || !(frame.half_width > 0.0) || frame.times.is_empty() {
        return Err(ConcentrationError::Config(format!("bad rescale frame {frame:?}")));
    }
    let h = history
        .snapshots
        .first()
        .map(|s| s.h())
        .ok_or_else(|| ConcentrationError::FrameExceedsData("empty history".into()))?;
    if event.r < 4.0 * h * (1.0 - 1e-12) {
        return Err(ConcentrationError::FrameExceedsData(format!(
            "scale {} is below the resolvable 4h = {}",
            event.r,
            4.0 * h
        )));
    }
    frame
        .times
        .iter()
        .map(|&tp| {
            let src = state_at(history, event.t + event.r * tp)?;
            resample(&src, event.x, event.r, frame, tp)
        })
        .collect()
}

/// Rescaled corotational profile `u(t_n, r_n s)` on `s = i·ds`, for profile fits.
pub fn rescale_radial(state: &MapState, r_n: f64, n: usize, s_max: f64) -> Result<Vec<(f64, f64)>, ConcentrationError> {
    if !state.phi.is_radial() {
        return Err(DiagnosticsError::Unsupported("rescale_radial needs a radial state; this").into());
    }
    let rmax = (state.phi.nx - 3) as f64 * state.h();
    if s_max * r_n > rmax {
        return Err(ConcentrationError::FrameExceedsData(format!(
            "s_max r_n = {} exceeds the profile range {rmax}",
            s_max * r_n
        )));
    }
    let mut u = [0.0];
    Ok((0..n)
        .map(|i| {
            let s = s_max * i as f64 / (n - 1) as f64;
            state.phi.interpolate([r_n * s, 0.0], &mut u);
            (s, u[0])
        })
        .collect())
}

/// Least-squares fit of `σ 2 arctan(s / λ)` (`σ = ±1`) to profile samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFit {
    pub lambda: f64,
    pub sign: f64,
    /// `max |u - σ 2 arctan(s/λ)|`.
    pub sup_distance: f64,
    /// `sup_distance / max |2 arctan(s/λ)|` over the samples.
    pub relative: f64,
}

pub fn fit_q_profile(samples: &[(f64, f64)]) -> QFit {
    let sign = if samples.iter().map(|p| p.1).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    let cost = |ll: f64| -> f64 {
        let lam = ll.exp();
        samples.iter().map(|&(s, u)| (u - sign * 2.0 * (s / lam).atan()).powi(2)).sum()
    };
    let (mut a, mut b) = ((1e-4f64).ln(), (1e4f64).ln());
    // coarse scan then golden section on log λ
    let m = 200;
    let mut best = a;
    let mut bc = f64::INFINITY;
    for i in 0..=m {
        let x = a + (b - a) * i as f64 / m as f64;
        let c = cost(x);
        if c < bc {
            bc = c;
            best = x;
        }
    }
    let step = (b - a) / m as f64;
    a = best - step;
    b = best + step;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..100 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let lambda = (0.5 * (a + b)).exp();
    let q = |s: f64| 2.0 * (s / lambda).atan();
    let sup_distance = samples.iter().map(|&(s, u)| (u - sign * q(s)).abs()).fold(0.0, f64::max);
    let scale = samples.iter().map(|&(s, _)| q(s)).fold(0.0, f64::max);
    QFit {
        lambda,
        sign,
        sup_distance,
        relative: if scale > 0.0 { sup_distance / scale } else { f64::INFINITY },
    }
}

/// `‖∇(Ψ - Ψ')‖_{L²(B)} + ‖∂_t(Ψ - Ψ')‖_{L²(B)}` on `B = B(0, radius)`.
pub fn h1_distance(a: &MapState, b: &MapState, radius: f64) -> Result<f64, ConcentrationError> {
    if !a.phi.same_grid(&b.phi) || a.phi.ncomp != b.phi.ncomp || a.phi.is_radial() {
        return Err(ConcentrationError::IncompatibleFrames(
            "states must share one periodic grid".into(),
        ));
    }
    let mut diff = a.phi.clone();
    for (o, v) in diff.values.iter_mut().zip(&b.phi.values) {
        *o -= v;
    }
    let (gx, gy) = gradient(&diff);
    let nc = diff.ncomp;
    let mut grad2 = diff.zeros_like(1);
    let mut time2 = diff.zeros_like(1);
    for n in 0..diff.len_nodes() {
        let mut g = 0.0;
        let mut t = 0.0;
        for c in 0..nc {
            let k = n * nc + c;
            g += gx.values[k].powi(2) + gy.values[k].powi(2);
            t += (a.dphi.values[k] - b.dphi.values[k]).powi(2);
        }
        grad2.values[n] = g;
        time2.values[n] = t;
    }
    let ig = disk_energy_raw(&grad2, radius)?;
    let it = disk_energy_raw(&time2, radius)?;
    Ok(ig.max(0.0).sqrt() + it.max(0.0).sqrt())
}

fn disk_energy_raw(density: &GridField, radius: f64) -> Result<f64, ConcentrationError> {
    Ok(crate::diagnostics::disk_integral(density, [0.0, 0.0], radius)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// Symmetric matrix of pairwise distances.
    pub pairwise: Vec<Vec<f64>>,
    /// `sup_{j > i} d(i, j)` for each `i`.
    pub tail: Vec<f64>,
    pub radius: f64,
}

/// Pairwise H¹ distances on `B(0, 1)` between central slices of rescaled sequences.
pub fn cauchy_check(slices: &[MapState]) -> Result<CauchyReport, ConcentrationError> {
    if slices.len() < 3 {
        return Err(ConcentrationError::IncompatibleFrames(format!(
            "need at least 3 rescaled slices, got {}",
            slices.len()
        )));
    }
    let n = slices.len();
    let radius = 1.0;
    let mut pairwise = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = h1_distance(&slices[i], &slices[j], radius)?;
            pairwise[i][j] = d;
            pairwise[j][i] = d;
        }
    }
    let tail = (0..n)
        .map(|i| (i + 1..n).map(|j| pairwise[i][j]).fold(0.0, f64::max))
        .collect();
    Ok(CauchyReport { pairwise, tail, radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub v_max: f64,
    /// Grid points per velocity axis.
    pub grid: usize,
    /// Golden-section passes per axis after the grid search.
    pub refine_passes: usize,
    /// Bound on the relative residual `max|τ| / max|∇Φ|²`.
    pub residual_tol: f64,
    pub energy_floor: f64,
    /// Dispersion threshold for the `Dispersed` verdict.
    pub epsilon: f64,
    /// Half-width of the central region where the residual is measured.
    pub central_half_width: f64,
    pub central_nx: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            v_max: 0.9,
            grid: 19,
            refine_passes: 3,
            residual_tol: 0.05,
            energy_floor: 0.1 * 4.0 * PI,
            epsilon: 0.5,
            central_half_width: 2.0,
            central_nx: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    Bubble { boost: [f64; 2], residual: f64 },
    Dispersed { dispersion: f64 },
    Undetermined { boost: [f64; 2], residual: f64, energy: f64, dispersion: f64 },
}

impl Classification {
    pub fn is_bubble(&self) -> bool {
        matches!(self, Self::Bubble { .. })
    }
}

/// Objective of the boost search at one velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostFit {
    pub v: [f64; 2],
    /// Relative harmonic residual of the de-boosted slice.
    pub residual: f64,
    /// `max|∂_tΦ + v·∇Φ| / max|∇Φ|` on the central region.
    pub transport: f64,
}

impl BoostFit {
    pub fn objective(&self) -> f64 {
        self.residual + self.transport
    }
}

/// Evaluate the boost objective for velocity `v`.
///
/// A map boosted with velocity `v` is a travelling wave `Φ(t, x) = H(x - vt)`
/// in the boosted frame's coordinates, so its rest-frame slice is the `t = 0`
/// slice stretched by `γ` along `v`. The slice residual measures whether that
/// stretch is harmonic; the transport term measures whether `∂_tΦ = -v·∇Φ`.
pub fn boost_fit(candidate: &MapState, v: [f64; 2], cfg: &ClassifyConfig) -> Result<BoostFit, ConcentrationError> {
    let beta = v[0].hypot(v[1]);
    if beta >= 1.0 {
        return Err(ConcentrationError::Config(format!("boost speed {beta} is not below 1")));
    }
    let n = if beta > 0.0 { [v[0] / beta, v[1] / beta] } else { [1.0, 0.0] };
    let gamma = 1.0 / (1.0 - beta * beta).sqrt();
    let nc = cfg.central_nx;
    let w = cfg.central_half_width;
    let src = &candidate.phi;
    let (gx, gy) = gradient(src);
    let mut slice = GridField::zeros_square(nc, w, 3);
    let mut grad_max: f64 = 0.0;
    let mut transport: f64 = 0.0;
    let mut p = [0.0; 3];
    let (mut a, mut b, mut c) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for j in 0..nc {
        for i in 0..nc {
            let y = slice.position(i, j);
            let yn = y[0] * n[0] + y[1] * n[1];
            let s = yn / gamma - yn;
            let x = [y[0] + s * n[0], y[1] + s * n[1]];
            src.interpolate(x, &mut p);
            let norm = p.iter().map(|q| q * q).sum::<f64>().sqrt();
            slice.node_mut(i, j).copy_from_slice(&p.map(|q| q / norm));
            candidate.dphi.interpolate(x, &mut a);
            gx.interpolate(x, &mut b);
            gy.interpolate(x, &mut c);
            let mut g2 = 0.0;
            let mut tr = 0.0;
            for k in 0..3 {
                g2 += b[k] * b[k] + c[k] * c[k];
                tr += (a[k] + v[0] * b[k] + v[1] * c[k]).powi(2);
            }
            grad_max = grad_max.max(g2.sqrt());
            transport = transport.max(tr.sqrt());
        }
    }
    let (_, worst) = harmonic_residual(&slice, &Sphere::default(), 4);
    let (sx, sy) = gradient(&slice);
    let mut g2max: f64 = 0.0;
    for node in 0..slice.len_nodes() {
        let (i, j) = (node % nc, node / nc);
        if i >= 4 && j >= 4 && i + 4 < nc && j + 4 < nc {
            let g: f64 = (0..3).map(|k| sx.values[node * 3 + k].powi(2) + sy.values[node * 3 + k].powi(2)).sum();
            g2max = g2max.max(g);
        }
    }
    let residual = if g2max > 0.0 { worst / g2max } else { f64::INFINITY };
    Ok(BoostFit {
        v,
        residual,
        transport: if grad_max > 0.0 { transport / grad_max } else { f64::INFINITY },
    })
}

/// Grid search over `|v| ≤ v_max`, then alternating golden-section refinement
/// along each axis.
pub fn boost_search(candidate: &MapState, cfg: &ClassifyConfig) -> Result<BoostFit, ConcentrationError> {
    let m = cfg.grid.max(2);
    let step = 2.0 * cfg.v_max / (m - 1) as f64;
    let mut best: Option<BoostFit> = None;
    for a in 0..m {
        for b in 0..m {
            let v = [-cfg.v_max + a as f64 * step, -cfg.v_max + b as f64 * step];
            if v[0].hypot(v[1]) > cfg.v_max * (1.0 + 1e-12) {
                continue;
            }
            let f = boost_fit(candidate, v, cfg)?;
            if best.is_none_or(|bf| f.objective() < bf.objective()) {
                best = Some(f);
            }
        }
    }
    let mut best = best.expect("the zero boost is always on the grid");
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..cfg.refine_passes {
        for axis in 0..2 {
            let eval = |x: f64, base: [f64; 2]| -> Result<BoostFit, ConcentrationError> {
                let mut v = base;
                v[axis] = x;
                if v[0].hypot(v[1]) > cfg.v_max {
                    return Ok(BoostFit {
                        v,
                        residual: f64::INFINITY,
                        transport: f64::INFINITY,
                    });
                }
                boost_fit(candidate, v, cfg)
            };
            let base = best.v;
            let (mut lo, mut hi) = (base[axis] - step, base[axis] + step);
            let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
            let (mut fc, mut fd) = (eval(c, base)?, eval(d, base)?);
            for _ in 0..24 {
                if fc.objective() < fd.objective() {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - g * (hi - lo);
                    fc = eval(c, base)?;
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + g * (hi - lo);
                    fd = eval(d, base)?;
                }
            }
            for f in [fc, fd] {
                if f.objective() < best.objective() {
                    best = f;
                }
            }
        }
    }
    Ok(best)
}

/// Classify a rescaled central slice as a (boosted) harmonic-map bubble,
/// dispersed, or undetermined.
pub fn classify(candidate: &MapState, cfg: &ClassifyConfig) -> Result<Classification, ConcentrationError> {
    if candidate.phi.is_radial() {
        return Err(DiagnosticsError::Unsupported("classify").into());
    }
    let dens = energy_density(candidate);
    let energy = disk_energy(&dens, [0.0, 0.0], cfg.central_half_width)?;
    let dispersion = energy_dispersion(candidate, None)?.value;
    let fit = boost_search(candidate, cfg)?;
    if fit.residual <= cfg.residual_tol && energy >= cfg.energy_floor {
        return Ok(Classification::Bubble {
            boost: fit.v,
            residual: fit.residual,
        });
    }
    if dispersion <= cfg.epsilon {
        return Ok(Classification::Dispersed { dispersion });
    }
    Ok(Classification::Undetermined {
        boost: fit.v,
        residual: fit.residual,
        energy,
        dispersion,
    })
}

/// Per dyadic subinterval `[2^{-j-1} T, 2^{-j} T]` of times from the apex
/// (`T` the last snapshot time), `∫∫ ρ⁻¹|X₀Φ|²` over `|x - apex.x| ≤ t - δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubintervalScan {
    pub levels: Vec<(u32, f64, f64, f64)>,
    /// Level with the smallest integral.
    pub best: u32,
}

fn x0_weighted(state: &MapState, apex: SpacetimePoint, delta: f64) -> Result<f64, ConcentrationError> {
    let tau = state.t - apex.t;
    let radius = tau - delta;
    if radius < 4.0 * state.h() {
        return Ok(0.0);
    }
    match state.topology() {
        Topology::Radial { .. } => {
            let ur = radial_derivative(&state.phi);
            let h = state.h();
            let dens = state.phi.zeros_like(1).from_fn(|p, v| {
                let i = (p[0] / h).round() as usize;
                let r = p[0];
                let rho2 = tau * tau - r * r;
                v[0] = if rho2 > 0.0 {
                    (tau * state.dphi.values[i] + r * ur.values[i]).powi(2) / rho2.powf(1.5)
                } else {
                    0.0
                };
            });
            Ok(radial_disk_integral(&dens, radius)?)
        }
        Topology::Periodic => {
            let m = momentum_density(state, apex, Multiplier::X0)?;
            let mut dens = state.phi.zeros_like(1);
            for (n, v) in dens.values.iter_mut().enumerate() {
                *v = if m.valid[n] { m.contraction[n] } else { 0.0 };
            }
            Ok(crate::diagnostics::disk_integral(&dens, apex.x, radius)?)
        }
    }
}

pub fn select_subinterval(
    history: &History,
    apex: SpacetimePoint,
    delta: f64,
    levels: u32,
) -> Result<SubintervalScan, ConcentrationError> {
    let last = history
        .snapshots
        .last()
        .ok_or_else(|| ConcentrationError::Config("empty history".into()))?;
    let big_t = last.t - apex.t;
    let values: Vec<(f64, f64)> = history
        .snapshots
        .iter()
        .filter(|s| s.t > apex.t)
        .map(|s| Ok((s.t - apex.t, x0_weighted(s, apex, delta)?)))
        .collect::<Result<_, ConcentrationError>>()?;
    let mut out = Vec::new();
    for j in 0..levels {
        let hi = big_t * 2f64.powi(-(j as i32));
        let lo = 0.5 * hi;
        let inside: Vec<&(f64, f64)> = values.iter().filter(|(t, _)| *t >= lo * (1.0 - 1e-12) && *t <= hi * (1.0 + 1e-12)).collect();
        if inside.len() < 2 {
            break;
        }
        let integral: f64 = inside.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        out.push((j, apex.t + lo, apex.t + hi, integral));
    }
    let best = out
        .iter()
        .fold(None::<&(u32, f64, f64, f64)>, |m, x| match m {
            Some(y) if y.3 <= x.3 => Some(y),
            _ => Some(x),
        })
        .map(|x| x.0)
        .ok_or_else(|| ConcentrationError::Config("history too short for any dyadic subinterval".into()))?;
    Ok(SubintervalScan { levels: out, best })
}
