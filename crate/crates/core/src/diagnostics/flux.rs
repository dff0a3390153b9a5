use super::{ConeRegion, DiagnosticsError};
use crate::evolve::History;
use crate::field::{gradient, radial_derivative, GridField, MapState, Topology};

/// Null-frame derivatives at one point, relative to a cone apex.
///
/// For corotational states the vectors live in the orthonormal frame
/// `(∂_uΦ, e_θ)` of the lifted map; inner products are the same.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CircleSample {
    pub dt: [f64; 3],
    pub l: [f64; 3],
    pub lbar: [f64; 3],
    pub slash: [f64; 3],
}

impl CircleSample {
    /// `(|LΦ|², |L̲Φ|², |∂̸Φ|²)`.
    pub fn squares(&self) -> (f64, f64, f64) {
        let sq = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
        (sq(&self.l), sq(&self.lbar), sq(&self.slash))
    }
}

/// First derivatives of a state, ready for pointwise sampling.
pub(crate) struct Sampler<'a> {
    state: &'a MapState,
    gx: GridField,
    gy: GridField,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(state: &'a MapState) -> Self {
        match state.topology() {
            Topology::Periodic => {
                let (gx, gy) = gradient(&state.phi);
                Self { state, gx, gy }
            }
            Topology::Radial { .. } => {
                let gx = radial_derivative(&state.phi);
                Self {
                    state,
                    gy: gx.clone(),
                    gx,
                }
            }
        }
    }

    pub(crate) fn h(&self) -> f64 {
        self.state.h()
    }

    pub(crate) fn state(&self) -> &MapState {
        self.state
    }

    /// Sample at `center + r (cos θ, sin θ)`.
    pub(crate) fn at(&self, center: [f64; 2], r: f64, theta: f64) -> CircleSample {
        let (s, c) = theta.sin_cos();
        match self.state.topology() {
            Topology::Radial { degree } => {
                let mut v = [0.0];
                self.state.phi.interpolate([r, 0.0], &mut v);
                let u = v[0];
                self.state.dphi.interpolate([r, 0.0], &mut v);
                let ut = v[0];
                self.gx.interpolate([r, 0.0], &mut v);
                let ur = v[0];
                let ang = if r > 1e-12 {
                    degree as f64 * u.sin() / r
                } else if degree == 1 {
                    ur
                } else {
                    0.0
                };
                CircleSample {
                    dt: [ut, 0.0, 0.0],
                    l: [ut + ur, 0.0, 0.0],
                    lbar: [ut - ur, 0.0, 0.0],
                    slash: [0.0, ang, 0.0],
                }
            }
            Topology::Periodic => {
                let x = [center[0] + r * c, center[1] + r * s];
                let mut dt = [0.0; 3];
                let mut dx = [0.0; 3];
                let mut dy = [0.0; 3];
                self.state.dphi.interpolate(x, &mut dt);
                self.gx.interpolate(x, &mut dx);
                self.gy.interpolate(x, &mut dy);
                let mut out = CircleSample {
                    dt,
                    ..Default::default()
                };
                for k in 0..3 {
                    let dr = c * dx[k] + s * dy[k];
                    out.l[k] = dt[k] + dr;
                    out.lbar[k] = dt[k] - dr;
                    out.slash[k] = -s * dx[k] + c * dy[k];
                }
                out
            }
        }
    }

    /// Node derivatives `(∂_tΦ, ∂_xΦ, ∂_yΦ)` of a periodic state.
    pub(crate) fn node(&self, n: usize) -> (&[f64], &[f64], &[f64]) {
        let nc = self.state.phi.ncomp;
        let r = n * nc..(n + 1) * nc;
        (
            &self.state.dphi.values[r.clone()],
            &self.gx.values[r.clone()],
            &self.gy.values[r],
        )
    }
}

/// `∫_0^{2π} f(sample, θ) R dθ` on the circle of radius `r` around `center`.
///
/// Trapezoid in θ with at least four samples per grid spacing of arc.
pub(crate) fn circle_integral(
    sampler: &Sampler,
    center: [f64; 2],
    r: f64,
    f: impl Fn(&CircleSample) -> f64,
) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    if sampler.state().phi.is_radial() {
        return two_pi * r * f(&sampler.at(center, r, 0.0));
    }
    let m = ((4.0 * two_pi * r / sampler.h()).ceil() as usize).max(64);
    let mut terms = Vec::with_capacity(m);
    for a in 0..m {
        let th = two_pi * a as f64 / m as f64;
        terms.push(f(&sampler.at(center, r, th)));
    }
    two_pi * r / m as f64 * crate::field::pairwise_sum(&terms)
}

/// Lateral energy flux density integrated over the circle `r = t - apex.t - δ`:
/// `∫ (½|LΦ|² + ½|∂̸Φ|²) R dθ`.
pub fn line_density(state: &MapState, region: &ConeRegion) -> f64 {
    let s = Sampler::new(state);
    circle_integral(&s, region.apex.x, region.radius(state.t), |c| {
        let (a, _, q) = c.squares();
        0.5 * (a + q)
    })
}

/// Trapezoid-in-time accumulator for integrals over the lateral boundary.
#[derive(Debug, Clone)]
pub(crate) struct LateralIntegral {
    pub(crate) region: ConeRegion,
    h: f64,
    first: Option<f64>,
    last: Option<(f64, f64)>,
    sum: f64,
    samples: Vec<f64>,
    step: Option<f64>,
    uniform: bool,
    error: Option<(f64, f64)>,
}

impl LateralIntegral {
    pub(crate) fn new(region: ConeRegion, h: f64) -> Self {
        Self {
            region,
            h,
            first: None,
            last: None,
            sum: 0.0,
            samples: Vec::new(),
            step: None,
            uniform: true,
            error: None,
        }
    }

    /// Whether a state at time `t` contributes.
    pub(crate) fn wants(&self, t: f64) -> bool {
        self.region.contains_time(t)
    }

    pub(crate) fn push_value(&mut self, t: f64, value: f64) {
        if !self.wants(t) {
            return;
        }
        if let Some((tp, vp)) = self.last {
            let gap = t - tp;
            if gap > self.h * (1.0 + 1e-9) && self.error.is_none() {
                self.error = Some((gap, self.h));
            }
            self.sum += 0.5 * gap * (vp + value);
            match self.step {
                None => self.step = Some(gap),
                Some(d) if (gap - d).abs() > 1e-9 * (1.0 + t.abs()) => self.uniform = false,
                _ => {}
            }
        } else {
            self.first = Some(t);
        }
        self.samples.push(value);
        self.last = Some((t, value));
    }

    pub(crate) fn finish(&self) -> Result<f64, DiagnosticsError> {
        if let Some((gap, h)) = self.error {
            return Err(DiagnosticsError::CadenceTooCoarse { gap, h });
        }
        let tol = 1e-9 * (1.0 + self.region.t1.abs());
        match (self.first, self.last) {
            (Some(a), Some((b, _))) if (a - self.region.t0).abs() <= tol && (b - self.region.t1).abs() <= tol => {
                Ok(match self.step {
                    Some(d) if self.uniform => super::quadrature::simpson(&self.samples, d),
                    _ => self.sum,
                })
            }
            (a, b) => Err(DiagnosticsError::InsufficientCoverage(format!(
                "[{}, {}] (snapshots span {:?} to {:?})",
                self.region.t0,
                self.region.t1,
                a,
                b.map(|x| x.0)
            ))),
        }
    }
}

/// Streaming flux over a cone region; push states in time order.
#[derive(Debug, Clone)]
pub struct FluxAccumulator {
    inner: LateralIntegral,
}

impl FluxAccumulator {
    pub fn new(region: ConeRegion, h: f64) -> Self {
        Self {
            inner: LateralIntegral::new(region, h),
        }
    }

    pub fn push(&mut self, state: &MapState) {
        if self.inner.wants(state.t) {
            let v = line_density(state, &self.inner.region);
            self.inner.push_value(state.t, v);
        }
    }

    pub fn finish(&self) -> Result<f64, DiagnosticsError> {
        self.inner.finish()
    }
}

/// Energy flux through `r = t - apex.t - δ` for `t ∈ [t0, t1]`.
///
/// Both endpoints must be snapshot times, and consecutive snapshots in the
/// region must be at most `h` apart.
pub fn flux(history: &History, region: &ConeRegion) -> Result<f64, DiagnosticsError> {
    region.validate()?;
    let h = history
        .snapshots
        .first()
        .map(|s| s.h())
        .ok_or_else(|| DiagnosticsError::InsufficientCoverage("an empty history".into()))?;
    let mut acc = FluxAccumulator::new(*region, h);
    for s in &history.snapshots {
        acc.push(s);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::InitialData;

    #[test]
    fn constant_map_has_zero_flux() {
        let snaps: Vec<_> = (0..5)
            .map(|n| MapState::constant(32, 2.0, &[0.0, 0.0, 1.0], 0.5 + 0.1 * n as f64))
            .collect();
        let hist = History::from_snapshots(snaps);
        let f = flux(&hist, &ConeRegion::centered(0.5, 0.9, 0.0).unwrap()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn coverage_and_cadence_errors() {
        let snaps: Vec<_> = (0..5)
            .map(|n| MapState::constant(32, 2.0, &[0.0, 0.0, 1.0], 0.5 + 0.1 * n as f64))
            .collect();
        let hist = History::from_snapshots(snaps.clone());
        assert!(matches!(
            flux(&hist, &ConeRegion::centered(0.5, 1.0, 0.0).unwrap()),
            Err(DiagnosticsError::InsufficientCoverage(_))
        ));
        let sparse = History::from_snapshots(vec![snaps[0].clone(), snaps[4].clone()]);
        assert!(matches!(
            flux(&sparse, &ConeRegion::centered(0.5, 0.9, 0.0).unwrap()),
            Err(DiagnosticsError::CadenceTooCoarse { .. })
        ));
    }

    #[test]
    fn line_density_of_rotating_field() {
        // Φ_t = (c, 0, 0) uniform: ½|LΦ|² + ½|∂̸Φ|² = ½c² on every circle
        let phi = GridField::zeros_square(64, 2.0, 3).from_fn(|_, v| v.copy_from_slice(&[0.0, 0.0, 1.0]));
        let dphi = phi.zeros_like(3).from_fn(|_, v| v[0] = 0.8);
        let s = MapState::new(phi, dphi, 1.0);
        let reg = ConeRegion::centered(0.5, 1.0, 0.1).unwrap();
        let got = line_density(&s, &reg);
        let exact = 0.5 * 0.64 * 2.0 * std::f64::consts::PI * 0.9;
        assert!((got - exact).abs() < 1e-12);
    }

    #[test]
    fn radial_and_lifted_line_densities_agree() {
        let c = crate::evolve::RunConfig {
            degree: 1,
            nx: 4096,
            half_width: 8.0,
            ..crate::evolve::RunConfig::new(
                InitialData::ArctanBump {
                    amplitude: 0.4,
                    scale: 0.5,
                    cutoff: 1.0,
                    velocity: 0.7,
                },
                1.0,
            )
        };
        let s = c.initial_state().unwrap();
        let lifted = super::super::lift_radial(&s, 256, 2.0).unwrap();
        let reg = ConeRegion::centered(0.5, 1.0, 0.3).unwrap();
        let mut s1 = s;
        s1.t = 1.0;
        let mut l1 = lifted;
        l1.t = 1.0;
        let a = line_density(&s1, &reg);
        let b = line_density(&l1, &reg);
        assert!((a - b).abs() / a < 1e-4, "{a} vs {b}");
    }
}
