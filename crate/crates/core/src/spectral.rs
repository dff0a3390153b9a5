//! Littlewood–Paley projections on periodic grids and the energy dispersion.
//!
//! Band `k` has the radial symbol `φ_k(ξ) = C(log₂|ξ| - k + 1) - C(log₂|ξ| - k)`
//! where `C` is a C^∞ step rising from 0 at `s ≤ 0` to 1 at `s ≥ 1`. Each `φ_k`
//! is supported in `2^{k-1} ≤ |ξ| ≤ 2^{k+1}`, equals 1 at `|ξ| = 2^k`, and the
//! sum over a block of consecutive bands telescopes.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

use crate::field::{GridField, MapState, Topology};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("band k = {k} is outside the resolved range [{k_min}, {k_max}]")]
    BandOutOfRange { k: i32, k_min: i32, k_max: i32 },
    #[error("frequency projections need a periodic grid")]
    NotPeriodic,
    #[error("grid {nx}x{ny} resolves no complete dyadic band")]
    NoBands { nx: usize, ny: usize },
}

/// C^∞ step: 0 for `s ≤ 0`, 1 for `s ≥ 1`.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

/// `log₂ x` split as `(exponent, log₂ mantissa)` with the second part in
/// `[0, 1)`. Scaling `x` by `2^m` changes only the exponent, by exactly `m`.
/// Requires a positive normal `x`.
pub fn log2_split(x: f64) -> (i32, f64) {
    debug_assert!(x.is_normal() && x > 0.0);
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let mant = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (exp, mant.log2())
}

pub fn log2_exact(x: f64) -> f64 {
    let (e, f) = log2_split(x);
    e as f64 + f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicBand {
    pub k: i32,
}

impl DyadicBand {
    pub fn new(k: i32) -> Self {
        Self { k }
    }

    /// Symbol at `s = log₂|ξ|`.
    pub fn symbol_log(&self, s: f64) -> f64 {
        let k = self.k as f64;
        smooth_step(s - k + 1.0) - smooth_step(s - k)
    }

    /// Symbol at `log₂|ξ| = e + f` as returned by [`log2_split`]; exact under
    /// simultaneous shifts of `e` and `k`.
    pub fn symbol_split(&self, e: i32, f: f64) -> f64 {
        smooth_step((e - self.k + 1) as f64 + f) - smooth_step((e - self.k) as f64 + f)
    }

    pub fn symbol(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let (e, f) = log2_split(xi);
        self.symbol_split(e, f)
    }
}

/// Resolved bands `[k_min, k_max]` of a periodic grid: the lowest band's
/// support starts at or above the fundamental `2π / P` of the shorter period,
/// and the highest band's support ends at or below the Nyquist `π / h`.
pub fn band_range(field: &GridField) -> Result<(i32, i32), SpectralError> {
    if field.topology != Topology::Periodic {
        return Err(SpectralError::NotPeriodic);
    }
    let p = field.period();
    let fundamental = 2.0 * PI / p[0].min(p[1]);
    let (e0, f0) = log2_split(fundamental);
    let k_min = e0 + if f0 > 0.0 { 1 } else { 0 } + 1;
    let k_max = log2_split(PI / field.h).0 - 1;
    if k_min > k_max {
        return Err(SpectralError::NoBands {
            nx: field.nx,
            ny: field.ny,
        });
    }
    Ok((k_min, k_max))
}

/// FFT plans and `log₂|ξ|` for one grid shape. Reuse across projections.
pub struct LittlewoodPaley {
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
    k_min: i32,
    k_max: i32,
    log_xi: Vec<Option<(i32, f64)>>,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LittlewoodPaley {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LittlewoodPaley")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("h", &self.h)
            .field("k_min", &self.k_min)
            .field("k_max", &self.k_max)
            .finish()
    }
}

/// Fourier coefficients of each component of a field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    ncomp: usize,
    coeffs: Vec<Vec<Complex<f64>>>,
}

fn frequency(m: usize, n: usize, period: f64) -> f64 {
    let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    2.0 * PI * signed / period
}

impl LittlewoodPaley {
    pub fn new(grid: &GridField) -> Result<Self, SpectralError> {
        let (k_min, k_max) = band_range(grid)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let p = grid.period();
        let mut log_xi = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let ey = frequency(j, ny, p[1]);
            for i in 0..nx {
                let ex = frequency(i, nx, p[0]);
                let xi = ex.hypot(ey);
                log_xi.push(if xi > 0.0 { Some(log2_split(xi)) } else { None });
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            nx,
            ny,
            h: grid.h,
            origin: grid.origin,
            k_min,
            k_max,
            log_xi,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
        })
    }

    pub fn range(&self) -> (i32, i32) {
        (self.k_min, self.k_max)
    }

    pub fn check_band(&self, k: i32) -> Result<(), SpectralError> {
        if k < self.k_min || k > self.k_max {
            return Err(SpectralError::BandOutOfRange {
                k,
                k_min: self.k_min,
                k_max: self.k_max,
            });
        }
        Ok(())
    }

    fn compatible(&self, f: &GridField) -> bool {
        f.topology == Topology::Periodic && f.nx == self.nx && f.ny == self.ny && f.h == self.h
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        fx.process(buf);
        let mut col = vec![Complex::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = buf[j * nx + i];
            }
            fy.process(&mut col);
            for j in 0..ny {
                buf[j * nx + i] = col[j];
            }
        }
    }

    /// Forward transform of every component.
    pub fn spectrum(&self, f: &GridField) -> Spectrum {
        assert!(self.compatible(f), "field does not match the planned grid");
        let nc = f.ncomp;
        let coeffs = (0..nc)
            .map(|c| {
                let mut buf: Vec<Complex<f64>> =
                    (0..self.nx * self.ny).map(|n| Complex::new(f.values[n * nc + c], 0.0)).collect();
                self.transform(&mut buf, true);
                buf
            })
            .collect();
        Spectrum { ncomp: nc, coeffs }
    }

    /// Multiply a spectrum by `m(log2_split|ξ|)` (with `m = 0` at `ξ = 0`) and transform back.
    pub fn apply(&self, spec: &Spectrum, m: impl Fn(i32, f64) -> f64) -> GridField {
        let weights: Vec<f64> = self.log_xi.iter().map(|s| s.map_or(0.0, |(e, f)| m(e, f))).collect();
        let mut out = GridField::zeros_periodic(self.nx, self.ny, spec.ncomp, self.h, self.origin);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for (c, coeffs) in spec.coeffs.iter().enumerate() {
            let mut buf: Vec<Complex<f64>> = coeffs.iter().zip(&weights).map(|(z, w)| z * *w).collect();
            self.transform(&mut buf, false);
            for (n, z) in buf.iter().enumerate() {
                out.values[n * spec.ncomp + c] = z.re * scale;
            }
        }
        out
    }

    pub fn project_spectrum(&self, spec: &Spectrum, k: i32) -> Result<GridField, SpectralError> {
        self.check_band(k)?;
        let band = DyadicBand::new(k);
        Ok(self.apply(spec, |e, f| band.symbol_split(e, f)))
    }

    /// `P_k f`.
    pub fn project(&self, f: &GridField, k: i32) -> Result<GridField, SpectralError> {
        self.check_band(k)?;
        self.project_spectrum(&self.spectrum(f), k)
    }

    /// Multiplier that removes every resolved band: `1 - Σ_k φ_k` off the origin.
    fn residual_symbol(&self, e: i32, f: f64) -> f64 {
        let sum = smooth_step((e - self.k_min + 1) as f64 + f) - smooth_step((e - self.k_max) as f64 + f);
        1.0 - sum
    }

    /// `Σ_{x} |K(x)|` for the discrete convolution kernel of a multiplier.
    fn kernel_l1(&self, m: impl Fn(i32, f64) -> f64) -> f64 {
        let mut delta = GridField::zeros_periodic(self.nx, self.ny, 1, self.h, self.origin);
        delta.values[0] = 1.0;
        let kernel = self.apply(&self.spectrum(&delta), m);
        kernel.values.iter().map(|v| v.abs()).sum()
    }

    /// Discrete `ℓ¹` norm of band `k`'s kernel, so `‖P_k f‖_∞ ≤ C_sym ‖f‖_∞` on this grid.
    pub fn kernel_norm(&self, k: i32) -> Result<f64, SpectralError> {
        self.check_band(k)?;
        let band = DyadicBand::new(k);
        Ok(self.kernel_l1(|e, f| band.symbol_split(e, f)))
    }

    /// Kernel `ℓ¹` norm of `φ_k - φ_k²`, which bounds `‖P_k P_k f - P_k f‖_∞ / ‖f‖_∞`.
    pub fn overlap_mass(&self, k: i32) -> Result<f64, SpectralError> {
        self.check_band(k)?;
        let band = DyadicBand::new(k);
        Ok(self.kernel_l1(|e, f| {
            let p = band.symbol_split(e, f);
            p - p * p
        }))
    }
}

/// `P_k f` with a one-off plan.
pub fn project(field: &GridField, k: i32) -> Result<GridField, SpectralError> {
    LittlewoodPaley::new(field)?.project(field, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub k: i32,
    pub sup_phi: f64,
    pub sup_dphi: f64,
    /// `sup_phi + 2^{-k} sup_dphi`.
    pub value: f64,
    /// Node maximising `|P_kΦ| + 2^{-k}|P_k ∂_tΦ|`.
    pub argmax: [f64; 2],
    pub argmax_node: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub value: f64,
    pub k: i32,
    pub x: [f64; 2],
    pub node: [usize; 2],
    pub table: Vec<BandRecord>,
    /// Same functional applied to the content outside the resolved bands
    /// (`k = k_min` weight on `∂_tΦ`).
    pub tail: f64,
}

fn sup_norm(f: &GridField) -> (f64, Vec<f64>) {
    let norms = f.node_norms();
    (norms.iter().cloned().fold(0.0, f64::max), norms)
}

/// `ED = sup_k ‖P_kΦ‖_∞ + 2^{-k}‖P_k ∂_tΦ‖_∞` over `k_range` (default: all
/// resolved bands). Norms are Euclidean in the target components. Ties go to
/// the lowest `k` and the first node in storage order.
pub fn energy_dispersion(state: &MapState, k_range: Option<(i32, i32)>) -> Result<Dispersion, SpectralError> {
    let lp = LittlewoodPaley::new(&state.phi)?;
    energy_dispersion_with(&lp, state, k_range)
}

pub fn energy_dispersion_with(
    lp: &LittlewoodPaley,
    state: &MapState,
    k_range: Option<(i32, i32)>,
) -> Result<Dispersion, SpectralError> {
    let (k0, k1) = k_range.unwrap_or(lp.range());
    lp.check_band(k0)?;
    lp.check_band(k1)?;
    let sp = lp.spectrum(&state.phi);
    let sd = lp.spectrum(&state.dphi);
    let mut table = Vec::new();
    for k in k0..=k1 {
        let w = 2f64.powi(-k);
        let (a, na) = sup_norm(&lp.project_spectrum(&sp, k)?);
        let (b, nb) = sup_norm(&lp.project_spectrum(&sd, k)?);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for n in 0..na.len() {
            let v = na[n] + w * nb[n];
            if v > best_v {
                best_v = v;
                best = n;
            }
        }
        let node = [best % lp.nx, best / lp.nx];
        table.push(BandRecord {
            k,
            sup_phi: a,
            sup_dphi: b,
            value: a + w * b,
            argmax: state.phi.position(node[0], node[1]),
            argmax_node: node,
        });
    }
    let top = table
        .iter()
        .fold(&table[0], |m, r| if r.value > m.value { r } else { m })
        .clone();
    let w = 2f64.powi(-lp.k_min);
    let tail = sup_norm(&lp.apply(&sp, |e, f| lp.residual_symbol(e, f))).0
        + w * sup_norm(&lp.apply(&sd, |e, f| lp.residual_symbol(e, f))).0;
    Ok(Dispersion {
        value: top.value,
        k: top.k,
        x: top.argmax,
        node: top.argmax_node,
        table,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, hw: f64) -> GridField {
        GridField::zeros_square(n, hw, 1)
    }

    fn mode(n: usize, hw: f64, m: [i32; 2], amp: f64) -> GridField {
        let p = 2.0 * hw;
        grid(n, hw).from_fn(|x, v| {
            v[0] = amp * (2.0 * PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1]) / p).cos();
        })
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        for s in [0.1, 0.3, 0.77] {
            assert!((smooth_step(s) + smooth_step(1.0 - s) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log2_split_shifts() {
        for x in [0.3, 1.0, 7.77, 1234.5] {
            let (e, f) = log2_split(x);
            for m in -5..6 {
                assert_eq!(log2_split(x * 2f64.powi(m)), (e + m, f));
            }
            assert!((0.0..1.0).contains(&f));
            assert!((log2_exact(x) - x.log2()).abs() < 1e-14);
        }
    }

    #[test]
    fn symbol_support_and_centre() {
        let b = DyadicBand::new(3);
        assert_eq!(b.symbol(8.0), 1.0);
        assert_eq!(b.symbol(4.0), 0.0);
        assert_eq!(b.symbol(16.0), 0.0);
        assert_eq!(b.symbol(3.9), 0.0);
        assert!(b.symbol(5.0) > 0.0 && b.symbol(12.0) > 0.0);
        assert_eq!(b.symbol(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn partition_of_unity(s in 2.0f64..9.0) {
            let total: f64 = (1..=11).map(|k| DyadicBand::new(k).symbol_log(s)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn range_of_a_unit_grid() {
        // period 2: fundamental π; Nyquist 256π
        assert_eq!(band_range(&grid(512, 1.0)).unwrap(), (3, 8));
        assert!(band_range(&GridField::zeros_radial(64, 0.1, 1)).is_err());
    }

    #[test]
    fn constant_field_projects_to_zero() {
        let f = grid(64, 1.0).from_fn(|_, v| v[0] = 3.0);
        let lp = LittlewoodPaley::new(&f).unwrap();
        let (a, b) = lp.range();
        for k in a..=b {
            assert!(lp.project(&f, k).unwrap().max_norm() < 1e-14);
        }
        assert!(matches!(lp.project(&f, b + 1), Err(SpectralError::BandOutOfRange { .. })));
    }

    #[test]
    fn centred_mode_is_unchanged() {
        // |ξ| = 2π·8 / 2 = 8π is not a power of 2; use period 2π so |ξ| = m
        let n = 128;
        let hw = PI;
        let f = mode(n, hw, [16, 0], 1.0);
        let lp = LittlewoodPaley::new(&f).unwrap();
        let g = lp.project(&f, 4).unwrap();
        let err = f.values.iter().zip(&g.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "{err}");
        assert!(lp.project(&f, 3).unwrap().max_norm() < 1e-12);
        assert!(lp.project(&f, 5).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn band_sum_reconstructs_band_limited_fields() {
        let n = 128;
        let hw = PI;
        let lp = LittlewoodPaley::new(&grid(n, hw)).unwrap();
        let (a, b) = lp.range();
        assert_eq!((a, b), (1, 5));
        // |ξ| ∈ [2, 32] and a mean
        let f = grid(n, hw).from_fn(|x, v| {
            v[0] = 0.7 + (2.0 * x[0]).sin() + 0.3 * (3.0 * x[0] - 4.0 * x[1]).cos() + 0.1 * (20.0 * x[1] + 0.4).sin()
                - 0.05 * (17.0 * x[0] + 9.0 * x[1]).cos();
        });
        let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
        let mut sum = vec![0.0; f.values.len()];
        for k in a..=b {
            for (s, v) in sum.iter_mut().zip(&lp.project(&f, k).unwrap().values) {
                *s += v;
            }
        }
        let err = sum.iter().zip(&f.values).fold(0.0f64, |m, (s, v)| m.max((s - (v - mean)).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn projection_bounded_by_kernel_norm_and_overlap() {
        let n = 64;
        let f = grid(n, 1.0).from_fn(|x, v| v[0] = (3.0 * x[0]).tanh() * (-(x[1] * x[1]) * 4.0).exp());
        let lp = LittlewoodPaley::new(&f).unwrap();
        let sup = f.max_norm();
        let (a, b) = lp.range();
        for k in a..=b {
            let c = lp.kernel_norm(k).unwrap();
            let pk = lp.project(&f, k).unwrap();
            assert!(pk.max_norm() <= c * sup * (1.0 + 1e-12));
            let ppk = lp.project(&pk, k).unwrap();
            let diff = ppk.values.iter().zip(&pk.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff <= lp.overlap_mass(k).unwrap() * sup * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn dispersion_of_constant_map_vanishes() {
        let s = MapState::constant(64, 1.0, &[0.0, 0.0, 1.0], 0.0);
        let d = energy_dispersion(&s, None).unwrap();
        assert!(d.value < 1e-14);
        assert!(d.tail < 1e-14);
    }

    #[test]
    fn dispersion_captures_a_centred_mode() {
        let n = 128;
        let amp = 0.25;
        let phi = GridField::zeros_square(n, PI, 3).from_fn(|x, v| {
            v[0] = amp * (8.0 * x[1]).cos();
            v[2] = 1.0;
        });
        let dphi = phi.zeros_like(3);
        let d = energy_dispersion(&MapState::new(phi, dphi, 0.0), None).unwrap();
        assert!(d.value >= amp * (1.0 - 1e-12));
        assert_eq!(d.k, 3);
    }

    #[test]
    fn dispersion_is_scale_covariant() {
        let bump = |x: [f64; 2]| {
            let r2 = x[0] * x[0] + 2.0 * x[1] * x[1];
            let a = 1.2 * (-r2 / 0.05).exp();
            [a.sin() * (3.0 * x[0]).cos(), a.sin() * (3.0 * x[0]).sin(), a.cos()]
        };
        let n = 64;
        let base = GridField::zeros_square(n, 1.0, 3).from_fn(|x, v| v.copy_from_slice(&bump(x)));
        let dphi = base.clone().from_fn(|x, v| v.copy_from_slice(&bump([x[1], x[0]])));
        let s1 = MapState::new(base.clone(), dphi.clone(), 0.0);
        let d1 = energy_dispersion(&s1, None).unwrap();
        for m in [1i32, 2] {
            let lam = 2f64.powi(m);
            let mut phi = base.clone();
            let mut dp = dphi.clone();
            phi.h /= lam;
            phi.origin = [phi.origin[0] / lam, phi.origin[1] / lam];
            dp.h = phi.h;
            dp.origin = phi.origin;
            for v in dp.values.iter_mut() {
                *v *= lam;
            }
            let d = energy_dispersion(&MapState::new(phi, dp, 0.0), None).unwrap();
            assert_eq!(d.k, d1.k + m);
            assert_eq!(d.node, d1.node);
            assert!((d.value - d1.value).abs() <= 1e-10 * d1.value);
        }
    }
}
