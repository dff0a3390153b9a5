//! Fourth-order finite-difference stencils and cubic interpolation.

use super::{FieldError, GridField, Topology};

/// Central first-derivative weights for offsets `-2..=2` (divide by `h`).
pub const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

/// Central second-derivative weights for offsets `-2..=2` (divide by `h^2`).
pub const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// Fraction of a field's variance at the Nyquist frequency above which it is
/// reported as under-resolved.
pub const NYQUIST_FRACTION_LIMIT: f64 = 1e-6;

/// [`D1`] applied to `f(-2), f(-1), f(1), f(2)`; exactly zero on constants.
#[inline]
pub(crate) fn d1(m2: f64, m1: f64, p1: f64, p2: f64) -> f64 {
    (8.0 * (p1 - m1) - (p2 - m2)) / 12.0
}

/// [`D2`] applied to `f(-2), .., f(2)`; exactly zero on constants.
#[inline]
pub(crate) fn d2(m2: f64, m1: f64, c: f64, p1: f64, p2: f64) -> f64 {
    (16.0 * ((p1 - c) + (m1 - c)) - ((p2 - c) + (m2 - c))) / 12.0
}

#[inline]
pub(crate) fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Cartesian gradient `(∂_1 f, ∂_2 f)`.
///
/// Periodic grids use 4th-order central differences with wrap. On radial grids
/// the first entry is `∂_r u` (parity ghosts at the origin, one-sided stencils
/// at the outer edge) and the second is zero.
pub fn gradient(field: &GridField) -> (GridField, GridField) {
    match field.topology {
        Topology::Periodic => {
            let mut dx = field.zeros_like(field.ncomp);
            let mut dy = field.zeros_like(field.ncomp);
            periodic_gradient_into(field, &mut dx.values, &mut dy.values);
            (dx, dy)
        }
        Topology::Radial { .. } => (radial_derivative(field), field.zeros_like(1)),
    }
}

/// [`gradient`] preceded by a resolution check.
pub fn gradient_checked(field: &GridField) -> Result<(GridField, GridField), FieldError> {
    check_resolution(field)?;
    Ok(gradient(field))
}

pub(crate) fn periodic_gradient_into(field: &GridField, dx: &mut [f64], dy: &mut [f64]) {
    let (nx, ny, nc) = (field.nx, field.ny, field.ncomp);
    let inv = 1.0 / field.h;
    let v = &field.values;
    for j in 0..ny {
        let jm2 = wrap(j as isize - 2, ny);
        let jm1 = wrap(j as isize - 1, ny);
        let jp1 = wrap(j as isize + 1, ny);
        let jp2 = wrap(j as isize + 2, ny);
        for i in 0..nx {
            let im2 = wrap(i as isize - 2, nx);
            let im1 = wrap(i as isize - 1, nx);
            let ip1 = wrap(i as isize + 1, nx);
            let ip2 = wrap(i as isize + 2, nx);
            let row = j * nx;
            let k = (row + i) * nc;
            for c in 0..nc {
                dx[k + c] = inv
                    * d1(
                        v[(row + im2) * nc + c],
                        v[(row + im1) * nc + c],
                        v[(row + ip1) * nc + c],
                        v[(row + ip2) * nc + c],
                    );
                dy[k + c] = inv
                    * d1(
                        v[(jm2 * nx + i) * nc + c],
                        v[(jm1 * nx + i) * nc + c],
                        v[(jp1 * nx + i) * nc + c],
                        v[(jp2 * nx + i) * nc + c],
                    );
            }
        }
    }
}

/// 4th-order Laplacian. Radial grids get `u_rr + u_r / r` (the scalar part of
/// the corotational operator), with the `r → 0` limit `2 u_rr`.
pub fn laplacian(field: &GridField) -> GridField {
    match field.topology {
        Topology::Periodic => {
            let mut out = field.zeros_like(field.ncomp);
            periodic_laplacian_into(field, &mut out.values);
            out
        }
        Topology::Radial { .. } => {
            let ur = radial_derivative(field);
            let urr = radial_second_derivative(field);
            let mut out = field.zeros_like(1);
            for i in 0..field.nx {
                let r = i as f64 * field.h;
                out.values[i] = if i == 0 {
                    2.0 * urr.values[0]
                } else {
                    urr.values[i] + ur.values[i] / r
                };
            }
            out
        }
    }
}

pub(crate) fn periodic_laplacian_into(field: &GridField, out: &mut [f64]) {
    let (nx, ny, nc) = (field.nx, field.ny, field.ncomp);
    let inv = 1.0 / (field.h * field.h);
    let v = &field.values;
    for j in 0..ny {
        let jm2 = wrap(j as isize - 2, ny);
        let jm1 = wrap(j as isize - 1, ny);
        let jp1 = wrap(j as isize + 1, ny);
        let jp2 = wrap(j as isize + 2, ny);
        for i in 0..nx {
            let im2 = wrap(i as isize - 2, nx);
            let im1 = wrap(i as isize - 1, nx);
            let ip1 = wrap(i as isize + 1, nx);
            let ip2 = wrap(i as isize + 2, nx);
            let row = j * nx;
            let k = (row + i) * nc;
            for c in 0..nc {
                let xx = d2(
                    v[(row + im2) * nc + c],
                    v[(row + im1) * nc + c],
                    v[k + c],
                    v[(row + ip1) * nc + c],
                    v[(row + ip2) * nc + c],
                );
                let yy = d2(
                    v[(jm2 * nx + i) * nc + c],
                    v[(jm1 * nx + i) * nc + c],
                    v[k + c],
                    v[(jp1 * nx + i) * nc + c],
                    v[(jp2 * nx + i) * nc + c],
                );
                out[k + c] = inv * (xx + yy);
            }
        }
    }
}

/// Parity of the corotational profile under `r → -r`: `u(-r) = (-1)^k u(r)`.
#[inline]
pub(crate) fn radial_parity(topology: Topology) -> f64 {
    match topology {
        Topology::Radial { degree } if degree % 2 == 0 => 1.0,
        _ => -1.0,
    }
}

/// Value at index `i` (possibly negative) using the parity reflection.
#[inline]
pub(crate) fn radial_value(u: &[f64], i: isize, parity: f64) -> f64 {
    if i < 0 {
        parity * u[(-i) as usize]
    } else {
        u[i as usize]
    }
}

/// `∂_r u` on a radial grid, 4th order throughout.
pub fn radial_derivative(field: &GridField) -> GridField {
    let n = field.nx;
    let u = &field.values;
    let s = radial_parity(field.topology);
    let inv = 1.0 / field.h;
    let mut out = field.zeros_like(1);
    for i in 0..n {
        out.values[i] = if i + 2 < n {
            let ii = i as isize;
            inv * d1(radial_value(u, ii - 2, s), radial_value(u, ii - 1, s), u[i + 1], u[i + 2])
        } else if i + 1 < n {
            inv * (3.0 * u[i + 1] + 10.0 * u[i] - 18.0 * u[i - 1] + 6.0 * u[i - 2] - u[i - 3])
                / 12.0
        } else {
            inv * (25.0 * u[i] - 48.0 * u[i - 1] + 36.0 * u[i - 2] - 16.0 * u[i - 3]
                + 3.0 * u[i - 4])
                / 12.0
        };
    }
    out
}

/// `∂_r^2 u` on a radial grid; the last two nodes use one-sided stencils.
pub fn radial_second_derivative(field: &GridField) -> GridField {
    let n = field.nx;
    let u = &field.values;
    let s = radial_parity(field.topology);
    let inv = 1.0 / (field.h * field.h);
    let mut out = field.zeros_like(1);
    for i in 0..n {
        out.values[i] = if i + 2 < n {
            let ii = i as isize;
            inv * d2(
                radial_value(u, ii - 2, s),
                radial_value(u, ii - 1, s),
                u[i],
                u[i + 1],
                u[i + 2],
            )
        } else if i + 1 < n {
            inv * (10.0 * u[i + 1] - 15.0 * u[i] - 4.0 * u[i - 1] + 14.0 * u[i - 2]
                - 6.0 * u[i - 3]
                + u[i - 4])
                / 12.0
        } else {
            inv * (45.0 * u[i] - 154.0 * u[i - 1] + 214.0 * u[i - 2] - 156.0 * u[i - 3]
                + 61.0 * u[i - 4]
                - 10.0 * u[i - 5])
                / 12.0
        };
    }
    out
}

/// Report fields whose Nyquist content the stencils cannot represent.
///
/// Central stencils map the `(-1)^i` mode to zero, so such content would be
/// silently dropped by [`gradient`]. Radial grids are not checked.
pub fn check_resolution(field: &GridField) -> Result<(), FieldError> {
    if field.topology != Topology::Periodic {
        return Ok(());
    }
    let (nx, ny, nc) = (field.nx, field.ny, field.ncomp);
    let v = &field.values;
    let mut variance = 0.0;
    for c in 0..nc {
        let mean: f64 = (0..nx * ny).map(|k| v[k * nc + c]).sum::<f64>() / (nx * ny) as f64;
        variance += (0..nx * ny)
            .map(|k| (v[k * nc + c] - mean).powi(2))
            .sum::<f64>();
    }
    if variance == 0.0 {
        return Ok(());
    }
    let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    if nx % 2 == 0 {
        let mut e = 0.0;
        for j in 0..ny {
            for c in 0..nc {
                let a: f64 = (0..nx).map(|i| sign(i) * v[(j * nx + i) * nc + c]).sum();
                e += a * a / nx as f64;
            }
        }
        if e / variance > NYQUIST_FRACTION_LIMIT {
            return Err(FieldError::UnderResolved {
                axis: 'x',
                fraction: e / variance,
            });
        }
    }
    if ny % 2 == 0 {
        let mut e = 0.0;
        for i in 0..nx {
            for c in 0..nc {
                let a: f64 = (0..ny).map(|j| sign(j) * v[(j * nx + i) * nc + c]).sum();
                e += a * a / ny as f64;
            }
        }
        if e / variance > NYQUIST_FRACTION_LIMIT {
            return Err(FieldError::UnderResolved {
                axis: 'y',
                fraction: e / variance,
            });
        }
    }
    Ok(())
}

/// Cubic Lagrange weights for nodes `-1, 0, 1, 2` at fractional offset `f`.
#[inline]
pub(crate) fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

pub(crate) fn interpolate(field: &GridField, x: [f64; 2], out: &mut [f64]) {
    let nc = field.ncomp;
    match field.topology {
        Topology::Periodic => {
            let sx = (x[0] - field.origin[0]) / field.h;
            let sy = (x[1] - field.origin[1]) / field.h;
            let ix = sx.floor();
            let iy = sy.floor();
            let wx = cubic_weights(sx - ix);
            let wy = cubic_weights(sy - iy);
            let (ix, iy) = (ix as isize, iy as isize);
            out[..nc].iter_mut().for_each(|o| *o = 0.0);
            for (b, wyb) in wy.iter().enumerate() {
                let j = wrap(iy + b as isize - 1, field.ny);
                for (a, wxa) in wx.iter().enumerate() {
                    let i = wrap(ix + a as isize - 1, field.nx);
                    let w = wxa * wyb;
                    let k = (j * field.nx + i) * nc;
                    for c in 0..nc {
                        out[c] += w * field.values[k + c];
                    }
                }
            }
        }
        Topology::Radial { .. } => {
            out[0] = interpolate_radial(field, x[0].abs());
        }
    }
}

/// Cubic interpolation of a radial profile at radius `r ≥ 0`.
pub(crate) fn interpolate_radial(field: &GridField, r: f64) -> f64 {
    let n = field.nx as isize;
    let s = r / field.h;
    let mut i0 = s.floor() as isize;
    // keep the 4-point window inside the grid at the outer edge
    if i0 + 2 > n - 1 {
        i0 = n - 3;
    }
    let w = cubic_weights(s - i0 as f64);
    let parity = radial_parity(field.topology);
    (0..4)
        .map(|a| w[a] * radial_value(&field.values, i0 + a as isize - 1, parity))
        .sum()
}
