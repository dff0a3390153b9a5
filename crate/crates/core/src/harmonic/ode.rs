//! Dormand–Prince 5(4) with error control and Hermite dense output.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Accepted steps `(x, y, y')` of an integration.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Trajectory<const N: usize> {
    pub xs: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub ds: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    /// Cubic Hermite interpolation; clamps to the end points.
    pub fn eval(&self, x: f64) -> ([f64; N], [f64; N]) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (self.ys[0], self.ds[0]);
        }
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1], self.ds[n - 1]);
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let (d00, d10, d01, d11) = (
            6.0 * s * s - 6.0 * s,
            3.0 * s * s - 4.0 * s + 1.0,
            6.0 * s - 6.0 * s * s,
            3.0 * s * s - 2.0 * s,
        );
        let mut y = [0.0; N];
        let mut d = [0.0; N];
        for c in 0..N {
            let (y0, y1, m0, m1) = (self.ys[i][c], self.ys[i + 1][c], self.ds[i][c], self.ds[i + 1][c]);
            y[c] = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
            d[c] = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
        }
        (y, d)
    }

    /// Quintic Hermite for component `c` whose derivative is component `dc`,
    /// matching value, slope and curvature at both knots (C² in `x`).
    pub fn eval_c2(&self, x: f64, c: usize, dc: usize) -> (f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (self.ys[0][c], self.ys[0][dc]);
        }
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1][c], self.ys[n - 1][dc]);
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (s2, s3, s4, s5) = (s * s, s.powi(3), s.powi(4), s.powi(5));
        let b = [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
            0.5 * (s3 - 2.0 * s4 + s5),
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        ];
        let db = [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.5 * s2 - 4.0 * s3 + 2.5 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        ];
        let (a, z) = (&self.ys[i], &self.ys[i + 1]);
        let w = [a[c], h * a[dc], h * h * self.ds[i][dc], h * h * self.ds[i + 1][dc], h * z[dc], z[c]];
        let v = (0..6).map(|m| b[m] * w[m]).sum();
        let d = (0..6).map(|m| db[m] * w[m]).sum::<f64>() / h;
        (v, d)
    }

    pub fn last(&self) -> [f64; N] {
        *self.ys.last().unwrap()
    }
}

/// Integrate `y' = f(x, y)` from `x0` to `x1` with per-step error
/// `≤ tol max(floor, |y|)` componentwise. Returns `None` if the solution leaves the
/// finite range or the step size collapses.
pub(crate) fn dopri<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x1: f64,
    tol: f64,
    floor: f64,
) -> Option<Trajectory<N>> {
    let mut x = x0;
    let mut y = y0;
    let mut k0 = f(x, &y);
    let mut out = Trajectory {
        xs: vec![x],
        ys: vec![y],
        ds: vec![k0],
    };
    let mut h = ((x1 - x0) * 1e-3).min(1e-3 * (1.0 + x0.abs()));
    while x < x1 {
        if x + h > x1 {
            h = x1 - x;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for c in 0..N {
                for m in 0..s {
                    ys[c] += h * A[s][m] * k[m][c];
                }
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for c in 0..N {
            let mut e = 0.0;
            for s in 0..7 {
                y5[c] += h * B5[s] * k[s][c];
                e += h * (B5[s] - B4[s]) * k[s][c];
            }
            err = err.max(e.abs() / (tol * floor.max(y[c].abs()).max(y5[c].abs())));
        }
        if !err.is_finite() {
            h *= 0.1;
        } else if err <= 1.0 {
            x += h;
            y = y5;
            if y.iter().any(|v| !v.is_finite()) {
                return None;
            }
            k0 = k[6];
            out.xs.push(x);
            out.ys.push(y);
            out.ds.push(k0);
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 1e-14 * (1.0 + x.abs()) {
            return None;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let t = dopri(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, 1e-10, 1.0).unwrap();
        let y = t.last();
        assert!((y[0] - 10f64.sin()).abs() < 1e-8);
        assert!((y[1] - 10f64.cos()).abs() < 1e-8);
        let (v, d) = t.eval(3.3);
        assert!((v[0] - 3.3f64.sin()).abs() < 1e-6);
        assert!((d[0] - 3.3f64.cos()).abs() < 1e-5);
    }

    #[test]
    fn blowup_is_reported() {
        assert!(dopri(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, 1e-10, 1.0).is_none());
    }
}
