use super::quadrature::simpson;
use crate::field::stencil::d1;

/// Map samples on a `ρ = const` slice over a uniform `(y, Θ)` grid.
///
/// Row `a` holds `y_a = y_min + a Δy`; column `b` holds `Θ_b = 2π b / nθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSlice {
    pub y_min: f64,
    pub dy: f64,
    pub ny: usize,
    pub ntheta: usize,
    pub values: Vec<[f64; 3]>,
}

impl HyperbolicSlice {
    pub fn from_fn(y_min: f64, y_max: f64, ny: usize, ntheta: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> Self {
        let dy = (y_max - y_min) / (ny - 1) as f64;
        let mut values = Vec::with_capacity(ny * ntheta);
        for a in 0..ny {
            let y = y_min + a as f64 * dy;
            for b in 0..ntheta {
                values.push(f(y, 2.0 * std::f64::consts::PI * b as f64 / ntheta as f64));
            }
        }
        Self {
            y_min,
            dy,
            ny,
            ntheta,
            values,
        }
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + (self.ny - 1) as f64 * self.dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicEnergy {
    pub value: f64,
    /// Estimated contribution beyond `y_max`, from the decay rate of the last
    /// two radial integrand samples; infinite if the integrand is not decaying.
    pub tail_estimate: f64,
}

/// `½ ∫ (|∂_yΦ|² + sinh⁻²y |∂_ΘΦ|²) cosh y sinh y dy dΘ`; Simpson in `y`,
/// trapezoid in `Θ`.
///
/// `∂_y` uses the 4th-order central stencil with one-sided 2nd-order ends;
/// `∂_Θ` the periodic 4th-order stencil. Rows with `y = 0` drop the angular term.
pub fn hyperbolic_weighted_energy(s: &HyperbolicSlice) -> HyperbolicEnergy {
    let (ny, nt) = (s.ny, s.ntheta);
    let at = |a: usize, b: usize| &s.values[a * nt + b];
    let dtheta = 2.0 * std::f64::consts::PI / nt as f64;
    let mut g = vec![0.0; ny];
    for a in 0..ny {
        let y = s.y_min + a as f64 * s.dy;
        let (sh, ch) = (y.sinh(), y.cosh());
        let mut row = 0.0;
        for b in 0..nt {
            let mut py = [0.0; 3];
            let mut pt = [0.0; 3];
            for c in 0..3 {
                py[c] = if a >= 2 && a + 2 < ny {
                    d1(at(a - 2, b)[c], at(a - 1, b)[c], at(a + 1, b)[c], at(a + 2, b)[c]) / s.dy
                } else if a < 2 {
                    (4.0 * (at(a + 1, b)[c] - at(a, b)[c]) - (at(a + 2, b)[c] - at(a, b)[c])) / (2.0 * s.dy)
                } else {
                    (4.0 * (at(a, b)[c] - at(a - 1, b)[c]) - (at(a, b)[c] - at(a - 2, b)[c])) / (2.0 * s.dy)
                };
                let col = |m: usize| at(a, (b + nt + m - 2) % nt)[c];
                pt[c] = d1(col(0), col(1), col(3), col(4)) / dtheta;
            }
            let yy: f64 = py.iter().map(|v| v * v).sum();
            let tt: f64 = pt.iter().map(|v| v * v).sum();
            row += yy * ch * sh + if sh > 0.0 { tt * ch / sh } else { 0.0 };
        }
        g[a] = 0.5 * row * dtheta;
    }
    let value = simpson(&g, s.dy);
    let tail_estimate = if ny >= 2 && g[ny - 1] > 0.0 && g[ny - 2] > g[ny - 1] {
        let rate = (g[ny - 2] / g[ny - 1]).ln() / s.dy;
        g[ny - 1] / rate
    } else if g[ny - 1] == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    HyperbolicEnergy {
        value,
        tail_estimate,
    }
}
