use super::DiagnosticsError;
use crate::field::GridField;

/// Area and first moments `(A, ∫x, ∫y)` of `[x0, x1] × [y0, y1] ∩ {x² + y² ≤ R²}`.
///
/// Exact up to round-off: the strip is split where the circle crosses the
/// rectangle edges and each piece is integrated in closed form.
pub fn disk_cell_moments(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> (f64, f64, f64) {
    let lo = x0.max(-r);
    let hi = x1.min(r);
    if lo >= hi || y0 >= y1 {
        return (0.0, 0.0, 0.0);
    }
    let mut cuts = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < r {
            let c = (r * r - y * y).sqrt();
            for x in [-c, c] {
                if x > lo && x < hi {
                    cuts.push(x);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    let r2 = r * r;
    let s = |x: f64| (r2 - x * x).max(0.0).sqrt();
    // antiderivatives of s, x s and s²/2
    let f0 = |x: f64| 0.5 * (x * s(x) + r2 * (x / r).clamp(-1.0, 1.0).asin());
    let f1 = |x: f64| -(r2 - x * x).max(0.0).powf(1.5) / 3.0;
    let f2 = |x: f64| 0.5 * (r2 * x - x * x * x / 3.0);
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let m = 0.5 * (p + q);
        let sm = s(m);
        let top_curved = sm < y1;
        let bot_curved = -sm > y0;
        let top = if top_curved { sm } else { y1 };
        let bot = if bot_curved { -sm } else { y0 };
        if top <= bot {
            continue;
        }
        // ∫ top - ∫ bottom, for each weight
        let (ta, tx, ty) = if top_curved {
            (f0(q) - f0(p), f1(q) - f1(p), f2(q) - f2(p))
        } else {
            (y1 * (q - p), 0.5 * y1 * (q * q - p * p), 0.5 * y1 * y1 * (q - p))
        };
        let (ba, bx, by) = if bot_curved {
            (-(f0(q) - f0(p)), -(f1(q) - f1(p)), f2(q) - f2(p))
        } else {
            (y0 * (q - p), 0.5 * y0 * (q * q - p * p), 0.5 * y0 * y0 * (q - p))
        };
        a += ta - ba;
        mx += tx - bx;
        my += ty - by;
    }
    (a, mx, my)
}

/// `∫_{|x - c| ≤ R} f dx` for a scalar periodic-grid density.
///
/// Each node owns its dual cell `[x - h/2, x + h/2]²`. Full cells use the
/// midpoint value plus `h²/24 Δf`; cells crossing the rim are clipped exactly
/// and corrected with the first moment times a central difference gradient.
/// Error is `O(h³)`, exact for affine densities.
pub fn disk_integral(density: &GridField, center: [f64; 2], radius: f64) -> Result<f64, DiagnosticsError> {
    disk_integral_with(density.nx, density.ny, density.h, density.origin, center, radius, |i, j| {
        density.values[j * density.nx + i]
    })
}

/// As [`disk_integral`] with the density given by a node callback. Only nodes
/// within `radius + 2h` of the centre are queried.
pub(crate) fn disk_integral_with(
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
    center: [f64; 2],
    radius: f64,
    f: impl Fn(usize, usize) -> f64,
) -> Result<f64, DiagnosticsError> {
    let cx = (center[0] - origin[0]) / h;
    let cy = (center[1] - origin[1]) / h;
    let rr = radius / h;
    let outside = |lo: f64, n: usize| lo < 2.0 || lo > n as f64 - 3.0;
    if outside(cx - rr, nx) || outside(cx + rr, nx) || outside(cy - rr, ny) || outside(cy + rr, ny) {
        return Err(DiagnosticsError::SectionOutsideGrid {
            radius,
            cx: center[0],
            cy: center[1],
        });
    }
    let i0 = (cx - rr - 1.0).floor().max(1.0) as usize;
    let i1 = ((cx + rr + 1.0).ceil() as usize).min(nx - 2);
    let j0 = (cy - rr - 1.0).floor().max(1.0) as usize;
    let j1 = ((cy + rr + 1.0).ceil() as usize).min(ny - 2);
    let half = 0.5 * h;
    let mut terms = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
    for j in j0..=j1 {
        for i in i0..=i1 {
            // node position relative to the centre
            let x = origin[0] + i as f64 * h - center[0];
            let y = origin[1] + j as f64 * h - center[1];
            let near = (x.abs() - half).max(0.0).hypot((y.abs() - half).max(0.0));
            if near >= radius {
                continue;
            }
            let far = (x.abs() + half).hypot(y.abs() + half);
            if far <= radius {
                let lap = f(i + 1, j) + f(i - 1, j) + f(i, j + 1) + f(i, j - 1) - 4.0 * f(i, j);
                terms.push(h * h * (f(i, j) + lap / 24.0));
                continue;
            }
            let (a, mx, my) = disk_cell_moments(x - half, x + half, y - half, y + half, radius);
            if a <= 0.0 {
                continue;
            }
            let gx = (f(i + 1, j) - f(i - 1, j)) / (2.0 * h);
            let gy = (f(i, j + 1) - f(i, j - 1)) / (2.0 * h);
            terms.push(a * f(i, j) + gx * (mx - a * x) + gy * (my - a * y));
        }
    }
    Ok(crate::field::pairwise_sum(&terms))
}

/// Composite Simpson; an even number of samples closes with a 3/8 panel.
pub(crate) fn simpson(g: &[f64], h: f64) -> f64 {
    let n = g.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (g[0] + g[1]),
        3 => h / 3.0 * (g[0] + 4.0 * g[1] + g[2]),
        _ => {
            let m = if n % 2 == 1 { n } else { n - 3 };
            let mut total = 0.0;
            if m >= 3 {
                let mut acc = g[0] + g[m - 1];
                for (a, v) in g.iter().enumerate().take(m - 1).skip(1) {
                    acc += if a % 2 == 1 { 4.0 * v } else { 2.0 * v };
                }
                total = h / 3.0 * acc;
            }
            if m < n {
                total += 3.0 * h / 8.0 * (g[n - 4] + 3.0 * g[n - 3] + 3.0 * g[n - 2] + g[n - 1]);
            }
            total
        }
    }
}
