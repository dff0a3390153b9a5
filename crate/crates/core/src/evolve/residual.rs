use super::{rhs, EvolveError};
use crate::field::MapState;
use crate::manifold::Target;

/// PDE residual of a stored trajectory.
///
/// For each consecutive triple, the max over interior nodes of
/// `|(Φ⁺ - 2Φ + Φ⁻) / Δt² - rhs(Φ, ∂_tΦ)|`. The interior drops `max(4, n/8)`
/// nodes at each edge of a periodic grid and at the outer edge of a radial one.
pub fn wave_map_residual(
    snapshots: &[MapState],
    target: &dyn Target,
) -> Result<Vec<f64>, EvolveError> {
    let n = snapshots.first().map_or(0, |s| s.phi.nx);
    wave_map_residual_with_margin(snapshots, target, (n / 8).max(4))
}

pub fn wave_map_residual_with_margin(
    snapshots: &[MapState],
    target: &dyn Target,
    margin: usize,
) -> Result<Vec<f64>, EvolveError> {
    if snapshots.len() < 3 {
        return Err(EvolveError::TooFewSnapshots(snapshots.len()));
    }
    let dt = snapshots[1].t - snapshots[0].t;
    for w in snapshots.windows(2) {
        let gap = w[1].t - w[0].t;
        if !(gap > 0.0) || (gap - dt).abs() > 1e-9 * dt.abs() {
            return Err(EvolveError::NonuniformCadence { a: dt, b: gap });
        }
    }
    let mut out = Vec::with_capacity(snapshots.len() - 2);
    for w in snapshots.windows(3) {
        let (prev, mid, next) = (&w[0], &w[1], &w[2]);
        let acc = rhs(target, mid);
        let f = &mid.phi;
        let nc = f.ncomp;
        let inside = |i: usize, j: usize| {
            if f.is_radial() {
                i + margin < f.nx
            } else {
                i >= margin && j >= margin && i + margin < f.nx && j + margin < f.ny
            }
        };
        let mut worst: f64 = 0.0;
        for j in 0..f.ny {
            for i in 0..f.nx {
                if !inside(i, j) {
                    continue;
                }
                let k = (j * f.nx + i) * nc;
                let mut s = 0.0;
                for c in 0..nc {
                    let d2 = (next.phi.values[k + c] - 2.0 * f.values[k + c]
                        + prev.phi.values[k + c])
                        / (dt * dt);
                    s += (d2 - acc.values[k + c]).powi(2);
                }
                worst = worst.max(s.sqrt());
            }
        }
        out.push(worst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridField;
    use crate::manifold::Sphere;

    fn geodesic_snapshot(t: f64, c: f64) -> MapState {
        let phi = GridField::zeros_square(16, 1.0, 3)
            .from_fn(|_, v| v.copy_from_slice(&[(c * t).sin(), 0.0, (c * t).cos()]));
        let dphi = phi
            .zeros_like(3)
            .from_fn(|_, v| v.copy_from_slice(&[c * (c * t).cos(), 0.0, -c * (c * t).sin()]));
        MapState::new(phi, dphi, t)
    }

    #[test]
    fn geodesic_trajectory_has_dt2_residual() {
        let res = |dt: f64| {
            let snaps: Vec<_> = (0..3).map(|n| geodesic_snapshot(0.2 + n as f64 * dt, 1.5)).collect();
            wave_map_residual(&snaps, &Sphere::default()).unwrap()[0]
        };
        let ratio = res(0.02) / res(0.01);
        assert!(res(0.01) < 1e-4);
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn corrupted_snapshot_is_flagged() {
        let mut snaps: Vec<_> = (0..5).map(|n| geodesic_snapshot(n as f64 * 0.01, 1.0)).collect();
        snaps[2].phi.values.iter_mut().for_each(|v| *v = 0.0);
        let r = wave_map_residual(&snaps, &Sphere::default()).unwrap();
        assert!(r[1] > 1e3 && r[0] > 1e3 && r[2] > 1e3);
    }

    #[test]
    fn nonuniform_cadence_is_rejected() {
        let snaps: Vec<_> = [0.0, 0.01, 0.03].iter().map(|&t| geodesic_snapshot(t, 1.0)).collect();
        assert!(matches!(
            wave_map_residual(&snaps, &Sphere::default()),
            Err(EvolveError::NonuniformCadence { .. })
        ));
        assert!(matches!(
            wave_map_residual(&snaps[..2], &Sphere::default()),
            Err(EvolveError::TooFewSnapshots(2))
        ));
    }
}
