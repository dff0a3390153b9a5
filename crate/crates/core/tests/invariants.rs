use proptest::prelude::*;
use std::f64::consts::PI;

use wavemap::concentration::{classify, ClassifyConfig};
use wavemap::diagnostics::{
    disk_integral, lift_radial, momentum_density, stress, ConeRegion, FluxAccumulator, Multiplier,
};
use wavemap::evolve::{run, wave_map_residual_with_margin, InitialData, Integrator, Propagation, RunConfig};
use wavemap::field::{gradient, GridField, MapState, SpacetimePoint};
use wavemap::harmonic::{lorentz_boost, self_similar_state, shoot_hyperbolic, StaticQ};
use wavemap::manifold::Sphere;
use wavemap::spectral::smooth_step;

fn bump(amplitude: f64, width: f64, center: [f64; 2]) -> InitialData {
    InitialData::GeodesicBump {
        amplitude,
        width,
        center,
        velocity: 0.0,
    }
}

fn square(nx: usize, half_width: f64, t_end: f64, data: InitialData) -> RunConfig {
    RunConfig {
        nx,
        half_width,
        ..RunConfig::new(data, t_end)
    }
}

/// Interior max of `-∂_t P₀ + ∂_i P_i - ½T·π` at the middle of five
/// consecutive states, and the largest `|∂_t P₀|` there.
fn divergence_defect(s: &[MapState], apex: SpacetimePoint, m: Multiplier, margin: usize) -> (f64, f64) {
    let dt = s[1].t - s[0].t;
    let mid = &s[2];
    let p: Vec<Vec<f64>> = s.iter().map(|x| momentum_density(x, apex, m).unwrap().p0).collect();
    let here = momentum_density(mid, apex, m).unwrap();
    let t = stress(mid).unwrap();
    let tau = mid.t - apex.t;
    let mut px = mid.phi.zeros_like(1);
    let mut py = mid.phi.zeros_like(1);
    for j in 0..mid.phi.ny {
        for i in 0..mid.phi.nx {
            let n = j * mid.phi.nx + i;
            let p = mid.phi.position(i, j);
            let x = [p[0] - apex.x[0], p[1] - apex.x[1]];
            let v = match m {
                Multiplier::Time => [1.0, 0.0, 0.0],
                _ => {
                    let rho = (tau * tau - x[0] * x[0] - x[1] * x[1]).sqrt();
                    [tau / rho, x[0] / rho, x[1] / rho]
                }
            };
            let c = &t.t[n];
            px.values[n] = c[1] * v[0] + c[3] * v[1] + c[4] * v[2];
            py.values[n] = c[2] * v[0] + c[4] * v[1] + c[5] * v[2];
        }
    }
    let (dx, _) = gradient(&px);
    let (_, dy) = gradient(&py);
    let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
    let nx = mid.phi.nx;
    for j in margin..mid.phi.ny - margin {
        for i in margin..nx - margin {
            let n = j * nx + i;
            let dp0 = (p[0][n] - 8.0 * p[1][n] + 8.0 * p[3][n] - p[4][n]) / (12.0 * dt);
            let r = -dp0 + dx.values[n] + dy.values[n] - here.contraction[n];
            worst = worst.max(r.abs());
            scale = scale.max(dp0.abs()).max(here.contraction[n]);
        }
    }
    (worst, scale)
}

#[test]
fn multiplier_divergence_rule_converges() {
    let apex = SpacetimePoint { t: -3.0, x: [0.0, 0.0] };
    for m in [Multiplier::Time, Multiplier::X0] {
        let defect = |nx: usize| {
            let mut cfg = square(nx, 4.0, 0.25, bump(0.5, 0.9, [0.2, -0.1]));
            cfg.cfl = 0.25;
            let h = run(&cfg).unwrap();
            let k = h.snapshots.len() / 2;
            divergence_defect(&h.snapshots[k - 2..=k + 2], apex, m, nx / 8)
        };
        let d: Vec<(f64, f64)> = [64, 128, 256].into_iter().map(defect).collect();
        for w in d.windows(2) {
            assert!(w[0].0 / w[1].0 > 3.5, "{m:?}: {d:?}");
        }
        assert!(d[2].0 < 1e-4 * d[2].1, "{m:?}: {d:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn constraint_drift_is_fifth_order_in_dt(amp in 0.3f64..1.2, width in 0.6f64..1.0, cx in -0.5f64..0.5) {
        let drift = |nx: usize| {
            let s = square(nx, 4.0, 1.0, bump(amp, width, [cx, 0.0])).initial_state().unwrap();
            let target = Sphere::default();
            let mut int = Integrator::new(&target).with_blowup_factor(10.0);
            int.step(&s, 0.5 * s.h()).unwrap().1
        };
        let (a, b) = (drift(64), drift(128));
        prop_assert!(a / b > 32.0, "{a:e} -> {b:e}");
    }

    #[test]
    fn runs_differing_in_a_ball_agree_outside_its_cone(
        px in -1.5f64..1.5,
        py in -1.5f64..1.5,
        kick in 0.2f64..1.0,
    ) {
        let cfg = square(128, 4.0, 0.5, bump(0.8, 0.6, [-1.0, 0.5]));
        let base = cfg.initial_state().unwrap();
        let (rho, period) = (0.5, 8.0);
        let margin = 16.0 * base.h();
        let dist = |x: [f64; 2]| {
            let d = |a: f64, b: f64| {
                let t = (a - b).rem_euclid(period);
                t.min(period - t)
            };
            d(x[0], px).hypot(d(x[1], py))
        };
        let mut other = base.clone();
        for j in 0..other.phi.ny {
            for i in 0..other.phi.nx {
                let w = kick * (1.0 - smooth_step(dist(other.phi.position(i, j)) / rho));
                let n = other.phi.node_mut(i, j);
                let (c, s) = (w.cos(), w.sin());
                let (a, b) = (n[0], n[2]);
                n[0] = c * a - s * b;
                n[2] = s * a + c * b;
            }
        }
        let target = Sphere::default();
        let (mut ia, mut ib) = (Integrator::new(&target).with_blowup_factor(10.0), Integrator::new(&target).with_blowup_factor(10.0));
        let (dt, steps) = cfg.time_step();
        let (mut a, mut b) = (base, other);
        for _ in 0..steps {
            a = ia.step(&a, dt).unwrap().0;
            b = ib.step(&b, dt).unwrap().0;
        }
        let t = steps as f64 * dt;
        let mut worst: f64 = 0.0;
        for j in 0..a.phi.ny {
            for i in 0..a.phi.nx {
                if dist(a.phi.position(i, j)) < rho + t + margin {
                    continue;
                }
                for c in 0..3 {
                    worst = worst
                        .max((a.phi.node(i, j)[c] - b.phi.node(i, j)[c]).abs())
                        .max((a.dphi.node(i, j)[c] - b.dphi.node(i, j)[c]).abs());
                }
            }
        }
        prop_assert!(worst <= 1e-12, "{worst:e}");
    }

    #[test]
    fn q_minimises_energy_in_the_arctan_family(lambda in 0.5f64..2.0) {
        // u = A · 2 arctan(r/λ) on r ≤ 1000 λ
        let n = 1 << 17;
        let h = 1000.0 * lambda / n as f64;
        let energy = |a: f64| {
            let mut phi = GridField::zeros_radial(n, h, 1);
            for (i, v) in phi.values.iter_mut().enumerate() {
                *v = a * 2.0 * (i as f64 * h / lambda).atan();
            }
            let dphi = phi.zeros_like(1);
            wavemap::diagnostics::total_energy(&MapState::new(phi, dphi, 0.0))
        };
        let scan: Vec<(f64, f64)> = (0..=20).map(|i| 0.5 + 0.05 * i as f64).map(|a| (a, energy(a))).collect();
        let best = scan.iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        prop_assert!((best.0 - 1.0).abs() < 1e-9, "{scan:?}");
        prop_assert!((best.1 / (4.0 * PI) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn outgoing_pulses_are_never_bubbles(amp in 0.3f64..0.8, radius in 0.5f64..1.5) {
        let data = InitialData::RingPulse {
            amplitude: amp,
            radius,
            width: 0.2,
            center: [0.0; 2],
            direction: Propagation::Outgoing,
        };
        let mut cfg = square(128, 4.0, 0.5, data);
        cfg.blowup_factor = 10.0;
        let h = run(&cfg).unwrap();
        let c = classify(h.last().unwrap(), &ClassifyConfig::default()).unwrap();
        prop_assert!(!c.is_bubble(), "{c:?}");
    }
}

#[test]
fn lifted_equivariant_runs_match_the_radial_run() {
    let data = InitialData::ArctanBump {
        amplitude: 0.4,
        scale: 0.5,
        cutoff: 1.0,
        velocity: 0.0,
    };
    let radial = RunConfig {
        degree: 1,
        nx: 8192,
        half_width: 8.0,
        cfl: 0.25,
        ..RunConfig::new(data.clone(), 0.5)
    };
    let reference = run(&radial).unwrap();
    let diff = |nx: usize| {
        let start = lift_radial(&reference.snapshots[0], nx, 4.0).unwrap();
        let end_ref = lift_radial(reference.last().unwrap(), nx, 4.0).unwrap();
        let target = Sphere::default();
        let mut int = Integrator::new(&target).with_blowup_factor(10.0);
        let steps = (0.5 / (0.5 * start.h())).round() as usize;
        let dt = 0.5 / steps as f64;
        let mut s = start;
        for _ in 0..steps {
            s = int.step(&s, dt).unwrap().0;
        }
        let mut worst: f64 = 0.0;
        for j in 0..nx {
            for i in 0..nx {
                let x = s.phi.position(i, j);
                if x[0].hypot(x[1]) > 2.0 {
                    continue;
                }
                for c in 0..3 {
                    worst = worst.max((s.phi.node(i, j)[c] - end_ref.phi.node(i, j)[c]).abs());
                }
            }
        }
        worst
    };
    let (a, b) = (diff(64), diff(128));
    assert!(b < 1e-4, "{b}");
    assert!(a / b > 10.0, "{a} -> {b}");
}

#[test]
fn flux_is_additive_over_shared_endpoints() {
    let data = InitialData::RingPulse {
        amplitude: 0.3,
        radius: 1.5,
        width: 0.4,
        center: [0.0; 2],
        direction: Propagation::Incoming,
    };
    let mut cfg = square(128, 4.0, 1.0, data);
    cfg.blowup_factor = 0.5;
    let h = run(&cfg).unwrap();
    let f = |t0: f64, t1: f64| {
        let mut acc = FluxAccumulator::new(ConeRegion::centered(t0, t1, 0.0).unwrap(), h.snapshots[0].h());
        for s in &h.snapshots {
            acc.push(s);
        }
        acc.finish().unwrap()
    };
    let whole = f(0.5, 1.0);
    let parts = f(0.5, 0.75) + f(0.75, 1.0);
    assert!(whole.abs() > 1e-3);
    assert!((whole - parts).abs() <= 1e-12, "{whole} vs {parts}");
}

#[test]
fn boosting_preserves_the_wave_map_residual() {
    let defect = |nx: usize| {
        let hw = 4.0;
        let dt = 0.25 * 2.0 * hw / nx as f64;
        let traj = |v: f64| -> Vec<MapState> {
            [-dt, 0.0, dt]
                .iter()
                .map(|t| lorentz_boost(&StaticQ { scale: 0.5, center: [0.0; 2] }, [v, 0.0], nx, hw, *t).unwrap())
                .collect()
        };
        let target = Sphere::default();
        let a = wave_map_residual_with_margin(&traj(0.0), &target, nx / 8).unwrap()[0];
        let b = wave_map_residual_with_margin(&traj(0.5), &target, nx / 8).unwrap()[0];
        (b - a).abs()
    };
    let (a, b) = (defect(128), defect(256));
    let order = (a / b).log2();
    assert!(order > 1.7, "{a} -> {b}");
}

#[test]
fn x0_energy_separates_self_similar_maps_from_bubbles() {
    let apex = SpacetimePoint::origin();
    let x0_integral = |s: &MapState| {
        let m = momentum_density(s, apex, Multiplier::X0).unwrap();
        let mut d = s.phi.zeros_like(1);
        for (n, v) in d.values.iter_mut().enumerate() {
            *v = if m.valid[n] { m.contraction[n] } else { 0.0 };
        }
        disk_integral(&d, [0.0; 2], 0.5).unwrap()
    };
    let p = shoot_hyperbolic(1, PI / 2.0, 12.0).unwrap();
    let ss = self_similar_state(&p, 1.0, 256, 1.0);
    let q = lorentz_boost(&StaticQ { scale: 0.3, center: [0.0; 2] }, [0.0, 0.0], 256, 1.0, 1.0).unwrap();
    let (a, b) = (x0_integral(&ss), x0_integral(&q));
    assert!(a < 1e-12, "{a}");
    assert!(b > 0.1, "{b}");
}
