//! Acceptance criteria, one line per criterion. Run with
//! `cargo test --release --test acceptance`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use serde_json::Value;
use wavemap::cli::commands::{detect, run_scenario};
use wavemap::cli::selfsimilar::selfsimilar_report;
use wavemap::cli::verify::{identity_suite, IdentityConfig};
use wavemap::cli::Scenario;
use wavemap::concentration::{detect as detect_state, lift_window, DetectorConfig, LiftWindow};
use wavemap::diagnostics::{
    disk_energy, energy_density, section_energy, total_energy, ConeRegion, EstimateSuite, FluxAccumulator,
};
use wavemap::evolve::{run_observed, ExitReason, Integrator, RunConfig};
use wavemap::field::MapState;
use wavemap::harmonic::{harmonic_residual, lorentz_boost, make_q, GridSpec, StaticQ};
use wavemap::manifold::Sphere;
use wavemap::spectral::{energy_dispersion, smooth_step};

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome, String> {
    Ok(Outcome { pass, detail })
}

fn preset_run(name: &str) -> Result<(Scenario, RunConfig), String> {
    let s = Scenario::preset(name).map_err(|e| e.to_string())?;
    let run = s.run.clone().ok_or_else(|| format!("{name} has no [run]"))?;
    Ok((s, run))
}

fn identities() -> Result<Outcome, String> {
    let r = identity_suite(&IdentityConfig::default()).map_err(|e| e.to_string())?;
    outcome(
        r.passed(),
        format!(
            "contraction {:.2e}, null-frame errors {:.2e} ratios {:.2?}, partition {:.2e}",
            r.contraction,
            r.null_frame_errors.last().copied().unwrap_or(f64::NAN),
            r.null_frame_ratios,
            r.partition
        ),
    )
}

/// Section energies at `t0`, `t1` and the lateral flux between them, plus the
/// largest relative change of the scheme's conserved energy.
fn conservation_run(mut cfg: RunConfig, region: ConeRegion) -> Result<(f64, f64), String> {
    cfg.snapshot_every = usize::MAX;
    let mut acc = FluxAccumulator::new(region, cfg.spacing());
    let (mut e0, mut e1) = (None, None);
    let mut energies = Vec::new();
    let mut err = None;
    run_observed(&cfg, |s, rec| {
        energies.push(rec.discrete_energy);
        acc.push(s);
        let at = |t: f64| (s.t - t).abs() < 1e-9;
        if at(region.t0) || at(region.t1) {
            match section_energy(s, &region) {
                Ok(e) if at(region.t0) => e0 = Some(e),
                Ok(e) => e1 = Some(e),
                Err(e) => err = Some(e.to_string()),
            }
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e);
    }
    let f = acc.finish().map_err(|e| e.to_string())?;
    let (a, b) = (e0.ok_or("no section at t0")?, e1.ok_or("no section at t1")?);
    let drift = energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max) / energies[0];
    Ok(((b - a - f).abs(), drift))
}

fn conservation() -> Result<Outcome, String> {
    let (s, cfg) = preset_run("conservation_smoke")?;
    let cone = s.diagnostics.cone.clone().ok_or("preset has no cone")?;
    let region = ConeRegion::new(cone.apex, cone.t0, cone.t1, cone.delta).map_err(|e| e.to_string())?;
    let mut residuals = Vec::new();
    let mut drift = f64::NAN;
    for nx in [128, 256, 512] {
        let (res, d) = conservation_run(RunConfig { nx, ..cfg.clone() }, region)?;
        residuals.push(res);
        drift = d;
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = drift <= 1e-7 && residuals[2] <= 1e-4 && ratios.iter().all(|r| *r >= 3.5);
    outcome(
        pass,
        format!("drift {drift:.2e} (nx 512), flux residuals {} ratios {ratios:.2?}", sci(&residuals)),
    )
}

fn q_facts() -> Result<Outcome, String> {
    let mut errors = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        let q = make_q(lambda, GridSpec::Radial { nx: 16384, r_max: 128.0 }).map_err(|e| e.to_string())?;
        errors.push(total_energy(&q) / (4.0 * PI) - 1.0);
    }
    let res = |nx: usize| -> Result<(f64, f64), String> {
        let q = make_q(1.0, GridSpec::Square { nx, half_width: 8.0 }).map_err(|e| e.to_string())?;
        Ok((q.h(), harmonic_residual(&q.phi, &Sphere::default(), nx / 8).1))
    };
    let (a, b) = (res(256)?, res(512)?);
    let order = (a.1 / b.1).ln() / (a.0 / b.0).ln();
    let mut boosted = Vec::new();
    for v in [0.0, 0.2, 0.4, 0.6] {
        let s = lorentz_boost(&StaticQ { scale: 0.5, center: [0.0; 2] }, [v, 0.0], 512, 16.0, 0.0)
            .map_err(|e| e.to_string())?;
        boosted.push(disk_energy(&energy_density(&s), [0.0; 2], 12.0).map_err(|e| e.to_string())?);
    }
    let pass = errors.iter().all(|e| e.abs() <= 1e-3)
        && (1.8..=2.2).contains(&order)
        && boosted.windows(2).all(|w| w[1] > w[0]);
    outcome(
        pass,
        format!("E/4π - 1 {}, residual order {order:.3}, boosted energies {boosted:.4?}", sci(&errors)),
    )
}

fn bubbling() -> Result<Outcome, String> {
    let s = Scenario::preset("bubbling_k1").map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = run_scenario(&s, dir.path()).map_err(|e| e.to_string())?;
    let blowup = run.summary["exit"].get("BlowupOverflow").is_some();
    let ev = detect(dir.path(), None, &dir.path().join("detect")).map_err(|e| e.to_string())?;
    let events = ev["events"].as_array().cloned().unwrap_or_default();
    let ratio = ev["scale_ratio"].as_f64().unwrap_or(0.0);
    let last = events.last().cloned().unwrap_or(Value::Null);
    let class = &last["classification"];
    let boost = class["boost"]
        .as_array()
        .map(|b| b.iter().filter_map(Value::as_f64).map(|x| x * x).sum::<f64>().sqrt())
        .unwrap_or(f64::NAN);
    let fit = last["q_fit"]["relative"].as_f64().unwrap_or(f64::NAN);
    let pass = run.code == 0
        && blowup
        && events.len() >= 3
        && ratio >= 4.0
        && class["kind"] == "bubble"
        && boost <= 0.05
        && fit <= 0.05;
    outcome(
        pass,
        format!(
            "exit {}, {} events, r ratio {ratio:.2}, last event {} |v| {boost:.2e}, Q-fit sup distance {fit:.2e}",
            run.summary["exit"],
            events.len(),
            class["kind"]
        ),
    )
}

fn negative_control() -> Result<Outcome, String> {
    let (_, cfg) = preset_run("subthreshold_2d")?;
    let (est, est_cfg) = preset_run("estimate_suite")?;
    if est_cfg.data != cfg.data || est_cfg.nx != cfg.nx {
        return Err("subthreshold_2d and estimate_suite describe different runs".into());
    }
    let est = est.diagnostics.estimates.ok_or("estimate_suite has no estimates")?;
    let detector = DetectorConfig::default();
    let mut suite = EstimateSuite::new(est, cfg.spacing()).map_err(|e| e.to_string())?;
    let mut events = 0;
    let mut max_ed: f64 = 0.0;
    let mut energy = f64::NAN;
    let mut err = None;
    let history = run_observed(&RunConfig { snapshot_every: usize::MAX, ..cfg.clone() }, |s, rec| {
        if rec.step == 0 {
            energy = rec.energy;
        }
        if let Err(e) = suite.push(s) {
            err.get_or_insert(e.to_string());
        }
        match detect_state(s, &detector) {
            Ok(Some(_)) => events += 1,
            Ok(None) => {}
            Err(e) => {
                err.get_or_insert(e.to_string());
            }
        }
        if let Ok(d) = energy_dispersion(s, None) {
            max_ed = max_ed.max(d.value);
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e);
    }
    let reports = suite.finish().map_err(|e| e.to_string())?;
    let completed = history.exit == ExitReason::Completed && history.last().map(|s| s.t) == Some(cfg.t_end);
    let pass = completed && energy <= 0.5 * 4.0 * PI && events == 0 && reports.iter().all(|r| r.pass);
    let ratios: Vec<String> = reports.iter().map(|r| format!("{} {:.3}", r.name, r.ratio)).collect();
    outcome(
        pass,
        format!(
            "E/4π {:.3}, completed {completed}, {events} events (max ED {max_ed:.3}), LHS/RHS [{}] vs K = 10",
            energy / (4.0 * PI),
            ratios.join(", ")
        ),
    )
}

fn self_similar() -> Result<Outcome, String> {
    let s = Scenario::preset("selfsimilar_diag").map_err(|e| e.to_string())?;
    let spec = s.selfsimilar.ok_or("preset has no [selfsimilar]")?;
    let r = selfsimilar_report(&spec).map_err(|e| e.to_string())?;
    let weighted: Vec<f64> = r.weighted.iter().map(|w| w.1).collect();
    outcome(
        r.passed(),
        format!(
            "slope {:.6}, max |ψ| {:.4}, X₀Φ {:.2e}, residual orders {:.3?}, |ln δ| fit residual {:.2e}, weighted energies {weighted:.2?}",
            r.slope, r.max_abs, r.x0_max, r.orders, r.fit_residual
        ),
    )
}

/// Same node values on a grid twice as coarse, at twice the time.
fn dilate(s: &MapState) -> MapState {
    let mut phi = s.phi.clone();
    phi.h *= 2.0;
    phi.origin = phi.origin.map(|o| 2.0 * o);
    let mut dphi = s.dphi.clone();
    dphi.h = phi.h;
    dphi.origin = phi.origin;
    dphi.values.iter_mut().for_each(|v| *v *= 0.5);
    MapState::new(phi, dphi, 2.0 * s.t)
}

fn covariance() -> Result<Outcome, String> {
    let q = make_q(0.2, GridSpec::Radial { nx: 1024, r_max: 4.0 }).map_err(|e| e.to_string())?;
    let mut s = lift_window(&q, LiftWindow { half_width: 2.0, nx: 256 }).map_err(|e| e.to_string())?;
    s.t = 0.25;
    // move the bubble off the grid centre
    for f in [&mut s.phi, &mut s.dphi] {
        f.origin = [f.origin[0] + 0.375, f.origin[1] - 0.25];
    }
    let big = dilate(&s);
    let cfg = DetectorConfig::default();
    let a = detect_state(&s, &cfg).map_err(|e| e.to_string())?.ok_or("no event before dilation")?;
    let b = detect_state(&big, &cfg).map_err(|e| e.to_string())?.ok_or("no event after dilation")?;
    let exact = b.k == a.k - 1 && b.x == a.x.map(|x| 2.0 * x) && b.r == 2.0 * a.r && b.t == 2.0 * a.t;
    let ed_diff = (a.dispersion - b.dispersion).abs();

    // two runs that differ only inside a ball of radius ρ around p
    let cfg = RunConfig {
        nx: 256,
        half_width: 4.0,
        ..RunConfig::new(
            wavemap::evolve::InitialData::GeodesicBump { amplitude: 0.8, width: 0.6, center: [-1.0, 0.0], velocity: 0.0 },
            1.0,
        )
    };
    let base = cfg.initial_state().map_err(|e| e.to_string())?;
    let (p, rho, margin) = ([1.5, 0.5], 0.5, 0.5);
    let period = 2.0 * cfg.half_width;
    let dist = |x: [f64; 2]| {
        let d = |a: f64, b: f64| {
            let t = (a - b).rem_euclid(period);
            t.min(period - t)
        };
        d(x[0], p[0]).hypot(d(x[1], p[1]))
    };
    let mut other = base.clone();
    for j in 0..other.phi.ny {
        for i in 0..other.phi.nx {
            let w = 0.7 * (1.0 - smooth_step(dist(other.phi.position(i, j)) / rho));
            let n = other.phi.node_mut(i, j);
            let (c, sn) = (w.cos(), w.sin());
            let (y, z) = (n[1], n[2]);
            n[1] = c * y - sn * z;
            n[2] = sn * y + c * z;
        }
    }
    let target = Sphere::default();
    let (mut ia, mut ib) = (Integrator::new(&target), Integrator::new(&target));
    let (dt, steps) = cfg.time_step();
    let (mut sa, mut sb) = (base, other);
    for _ in 0..steps {
        sa = ia.step(&sa, dt).map_err(|e| e.to_string())?.0;
        sb = ib.step(&sb, dt).map_err(|e| e.to_string())?.0;
    }
    let t = sa.t;
    let mut outside: f64 = 0.0;
    let mut inside: f64 = 0.0;
    for j in 0..sa.phi.ny {
        for i in 0..sa.phi.nx {
            let d = dist(sa.phi.position(i, j));
            let diff = (0..3)
                .map(|m| {
                    let a = (sa.phi.node(i, j)[m] - sb.phi.node(i, j)[m]).abs();
                    a.max((sa.dphi.node(i, j)[m] - sb.dphi.node(i, j)[m]).abs())
                })
                .fold(0.0, f64::max);
            if d >= rho + t + margin {
                outside = outside.max(diff);
            } else {
                inside = inside.max(diff);
            }
        }
    }
    let pass = exact && ed_diff <= 1e-10 && outside <= 1e-12 && inside > 1e-3;
    outcome(
        pass,
        format!(
            "k {} -> {}, r {:.5} -> {:.5}, grid-exact {exact}, ED diff {ed_diff:.1e}; \
             difference {outside:.1e} beyond ρ + t + {margin} (t = {t}), {inside:.1e} inside",
            a.k, b.k, a.r, b.r
        ),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome, String>);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "algebraic identities", Duration::from_secs(10), identities),
        (2, "conservation and energy flux", Duration::from_secs(300), conservation),
        (3, "Q facts", Duration::from_secs(60), q_facts),
        (4, "bubbling end to end", Duration::from_secs(1800), bubbling),
        (5, "negative control", Duration::from_secs(600), negative_control),
        (6, "self-similar diagnostics", Duration::from_secs(300), self_similar),
        (7, "covariance and finite speed", Duration::from_secs(120), covariance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} ({name}): {} [{:.1} s of {} s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
