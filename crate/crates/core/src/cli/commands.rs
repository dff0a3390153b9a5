use serde::Serialize;
use std::borrow::Cow;
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::scenario::{ConeSpec, DiagnosticsSpec, Scenario};
use super::selfsimilar::selfsimilar_report;
use super::verify::{identity_suite, IdentityConfig};
use super::{CliError, Command, ProfileKind, Suite};
use crate::concentration::{
    cauchy_check, classify, fit_q_profile, flux_window, lift_window, rescale, rescale_radial, scan, time_reversed,
    ClassifyConfig, DetectorConfig, RescaleFrame,
};
use crate::diagnostics::{
    discrete_energy, estimate_suite, max_gradient, section_energy, total_energy, ConeRegion, EstimateSuite,
    FluxAccumulator,
};
use crate::evolve::{run_observed, ExitReason, History, RunConfig, RunError, StepRecord};
use crate::field::{read_snapshot, snapshot_file_name, write_snapshot, MapState, SpacetimePoint, Topology};
use crate::harmonic::{make_q, shoot_hyperbolic, GridSpec};
use crate::spectral::{energy_dispersion, Dispersion, LittlewoodPaley};

pub fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, preset, out } => {
            let scenario = match (config, preset) {
                (Some(path), _) => Scenario::load(&path)?,
                (None, Some(name)) => Scenario::preset(&name)?,
                (None, None) => return Err(CliError::Validation("one of --config or --preset is required".into())),
            };
            let out = out
                .or_else(|| scenario.out.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
            let outcome = run_scenario(&scenario, &out)?;
            eprintln!("{}: {} -> {}", scenario.name, outcome.message, out.display());
            Ok(outcome.code)
        }
        Command::Diagnose { history, report, config } => {
            let csv = report.with_file_name("sections.csv");
            let value = diagnose(&history, config.as_deref(), Some(&csv))?;
            write_json(&report, &value)?;
            Ok(0)
        }
        Command::Ed { snapshot, eps } => {
            let state = read_snapshot(&snapshot).map_err(|e| CliError::Validation(e.to_string()))?;
            if !(eps > 0.0) {
                return Err(CliError::Validation(format!("--eps must be positive, got {eps}")));
            }
            let d = dispersion_of(&state, &DetectorConfig::default())?;
            print!("{}", ed_table(&d, eps));
            Ok(0)
        }
        Command::Detect { history, config, out } => {
            let out = out.unwrap_or_else(|| history.join("detect"));
            let value = detect(&history, config.as_deref(), &out)?;
            write_json(&out.join("events.json"), &value)?;
            println!(
                "{} events; written to {}",
                value["events"].as_array().map_or(0, |a| a.len()),
                out.display()
            );
            Ok(0)
        }
        Command::Profile {
            kind,
            scale,
            nx,
            r_max,
            degree,
            limit,
            y_max,
            out,
        } => {
            let (csv, report) = match kind {
                ProfileKind::Q => q_profile(scale, nx, r_max)?,
                ProfileKind::Hyperbolic => hyperbolic_profile(degree, limit, y_max)?,
            };
            if let Some(path) = out {
                fs::write(&path, csv).map_err(|e| io_error(&path, e))?;
            }
            println!("{}", serde_json::to_string_pretty(&report).map_err(CliError::runtime)?);
            Ok(0)
        }
        Command::Verify { suite: Suite::Identities } => {
            let r = identity_suite(&IdentityConfig::default()).map_err(CliError::runtime)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(CliError::runtime)?);
            Ok(if r.passed() { 0 } else { 2 })
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn csv_writer(path: &Path, header: &str) -> Result<BufWriter<File>, CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?);
    writeln!(w, "{header}").map_err(|e| io_error(path, e))?;
    Ok(w)
}

/// Comma-joined floats with 17 significant digits.
fn row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

/// The state itself, or its lift through the detector's window if radial.
fn planar<'a>(state: &'a MapState, detector: &DetectorConfig) -> Result<Cow<'a, MapState>, CliError> {
    Ok(match state.topology() {
        Topology::Radial { .. } => Cow::Owned(lift_window(state, detector.lift).map_err(CliError::runtime)?),
        Topology::Periodic => Cow::Borrowed(state),
    })
}

fn dispersion_of(state: &MapState, detector: &DetectorConfig) -> Result<Dispersion, CliError> {
    let s = planar(state, detector)?;
    energy_dispersion(&s, None).map_err(CliError::runtime)
}

pub fn ed_table(d: &Dispersion, eps: f64) -> String {
    let mut s = String::from("k,sup_phi,sup_dphi,value\n");
    for b in &d.table {
        s.push_str(&format!("{},{}\n", b.k, row(&[b.sup_phi, b.sup_dphi, b.value])));
    }
    let verdict = if d.value >= eps { "above" } else { "below" };
    s.push_str(&format!(
        "ED = {:.6e} at k = {}, x = ({:.6}, {:.6}); {verdict} eps = {eps}\n",
        d.value, d.k, d.x[0], d.x[1]
    ));
    s
}

/// `C_sym` and overlap mass per band on the grid of `state` (lifted if radial).
fn archived_constants(state: &MapState, detector: &DetectorConfig) -> Result<Value, CliError> {
    let s = planar(state, detector)?;
    let lp = LittlewoodPaley::new(&s.phi).map_err(CliError::runtime)?;
    let (lo, hi) = lp.range();
    let mut bands = Vec::new();
    for k in lo..=hi {
        bands.push(json!({
            "k": k,
            "c_sym": lp.kernel_norm(k).map_err(CliError::runtime)?,
            "overlap": lp.overlap_mass(k).map_err(CliError::runtime)?,
        }));
    }
    Ok(json!({
        "energy_threshold": detector.energy_threshold,
        "dispersion_epsilon": detector.epsilon,
        "k_range": [lo, hi],
        "bands": bands,
    }))
}

pub struct RunOutcome {
    pub code: i32,
    pub message: String,
    pub summary: Value,
}

fn cone_region(c: &ConeSpec) -> Result<ConeRegion, CliError> {
    ConeRegion::new(c.apex, c.t0, c.t1, c.delta).map_err(|e| CliError::Validation(e.to_string()))
}

fn drift(series: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> f64 {
    let e0 = series.first().map_or(0.0, &f);
    let worst = series.iter().map(|r| (f(r) - e0).abs()).fold(0.0, f64::max);
    if e0 != 0.0 {
        worst / e0.abs()
    } else {
        worst
    }
}

/// Run everything a scenario asks for and write its output directory.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut summary = json!({ "scenario": s });
    let mut code = 0;
    let mut message = String::from("completed");
    if let Some(spec) = &s.selfsimilar {
        let r = selfsimilar_report(spec).map_err(CliError::runtime)?;
        if !r.passed() {
            code = 2;
            message = "self-similar checks failed".into();
        }
        summary["selfsimilar"] = serde_json::to_value(&r).map_err(CliError::runtime)?;
        let (csv, _) = hyperbolic_profile(spec.degree, spec.limit, spec.y_max)?;
        let path = out.join("profile.csv");
        fs::write(&path, csv).map_err(|e| io_error(&path, e))?;
    }
    if let Some(cfg) = &s.run {
        let (c, m) = evolve_and_record(s, cfg, out, &mut summary)?;
        if c != 0 || code == 0 {
            code = c;
            message = m;
        }
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(RunOutcome { code, message, summary })
}

fn evolve_and_record(s: &Scenario, cfg: &RunConfig, out: &Path, summary: &mut Value) -> Result<(i32, String), CliError> {
    let h = cfg.spacing();
    let series_path = out.join("series.csv");
    let mut series = csv_writer(&series_path, "step,t,energy,max_grad,constraint_drift,discrete_energy")?;
    let region = s.diagnostics.cone.as_ref().map(cone_region).transpose()?;
    let mut flux = region.map(|r| FluxAccumulator::new(r, h));
    let mut sections: Vec<(f64, f64)> = Vec::new();
    let mut suite = match &s.diagnostics.estimates {
        Some(e) => Some(EstimateSuite::new(e.clone(), h).map_err(|e| CliError::Validation(e.to_string()))?),
        None => None,
    };
    let mut failure: Option<CliError> = None;
    let result = run_observed(cfg, |state, rec| {
        if failure.is_some() {
            return;
        }
        let line = format!(
            "{},{}",
            rec.step,
            row(&[rec.t, rec.energy, rec.max_grad, rec.constraint_drift, rec.discrete_energy])
        );
        if let Err(e) = writeln!(series, "{line}") {
            failure = Some(io_error(&series_path, e));
        }
        if let (Some(acc), Some(r)) = (flux.as_mut(), region.as_ref()) {
            acc.push(state);
            if r.contains_time(state.t) {
                match section_energy(state, r) {
                    Ok(e) => sections.push((state.t, e)),
                    Err(e) => failure = Some(CliError::runtime(e)),
                }
            }
        }
        if let Some(suite) = suite.as_mut() {
            if let Err(e) = suite.push(state) {
                failure = Some(CliError::runtime(e));
            }
        }
    });
    series.flush().map_err(|e| io_error(&series_path, e))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let history = match result {
        Ok(h) => h,
        Err(RunError::BlowupOverflow { history, .. }) => *history,
        Err(RunError::Evolve(e)) => return Err(CliError::runtime(e)),
    };
    for snap in &history.snapshots {
        let path = out.join(snapshot_file_name(snap.t));
        write_snapshot(&path, snap).map_err(CliError::runtime)?;
    }
    let first = history.snapshots.first().ok_or_else(|| CliError::Runtime("empty history".into()))?;
    summary["exit"] = serde_json::to_value(history.exit).map_err(CliError::runtime)?;
    summary["grid"] = json!({
        "h": h,
        "dt": history.dt,
        "steps": history.series.len().saturating_sub(1),
        "snapshots": history.snapshots.len(),
    });
    summary["final"] = serde_json::to_value(history.series.last()).map_err(CliError::runtime)?;
    summary["energy"] = json!({
        "initial": history.series.first().map(|r| r.energy),
        "relative_drift": drift(&history.series, |r| r.energy),
        "discrete_relative_drift": drift(&history.series, |r| r.discrete_energy),
    });
    summary["constants"] = archived_constants(first, &s.detector)?;
    if let (Some(acc), Some(r)) = (flux, region) {
        summary["cone"] = cone_summary(&r, &sections, acc.finish().map_err(CliError::runtime)?);
        write_sections(&out.join("sections.csv"), &sections)?;
    }
    if let Some(suite) = suite {
        summary["estimates"] = match suite.finish() {
            Ok(reports) => serde_json::to_value(reports).map_err(CliError::runtime)?,
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    if s.diagnostics.dispersion {
        summary["dispersion"] = dispersion_series(&history, &s.detector, &out.join("dispersion.csv"))?;
    }
    Ok(match history.exit {
        ExitReason::Completed => (0, "completed".to_string()),
        ExitReason::BlowupOverflow { t, .. } if s.expect_blowup => (0, format!("blow-up at t = {t} (expected)")),
        ExitReason::BlowupOverflow { t, .. } => (2, format!("resolution lost at t = {t}")),
    })
}

fn write_sections(path: &Path, sections: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = csv_writer(path, "t,section_energy")?;
    for (t, e) in sections {
        writeln!(w, "{}", row(&[*t, *e])).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn cone_summary(r: &ConeRegion, sections: &[(f64, f64)], flux: f64) -> Value {
    let at = |t: f64| {
        sections
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .map(|p| p.1)
    };
    let (e0, e1) = (at(r.t0), at(r.t1));
    let residual = match (e0, e1) {
        (Some(a), Some(b)) => Some(b - a - flux),
        _ => None,
    };
    json!({
        "t0": r.t0,
        "t1": r.t1,
        "section_energy_t0": e0,
        "section_energy_t1": e1,
        "flux": flux,
        "residual": residual,
    })
}

fn dispersion_series(history: &History, detector: &DetectorConfig, path: &Path) -> Result<Value, CliError> {
    let mut w = csv_writer(path, "t,ed,k")?;
    let mut worst = (0.0, f64::NAN, 0);
    for s in &history.snapshots {
        let d = dispersion_of(s, detector)?;
        writeln!(w, "{},{}", row(&[s.t, d.value]), d.k).map_err(|e| io_error(path, e))?;
        if d.value > worst.0 {
            worst = (d.value, s.t, d.k);
        }
    }
    w.flush().map_err(|e| io_error(path, e))?;
    Ok(json!({ "max": worst.0, "t": worst.1, "k": worst.2, "epsilon": detector.epsilon }))
}

/// Snapshots of a directory, sorted by time, plus its summary.json if present.
pub fn load_history(dir: &Path) -> Result<(History, Option<Value>), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snap_") && n.ends_with(".bin"))
        })
        .collect();
    paths.sort();
    let mut snaps = paths
        .iter()
        .map(|p| read_snapshot(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if snaps.is_empty() {
        return Err(CliError::Validation(format!("no snap_*.bin files in {}", dir.display())));
    }
    snaps.sort_by(|a, b| a.t.total_cmp(&b.t));
    let summary = match fs::read_to_string(dir.join("summary.json")) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("summary.json: {e}")))?),
        Err(_) => None,
    };
    let mut history = History::from_snapshots(snaps);
    if let Some(exit) = summary.as_ref().and_then(|s: &Value| s.get("exit")) {
        history.exit = serde_json::from_value(exit.clone()).unwrap_or(ExitReason::Completed);
    }
    Ok((history, summary))
}

/// Analysis sections of a scenario, from a file or a summary echo.
struct Analysis {
    diagnostics: DiagnosticsSpec,
    detector: DetectorConfig,
    classify: ClassifyConfig,
    rescale: RescaleFrame,
}

fn analysis(config: Option<&Path>, summary: Option<&Value>) -> Result<Analysis, CliError> {
    if let Some(path) = config {
        let s = Scenario::load(path)?;
        return Ok(Analysis {
            diagnostics: s.diagnostics,
            detector: s.detector,
            classify: s.classify,
            rescale: s.rescale,
        });
    }
    let echo = summary.and_then(|s| s.get("scenario"));
    fn part<T: serde::de::DeserializeOwned + Default>(echo: Option<&Value>, key: &str) -> Result<T, CliError> {
        match echo.and_then(|e| e.get(key)) {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| CliError::Validation(format!("summary echo `{key}`: {e}")))
            }
            None => Ok(T::default()),
        }
    }
    Ok(Analysis {
        diagnostics: part(echo, "diagnostics")?,
        detector: part(echo, "detector")?,
        classify: part(echo, "classify")?,
        rescale: part(echo, "rescale")?,
    })
}

pub fn diagnose(dir: &Path, config: Option<&Path>, sections_csv: Option<&Path>) -> Result<Value, CliError> {
    let (history, summary) = load_history(dir)?;
    let a = analysis(config, summary.as_ref())?;
    let mut snapshots = Vec::new();
    for s in &history.snapshots {
        let d = dispersion_of(s, &a.detector)?;
        snapshots.push(json!({
            "t": s.t,
            "energy": total_energy(s),
            "discrete_energy": discrete_energy(s),
            "max_grad": max_gradient(s),
            "ed": d.value,
            "ed_k": d.k,
        }));
    }
    let mut report = json!({ "history": dir, "exit": history.exit, "snapshots": snapshots });
    if let Some(c) = &a.diagnostics.cone {
        let region = cone_region(c)?;
        let mut acc = FluxAccumulator::new(region, history.snapshots[0].h());
        let mut sections = Vec::new();
        for s in &history.snapshots {
            acc.push(s);
            if region.contains_time(s.t) {
                sections.push((s.t, section_energy(s, &region).map_err(CliError::runtime)?));
            }
        }
        report["cone"] = match acc.finish() {
            Ok(f) => cone_summary(&region, &sections, f),
            Err(e) => json!({ "error": e.to_string() }),
        };
        if let Some(csv) = sections_csv {
            write_sections(csv, &sections)?;
        }
    }
    if let Some(cfg) = &a.diagnostics.estimates {
        report["estimates"] = match estimate_suite(&history, cfg) {
            Ok(r) => serde_json::to_value(r).map_err(CliError::runtime)?,
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    Ok(report)
}

fn t_star(history: &History, detector: &DetectorConfig) -> Option<SpacetimePoint> {
    detector.apex.or(match history.exit {
        ExitReason::BlowupOverflow { t, .. } => Some(SpacetimePoint { t, x: [0.0, 0.0] }),
        ExitReason::Completed => None,
    })
}

pub fn detect(dir: &Path, config: Option<&Path>, out: &Path) -> Result<Value, CliError> {
    let (history, summary) = load_history(dir)?;
    let a = analysis(config, summary.as_ref())?;
    a.detector.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let events = scan(&history, &a.detector).map_err(CliError::runtime)?;
    let energy = total_energy(&history.snapshots[0]);
    let apex = t_star(&history, &a.detector);
    let reversed = apex.map(|p| time_reversed(&history, p.t));
    let mut records = Vec::new();
    let mut centres = Vec::new();
    for (n, ev) in events.iter().enumerate() {
        let mut rec = json!({ "event": ev });
        let frames = rescale(&history, ev, &a.rescale);
        match frames {
            Ok(frames) => {
                let sub = out.join(format!("event_{n:03}"));
                fs::create_dir_all(&sub).map_err(|e| io_error(&sub, e))?;
                for f in &frames {
                    write_snapshot(&sub.join(snapshot_file_name(f.t)), f).map_err(CliError::runtime)?;
                }
                let centre = frames
                    .iter()
                    .min_by(|x, y| x.t.abs().total_cmp(&y.t.abs()))
                    .cloned()
                    .ok_or_else(|| CliError::Validation("rescale frame has no times".into()))?;
                rec["dir"] = json!(sub);
                rec["classification"] = match classify(&centre, &a.classify) {
                    Ok(c) => serde_json::to_value(c).map_err(CliError::runtime)?,
                    Err(e) => json!({ "kind": "error", "message": e.to_string() }),
                };
                centres.push(centre);
            }
            Err(e) => rec["classification"] = json!({ "kind": "error", "message": e.to_string() }),
        }
        if let Some(s) = history.snapshots.iter().find(|s| s.t == ev.t) {
            if s.phi.is_radial() {
                if let Ok(samples) = rescale_radial(s, ev.r, 201, 1.0) {
                    rec["q_fit"] = serde_json::to_value(fit_q_profile(&samples)).map_err(CliError::runtime)?;
                }
            }
        }
        if let (Some(p), Some(rev)) = (apex, reversed.as_ref()) {
            let t_n = p.t - ev.t;
            let origin = SpacetimePoint { t: 0.0, x: p.x };
            rec["flux_window"] = match flux_window(rev, origin, t_n, a.detector.flux_exponent, energy) {
                Ok(w) => serde_json::to_value(w).map_err(CliError::runtime)?,
                Err(e) => json!({ "error": e.to_string() }),
            };
        }
        records.push(rec);
    }
    let cauchy = if centres.len() >= 3 {
        match cauchy_check(&centres) {
            Ok(c) => serde_json::to_value(c).map_err(CliError::runtime)?,
            Err(e) => json!({ "error": e.to_string() }),
        }
    } else {
        Value::Null
    };
    let scale_ratio = match (events.first(), events.last()) {
        (Some(a), Some(b)) if b.r > 0.0 => Some(a.r / b.r),
        _ => None,
    };
    Ok(json!({
        "history": dir,
        "exit": history.exit,
        "apex": apex,
        "energy": energy,
        "scale_ratio": scale_ratio,
        "bubbles": records.iter().filter(|r| r["classification"]["kind"] == "bubble").count(),
        "events": records,
        "cauchy": cauchy,
    }))
}

/// CSV `r,u` of `Q` on a radial grid and its energy report.
pub fn q_profile(scale: f64, nx: usize, r_max: f64) -> Result<(String, Value), CliError> {
    let q = make_q(scale, GridSpec::Radial { nx, r_max }).map_err(|e| CliError::Validation(e.to_string()))?;
    let h = q.h();
    let mut csv = String::from("r,u\n");
    for (i, u) in q.phi.values.iter().enumerate() {
        csv.push_str(&row(&[i as f64 * h, *u]));
        csv.push('\n');
    }
    let e = total_energy(&q);
    let report = json!({
        "kind": "q",
        "scale": scale,
        "nx": nx,
        "r_max": r_max,
        "energy": e,
        "energy_over_4pi": e / (4.0 * std::f64::consts::PI),
    });
    Ok((csv, report))
}

/// CSV `y,psi,dpsi` of the bounded hyperbolic profile and its energies.
pub fn hyperbolic_profile(degree: u32, limit: f64, y_max: f64) -> Result<(String, Value), CliError> {
    let p = shoot_hyperbolic(degree, limit, y_max).map_err(|e| CliError::Validation(e.to_string()))?;
    let n = 1000;
    let mut csv = String::from("y,psi,dpsi\n");
    for i in 0..=n {
        let y = y_max * i as f64 / n as f64;
        let (a, b) = p.eval(y);
        csv.push_str(&row(&[y, a, b]));
        csv.push('\n');
    }
    let report = json!({
        "kind": "hyperbolic",
        "degree": degree,
        "slope": p.slope,
        "limit": p.limit(),
        "max_abs": p.max_abs(),
        "y_max": y_max,
        "section_energy": p.section_energy_to(y_max),
        "weighted_energy": p.weighted_energy_to(y_max),
    });
    Ok((csv, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_scenario() -> Scenario {
        Scenario::parse(
            r#"
name = "smoke"
[run]
nx = 64
half_width = 1.0
t_end = 0.5
snapshot_every = 16
data = { kind = "geodesic_bump", amplitude = 0.3, width = 0.3 }
[diagnostics]
dispersion = true
cone = { t0 = 0.25, t1 = 0.5 }
"#,
            "smoke",
        )
        .unwrap()
    }

    #[test]
    fn run_writes_series_snapshots_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let s = smoke_scenario();
        let outcome = run_scenario(&s, dir.path()).unwrap();
        assert_eq!(outcome.code, 0);
        let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
        let mut lines = series.lines();
        assert_eq!(
            lines.next(),
            Some("step,t,energy,max_grad,constraint_drift,discrete_energy")
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert!(first[2].contains('e') && first[2].split('e').next().unwrap().len() == 18);
        let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["exit"], json!("Completed"));
        assert_eq!(summary["scenario"]["run"]["cfl"], json!(crate::evolve::DEFAULT_CFL));
        assert!(summary["constants"]["bands"].as_array().unwrap().len() >= 2);
        assert!(summary["cone"]["residual"].is_number());
        assert!(summary["dispersion"]["max"].as_f64().unwrap() > 0.0);
        let (history, echo) = load_history(dir.path()).unwrap();
        assert!(echo.is_some());
        assert_eq!(history.snapshots.first().unwrap().t, 0.0);
        assert_eq!(history.snapshots.last().unwrap().t, 0.5);
    }

    #[test]
    fn runs_are_bit_identical() {
        let s = smoke_scenario();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_scenario(&s, a.path()).unwrap();
        run_scenario(&s, b.path()).unwrap();
        for entry in fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let x = fs::read(a.path().join(&name)).unwrap();
            let y = fs::read(b.path().join(&name)).unwrap();
            assert!(x == y, "{name:?} differs");
        }
    }

    #[test]
    fn diagnose_and_detect_use_the_summary_echo() {
        let dir = tempfile::tempdir().unwrap();
        run_scenario(&smoke_scenario(), dir.path()).unwrap();
        let csv = dir.path().join("sections.csv");
        let report = diagnose(dir.path(), None, Some(&csv)).unwrap();
        assert!(fs::read_to_string(&csv).unwrap().starts_with("t,section_energy\n"));
        assert_eq!(report["snapshots"].as_array().unwrap().len(), 3);
        // stored snapshots are too sparse for the lateral flux
        let err = report["cone"]["error"].as_str().unwrap();
        assert!(err.contains("exceeds the grid spacing"), "{err}");
        let out = dir.path().join("detect");
        let events = detect(dir.path(), None, &out).unwrap();
        assert_eq!(events["events"], json!([]));
        assert!(events["apex"].is_null());
    }

    #[test]
    fn ed_table_has_a_verdict() {
        let s = smoke_scenario();
        let state = s.run.as_ref().unwrap().initial_state().unwrap();
        let d = dispersion_of(&state, &DetectorConfig::default()).unwrap();
        let below = ed_table(&d, 10.0);
        assert!(below.starts_with("k,sup_phi,sup_dphi,value\n"));
        assert!(below.trim_end().ends_with("below eps = 10"));
        assert!(ed_table(&d, 1e-3).contains("above"));
    }

    #[test]
    fn profiles_report_energies() {
        let (csv, r) = q_profile(1.0, 4096, 64.0).unwrap();
        assert!(csv.starts_with("r,u\n"));
        // energy inside r_max is 4π r_max² / (r_max² + λ²)
        let expected = 64.0f64.powi(2) / (64.0f64.powi(2) + 1.0);
        assert!((r["energy_over_4pi"].as_f64().unwrap() - expected).abs() < 1e-4, "{r}");
        let (csv, r) = hyperbolic_profile(1, std::f64::consts::FRAC_PI_2, 10.0).unwrap();
        assert_eq!(csv.lines().count(), 1002);
        assert!((r["slope"].as_f64().unwrap() - 1.0).abs() < 1e-4);
    }
}
