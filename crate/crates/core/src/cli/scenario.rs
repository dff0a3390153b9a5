//! Scenario files: one TOML document describing a run and its analysis.
//!
//! ```toml
//! name = "example"
//! expect_blowup = false
//!
//! [run]            # evolve::RunConfig; `t_end` and `data` are required
//! t_end = 1.0
//! data = { kind = "geodesic_bump", amplitude = 0.5, width = 0.5 }
//!
//! [diagnostics]    # optional cone, estimate suite and dispersion toggles
//! [detector]       # concentration::DetectorConfig
//! [classify]       # concentration::ClassifyConfig
//! [rescale]        # concentration::RescaleFrame
//! [selfsimilar]    # selfsimilar::SelfSimilarSpec, instead of or besides [run]
//! ```

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::selfsimilar::SelfSimilarSpec;
use super::CliError;
use crate::concentration::{ClassifyConfig, DetectorConfig, RescaleFrame};
use crate::diagnostics::EstimateConfig;
use crate::evolve::{InitialData, RunConfig};
use crate::field::SpacetimePoint;

/// Cone on which `diagnose` tracks section energies and fluxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    #[serde(default)]
    pub apex: SpacetimePoint,
    pub t0: f64,
    pub t1: f64,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub cone: Option<ConeSpec>,
    pub estimates: Option<EstimateConfig>,
    /// Report the energy dispersion of every snapshot.
    pub dispersion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// Treat loss of resolution as the expected outcome.
    pub expect_blowup: bool,
    pub out: Option<PathBuf>,
    pub run: Option<RunConfig>,
    pub selfsimilar: Option<SelfSimilarSpec>,
    pub diagnostics: DiagnosticsSpec,
    pub detector: DetectorConfig,
    pub classify: ClassifyConfig,
    pub rescale: RescaleFrame,
}

const TOP_KEYS: &[&str] = &[
    "name",
    "expect_blowup",
    "out",
    "run",
    "selfsimilar",
    "diagnostics",
    "detector",
    "classify",
    "rescale",
];
const DIAGNOSTICS_KEYS: &[&str] = &["cone", "estimates", "dispersion"];

fn nearest<'a>(key: &str, known: &[&'a str]) -> Option<&'a str> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .min()
        .map(|(_, k)| k)
}

fn check_keys(table: &toml::Table, known: &[&str], section: &str) -> Result<(), CliError> {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            let path = if section.is_empty() { key.clone() } else { format!("{section}.{key}") };
            let hint = nearest(key, known)
                .map(|k| format!("; did you mean `{k}`?"))
                .unwrap_or_default();
            return Err(CliError::Validation(format!("unknown key `{path}`{hint}")));
        }
    }
    Ok(())
}

/// Keys of a struct's default serialization, plus optional fields that
/// serialize to nothing when unset.
fn default_keys<T: Serialize>(value: &T, optional: &[&'static str]) -> Vec<String> {
    let mut keys: Vec<String> = toml::Table::try_from(value)
        .map(|t| t.keys().cloned().collect())
        .unwrap_or_default();
    keys.extend(optional.iter().map(|s| s.to_string()));
    keys
}

fn section<T: DeserializeOwned + Serialize + Default>(
    root: &toml::Table,
    name: &str,
    optional: &[&'static str],
) -> Result<T, CliError> {
    let Some(value) = root.get(name) else {
        return Ok(T::default());
    };
    let table = value
        .as_table()
        .ok_or_else(|| CliError::Validation(format!("`{name}` must be a table")))?;
    let keys = default_keys(&T::default(), optional);
    let known: Vec<&str> = keys.iter().map(String::as_str).collect();
    check_keys(table, &known, name)?;
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e| CliError::Validation(format!("[{name}]: {e}")))
}

fn run_section(root: &toml::Table) -> Result<Option<RunConfig>, CliError> {
    let Some(value) = root.get("run") else {
        return Ok(None);
    };
    let user = value
        .as_table()
        .ok_or_else(|| CliError::Validation("`run` must be a table".into()))?;
    let defaults = RunConfig::new(InitialData::Constant { point: [0.0, 0.0, 1.0] }, 1.0);
    let mut merged = toml::Table::try_from(&defaults).map_err(|e| CliError::Validation(e.to_string()))?;
    let keys: Vec<String> = merged.keys().cloned().collect();
    let known: Vec<&str> = keys.iter().map(String::as_str).collect();
    check_keys(user, &known, "run")?;
    for required in ["t_end", "data"] {
        if !user.contains_key(required) {
            return Err(CliError::Validation(format!("missing required key `run.{required}`")));
        }
    }
    for (k, v) in user {
        merged.insert(k.clone(), v.clone());
    }
    let cfg: RunConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Validation(format!("[run]: {e}")))?;
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(Some(cfg))
}

impl Scenario {
    pub fn parse(text: &str, fallback_name: &str) -> Result<Self, CliError> {
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("malformed config: {e}")))?;
        check_keys(&root, TOP_KEYS, "")?;
        let string = |k: &str| -> Result<Option<String>, CliError> {
            match root.get(k) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(CliError::Validation(format!("`{k}` must be a string"))),
            }
        };
        let expect_blowup = match root.get("expect_blowup") {
            None => false,
            Some(toml::Value::Boolean(b)) => *b,
            Some(_) => return Err(CliError::Validation("`expect_blowup` must be true or false".into())),
        };
        let run = run_section(&root)?;
        let selfsimilar: Option<SelfSimilarSpec> = match root.get("selfsimilar") {
            None => None,
            Some(_) => Some(section(&root, "selfsimilar", &[])?),
        };
        if run.is_none() && selfsimilar.is_none() {
            return Err(CliError::Validation(
                "missing [run] table (needs at least `t_end` and `data`)".into(),
            ));
        }
        if let Some(d) = root.get("diagnostics").and_then(|v| v.as_table()) {
            check_keys(d, DIAGNOSTICS_KEYS, "diagnostics")?;
        }
        let diagnostics: DiagnosticsSpec = section(&root, "diagnostics", &["cone", "estimates"])?;
        let detector: DetectorConfig = section(&root, "detector", &["apex"])?;
        detector.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let classify: ClassifyConfig = section(&root, "classify", &[])?;
        let rescale: RescaleFrame = section(&root, "rescale", &[])?;
        let needs_run = |what: &str| CliError::Validation(format!("[{what}] needs a [run] table"));
        if let Some(est) = &diagnostics.estimates {
            let run = run.as_ref().ok_or_else(|| needs_run("diagnostics.estimates"))?;
            est.validate(run.spacing())
                .map_err(|e| CliError::Validation(format!("[diagnostics.estimates]: {e}")))?;
        }
        if let Some(c) = &diagnostics.cone {
            let run = run.as_ref().ok_or_else(|| needs_run("diagnostics.cone"))?;
            let region = crate::diagnostics::ConeRegion::new(c.apex, c.t0, c.t1, c.delta)
                .map_err(|e| CliError::Validation(format!("[diagnostics.cone]: {e}")))?;
            let (r0, h) = (region.radius(c.t0), run.spacing());
            if r0 < 4.0 * h {
                return Err(CliError::Validation(format!(
                    "[diagnostics.cone]: section radius {r0} at t0 is below 4h = {}",
                    4.0 * h
                )));
            }
        }
        Ok(Self {
            name: string("name")?.unwrap_or_else(|| fallback_name.to_string()),
            expect_blowup,
            out: string("out")?.map(PathBuf::from),
            run,
            selfsimilar,
            diagnostics,
            detector,
            classify,
            rescale,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(&text, stem)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = super::presets::text(name).ok_or_else(|| {
            let hint = nearest(name, super::presets::NAMES)
                .map(|k| format!("; did you mean `{k}`?"))
                .unwrap_or_default();
            CliError::Validation(format!("unknown preset `{name}`{hint}"))
        })?;
        Self::parse(text, name)
    }
}
