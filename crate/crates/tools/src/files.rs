//! Versioned JSON files.
//!
//! Every file is an object with `schema_version` (currently 1), a `kind` tag
//! and the producing `tool_version`. Scenario-derived files also carry
//! `scenario_hash`, the SHA-256 of the compact JSON encoding of the scenario.
//! Floats are written in shortest round-trip form, so save and load are exact.
//!
//! ```text
//! config    { schema_version, kind: "config", config: ScenarioConfig }
//! scenario  { schema_version, kind: "scenario", tool_version, scenario_hash,
//!             scenario: Scenario, allocation?: Allocation }
//! solution  { schema_version, kind: "solution", tool_version, scenario_hash,
//!             algorithm, epsilon, scr, converged, iterations, note,
//!             T_total, E_total, V, allocation: Allocation }
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use scr_core::dashf::{Algorithm, Solution};
use scr_core::scenario::ScenarioConfig;
use scr_core::{Allocation, CostBreakdown, Scenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ToolError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub kind: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub scenario_hash: String,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Allocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub scenario_hash: String,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub scr: f64,
    pub converged: bool,
    pub iterations: usize,
    pub note: Option<String>,
    #[serde(rename = "T_total")]
    pub total_delay: f64,
    #[serde(rename = "E_total")]
    pub total_energy: f64,
    #[serde(rename = "V")]
    pub total_score: f64,
    pub allocation: Allocation,
}

impl ScenarioFile {
    pub fn new(scenario: Scenario, allocation: Option<Allocation>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "scenario".into(),
            tool_version: TOOL_VERSION.into(),
            scenario_hash: scenario_hash(&scenario),
            scenario,
            allocation,
        }
    }
}

impl ConfigFile {
    pub fn new(config: ScenarioConfig) -> Self {
        Self { schema_version: SCHEMA_VERSION, kind: "config".into(), config }
    }
}

impl SolutionFile {
    pub fn new(scn: &Scenario, sol: &Solution, bd: &CostBreakdown, epsilon: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "solution".into(),
            tool_version: TOOL_VERSION.into(),
            scenario_hash: scenario_hash(scn),
            algorithm: sol.algorithm,
            epsilon,
            scr: sol.scr,
            converged: sol.converged,
            iterations: sol.iterations,
            note: sol.note.clone(),
            total_delay: bd.total_delay,
            total_energy: bd.total_energy,
            total_score: bd.total_score,
            allocation: sol.allocation.clone(),
        }
    }
}

pub fn scenario_hash(scn: &Scenario) -> String {
    let bytes = serde_json::to_vec(scn).expect("scenario serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Header fields every file must carry, checked before the body is decoded so
/// that a version mismatch is not reported as a field error.
#[derive(Deserialize)]
struct Envelope {
    schema_version: Option<serde_json::Value>,
    kind: Option<serde_json::Value>,
}

pub fn parse<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T, ToolError> {
    let envelope: Envelope = serde_json::from_str(text).map_err(|e| ToolError::schema("", e.to_string()))?;
    match envelope.schema_version {
        Some(serde_json::Value::Number(v)) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => return Err(ToolError::schema("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(ToolError::schema("schema_version", "missing field".into())),
    }
    match envelope.kind {
        Some(serde_json::Value::String(k)) if k == kind => {}
        Some(v) => return Err(ToolError::schema("kind", format!("expected \"{kind}\", found {v}"))),
        None => return Err(ToolError::schema("kind", "missing field".into())),
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ToolError::schema(if path == "." { "" } else { &path }, e.into_inner().to_string())
    })
}

pub fn read<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, ToolError> {
    let text = fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
    parse(&text, kind).map_err(|e| e.in_file(path))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, ToolError> {
    let file: ScenarioFile = read(path, "scenario")?;
    let hash = scenario_hash(&file.scenario);
    // An empty hash marks a hand-edited file.
    if !file.scenario_hash.is_empty() && hash != file.scenario_hash {
        return Err(ToolError::schema("scenario_hash", format!("does not match the scenario (computed {hash})")).in_file(path));
    }
    file.scenario.validate()?;
    Ok(file)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ToolError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ToolError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| ToolError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| ToolError::io(path, e))?;
    tmp.persist(path).map_err(|e| ToolError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use scr_core::scenario::generate;

    fn default_file() -> ScenarioFile {
        ScenarioFile::new(generate(&ScenarioConfig::default()).unwrap(), None)
    }

    #[test]
    fn scenario_round_trip_is_exact() {
        let f = default_file();
        let back: ScenarioFile = parse(&to_json(&f), "scenario").unwrap();
        assert_eq!(back, f);
        assert_eq!(scenario_hash(&back.scenario), f.scenario_hash);
    }

    #[test]
    fn embedded_allocation_round_trips() {
        let scn = generate(&ScenarioConfig::default()).unwrap();
        let a = scr_core::dashf::initialize(&scn).unwrap();
        let f = ScenarioFile::new(scn, Some(a));
        let back: ScenarioFile = parse(&to_json(&f), "scenario").unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_file_is_a_schema_error() {
        let text = to_json(&default_file());
        let err = parse::<ScenarioFile>(&text[..text.len() / 2], "scenario").unwrap_err();
        assert!(matches!(err, ToolError::Schema { .. }), "{err}");
    }

    #[test]
    fn missing_field_reports_its_path() {
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&default_file())).unwrap();
        v["scenario"]["users"][3].as_object_mut().unwrap().remove("params");
        let err = parse::<ScenarioFile>(&v.to_string(), "scenario").unwrap_err();
        let ToolError::Schema { path, message, .. } = &err else { panic!("{err}") };
        assert_eq!(path, "scenario.users[3]");
        assert!(message.contains("params"), "{message}");
    }

    #[test]
    fn wrong_type_reports_its_path() {
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&ConfigFile::new(ScenarioConfig::default()))).unwrap();
        v["config"]["n_users"] = serde_json::json!("ten");
        let err = parse::<ConfigFile>(&v.to_string(), "config").unwrap_err();
        let ToolError::Schema { path, .. } = &err else { panic!("{err}") };
        assert_eq!(path, "config.n_users");
    }

    #[test]
    fn version_and_kind_are_checked() {
        let mut v: serde_json::Value = serde_json::from_str(&to_json(&default_file())).unwrap();
        v["schema_version"] = serde_json::json!(2);
        let err = parse::<ScenarioFile>(&v.to_string(), "scenario").unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(parse::<ScenarioFile>(&v.to_string(), "scenario").is_err());
        let err = parse::<ConfigFile>(&to_json(&default_file()), "config").unwrap_err();
        assert!(err.to_string().contains("kind"), "{err}");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
