//! Operator entry points: `serve`, `simulate`, `analyze`, `replay` and
//! `export`. Each mode has a serializable config; flags build it and a
//! `--config` JSON file is merged over the result.

pub mod replay;
pub mod serve;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::report::{plot_data, render_markdown};
use crate::analysis::{analyze_sessions, AnalysisConfig, AnalysisReport};
use crate::clients::remote::RemoteEndpoints;
use crate::clients::{ClientSet, MockSettings};
use crate::domain::SESSION_FORMAT_VERSION;
use crate::protocol::{PhaseSchedule, DEFAULT_TRIALS_PER_CELL};
use crate::simulator::{simulate_cohort_with_store, CohortSpec, Jitter, ParticipantModel};
use crate::storage::manifest::MANIFEST_VERSION;
use crate::storage::session_file::write_session;
use crate::storage::{export_csv, read_sessions_dir, ArtifactStore, FsArtifactStore};

pub use replay::{replay_session, Mismatch, ReplayReport};
pub use serve::{serve, serve_until, ServeConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config files or inputs; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Mock,
    Remote,
}

/// Service backends for a run. Remote endpoints default to paths under
/// `remote_base`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend: BackendChoice,
    pub mock: MockSettings,
    pub remote_base: Option<String>,
    pub endpoints: Option<RemoteEndpoints>,
}

impl BackendConfig {
    pub fn build(&self, artifacts: Arc<dyn ArtifactStore>) -> Result<ClientSet, CliError> {
        match self.backend {
            BackendChoice::Mock => Ok(ClientSet::mock(&self.mock, artifacts)),
            BackendChoice::Remote => {
                let endpoints = match (&self.endpoints, &self.remote_base) {
                    (Some(e), _) => e.clone(),
                    (None, Some(base)) => RemoteEndpoints::under(base),
                    (None, None) => {
                        return Err(CliError::Config(
                            "remote backend needs `remote_base` or `endpoints`".into(),
                        ))
                    }
                };
                ClientSet::remote(&endpoints, artifacts).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    #[default]
    PaperLike,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub subjects: usize,
    pub trials_per_cell: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Participant model file; overrides `template`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub template: Template,
    #[serde(default)]
    pub jitter: Jitter,
    #[serde(default)]
    pub mock: MockSettings,
}

impl SimulateConfig {
    pub fn new(subjects: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            subjects,
            trials_per_cell: DEFAULT_TRIALS_PER_CELL,
            seed,
            out: out.into(),
            model: None,
            template: Template::PaperLike,
            jitter: Jitter::default(),
            mock: MockSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub sessions: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub family_size: Option<usize>,
    #[serde(default)]
    pub emit_plot_data: bool,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    pub sessions: PathBuf,
    pub out: PathBuf,
}

/// Identifies the configuration and code that produced an output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproStamp {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub session_format: u32,
    pub manifest_format: u32,
}

impl ReproStamp {
    pub fn new<C: Serialize>(mode: &str, config: &C, seed: Option<u64>) -> Self {
        let bytes = serde_json::to_vec(config).expect("config serializes");
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode: mode.into(),
            config_sha256: hex::encode(Sha256::digest(&bytes)),
            seed,
            session_format: SESSION_FORMAT_VERSION,
            manifest_format: MANIFEST_VERSION,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("stamp serializes")
    }
}

/// Recursively merges `overrides` into `base`; objects merge key by key,
/// everything else is replaced.
pub fn merge_json(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge_json(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Applies a JSON config file over a flag-built config.
pub fn apply_config_file<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let overrides: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut v = serde_json::to_value(base).expect("config serializes");
    merge_json(&mut v, &overrides);
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_schedule(path: Option<&Path>) -> Result<PhaseSchedule, CliError> {
    let schedule = match path {
        Some(p) => read_json(p)?,
        None => PhaseSchedule::default(),
    };
    schedule.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(schedule)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Simulates a cohort into `out/sessions/*.jsonl` with artifacts under
/// `out/artifacts/`. Returns the session file paths.
pub fn run_simulate(config: &SimulateConfig) -> Result<Vec<PathBuf>, CliError> {
    let template = match &config.model {
        Some(p) => read_json::<ParticipantModel>(p)?,
        None => match config.template {
            Template::PaperLike => ParticipantModel::paper_like(),
            Template::Null => ParticipantModel::null(),
        },
    };
    let mut spec = CohortSpec::new(config.subjects, config.trials_per_cell, template, config.seed);
    spec.jitter = config.jitter;
    spec.mock = config.mock.clone();
    let stamp = ReproStamp::new("simulate", config, Some(config.seed));
    let artifacts = Arc::new(FsArtifactStore::new(&config.out));
    let sessions = simulate_cohort_with_store(&spec, artifacts).map_err(|e| match e {
        crate::simulator::SimError::Protocol(p) => CliError::Runtime(p.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let mut paths = Vec::with_capacity(sessions.len());
    for mut s in sessions {
        s.header.stamp = Some(stamp.to_value());
        let path = config.out.join("sessions").join(format!("{}.jsonl", s.header.session_id));
        write_session(&path, &s).map_err(|e| CliError::Runtime(e.to_string()))?;
        paths.push(path);
    }
    write_file(
        &config.out.join("stamp.json"),
        &serde_json::to_string_pretty(&stamp).expect("stamp serializes"),
    )?;
    Ok(paths)
}

/// Analyzes every session in a directory and writes `report.json`,
/// `report.md` and optionally the per-figure CSVs into `out`.
pub fn run_analyze(config: &AnalyzeConfig) -> Result<AnalysisReport, CliError> {
    let sessions = read_sessions_dir(&config.sessions).map_err(|e| CliError::Config(e.to_string()))?;
    let mut analysis = config.analysis.clone();
    if config.family_size.is_some() {
        analysis.posthoc_family_size = config.family_size;
    }
    let mut report = analyze_sessions(&sessions, &analysis).map_err(|e| CliError::Runtime(e.to_string()))?;
    report.stamp = Some(ReproStamp::new("analyze", config, None).to_value());
    write_file(&config.out.join("report.json"), &report.to_json())?;
    write_file(&config.out.join("report.md"), &render_markdown(&report))?;
    if config.emit_plot_data {
        for (name, csv) in plot_data(&sessions, &report) {
            write_file(&config.out.join(&name), &csv)?;
        }
    }
    Ok(report)
}

pub fn run_export(config: &ExportConfig) -> Result<usize, CliError> {
    let sessions = read_sessions_dir(&config.sessions).map_err(|e| CliError::Config(e.to_string()))?;
    export_csv(&sessions, &config.out).map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn config_file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"subjects": 4, "jitter": {"cell_sd": 0.0}}"#).unwrap();
        let base = SimulateConfig::new(20, 1, "out");
        let merged = apply_config_file(base, Some(&p)).unwrap();
        assert_eq!(merged.subjects, 4);
        assert_eq!(merged.jitter.cell_sd, 0.0);
        assert_eq!(merged.jitter.intercept_sd, Jitter::default().intercept_sd);
        assert_eq!(merged.seed, 1);
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"subjects": "many"}"#).unwrap();
        let err = apply_config_file(SimulateConfig::new(2, 0, "o"), Some(&p)).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn stamp_hash_tracks_config() {
        let a = ReproStamp::new("simulate", &json!({"seed": 1}), Some(1));
        let b = ReproStamp::new("simulate", &json!({"seed": 2}), Some(2));
        assert_ne!(a.config_sha256, b.config_sha256);
        assert_eq!(a, ReproStamp::new("simulate", &json!({"seed": 1}), Some(1)));
    }

    #[test]
    fn merge_replaces_scalars_and_merges_objects() {
        let mut v = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge_json(&mut v, &json!({"b": {"d": 4}, "e": [1]}));
        assert_eq!(v, json!({"a": 1, "b": {"c": 2, "d": 4}, "e": [1]}));
    }

    #[test]
    fn remote_backend_needs_endpoints() {
        let cfg = BackendConfig {
            backend: BackendChoice::Remote,
            ..Default::default()
        };
        let store = Arc::new(crate::storage::MemoryArtifactStore::new());
        assert_eq!(cfg.build(store).err().unwrap().exit_code(), EXIT_CONFIG);
    }
}
