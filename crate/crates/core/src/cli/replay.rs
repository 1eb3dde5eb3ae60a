//! Offline recomputation of every derived field of a stored session.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendConfig, CliError};
use crate::analysis::flesch_reading_ease;
use crate::clock::VirtualClock;
use crate::domain::{remap_rating, word_count, TrialFlag, TrialRecord};
use crate::protocol::engine::derive_measures;
use crate::storage::{ArtifactStore, FsArtifactStore};

/// Absolute tolerance for recomputed floating-point fields.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub trial_index: usize,
    pub field: String,
    pub stored: Value,
    pub recomputed: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayReport {
    pub trials: usize,
    pub mismatches: Vec<Mismatch>,
    /// Artifact ids referenced by the session but absent from the store.
    pub missing_artifacts: Vec<String>,
    /// True when some fields could not be recomputed.
    pub partial: bool,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub session: PathBuf,
    /// Directory holding `artifacts/`; defaults to the parent of the
    /// session file's directory.
    #[serde(default)]
    pub artifacts_root: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
}

impl ReplayConfig {
    pub fn new(session: impl Into<PathBuf>) -> Self {
        Self {
            session: session.into(),
            artifacts_root: None,
            backend: BackendConfig::default(),
        }
    }

    fn root(&self) -> PathBuf {
        self.artifacts_root.clone().unwrap_or_else(|| {
            self.session
                .parent()
                .and_then(Path::parent)
                .map(Path::to_path_buf)
                .unwrap_or_default()
        })
    }
}

fn float_differs(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() > REPLAY_TOLERANCE,
        (None, None) => false,
        _ => true,
    }
}

struct Collector<'a> {
    report: &'a mut ReplayReport,
    trial_index: usize,
}

impl Collector<'_> {
    fn check<T: Serialize + PartialEq>(&mut self, field: &str, stored: T, recomputed: T) {
        if stored != recomputed {
            self.push(field, stored, recomputed);
        }
    }

    fn check_f(&mut self, field: &str, stored: Option<f64>, recomputed: Option<f64>) {
        if float_differs(stored, recomputed) {
            self.push(field, stored, recomputed);
        }
    }

    fn push<T: Serialize>(&mut self, field: &str, stored: T, recomputed: T) {
        self.report.mismatches.push(Mismatch {
            trial_index: self.trial_index,
            field: field.into(),
            stored: serde_json::to_value(stored).unwrap_or(Value::Null),
            recomputed: serde_json::to_value(recomputed).unwrap_or(Value::Null),
        });
    }
}

/// Recomputes remapped ratings, text covariates, sentiment and, where the
/// generated image is available, caption and alignment.
pub fn replay_session(config: &ReplayConfig) -> Result<ReplayReport, CliError> {
    let path = &config.session;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let store: Arc<dyn ArtifactStore> = Arc::new(FsArtifactStore::new(config.root()));
    let clients = config.backend.build(store.clone())?;
    let clock = VirtualClock::new();
    let mut report = ReplayReport::default();

    // The first line is the header; only complete lines count.
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    for (n, line) in complete.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1));
        let raw: Value = serde_json::from_str(line).map_err(bad)?;
        let trial: TrialRecord = serde_json::from_value(raw.clone()).map_err(bad)?;
        report.trials += 1;
        let mut c = Collector {
            report: &mut report,
            trial_index: trial.trial_index,
        };

        let stored_remap = raw.pointer("/rating/remapped").and_then(Value::as_f64);
        let recomputed_remap = remap_rating(i64::from(trial.rating.raw())).ok();
        c.check_f("rating.remapped", stored_remap, recomputed_remap);

        let english = trial.transcript.as_ref().map(|t| t.english_text.as_str());
        if let Some(t) = &trial.transcript {
            c.check("transcript.word_count", t.word_count, word_count(&t.english_text));
            c.check_f(
                "transcript.reading_ease",
                t.reading_ease,
                flesch_reading_ease(&t.english_text).ok(),
            );
        }

        let generation = match &trial.generation {
            Some(g) => match store.get(&g.image_ref.id) {
                Ok(Some(_)) => Some(g),
                _ => {
                    c.report.missing_artifacts.push(g.image_ref.id.clone());
                    c.report.partial = true;
                    None
                }
            },
            None => None,
        };
        let (measures, flags) = derive_measures(english, generation, &clients, &clock);
        let stored = trial.measures.clone().unwrap_or_default();
        let stored_sent = stored.sentiment.as_ref();
        let new_sent = measures.sentiment.as_ref();
        for (field, get) in [
            ("measures.sentiment.p_negative", (|s: &crate::domain::SentimentRecord| s.p_negative) as fn(&_) -> f64),
            ("measures.sentiment.p_neutral", |s| s.p_neutral),
            ("measures.sentiment.p_positive", |s| s.p_positive),
            ("measures.sentiment.score", |s| s.score),
        ] {
            c.check_f(field, stored_sent.map(get), new_sent.map(get));
        }
        if trial.generation.is_some() && generation.is_some() {
            c.check("measures.caption", stored.caption.clone(), measures.caption.clone());
            c.check_f("measures.alignment", stored.alignment, measures.alignment);
            for flag in [TrialFlag::CaptionUnavailable, TrialFlag::AlignmentUnavailable] {
                c.check(
                    &format!("flags.{}", serde_json::to_value(flag).unwrap().as_str().unwrap_or("")),
                    trial.has_flag(flag),
                    flags.contains(&flag),
                );
            }
        }
    }
    Ok(report)
}
