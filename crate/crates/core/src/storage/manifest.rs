use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::StorageError;
use crate::conditioning::IMAGE_SCALE_RANGE;
use crate::domain::{Emotion, Stimulus};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusManifest {
    pub version: u32,
    pub entries: Vec<Stimulus>,
    /// Entries whose image file was not found when loading.
    #[serde(skip)]
    pub missing_images: Vec<PathBuf>,
}

impl StimulusManifest {
    pub fn new(entries: Vec<Stimulus>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries,
            missing_images: Vec::new(),
        }
    }

    /// `(negative, neutral)` entry counts.
    pub fn valence_counts(&self) -> (usize, usize) {
        let neg = self.entries.iter().filter(|e| e.valence_class == Emotion::Negative).count();
        (neg, self.entries.len() - neg)
    }

    /// Hard check run at session start: every image must exist.
    pub fn ensure_images_exist(&self) -> Result<(), StorageError> {
        let missing: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.image_path.exists())
            .map(|e| format!("{} ({})", e.stimulus_id, e.image_path.display()))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(StorageError::Invalid(format!("missing stimulus images: {}", missing.join(", "))))
        }
    }
}

/// Line of the `k`-th `"stimulus_id"` key in the raw text.
fn entry_line(text: &str, k: usize) -> usize {
    text.match_indices("\"stimulus_id\"")
        .nth(k)
        .map(|(pos, _)| text[..pos].lines().count().max(1))
        .unwrap_or(1)
}

/// Parses and validates manifest JSON. Relative image paths resolve
/// against `base_dir`.
pub fn parse_manifest(text: &str, origin: &Path, base_dir: &Path) -> Result<StimulusManifest, StorageError> {
    let parse_err = |line: usize, message: String| StorageError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    if text.trim().is_empty() {
        return Err(parse_err(1, "manifest is empty".into()));
    }
    let mut manifest: StimulusManifest =
        serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
    if manifest.entries.is_empty() {
        return Err(parse_err(1, "manifest has no entries".into()));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(parse_err(1, format!("unsupported manifest version {}", manifest.version)));
    }

    let mut seen = HashSet::new();
    for (k, entry) in manifest.entries.iter_mut().enumerate() {
        if !seen.insert(entry.stimulus_id.clone()) {
            return Err(parse_err(
                entry_line(text, k),
                format!("duplicate stimulus_id {:?}", entry.stimulus_id),
            ));
        }
        if let Some(s) = entry.image_scale_override {
            if !(IMAGE_SCALE_RANGE.0..=IMAGE_SCALE_RANGE.1).contains(&s) {
                return Err(parse_err(
                    entry_line(text, k),
                    format!(
                        "image_scale_override {s} for {} outside [{}, {}]",
                        entry.stimulus_id, IMAGE_SCALE_RANGE.0, IMAGE_SCALE_RANGE.1
                    ),
                ));
            }
        }
        if entry.image_path.is_relative() {
            entry.image_path = base_dir.join(&entry.image_path);
        }
    }

    manifest.missing_images = manifest
        .entries
        .iter()
        .filter(|e| !e.image_path.exists())
        .map(|e| e.image_path.clone())
        .collect();
    for p in &manifest.missing_images {
        warn!("stimulus image not found: {}", p.display());
    }
    let (neg, neu) = manifest.valence_counts();
    log::info!("loaded manifest {}: {neg} negative, {neu} neutral", origin.display());
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<StimulusManifest, StorageError> {
    let text = std::fs::read_to_string(path).map_err(|e| StorageError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, path, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_json(n_neg: usize, n_neu: usize) -> String {
        let entries: Vec<String> = (0..n_neg + n_neu)
            .map(|i| {
                let v = if i < n_neg { "Negative" } else { "Neutral" };
                format!("    {{\"stimulus_id\": \"img{i:03}\", \"valence_class\": \"{v}\", \"image_path\": \"img{i:03}.jpg\"}}")
            })
            .collect();
        format!("{{\n  \"version\": 1,\n  \"entries\": [\n{}\n  ]\n}}\n", entries.join(",\n"))
    }

    #[test]
    fn loads_balanced_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, manifest_json(80, 80)).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.entries.len(), 160);
        assert_eq!(m.valence_counts(), (80, 80));
        assert_eq!(m.missing_images.len(), 160);
        assert!(m.ensure_images_exist().is_err());
        assert_eq!(m.entries[0].image_path, dir.path().join("img000.jpg"));
    }

    #[test]
    fn duplicate_id_names_id_and_line() {
        let text = manifest_json(2, 1).replace("img001", "img000");
        let err = parse_manifest(&text, Path::new("m.json"), Path::new(".")).unwrap_err();
        match err {
            StorageError::Parse { line, message, .. } => {
                assert!(message.contains("img000"), "{message}");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_valence_reports_line() {
        let text = manifest_json(1, 1).replace("\"Neutral\"", "\"Happy\"");
        match parse_manifest(&text, Path::new("m.json"), Path::new(".")).unwrap_err() {
            StorageError::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse_manifest("", Path::new("m.json"), Path::new(".")).is_err());
        assert!(parse_manifest("{\"version\":1,\"entries\":[]}", Path::new("m.json"), Path::new(".")).is_err());
    }

    #[test]
    fn override_outside_range_is_rejected() {
        let text = manifest_json(1, 1).replacen("\"image_path\"", "\"image_scale_override\": 0.9, \"image_path\"", 1);
        assert!(parse_manifest(&text, Path::new("m.json"), Path::new(".")).is_err());
    }
}
