//! Shared value types for trials, sessions and their validation.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Current on-disk format of session files.
pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("rating {0} outside the 1..=9 scale")]
    RatingOutOfRange(i64),
    #[error("image scale {0} outside [0, 1]")]
    ImageScale(f64),
    #[error("denoise_steps must be at least 1")]
    DenoiseSteps,
    #[error("unknown condition label {0:?}")]
    ConditionLabel(String),
    #[error("unsupported language {0:?}")]
    Language(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Emotion {
    Negative,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Instruction {
    Describe,
    Reappraise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "AI")]
    Ai,
    #[serde(rename = "NoAI")]
    NoAi,
}

impl Emotion {
    pub const ALL: [Emotion; 2] = [Emotion::Negative, Emotion::Neutral];

    fn prefix(self) -> &'static str {
        match self {
            Emotion::Negative => "Neg",
            Emotion::Neutral => "Neu",
        }
    }
}

/// One cell of the emotion x instruction x modality design.
///
/// Serialized as the figure label, e.g. `"Neg-RAI"` or `"Neu-D"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    pub emotion: Emotion,
    pub instruction: Instruction,
    pub modality: Modality,
}

impl Condition {
    pub const fn new(emotion: Emotion, instruction: Instruction, modality: Modality) -> Self {
        Self {
            emotion,
            instruction,
            modality,
        }
    }

    /// All eight cells in a fixed order (emotion, then instruction, then modality).
    pub fn all() -> [Condition; 8] {
        use Emotion::*;
        use Instruction::*;
        use Modality::*;
        [
            Condition::new(Negative, Describe, NoAi),
            Condition::new(Negative, Describe, Ai),
            Condition::new(Negative, Reappraise, NoAi),
            Condition::new(Negative, Reappraise, Ai),
            Condition::new(Neutral, Describe, NoAi),
            Condition::new(Neutral, Describe, Ai),
            Condition::new(Neutral, Reappraise, NoAi),
            Condition::new(Neutral, Reappraise, Ai),
        ]
    }

    /// Position of this cell in [`Condition::all`].
    pub fn index(self) -> usize {
        let e = match self.emotion {
            Emotion::Negative => 0,
            Emotion::Neutral => 1,
        };
        let i = match self.instruction {
            Instruction::Describe => 0,
            Instruction::Reappraise => 1,
        };
        let m = match self.modality {
            Modality::NoAi => 0,
            Modality::Ai => 1,
        };
        e * 4 + i * 2 + m
    }

    pub fn is_ai(self) -> bool {
        self.modality == Modality::Ai
    }

    pub fn label(self) -> String {
        let instr = match self.instruction {
            Instruction::Describe => "D",
            Instruction::Reappraise => "R",
        };
        let ai = if self.is_ai() { "AI" } else { "" };
        format!("{}-{}{}", self.emotion.prefix(), instr, ai)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Condition {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::all()
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| ValidationError::ConditionLabel(s.to_string()))
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub stimulus_id: String,
    pub valence_class: Emotion,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_scale_override: Option<f64>,
    /// Free-text scene description. The mock image encoder embeds this in
    /// place of a real image encoder; falls back to the stimulus id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Stimulus {
    pub fn reference_text(&self) -> &str {
        self.description.as_deref().unwrap_or(&self.stimulus_id)
    }
}

/// A self-reported affect rating. Only `raw` is stored authoritatively; the
/// remapped value is recomputed whenever a rating is decoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectRating {
    raw: u8,
}

impl AffectRating {
    pub fn new(raw: i64) -> Result<Self, ValidationError> {
        if (1..=9).contains(&raw) {
            Ok(Self { raw: raw as u8 })
        } else {
            Err(ValidationError::RatingOutOfRange(raw))
        }
    }

    pub fn raw(self) -> u8 {
        self.raw
    }

    pub fn remapped(self) -> f64 {
        (f64::from(self.raw) - 5.0) / 2.0
    }
}

/// Maps a 1..=9 slider value onto the -2..=+2 analysis scale.
pub fn remap_rating(raw: i64) -> Result<f64, ValidationError> {
    AffectRating::new(raw).map(AffectRating::remapped)
}

#[derive(Serialize, Deserialize)]
struct RatingRepr {
    raw: i64,
    remapped: f64,
}

impl Serialize for AffectRating {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RatingRepr {
            raw: i64::from(self.raw),
            remapped: self.remapped(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AffectRating {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RatingRepr::deserialize(deserializer)?;
        AffectRating::new(repr.raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "IT")]
    It,
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "FR")]
    Fr,
}

impl FromStr for Language {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EN" => Ok(Language::En),
            "IT" => Ok(Language::It),
            "DE" => Ok(Language::De),
            "FR" => Ok(Language::Fr),
            _ => Err(ValidationError::Language(s.to_string())),
        }
    }
}

/// Whitespace-token count used for the word-count covariate.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptBundle {
    pub source_language: Language,
    pub raw_text: String,
    pub english_text: String,
    pub word_count: usize,
    /// Flesch Reading Ease; absent when the text has no scorable sentence.
    pub reading_ease: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy, or `None` for a zero (or non-finite) vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Self {
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub const DEFAULT_TEXT_GUIDANCE: f64 = 7.5;
pub const DEFAULT_DENOISE_STEPS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub reference_image: Stimulus,
    /// Weight of the image-attention stream relative to text.
    pub image_scale: f64,
    pub text_guidance: f64,
    pub denoise_steps: u32,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, reference_image: Stimulus, image_scale: f64, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            reference_image,
            image_scale,
            text_guidance: DEFAULT_TEXT_GUIDANCE,
            denoise_steps: DEFAULT_DENOISE_STEPS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0..=1.0).contains(&self.image_scale) {
            return Err(ValidationError::ImageScale(self.image_scale));
        }
        if self.denoise_steps < 1 {
            return Err(ValidationError::DenoiseSteps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Content hash (hex SHA-256) of the artifact bytes.
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub image_ref: ArtifactRef,
    pub output_embedding: EmbeddingVector,
    pub latency_ms: u64,
    pub backend: Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    View,
    Speak,
    Gray,
    GeneratedImage,
    Rating,
    InterTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase: Phase,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl PhaseSpan {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFlag {
    GenerationLate,
    GenerationFailed,
    TranscriptionFailed,
    CaptionUnavailable,
    AlignmentUnavailable,
}

/// Model-derived measures attached to a trial after the rating.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMeasures {
    pub sentiment: Option<SentimentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<CaptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentRecord {
    pub p_negative: f64,
    pub p_neutral: f64,
    pub p_positive: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub text: String,
    pub source: CaptionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Primary,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub condition: Condition,
    pub stimulus: Stimulus,
    pub transcript: Option<TranscriptBundle>,
    pub generation: Option<GenerationResult>,
    pub rating: AffectRating,
    pub phase_timestamps: Vec<PhaseSpan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<TrialFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<TrialMeasures>,
}

impl TrialRecord {
    pub fn has_flag(&self, flag: TrialFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn sentiment_score(&self) -> Option<f64> {
        self.measures.as_ref()?.sentiment.as_ref().map(|s| s.score)
    }

    pub fn alignment(&self) -> Option<f64> {
        self.measures.as_ref()?.alignment
    }
}

/// First line of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format_version: u32,
    pub session_id: String,
    pub subject_id: String,
    pub language: Language,
    pub seed: u64,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    #[serde(flatten)]
    pub header: SessionHeader,
    pub trials: Vec<TrialRecord>,
}

/// Phase sequence the protocol produces for a trial of the given modality.
pub fn expected_phases(modality: Modality) -> &'static [Phase] {
    match modality {
        Modality::Ai => &[
            Phase::View,
            Phase::Speak,
            Phase::Gray,
            Phase::GeneratedImage,
            Phase::Rating,
        ],
        Modality::NoAi => &[Phase::View, Phase::Speak, Phase::Gray, Phase::Rating],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trial_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trial_index {
            Some(i) => write!(f, "trial {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every per-trial and per-session invariant; returns the violations.
pub fn validate_session(record: &SessionRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut embedding_dim: Option<usize> = None;

    for trial in &record.trials {
        let idx = trial.trial_index;
        let mut push = |message: String| {
            out.push(Violation {
                trial_index: Some(idx),
                message,
            })
        };

        if !seen.insert(idx) {
            push(format!("duplicate trial_index {idx}"));
        }
        if trial.stimulus.valence_class != trial.condition.emotion {
            push(format!(
                "stimulus {} is {:?} but condition is {}",
                trial.stimulus.stimulus_id, trial.stimulus.valence_class, trial.condition
            ));
        }
        match (trial.condition.is_ai(), trial.generation.is_some()) {
            (true, false) if !trial.has_flag(TrialFlag::GenerationFailed) => {
                push(format!("AI trial ({}) has no generation result", trial.condition))
            }
            (false, true) => push(format!(
                "non-AI trial ({}) carries a generation result",
                trial.condition
            )),
            _ => {}
        }
        if let Some(gen) = &trial.generation {
            let dim = gen.output_embedding.dim();
            if dim == 0 || !gen.output_embedding.norm().is_finite() {
                push("output embedding is empty or non-finite".into());
            }
            match embedding_dim {
                None => embedding_dim = Some(dim),
                Some(d) if d != dim => push(format!("embedding dim {dim} differs from session dim {d}")),
                _ => {}
            }
        }
        if let Some(t) = &trial.transcript {
            if t.source_language == Language::En && t.english_text != t.raw_text {
                push("English transcript differs from raw text".into());
            }
            if t.word_count != word_count(&t.english_text) {
                push(format!(
                    "word_count {} does not match transcript ({})",
                    t.word_count,
                    word_count(&t.english_text)
                ));
            }
        }

        let phases: Vec<Phase> = trial
            .phase_timestamps
            .iter()
            .map(|s| s.phase)
            .filter(|p| *p != Phase::InterTrial)
            .collect();
        let expected = expected_phases(trial.condition.modality);
        let generation_skipped = trial.condition.is_ai() && trial.has_flag(TrialFlag::GenerationFailed);
        let ok = if generation_skipped {
            phases == expected_phases(Modality::NoAi)
        } else {
            phases == expected
        };
        if !ok {
            push(format!("phase order {phases:?} does not match protocol"));
        }
        let mut last_end = 0;
        for span in &trial.phase_timestamps {
            if span.end_ms < span.start_ms || span.start_ms < last_end {
                push(format!("non-monotonic timestamps at {:?}", span.phase));
                break;
            }
            last_end = span.end_ms;
        }
    }

    let mut indices: Vec<usize> = seen.into_iter().collect();
    indices.sort_unstable();
    if indices.iter().enumerate().any(|(i, v)| i != *v) {
        out.push(Violation {
            trial_index: None,
            message: "trial indices are not contiguous from 0".into(),
        });
    }
    out
}
