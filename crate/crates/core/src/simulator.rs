//! Synthetic participants driven through the real protocol on virtual time
//! with mock services, for closed-loop checks of the analysis.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::analysis::cosine_alignment;
use crate::clients::mock::{MockSentiment, TEXT_PREFIX};
use crate::clients::{ClientSet, MockSettings, CAPTION_INSTRUCTION};
use crate::clock::{Clock, VirtualClock};
use crate::domain::{
    ArtifactRef, Condition, Emotion, Instruction, Language, Phase, SessionHeader, SessionRecord, Stimulus,
    TrialRecord, SESSION_FORMAT_VERSION,
};
use crate::protocol::wire::{audio_messages, pcm_bytes_for_ms};
use crate::protocol::{
    derive_seed, plan_session, run_session, run_trial, ClientMessage, PhasePayload, PhaseSchedule, PlanEntry,
    ProtocolError, ServerMessage, SessionStatus, TrialContext, UiChannel, UiError,
};
use crate::storage::{ArtifactStore, MemoryArtifactStore};

/// Fixed creation time stamped on simulated sessions, so reruns are
/// byte-identical.
pub const SIMULATED_CREATED_AT: &str = "1970-01-01T00:00:00Z";

const SUBJECT_STREAM: u64 = 2;
const PLAN_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("prompt bank has no entries for {0}")]
    EmptyBank(String),
    #[error("invalid participant model: {0}")]
    InvalidModel(String),
    #[error("a cohort needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// One value per design cell, serialized as a map keyed by cell label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMap(pub [f64; 8]);

impl CellMap {
    pub fn get(&self, c: Condition) -> f64 {
        self.0[c.index()]
    }
}

impl Serialize for CellMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = Condition::all().iter().map(|c| (c.label(), self.get(*c))).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = [0.0; 8];
        for c in Condition::all() {
            out[c.index()] = *m
                .get(&c.label())
                .ok_or_else(|| serde::de::Error::custom(format!("missing cell {}", c.label())))?;
        }
        if m.len() != 8 {
            return Err(serde::de::Error::custom("unknown cell label in map"));
        }
        Ok(CellMap(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantModel {
    /// Latent affect mean per cell, on the remapped scale.
    pub baseline_by_cell: CellMap,
    pub sentiment_gain_ai: f64,
    pub sentiment_gain_noai: f64,
    pub alignment_gain: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Cell means reported for the study sample, used as calibration targets.
pub const PAPER_LIKE_TARGETS: [f64; 8] = [-1.07, -1.02, -0.47, 0.35, 0.10, 0.16, 0.35, 0.69];

impl ParticipantModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SimError::InvalidModel(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        if let Some(v) = self.baseline_by_cell.0.iter().find(|v| !(-2.0..=2.0).contains(*v)) {
            return Err(SimError::InvalidModel(format!("baseline {v} outside [-2, 2]")));
        }
        Ok(())
    }

    /// No cell differences and no coupling to sentiment or alignment.
    pub fn null() -> Self {
        Self {
            baseline_by_cell: CellMap([0.0; 8]),
            sentiment_gain_ai: 0.0,
            sentiment_gain_noai: 0.0,
            alignment_gain: 0.0,
            noise_sd: 0.5,
            seed: 0,
        }
    }

    /// Gains coupling ratings to prompt sentiment (stronger with AI) and to
    /// alignment, with baselines calibrated so that expected cell means hit
    /// [`PAPER_LIKE_TARGETS`] under the default bank and mocks.
    pub fn paper_like() -> Self {
        let mut m = Self {
            baseline_by_cell: CellMap([0.0; 8]),
            sentiment_gain_ai: 0.4,
            sentiment_gain_noai: 0.2,
            alignment_gain: 0.3,
            noise_sd: 0.5,
            seed: 0,
        };
        let expected = expected_contributions(&m, &PromptBank::default(), &MockSettings::default());
        for c in Condition::all() {
            m.baseline_by_cell.0[c.index()] = PAPER_LIKE_TARGETS[c.index()] - expected[c.index()];
        }
        m
    }

    pub fn sentiment_gain(&self, c: Condition) -> f64 {
        if c.is_ai() {
            self.sentiment_gain_ai
        } else {
            self.sentiment_gain_noai
        }
    }

    /// Noise-free latent rating.
    pub fn latent_mean(&self, c: Condition, sentiment: f64, alignment: Option<f64>) -> f64 {
        let mut v = self.baseline_by_cell.get(c) + self.sentiment_gain(c) * sentiment;
        if c.is_ai() {
            v += self.alignment_gain * alignment.unwrap_or(0.0);
        }
        v
    }
}

/// Nearest raw 1..9 step of a remapped latent rating, halves rounded away
/// from zero.
pub fn quantize_rating(latent: f64) -> i64 {
    ((latent * 2.0 + 5.0).round() as i64).clamp(1, 9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tone {
    Negative,
    Neutral,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub text: String,
    /// Tone the sentiment classifier is expected to assign.
    pub tone: Tone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBank {
    pub negative_describe: Vec<PromptEntry>,
    pub negative_reappraise: Vec<PromptEntry>,
    pub neutral_describe: Vec<PromptEntry>,
    pub neutral_reappraise: Vec<PromptEntry>,
}

fn entries(tone: Tone, texts: &[&str]) -> Vec<PromptEntry> {
    texts
        .iter()
        .map(|t| PromptEntry {
            text: t.to_string(),
            tone,
        })
        .collect()
}

impl Default for PromptBank {
    fn default() -> Self {
        Self {
            negative_describe: entries(
                Tone::Negative,
                &[
                    "a man is lying injured on the street",
                    "there is blood everywhere after the accident",
                    "the child is crying and looks afraid",
                    "the house is destroyed by the fire",
                    "a sick dog is alone and hungry",
                    "people are hurt and in pain",
                    "it looks like a terrible war scene",
                    "the woman is sad and scared",
                ],
            ),
            negative_reappraise: entries(
                Tone::Positive,
                &[
                    "this person will recover soon",
                    "help is coming and they will be safe",
                    "the child is comforted and smiles again",
                    "the family survived and is together",
                    "the firefighters rescued everyone",
                    "the dog is healed and playful now",
                    "they are healthy and grateful",
                    "the people are smiling and safe",
                ],
            ),
            neutral_describe: entries(
                Tone::Neutral,
                &[
                    "a woman is standing in a kitchen",
                    "a chair next to a table",
                    "people are walking on a street",
                    "a cup on a desk",
                    "a man is reading a newspaper",
                    "a bus waits at the station",
                    "a worker wears a hard hat",
                    "someone is pouring fluid in a lab",
                ],
            ),
            neutral_reappraise: entries(
                Tone::Positive,
                &[
                    "the woman is happy cooking for her friends",
                    "a warm and peaceful afternoon at home",
                    "people enjoying a calm walk together",
                    "a good coffee and a bright morning",
                    "the man smiles reading good news",
                    "friends celebrate at the station",
                    "the worker is proud and safe",
                    "a kind scientist helping others",
                ],
            ),
        }
    }
}

impl PromptBank {
    pub fn cell(&self, emotion: Emotion, instruction: Instruction) -> &[PromptEntry] {
        match (emotion, instruction) {
            (Emotion::Negative, Instruction::Describe) => &self.negative_describe,
            (Emotion::Negative, Instruction::Reappraise) => &self.negative_reappraise,
            (Emotion::Neutral, Instruction::Describe) => &self.neutral_describe,
            (Emotion::Neutral, Instruction::Reappraise) => &self.neutral_reappraise,
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        for e in Emotion::ALL {
            for i in [Instruction::Describe, Instruction::Reappraise] {
                if self.cell(e, i).is_empty() {
                    return Err(SimError::EmptyBank(format!("{e:?}/{i:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Synthetic stimuli with scene descriptions for the mock image encoder.
pub fn synthetic_manifest(per_valence: usize) -> Vec<Stimulus> {
    const NEG: [&str; 8] = [
        "an injured man lying on a street",
        "a crying child in a ruined house",
        "a burning car after an accident",
        "a wounded dog alone in the rain",
        "a sick woman in a hospital bed",
        "soldiers in a destroyed village",
        "a flooded street with broken homes",
        "a frightened boy in a dark room",
    ];
    const NEU: [&str; 8] = [
        "a woman standing in a kitchen",
        "a man reading a newspaper on a bench",
        "a bus waiting at a station",
        "people walking in a shopping street",
        "a cup of coffee on a desk",
        "a worker wearing a hard hat",
        "a scientist pouring fluid in a lab",
        "a table with chairs in a room",
    ];
    let mut out = Vec::with_capacity(2 * per_valence);
    for (emotion, tag, scenes) in [(Emotion::Negative, "neg", NEG), (Emotion::Neutral, "neu", NEU)] {
        for k in 0..per_valence {
            let id = format!("{tag}_{k:03}");
            out.push(Stimulus {
                image_path: PathBuf::from(format!("synthetic/{id}.jpg")),
                stimulus_id: id,
                valence_class: emotion,
                image_scale_override: None,
                description: Some(scenes[k % scenes.len()].to_string()),
            });
        }
    }
    out
}

fn prompt_alignment(clients: &ClientSet, prompt: &str, image: &ArtifactRef, clock: &dyn Clock) -> Option<f64> {
    let caption = clients.captions.caption(image, CAPTION_INSTRUCTION, clock).ok()?;
    let a = clients.embedder.embed(prompt, clock).ok()?;
    let b = clients.embedder.embed(&caption.text, clock).ok()?;
    cosine_alignment(&a, &b).ok()
}

/// Expected sentiment and alignment contribution to each cell's mean under
/// `model`'s gains, averaged over the bank and a few synthetic scenes.
pub fn expected_contributions(model: &ParticipantModel, bank: &PromptBank, settings: &MockSettings) -> [f64; 8] {
    let clients = ClientSet::mock(settings, Arc::new(MemoryArtifactStore::new()));
    let clock = VirtualClock::new();
    let stimuli = synthetic_manifest(8);
    let mut out = [0.0; 8];
    for c in Condition::all() {
        let prompts = bank.cell(c.emotion, c.instruction);
        if prompts.is_empty() {
            continue;
        }
        let sentiment: f64 = prompts
            .iter()
            .map(|p| {
                let pr = MockSentiment::probabilities(&p.text);
                pr.p_positive - pr.p_negative
            })
            .sum::<f64>()
            / prompts.len() as f64;
        let mut v = model.sentiment_gain(c) * sentiment;
        if c.is_ai() && model.alignment_gain != 0.0 {
            let mut acc = 0.0;
            let mut n = 0usize;
            for (k, s) in stimuli.iter().filter(|s| s.valence_class == c.emotion).enumerate() {
                for (j, p) in prompts.iter().enumerate() {
                    let req = crate::domain::GenerationRequest::new(
                        p.text.clone(),
                        s.clone(),
                        crate::protocol::engine::image_scale_for(s),
                        (k * 100 + j) as u64,
                    );
                    if let Ok(g) = clients.generator.generate(&req, &clock) {
                        acc += prompt_alignment(&clients, &p.text, &g.image_ref, &clock).unwrap_or(0.0);
                    }
                    n += 1;
                }
            }
            v += model.alignment_gain * acc / n.max(1) as f64;
        }
        out[c.index()] = v;
    }
    out
}

/// Participant that speaks a bank prompt and rates from the model.
pub struct SimulatedParticipant {
    pub model: ParticipantModel,
    pub bank: Arc<PromptBank>,
    clients: ClientSet,
    rng: ChaCha8Rng,
    queue: VecDeque<ClientMessage>,
    current: Option<(Condition, String)>,
    alignment: Option<f64>,
    pub rating_delay_ms: u64,
    rating_pending: bool,
}

impl SimulatedParticipant {
    pub fn new(model: ParticipantModel, bank: Arc<PromptBank>, clients: ClientSet) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Self {
            model,
            bank,
            clients,
            rng,
            queue: VecDeque::new(),
            current: None,
            alignment: None,
            rating_delay_ms: 1500,
            rating_pending: false,
        }
    }

    fn rate(&mut self) -> i64 {
        let (c, prompt) = self.current.clone().expect("rating after a stimulus");
        let p = MockSentiment::probabilities(&prompt);
        let sentiment = p.p_positive - p.p_negative;
        let noise: f64 = self.rng.sample(StandardNormal);
        let latent = self.model.latent_mean(c, sentiment, self.alignment) + self.model.noise_sd * noise;
        quantize_rating(latent)
    }
}

impl UiChannel for SimulatedParticipant {
    fn send(&mut self, msg: &ServerMessage) -> Result<(), UiError> {
        let ServerMessage::PhaseEnter { phase, payload, .. } = msg else {
            return Ok(());
        };
        match (phase, payload) {
            (Phase::View, PhasePayload::Stimulus { condition, .. }) => {
                let prompts = self.bank.cell(condition.emotion, condition.instruction);
                let entry = prompts
                    .choose(&mut self.rng)
                    .ok_or_else(|| UiError::Other(format!("empty prompt bank for {condition}")))?;
                self.current = Some((*condition, entry.text.clone()));
                self.alignment = None;
            }
            (Phase::Speak, _) => {
                if let Some((_, prompt)) = &self.current {
                    let audio = format!("{TEXT_PREFIX}{prompt}").into_bytes();
                    self.queue.extend(audio_messages(&audio, pcm_bytes_for_ms(500)));
                }
            }
            (Phase::GeneratedImage, PhasePayload::GeneratedImage { artifact_id }) => {
                if let Some((_, prompt)) = &self.current {
                    let image = ArtifactRef {
                        id: artifact_id.clone(),
                        path: PathBuf::new(),
                    };
                    let clock = VirtualClock::new();
                    self.alignment = prompt_alignment(&self.clients, prompt, &image, &clock);
                }
            }
            (Phase::Rating, _) => {
                let raw = self.rate();
                self.queue.push_back(ClientMessage::Rating { raw });
                self.rating_pending = true;
            }
            _ => {}
        }
        Ok(())
    }

    fn recv(&mut self, deadline_ms: Option<u64>, clock: &dyn Clock) -> Result<Option<ClientMessage>, UiError> {
        match self.queue.pop_front() {
            Some(m @ ClientMessage::Rating { .. }) if self.rating_pending => {
                self.rating_pending = false;
                clock.sleep_ms(self.rating_delay_ms);
                Ok(Some(m))
            }
            Some(m) => Ok(Some(m)),
            None if deadline_ms.is_some() => Ok(None),
            None => Err(UiError::Disconnected),
        }
    }
}

fn context(clients: ClientSet, schedule: PhaseSchedule, seed: u64) -> TrialContext {
    TrialContext {
        schedule,
        clients,
        clock: Arc::new(VirtualClock::new()),
        language: Language::En,
        session_seed: seed,
    }
}

/// One trial through the real protocol path on a fresh virtual clock.
pub fn simulate_trial(
    model: &ParticipantModel,
    condition: Condition,
    stimulus: &Stimulus,
    bank: &PromptBank,
    settings: &MockSettings,
) -> Result<TrialRecord, SimError> {
    model.validate()?;
    if bank.cell(condition.emotion, condition.instruction).is_empty() {
        return Err(SimError::EmptyBank(condition.to_string()));
    }
    let clients = ClientSet::mock(settings, Arc::new(MemoryArtifactStore::new()));
    let ctx = context(clients.clone(), PhaseSchedule::default(), model.seed);
    let mut ui = SimulatedParticipant::new(model.clone(), Arc::new(bank.clone()), clients);
    let entry = PlanEntry {
        condition,
        stimulus: stimulus.clone(),
    };
    Ok(run_trial(0, &entry, &ctx, &mut ui)?.0)
}

/// How much subjects deviate from the cohort template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    /// Subject-wide shift added to every cell.
    pub intercept_sd: f64,
    /// Independent shift per cell.
    pub cell_sd: f64,
    /// Relative spread of the gains.
    pub gain_rel_sd: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            intercept_sd: 0.3,
            cell_sd: 0.05,
            gain_rel_sd: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub trials_per_cell: usize,
    pub template: ParticipantModel,
    #[serde(default)]
    pub jitter: Jitter,
    pub seed: u64,
    #[serde(default)]
    pub mock: MockSettings,
    #[serde(default)]
    pub schedule: PhaseSchedule,
    #[serde(default)]
    pub bank: PromptBank,
}

impl CohortSpec {
    pub fn new(n_subjects: usize, trials_per_cell: usize, template: ParticipantModel, seed: u64) -> Self {
        Self {
            n_subjects,
            trials_per_cell,
            template,
            jitter: Jitter::default(),
            seed,
            mock: MockSettings::default(),
            schedule: PhaseSchedule::default(),
            bank: PromptBank::default(),
        }
    }

    /// Subject `i`'s model: the template perturbed by the jitter.
    pub fn subject_model(&self, i: usize) -> ParticipantModel {
        let seed = derive_seed(self.seed, SUBJECT_STREAM, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let mut m = self.template.clone();
        let shift = self.jitter.intercept_sd * normal();
        for v in m.baseline_by_cell.0.iter_mut() {
            *v = (*v + shift + self.jitter.cell_sd * normal()).clamp(-2.0, 2.0);
        }
        m.sentiment_gain_ai *= 1.0 + self.jitter.gain_rel_sd * normal();
        m.sentiment_gain_noai *= 1.0 + self.jitter.gain_rel_sd * normal();
        m.alignment_gain *= 1.0 + self.jitter.gain_rel_sd * normal();
        m.seed = seed;
        m
    }
}

pub fn subject_header(cohort_seed: u64, i: usize, seed: u64) -> SessionHeader {
    SessionHeader {
        format_version: SESSION_FORMAT_VERSION,
        session_id: format!("sim-{cohort_seed}-{i:03}"),
        subject_id: format!("S{:02}", i + 1),
        language: Language::En,
        seed,
        created_at: SIMULATED_CREATED_AT.to_string(),
        stamp: None,
    }
}

/// Runs one simulated subject's full session, keeping generated images in
/// `artifacts`.
pub fn simulate_subject(
    spec: &CohortSpec,
    i: usize,
    artifacts: Arc<dyn ArtifactStore>,
) -> Result<SessionRecord, SimError> {
    let model = spec.subject_model(i);
    model.validate()?;
    let manifest = synthetic_manifest(4 * spec.trials_per_cell);
    let plan = plan_session(&manifest, spec.trials_per_cell, derive_seed(spec.seed, PLAN_STREAM, i as u64))?;
    let clients = ClientSet::mock(&spec.mock, artifacts);
    let ctx = context(clients.clone(), spec.schedule, model.seed);
    let mut record = SessionRecord {
        header: subject_header(spec.seed, i, model.seed),
        trials: Vec::with_capacity(plan.len()),
    };
    let mut ui = SimulatedParticipant::new(model, Arc::new(spec.bank.clone()), clients);
    match run_session(&mut record, &plan, &ctx, &mut ui, None)? {
        SessionStatus::Completed => Ok(record),
        SessionStatus::Paused { next_trial } => Err(SimError::Protocol(ProtocolError::Ui(format!(
            "simulated session stopped at trial {next_trial}"
        )))),
    }
}

/// Simulates every subject independently (in parallel), each with its own
/// in-memory artifact store; output order follows subject index.
pub fn simulate_cohort(spec: &CohortSpec) -> Result<Vec<SessionRecord>, SimError> {
    check_spec(spec)?;
    (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(spec, i, Arc::new(MemoryArtifactStore::new())))
        .collect()
}

/// Like [`simulate_cohort`], but all subjects share one artifact store.
pub fn simulate_cohort_with_store(
    spec: &CohortSpec,
    artifacts: Arc<dyn ArtifactStore>,
) -> Result<Vec<SessionRecord>, SimError> {
    check_spec(spec)?;
    (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(spec, i, artifacts.clone()))
        .collect()
}

fn check_spec(spec: &CohortSpec) -> Result<(), SimError> {
    if spec.n_subjects < 2 {
        return Err(SimError::TooFewSubjects(spec.n_subjects));
    }
    spec.template.validate()?;
    spec.bank.check()
}
