//! Timed trial state machine and session sequencing.

pub mod engine;
pub mod wire;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Condition, Emotion, Modality, Stimulus};
use crate::storage::StorageError;

pub use engine::{run_session, run_trial, SessionStatus, TrialContext};
pub use wire::{
    audio_messages, ClientMessage, PhasePayload, ScriptedParticipant, ServerMessage, UiChannel, UiError,
    PCM_BYTES_PER_SAMPLE, PCM_SAMPLE_RATE,
};

pub const DEFAULT_TRIALS_PER_CELL: usize = 10;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("planning error: {0}")]
    Plan(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("participant channel disconnected")]
    Disconnected,
    #[error("no rating received for trial {trial_index} before the timeout")]
    RatingTimeout { trial_index: usize },
    #[error("ui channel: {0}")]
    Ui(String),
    #[error("session file does not match the plan: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl From<UiError> for ProtocolError {
    fn from(e: UiError) -> Self {
        match e {
            UiError::Disconnected => ProtocolError::Disconnected,
            UiError::Other(m) => ProtocolError::Ui(m),
        }
    }
}

/// Phase durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseSchedule {
    pub view_ms: u64,
    pub speak_ms: u64,
    pub gray_ms: u64,
    pub generated_view_ms: u64,
    /// Rating is self-paced when unset.
    pub rating_timeout_ms: Option<u64>,
    pub inter_trial_ms: u64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        Self {
            view_ms: 4000,
            speak_ms: 12000,
            gray_ms: 4000,
            generated_view_ms: 3000,
            rating_timeout_ms: None,
            inter_trial_ms: 1000,
        }
    }
}

impl PhaseSchedule {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let named = [
            ("view_ms", self.view_ms),
            ("speak_ms", self.speak_ms),
            ("gray_ms", self.gray_ms),
            ("generated_view_ms", self.generated_view_ms),
            ("rating_timeout_ms", self.rating_timeout_ms.unwrap_or(1)),
            ("inter_trial_ms", self.inter_trial_ms.max(1)),
        ];
        match named.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ProtocolError::Schedule(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }

    /// Scheduled time from trial start to the end of the gray screen. The
    /// same for every condition.
    pub fn pre_rating_ms(&self) -> u64 {
        self.view_ms + self.speak_ms + self.gray_ms
    }

    /// Scheduled time from trial start to rating onset.
    pub fn rating_onset_ms(&self, modality: Modality) -> u64 {
        match modality {
            Modality::Ai => self.pre_rating_ms() + self.generated_view_ms,
            Modality::NoAi => self.pre_rating_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub condition: Condition,
    pub stimulus: Stimulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub entries: Vec<PlanEntry>,
    pub randomization_seed: u64,
}

impl TrialPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Counts per cell, indexed by `Condition::index()`.
    pub fn cell_counts(&self) -> [usize; 8] {
        let mut counts = [0; 8];
        for e in &self.entries {
            counts[e.condition.index()] += 1;
        }
        counts
    }
}

/// Blocked-random plan: `trials_per_cell` blocks, each holding one trial of
/// every cell in shuffled order. Stimuli are drawn without replacement from
/// their own valence class.
pub fn plan_session(manifest: &[Stimulus], trials_per_cell: usize, seed: u64) -> Result<TrialPlan, ProtocolError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_valence = 4 * trials_per_cell;
    let mut pools = Vec::new();
    for emotion in Emotion::ALL {
        let mut pool: Vec<&Stimulus> = manifest.iter().filter(|s| s.valence_class == emotion).collect();
        if pool.len() < per_valence {
            return Err(ProtocolError::Plan(format!(
                "insufficient {emotion:?} stimuli: {} cells x {trials_per_cell} trials need {per_valence}, manifest has {}",
                4,
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        pool.truncate(per_valence);
        pools.push(pool);
    }

    // stimulus k of a valence pool serves cell (k % 4) of that valence
    let cells = Condition::all();
    let mut by_cell: Vec<Vec<&Stimulus>> = vec![Vec::new(); 8];
    for (e, pool) in pools.iter().enumerate() {
        for (k, s) in pool.iter().enumerate() {
            by_cell[e * 4 + k % 4].push(s);
        }
    }

    let mut entries = Vec::with_capacity(8 * trials_per_cell);
    for block in 0..trials_per_cell {
        let mut order: Vec<usize> = (0..8).collect();
        order.shuffle(&mut rng);
        for c in order {
            entries.push(PlanEntry {
                condition: cells[c],
                stimulus: by_cell[c][block].clone(),
            });
        }
    }
    Ok(TrialPlan {
        entries,
        randomization_seed: seed,
    })
}

/// Independent seed for stream `stream`, item `index` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ stream) ^ index)
}
