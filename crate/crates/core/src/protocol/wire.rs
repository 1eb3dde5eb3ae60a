//! Session-control messages exchanged with the participant UI, as JSON
//! objects tagged by `type`. Audio travels as base64 16-bit PCM chunks.

use std::collections::VecDeque;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::mock::TEXT_PREFIX;
use crate::clock::Clock;
use crate::domain::{Condition, Instruction, Language, Modality, Phase};

pub const PCM_SAMPLE_RATE: u32 = 16_000;
pub const PCM_BYTES_PER_SAMPLE: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhasePayload {
    Stimulus {
        stimulus_id: String,
        image_path: String,
        condition: Condition,
        instruction: Instruction,
        modality: Modality,
    },
    Blank,
    GeneratedImage {
        artifact_id: String,
    },
    RatingScale {
        min: u8,
        max: u8,
        anchors: [u8; 5],
    },
}

impl PhasePayload {
    pub fn rating_scale() -> Self {
        PhasePayload::RatingScale {
            min: 1,
            max: 9,
            anchors: [1, 3, 5, 7, 9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionReady {
        session_id: String,
        subject_id: String,
        total_trials: usize,
        next_trial: usize,
        server_time_ms: u64,
    },
    PhaseEnter {
        trial_index: usize,
        phase: Phase,
        /// Absolute server time at which the phase ends; absent when the
        /// phase waits for the participant.
        deadline_ms: Option<u64>,
        server_time_ms: u64,
        payload: PhasePayload,
    },
    Ack {
        of: String,
    },
    Error {
        message: String,
    },
    SessionPaused {
        next_trial: usize,
    },
    SessionComplete {
        trials: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    SessionStart {
        subject_id: String,
        #[serde(default)]
        language: Option<Language>,
    },
    AudioChunk {
        seq: u64,
        pcm_b64: String,
    },
    AudioEnd,
    Rating {
        raw: i64,
    },
    SessionPause,
    SessionResume,
}

/// Splits an audio buffer into numbered base64 chunks followed by `audio_end`.
pub fn audio_messages(audio: &[u8], chunk_bytes: usize) -> Vec<ClientMessage> {
    let mut out: Vec<ClientMessage> = audio
        .chunks(chunk_bytes.max(1))
        .enumerate()
        .map(|(i, c)| ClientMessage::AudioChunk {
            seq: i as u64,
            pcm_b64: B64.encode(c),
        })
        .collect();
    out.push(ClientMessage::AudioEnd);
    out
}

/// Bytes of PCM audio in `ms` milliseconds.
pub fn pcm_bytes_for_ms(ms: u64) -> usize {
    (ms * PCM_SAMPLE_RATE as u64 * PCM_BYTES_PER_SAMPLE as u64 / 1000) as usize
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UiError {
    #[error("disconnected")]
    Disconnected,
    #[error("{0}")]
    Other(String),
}

/// Bidirectional message channel to one participant.
pub trait UiChannel {
    fn send(&mut self, msg: &ServerMessage) -> Result<(), UiError>;

    /// Next client message. With a deadline, returns `Ok(None)` once the
    /// clock reaches it; without one, blocks until a message arrives.
    fn recv(&mut self, deadline_ms: Option<u64>, clock: &dyn Clock) -> Result<Option<ClientMessage>, UiError>;
}

/// What a scripted participant says and rates on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedResponse {
    pub audio: Vec<u8>,
    pub rating: i64,
}

impl ScriptedResponse {
    /// Speech carried as inline text, as understood by the mock recognizer.
    pub fn spoken(text: &str, rating: i64) -> Self {
        Self {
            audio: format!("{TEXT_PREFIX}{text}").into_bytes(),
            rating,
        }
    }
}

/// Participant that answers from a fixed per-trial script. Responses are
/// reused cyclically when the session runs longer than the script.
#[derive(Debug, Default)]
pub struct ScriptedParticipant {
    pub script: Vec<ScriptedResponse>,
    /// Time taken to move the slider, slept on the session clock.
    pub rating_delay_ms: u64,
    /// Trial index at whose View phase the channel drops.
    pub disconnect_at: Option<usize>,
    /// Extra messages sent at the start of a given trial's View phase.
    pub inject: Vec<(usize, ClientMessage)>,
    pub sent: Vec<ServerMessage>,
    pub replies: Vec<ServerMessage>,
    queue: VecDeque<ClientMessage>,
    rating_pending: bool,
}

impl ScriptedParticipant {
    pub fn new(script: Vec<ScriptedResponse>) -> Self {
        Self {
            script,
            ..Default::default()
        }
    }

    /// Phases announced so far, in order.
    pub fn phase_log(&self) -> Vec<(usize, Phase)> {
        self.sent
            .iter()
            .filter_map(|m| match m {
                ServerMessage::PhaseEnter { trial_index, phase, .. } => Some((*trial_index, *phase)),
                _ => None,
            })
            .collect()
    }
}

impl UiChannel for ScriptedParticipant {
    fn send(&mut self, msg: &ServerMessage) -> Result<(), UiError> {
        if let ServerMessage::PhaseEnter { trial_index, phase, .. } = msg {
            if *phase == Phase::View && self.disconnect_at == Some(*trial_index) {
                self.disconnect_at = None;
                return Err(UiError::Disconnected);
            }
            let response = (!self.script.is_empty()).then(|| self.script[trial_index % self.script.len()].clone());
            match phase {
                Phase::View => {
                    let extra: Vec<ClientMessage> = self
                        .inject
                        .iter()
                        .filter(|(t, _)| t == trial_index)
                        .map(|(_, m)| m.clone())
                        .collect();
                    self.queue.extend(extra);
                }
                Phase::Speak => {
                    if let Some(r) = &response {
                        self.queue.extend(audio_messages(&r.audio, pcm_bytes_for_ms(500)));
                    }
                }
                Phase::Rating => {
                    if let Some(r) = response {
                        self.queue.push_back(ClientMessage::Rating { raw: r.rating });
                        self.rating_pending = true;
                    }
                }
                _ => {}
            }
        }
        match msg {
            ServerMessage::PhaseEnter { .. } => self.sent.push(msg.clone()),
            other => self.replies.push(other.clone()),
        }
        Ok(())
    }

    fn recv(&mut self, deadline_ms: Option<u64>, clock: &dyn Clock) -> Result<Option<ClientMessage>, UiError> {
        match self.queue.pop_front() {
            Some(m @ ClientMessage::Rating { .. }) if self.rating_pending => {
                self.rating_pending = false;
                let at = clock.now_ms() + self.rating_delay_ms;
                if deadline_ms.is_some_and(|d| at > d) {
                    self.queue.push_front(m);
                    clock.sleep_until(deadline_ms.unwrap());
                    return Ok(None);
                }
                clock.sleep_until(at);
                Ok(Some(m))
            }
            Some(m) => Ok(Some(m)),
            None if deadline_ms.is_some() => Ok(None),
            None => Err(UiError::Disconnected),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_shapes() {
        let m = ServerMessage::PhaseEnter {
            trial_index: 2,
            phase: Phase::Speak,
            deadline_ms: Some(16000),
            server_time_ms: 4000,
            payload: PhasePayload::Blank,
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type":"phase_enter","trial_index":2,"phase":"Speak","deadline_ms":16000,"server_time_ms":4000,"payload":{"kind":"blank"}}"#
        );
        let c: ClientMessage = serde_json::from_str(r#"{"type":"rating","raw":7}"#).unwrap();
        assert_eq!(c, ClientMessage::Rating { raw: 7 });
        let c: ClientMessage = serde_json::from_str(r#"{"type":"audio_chunk","seq":0,"pcm_b64":"AAA="}"#).unwrap();
        assert!(matches!(c, ClientMessage::AudioChunk { seq: 0, .. }));
        let c: ClientMessage = serde_json::from_str(r#"{"type":"session_pause"}"#).unwrap();
        assert_eq!(c, ClientMessage::SessionPause);
    }

    #[test]
    fn chunking_covers_audio() {
        let audio: Vec<u8> = (0..pcm_bytes_for_ms(12_000)).map(|i| i as u8).collect();
        let msgs = audio_messages(&audio, pcm_bytes_for_ms(500));
        assert_eq!(msgs.len(), 25);
        assert_eq!(msgs.last(), Some(&ClientMessage::AudioEnd));
        let mut joined = Vec::new();
        for m in &msgs {
            if let ClientMessage::AudioChunk { pcm_b64, .. } = m {
                joined.extend(B64.decode(pcm_b64).unwrap());
            }
        }
        assert_eq!(joined, audio);
    }
}
