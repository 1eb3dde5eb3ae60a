//! Per-trial phase sequencing and session execution.

use std::sync::mpsc;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use log::{info, warn};

use super::wire::{ClientMessage, PhasePayload, ServerMessage, UiChannel};
use super::{derive_seed, PhaseSchedule, PlanEntry, ProtocolError, TrialPlan};
use crate::analysis::{cosine_alignment, flesch_reading_ease};
use crate::clients::{ClientSet, CAPTION_INSTRUCTION};
use crate::clock::Clock;
use crate::conditioning::DEFAULT_IMAGE_SCALE;
use crate::domain::{
    word_count, AffectRating, CaptionRecord, GenerationRequest, GenerationResult, Language, Phase, PhaseSpan,
    SessionRecord, Stimulus, TrialFlag, TrialMeasures, TrialRecord, TranscriptBundle,
};
use crate::storage::SessionWriter;

const GENERATION_SEED_STREAM: u64 = 1;

/// Everything a trial needs besides the plan entry and the UI.
#[derive(Clone)]
pub struct TrialContext {
    pub schedule: PhaseSchedule,
    pub clients: ClientSet,
    pub clock: Arc<dyn Clock>,
    pub language: Language,
    pub session_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Completed,
    /// The participant left; the session resumes at `next_trial`.
    Paused { next_trial: usize },
}

struct PipelineInput {
    audio: Vec<u8>,
    language: Language,
    stimulus: Stimulus,
    ai: bool,
    seed: u64,
}

struct PipelineOutput {
    transcript: Option<TranscriptBundle>,
    generation: Option<GenerationResult>,
    measures: TrialMeasures,
    flags: Vec<TrialFlag>,
}

enum PipelineEvent {
    /// Generation finished (or was abandoned) at this clock time.
    GenerationSettled(u64),
    Done(PipelineOutput),
}

pub fn image_scale_for(stimulus: &Stimulus) -> f64 {
    stimulus.image_scale_override.unwrap_or(DEFAULT_IMAGE_SCALE)
}

/// Sentiment of the spoken text and, for generated images, caption and
/// prompt-caption alignment. Missing pieces are reported as flags.
pub fn derive_measures(
    english_text: Option<&str>,
    generation: Option<&GenerationResult>,
    clients: &ClientSet,
    clock: &dyn Clock,
) -> (TrialMeasures, Vec<TrialFlag>) {
    let mut measures = TrialMeasures::default();
    let mut flags = Vec::new();
    let text = english_text.filter(|t| !t.trim().is_empty());
    if let Some(t) = text {
        match clients.sentiment.classify(t, clock).map(|p| p.to_record()) {
            Ok(Ok(r)) => measures.sentiment = Some(r),
            Ok(Err(e)) => warn!("sentiment output rejected: {e}"),
            Err(e) => warn!("sentiment failed: {e}"),
        }
    }
    if let Some(gen) = generation {
        match clients.captions.caption(&gen.image_ref, CAPTION_INSTRUCTION, clock) {
            Ok(c) => {
                let alignment = text.and_then(|t| {
                    let a = clients.embedder.embed(t, clock).ok()?;
                    let b = clients.embedder.embed(&c.text, clock).ok()?;
                    cosine_alignment(&a, &b).ok()
                });
                match alignment {
                    Some(a) => measures.alignment = Some(a),
                    None => flags.push(TrialFlag::AlignmentUnavailable),
                }
                measures.caption = Some(CaptionRecord {
                    text: c.text,
                    source: c.source,
                });
            }
            Err(e) => {
                warn!("caption unavailable: {e}");
                flags.push(TrialFlag::CaptionUnavailable);
                flags.push(TrialFlag::AlignmentUnavailable);
            }
        }
    }
    (measures, flags)
}

fn run_pipeline(
    input: PipelineInput,
    clients: &ClientSet,
    clock: &dyn Clock,
    mut on_generation: impl FnMut(u64),
) -> PipelineOutput {
    let mut flags = Vec::new();
    let transcript = clients
        .asr
        .transcribe(&input.audio, input.language, clock)
        .and_then(|raw| {
            let english = clients.translator.translate(&raw, input.language, clock)?;
            Ok(TranscriptBundle {
                source_language: input.language,
                word_count: word_count(&english),
                reading_ease: flesch_reading_ease(&english).ok(),
                raw_text: raw,
                english_text: english,
            })
        });
    let transcript = match transcript {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("transcription failed: {e}");
            flags.push(TrialFlag::TranscriptionFailed);
            None
        }
    };

    let mut generation = None;
    if input.ai {
        match &transcript {
            Some(t) => {
                let req = GenerationRequest::new(
                    t.english_text.clone(),
                    input.stimulus.clone(),
                    image_scale_for(&input.stimulus),
                    input.seed,
                );
                match clients.generator.generate(&req, clock) {
                    Ok(g) => generation = Some(g),
                    Err(e) => {
                        warn!("generation failed: {e}");
                        flags.push(TrialFlag::GenerationFailed);
                    }
                }
            }
            None => flags.push(TrialFlag::GenerationFailed),
        }
        on_generation(clock.now_ms());
    }

    let (measures, more) = derive_measures(
        transcript.as_ref().map(|t| t.english_text.as_str()),
        generation.as_ref(),
        clients,
        clock,
    );
    flags.extend(more);
    PipelineOutput {
        transcript,
        generation,
        measures,
        flags,
    }
}

/// Mutable per-trial I/O state while phases run.
#[derive(Default)]
struct TrialIo {
    audio: Vec<u8>,
    audio_closed: bool,
    pause_requested: bool,
}

struct Runner<'a> {
    ctx: &'a TrialContext,
    ui: &'a mut dyn UiChannel,
    trial_index: usize,
    spans: Vec<PhaseSpan>,
    io: TrialIo,
}

impl Runner<'_> {
    fn now(&self) -> u64 {
        self.ctx.clock.now_ms()
    }

    fn enter(&mut self, phase: Phase, deadline_ms: Option<u64>, payload: PhasePayload) -> Result<u64, ProtocolError> {
        let start = self.now();
        self.ui.send(&ServerMessage::PhaseEnter {
            trial_index: self.trial_index,
            phase,
            deadline_ms,
            server_time_ms: start,
            payload,
        })?;
        Ok(start)
    }

    fn close(&mut self, phase: Phase, start_ms: u64) {
        let end_ms = self.now();
        self.spans.push(PhaseSpan { phase, start_ms, end_ms });
    }

    fn reply(&mut self, msg: ServerMessage) -> Result<(), ProtocolError> {
        Ok(self.ui.send(&msg)?)
    }

    /// Handles one message outside the Rating phase.
    fn handle(&mut self, phase: Phase, msg: ClientMessage) -> Result<(), ProtocolError> {
        match msg {
            ClientMessage::AudioChunk { pcm_b64, seq } => {
                if phase != Phase::Speak || self.io.audio_closed {
                    return self.reply(ServerMessage::Error {
                        message: format!("audio chunk {seq} outside the Speak phase ignored"),
                    });
                }
                match B64.decode(pcm_b64) {
                    Ok(bytes) => self.io.audio.extend(bytes),
                    Err(e) => {
                        return self.reply(ServerMessage::Error {
                            message: format!("audio chunk {seq}: {e}"),
                        })
                    }
                }
            }
            ClientMessage::AudioEnd => {
                if phase == Phase::Speak {
                    self.io.audio_closed = true;
                }
            }
            ClientMessage::Rating { .. } => {
                return self.reply(ServerMessage::Error {
                    message: format!("rating rejected outside the Rating phase (now {phase:?})"),
                })
            }
            ClientMessage::SessionPause => {
                self.io.pause_requested = true;
                return self.reply(ServerMessage::Ack {
                    of: "session_pause".into(),
                });
            }
            ClientMessage::SessionResume => {}
            ClientMessage::SessionStart { .. } => {
                return self.reply(ServerMessage::Error {
                    message: "session already running".into(),
                })
            }
        }
        Ok(())
    }

    /// Processes incoming messages until the clock reaches `until`.
    fn pump_until(&mut self, phase: Phase, until: u64) -> Result<(), ProtocolError> {
        while self.now() < until {
            match self.ui.recv(Some(until), self.ctx.clock.as_ref())? {
                Some(msg) => self.handle(phase, msg)?,
                None => break,
            }
        }
        self.ctx.clock.sleep_until(until);
        Ok(())
    }

    /// Fixed-length phase.
    fn timed(&mut self, phase: Phase, duration_ms: u64, payload: PhasePayload) -> Result<(), ProtocolError> {
        let deadline = self.now() + duration_ms;
        let start = self.enter(phase, Some(deadline), payload)?;
        self.pump_until(phase, deadline)?;
        self.close(phase, start);
        Ok(())
    }

    fn rating(&mut self) -> Result<AffectRating, ProtocolError> {
        let deadline = self.ctx.schedule.rating_timeout_ms.map(|t| self.now() + t);
        let start = self.enter(Phase::Rating, deadline, PhasePayload::rating_scale())?;
        loop {
            match self.ui.recv(deadline, self.ctx.clock.as_ref())? {
                Some(ClientMessage::Rating { raw }) => match AffectRating::new(raw) {
                    Ok(r) => {
                        self.close(Phase::Rating, start);
                        self.reply(ServerMessage::Ack { of: "rating".into() })?;
                        return Ok(r);
                    }
                    Err(e) => self.reply(ServerMessage::Error { message: e.to_string() })?,
                },
                Some(other) => self.handle(Phase::Rating, other)?,
                None if deadline.is_some() => {
                    return Err(ProtocolError::RatingTimeout {
                        trial_index: self.trial_index,
                    })
                }
                None => return Err(ProtocolError::Disconnected),
            }
        }
    }
}

/// Runs one trial through View, Speak, Gray, (GeneratedImage,) Rating and
/// the inter-trial interval. The AI pipeline starts at speech end; its
/// result is shown only once the gray screen has run its full length.
pub fn run_trial(
    trial_index: usize,
    entry: &PlanEntry,
    ctx: &TrialContext,
    ui: &mut dyn UiChannel,
) -> Result<(TrialRecord, bool), ProtocolError> {
    let schedule = ctx.schedule;
    let ai = entry.condition.is_ai();
    let mut r = Runner {
        ctx,
        ui,
        trial_index,
        spans: Vec::with_capacity(6),
        io: TrialIo::default(),
    };
    let stimulus_payload = PhasePayload::Stimulus {
        stimulus_id: entry.stimulus.stimulus_id.clone(),
        image_path: entry.stimulus.image_path.display().to_string(),
        condition: entry.condition,
        instruction: entry.condition.instruction,
        modality: entry.condition.modality,
    };

    r.timed(Phase::View, schedule.view_ms, stimulus_payload.clone())?;
    r.timed(Phase::Speak, schedule.speak_ms, stimulus_payload)?;
    let speech_end = r.now();

    let input = PipelineInput {
        audio: std::mem::take(&mut r.io.audio),
        language: ctx.language,
        stimulus: entry.stimulus.clone(),
        ai,
        seed: derive_seed(ctx.session_seed, GENERATION_SEED_STREAM, trial_index as u64),
    };
    // Virtual clocks run the pipeline to completion on a forked clock and
    // read off when it would have finished; real clocks run it alongside.
    let (tx, rx) = mpsc::channel();
    if ctx.clock.is_virtual() {
        let fork = ctx.clock.fork();
        let tx2 = tx.clone();
        let out = run_pipeline(input, &ctx.clients, fork.as_ref(), |t| {
            let _ = tx2.send(PipelineEvent::GenerationSettled(t));
        });
        let _ = tx.send(PipelineEvent::Done(out));
    } else {
        let clients = ctx.clients.clone();
        let fork = ctx.clock.fork();
        std::thread::spawn(move || {
            let tx2 = tx.clone();
            let out = run_pipeline(input, &clients, fork.as_ref(), |t| {
                let _ = tx2.send(PipelineEvent::GenerationSettled(t));
            });
            let _ = tx.send(PipelineEvent::Done(out));
        });
    }

    let gray_end = speech_end + schedule.gray_ms;
    let gray_start = r.enter(Phase::Gray, Some(gray_end), PhasePayload::Blank)?;
    r.pump_until(Phase::Gray, gray_end)?;
    let mut pending_done = None;
    let mut late = false;
    if ai {
        let ready_at = loop {
            match rx.try_recv() {
                Ok(PipelineEvent::GenerationSettled(t)) => break Some(t),
                Ok(PipelineEvent::Done(out)) => pending_done = Some(out),
                Err(mpsc::TryRecvError::Disconnected) => break None,
                Err(mpsc::TryRecvError::Empty) => {
                    let until = r.now() + 20;
                    r.pump_until(Phase::Gray, until)?;
                }
            }
        };
        if let Some(t) = ready_at.filter(|t| *t > gray_end) {
            late = true;
            info!("trial {trial_index}: generation ready {} ms after gray end", t - gray_end);
            r.pump_until(Phase::Gray, t)?;
        }
    }
    r.close(Phase::Gray, gray_start);

    let out = match pending_done {
        Some(o) => o,
        None => loop {
            match rx.recv() {
                Ok(PipelineEvent::Done(o)) => break o,
                Ok(PipelineEvent::GenerationSettled(_)) => {}
                Err(_) => {
                    return Err(ProtocolError::Ui("pipeline worker exited without a result".into()));
                }
            }
        },
    };
    let mut flags = out.flags;
    if late && out.generation.is_some() {
        flags.push(TrialFlag::GenerationLate);
    }
    if let Some(gen) = &out.generation {
        r.timed(
            Phase::GeneratedImage,
            schedule.generated_view_ms,
            PhasePayload::GeneratedImage {
                artifact_id: gen.image_ref.id.clone(),
            },
        )?;
    }
    let rating = r.rating()?;
    if schedule.inter_trial_ms > 0 {
        r.timed(Phase::InterTrial, schedule.inter_trial_ms, PhasePayload::Blank)?;
    }

    flags.sort();
    flags.dedup();
    let record = TrialRecord {
        trial_index,
        condition: entry.condition,
        stimulus: entry.stimulus.clone(),
        transcript: out.transcript,
        generation: out.generation,
        rating,
        phase_timestamps: r.spans,
        flags,
        measures: Some(out.measures),
    };
    Ok((record, r.io.pause_requested))
}

/// Runs the remaining trials of `plan`, starting after those already in
/// `record`, appending each completed trial to `writer` before the next
/// one starts. A disconnect leaves the session paused at the trial in
/// progress.
pub fn run_session(
    record: &mut SessionRecord,
    plan: &TrialPlan,
    ctx: &TrialContext,
    ui: &mut dyn UiChannel,
    mut writer: Option<&mut SessionWriter>,
) -> Result<SessionStatus, ProtocolError> {
    ctx.schedule.validate()?;
    if record.trials.len() > plan.len() {
        return Err(ProtocolError::PlanMismatch(format!(
            "{} trials recorded but the plan has {}",
            record.trials.len(),
            plan.len()
        )));
    }
    for (t, e) in record.trials.iter().zip(&plan.entries) {
        if t.stimulus.stimulus_id != e.stimulus.stimulus_id || t.condition != e.condition {
            return Err(ProtocolError::PlanMismatch(format!("trial {} differs from the plan", t.trial_index)));
        }
    }

    let mut next = record.trials.len();
    while next < plan.len() {
        let (trial, pause) = match run_trial(next, &plan.entries[next], ctx, ui) {
            Ok(v) => v,
            Err(ProtocolError::Disconnected) => {
                info!("participant disconnected during trial {next}; session paused");
                return Ok(SessionStatus::Paused { next_trial: next });
            }
            Err(e) => return Err(e),
        };
        if let Some(w) = writer.as_deref_mut() {
            w.append_trial(&trial)?;
        }
        record.trials.push(trial);
        next += 1;
        if pause && next < plan.len() {
            if ui.send(&ServerMessage::SessionPaused { next_trial: next }).is_err() {
                return Ok(SessionStatus::Paused { next_trial: next });
            }
            loop {
                match ui.recv(None, ctx.clock.as_ref()) {
                    Ok(Some(ClientMessage::SessionResume)) => {
                        ui.send(&ServerMessage::Ack {
                            of: "session_resume".into(),
                        })?;
                        break;
                    }
                    Ok(Some(_)) => {}
                    Ok(None) | Err(_) => return Ok(SessionStatus::Paused { next_trial: next }),
                }
            }
        }
    }
    // the participant may already be gone; the data is complete either way
    let _ = ui.send(&ServerMessage::SessionComplete {
        trials: record.trials.len(),
    });
    Ok(SessionStatus::Completed)
}
