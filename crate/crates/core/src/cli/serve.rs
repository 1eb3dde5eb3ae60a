//! WebSocket server driving live sessions on wall-clock time.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{error, info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tungstenite::{Message, WebSocket};

use super::{BackendConfig, CliError, ReproStamp};
use crate::clock::{Clock, MonotonicClock};
use crate::domain::{Language, SessionHeader, SessionRecord, SESSION_FORMAT_VERSION};
use crate::protocol::{
    plan_session, run_session, ClientMessage, PhaseSchedule, ServerMessage, SessionStatus, TrialContext, UiChannel,
    UiError, DEFAULT_TRIALS_PER_CELL,
};
use crate::storage::{load_manifest, ArtifactStore, FsArtifactStore, SessionWriter, StimulusManifest};

/// Longest single blocking read; bounds how quickly shutdown is noticed.
const POLL_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    #[serde(default = "default_tpc")]
    pub trials_per_cell: usize,
    /// Base seed mixed with each subject id.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_language")]
    pub language: Language,
    #[serde(default)]
    pub schedule: PhaseSchedule,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Stop after this many sessions have ended.
    #[serde(default)]
    pub max_sessions: Option<usize>,
}

fn default_tpc() -> usize {
    DEFAULT_TRIALS_PER_CELL
}

fn default_language() -> Language {
    Language::En
}

impl ServeConfig {
    pub fn new(bind: impl Into<String>, data_dir: impl Into<PathBuf>, manifest: impl Into<PathBuf>) -> Self {
        Self {
            bind: bind.into(),
            data_dir: data_dir.into(),
            manifest: manifest.into(),
            trials_per_cell: DEFAULT_TRIALS_PER_CELL,
            seed: 0,
            language: Language::En,
            schedule: PhaseSchedule::default(),
            backend: BackendConfig::default(),
            max_sessions: None,
        }
    }
}

/// One participant connection as a [`UiChannel`].
pub struct WsChannel {
    ws: WebSocket<TcpStream>,
    shutdown: Arc<AtomicBool>,
}

impl WsChannel {
    pub fn new(ws: WebSocket<TcpStream>, shutdown: Arc<AtomicBool>) -> Self {
        Self { ws, shutdown }
    }

    fn send_raw(&mut self, text: String) -> Result<(), UiError> {
        self.ws.send(Message::text(text)).map_err(|_| UiError::Disconnected)
    }
}

impl UiChannel for WsChannel {
    fn send(&mut self, msg: &ServerMessage) -> Result<(), UiError> {
        self.send_raw(serde_json::to_string(msg).expect("message serializes"))
    }

    fn recv(&mut self, deadline_ms: Option<u64>, clock: &dyn Clock) -> Result<Option<ClientMessage>, UiError> {
        loop {
            if self.shutdown.load(Ordering::SeqCst) {
                return Err(UiError::Disconnected);
            }
            let wait = match deadline_ms {
                Some(d) => {
                    let now = clock.now_ms();
                    if now >= d {
                        return Ok(None);
                    }
                    (d - now).min(POLL_MS)
                }
                None => POLL_MS,
            };
            let _ = self.ws.get_mut().set_read_timeout(Some(Duration::from_millis(wait.max(1))));
            match self.ws.read() {
                Ok(Message::Text(text)) => match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(m) => return Ok(Some(m)),
                    Err(e) => self.send_raw(
                        serde_json::to_string(&ServerMessage::Error {
                            message: format!("invalid message: {e}"),
                        })
                        .expect("message serializes"),
                    )?,
                },
                Ok(Message::Close(_)) => return Err(UiError::Disconnected),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(_) => return Err(UiError::Disconnected),
            }
        }
    }
}

fn subject_is_valid(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Per-subject session seed: the base seed mixed with a hash of the id.
pub fn subject_seed(base: u64, subject_id: &str) -> u64 {
    let h = Sha256::digest(subject_id.as_bytes());
    base ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

struct Shared {
    config: ServeConfig,
    manifest: StimulusManifest,
    artifacts: Arc<dyn ArtifactStore>,
    stamp: serde_json::Value,
}

fn handle_connection(stream: TcpStream, shared: &Shared, shutdown: Arc<AtomicBool>) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let ws = tungstenite::accept(stream).map_err(|e| format!("handshake failed: {e}"))?;
    let mut ui = WsChannel::new(ws, shutdown);
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());

    let (subject_id, language) = loop {
        match ui.recv(None, clock.as_ref()) {
            Ok(Some(ClientMessage::SessionStart { subject_id, language })) => {
                if subject_is_valid(&subject_id) {
                    break (subject_id, language.unwrap_or(shared.config.language));
                }
                let _ = ui.send(&ServerMessage::Error {
                    message: format!("invalid subject id {subject_id:?}"),
                });
            }
            Ok(Some(_)) => {
                let _ = ui.send(&ServerMessage::Error {
                    message: "expected session_start".into(),
                });
            }
            Ok(None) | Err(_) => return Ok(()),
        }
    };

    let path = shared.config.data_dir.join("sessions").join(format!("{subject_id}.jsonl"));
    let opened = if path.exists() {
        SessionWriter::resume(&path)
    } else {
        let seed = subject_seed(shared.config.seed, &subject_id);
        let header = SessionHeader {
            format_version: SESSION_FORMAT_VERSION,
            session_id: format!("{subject_id}-{seed:016x}"),
            subject_id: subject_id.clone(),
            language,
            seed,
            created_at: chrono::Utc::now().to_rfc3339(),
            stamp: Some(shared.stamp.clone()),
        };
        SessionWriter::create(&path, &header).map(|w| {
            (
                w,
                SessionRecord {
                    header,
                    trials: Vec::new(),
                },
            )
        })
    };
    let (mut writer, mut record) = match opened {
        Ok(v) => v,
        Err(e) => {
            let _ = ui.send(&ServerMessage::Error { message: e.to_string() });
            return Err(e.to_string());
        }
    };

    let plan = plan_session(&shared.manifest.entries, shared.config.trials_per_cell, record.header.seed)
        .map_err(|e| e.to_string())?;
    let ctx = TrialContext {
        schedule: shared.config.schedule.clone(),
        clients: shared
            .config
            .backend
            .build(shared.artifacts.clone())
            .map_err(|e| e.to_string())?,
        clock: clock.clone(),
        language: record.header.language,
        session_seed: record.header.seed,
    };
    ui.send(&ServerMessage::SessionReady {
        session_id: record.header.session_id.clone(),
        subject_id: subject_id.clone(),
        total_trials: plan.len(),
        next_trial: record.trials.len(),
        server_time_ms: clock.now_ms(),
    })
    .map_err(|e| e.to_string())?;

    match run_session(&mut record, &plan, &ctx, &mut ui, Some(&mut writer)) {
        Ok(SessionStatus::Completed) => info!("{subject_id}: session complete"),
        Ok(SessionStatus::Paused { next_trial }) => info!("{subject_id}: paused before trial {next_trial}"),
        Err(e) => {
            let _ = ui.send(&ServerMessage::Error { message: e.to_string() });
            return Err(e.to_string());
        }
    }
    Ok(())
}

/// Loads and checks everything the server needs before binding.
fn prepare(config: &ServeConfig) -> Result<Shared, CliError> {
    config
        .schedule
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = load_manifest(&config.manifest).map_err(|e| CliError::Config(e.to_string()))?;
    manifest
        .ensure_images_exist()
        .map_err(|e| CliError::Config(e.to_string()))?;
    plan_session(&manifest.entries, config.trials_per_cell, 0).map_err(|e| CliError::Config(e.to_string()))?;
    let artifacts: Arc<dyn ArtifactStore> = Arc::new(FsArtifactStore::new(&config.data_dir));
    config.backend.build(artifacts.clone())?;
    Ok(Shared {
        stamp: ReproStamp::new("serve", config, Some(config.seed)).to_value(),
        config: config.clone(),
        manifest,
        artifacts,
    })
}

/// Binds the listener. Returns the bound address and a closure that runs
/// the accept loop until `shutdown` is set or `max_sessions` is reached.
pub fn serve_until(
    config: &ServeConfig,
    shutdown: Arc<AtomicBool>,
) -> Result<(SocketAddr, impl FnOnce() -> Result<(), CliError>), CliError> {
    let shared = Arc::new(prepare(config)?);
    let listener =
        TcpListener::bind(&config.bind).map_err(|e| CliError::Runtime(format!("cannot bind {}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    info!("listening on {addr}");

    let run = move || {
        let finished = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        let mut accepted = 0usize;
        loop {
            if shutdown.load(Ordering::SeqCst) {
                break;
            }
            if let Some(max) = shared.config.max_sessions {
                if finished.load(Ordering::SeqCst) >= max {
                    break;
                }
                if accepted >= max {
                    thread::sleep(Duration::from_millis(20));
                    continue;
                }
            }
            match listener.accept() {
                Ok((stream, peer)) => {
                    accepted += 1;
                    let shared = shared.clone();
                    let shutdown = shutdown.clone();
                    let finished = finished.clone();
                    handles.push(thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, &shared, shutdown) {
                            warn!("{peer}: {e}");
                        }
                        finished.fetch_add(1, Ordering::SeqCst);
                    }));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
                Err(e) => error!("accept failed: {e}"),
            }
        }
        shutdown.store(true, Ordering::SeqCst);
        for h in handles {
            let _ = h.join();
        }
        Ok(())
    };
    Ok((addr, run))
}

/// Serves until Ctrl-C (or `max_sessions`).
pub fn serve(config: &ServeConfig) -> Result<(), CliError> {
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        warn!("no interrupt handler installed: {e}");
    }
    let (_, run) = serve_until(config, shutdown)?;
    run()
}
