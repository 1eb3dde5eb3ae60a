use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use rlab::cli::{serve_until, ServeConfig};
use rlab::domain::Phase;
use rlab::protocol::{audio_messages, ClientMessage, PhaseSchedule, ServerMessage};
use rlab::storage::read_session;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn write_manifest(dir: &Path) -> std::path::PathBuf {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut entries = Vec::new();
    for (prefix, valence) in [("neg", "Negative"), ("neu", "Neutral")] {
        for i in 0..4 {
            let rel = format!("img/{prefix}{i}.jpg");
            std::fs::write(dir.join(&rel), b"jpeg").unwrap();
            entries.push(serde_json::json!({
                "stimulus_id": format!("{prefix}{i}"),
                "valence_class": valence,
                "image_path": rel,
                "description": if prefix == "neg" { "a wrecked car on a road" } else { "a chair in a room" },
            }));
        }
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::json!({"version": 1, "entries": entries}).to_string()).unwrap();
    path
}

fn config(dir: &Path) -> ServeConfig {
    let mut c = ServeConfig::new("127.0.0.1:0", dir.join("data"), write_manifest(dir));
    c.trials_per_cell = 1;
    c.schedule = PhaseSchedule {
        view_ms: 30,
        speak_ms: 60,
        gray_ms: 40,
        generated_view_ms: 30,
        rating_timeout_ms: None,
        inter_trial_ms: 10,
    };
    c.max_sessions = Some(1);
    c
}

fn start(c: &ServeConfig, shutdown: Arc<AtomicBool>) -> (SocketAddr, JoinHandle<()>) {
    let (addr, run) = serve_until(c, shutdown).unwrap();
    (addr, std::thread::spawn(move || run().unwrap()))
}

fn send(ws: &mut Ws, m: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(m).unwrap())).unwrap();
}

fn recv(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => {}
        }
    }
}

/// Plays a participant until the View phase of `stop_at` (or the end).
/// Returns the announced `next_trial` and whether the session completed.
fn participate(addr: SocketAddr, stop_at: Option<usize>, on_stop: impl FnOnce()) -> (usize, bool) {
    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    send(
        &mut ws,
        &ClientMessage::SessionStart {
            subject_id: "P07".into(),
            language: None,
        },
    );
    let next = match recv(&mut ws) {
        Some(ServerMessage::SessionReady { next_trial, .. }) => next_trial,
        other => panic!("expected session_ready, got {other:?}"),
    };
    let mut on_stop = Some(on_stop);
    while let Some(m) = recv(&mut ws) {
        match m {
            ServerMessage::PhaseEnter { trial_index, phase, .. } => match phase {
                Phase::View if Some(trial_index) == stop_at => {
                    (on_stop.take().unwrap())();
                    return (next, false);
                }
                Phase::Speak => {
                    for msg in audio_messages(b"text:he will recover and be fine", 8) {
                        send(&mut ws, &msg);
                    }
                }
                Phase::Rating => send(&mut ws, &ClientMessage::Rating { raw: 6 }),
                _ => {}
            },
            ServerMessage::SessionComplete { .. } => return (next, true),
            _ => {}
        }
    }
    (next, false)
}

#[test]
fn one_trial_then_disconnect_leaves_one_trial() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    let (addr, server) = start(&c, Arc::new(AtomicBool::new(false)));
    let (next, done) = participate(addr, Some(1), || {});
    assert_eq!((next, done), (0, false));
    server.join().unwrap();
    let s = read_session(&c.data_dir.join("sessions/P07.jsonl")).unwrap();
    assert_eq!(s.trials.len(), 1);
    assert_eq!(s.trials[0].rating.raw(), 6);
    assert_eq!(s.trials[0].transcript.as_ref().unwrap().english_text, "he will recover and be fine");
    let stamp = s.header.stamp.expect("stamp in header");
    assert_eq!(stamp["mode"], "serve");
}

#[test]
fn interrupt_mid_session_is_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    let shutdown = Arc::new(AtomicBool::new(false));
    let (addr, server) = start(&c, shutdown.clone());
    let flag = shutdown.clone();
    participate(addr, Some(2), move || flag.store(true, Ordering::SeqCst));
    server.join().unwrap();
    let path = c.data_dir.join("sessions/P07.jsonl");
    assert_eq!(read_session(&path).unwrap().trials.len(), 2);

    let (addr, server) = start(&c, Arc::new(AtomicBool::new(false)));
    let (next, done) = participate(addr, None, || {});
    server.join().unwrap();
    assert_eq!((next, done), (2, true));
    let s = read_session(&path).unwrap();
    assert_eq!(s.trials.len(), 8);
    assert!(rlab::domain::validate_session(&s).is_empty());
}

#[test]
fn invalid_manifest_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(["serve", "--bind", "127.0.0.1:0", "--manifest"])
        .arg(dir.path().join("missing.json"))
        .arg("--data-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn busy_port_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let manifest = write_manifest(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(["serve", "--trials-per-cell", "1", "--bind", &taken.local_addr().unwrap().to_string(), "--manifest"])
        .arg(&manifest)
        .arg("--data-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}
