//! Starts the session server with mock backends and drives one participant
//! over the JSON WebSocket API, streaming base64 PCM chunks during Speak.

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use rlab::cli::{serve_until, ServeConfig};
use rlab::domain::Phase;
use rlab::protocol::wire::pcm_bytes_for_ms;
use rlab::protocol::{audio_messages, ClientMessage, PhaseSchedule, ServerMessage};
use tungstenite::Message;

fn main() {
    let dir = std::env::temp_dir().join("rlab-ws-example");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let mut entries = Vec::new();
    for (p, v) in [("neg", "Negative"), ("neu", "Neutral")] {
        for i in 0..4 {
            std::fs::write(dir.join(format!("{p}{i}.jpg")), b"img").unwrap();
            entries.push(serde_json::json!({"stimulus_id": format!("{p}{i}"), "valence_class": v, "image_path": format!("{p}{i}.jpg")}));
        }
    }
    std::fs::write(dir.join("manifest.json"), serde_json::json!({"version": 1, "entries": entries}).to_string()).unwrap();

    let mut config = ServeConfig::new("127.0.0.1:0", dir.join("data"), dir.join("manifest.json"));
    config.trials_per_cell = 1;
    config.max_sessions = Some(1);
    config.schedule = PhaseSchedule {
        view_ms: 200,
        speak_ms: 500,
        gray_ms: 200,
        generated_view_ms: 200,
        rating_timeout_ms: None,
        inter_trial_ms: 50,
    };
    let (addr, run) = serve_until(&config, Arc::new(AtomicBool::new(false))).unwrap();
    let server = std::thread::spawn(run);

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    let send = |ws: &mut tungstenite::WebSocket<_>, m: &ClientMessage| {
        ws.send(Message::text(serde_json::to_string(m).unwrap())).unwrap()
    };
    send(&mut ws, &ClientMessage::SessionStart { subject_id: "P09".into(), language: None });
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(_) => continue,
            Err(_) => break,
        };
        println!("<- {text}");
        match serde_json::from_str::<ServerMessage>(&text).unwrap() {
            ServerMessage::PhaseEnter { phase: Phase::Speak, .. } => {
                let mut audio = b"text:they will be fine".to_vec();
                audio.resize(pcm_bytes_for_ms(500), 0);
                let msgs = audio_messages(&audio, pcm_bytes_for_ms(250));
                println!("-> {} audio messages", msgs.len());
                for m in &msgs {
                    send(&mut ws, m);
                }
            }
            ServerMessage::PhaseEnter { phase: Phase::Rating, .. } => send(&mut ws, &ClientMessage::Rating { raw: 7 }),
            ServerMessage::SessionComplete { .. } => break,
            _ => {}
        }
    }
    drop(ws);
    server.join().unwrap().unwrap();
    println!("session file: {}", dir.join("data/sessions/P09.jsonl").display());
}
