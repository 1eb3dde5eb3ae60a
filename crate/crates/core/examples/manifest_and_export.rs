//! Loads a stimulus manifest, plans a randomized session, records it to an
//! append-only session file and exports the trials to CSV.

use std::sync::Arc;

use rlab::clients::{ClientSet, MockSettings};
use rlab::clock::VirtualClock;
use rlab::domain::{Language, SessionHeader, SessionRecord, SESSION_FORMAT_VERSION};
use rlab::protocol::wire::ScriptedResponse;
use rlab::protocol::{plan_session, run_session, PhaseSchedule, ScriptedParticipant, TrialContext};
use rlab::storage::{export_csv, load_manifest, read_session, FsArtifactStore, SessionWriter};

fn main() {
    let dir = tempfile_dir();
    let mut entries = Vec::new();
    for (prefix, valence, scene) in [("neg", "Negative", "a car crash at night"), ("neu", "Neutral", "a kettle on a stove")] {
        for i in 0..4 {
            let rel = format!("{prefix}_{i}.jpg");
            std::fs::write(dir.join(&rel), b"img").unwrap();
            entries.push(serde_json::json!({
                "stimulus_id": format!("{prefix}_{i}"),
                "valence_class": valence,
                "image_path": rel,
                "description": scene,
            }));
        }
    }
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&serde_json::json!({"version": 1, "entries": entries})).unwrap()).unwrap();

    let manifest = load_manifest(&manifest_path).unwrap();
    manifest.ensure_images_exist().unwrap();
    println!("manifest: {:?} (negative, neutral)", manifest.valence_counts());
    let plan = plan_session(&manifest.entries, 1, 99).unwrap();
    for (k, e) in plan.entries.iter().enumerate() {
        println!("  trial {k}: {:<8} {}", e.condition.label(), e.stimulus.stimulus_id);
    }

    let header = SessionHeader {
        format_version: SESSION_FORMAT_VERSION,
        session_id: "P03-demo".into(),
        subject_id: "P03".into(),
        language: Language::En,
        seed: 99,
        created_at: "1970-01-01T00:00:00Z".into(),
        stamp: None,
    };
    let path = dir.join("sessions").join("P03.jsonl");
    let _ = std::fs::remove_file(&path);
    let mut writer = SessionWriter::create(&path, &header).unwrap();
    let ctx = TrialContext {
        schedule: PhaseSchedule::default(),
        clients: ClientSet::mock(&MockSettings::default(), Arc::new(FsArtifactStore::new(&dir))),
        clock: Arc::new(VirtualClock::new()),
        language: Language::En,
        session_seed: 99,
    };
    let mut ui = ScriptedParticipant::new(vec![ScriptedResponse::spoken("nobody was hurt, they all walked away", 6)]);
    let mut record = SessionRecord { header, trials: vec![] };
    run_session(&mut record, &plan, &ctx, &mut ui, Some(&mut writer)).unwrap();
    drop(writer);

    let stored = read_session(&path).unwrap();
    let csv_path = dir.join("export.csv");
    let rows = export_csv(&[stored], &csv_path).unwrap();
    println!("\n{rows} rows -> {}", csv_path.display());
    for line in std::fs::read_to_string(&csv_path).unwrap().lines().take(3) {
        println!("  {line}");
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join("rlab-manifest-example");
    std::fs::create_dir_all(&d).unwrap();
    d
}
