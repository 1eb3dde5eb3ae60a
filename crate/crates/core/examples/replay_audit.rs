//! Simulates a small cohort to disk, tampers with one stored rating and one
//! artifact, and shows what the replay audit reports.

use rlab::cli::replay::ReplayConfig;
use rlab::cli::{replay_session, run_simulate, SimulateConfig};

fn main() {
    let root = std::env::temp_dir().join("rlab-replay-example");
    let _ = std::fs::remove_dir_all(&root);
    let mut config = SimulateConfig::new(2, 5, &root);
    config.trials_per_cell = 1;
    let paths = run_simulate(&config).unwrap();
    let session = &paths[0];

    let clean = replay_session(&ReplayConfig::new(session)).unwrap();
    println!("untouched: {} trials, {} mismatches", clean.trials, clean.mismatches.len());

    let text = std::fs::read_to_string(session).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut trial: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    trial["rating"]["remapped"] = 2.0.into();
    lines[1] = trial.to_string();
    std::fs::write(session, lines.join("\n") + "\n").unwrap();

    let stored = rlab::storage::read_session(session).unwrap();
    if let Some(g) = stored.trials.iter().find_map(|t| t.generation.as_ref()) {
        std::fs::remove_file(root.join(&g.image_ref.path)).unwrap();
    }

    let report = replay_session(&ReplayConfig::new(session)).unwrap();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
