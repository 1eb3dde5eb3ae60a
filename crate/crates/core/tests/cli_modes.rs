use std::path::{Path, PathBuf};
use std::process::Command;

use rlab::cli::replay::ReplayConfig;
use rlab::cli::{replay_session, run_analyze, run_simulate, AnalyzeConfig, SimulateConfig};

fn simulate(root: &Path) -> Vec<PathBuf> {
    let mut c = SimulateConfig::new(4, 12, root.join("sim"));
    c.trials_per_cell = 1;
    run_simulate(&c).unwrap()
}

fn rewrite_trial(path: &Path, line: usize, edit: impl FnOnce(&mut serde_json::Value)) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[line]).unwrap();
    edit(&mut v);
    lines[line] = serde_json::to_string(&v).unwrap();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn untouched_session_replays_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let paths = simulate(dir.path());
    for p in &paths {
        let r = replay_session(&ReplayConfig::new(p)).unwrap();
        assert_eq!(r.trials, 8);
        assert!(r.mismatches.is_empty(), "{:?}", r.mismatches);
        assert!(!r.partial);
    }
}

#[test]
fn edited_rating_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let paths = simulate(dir.path());
    rewrite_trial(&paths[0], 3, |v| {
        let raw = v["rating"]["raw"].as_i64().unwrap();
        v["rating"]["raw"] = (if raw == 9 { 1 } else { raw + 1 }).into();
    });
    let r = replay_session(&ReplayConfig::new(&paths[0])).unwrap();
    assert_eq!(r.mismatches.len(), 1, "{:?}", r.mismatches);
    assert_eq!(r.mismatches[0].trial_index, 2);
    assert_eq!(r.mismatches[0].field, "rating.remapped");
}

#[test]
fn edited_prompt_changes_derived_fields() {
    let dir = tempfile::tempdir().unwrap();
    let paths = simulate(dir.path());
    rewrite_trial(&paths[1], 1, |v| {
        v["transcript"]["english_text"] = "everything is terrible and hopeless, awful".into();
    });
    let r = replay_session(&ReplayConfig::new(&paths[1])).unwrap();
    let fields: Vec<&str> = r.mismatches.iter().map(|m| m.field.as_str()).collect();
    assert!(fields.contains(&"transcript.word_count"), "{fields:?}");
    assert!(fields.contains(&"measures.sentiment.score"), "{fields:?}");
}

#[test]
fn deleted_artifact_gives_partial_replay() {
    let dir = tempfile::tempdir().unwrap();
    let paths = simulate(dir.path());
    let session = rlab::storage::read_session(&paths[0]).unwrap();
    let gen = session.trials.iter().find_map(|t| t.generation.clone()).unwrap();
    std::fs::remove_file(dir.path().join("sim").join(&gen.image_ref.path)).unwrap();
    let r = replay_session(&ReplayConfig::new(&paths[0])).unwrap();
    assert!(r.partial);
    assert!(r.missing_artifacts.contains(&gen.image_ref.id));
    assert!(r.mismatches.is_empty(), "{:?}", r.mismatches);
}

#[test]
fn outputs_carry_a_reproducibility_stamp() {
    let dir = tempfile::tempdir().unwrap();
    let paths = simulate(dir.path());
    let stamp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sim/stamp.json")).unwrap()).unwrap();
    assert_eq!(stamp["mode"], "simulate");
    assert_eq!(stamp["seed"], 12);
    assert_eq!(stamp["config_sha256"].as_str().unwrap().len(), 64);
    let header = rlab::storage::read_session(&paths[0]).unwrap().header;
    assert_eq!(header.stamp.as_ref(), Some(&stamp));

    let report = run_analyze(&AnalyzeConfig {
        sessions: dir.path().join("sim/sessions"),
        out: dir.path().join("report"),
        family_size: Some(4),
        emit_plot_data: true,
        analysis: Default::default(),
    })
    .unwrap();
    assert_eq!(report.stamp.as_ref().unwrap()["mode"], "analyze");
    for f in ["report.json", "report.md", "fig_cell_means.csv"] {
        assert!(dir.path().join("report").join(f).exists(), "{f}");
    }
}

fn rlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rlab"))
}

#[test]
fn binary_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("override.json");
    std::fs::write(&cfg, r#"{"subjects": 3, "trials_per_cell": 1}"#).unwrap();
    let out = rlab()
        .args(["simulate", "--subjects", "50", "--seed", "2", "--out"])
        .arg(d.join("sim"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 3 sessions"));

    let out = rlab()
        .args(["export", "--sessions"])
        .arg(d.join("sim/sessions"))
        .arg("--out")
        .arg(d.join("export.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 24 rows"));

    let session = std::fs::read_dir(d.join("sim/sessions")).unwrap().next().unwrap().unwrap().path();
    assert_eq!(rlab().arg("replay").arg(&session).status().unwrap().code(), Some(0));
    rewrite_trial(&session, 1, |v| v["rating"]["remapped"] = 1.75.into());
    assert_eq!(rlab().arg("replay").arg(&session).status().unwrap().code(), Some(1));

    let code = |args: &[&str]| rlab().args(args).output().unwrap().status.code();
    assert_eq!(code(&["simulate", "--template", "bogus", "--out", "x"]), Some(2));
    assert_eq!(code(&["analyze", "--sessions", "/definitely/missing", "--out", "x"]), Some(2));
    assert_eq!(code(&["simulate", "--subjects", "1", "--out", d.join("one").to_str().unwrap()]), Some(2));
}
