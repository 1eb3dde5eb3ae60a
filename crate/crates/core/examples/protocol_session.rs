//! Runs one 8-trial session on virtual time with a scripted participant and
//! prints the phase timeline and the wire messages of the first trial.

use std::sync::Arc;

use rlab::clients::{ClientSet, MockSettings};
use rlab::clock::VirtualClock;
use rlab::domain::{Emotion, Language, SessionHeader, SessionRecord, Stimulus, SESSION_FORMAT_VERSION};
use rlab::protocol::wire::ScriptedResponse;
use rlab::protocol::{plan_session, run_session, PhaseSchedule, ScriptedParticipant, TrialContext};
use rlab::storage::MemoryArtifactStore;

fn main() {
    let stimuli: Vec<Stimulus> = [("neg", Emotion::Negative, "a flooded house"), ("neu", Emotion::Neutral, "a bicycle by a wall")]
        .iter()
        .flat_map(|(p, e, d)| {
            (0..4).map(move |i| Stimulus {
                stimulus_id: format!("{p}{i}"),
                valence_class: *e,
                image_path: format!("{p}{i}.jpg").into(),
                image_scale_override: None,
                description: Some(d.to_string()),
            })
        })
        .collect();
    let plan = plan_session(&stimuli, 1, 42).expect("enough stimuli");

    let ctx = TrialContext {
        schedule: PhaseSchedule::default(),
        clients: ClientSet::mock(&MockSettings::default(), Arc::new(MemoryArtifactStore::new())),
        clock: Arc::new(VirtualClock::new()),
        language: Language::En,
        session_seed: 42,
    };
    let mut participant = ScriptedParticipant::new(vec![
        ScriptedResponse::spoken("the family will rebuild and be safe", 6),
        ScriptedResponse::spoken("water is everywhere in the house", 3),
    ]);
    participant.rating_delay_ms = 1800;

    let mut record = SessionRecord {
        header: SessionHeader {
            format_version: SESSION_FORMAT_VERSION,
            session_id: "demo".into(),
            subject_id: "P01".into(),
            language: Language::En,
            seed: 42,
            created_at: "1970-01-01T00:00:00Z".into(),
            stamp: None,
        },
        trials: vec![],
    };
    let status = run_session(&mut record, &plan, &ctx, &mut participant, None).unwrap();
    println!("status: {status:?}\n");

    for t in &record.trials {
        let spans: Vec<String> = t
            .phase_timestamps
            .iter()
            .map(|s| format!("{:?} {}", s.phase, s.duration_ms()))
            .collect();
        println!("trial {} {:<8} rating {} | {}", t.trial_index, t.condition.label(), t.rating.raw(), spans.join(", "));
    }

    println!("\nfirst messages sent to the UI:");
    for m in participant.sent.iter().take(5) {
        println!("  {}", serde_json::to_string(m).unwrap());
    }
}
