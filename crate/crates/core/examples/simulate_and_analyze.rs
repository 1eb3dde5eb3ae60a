//! Simulates a 20-subject cohort with the default (effects present) participant template,
//! analyzes it and prints the markdown report.

use rlab::analysis::report::render_markdown;
use rlab::analysis::{analyze_sessions, AnalysisConfig};
use rlab::simulator::{simulate_cohort, CohortSpec, ParticipantModel};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = CohortSpec::new(20, 10, ParticipantModel::paper_like(), seed);
    let sessions = simulate_cohort(&spec).expect("simulation");
    let report = analyze_sessions(&sessions, &AnalysisConfig::default()).expect("analysis");
    println!("{}", render_markdown(&report));

    let null = CohortSpec::new(20, 10, ParticipantModel::null(), seed);
    let report = analyze_sessions(&simulate_cohort(&null).unwrap(), &AnalysisConfig::default()).unwrap();
    let significant: Vec<&str> = report
        .anova
        .iter()
        .flatten()
        .filter(|r| r.significant)
        .map(|r| r.effect.as_str())
        .collect();
    println!("null model, seed {seed}: significant effects {significant:?}");
}
