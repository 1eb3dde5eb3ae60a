use std::path::Path;

use super::StorageError;
use crate::domain::{SessionRecord, TrialFlag};

const HEADER: [&str; 13] = [
    "subject",
    "session_id",
    "trial_index",
    "cell",
    "stimulus_id",
    "raw_rating",
    "remapped_rating",
    "sentiment",
    "alignment",
    "word_count",
    "reading_ease",
    "flags",
    "prompt",
];

fn flag_name(f: TrialFlag) -> String {
    serde_json::to_value(f)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV row per trial (RFC 4180 quoting) and returns the row count.
pub fn export_csv(sessions: &[SessionRecord], path: &Path) -> Result<usize, StorageError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    let mut rows = 0;
    for s in sessions {
        for t in &s.trials {
            let flags: Vec<String> = t.flags.iter().map(|f| flag_name(*f)).collect();
            w.write_record([
                s.header.subject_id.clone(),
                s.header.session_id.clone(),
                t.trial_index.to_string(),
                t.condition.label(),
                t.stimulus.stimulus_id.clone(),
                t.rating.raw().to_string(),
                t.rating.remapped().to_string(),
                opt(t.sentiment_score()),
                opt(t.alignment()),
                opt(t.transcript.as_ref().map(|x| x.word_count)),
                opt(t.transcript.as_ref().and_then(|x| x.reading_ease)),
                flags.join(";"),
                t.transcript.as_ref().map(|x| x.english_text.clone()).unwrap_or_default(),
            ])?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| StorageError::io(path, e))?;
    Ok(rows)
}
