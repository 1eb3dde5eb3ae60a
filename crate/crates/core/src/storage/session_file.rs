//! Append-only JSON Lines session files: one header line, then one line per
//! completed trial. Each append is flushed and synced before returning, so
//! a crash leaves a readable prefix.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;

use super::StorageError;
use crate::domain::{SessionHeader, SessionRecord, TrialRecord, SESSION_FORMAT_VERSION};

/// Exclusive writer for one session file; holds an advisory lock for its
/// whole lifetime.
#[derive(Debug)]
pub struct SessionWriter {
    file: File,
    path: PathBuf,
    trials_written: usize,
}

fn lock(file: &File, path: &Path) -> Result<(), StorageError> {
    match file.try_lock() {
        Ok(()) => Ok(()),
        Err(TryLockError::WouldBlock) => Err(StorageError::Locked(path.to_path_buf())),
        Err(TryLockError::Error(e)) => Err(StorageError::io(path, e)),
    }
}

impl SessionWriter {
    /// Creates a new session file and writes its header line.
    pub fn create(path: &Path, header: &SessionHeader) -> Result<Self, StorageError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| StorageError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| StorageError::io(path, e))?;
        lock(&file, path)?;
        let mut w = Self {
            file,
            path: path.to_path_buf(),
            trials_written: 0,
        };
        w.write_line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(w)
    }

    /// Reopens an existing session for appending. Returns the persisted
    /// prefix; a torn final line is dropped from the file first.
    pub fn resume(path: &Path) -> Result<(Self, SessionRecord), StorageError> {
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| StorageError::io(path, e))?;
        lock(&file, path)?;
        let (record, valid_len) = parse_session(path)?;
        let len = file.metadata().map_err(|e| StorageError::io(path, e))?.len();
        if valid_len < len {
            warn!("{}: discarding {} bytes of incomplete trailing data", path.display(), len - valid_len);
            file.set_len(valid_len).map_err(|e| StorageError::io(path, e))?;
        }
        let writer = Self {
            file,
            path: path.to_path_buf(),
            trials_written: record.trials.len(),
        };
        Ok((writer, record))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn trials_written(&self) -> usize {
        self.trials_written
    }

    fn write_line(&mut self, json: &str) -> Result<(), StorageError> {
        let mut line = String::with_capacity(json.len() + 1);
        line.push_str(json);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| StorageError::io(&self.path, e))
    }

    /// Appends one trial and syncs it to disk before returning.
    pub fn append_trial(&mut self, trial: &TrialRecord) -> Result<(), StorageError> {
        self.write_line(&serde_json::to_string(trial).expect("trial serializes"))?;
        self.trials_written += 1;
        Ok(())
    }
}

/// Serializes a whole session in the on-disk line format.
pub fn encode_session(record: &SessionRecord) -> String {
    let mut out = serde_json::to_string(&record.header).expect("header serializes");
    out.push('\n');
    for t in &record.trials {
        out.push_str(&serde_json::to_string(t).expect("trial serializes"));
        out.push('\n');
    }
    out
}

/// Writes a complete session in one go (used by the simulator).
pub fn write_session(path: &Path, record: &SessionRecord) -> Result<(), StorageError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| StorageError::io(dir, e))?;
    }
    fs::write(path, encode_session(record)).map_err(|e| StorageError::io(path, e))
}

/// Parses a session file; returns the record and the byte length of the
/// complete lines that were consumed.
fn parse_session(path: &Path) -> Result<(SessionRecord, u64), StorageError> {
    let file = File::open(path).map_err(|e| StorageError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header: Option<SessionHeader> = None;
    let mut trials = Vec::new();
    let mut consumed = 0u64;
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| StorageError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.ends_with('\n') {
            warn!("{}:{line_no}: ignoring unterminated trailing line", path.display());
            break;
        }
        let text = line.trim();
        if !text.is_empty() {
            let parse_err = |e: serde_json::Error| StorageError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            };
            if header.is_none() {
                let h: SessionHeader = serde_json::from_str(text).map_err(parse_err)?;
                if h.format_version != SESSION_FORMAT_VERSION {
                    return Err(StorageError::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("unsupported session format version {}", h.format_version),
                    });
                }
                header = Some(h);
            } else {
                trials.push(serde_json::from_str::<TrialRecord>(text).map_err(parse_err)?);
            }
        }
        consumed += n as u64;
    }
    let header = header.ok_or_else(|| StorageError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "missing session header".into(),
    })?;
    Ok((SessionRecord { header, trials }, consumed))
}

/// Reads a session file (readers need no lock).
pub fn read_session(path: &Path) -> Result<SessionRecord, StorageError> {
    parse_session(path).map(|(r, _)| r)
}

/// Reads every `*.jsonl` file in a directory, sorted by file name.
pub fn read_sessions_dir(dir: &Path) -> Result<Vec<SessionRecord>, StorageError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| StorageError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_session(p)).collect()
}
