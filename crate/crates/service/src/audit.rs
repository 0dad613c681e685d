//! Append-only JSON-lines audit log of every accepted mutation.
//!
//! The in-memory state is only ever changed by applying an event, so
//! replaying the file reproduces it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use plateopt::domain::{IssueKey, IssueMeta};
use serde::{Deserialize, Serialize};

use crate::api::Selection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Selection { selection: Selection },
    Meta { meta: IssueMeta },
}

impl Action {
    pub fn issue(&self) -> IssueKey {
        match self {
            Action::Selection { selection } => selection.issue.clone(),
            Action::Meta { meta } => meta.key(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub request_id: String,
    /// Hash of the method, path and canonical body of the request.
    pub fingerprint: String,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub action: Action,
    /// The body returned for the request, replayed for duplicates.
    pub response: serde_json::Value,
}

/// What the log implies: the latest selection and metadata per issue, and
/// every request id seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditState {
    pub selections: BTreeMap<IssueKey, Selection>,
    pub metas: BTreeMap<IssueKey, IssueMeta>,
    pub requests: HashMap<String, (String, serde_json::Value)>,
    pub next_seq: u64,
}

impl AuditState {
    pub fn apply(&mut self, e: &AuditEvent) {
        match &e.action {
            Action::Selection { selection } => {
                self.selections.insert(selection.issue.clone(), selection.clone());
            }
            Action::Meta { meta } => {
                self.metas.insert(meta.key(), meta.clone());
            }
        }
        self.requests
            .insert(e.request_id.clone(), (e.fingerprint.clone(), e.response.clone()));
        self.next_seq = self.next_seq.max(e.seq + 1);
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a AuditEvent>) -> Self {
        let mut s = AuditState::default();
        for e in events {
            s.apply(e);
        }
        s
    }
}

pub fn read_events(path: &Path) -> std::io::Result<Vec<AuditEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|err| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {err}", path.display(), n + 1))
        })?;
        out.push(e);
    }
    Ok(out)
}

/// The single writer of the log.
pub struct AuditLog {
    path: Option<PathBuf>,
    file: Option<File>,
    pub state: AuditState,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            path: None,
            file: None,
            state: AuditState::default(),
        }
    }

    /// Opens `path` for appending, rebuilding the state from what it holds.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let events = read_events(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            path: Some(path.to_path_buf()),
            file: Some(file),
            state: AuditState::replay(&events),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes the event, then applies it.
    pub fn append(&mut self, mut event: AuditEvent) -> std::io::Result<AuditEvent> {
        event.seq = self.state.next_seq;
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_string(&event).map_err(std::io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.state.apply(&event);
        Ok(event)
    }
}
