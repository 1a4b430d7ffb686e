//! Append-only JSONL journal, one file per session.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use lumen_core::prompts::{DialogueState, RiskLevel, Speaker, Stage, TreatmentPlan, Turn};
use serde::{Deserialize, Serialize};

/// A chat session as held in memory and returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub state: DialogueState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub plan: Option<TreatmentPlan>,
}

impl Session {
    pub fn new(id: String, at: DateTime<Utc>) -> Self {
        Self { id, state: DialogueState::default(), created_at: at, updated_at: at, plan: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Created {
        session_id: String,
        at: DateTime<Utc>,
    },
    Exchange {
        /// 1-based exchange number within the session.
        index: usize,
        user: String,
        reply: String,
        stage: Stage,
        risk: RiskLevel,
        at: DateTime<Utc>,
    },
    Plan {
        plan: TreatmentPlan,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

impl Journal {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    /// Appends records as lines with a single write, then syncs.
    pub fn append(&self, session_id: &str, records: &[Record]) -> io::Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.path_for(session_id))?;
        f.write_all(&buf)?;
        f.sync_data()
    }

    /// Rebuilds every session in the directory. Malformed or out-of-order
    /// lines are skipped with a warning; the count of skipped lines is
    /// returned alongside the sessions, sorted by id.
    pub fn replay(&self) -> io::Result<(Vec<Session>, usize)> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = Vec::new();
        let mut skipped = 0;
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(&path)?;
            let (session, bad) = replay_session(&id, &text);
            skipped += bad;
            match session {
                Some(s) => sessions.push(s),
                None => tracing::warn!(path = %path.display(), "journal has no usable records"),
            }
        }
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        Ok((sessions, skipped))
    }
}

fn replay_session(id: &str, text: &str) -> (Option<Session>, usize) {
    let mut session: Option<Session> = None;
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(session = id, line = i + 1, error = %e, "skipping malformed journal line");
                skipped += 1;
                continue;
            }
        };
        let s = session.get_or_insert_with(|| {
            let at = match &record {
                Record::Created { at, .. } | Record::Exchange { at, .. } | Record::Plan { at, .. } => *at,
            };
            Session::new(id.to_string(), at)
        });
        match record {
            Record::Created { .. } => {}
            Record::Exchange { index, user, reply, stage, risk, at } => {
                if index != s.state.exchanges() + 1 {
                    tracing::warn!(session = id, line = i + 1, index, "skipping out-of-order exchange");
                    skipped += 1;
                    continue;
                }
                s.state.history.push(Turn { speaker: Speaker::User, text: user });
                s.state.history.push(Turn { speaker: Speaker::Assistant, text: reply });
                s.state.stage = stage;
                s.state.risk = risk;
                s.updated_at = s.updated_at.max(at);
            }
            Record::Plan { plan, at } => {
                s.plan = Some(plan);
                s.updated_at = s.updated_at.max(at);
            }
        }
    }
    (session, skipped)
}
