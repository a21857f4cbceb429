//! Durable study state as an append-only JSON-lines event log.
//!
//! Every commit is one line holding a batch of events, written and synced
//! before the in-memory state changes, so a batch is either fully durable or
//! absent. Opening a store replays the log; a torn final line (a crash in the
//! middle of a write) is discarded and truncated away.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatMessage;
use crate::instruments::InstrumentId;
use crate::prompt::RenderedPrompt;
use crate::session::{ChatStage, Condition, ParticipantProfile, Phase, Roster, SspOutcome, StudySession, SurveyResponse};

pub const LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ParticipantRegistered { profile: ParticipantProfile },
    ConditionAssigned { participant_id: String, condition: Condition },
    SessionCreated { session: Box<StudySession> },
    MessageAppended { session_id: String, stage: ChatStage, message: ChatMessage },
    SurveySubmitted { session_id: String, instrument: InstrumentId, response: SurveyResponse },
    SspRecorded { session_id: String, outcome: SspOutcome },
    PromptCompiled { session_id: String, prompt: RenderedPrompt },
    PhaseAdvanced { session_id: String, from: Phase, to: Phase, at: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRecord {
    seq: u64,
    events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflicting write to {id}: {detail}")]
    ConflictingPhase { id: String, detail: String },
    #[error("{0} already exists")]
    Duplicate(String),
    #[error("log line {line} is corrupt: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// Materialized view of the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub participants: BTreeMap<String, ParticipantProfile>,
    pub sessions: BTreeMap<String, StudySession>,
    pub roster: Roster,
    pub last_seq: u64,
    /// Largest timestamp seen in any event.
    pub max_timestamp: u64,
}

impl State {
    pub fn participant(&self, id: &str) -> Result<&ParticipantProfile, StoreError> {
        self.participants.get(id).ok_or_else(|| StoreError::NotFound(format!("participant {id}")))
    }

    pub fn session(&self, id: &str) -> Result<&StudySession, StoreError> {
        self.sessions.get(id).ok_or_else(|| StoreError::NotFound(format!("session {id}")))
    }

    /// Checks a batch against the state as if earlier events of the batch
    /// were applied, without mutating anything.
    fn validate(&self, events: &[Event]) -> Result<(), StoreError> {
        let mut new_participants: BTreeMap<&str, bool> = BTreeMap::new();
        let mut new_sessions: std::collections::BTreeSet<&str> = Default::default();
        let mut phase: BTreeMap<&str, Phase> = BTreeMap::new();
        let mut prompt_set: BTreeMap<&str, bool> = BTreeMap::new();
        let mut ssp_set: BTreeMap<&str, bool> = BTreeMap::new();
        let mut last_ts: BTreeMap<(&str, bool), u64> = BTreeMap::new();

        // Sessions created earlier in the batch always have an entry in `phase`.
        let session_phase = |id: &str, phase: &BTreeMap<&str, Phase>| -> Result<Phase, StoreError> {
            match phase.get(id) {
                Some(p) => Ok(*p),
                None => Ok(self.session(id)?.phase),
            }
        };

        for ev in events {
            match ev {
                Event::ParticipantRegistered { profile } => {
                    if self.participants.contains_key(&profile.id) || new_participants.contains_key(profile.id.as_str()) {
                        return Err(StoreError::Duplicate(format!("participant {}", profile.id)));
                    }
                    new_participants.insert(&profile.id, profile.condition.is_some());
                }
                Event::ConditionAssigned { participant_id, .. } => {
                    let assigned = match new_participants.get(participant_id.as_str()) {
                        Some(a) => *a,
                        None => self.participant(participant_id)?.condition.is_some(),
                    };
                    if assigned {
                        return Err(StoreError::ConflictingPhase {
                            id: participant_id.clone(),
                            detail: "condition already assigned".into(),
                        });
                    }
                    new_participants.insert(participant_id, true);
                }
                Event::SessionCreated { session } => {
                    if !self.participants.contains_key(&session.participant_id)
                        && !new_participants.contains_key(session.participant_id.as_str())
                    {
                        return Err(StoreError::NotFound(format!("participant {}", session.participant_id)));
                    }
                    if self.sessions.contains_key(&session.id) || new_sessions.contains(session.id.as_str()) {
                        return Err(StoreError::Duplicate(format!("session {}", session.id)));
                    }
                    new_sessions.insert(&session.id);
                    phase.insert(&session.id, session.phase);
                    prompt_set.insert(&session.id, session.compiled_main_prompt.is_some());
                    ssp_set.insert(&session.id, session.ssp.is_some());
                }
                Event::MessageAppended { session_id, stage, message } => {
                    let current = session_phase(session_id, &phase)?;
                    if current != stage.phase() {
                        return Err(StoreError::ConflictingPhase {
                            id: session_id.clone(),
                            detail: format!("{stage:?} message during {current:?}"),
                        });
                    }
                    let key = (session_id.as_str(), *stage == ChatStage::Main);
                    let prev = match last_ts.get(&key) {
                        Some(t) => Some(*t),
                        None => self.sessions.get(session_id).and_then(|s| s.transcript(*stage).last().map(|m| m.sent_at)),
                    };
                    if prev.is_some_and(|p| message.sent_at < p) {
                        return Err(StoreError::ConflictingPhase {
                            id: session_id.clone(),
                            detail: "message timestamp goes backwards".into(),
                        });
                    }
                    last_ts.insert(key, message.sent_at);
                }
                Event::SurveySubmitted { session_id, .. } => {
                    session_phase(session_id, &phase)?;
                }
                Event::SspRecorded { session_id, .. } => {
                    session_phase(session_id, &phase)?;
                    let set = match ssp_set.get(session_id.as_str()) {
                        Some(s) => *s,
                        None => self.session(session_id)?.ssp.is_some(),
                    };
                    if set {
                        return Err(StoreError::ConflictingPhase {
                            id: session_id.clone(),
                            detail: "SSP rating already recorded".into(),
                        });
                    }
                    ssp_set.insert(session_id, true);
                }
                Event::PromptCompiled { session_id, .. } => {
                    session_phase(session_id, &phase)?;
                    let set = match prompt_set.get(session_id.as_str()) {
                        Some(s) => *s,
                        None => self.session(session_id)?.compiled_main_prompt.is_some(),
                    };
                    if set {
                        return Err(StoreError::ConflictingPhase {
                            id: session_id.clone(),
                            detail: "compiled prompt is immutable".into(),
                        });
                    }
                    prompt_set.insert(session_id, true);
                }
                Event::PhaseAdvanced { session_id, from, to, .. } => {
                    let current = session_phase(session_id, &phase)?;
                    if current != *from || to <= from {
                        return Err(StoreError::ConflictingPhase {
                            id: session_id.clone(),
                            detail: format!("cannot move {from:?} -> {to:?} while in {current:?}"),
                        });
                    }
                    phase.insert(session_id, *to);
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::ParticipantRegistered { profile } => {
                self.bump(profile.registered_at);
                if let Some(c) = profile.condition {
                    self.roster.record(profile.stratum(), c);
                }
                self.participants.insert(profile.id.clone(), profile);
            }
            Event::ConditionAssigned { participant_id, condition } => {
                let p = self.participants.get_mut(&participant_id).expect("validated");
                p.condition = Some(condition);
                let stratum = p.stratum();
                self.roster.record(stratum, condition);
            }
            Event::SessionCreated { session } => {
                self.bump(session.created_at);
                self.sessions.insert(session.id.clone(), *session);
            }
            Event::MessageAppended { session_id, stage, message } => {
                self.bump(message.sent_at);
                self.sessions.get_mut(&session_id).expect("validated").transcript_mut(stage).push(message);
            }
            Event::SurveySubmitted { session_id, instrument, response } => {
                self.bump(response.submitted_at);
                self.sessions.get_mut(&session_id).expect("validated").surveys.insert(instrument, response);
            }
            Event::SspRecorded { session_id, outcome } => {
                self.sessions.get_mut(&session_id).expect("validated").ssp = Some(outcome);
            }
            Event::PromptCompiled { session_id, prompt } => {
                self.sessions.get_mut(&session_id).expect("validated").compiled_main_prompt = Some(prompt);
            }
            Event::PhaseAdvanced { session_id, to, at, .. } => {
                self.bump(at);
                let s = self.sessions.get_mut(&session_id).expect("validated");
                s.phase = to;
                s.phase_started_at.insert(to, at);
            }
        }
    }

    fn bump(&mut self, t: u64) {
        self.max_timestamp = self.max_timestamp.max(t);
    }
}

struct Inner {
    state: State,
    file: Option<File>,
}

/// Thread-safe handle; all writes go through [`Store::transact`].
pub struct Store {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self { inner: Mutex::new(Inner { state: State::default(), file: None }), path: None }
    }

    /// Opens (or creates) `dir/events.jsonl` and replays it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(LOG_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut state = State::default();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut line_no = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = line.ends_with('\n');
            let parsed = serde_json::from_str::<LogRecord>(line.trim_end());
            match parsed {
                Ok(record) if complete => {
                    state.validate(&record.events).map_err(|e| StoreError::Corrupt { line: line_no, detail: e.to_string() })?;
                    state.last_seq = record.seq;
                    for ev in record.events {
                        state.apply(ev);
                    }
                    good_len += n as u64;
                }
                _ => {
                    // Only the final line may be torn.
                    let mut rest = String::new();
                    reader.read_line(&mut rest)?;
                    if !rest.is_empty() {
                        return Err(StoreError::Corrupt { line: line_no, detail: "unparsable record".into() });
                    }
                    break;
                }
            }
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self { inner: Mutex::new(Inner { state, file: Some(file) }), path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Runs `f` on a consistent snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&State) -> T) -> T {
        f(&self.inner.lock().unwrap().state)
    }

    /// Computes a batch from the current state and commits it atomically;
    /// no other write can interleave between the read and the commit.
    pub fn transact<T, E: From<StoreError>>(
        &self,
        f: impl FnOnce(&State) -> Result<(Vec<Event>, T), E>,
    ) -> Result<T, E> {
        let mut inner = self.inner.lock().unwrap();
        let (events, out) = f(&inner.state)?;
        Self::commit_locked(&mut inner, events)?;
        Ok(out)
    }

    pub fn commit(&self, events: Vec<Event>) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        Self::commit_locked(&mut inner, events)
    }

    fn commit_locked(inner: &mut Inner, events: Vec<Event>) -> Result<u64, StoreError> {
        if events.is_empty() {
            return Ok(inner.state.last_seq);
        }
        inner.state.validate(&events)?;
        let seq = inner.state.last_seq + 1;
        let record = LogRecord { seq, events };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&record).map_err(|e| StoreError::Io(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        inner.state.last_seq = seq;
        for ev in record.events {
            inner.state.apply(ev);
        }
        Ok(seq)
    }
}
