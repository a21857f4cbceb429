//! The study protocol as a service over the store and the gateway.
//!
//! Calls for one session are serialized by a per-session lock held for the
//! whole operation, including model calls; different sessions run in
//! parallel. Every state change is committed to the store before the call
//! returns, so a restarted process resumes exactly where the log ends.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatMessage, Role};
use crate::clock::Clock;
use crate::gateway::{Gateway, GatewayError};
use crate::instruments::{score, InstrumentError, InstrumentId, ScoredInstrument};
use crate::prompt::{
    render_prompt, sanitize_name, serialize_chatlog, template_fixture_hash, PromptBindings, PromptError, PromptKind,
    RenderedPrompt, FRIEND_SPEAKER,
};
use crate::session::{
    assign_condition, participant_id, screen, session_id, ChatStage, Condition, ExclusionReason, Gender,
    ParticipantProfile, Phase, ScreeningAnswers, ScreeningOutcome, SspOutcome, StudySession, SurveyResponse, Wave,
};
use crate::ssp::{build_ssp_request, canonical_ssp_text, fallback_rating, parse_ssp_output};
use crate::store::{Event, State, Store, StoreError};

/// Persona name the baseline counselor uses in the UI.
pub const BASELINE_SPEAKER: &str = "Sam";

/// Model calls per SSP analysis before falling back to the neutral rating.
pub const SSP_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("screener incomplete: {0:?}")]
    IncompleteScreener(Vec<String>),
    #[error("participant is not eligible: {0:?}")]
    NotEligible(Vec<ExclusionReason>),
    #[error("not allowed during {actual:?}")]
    WrongPhase { actual: Phase },
    #[error("{phase:?} needs {need} user messages, have {have}")]
    MinimumNotMet { phase: Phase, have: usize, need: usize },
    #[error("instruments still missing: {0:?}")]
    IncompleteSurvey(Vec<InstrumentId>),
    #[error("{0} is not administered in this phase or condition")]
    NotAdministered(InstrumentId),
    #[error("{0} already submitted with different answers")]
    SurveyAlreadySubmitted(InstrumentId),
    #[error("message is empty")]
    EmptyMessage,
    #[error("waiting for the assistant reply; retry it first")]
    ReplyPending,
    #[error("no assistant reply is pending")]
    NoReplyPending,
    #[error("baseline participants have no follow-up")]
    BaselineHasNoFollowup,
    #[error("primary session of {0} is not complete")]
    PrimaryNotComplete(String),
}

pub type StudyResult<T> = Result<T, StudyError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub display_name: String,
    pub gender: Gender,
    pub screening: ScreeningAnswers,
}

/// What the front end needs to render a session and gate its controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiSessionState {
    pub session_id: String,
    pub participant_id: String,
    pub wave: Wave,
    pub phase: Phase,
    /// Speaker name shown for assistant messages.
    pub assistant_name: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub user_message_count: usize,
    pub minimum_required: Option<usize>,
    pub can_advance: bool,
    pub reply_pending: bool,
    pub missing_instruments: Vec<InstrumentId>,
    pub pending_instruments: Vec<InstrumentId>,
    /// Advisory only; negative once the suggested time has passed.
    pub advisory_seconds_remaining: Option<i64>,
}

pub struct Study {
    store: Arc<Store>,
    gateway: Gateway,
    clock: Arc<dyn Clock>,
    seed: u64,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Study {
    pub fn new(store: Arc<Store>, gateway: Gateway, clock: Arc<dyn Clock>, seed: u64) -> Self {
        Self { store, gateway, clock, seed, locks: Mutex::default() }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn screen(&self, answers: &ScreeningAnswers) -> StudyResult<ScreeningOutcome> {
        screen(answers).map_err(StudyError::IncompleteScreener)
    }

    /// Screens and records a participant; eligible participants get a
    /// condition in the same atomic commit, so concurrent registrations see
    /// each other's assignments.
    pub fn register(&self, reg: &Registration) -> StudyResult<ParticipantProfile> {
        let outcome = self.screen(&reg.screening)?;
        let name = sanitize_name(&reg.display_name)?;
        let now = self.now();
        self.store.transact(|state| {
            let ordinal = state.participants.len() + 1;
            let mut profile = ParticipantProfile {
                id: participant_id(ordinal),
                display_name: name,
                age: reg.screening.age.expect("screened"),
                gender: reg.gender,
                screening_answers: reg.screening.clone(),
                eligible: outcome.eligible,
                condition: None,
                registered_at: now,
            };
            if outcome.eligible {
                profile.condition = Some(assign_condition(&profile, &state.roster, self.seed, ordinal as u64));
            }
            Ok::<_, StudyError>((vec![Event::ParticipantRegistered { profile: profile.clone() }], profile))
        })
    }

    pub fn participant(&self, id: &str) -> StudyResult<ParticipantProfile> {
        Ok(self.store.read(|s| s.participant(id).cloned())?)
    }

    pub fn session(&self, id: &str) -> StudyResult<StudySession> {
        Ok(self.store.read(|s| s.session(id).cloned())?)
    }

    /// Opens the primary session at the preliminary survey.
    pub fn create_session(&self, participant: &str) -> StudyResult<StudySession> {
        let now = self.now();
        self.store.transact(|state| {
            let p = state.participant(participant)?;
            let condition = match (p.eligible, p.condition) {
                (true, Some(c)) => c,
                _ => {
                    let reasons = screen(&p.screening_answers).map(|o| o.exclusion_reasons).unwrap_or_default();
                    return Err(StudyError::NotEligible(reasons));
                }
            };
            let session = StudySession {
                id: session_id(participant, Wave::Primary),
                participant_id: participant.to_string(),
                wave: Wave::Primary,
                condition,
                phase: Phase::PreSurvey,
                friend_transcript: Default::default(),
                main_transcript: Default::default(),
                compiled_main_prompt: None,
                ssp: None,
                surveys: BTreeMap::new(),
                phase_started_at: BTreeMap::from([(Phase::PreSurvey, now)]),
                created_at: now,
                template_hash: template_fixture_hash(),
            };
            Ok((vec![Event::SessionCreated { session: Box::new(session.clone()) }], session))
        })
    }

    pub fn submit_survey(
        &self,
        session: &str,
        instrument: InstrumentId,
        responses: &BTreeMap<String, i64>,
        comment: Option<String>,
    ) -> StudyResult<ScoredInstrument> {
        let lock = self.session_lock(session);
        let _guard = lock.lock().unwrap();
        let now = self.now();
        let scored = score(&instrument.spec(), responses)?;
        self.store.transact(|state| {
            let s = state.session(session)?;
            if !matches!(s.phase, Phase::PreSurvey | Phase::PostSurvey) {
                return Err(StudyError::WrongPhase { actual: s.phase });
            }
            if !s.required_instruments(s.phase).contains(&instrument) {
                return Err(StudyError::NotAdministered(instrument));
            }
            if let Some(existing) = s.surveys.get(&instrument) {
                if existing.scored.responses == scored.responses && existing.comment == comment {
                    return Ok((vec![], scored.clone()));
                }
                return Err(StudyError::SurveyAlreadySubmitted(instrument));
            }
            let response = SurveyResponse { scored: scored.clone(), comment, submitted_at: now };
            Ok((vec![Event::SurveySubmitted { session_id: session.into(), instrument, response }], scored.clone()))
        })
    }

    /// Moves the session one phase forward once the current phase's
    /// requirement is met. Entering the friend chat fetches its opener from
    /// the model; entering the main chat compiles the condition's prompt and
    /// posts its fixed opener. If the model call fails the phase change
    /// stands and the opener can be fetched with [`Study::retry_reply`].
    pub fn advance(&self, session: &str) -> StudyResult<StudySession> {
        let lock = self.session_lock(session);
        let _guard = lock.lock().unwrap();
        let s = self.session(session)?;
        match s.phase {
            Phase::PreSurvey | Phase::PostSurvey => {
                let missing = s.missing_instruments(s.phase);
                if !missing.is_empty() {
                    return Err(StudyError::IncompleteSurvey(missing));
                }
                let to = s.phase.next().unwrap();
                self.store.commit(vec![Event::PhaseAdvanced { session_id: s.id.clone(), from: s.phase, to, at: self.now() }])?;
                if to == Phase::FriendChat {
                    self.fetch_reply(session)?;
                }
            }
            Phase::FriendChat => {
                check_minimum(&s)?;
                let prompt = self.compile_locked(&s)?;
                let at = self.now();
                let opener = ChatMessage::assistant(prompt.opening_message.clone(), at);
                self.store.commit(vec![
                    Event::PromptCompiled { session_id: s.id.clone(), prompt },
                    Event::PhaseAdvanced { session_id: s.id.clone(), from: Phase::FriendChat, to: Phase::MainChat, at },
                    Event::MessageAppended { session_id: s.id.clone(), stage: ChatStage::Main, message: opener },
                ])?;
            }
            Phase::MainChat => {
                check_minimum(&s)?;
                self.store.commit(vec![Event::PhaseAdvanced {
                    session_id: s.id.clone(),
                    from: Phase::MainChat,
                    to: Phase::PostSurvey,
                    at: self.now(),
                }])?;
            }
            Phase::Complete => return Err(StudyError::WrongPhase { actual: Phase::Complete }),
        }
        self.session(session)
    }

    /// The condition's main-chat prompt for a session whose friend chat has
    /// met its minimum. Returns the stored prompt if one was compiled.
    pub fn compile_main_prompt(&self, session: &str) -> StudyResult<RenderedPrompt> {
        let lock = self.session_lock(session);
        let _guard = lock.lock().unwrap();
        let s = self.session(session)?;
        if let Some(p) = s.compiled_main_prompt {
            return Ok(p);
        }
        if s.phase != Phase::FriendChat {
            return Err(StudyError::WrongPhase { actual: s.phase });
        }
        check_minimum(&s)?;
        self.compile_locked(&s)
    }

    fn compile_locked(&self, s: &StudySession) -> StudyResult<RenderedPrompt> {
        let name = self.participant(&s.participant_id)?.display_name;
        let kind = match s.condition {
            Condition::BL => return Ok(render_prompt(PromptKind::Baseline, &PromptBindings::name(&name))?),
            Condition::SCX => PromptKind::SelfCloneNoSsp,
            Condition::SCS => PromptKind::SelfCloneSsp,
        };
        let chatlog = serialize_chatlog(&s.friend_transcript, &name)?;
        let mut bindings = PromptBindings::name(&name).with_chatlog(&chatlog);
        if kind == PromptKind::SelfCloneSsp {
            let outcome = match &s.ssp {
                Some(o) => o.clone(),
                None => {
                    let o = self.run_ssp(&name, &chatlog)?;
                    self.store.commit(vec![Event::SspRecorded { session_id: s.id.clone(), outcome: o.clone() }])?;
                    o
                }
            };
            bindings = bindings.with_ssp_result(canonical_ssp_text(&outcome.rating));
        }
        Ok(render_prompt(kind, &bindings)?)
    }

    /// One analysis call plus one retry on unparsable output, then the
    /// neutral fallback. Gateway errors are returned, not retried here.
    fn run_ssp(&self, name: &str, chatlog: &str) -> StudyResult<SspOutcome> {
        let request = build_ssp_request(name, chatlog)?;
        for call in 1..=SSP_ATTEMPTS {
            let reply = self.gateway.complete(&request.system_text, &[])?;
            if let Ok(rating) = parse_ssp_output(&reply.text) {
                return Ok(SspOutcome { rating, fallback: false, calls: call });
            }
        }
        Ok(SspOutcome { rating: fallback_rating(), fallback: true, calls: SSP_ATTEMPTS })
    }

    /// Records the participant's message, asks the model for the reply and
    /// records that too. On a gateway error the user message stays and
    /// [`Study::retry_reply`] fetches the missing reply.
    pub fn post_user_message(&self, session: &str, text: &str) -> StudyResult<ChatMessage> {
        let lock = self.session_lock(session);
        let _guard = lock.lock().unwrap();
        let s = self.session(session)?;
        let stage = ChatStage::of_phase(s.phase).ok_or(StudyError::WrongPhase { actual: s.phase })?;
        if text.trim().is_empty() {
            return Err(StudyError::EmptyMessage);
        }
        if s.reply_pending() {
            return Err(StudyError::ReplyPending);
        }
        let floor = s.transcript(stage).last().map_or(0, |m| m.sent_at);
        let message = ChatMessage::user(text, self.now().max(floor));
        self.store.commit(vec![Event::MessageAppended { session_id: s.id.clone(), stage, message }])?;
        self.fetch_reply(session)
    }

    pub fn retry_reply(&self, session: &str) -> StudyResult<ChatMessage> {
        let lock = self.session_lock(session);
        let _guard = lock.lock().unwrap();
        let s = self.session(session)?;
        if !s.reply_pending() {
            return Err(StudyError::NoReplyPending);
        }
        self.fetch_reply(session)
    }

    /// Caller holds the session lock.
    fn fetch_reply(&self, session: &str) -> StudyResult<ChatMessage> {
        let s = self.session(session)?;
        let stage = ChatStage::of_phase(s.phase).ok_or(StudyError::WrongPhase { actual: s.phase })?;
        let system = match stage {
            ChatStage::Friend => render_prompt(PromptKind::FriendInNeed, &PromptBindings::default())?.system_text,
            ChatStage::Main => s.compiled_main_prompt.as_ref().expect("main chat has a compiled prompt").system_text.clone(),
        };
        let reply = self.gateway.complete(&system, &s.transcript(stage).messages)?;
        self.store.commit(vec![Event::MessageAppended { session_id: s.id.clone(), stage, message: reply.clone() }])?;
        Ok(reply)
    }

    /// Opens a follow-up session that reuses the primary session's compiled
    /// prompt, starting directly in the main chat.
    pub fn start_followup(&self, participant: &str) -> StudyResult<StudySession> {
        let now = self.now();
        self.store.transact(|state: &State| {
            let p = state.participant(participant)?;
            match p.condition {
                Some(Condition::BL) => return Err(StudyError::BaselineHasNoFollowup),
                None => return Err(StudyError::NotEligible(vec![])),
                _ => {}
            }
            let primary = state
                .sessions
                .get(&session_id(participant, Wave::Primary))
                .filter(|s| s.phase == Phase::Complete)
                .ok_or_else(|| StudyError::PrimaryNotComplete(participant.into()))?;
            let prompt = primary.compiled_main_prompt.clone().expect("completed sessions have a prompt");
            let mut main = crate::chat::ChatTranscript::new();
            main.push(ChatMessage::assistant(prompt.opening_message.clone(), now));
            let session = StudySession {
                id: session_id(participant, Wave::Followup),
                participant_id: participant.into(),
                wave: Wave::Followup,
                condition: primary.condition,
                phase: Phase::MainChat,
                friend_transcript: Default::default(),
                main_transcript: main,
                compiled_main_prompt: Some(prompt),
                ssp: primary.ssp.clone(),
                surveys: BTreeMap::new(),
                phase_started_at: BTreeMap::from([(Phase::MainChat, now)]),
                created_at: now,
                template_hash: primary.template_hash.clone(),
            };
            Ok((vec![Event::SessionCreated { session: Box::new(session.clone()) }], session))
        })
    }

    pub fn ui_state(&self, session: &str) -> StudyResult<UiSessionState> {
        let s = self.session(session)?;
        let p = self.participant(&s.participant_id)?;
        let stage = ChatStage::of_phase(s.phase);
        let messages = stage.map(|st| s.transcript(st).messages.clone()).unwrap_or_default();
        let user_message_count = messages.iter().filter(|m| m.role == Role::User).count();
        let minimum_required = s.phase.minimum_user_messages();
        let missing = s.missing_instruments(s.phase);
        let can_advance = match s.phase {
            Phase::FriendChat | Phase::MainChat => user_message_count >= minimum_required.unwrap(),
            Phase::PreSurvey | Phase::PostSurvey => missing.is_empty(),
            Phase::Complete => false,
        };
        let assistant_name = stage.map(|st| match (st, s.condition) {
            (ChatStage::Friend, _) => FRIEND_SPEAKER.to_string(),
            (ChatStage::Main, Condition::BL) => BASELINE_SPEAKER.to_string(),
            (ChatStage::Main, _) => p.display_name.clone(),
        });
        let advisory_seconds_remaining = s.phase.advisory_seconds().map(|limit| {
            let started = s.phase_started_at.get(&s.phase).copied().unwrap_or(s.created_at);
            limit as i64 - (self.now().saturating_sub(started) / 1000) as i64
        });
        Ok(UiSessionState {
            session_id: s.id.clone(),
            participant_id: s.participant_id.clone(),
            wave: s.wave,
            phase: s.phase,
            assistant_name,
            messages,
            user_message_count,
            minimum_required,
            can_advance,
            reply_pending: s.reply_pending(),
            pending_instruments: missing.clone(),
            missing_instruments: missing,
            advisory_seconds_remaining,
        })
    }
}

fn check_minimum(s: &StudySession) -> StudyResult<()> {
    let need = s.phase.minimum_user_messages().expect("chat phase");
    let have = s.user_messages_in_phase();
    if have < need {
        return Err(StudyError::MinimumNotMet { phase: s.phase, have, need });
    }
    Ok(())
}
