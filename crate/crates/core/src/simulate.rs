//! Synthetic cohorts driven through the real protocol against a
//! deterministic model stub.
//!
//! Every random draw comes from a generator keyed by (seed, participant,
//! purpose, index), and the clock only moves right before a committing call.
//! The driver reads the stored phase and message counts before each step, so
//! a run interrupted at any commit and restarted on the same data directory
//! finishes with exactly the state an uninterrupted run would have.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::clock::ManualClock;
use crate::gateway::{CompletionRequest, FnStub, Gateway, ModelConfig, StubStep};
use crate::instruments::{InstrumentId, InstrumentSpec};
use crate::orchestrator::{Registration, Study, StudyError};
use crate::prompt::{detect_kind, PromptKind};
use crate::session::{
    participant_id, session_id, AgeBracket, ChatStage, Condition, Gender, Phase, ScreeningAnswers, Wave,
};
use crate::ssp::{canonical_ssp_text, random_rating};
use crate::store::Store;

/// Simulated wall clock at the first event of a fresh run.
pub const SIM_EPOCH_MS: u64 = 1_700_000_000_000;

/// Share of believability mass on 3-5.
pub const HIGH_BELIEVABILITY_SHARE: f64 = 0.5333;

const WEEK_MS: u64 = 7 * 24 * 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    /// Share of self-clone participants who return for the follow-up.
    pub followup_rate: f64,
    /// Halt right after this many user messages have been posted by this run.
    pub stop_after_messages: Option<usize>,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, followup_rate: 0.6, stop_after_messages: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStatus {
    Complete,
    Stopped { messages_posted: usize },
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Demographics,
    Latent,
    Message(ChatStage, Wave),
    Survey(Wave),
}

impl Purpose {
    fn tag(self) -> [u8; 3] {
        let wave = |w: Wave| w as u8;
        match self {
            Purpose::Demographics => [0, 0, 0],
            Purpose::Latent => [1, 0, 0],
            Purpose::Message(stage, w) => [2, stage as u8, wave(w)],
            Purpose::Survey(w) => [3, wave(w), 0],
        }
    }
}

fn keyed_rng(seed: u64, ordinal: usize, purpose: Purpose, index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((ordinal as u64).to_le_bytes());
    h.update(purpose.tag());
    h.update((index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn text_rng(text: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(Sha256::digest(text.as_bytes()).into())
}

/// A 1-5 believability score: High ({3,4,5}) with the configured share,
/// otherwise Low ({1,2}).
pub fn sample_believability<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    if rng.random_bool(HIGH_BELIEVABILITY_SHARE) {
        [(3, 20), (4, 45), (5, 35)].choose_weighted(rng, |x| x.1).unwrap().0
    } else {
        [(1, 45), (2, 55)].choose_weighted(rng, |x| x.1).unwrap().0
    }
}

/// `n` scores from an independent generator stream for `seed`.
pub fn believability_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_believability(&mut rng) as f64).collect()
}

const STRATA: [(Gender, AgeBracket); 8] = [
    (Gender::Woman, AgeBracket::Young),
    (Gender::Man, AgeBracket::Young),
    (Gender::Woman, AgeBracket::Adult),
    (Gender::Man, AgeBracket::Adult),
    (Gender::NonBinary, AgeBracket::Young),
    (Gender::Woman, AgeBracket::Middle),
    (Gender::Man, AgeBracket::Middle),
    (Gender::Other, AgeBracket::Senior),
];

const NAMES: [&str; 12] = ["Alex", "Jordan", "Sam", "Riley", "Casey", "Morgan", "Jamie", "Taylor", "Drew", "Robin", "Avery", "Quinn"];

const VOCAB: [&str; 24] = [
    "I", "think", "you", "really", "should", "try", "to", "talk", "with", "them", "about", "it", "that", "sounds",
    "hard", "and", "maybe", "take", "a", "break", "feel", "okay", "the", "work",
];

const FRIEND_LINES: [&str; 4] = [
    "Honestly I keep feeling like everyone will figure out I don't belong here.",
    "Yeah... I just don't know if I'm good enough for this job.",
    "That helps a bit. I guess I never thought of it that way.",
    "Thanks for listening, it means a lot.",
];

const MAIN_LINES: [&str; 4] = [
    "That makes sense. What do you think is weighing on you the most right now?",
    "I hear you. It sounds like you've been carrying a lot lately.",
    "What is one small step you could take this week?",
    "You've handled hard things before. What helped back then?",
];

/// Registration answers and the person behind them. Registration always
/// passes screening.
fn registration(seed: u64, ordinal: usize) -> Registration {
    let (gender, bracket) = STRATA[((ordinal - 1) / 3) % STRATA.len()];
    let mut rng = keyed_rng(seed, ordinal, Purpose::Demographics, 0);
    let age = match bracket {
        AgeBracket::Young => rng.random_range(19..=29),
        AgeBracket::Adult => rng.random_range(30..=44),
        AgeBracket::Middle => rng.random_range(45..=59),
        AgeBracket::Senior => rng.random_range(60..=75),
    };
    Registration {
        display_name: NAMES[(ordinal - 1) % NAMES.len()].to_string(),
        gender,
        screening: ScreeningAnswers::clean(age),
    }
}

#[derive(Debug, Clone, Copy)]
struct Latent {
    literacy: f64,
    attitude: f64,
    person: f64,
    believability: i64,
    followup: bool,
    friend_target: usize,
    main_target: usize,
    verbosity: f64,
    pace: f64,
}

impl Latent {
    fn draw(seed: u64, ordinal: usize, followup_rate: f64) -> Self {
        let mut rng = keyed_rng(seed, ordinal, Purpose::Latent, 0);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let (literacy, attitude, person, v, p) = (z(), z(), 0.35 * z(), z(), z());
        Self {
            literacy,
            attitude,
            person,
            believability: sample_believability(&mut rng),
            followup: rng.random_bool(followup_rate),
            friend_target: 10 + rng.random_range(0..=3),
            main_target: 12 + rng.random_range(0..=2),
            verbosity: (10.0 + 2.0 * v).max(3.0),
            pace: (25.0 + 6.0 * p).max(8.0),
        }
    }

    /// Mean item response on a 1-5 engagement item.
    fn engagement(&self, condition: Condition, believability: i64) -> f64 {
        let effect = match condition {
            Condition::BL => 0.0,
            _ if believability >= 3 => 0.6,
            _ => -0.6,
        };
        3.1 + 0.35 * self.literacy + 0.25 * self.attitude + self.person + effect
    }
}

fn draw(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: i64, hi: i64) -> i64 {
    let v = Normal::new(mean, sd).unwrap().sample(rng);
    (v.round() as i64).clamp(lo, hi)
}

fn survey_answers(
    spec: &InstrumentSpec,
    latent: &Latent,
    condition: Condition,
    believability: i64,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, i64> {
    let (lo, hi) = (spec.scale_min, spec.scale_max);
    let engagement = latent.engagement(condition, believability);
    spec.items
        .iter()
        .map(|item| {
            let value = match spec.id {
                InstrumentId::Tweets | InstrumentId::Ues => draw(rng, engagement, 0.6, lo, hi),
                InstrumentId::Cmots => draw(rng, engagement + 0.2, 0.7, lo, hi),
                InstrumentId::Utaut => draw(rng, 4.5 + 1.2 * (engagement - 3.1) + 0.5 * latent.attitude, 0.8, lo, hi),
                InstrumentId::Ails => draw(rng, 4.8 + latent.literacy, 0.7, lo, hi),
                InstrumentId::Aiais => draw(rng, 6.0 + 1.5 * latent.attitude, 1.0, lo, hi),
                InstrumentId::Distress => draw(rng, 1.2, 0.8, lo, hi),
                InstrumentId::Believability => believability,
            };
            let raw = if item.reverse_scored { spec.reverse(value) } else { value };
            (item.key.clone(), raw)
        })
        .collect()
}

/// Deterministic stand-in for the chat model: replies depend only on the
/// request, and each call takes 0.8-3.2 simulated seconds.
pub fn sim_backend(clock: Arc<ManualClock>) -> FnStub {
    FnStub::new(move |req: &CompletionRequest| {
        let key = format!("{}\u{0}{}", req.system.len(), req.history.len());
        let mut rng = text_rng(&key);
        clock.advance(rng.random_range(800..=3200));
        match detect_kind(&req.system) {
            Some(PromptKind::SspAnalysis) => StubStep::reply(canonical_ssp_text(&random_rating(&mut text_rng(&req.system)))),
            Some(PromptKind::FriendInNeed) if req.history.is_empty() => {
                StubStep::reply("Hey, do you have a minute to chat? I could use a friend right now.")
            }
            Some(PromptKind::FriendInNeed) => StubStep::reply(*FRIEND_LINES.choose(&mut rng).unwrap()),
            _ => StubStep::reply(*MAIN_LINES.choose(&mut rng).unwrap()),
        }
    })
}

/// A study wired to the simulated model and a manual clock that resumes
/// from the store's latest timestamp.
pub fn sim_study(store: Arc<Store>, seed: u64) -> (Study, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(SIM_EPOCH_MS));
    clock.set_at_least(store.read(|s| s.max_timestamp));
    let backend = Arc::new(sim_backend(clock.clone()));
    let gateway = Gateway::new(backend, ModelConfig::default(), clock.clone())
        .expect("default model config is valid")
        .with_sleeper(|_| {});
    (Study::new(store, gateway, clock.clone(), seed), clock)
}

enum Halt {
    Stopped,
    Failed(StudyError),
}

impl From<StudyError> for Halt {
    fn from(e: StudyError) -> Self {
        Halt::Failed(e)
    }
}

struct Driver<'a> {
    study: &'a Study,
    clock: &'a ManualClock,
    cfg: SimConfig,
    posted: usize,
}

impl Driver<'_> {
    fn participant(&mut self, ordinal: usize) -> Result<(), Halt> {
        let pid = participant_id(ordinal);
        let profile = match self.study.participant(&pid) {
            Ok(p) => p,
            Err(_) => {
                self.clock.advance(60_000);
                self.study.register(&registration(self.cfg.seed, ordinal))?
            }
        };
        let condition = profile.condition.expect("simulated participants are eligible");
        let latent = Latent::draw(self.cfg.seed, ordinal, self.cfg.followup_rate);
        let sid = session_id(&pid, Wave::Primary);
        if self.study.session(&sid).is_err() {
            self.clock.advance(30_000);
            self.study.create_session(&pid)?;
        }
        self.session(ordinal, &sid, condition, &latent, latent.believability)
    }

    fn followup(&mut self, ordinal: usize) -> Result<(), Halt> {
        let pid = participant_id(ordinal);
        let condition = self.study.participant(&pid)?.condition.expect("eligible");
        let latent = Latent::draw(self.cfg.seed, ordinal, self.cfg.followup_rate);
        if !condition.is_self_clone() || !latent.followup {
            return Ok(());
        }
        let sid = session_id(&pid, Wave::Followup);
        if self.study.session(&sid).is_err() {
            self.clock.advance(WEEK_MS);
            self.study.start_followup(&pid)?;
        }
        let mut rng = keyed_rng(self.cfg.seed, ordinal, Purpose::Latent, 1);
        let shift = *[-1, 0, 0, 0, 1].choose(&mut rng).unwrap();
        let believability = (latent.believability + shift).clamp(1, 5);
        self.session(ordinal, &sid, condition, &latent, believability)
    }

    fn session(
        &mut self,
        ordinal: usize,
        sid: &str,
        condition: Condition,
        latent: &Latent,
        believability: i64,
    ) -> Result<(), Halt> {
        loop {
            let s = self.study.session(sid)?;
            match s.phase {
                Phase::PreSurvey | Phase::PostSurvey => {
                    let mut rng = keyed_rng(self.cfg.seed, ordinal, Purpose::Survey(s.wave), s.phase as usize);
                    for id in s.required_instruments(s.phase) {
                        // Draw for every instrument so answers do not depend on what was already stored.
                        let answers = survey_answers(&id.spec(), latent, condition, believability, &mut rng);
                        if !s.surveys.contains_key(&id) {
                            self.clock.advance(45_000);
                            self.study.submit_survey(sid, id, &answers, None)?;
                        }
                    }
                    self.clock.advance(5_000);
                    self.study.advance(sid)?;
                }
                Phase::FriendChat | Phase::MainChat => {
                    let stage = ChatStage::of_phase(s.phase).unwrap();
                    let target = if stage == ChatStage::Friend { latent.friend_target } else { latent.main_target };
                    if s.reply_pending() {
                        self.study.retry_reply(sid)?;
                        continue;
                    }
                    let done = s.user_messages_in_phase();
                    if done >= target {
                        self.clock.advance(5_000);
                        self.study.advance(sid)?;
                        continue;
                    }
                    let mut rng = keyed_rng(self.cfg.seed, ordinal, Purpose::Message(stage, s.wave), done);
                    let words = draw(&mut rng, latent.verbosity, 3.0, 1, 60) as usize;
                    let text: Vec<&str> = (0..words).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
                    let compose = Normal::new(latent.pace + 1.5 * words as f64, 5.0).unwrap().sample(&mut rng).max(3.0);
                    self.clock.advance((compose * 1000.0) as u64);
                    self.study.post_user_message(sid, &text.join(" "))?;
                    self.posted += 1;
                    if self.cfg.stop_after_messages == Some(self.posted) {
                        return Err(Halt::Stopped);
                    }
                }
                Phase::Complete => return Ok(()),
            }
        }
    }
}

/// Runs (or resumes) the cohort: all primary sessions in order, then the
/// follow-ups.
pub fn run_simulation(study: &Study, clock: &ManualClock, cfg: &SimConfig) -> Result<SimStatus, StudyError> {
    let mut d = Driver { study, clock, cfg: *cfg, posted: 0 };
    let result = (1..=cfg.n)
        .try_for_each(|i| d.participant(i))
        .and_then(|_| (1..=cfg.n).try_for_each(|i| d.followup(i)));
    match result {
        Ok(()) => Ok(SimStatus::Complete),
        Err(Halt::Stopped) => Ok(SimStatus::Stopped { messages_posted: d.posted }),
        Err(Halt::Failed(e)) => Err(e),
    }
}

/// Opens the study on `store` and runs the cohort.
pub fn simulate(store: Arc<Store>, cfg: &SimConfig) -> Result<SimStatus, StudyError> {
    let (study, clock) = sim_study(store, cfg.seed);
    run_simulation(&study, &clock, cfg)
}
