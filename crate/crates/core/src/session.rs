//! Study domain: conditions, screening, stratified assignment and the
//! per-session record driven by the orchestrator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chat::ChatTranscript;
use crate::instruments::{Administered, InstrumentId, ScoredInstrument};
use crate::prompt::RenderedPrompt;
use crate::ssp::SspRating;

pub const FRIEND_MIN_USER_MESSAGES: usize = 10;
pub const MAIN_MIN_USER_MESSAGES: usize = 12;
pub const MIN_AGE: u32 = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    BL,
    SCX,
    SCS,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::BL, Condition::SCX, Condition::SCS];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::BL => "BL",
            Condition::SCX => "SCX",
            Condition::SCS => "SCS",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_self_clone(self) -> bool {
        self != Condition::BL
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Woman,
    Man,
    NonBinary,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Woman => "woman",
            Gender::Man => "man",
            Gender::NonBinary => "non_binary",
            Gender::Other => "other",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Gender::Woman, Gender::Man, Gender::NonBinary, Gender::Other]
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown gender {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "19-29")]
    Young,
    #[serde(rename = "30-44")]
    Adult,
    #[serde(rename = "45-59")]
    Middle,
    #[serde(rename = "60+")]
    Senior,
}

impl AgeBracket {
    /// Ages below the minimum fall into the youngest bracket; they are never
    /// assigned because screening excludes them.
    pub fn of(age: u32) -> Self {
        match age {
            0..=29 => AgeBracket::Young,
            30..=44 => AgeBracket::Adult,
            45..=59 => AgeBracket::Middle,
            _ => AgeBracket::Senior,
        }
    }
}

pub type Stratum = (Gender, AgeBracket);

/// Screener answers. `None` means unanswered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningAnswers {
    pub age: Option<u32>,
    pub suicidal_or_homicidal_ideation: Option<bool>,
    pub severe_symptoms_poor_coping: Option<bool>,
    pub strongly_opposed_to_ai_mental_health: Option<bool>,
    pub has_current_concerns: Option<bool>,
    pub recent_treatment_change: Option<bool>,
    pub english_primary: Option<bool>,
}

impl ScreeningAnswers {
    /// A profile that passes every rule.
    pub fn clean(age: u32) -> Self {
        Self {
            age: Some(age),
            suicidal_or_homicidal_ideation: Some(false),
            severe_symptoms_poor_coping: Some(false),
            strongly_opposed_to_ai_mental_health: Some(false),
            has_current_concerns: Some(true),
            recent_treatment_change: Some(false),
            english_primary: Some(true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    SuicidalOrHomicidalIdeation,
    SevereSymptomsPoorCoping,
    StronglyOpposedToAiMentalHealth,
    NoCurrentConcerns,
    RecentTreatmentChange,
    NonEnglishPrimary,
    Underage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningOutcome {
    pub eligible: bool,
    pub exclusion_reasons: Vec<ExclusionReason>,
}

/// Applies the seven exclusion rules. Errors with the names of unanswered
/// questions.
pub fn screen(answers: &ScreeningAnswers) -> Result<ScreeningOutcome, Vec<String>> {
    let mut missing = Vec::new();
    macro_rules! need {
        ($field:ident) => {
            match answers.$field {
                Some(v) => v,
                None => {
                    missing.push(stringify!($field).to_string());
                    Default::default()
                }
            }
        };
    }
    let age: u32 = need!(age);
    let ideation: bool = need!(suicidal_or_homicidal_ideation);
    let severe: bool = need!(severe_symptoms_poor_coping);
    let opposed: bool = need!(strongly_opposed_to_ai_mental_health);
    let concerns: bool = need!(has_current_concerns);
    let changed: bool = need!(recent_treatment_change);
    let english: bool = need!(english_primary);
    if !missing.is_empty() {
        return Err(missing);
    }
    let rules = [
        (ideation, ExclusionReason::SuicidalOrHomicidalIdeation),
        (severe, ExclusionReason::SevereSymptomsPoorCoping),
        (opposed, ExclusionReason::StronglyOpposedToAiMentalHealth),
        (!concerns, ExclusionReason::NoCurrentConcerns),
        (changed, ExclusionReason::RecentTreatmentChange),
        (!english, ExclusionReason::NonEnglishPrimary),
        (age < MIN_AGE, ExclusionReason::Underage),
    ];
    let exclusion_reasons: Vec<_> = rules.into_iter().filter(|(hit, _)| *hit).map(|(_, r)| r).collect();
    Ok(ScreeningOutcome { eligible: exclusion_reasons.is_empty(), exclusion_reasons })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub id: String,
    pub display_name: String,
    pub age: u32,
    pub gender: Gender,
    pub screening_answers: ScreeningAnswers,
    pub eligible: bool,
    pub condition: Option<Condition>,
    pub registered_at: u64,
}

impl ParticipantProfile {
    pub fn stratum(&self) -> Stratum {
        (self.gender, AgeBracket::of(self.age))
    }
}

/// Per-stratum condition counts, indexed by [`Condition::index`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    counts: BTreeMap<Stratum, [usize; 3]>,
}

impl Roster {
    pub fn counts(&self, stratum: Stratum) -> [usize; 3] {
        self.counts.get(&stratum).copied().unwrap_or_default()
    }

    pub fn totals(&self) -> [usize; 3] {
        self.counts.values().fold([0; 3], |acc, c| [acc[0] + c[0], acc[1] + c[1], acc[2] + c[2]])
    }

    pub fn record(&mut self, stratum: Stratum, condition: Condition) {
        self.counts.entry(stratum).or_default()[condition.index()] += 1;
    }
}

/// Picks a condition with the smallest count in the participant's stratum.
/// Ties go to the condition with the smallest study-wide count, then to a
/// draw from ChaCha stream `ordinal` of `seed`.
pub fn assign_condition(profile: &ParticipantProfile, roster: &Roster, seed: u64, ordinal: u64) -> Condition {
    let local = roster.counts(profile.stratum());
    let global = roster.totals();
    let key = |c: Condition| (local[c.index()], global[c.index()]);
    let best = Condition::ALL.into_iter().map(key).min().unwrap();
    let candidates: Vec<Condition> = Condition::ALL.into_iter().filter(|&c| key(c) == best).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    candidates[rng.random_range(0..candidates.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    PreSurvey,
    FriendChat,
    MainChat,
    PostSurvey,
    Complete,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::PreSurvey => Some(Phase::FriendChat),
            Phase::FriendChat => Some(Phase::MainChat),
            Phase::MainChat => Some(Phase::PostSurvey),
            Phase::PostSurvey => Some(Phase::Complete),
            Phase::Complete => None,
        }
    }

    /// Advisory duration shown to participants, in seconds.
    pub fn advisory_seconds(self) -> Option<u64> {
        match self {
            Phase::PreSurvey => Some(5 * 60),
            Phase::FriendChat => Some(8 * 60),
            Phase::MainChat => Some(10 * 60),
            Phase::PostSurvey => Some(7 * 60),
            Phase::Complete => None,
        }
    }

    pub fn minimum_user_messages(self) -> Option<usize> {
        match self {
            Phase::FriendChat => Some(FRIEND_MIN_USER_MESSAGES),
            Phase::MainChat => Some(MAIN_MIN_USER_MESSAGES),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    Primary,
    Followup,
}

impl Wave {
    pub fn as_str(self) -> &'static str {
        match self {
            Wave::Primary => "primary",
            Wave::Followup => "followup",
        }
    }
}

impl FromStr for Wave {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Wave::Primary, Wave::Followup]
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown wave {s:?}"))
    }
}

/// Which transcript a chat message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatStage {
    Friend,
    Main,
}

impl ChatStage {
    pub fn phase(self) -> Phase {
        match self {
            ChatStage::Friend => Phase::FriendChat,
            ChatStage::Main => Phase::MainChat,
        }
    }

    pub fn of_phase(phase: Phase) -> Option<Self> {
        match phase {
            Phase::FriendChat => Some(ChatStage::Friend),
            Phase::MainChat => Some(ChatStage::Main),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub scored: ScoredInstrument,
    /// Free text kept verbatim for qualitative analysis.
    pub comment: Option<String>,
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SspOutcome {
    pub rating: SspRating,
    /// The model output never parsed and the neutral rating was used.
    pub fallback: bool,
    pub calls: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub id: String,
    pub participant_id: String,
    pub wave: Wave,
    pub condition: Condition,
    pub phase: Phase,
    pub friend_transcript: ChatTranscript,
    pub main_transcript: ChatTranscript,
    pub compiled_main_prompt: Option<RenderedPrompt>,
    pub ssp: Option<SspOutcome>,
    pub surveys: BTreeMap<InstrumentId, SurveyResponse>,
    pub phase_started_at: BTreeMap<Phase, u64>,
    pub created_at: u64,
    pub template_hash: String,
}

impl StudySession {
    pub fn transcript(&self, stage: ChatStage) -> &ChatTranscript {
        match stage {
            ChatStage::Friend => &self.friend_transcript,
            ChatStage::Main => &self.main_transcript,
        }
    }

    pub fn transcript_mut(&mut self, stage: ChatStage) -> &mut ChatTranscript {
        match stage {
            ChatStage::Friend => &mut self.friend_transcript,
            ChatStage::Main => &mut self.main_transcript,
        }
    }

    /// Instruments that must be submitted before leaving `phase`.
    pub fn required_instruments(&self, phase: Phase) -> Vec<InstrumentId> {
        let when = match phase {
            Phase::PreSurvey => Administered::PreStudy,
            Phase::PostSurvey => Administered::PostStudy,
            _ => return Vec::new(),
        };
        InstrumentId::ALL
            .into_iter()
            .map(InstrumentId::spec)
            .filter(|s| s.administered == when && (!s.self_clone_only || self.condition.is_self_clone()))
            .map(|s| s.id)
            .collect()
    }

    pub fn missing_instruments(&self, phase: Phase) -> Vec<InstrumentId> {
        self.required_instruments(phase).into_iter().filter(|id| !self.surveys.contains_key(id)).collect()
    }

    /// The current chat is waiting on an assistant message: the friend chat
    /// has no opener yet, or the last message came from the participant.
    pub fn reply_pending(&self) -> bool {
        match ChatStage::of_phase(self.phase) {
            Some(stage) => {
                let t = self.transcript(stage);
                t.last().is_none_or(|m| m.role == crate::chat::Role::User)
            }
            None => false,
        }
    }

    pub fn user_messages_in_phase(&self) -> usize {
        ChatStage::of_phase(self.phase).map_or(0, |s| self.transcript(s).user_message_count())
    }
}

pub fn participant_id(ordinal: usize) -> String {
    format!("P{ordinal:04}")
}

pub fn session_id(participant_id: &str, wave: Wave) -> String {
    match wave {
        Wave::Primary => format!("{participant_id}-p"),
        Wave::Followup => format!("{participant_id}-f"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(gender: Gender, age: u32) -> ParticipantProfile {
        ParticipantProfile {
            id: "P0001".into(),
            display_name: "Alex".into(),
            age,
            gender,
            screening_answers: ScreeningAnswers::clean(age),
            eligible: true,
            condition: None,
            registered_at: 0,
        }
    }

    #[test]
    fn screening_rules() {
        let mut a = ScreeningAnswers::clean(30);
        assert_eq!(screen(&a).unwrap(), ScreeningOutcome { eligible: true, exclusion_reasons: vec![] });
        a.suicidal_or_homicidal_ideation = Some(true);
        assert_eq!(screen(&a).unwrap().exclusion_reasons, [ExclusionReason::SuicidalOrHomicidalIdeation]);
        let young = ScreeningAnswers::clean(18);
        let out = screen(&young).unwrap();
        assert!(!out.eligible);
        assert_eq!(out.exclusion_reasons, [ExclusionReason::Underage]);
        assert!(screen(&ScreeningAnswers::clean(19)).unwrap().eligible);
        let mut all = ScreeningAnswers::clean(18);
        all.suicidal_or_homicidal_ideation = Some(true);
        all.severe_symptoms_poor_coping = Some(true);
        all.strongly_opposed_to_ai_mental_health = Some(true);
        all.has_current_concerns = Some(false);
        all.recent_treatment_change = Some(true);
        all.english_primary = Some(false);
        assert_eq!(screen(&all).unwrap().exclusion_reasons.len(), 7);
    }

    #[test]
    fn incomplete_screener_names_missing_keys() {
        let mut a = ScreeningAnswers::clean(30);
        a.english_primary = None;
        a.age = None;
        assert_eq!(screen(&a).unwrap_err(), ["age", "english_primary"]);
    }

    #[test]
    fn unique_minimum_wins() {
        let p = profile(Gender::Woman, 33);
        let mut roster = Roster::default();
        for (c, n) in [(Condition::BL, 4), (Condition::SCX, 4), (Condition::SCS, 3)] {
            for _ in 0..n {
                roster.record(p.stratum(), c);
            }
        }
        for ordinal in 0..20 {
            assert_eq!(assign_condition(&p, &roster, 1, ordinal), Condition::SCS);
        }
    }

    #[test]
    fn seeded_tie_break_is_reproducible() {
        let p = profile(Gender::Man, 50);
        let a = assign_condition(&p, &Roster::default(), 7, 0);
        assert_eq!(a, assign_condition(&p, &Roster::default(), 7, 0));
        let picks: std::collections::HashSet<_> =
            (0..50).map(|o| assign_condition(&p, &Roster::default(), 7, o)).collect();
        assert_eq!(picks.len(), 3);
    }

    #[test]
    fn thirty_in_one_stratum_balance_exactly() {
        let p = profile(Gender::Woman, 25);
        let mut roster = Roster::default();
        for i in 0..30 {
            let c = assign_condition(&p, &roster, 42, i);
            roster.record(p.stratum(), c);
            let counts = roster.counts(p.stratum());
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
        assert_eq!(roster.counts(p.stratum()), [10, 10, 10]);
    }

    #[test]
    fn brackets() {
        assert_eq!(AgeBracket::of(19), AgeBracket::Young);
        assert_eq!(AgeBracket::of(30), AgeBracket::Adult);
        assert_eq!(AgeBracket::of(59), AgeBracket::Middle);
        assert_eq!(AgeBracket::of(60), AgeBracket::Senior);
    }
}
