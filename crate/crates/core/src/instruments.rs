//! Survey instruments, their scoring rules, z-score composites and the
//! believability split.
//!
//! [`all_instruments`] is also the schema the web front end renders forms
//! from; it is served as JSON by the HTTP API.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InstrumentId {
    Tweets,
    Ues,
    Cmots,
    Utaut,
    Ails,
    Aiais,
    Distress,
    Believability,
}

impl InstrumentId {
    pub const ALL: [InstrumentId; 8] = [
        InstrumentId::Tweets,
        InstrumentId::Ues,
        InstrumentId::Cmots,
        InstrumentId::Utaut,
        InstrumentId::Ails,
        InstrumentId::Aiais,
        InstrumentId::Distress,
        InstrumentId::Believability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentId::Tweets => "TWEETS",
            InstrumentId::Ues => "UES",
            InstrumentId::Cmots => "CMOTS",
            InstrumentId::Utaut => "UTAUT",
            InstrumentId::Ails => "AILS",
            InstrumentId::Aiais => "AIAIS",
            InstrumentId::Distress => "DISTRESS",
            InstrumentId::Believability => "BELIEVABILITY",
        }
    }

    pub fn spec(self) -> InstrumentSpec {
        match self {
            InstrumentId::Tweets => tweets(),
            InstrumentId::Ues => ues(),
            InstrumentId::Cmots => cmots(),
            InstrumentId::Utaut => utaut(),
            InstrumentId::Ails => ails(),
            InstrumentId::Aiais => aiais(),
            InstrumentId::Distress => distress(),
            InstrumentId::Believability => believability(),
        }
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstrumentId {
    type Err = InstrumentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| InstrumentError::UnknownInstrument(s.to_string()))
    }
}

/// When the instrument is administered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Administered {
    PreStudy,
    PostStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Subscale = sum of its items; total = sum of subscales.
    Sum,
    /// Subscale = mean of its items; total = sum of subscale means.
    SubscaleMeans,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub key: String,
    pub text: String,
    pub subscale: String,
    pub reverse_scored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub id: InstrumentId,
    pub title: String,
    pub instructions: String,
    pub scale_min: i64,
    pub scale_max: i64,
    pub scoring: Scoring,
    pub administered: Administered,
    /// Only asked in the self-clone conditions.
    pub self_clone_only: bool,
    pub items: Vec<ItemSpec>,
}

impl InstrumentSpec {
    /// Subscale names in first-appearance order.
    pub fn subscales(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for item in &self.items {
            if !out.contains(&item.subscale.as_str()) {
                out.push(&item.subscale);
            }
        }
        out
    }

    pub fn reverse(&self, value: i64) -> i64 {
        self.scale_min + self.scale_max - value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstrument {
    pub instrument: InstrumentId,
    /// Raw answers, before any reversal.
    pub responses: BTreeMap<String, i64>,
    pub subscale_scores: BTreeMap<String, f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstrumentError {
    #[error("unknown instrument {0:?}")]
    UnknownInstrument(String),
    #[error("item {item} answered {value}, outside {min}..={max}")]
    OutOfRange { item: String, value: i64, min: i64, max: i64 },
    #[error("item {0} not answered")]
    MissingItem(String),
    #[error("item {0} does not belong to the instrument")]
    UnknownItem(String),
    #[error("expected {expected} responses, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("z-scores need at least two participants")]
    SingleParticipant,
    #[error("missing value at participant {row}, column {col}")]
    MissingCell { row: usize, col: usize },
}

/// Instruments in the order the front end presents them.
pub fn all_instruments() -> Vec<InstrumentSpec> {
    InstrumentId::ALL.into_iter().map(InstrumentId::spec).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSchema {
    pub schema_version: u32,
    pub instruments: Vec<InstrumentSpec>,
}

pub fn instrument_schema() -> InstrumentSchema {
    InstrumentSchema { schema_version: SCHEMA_VERSION, instruments: all_instruments() }
}

pub fn score(spec: &InstrumentSpec, responses: &BTreeMap<String, i64>) -> Result<ScoredInstrument, InstrumentError> {
    if let Some(extra) = responses.keys().find(|k| !spec.items.iter().any(|i| &i.key == *k)) {
        return Err(InstrumentError::UnknownItem(extra.clone()));
    }
    let mut per_subscale: Vec<(&str, Vec<f64>)> = spec.subscales().into_iter().map(|s| (s, Vec::new())).collect();
    for item in &spec.items {
        let value = *responses.get(&item.key).ok_or_else(|| InstrumentError::MissingItem(item.key.clone()))?;
        if !(spec.scale_min..=spec.scale_max).contains(&value) {
            return Err(InstrumentError::OutOfRange {
                item: item.key.clone(),
                value,
                min: spec.scale_min,
                max: spec.scale_max,
            });
        }
        let scored = if item.reverse_scored { spec.reverse(value) } else { value };
        let slot = per_subscale.iter_mut().find(|(s, _)| *s == item.subscale).unwrap();
        slot.1.push(scored as f64);
    }
    let subscale_scores: BTreeMap<String, f64> = per_subscale
        .iter()
        .map(|(name, values)| {
            let sum: f64 = values.iter().sum();
            let score = match spec.scoring {
                Scoring::Sum => sum,
                Scoring::SubscaleMeans => sum / values.len() as f64,
            };
            (name.to_string(), score)
        })
        .collect();
    // Sum in item order so totals do not depend on map ordering.
    let total = per_subscale.iter().map(|(name, _)| subscale_scores[*name]).sum();
    Ok(ScoredInstrument { instrument: spec.id, responses: responses.clone(), subscale_scores, total })
}

/// Score answers given in item order.
pub fn score_values(id: InstrumentId, values: &[i64]) -> Result<ScoredInstrument, InstrumentError> {
    let spec = id.spec();
    if values.len() != spec.items.len() {
        return Err(InstrumentError::WrongLength { expected: spec.items.len(), got: values.len() });
    }
    let responses = spec.items.iter().zip(values).map(|(i, &v)| (i.key.clone(), v)).collect();
    score(&spec, &responses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweetsScore {
    pub cognitive: f64,
    pub emotional: f64,
    pub total: f64,
}

/// Items 1a-1c, 2a-2c in order.
pub fn score_tweets(values: &[i64]) -> Result<TweetsScore, InstrumentError> {
    let s = score_values(InstrumentId::Tweets, values)?;
    Ok(TweetsScore { cognitive: s.subscale_scores["cognitive"], emotional: s.subscale_scores["emotional"], total: s.total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UesScore {
    pub fa: f64,
    pub pu: f64,
    pub ae: f64,
    pub rw: f64,
    pub total: f64,
}

/// Items 1-12 in order, raw (before reversal of items 4-6).
pub fn score_ues(values: &[i64]) -> Result<UesScore, InstrumentError> {
    let s = score_values(InstrumentId::Ues, values)?;
    let g = |k: &str| s.subscale_scores[k];
    Ok(UesScore { fa: g("fa"), pu: g("pu"), ae: g("ae"), rw: g("rw"), total: s.total })
}

/// Standardize each column with its sample SD and average across columns.
/// Rows are participants. Zero-variance columns contribute 0.
pub fn zscore_composite(rows: &[Vec<f64>]) -> Result<Vec<f64>, InstrumentError> {
    if rows.len() < 2 {
        return Err(InstrumentError::SingleParticipant);
    }
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    for (r, row) in rows.iter().enumerate() {
        for c in 0..width {
            if !row.get(c).is_some_and(|v| v.is_finite()) {
                return Err(InstrumentError::MissingCell { row: r, col: c });
            }
        }
    }
    if width == 0 {
        return Err(InstrumentError::MissingCell { row: 0, col: 0 });
    }
    let n = rows.len() as f64;
    let mut composite = vec![0.0; rows.len()];
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if sd == 0.0 {
            continue;
        }
        for (out, row) in composite.iter_mut().zip(rows) {
            *out += (row[c] - mean) / sd;
        }
    }
    composite.iter_mut().for_each(|v| *v /= width as f64);
    Ok(composite)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BelievabilityGroup {
    Low,
    High,
}

impl BelievabilityGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            BelievabilityGroup::Low => "Low",
            BelievabilityGroup::High => "High",
        }
    }
}

/// 3 and above is High; the mixture threshold falls between 2 and 3.
pub fn believability_group(score: i64) -> Result<BelievabilityGroup, InstrumentError> {
    match score {
        1 | 2 => Ok(BelievabilityGroup::Low),
        3..=5 => Ok(BelievabilityGroup::High),
        _ => Err(InstrumentError::OutOfRange { item: "1".into(), value: score, min: 1, max: 5 }),
    }
}

fn item(key: &str, subscale: &str, text: &str) -> ItemSpec {
    ItemSpec { key: key.into(), text: text.into(), subscale: subscale.into(), reverse_scored: false }
}

fn reversed(key: &str, subscale: &str, text: &str) -> ItemSpec {
    ItemSpec { reverse_scored: true, ..item(key, subscale, text) }
}

#[allow(clippy::too_many_arguments)]
fn spec(
    id: InstrumentId,
    title: &str,
    instructions: &str,
    range: (i64, i64),
    scoring: Scoring,
    administered: Administered,
    self_clone_only: bool,
    items: Vec<ItemSpec>,
) -> InstrumentSpec {
    InstrumentSpec {
        id,
        title: title.into(),
        instructions: instructions.into(),
        scale_min: range.0,
        scale_max: range.1,
        scoring,
        administered,
        self_clone_only,
        items,
    }
}

fn tweets() -> InstrumentSpec {
    spec(
        InstrumentId::Tweets,
        "TWente Engagement with EHealth and Technologies Scale (cognitive and affective items)",
        "Please rate your experience on the following statement: Thinking about using the second chatbot, I feel that…",
        (1, 5),
        Scoring::Sum,
        Administered::PostStudy,
        false,
        vec![
            item("1a", "cognitive", "The chatbot makes it easier for me to work on improving my mental well-being."),
            item("1b", "cognitive", "The chatbot  motivates me to improve my mental well-being"),
            item("1c", "cognitive", "The chatbot helps me get more insight into improving my mental well-being."),
            item("2a", "emotional", "I enjoy using the chatbot."),
            item("2b", "emotional", "I enjoy seeing the progress I make in the chatbot"),
            item("2c", "emotional", "The chatbot fits me as a person"),
        ],
    )
}

fn ues() -> InstrumentSpec {
    spec(
        InstrumentId::Ues,
        "User Engagement Scale",
        "Please rate your experience with the second chatbot on the following statement:",
        (1, 5),
        Scoring::SubscaleMeans,
        Administered::PostStudy,
        false,
        vec![
            item("1", "fa", "I lost myself in this experience."),
            item("2", "fa", "The time I spent using the chatbot just slipped away."),
            item("3", "fa", "I was absorbed in this experience."),
            reversed("4", "pu", "I felt frustrated while using the chatbot"),
            reversed("5", "pu", "I found the chatbot confusing to use."),
            reversed("6", "pu", "Using the chatbot was taxing."),
            item("7", "ae", "The chatbot was attractive."),
            item("8", "ae", "The chatbot was aesthetically appealing."),
            item("9", "ae", "The chatbot appealed to my senses."),
            item("10", "rw", "Using the chatbot was worthwhile."),
            item("11", "rw", "My experience was rewarding."),
            item("12", "rw", "I felt interested in this experience."),
        ],
    )
}

fn cmots() -> InstrumentSpec {
    spec(
        InstrumentId::Cmots,
        "Client Motivation for Therapy Scale (adapted)",
        "Please rate your agreement with the following statements: If I have access to the AI chatbot, I would be motivated to use it …",
        (1, 5),
        Scoring::Sum,
        Administered::PostStudy,
        false,
        vec![
            item("1a", "intrinsic", "… because I enjoy the process of self-discovery."),
            item("1b", "intrinsic", "… because I find it interesting and stimulating."),
            item("1c", "intrinsic", "… because I would find it to be personally rewarding."),
            item("2a", "identified", "… it because I believe it will help me achieve my personal goals."),
            item("2b", "identified", "… it because it is important for my personal growth."),
            item("2c", "identified", "… it because I see the value in improving my mental health."),
        ],
    )
}

fn utaut() -> InstrumentSpec {
    spec(
        InstrumentId::Utaut,
        "Unified Theory of Acceptance and Use of Technology (adapted)",
        "Please rate your experience with the second chatbot on the following statement:",
        (1, 7),
        Scoring::Sum,
        Administered::PostStudy,
        false,
        vec![
            item("PE1", "performance_expectancy", "I would find the chatbot useful in [improving my mental health]."),
            item(
                "PU5",
                "performance_expectancy",
                "Using the chatbot would make it easier for me to address my mental health concerns.",
            ),
            item("EE2", "effort_expectancy", "My interaction with the chatbot is clear and understandable."),
            item("EE3", "effort_expectancy", "I find the chatbot easy to use."),
            item("BI2", "behavioral_intention", "Assuming having access, I predict I will use the chatbot in the future."),
            item("A1", "attitude", "Using the chatbot to improve my mental health would be a good idea."),
        ],
    )
}

fn ails() -> InstrumentSpec {
    spec(
        InstrumentId::Ails,
        "AI Literacy Scale",
        "Please indicate how much you agree with each statement.",
        (1, 7),
        Scoring::Sum,
        Administered::PreStudy,
        false,
        vec![
            item("AW1", "awareness", "I can distinguish between smart devices and non-smart devices."),
            reversed("AW2", "awareness", "I do not know how AI technology can help me."),
            item("AW3", "awareness", "I can identify the AI technology employed in the applications and products I use."),
            item("US1", "usage", "I can skillfully use AI applications or products to help me with my daily work."),
            reversed("US2", "usage", "It is usually hard for me to learn to use a new AI application or product."),
            item("US3", "usage", "I can use AI applications or products to improve my work efficiency."),
            item(
                "EV1",
                "evaluation",
                "I can evaluate the capabilities and limitations of an AI application or product after using it for a while.",
            ),
            item("EV2", "evaluation", "I can choose a proper solution from various solutions provided by a smart agent."),
            item(
                "EV3",
                "evaluation",
                "I can choose the most appropriate AI application or product from a variety for a particular task.",
            ),
            item("ET1", "ethics", "I always comply with ethical principles when using AI applications or products."),
            reversed(
                "ET2",
                "ethics",
                "I am never alert to privacy and information security issues when using AI applications or products.",
            ),
            item("ET3", "ethics", "I am always alert to the abuse of AI technology."),
        ],
    )
}

fn aiais() -> InstrumentSpec {
    spec(
        InstrumentId::Aiais,
        "Attitudes Toward Artificial Intelligence Scale",
        "Please rate how much you agree with each statement (1 = not at all, 10 = completely).",
        (1, 10),
        Scoring::Sum,
        Administered::PreStudy,
        false,
        vec![
            item("1", "attitude", "I believe that AI will improve my life."),
            item("2", "attitude", "I believe that AI will improve my work."),
            item("3", "attitude", "I think I will use AI technology in the future."),
            item("4", "attitude", "I think AI technology is positive for humanity."),
        ],
    )
}

fn distress() -> InstrumentSpec {
    spec(
        InstrumentId::Distress,
        "Kessler Psychological Distress Scale (K6)",
        "During the past 30 days, about how often did you feel … (0 = none of the time, 4 = all of the time)",
        (0, 4),
        Scoring::Sum,
        Administered::PreStudy,
        false,
        vec![
            item("1", "distress", "… nervous?"),
            item("2", "distress", "… hopeless?"),
            item("3", "distress", "… restless or fidgety?"),
            item("4", "distress", "… so depressed that nothing could cheer you up?"),
            item("5", "distress", "… that everything was an effort?"),
            item("6", "distress", "… worthless?"),
        ],
    )
}

fn believability() -> InstrumentSpec {
    spec(
        InstrumentId::Believability,
        "Self-clone believability",
        "Please rate the following statement:",
        (1, 5),
        Scoring::Sum,
        Administered::PostStudy,
        true,
        vec![item("1", "believability", "The chatbot was a believable representation of myself.")],
    )
}
