//! The analysis dataset: one row per participant per completed session,
//! exported as CSV with a fixed header.
//!
//! Floats are written with six decimals and missing cells are empty, so an
//! export read back and written again is byte-identical.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::instruments::{
    believability_group, zscore_composite, BelievabilityGroup, InstrumentError, InstrumentId,
    ScoredInstrument,
};
use crate::metrics::{behavioral_metrics, BehavioralMetrics, MetricsError};
use crate::session::{session_id, Condition, Gender, Phase, StudySession, Wave};
use crate::store::State;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no completed sessions to export")]
    NoCompletedSessions,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("session {session}: {source}")]
    Metrics { session: String, source: MetricsError },
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatMetricsCols {
    pub messages: usize,
    #[serde(with = "fixed6")]
    pub words_per_message: f64,
    #[serde(with = "fixed6")]
    pub mean_seconds_per_turn: f64,
    #[serde(with = "fixed6")]
    pub median_seconds_per_turn: f64,
    #[serde(with = "fixed6")]
    pub duration_seconds: f64,
}

impl From<BehavioralMetrics> for ChatMetricsCols {
    fn from(m: BehavioralMetrics) -> Self {
        Self {
            messages: m.user_message_count,
            words_per_message: m.avg_words_per_message,
            mean_seconds_per_turn: m.mean_seconds_per_turn,
            median_seconds_per_turn: m.median_seconds_per_turn,
            duration_seconds: m.total_duration_seconds,
        }
    }
}

/// Flat so that the CSV header is the field list below, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub participant_id: String,
    pub wave: Wave,
    pub condition: Condition,
    pub gender: Gender,
    pub age: u32,
    /// Self-clone rows only.
    pub believability: Option<i64>,
    pub believability_group: Option<BelievabilityGroup>,
    #[serde(with = "fixed6")]
    pub tweets_total: f64,
    #[serde(with = "fixed6")]
    pub tweets_cognitive: f64,
    #[serde(with = "fixed6")]
    pub tweets_emotional: f64,
    #[serde(with = "fixed6")]
    pub ues_fa: f64,
    #[serde(with = "fixed6")]
    pub ues_pu: f64,
    #[serde(with = "fixed6")]
    pub ues_ae: f64,
    #[serde(with = "fixed6")]
    pub ues_rw: f64,
    #[serde(with = "fixed6")]
    pub ues_total: f64,
    #[serde(with = "fixed6")]
    pub cmots_intrinsic: f64,
    #[serde(with = "fixed6")]
    pub cmots_identified: f64,
    #[serde(with = "fixed6")]
    pub utaut_performance_expectancy: f64,
    #[serde(with = "fixed6")]
    pub utaut_effort_expectancy: f64,
    #[serde(with = "fixed6")]
    pub utaut_behavioral_intention: f64,
    #[serde(with = "fixed6")]
    pub utaut_attitude: f64,
    /// Mean z-score of the CMOTS subscales within the wave.
    #[serde(with = "fixed6_opt")]
    pub motivation_z: Option<f64>,
    /// Mean z-score of the UTAUT subscales within the wave.
    #[serde(with = "fixed6_opt")]
    pub acceptance_z: Option<f64>,
    /// Pre-study measures, carried onto follow-up rows from the primary session.
    #[serde(with = "fixed6")]
    pub ails_total: f64,
    #[serde(with = "fixed6")]
    pub aiais_total: f64,
    #[serde(with = "fixed6")]
    pub distress_total: f64,
    pub friend_messages: Option<usize>,
    #[serde(with = "fixed6_opt")]
    pub friend_words_per_message: Option<f64>,
    #[serde(with = "fixed6_opt")]
    pub friend_mean_seconds_per_turn: Option<f64>,
    #[serde(with = "fixed6_opt")]
    pub friend_median_seconds_per_turn: Option<f64>,
    #[serde(with = "fixed6_opt")]
    pub friend_duration_seconds: Option<f64>,
    pub main_messages: usize,
    #[serde(with = "fixed6")]
    pub main_words_per_message: f64,
    #[serde(with = "fixed6")]
    pub main_mean_seconds_per_turn: f64,
    #[serde(with = "fixed6")]
    pub main_median_seconds_per_turn: f64,
    #[serde(with = "fixed6")]
    pub main_duration_seconds: f64,
    /// SCS rows only: the SSP rating is the neutral fallback.
    pub ssp_fallback: Option<bool>,
    /// Primary rows: a completed follow-up exists for the participant.
    pub has_followup: bool,
}

pub const HEADER: &[&str] = &[
    "participant_id",
    "wave",
    "condition",
    "gender",
    "age",
    "believability",
    "believability_group",
    "tweets_total",
    "tweets_cognitive",
    "tweets_emotional",
    "ues_fa",
    "ues_pu",
    "ues_ae",
    "ues_rw",
    "ues_total",
    "cmots_intrinsic",
    "cmots_identified",
    "utaut_performance_expectancy",
    "utaut_effort_expectancy",
    "utaut_behavioral_intention",
    "utaut_attitude",
    "motivation_z",
    "acceptance_z",
    "ails_total",
    "aiais_total",
    "distress_total",
    "friend_messages",
    "friend_words_per_message",
    "friend_mean_seconds_per_turn",
    "friend_median_seconds_per_turn",
    "friend_duration_seconds",
    "main_messages",
    "main_words_per_message",
    "main_mean_seconds_per_turn",
    "main_median_seconds_per_turn",
    "main_duration_seconds",
    "ssp_fallback",
    "has_followup",
];

impl DatasetRow {
    pub fn main_metrics(&self) -> ChatMetricsCols {
        ChatMetricsCols {
            messages: self.main_messages,
            words_per_message: self.main_words_per_message,
            mean_seconds_per_turn: self.main_mean_seconds_per_turn,
            median_seconds_per_turn: self.main_median_seconds_per_turn,
            duration_seconds: self.main_duration_seconds,
        }
    }

    pub fn is_high_believability(&self) -> bool {
        self.believability_group == Some(BelievabilityGroup::High)
    }
}

/// Rows for every completed session, sorted by participant then wave.
pub fn build_dataset(state: &State, wave: Option<Wave>) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rows = Vec::new();
    for s in state.sessions.values() {
        if s.phase != Phase::Complete || wave.is_some_and(|w| w != s.wave) {
            continue;
        }
        let primary = state
            .sessions
            .get(&session_id(&s.participant_id, Wave::Primary))
            .ok_or_else(|| DatasetError::Schema(format!("{} has no primary session", s.id)))?;
        let followup_done = state
            .sessions
            .get(&session_id(&s.participant_id, Wave::Followup))
            .is_some_and(|f| f.phase == Phase::Complete);
        let profile = state.participants.get(&s.participant_id).ok_or_else(|| {
            DatasetError::Schema(format!("session {} references unknown participant {}", s.id, s.participant_id))
        })?;
        rows.push(row_for(s, primary, profile.gender, profile.age, followup_done)?);
    }
    if rows.is_empty() {
        return Err(DatasetError::NoCompletedSessions);
    }
    rows.sort_by(|a, b| (&a.participant_id, a.wave).cmp(&(&b.participant_id, b.wave)));
    for w in [Wave::Primary, Wave::Followup] {
        fill_composites(&mut rows, w)?;
    }
    Ok(rows)
}

fn row_for(
    s: &StudySession,
    primary: &StudySession,
    gender: Gender,
    age: u32,
    has_followup: bool,
) -> Result<DatasetRow, DatasetError> {
    fn get(sess: &StudySession, id: InstrumentId) -> Result<&ScoredInstrument, DatasetError> {
        sess.surveys
            .get(&id)
            .map(|r| &r.scored)
            .ok_or_else(|| DatasetError::Schema(format!("session {} has no {id} response", sess.id)))
    }
    let sub = |sess: &StudySession, id: InstrumentId, key: &str| -> Result<f64, DatasetError> {
        get(sess, id)?
            .subscale_scores
            .get(key)
            .copied()
            .ok_or_else(|| DatasetError::Schema(format!("{id} has no subscale {key}")))
    };
    let metrics = |t, stage: &str| {
        behavioral_metrics(t)
            .map(ChatMetricsCols::from)
            .map_err(|source| DatasetError::Metrics { session: format!("{} ({stage})", s.id), source })
    };

    let believability = if s.condition.is_self_clone() {
        Some(get(s, InstrumentId::Believability)?.total as i64)
    } else {
        None
    };
    let friend = match s.wave {
        Wave::Primary => Some(metrics(&s.friend_transcript, "friend")?),
        Wave::Followup => None,
    };
    let main = metrics(&s.main_transcript, "main")?;
    let tweets = get(s, InstrumentId::Tweets)?;
    Ok(DatasetRow {
        participant_id: s.participant_id.clone(),
        wave: s.wave,
        condition: s.condition,
        gender,
        age,
        believability,
        believability_group: believability.map(believability_group).transpose()?,
        tweets_total: tweets.total,
        tweets_cognitive: sub(s, InstrumentId::Tweets, "cognitive")?,
        tweets_emotional: sub(s, InstrumentId::Tweets, "emotional")?,
        ues_fa: sub(s, InstrumentId::Ues, "fa")?,
        ues_pu: sub(s, InstrumentId::Ues, "pu")?,
        ues_ae: sub(s, InstrumentId::Ues, "ae")?,
        ues_rw: sub(s, InstrumentId::Ues, "rw")?,
        ues_total: get(s, InstrumentId::Ues)?.total,
        cmots_intrinsic: sub(s, InstrumentId::Cmots, "intrinsic")?,
        cmots_identified: sub(s, InstrumentId::Cmots, "identified")?,
        utaut_performance_expectancy: sub(s, InstrumentId::Utaut, "performance_expectancy")?,
        utaut_effort_expectancy: sub(s, InstrumentId::Utaut, "effort_expectancy")?,
        utaut_behavioral_intention: sub(s, InstrumentId::Utaut, "behavioral_intention")?,
        utaut_attitude: sub(s, InstrumentId::Utaut, "attitude")?,
        motivation_z: None,
        acceptance_z: None,
        ails_total: get(primary, InstrumentId::Ails)?.total,
        aiais_total: get(primary, InstrumentId::Aiais)?.total,
        distress_total: get(primary, InstrumentId::Distress)?.total,
        friend_messages: friend.map(|m| m.messages),
        friend_words_per_message: friend.map(|m| m.words_per_message),
        friend_mean_seconds_per_turn: friend.map(|m| m.mean_seconds_per_turn),
        friend_median_seconds_per_turn: friend.map(|m| m.median_seconds_per_turn),
        friend_duration_seconds: friend.map(|m| m.duration_seconds),
        main_messages: main.messages,
        main_words_per_message: main.words_per_message,
        main_mean_seconds_per_turn: main.mean_seconds_per_turn,
        main_median_seconds_per_turn: main.median_seconds_per_turn,
        main_duration_seconds: main.duration_seconds,
        ssp_fallback: (s.condition == Condition::SCS).then(|| s.ssp.as_ref().is_some_and(|o| o.fallback)),
        has_followup: s.wave == Wave::Primary && has_followup,
    })
}

/// Composites need at least two rows in the wave; otherwise they stay empty.
fn fill_composites(rows: &mut [DatasetRow], wave: Wave) -> Result<(), DatasetError> {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].wave == wave).collect();
    if idx.len() < 2 {
        return Ok(());
    }
    let motivation: Vec<Vec<f64>> =
        idx.iter().map(|&i| vec![rows[i].cmots_intrinsic, rows[i].cmots_identified]).collect();
    let acceptance: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let r = &rows[i];
            vec![
                r.utaut_performance_expectancy,
                r.utaut_effort_expectancy,
                r.utaut_behavioral_intention,
                r.utaut_attitude,
            ]
        })
        .collect();
    let m = zscore_composite(&motivation)?;
    let a = zscore_composite(&acceptance)?;
    for (k, &i) in idx.iter().enumerate() {
        rows[i].motivation_z = Some(m[k]);
        rows[i].acceptance_z = Some(a[k]);
    }
    Ok(())
}

pub fn write_csv<W: Write>(rows: &[DatasetRow], out: W) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn to_csv_string(rows: &[DatasetRow]) -> Result<String, DatasetError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Reads an export back. The header must match [`HEADER`] exactly.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if !header.iter().eq(HEADER.iter().copied()) {
        return Err(DatasetError::Schema(format!(
            "header mismatch: expected {} columns starting {:?}, got {:?}",
            HEADER.len(),
            &HEADER[..3],
            header.iter().take(3).collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e| DatasetError::Schema(format!("row {}: {e}", i + 1)))?);
    }
    Ok(rows)
}

mod fixed6 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:.6}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

mod fixed6_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_str(&format!("{v:.6}")),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<f64>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pid: &str) -> DatasetRow {
        DatasetRow {
            participant_id: pid.into(),
            wave: Wave::Primary,
            condition: Condition::SCX,
            gender: Gender::NonBinary,
            age: 31,
            believability: Some(4),
            believability_group: Some(BelievabilityGroup::High),
            tweets_total: 21.0,
            tweets_cognitive: 11.0,
            tweets_emotional: 10.0,
            ues_fa: 3.333333,
            ues_pu: 4.0,
            ues_ae: 3.0,
            ues_rw: 3.666667,
            ues_total: 14.0,
            cmots_intrinsic: 9.0,
            cmots_identified: 10.0,
            utaut_performance_expectancy: 5.0,
            utaut_effort_expectancy: 11.0,
            utaut_behavioral_intention: 4.0,
            utaut_attitude: 6.0,
            motivation_z: Some(-0.25),
            acceptance_z: None,
            ails_total: 60.0,
            aiais_total: 25.0,
            distress_total: 7.0,
            friend_messages: Some(11),
            friend_words_per_message: Some(8.5),
            friend_mean_seconds_per_turn: Some(31.25),
            friend_median_seconds_per_turn: Some(30.0),
            friend_duration_seconds: Some(600.0),
            main_messages: 13,
            main_words_per_message: 9.0,
            main_mean_seconds_per_turn: 28.0,
            main_median_seconds_per_turn: 27.5,
            main_duration_seconds: 700.0,
            ssp_fallback: None,
            has_followup: false,
        }
    }

    #[test]
    fn header_matches_serialized_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row("P0001")).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut b = row("P0002");
        b.wave = Wave::Followup;
        b.friend_messages = None;
        b.friend_words_per_message = None;
        let text = to_csv_string(&[row("P0001"), b]).unwrap();
        assert!(text.contains(",3.333333,"));
        assert!(text.contains(",-0.250000,,"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(to_csv_string(&back).unwrap(), text);
    }

    #[test]
    fn wrong_header_is_schema_error() {
        let text = "participant_id,wave\nP0001,primary\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(DatasetError::Schema(_))));
    }

    #[test]
    fn empty_state_has_nothing_to_export() {
        assert!(matches!(build_dataset(&State::default(), None), Err(DatasetError::NoCompletedSessions)));
    }
}
