//! Behavioural engagement measures computed from a chat transcript.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatTranscript, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralMetrics {
    pub user_message_count: usize,
    pub avg_words_per_message: f64,
    pub mean_seconds_per_turn: f64,
    pub median_seconds_per_turn: f64,
    pub total_duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("transcript has no user messages")]
    EmptyTranscript,
    #[error("timestamps decrease at message {0}")]
    NonMonotonicTimestamps(usize),
}

/// Words are whitespace-separated tokens of user messages. A turn lasts from
/// the latest assistant message to the user's reply; user messages with no
/// earlier assistant message have no turn time.
pub fn behavioral_metrics(transcript: &ChatTranscript) -> Result<BehavioralMetrics, MetricsError> {
    let messages = &transcript.messages;
    if let Some(i) = messages.windows(2).position(|w| w[1].sent_at < w[0].sent_at) {
        return Err(MetricsError::NonMonotonicTimestamps(i + 1));
    }
    let mut words = 0usize;
    let mut count = 0usize;
    let mut gaps = Vec::new();
    let mut last_assistant: Option<u64> = None;
    for m in messages {
        match m.role {
            Role::Assistant => last_assistant = Some(m.sent_at),
            Role::User => {
                count += 1;
                words += m.text.split_whitespace().count();
                if let Some(t) = last_assistant {
                    gaps.push((m.sent_at - t) as f64 / 1000.0);
                }
            }
            Role::System => {}
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyTranscript);
    }
    let total_ms = messages.last().unwrap().sent_at - messages[0].sent_at;
    Ok(BehavioralMetrics {
        user_message_count: count,
        avg_words_per_message: words as f64 / count as f64,
        mean_seconds_per_turn: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
        median_seconds_per_turn: median(&mut gaps),
        total_duration_seconds: total_ms as f64 / 1000.0,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
