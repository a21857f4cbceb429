//! Messages and transcripts shared by the gateway, orchestrator and metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    /// Milliseconds on the session clock.
    pub sent_at: u64,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>, sent_at: u64) -> Self {
        Self { role, text: text.into(), sent_at }
    }

    pub fn user(text: impl Into<String>, sent_at: u64) -> Self {
        Self::new(Role::User, text, sent_at)
    }

    pub fn assistant(text: impl Into<String>, sent_at: u64) -> Self {
        Self::new(Role::Assistant, text, sent_at)
    }
}

/// Ordered messages of one chat stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub messages: Vec<ChatMessage>,
}

impl ChatTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages(messages: Vec<ChatMessage>) -> Self {
        Self { messages }
    }

    pub fn push(&mut self, message: ChatMessage) {
        self.messages.push(message);
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn user_message_count(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::User).count()
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }

    pub fn is_monotonic(&self) -> bool {
        self.messages.windows(2).all(|w| w[0].sent_at <= w[1].sent_at)
    }
}
