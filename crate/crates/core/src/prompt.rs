//! The five frozen study prompts and their rendering.
//!
//! Templates live in `templates/*.txt` and are embedded verbatim. Rendering
//! substitutes the bracketed placeholders `[name]`, `[chatlog]` and
//! `[SSP result]` in a single left-to-right pass, so text inside a binding is
//! never itself treated as a placeholder. Everything else, including the
//! `<opening>` block and its `<name>` tag reference, stays byte-identical.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::{ChatTranscript, Role};

pub const TEMPLATE_VERSION: &str = "1";

const FRIEND_IN_NEED: &str = include_str!("../templates/friend_in_need.txt");
const SSP_ANALYSIS: &str = include_str!("../templates/ssp_analysis.txt");
const BASELINE: &str = include_str!("../templates/baseline.txt");
const SELF_CLONE_NO_SSP: &str = include_str!("../templates/self_clone_no_ssp.txt");
const SELF_CLONE_SSP: &str = include_str!("../templates/self_clone_ssp.txt");

pub const NAME_PLACEHOLDER: &str = "[name]";
pub const CHATLOG_PLACEHOLDER: &str = "[chatlog]";
pub const SSP_PLACEHOLDER: &str = "[SSP result]";

/// Speaker label for the data-collection friend in serialized chat logs.
pub const FRIEND_SPEAKER: &str = "Andy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    FriendInNeed,
    SspAnalysis,
    Baseline,
    SelfCloneNoSsp,
    SelfCloneSsp,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::FriendInNeed,
        PromptKind::SspAnalysis,
        PromptKind::Baseline,
        PromptKind::SelfCloneNoSsp,
        PromptKind::SelfCloneSsp,
    ];

    pub fn template(self) -> &'static str {
        match self {
            PromptKind::FriendInNeed => FRIEND_IN_NEED,
            PromptKind::SspAnalysis => SSP_ANALYSIS,
            PromptKind::Baseline => BASELINE,
            PromptKind::SelfCloneNoSsp => SELF_CLONE_NO_SSP,
            PromptKind::SelfCloneSsp => SELF_CLONE_SSP,
        }
    }

    /// Stem of the template file under `templates/`.
    pub fn file_stem(self) -> &'static str {
        match self {
            PromptKind::FriendInNeed => "friend_in_need",
            PromptKind::SspAnalysis => "ssp_analysis",
            PromptKind::Baseline => "baseline",
            PromptKind::SelfCloneNoSsp => "self_clone_no_ssp",
            PromptKind::SelfCloneSsp => "self_clone_ssp",
        }
    }

    fn required(self) -> &'static [BindingField] {
        use BindingField::*;
        match self {
            PromptKind::FriendInNeed => &[],
            PromptKind::SspAnalysis => &[Name, Chatlog],
            PromptKind::Baseline => &[Name],
            PromptKind::SelfCloneNoSsp => &[Name, Chatlog],
            PromptKind::SelfCloneSsp => &[Name, Chatlog, SspResult],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingField {
    Name,
    Chatlog,
    SspResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{kind:?} prompt is missing binding {field:?}")]
    MissingBinding { kind: PromptKind, field: BindingField },
    #[error("participant name is empty")]
    EmptyName,
    #[error("participant name may not contain angle brackets")]
    InvalidName,
    #[error("{0:?} has no chat opener")]
    UnsupportedKind(PromptKind),
    #[error("transcript is empty")]
    EmptyTranscript,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBindings {
    pub name: Option<String>,
    pub chatlog: Option<String>,
    pub ssp_result: Option<String>,
}

impl PromptBindings {
    pub fn name(name: impl Into<String>) -> Self {
        Self { name: Some(name.into()), ..Self::default() }
    }

    pub fn with_chatlog(mut self, chatlog: impl Into<String>) -> Self {
        self.chatlog = Some(chatlog.into());
        self
    }

    pub fn with_ssp_result(mut self, ssp: impl Into<String>) -> Self {
        self.ssp_result = Some(ssp.into());
        self
    }

    fn get(&self, field: BindingField) -> Option<&str> {
        match field {
            BindingField::Name => self.name.as_deref(),
            BindingField::Chatlog => self.chatlog.as_deref(),
            BindingField::SspResult => self.ssp_result.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub system_text: String,
    /// First assistant message of the chat; empty for kinds without one.
    pub opening_message: String,
}

impl RenderedPrompt {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.system_text.as_bytes()))
    }
}

/// Trims the name and rejects empty names or names that would break the
/// XML-tag delimiting used by the templates.
pub fn sanitize_name(name: &str) -> Result<String, PromptError> {
    let trimmed = name.trim();
    if trimmed.is_empty() {
        return Err(PromptError::EmptyName);
    }
    if trimmed.contains(['<', '>']) {
        return Err(PromptError::InvalidName);
    }
    Ok(trimmed.to_string())
}

pub fn render_prompt(kind: PromptKind, bindings: &PromptBindings) -> Result<RenderedPrompt, PromptError> {
    for &field in kind.required() {
        match bindings.get(field) {
            None => return Err(PromptError::MissingBinding { kind, field }),
            Some(v) if field != BindingField::Name && v.trim().is_empty() => {
                return Err(PromptError::MissingBinding { kind, field })
            }
            _ => {}
        }
    }
    let name = match kind.required().contains(&BindingField::Name) {
        true => Some(sanitize_name(bindings.name.as_deref().unwrap_or_default())?),
        false => None,
    };
    let system_text = substitute(kind.template(), |placeholder| match placeholder {
        NAME_PLACEHOLDER => name.as_deref(),
        CHATLOG_PLACEHOLDER => bindings.chatlog.as_deref(),
        SSP_PLACEHOLDER => bindings.ssp_result.as_deref(),
        _ => None,
    });
    let opening_message = match (kind, &name) {
        (PromptKind::Baseline | PromptKind::SelfCloneNoSsp | PromptKind::SelfCloneSsp, Some(n)) => {
            opening_message(kind, n)?
        }
        _ => String::new(),
    };
    Ok(RenderedPrompt { kind, system_text, opening_message })
}

fn substitute<'a>(template: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
    const PLACEHOLDERS: [&str; 3] = [NAME_PLACEHOLDER, CHATLOG_PLACEHOLDER, SSP_PLACEHOLDER];
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find('[') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match PLACEHOLDERS.iter().find(|p| tail.starts_with(**p)).and_then(|p| lookup(p).map(|v| (p, v))) {
            Some((p, value)) => {
                out.push_str(value);
                rest = &tail[p.len()..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Text of the template's `<opening>` block with the `<name>` reference
/// replaced by the participant's name.
pub fn opening_message(kind: PromptKind, name: &str) -> Result<String, PromptError> {
    if matches!(kind, PromptKind::FriendInNeed | PromptKind::SspAnalysis) {
        return Err(PromptError::UnsupportedKind(kind));
    }
    let name = sanitize_name(name)?;
    let template = kind.template();
    let start = template.rfind("<opening>").expect("main templates carry an opening") + "<opening>".len();
    let end = template.rfind("</opening>").expect("opening block is closed");
    Ok(template[start..end].trim().replace("<name>", &name))
}

/// One line per message, `Speaker: text`. Participant turns carry the
/// participant's name and the friend's turns carry [`FRIEND_SPEAKER`];
/// embedded line breaks collapse to single spaces.
pub fn serialize_chatlog(transcript: &ChatTranscript, participant_name: &str) -> Result<String, PromptError> {
    if transcript.is_empty() {
        return Err(PromptError::EmptyTranscript);
    }
    let name = sanitize_name(participant_name)?;
    let lines: Vec<String> = transcript
        .messages
        .iter()
        .filter(|m| m.role != Role::System)
        .map(|m| {
            let speaker = if m.role == Role::User { name.as_str() } else { FRIEND_SPEAKER };
            format!("{speaker}: {}", flatten_line(&m.text))
        })
        .collect();
    Ok(lines.join("\n"))
}

fn flatten_line(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_was_break = false;
    for ch in text.chars() {
        if ch == '\n' || ch == '\r' {
            if !last_was_break {
                out.push(' ');
            }
            last_was_break = true;
        } else {
            out.push(ch);
            last_was_break = false;
        }
    }
    out
}

/// SHA-256 over every template, recorded with sessions and reports.
pub fn template_fixture_hash() -> String {
    let mut hasher = Sha256::new();
    hasher.update(TEMPLATE_VERSION.as_bytes());
    for kind in PromptKind::ALL {
        hasher.update(kind.file_stem().as_bytes());
        hasher.update([0u8]);
        hasher.update(kind.template().as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

pub fn residual_placeholders(text: &str) -> Vec<&'static str> {
    [NAME_PLACEHOLDER, CHATLOG_PLACEHOLDER, SSP_PLACEHOLDER]
        .into_iter()
        .filter(|p| text.contains(p))
        .collect()
}

/// The template a rendered system text came from, judged by the template
/// text before its first placeholder.
pub fn detect_kind(system_text: &str) -> Option<PromptKind> {
    PromptKind::ALL.into_iter().find(|k| {
        let t = k.template();
        let head = &t[..t.find('[').unwrap_or(t.len())];
        system_text.starts_with(head)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ChatMessage;

    fn full() -> PromptBindings {
        PromptBindings::name("Alex").with_chatlog("Alex: hi").with_ssp_result("**Early Segment** x")
    }

    #[test]
    fn friend_prompt_needs_nothing() {
        let p = render_prompt(PromptKind::FriendInNeed, &PromptBindings::default()).unwrap();
        assert!(p
            .system_text
            .starts_with("You are Andy, a distressed friend experiencing symptoms of imposter syndrome"));
        assert!(p.opening_message.is_empty());
    }

    #[test]
    fn baseline_embeds_name() {
        let p = render_prompt(PromptKind::Baseline, &PromptBindings::name("Alex")).unwrap();
        assert!(p.system_text.starts_with("You are an assistant created to provide mental health support"));
        assert!(p.system_text.contains("<name> Alex </name>"));
        assert!(!p.system_text.contains("<conversation>"));
        assert_eq!(p.opening_message, "Hey Alex! What's been troubling you lately?");
    }

    #[test]
    fn missing_ssp_result() {
        let b = PromptBindings::name("Alex").with_chatlog("Alex: hi");
        assert_eq!(
            render_prompt(PromptKind::SelfCloneSsp, &b),
            Err(PromptError::MissingBinding { kind: PromptKind::SelfCloneSsp, field: BindingField::SspResult })
        );
    }

    #[test]
    fn empty_chatlog_counts_as_missing() {
        let b = PromptBindings::name("Alex").with_chatlog("  ");
        assert!(matches!(render_prompt(PromptKind::SspAnalysis, &b), Err(PromptError::MissingBinding { .. })));
    }

    #[test]
    fn names_are_trimmed_and_checked() {
        let p = render_prompt(PromptKind::Baseline, &PromptBindings::name("  Alex ")).unwrap();
        assert!(p.system_text.contains("<name> Alex </name>"));
        assert_eq!(render_prompt(PromptKind::Baseline, &PromptBindings::name(" ")), Err(PromptError::EmptyName));
        assert_eq!(render_prompt(PromptKind::Baseline, &PromptBindings::name("<b>")), Err(PromptError::InvalidName));
    }

    #[test]
    fn no_residual_placeholders_for_any_kind() {
        for kind in PromptKind::ALL {
            let p = render_prompt(kind, &full()).unwrap();
            assert!(residual_placeholders(&p.system_text).is_empty(), "{kind:?}");
        }
    }

    #[test]
    fn bindings_are_not_rescanned() {
        let b = PromptBindings::name("Alex").with_chatlog("Alex: my [name] is [SSP result]");
        let p = render_prompt(PromptKind::SelfCloneNoSsp, &b).unwrap();
        assert!(p.system_text.contains("<conversation> Alex: my [name] is [SSP result] </conversation>"));
    }

    #[test]
    fn openers() {
        assert_eq!(opening_message(PromptKind::Baseline, "Alex").unwrap(), "Hey Alex! What's been troubling you lately?");
        let clone = opening_message(PromptKind::SelfCloneNoSsp, "Alex").unwrap();
        assert!(clone.contains("I am an AI version of you that has been created from your data!"));
        assert!(clone.starts_with("Hey Alex! This might sound a bit strange, but I'm you - from the future!"));
        assert_eq!(clone, opening_message(PromptKind::SelfCloneSsp, "Alex").unwrap());
        assert_eq!(opening_message(PromptKind::SspAnalysis, "Alex"), Err(PromptError::UnsupportedKind(PromptKind::SspAnalysis)));
        assert_eq!(opening_message(PromptKind::FriendInNeed, "Alex"), Err(PromptError::UnsupportedKind(PromptKind::FriendInNeed)));
    }

    #[test]
    fn chatlog_lines() {
        let t = ChatTranscript::from_messages(vec![
            ChatMessage::assistant("Hey, got a minute?", 0),
            ChatMessage::user("sure,\nwhat's up?\r\n", 10),
        ]);
        let s = serialize_chatlog(&t, "Alex").unwrap();
        assert_eq!(s, "Andy: Hey, got a minute?\nAlex: sure, what's up? ");
        assert_eq!(s, serialize_chatlog(&t, "Alex").unwrap());
        assert_eq!(serialize_chatlog(&ChatTranscript::new(), "Alex"), Err(PromptError::EmptyTranscript));
    }

    #[test]
    fn rendering_is_pure() {
        for kind in PromptKind::ALL {
            assert_eq!(render_prompt(kind, &full()), render_prompt(kind, &full()));
        }
        assert_eq!(template_fixture_hash(), template_fixture_hash());
        assert_eq!(template_fixture_hash().len(), 64);
    }

    #[test]
    fn detects_kind_of_rendered_text() {
        for kind in PromptKind::ALL {
            let rendered = render_prompt(kind, &full()).unwrap();
            assert_eq!(detect_kind(&rendered.system_text), Some(kind));
        }
        assert_eq!(detect_kind("hello"), None);
    }
}
