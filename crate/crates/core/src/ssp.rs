//! Social-support profiling: the analysis request, a tolerant parser for the
//! model's two-segment rating, and a canonical re-serialization that is fed
//! back into the SSP self-clone prompt.

use std::fmt;
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{render_prompt, PromptBindings, PromptError, PromptKind, RenderedPrompt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupportType {
    Informational,
    Esteem,
    Emotional,
}

impl SupportType {
    pub const ALL: [SupportType; 3] = [SupportType::Informational, SupportType::Esteem, SupportType::Emotional];

    pub fn label(self) -> &'static str {
        match self {
            SupportType::Informational => "Informational",
            SupportType::Esteem => "Esteem",
            SupportType::Emotional => "Emotional",
        }
    }

    pub fn subcategories(self) -> &'static [&'static str] {
        match self {
            SupportType::Informational => {
                &["suggestions or advice", "referrals", "situational appraisals", "teaching moments"]
            }
            SupportType::Esteem => &["compliments", "validations", "blame relief"],
            SupportType::Emotional => &["sympathy", "understanding or empathy", "encouragement"],
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label().eq_ignore_ascii_case(token))
    }

    /// Canonical spelling of `token` if it belongs to this type.
    fn canonical_subcategory(self, token: &str) -> Option<&'static str> {
        self.subcategories().iter().copied().find(|s| s.eq_ignore_ascii_case(token))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intensity {
    Low,
    High,
}

impl Intensity {
    pub fn label(self) -> &'static str {
        match self {
            Intensity::Low => "Low",
            Intensity::High => "High",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Early,
    Late,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Early => "Early",
            Segment::Late => "Late",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub support: SupportType,
    pub intensity: Intensity,
    /// Canonical lowercase spellings from the type's allowed set.
    pub subcategories: Vec<String>,
    pub none_identified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRating {
    pub segment: Segment,
    pub entries: Vec<SupportEntry>,
}

impl SegmentRating {
    pub fn entry(&self, support: SupportType) -> Option<&SupportEntry> {
        self.entries.iter().find(|e| e.support == support)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SspRating {
    pub early: SegmentRating,
    pub late: SegmentRating,
    pub raw_text: String,
}

/// Equality is structural: `raw_text` is provenance and does not take part.
impl PartialEq for SspRating {
    fn eq(&self, other: &Self) -> bool {
        self.early == other.early && self.late == other.late
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SspError {
    #[error("missing **{0} Segment** marker")]
    MissingSegment(Segment),
    #[error("{0} segment lists no support types")]
    EmptySegment(Segment),
    #[error("unknown support type {0:?}")]
    UnknownSupportType(String),
    #[error("{0:?} support has no subcategory {1:?}")]
    UnknownSubcategory(SupportType, String),
    #[error("intensity {0:?} is neither low nor high")]
    UnparsableIntensity(String),
    #[error("{0:?} support rated twice in the {1} segment")]
    DuplicateSupportType(SupportType, Segment),
}

pub fn build_ssp_request(name: &str, chatlog: &str) -> Result<RenderedPrompt, PromptError> {
    render_prompt(PromptKind::SspAnalysis, &PromptBindings::name(name).with_chatlog(chatlog))
}

static EARLY_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\*\*\s*early\s+segment\s*\*\*").unwrap());
static LATE_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\*\*\s*late\s+segment\s*\*\*").unwrap());
static ENTRY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)([A-Za-z]+)\s+support\s*\(\s*([^)]*?)\s*\)\s*:?").unwrap());
static NONE_IDENTIFIED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^none(\s+identified)?$").unwrap());

pub fn parse_ssp_output(text: &str) -> Result<SspRating, SspError> {
    let early = EARLY_MARKER.find(text).ok_or(SspError::MissingSegment(Segment::Early))?;
    let late = LATE_MARKER.find(text).ok_or(SspError::MissingSegment(Segment::Late))?;
    let (early_body, late_body) = if early.start() < late.start() {
        (&text[early.end()..late.start()], &text[late.end()..])
    } else {
        (&text[early.end()..], &text[late.end()..early.start()])
    };
    Ok(SspRating {
        early: parse_segment(Segment::Early, early_body)?,
        late: parse_segment(Segment::Late, late_body)?,
        raw_text: text.to_string(),
    })
}

fn parse_segment(segment: Segment, body: &str) -> Result<SegmentRating, SspError> {
    let heads: Vec<_> = ENTRY.captures_iter(body).collect();
    if heads.is_empty() {
        return Err(SspError::EmptySegment(segment));
    }
    let mut entries: Vec<SupportEntry> = Vec::with_capacity(heads.len());
    for (i, caps) in heads.iter().enumerate() {
        let type_token = &caps[1];
        let support =
            SupportType::from_token(type_token).ok_or_else(|| SspError::UnknownSupportType(type_token.to_string()))?;
        if entries.iter().any(|e| e.support == support) {
            return Err(SspError::DuplicateSupportType(support, segment));
        }
        let intensity = match caps[2].to_ascii_lowercase().as_str() {
            "low" => Intensity::Low,
            "high" => Intensity::High,
            _ => return Err(SspError::UnparsableIntensity(caps[2].to_string())),
        };
        let tail_start = caps.get(0).unwrap().end();
        let tail_end = heads.get(i + 1).map_or(body.len(), |next| next.get(0).unwrap().start());
        let list = body[tail_start..tail_end].trim().trim_end_matches('.').trim();
        let (subcategories, none_identified) = parse_subcategories(support, list)?;
        entries.push(SupportEntry { support, intensity, subcategories, none_identified });
    }
    Ok(SegmentRating { segment, entries })
}

fn parse_subcategories(support: SupportType, list: &str) -> Result<(Vec<String>, bool), SspError> {
    if NONE_IDENTIFIED.is_match(list) {
        return Ok((Vec::new(), true));
    }
    let mut out = Vec::new();
    for token in list.split(',').flat_map(|part| part.split(" and ")) {
        let token = token.trim().trim_end_matches('.').trim();
        let canonical = support
            .canonical_subcategory(token)
            .ok_or_else(|| SspError::UnknownSubcategory(support, token.to_string()))?;
        out.push(canonical.to_string());
    }
    Ok((out, false))
}

/// One line per entry under a bold segment header, e.g.
///
/// ```text
/// **Early Segment**
/// Informational Support (Low): situational appraisals.
/// Esteem Support (High): compliments, validations.
/// ```
pub fn canonical_ssp_text(rating: &SspRating) -> String {
    let mut out = String::new();
    for (i, seg) in [&rating.early, &rating.late].into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("**{} Segment**", seg.segment));
        for e in &seg.entries {
            let list = if e.none_identified { "None identified".to_string() } else { e.subcategories.join(", ") };
            out.push_str(&format!("\n{} Support ({}): {}.", e.support.label(), e.intensity.label(), list));
        }
    }
    out
}

/// Neutral rating used when the model's output cannot be parsed.
pub fn fallback_rating() -> SspRating {
    let segment = |segment| SegmentRating {
        segment,
        entries: SupportType::ALL
            .into_iter()
            .map(|support| SupportEntry {
                support,
                intensity: Intensity::Low,
                subcategories: Vec::new(),
                none_identified: true,
            })
            .collect(),
    };
    let mut rating = SspRating { early: segment(Segment::Early), late: segment(Segment::Late), raw_text: String::new() };
    rating.raw_text = canonical_ssp_text(&rating);
    rating
}

/// A valid rating with a random subset of types per segment, random
/// intensities and random non-empty subcategory lists.
pub fn random_rating<R: Rng + ?Sized>(rng: &mut R) -> SspRating {
    let mut segment = |segment| {
        let mut types = SupportType::ALL.to_vec();
        types.shuffle(rng);
        types.truncate(rng.random_range(1..=3));
        let entries = types
            .into_iter()
            .map(|support| {
                let none_identified = rng.random_bool(0.2);
                let subcategories = if none_identified {
                    Vec::new()
                } else {
                    let all = support.subcategories();
                    let k = rng.random_range(1..=all.len());
                    all.choose_multiple(rng, k).map(|s| s.to_string()).collect()
                };
                let intensity = if rng.random_bool(0.5) { Intensity::High } else { Intensity::Low };
                SupportEntry { support, intensity, subcategories, none_identified }
            })
            .collect();
        SegmentRating { segment, entries }
    };
    let early = segment(Segment::Early);
    let late = segment(Segment::Late);
    let mut rating = SspRating { early, late, raw_text: String::new() };
    rating.raw_text = canonical_ssp_text(&rating);
    rating
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "**Early Segment** \nInformational Support (Low): situational appraisals. Esteem Support (High): compliments, validations. Emotional Support (High): understanding or empathy, encouragement.\n\n**Late Segment** Informational Support (Low): None identified. Esteem Support (High): compliments. Emotional Support (High): encouragement.";

    #[test]
    fn sample_structure() {
        let r = parse_ssp_output(SAMPLE).unwrap();
        let info = r.early.entry(SupportType::Informational).unwrap();
        assert_eq!(info.intensity, Intensity::Low);
        assert_eq!(info.subcategories, ["situational appraisals"]);
        assert_eq!(r.early.entry(SupportType::Esteem).unwrap().subcategories, ["compliments", "validations"]);
        assert_eq!(
            r.early.entry(SupportType::Emotional).unwrap().subcategories,
            ["understanding or empathy", "encouragement"]
        );
        let late_info = r.late.entry(SupportType::Informational).unwrap();
        assert!(late_info.none_identified && late_info.subcategories.is_empty());
        assert_eq!(late_info.intensity, Intensity::Low);
        assert_eq!(r.late.entry(SupportType::Emotional).unwrap().subcategories, ["encouragement"]);
        assert_eq!(r.raw_text, SAMPLE);
    }

    #[test]
    fn canonical_round_trip_of_sample() {
        let r = parse_ssp_output(SAMPLE).unwrap();
        let text = canonical_ssp_text(&r);
        assert_eq!(parse_ssp_output(&text).unwrap(), r);
        assert_eq!(canonical_ssp_text(&parse_ssp_output(&text).unwrap()), text);
    }

    #[test]
    fn case_and_punctuation_drift() {
        let text = "**early segment**\nesteem support (HIGH): Compliments and Blame Relief\n**LATE SEGMENT** emotional support (low): sympathy";
        let r = parse_ssp_output(text).unwrap();
        assert_eq!(r.early.entries[0].subcategories, ["compliments", "blame relief"]);
        assert_eq!(r.late.entries[0].intensity, Intensity::Low);
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_ssp_output("**Early Segment** Esteem Support (High): compliments."),
            Err(SspError::MissingSegment(Segment::Late))
        );
        assert_eq!(
            parse_ssp_output("**Early Segment** Esteem Support (Medium): compliments. **Late Segment** Esteem Support (High): compliments."),
            Err(SspError::UnparsableIntensity("Medium".into()))
        );
        assert_eq!(
            parse_ssp_output("**Early Segment** Esteem Support (High): hugs. **Late Segment** Esteem Support (High): compliments."),
            Err(SspError::UnknownSubcategory(SupportType::Esteem, "hugs".into()))
        );
        assert_eq!(
            parse_ssp_output("**Early Segment** Esteem Support (High): referrals. **Late Segment** Esteem Support (High): compliments."),
            Err(SspError::UnknownSubcategory(SupportType::Esteem, "referrals".into()))
        );
        assert_eq!(
            parse_ssp_output("**Early Segment** Tangible Support (High): money. **Late Segment** Esteem Support (High): compliments."),
            Err(SspError::UnknownSupportType("Tangible".into()))
        );
        assert_eq!(parse_ssp_output("**Early Segment** **Late Segment**"), Err(SspError::EmptySegment(Segment::Early)));
    }

    #[test]
    fn fallback_is_all_low_none() {
        let f = fallback_rating();
        let text = canonical_ssp_text(&f);
        assert_eq!(text.matches("(Low): None identified.").count(), 6);
        assert_eq!(parse_ssp_output(&text).unwrap(), f);
    }

    #[test]
    fn request_embeds_name_and_chatlog() {
        let req = build_ssp_request("Alex", "Alex: hi").unwrap();
        assert!(req.system_text.contains("<name> Alex </name>"));
        assert!(req.system_text.contains("<conversation> Alex: hi </conversation>"));
        assert!(req.system_text.contains("Assign a rating of low or high"));
        assert!(matches!(build_ssp_request("Alex", ""), Err(PromptError::MissingBinding { .. })));
    }
}
