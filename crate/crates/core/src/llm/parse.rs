//! Extraction of labels and ids from free-form model replies.
//!
//! Templates ask for a final `ANSWER:` line. Parsers look at the text after
//! the last answer marker first and fall back to the whole reply; within
//! that span the last whole-word match wins.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::LlmError;
use crate::corpus::RelevanceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:answer|ids?)\s*:").unwrap())
}

fn relevance_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(irrelevant|relevant)\b").unwrap())
}

fn consistency_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(inconsistent|consistent)\b").unwrap())
}

/// Text after the last answer marker, if any.
fn after_marker(text: &str) -> Option<&str> {
    answer_marker().find_iter(text).last().map(|m| &text[m.end()..])
}

fn last_token(re: &Regex, text: &str) -> Option<String> {
    let span = after_marker(text)
        .filter(|tail| re.is_match(tail))
        .unwrap_or(text);
    re.captures_iter(span)
        .last()
        .map(|c| c[1].to_ascii_lowercase())
}

pub fn parse_relevance(text: &str) -> Result<RelevanceLabel, LlmError> {
    match last_token(relevance_re(), text).as_deref() {
        Some("irrelevant") => Ok(RelevanceLabel::Irrelevant),
        Some(_) => Ok(RelevanceLabel::Relevant),
        None => Err(LlmError::Parse(format!("no relevance label in `{}`", snippet(text)))),
    }
}

pub fn parse_consistency(text: &str) -> Result<Consistency, LlmError> {
    match last_token(consistency_re(), text).as_deref() {
        Some("inconsistent") => Ok(Consistency::Inconsistent),
        Some(_) => Ok(Consistency::Consistent),
        None => Err(LlmError::Parse(format!("no consistency label in `{}`", snippet(text)))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportIds {
    pub ids: BTreeSet<usize>,
    pub warnings: Vec<String>,
}

/// Parse the event numbers selected by the support classifier. Numbers not
/// in `valid_ids` are dropped with a warning. A reply of `none` (with or
/// without a marker) is the empty selection.
pub fn parse_support_ids(text: &str, valid_ids: &BTreeSet<usize>) -> Result<SupportIds, LlmError> {
    static NONE: OnceLock<Regex> = OnceLock::new();
    static NUM: OnceLock<Regex> = OnceLock::new();
    let none = NONE.get_or_init(|| Regex::new(r"(?i)^\W*(none|no events?|nothing)\b").unwrap());
    let num = NUM.get_or_init(|| Regex::new(r"\d+").unwrap());

    let span = match after_marker(text) {
        Some(tail) => tail.lines().find(|l| !l.trim().is_empty()).unwrap_or(""),
        None if none.is_match(text.trim()) => return Ok(SupportIds::default()),
        None => {
            return Err(LlmError::Parse(format!(
                "no answer marker in `{}`",
                snippet(text)
            )))
        }
    };
    let mut out = SupportIds::default();
    if none.is_match(span.trim()) {
        return Ok(out);
    }
    for m in num.find_iter(span) {
        match m.as_str().parse::<usize>() {
            Ok(id) if valid_ids.contains(&id) => {
                out.ids.insert(id);
            }
            _ => out
                .warnings
                .push(format!("support id {} is not a listed event; dropped", m.as_str())),
        }
    }
    Ok(out)
}

fn snippet(text: &str) -> String {
    let t: String = text.chars().take(80).collect();
    if t.len() < text.len() {
        format!("{t}...")
    } else {
        t
    }
}
