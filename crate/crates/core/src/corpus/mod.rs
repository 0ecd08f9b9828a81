//! Paired-story corpora: the canonical JSON schema, validation and
//! expansion of story pairs into classification instances.
//!
//! A corpus file looks like
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "pairs": [{
//!     "pair_id": "p1",
//!     "pre":  { "story_id": "p1-A", "role": "pre_retold",  "sentences": ["..."], "triples": [...] },
//!     "post": { "story_id": "p1-B", "role": "post_retold", "sentences": ["..."], "triples": [...] }
//!   }]
//! }
//! ```
//!
//! Each triple carries `triple_id`, `subject`, `predicate`, optional `object`,
//! `sentence_index` and optional `gold_label`. A story may carry `coref`, a
//! list of mention clusters (see [`crate::graph::CorefMap`]).

pub mod nir;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CorefMap;
use crate::text::collapse_whitespace;

pub use nir::{convert_nir, ConversionReport};

/// Current canonical schema version written by [`write_corpus`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error in pair `{pair_id}` at {field}: {message}")]
    Validation {
        pair_id: String,
        field: String,
        message: String,
    },
    #[error("conversion error: {0}")]
    Conversion(String),
}

impl CorpusError {
    fn invalid(pair_id: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Validation {
            pair_id: pair_id.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }
}

/// The five event types annotated on paired stories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    Consistent,
    Inconsistent,
    Additional,
    Forgotten,
    Unforgotten,
}

impl EventType {
    /// Report column order: CST, INC, ADD, FGT, UFG.
    pub const ALL: [EventType; 5] = [
        EventType::Consistent,
        EventType::Inconsistent,
        EventType::Additional,
        EventType::Forgotten,
        EventType::Unforgotten,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            EventType::Consistent => "CST",
            EventType::Inconsistent => "INC",
            EventType::Additional => "ADD",
            EventType::Forgotten => "FGT",
            EventType::Unforgotten => "UFG",
        }
    }

    /// Whether this type is a valid answer for an event taken from the
    /// story on the given side.
    pub fn allowed_for(self, direction: Direction) -> bool {
        match direction {
            Direction::TargetIsPre => {
                matches!(self, EventType::Forgotten | EventType::Unforgotten)
            }
            Direction::TargetIsPost => matches!(
                self,
                EventType::Consistent | EventType::Inconsistent | EventType::Additional
            ),
        }
    }

    /// Binary collapse used inside the pipeline: events with a related
    /// description in the reference story are relevant.
    pub fn is_relevant(self) -> bool {
        matches!(
            self,
            EventType::Consistent | EventType::Inconsistent | EventType::Unforgotten
        )
    }

    pub fn relevance(self) -> RelevanceLabel {
        RelevanceLabel::from_bool(self.is_relevant())
    }

    /// Case-insensitive parse of a full name or an abbreviation.
    pub fn parse_loose(text: &str) -> Option<EventType> {
        let t = text.trim().to_ascii_lowercase();
        EventType::ALL.into_iter().find(|ty| {
            t == format!("{ty:?}").to_ascii_lowercase() || t == ty.abbreviation().to_ascii_lowercase()
        })
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Binary working label: does the reference story describe the event?
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelevanceLabel {
    Relevant,
    Irrelevant,
}

impl RelevanceLabel {
    pub fn from_bool(relevant: bool) -> Self {
        if relevant {
            RelevanceLabel::Relevant
        } else {
            RelevanceLabel::Irrelevant
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            RelevanceLabel::Relevant => RelevanceLabel::Irrelevant,
            RelevanceLabel::Irrelevant => RelevanceLabel::Relevant,
        }
    }
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryRole {
    /// Written at time t (story A).
    PreRetold,
    /// Retold at time t + d (story B).
    PostRetold,
}

/// Which story the query triple comes from. The other story is the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "pre")]
    TargetIsPre,
    #[serde(rename = "post")]
    TargetIsPost,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TargetIsPre => "pre",
            Direction::TargetIsPost => "post",
        }
    }

    pub fn parse(text: &str) -> Option<Direction> {
        match text.trim().to_ascii_lowercase().as_str() {
            "pre" | "a" | "target_is_pre" => Some(Direction::TargetIsPre),
            "post" | "b" | "target_is_post" => Some(Direction::TargetIsPost),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTriple {
    pub triple_id: String,
    pub subject: String,
    pub predicate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<EventType>,
}

impl EventTriple {
    pub fn new(
        triple_id: impl Into<String>,
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: Option<&str>,
        sentence_index: usize,
    ) -> Self {
        EventTriple {
            triple_id: triple_id.into(),
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.map(str::to_string),
            sentence_index,
            gold_label: None,
        }
    }

    pub fn with_gold(mut self, label: EventType) -> Self {
        self.gold_label = Some(label);
        self
    }

    /// The object slot, treating blank strings as absent.
    pub fn object_text(&self) -> Option<&str> {
        self.object.as_deref().filter(|o| !o.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub story_id: String,
    pub role: StoryRole,
    pub sentences: Vec<String>,
    pub triples: Vec<EventTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coref: Option<CorefMap>,
}

impl Story {
    pub fn triple(&self, triple_id: &str) -> Option<&EventTriple> {
        self.triples.iter().find(|t| t.triple_id == triple_id)
    }

    /// Story text as one paragraph.
    pub fn text(&self) -> String {
        collapse_whitespace(&self.sentences.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryPair {
    pub pair_id: String,
    pub pre: Story,
    pub post: Story,
}

impl StoryPair {
    pub fn target(&self, direction: Direction) -> &Story {
        match direction {
            Direction::TargetIsPre => &self.pre,
            Direction::TargetIsPost => &self.post,
        }
    }

    pub fn reference(&self, direction: Direction) -> &Story {
        match direction {
            Direction::TargetIsPre => &self.post,
            Direction::TargetIsPost => &self.pre,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let id = &self.pair_id;
        if self.pre.role != StoryRole::PreRetold {
            return Err(CorpusError::invalid(id, "pre.role", "expected pre_retold"));
        }
        if self.post.role != StoryRole::PostRetold {
            return Err(CorpusError::invalid(id, "post.role", "expected post_retold"));
        }
        for (side, story, direction) in [
            ("pre", &self.pre, Direction::TargetIsPre),
            ("post", &self.post, Direction::TargetIsPost),
        ] {
            let mut seen = HashSet::new();
            for triple in &story.triples {
                let at = format!("{side}.triples[{}]", triple.triple_id);
                if !seen.insert(triple.triple_id.as_str()) {
                    return Err(CorpusError::invalid(id, at, "duplicate triple_id"));
                }
                if triple.subject.trim().is_empty() {
                    return Err(CorpusError::invalid(id, at, "empty subject"));
                }
                if triple.predicate.trim().is_empty() {
                    return Err(CorpusError::invalid(id, at, "empty predicate"));
                }
                if triple.sentence_index >= story.sentences.len() {
                    return Err(CorpusError::invalid(
                        id,
                        at,
                        format!(
                            "sentence_index {} out of range ({} sentences)",
                            triple.sentence_index,
                            story.sentences.len()
                        ),
                    ));
                }
                if let Some(label) = triple.gold_label {
                    if !label.allowed_for(direction) {
                        return Err(CorpusError::invalid(
                            id,
                            at,
                            format!("gold label {label} not allowed in the {side} story"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub schema_version: u32,
    pub pairs: Vec<StoryPair>,
}

impl Corpus {
    pub fn new(pairs: Vec<StoryPair>) -> Self {
        Corpus {
            schema_version: SCHEMA_VERSION,
            pairs,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = HashSet::new();
        for pair in &self.pairs {
            if !ids.insert(pair.pair_id.as_str()) {
                return Err(CorpusError::invalid(&pair.pair_id, "pair_id", "duplicate pair_id"));
            }
            pair.validate()?;
        }
        Ok(())
    }

    pub fn pair(&self, pair_id: &str) -> Option<&StoryPair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    /// Every classification instance in corpus order.
    pub fn instances(&self) -> Vec<QueryInstance<'_>> {
        self.pairs.iter().flat_map(instances_of).collect()
    }
}

/// Parse and validate a corpus from JSON text.
pub fn parse_corpus(json: &str) -> Result<Corpus, CorpusError> {
    let corpus: Corpus =
        serde_json::from_str(json).map_err(|e| CorpusError::Schema(e.to_string()))?;
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let json =
        serde_json::to_string_pretty(corpus).map_err(|e| CorpusError::Schema(e.to_string()))?;
    fs::write(path, json + "\n").map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Identity of one classification instance across predictions and gold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub pair_id: String,
    pub triple_id: String,
    pub direction: Direction,
}

impl InstanceKey {
    pub fn new(pair_id: impl Into<String>, triple_id: impl Into<String>, direction: Direction) -> Self {
        InstanceKey {
            pair_id: pair_id.into(),
            triple_id: triple_id.into(),
            direction,
        }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.pair_id, self.direction, self.triple_id)
    }
}

/// One target-story event to classify against the reference story.
#[derive(Debug, Clone)]
pub struct QueryInstance<'a> {
    pub pair_id: &'a str,
    pub query: &'a EventTriple,
    pub query_text: String,
    pub reference: &'a Story,
    pub direction: Direction,
    pub gold_label: Option<EventType>,
}

impl QueryInstance<'_> {
    pub fn key(&self) -> InstanceKey {
        InstanceKey::new(self.pair_id, &self.query.triple_id, self.direction)
    }
}

/// Expand a pair into one instance per pre-story triple (reference: post
/// story) followed by one per post-story triple (reference: pre story).
pub fn instances_of(pair: &StoryPair) -> Vec<QueryInstance<'_>> {
    [Direction::TargetIsPre, Direction::TargetIsPost]
        .into_iter()
        .flat_map(|direction| {
            let reference = pair.reference(direction);
            pair.target(direction)
                .triples
                .iter()
                .map(move |query| QueryInstance {
                    pair_id: &pair.pair_id,
                    query,
                    query_text: render_query_sentence(query),
                    reference,
                    direction,
                    gold_label: query.gold_label,
                })
        })
        .collect()
}

/// Render a triple as a sentence: slots joined by single spaces, first
/// character uppercased, terminal period appended. An absent object is
/// omitted.
pub fn render_query_sentence(triple: &EventTriple) -> String {
    let mut parts = vec![
        collapse_whitespace(&triple.subject),
        collapse_whitespace(&triple.predicate),
    ];
    if let Some(object) = triple.object_text() {
        parts.push(collapse_whitespace(object));
    }
    let joined = parts
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    let mut chars = joined.chars();
    let mut sentence = match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect::<String>(),
        None => String::new(),
    };
    if !sentence.ends_with('.') {
        sentence.push('.');
    }
    sentence
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(role: StoryRole, sentences: &[&str], triples: Vec<EventTriple>) -> Story {
        Story {
            story_id: format!("{role:?}"),
            role,
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
            triples,
            coref: None,
        }
    }

    fn zoo_pair() -> StoryPair {
        StoryPair {
            pair_id: "zoo".into(),
            pre: story(
                StoryRole::PreRetold,
                &["Me and my girlfriend went to the zoo.", "We saw some seals."],
                vec![
                    EventTriple::new("a1", "me and my girlfriend", "went to", Some("the zoo"), 0)
                        .with_gold(EventType::Unforgotten),
                    EventTriple::new("a2", "we", "saw", Some("some seals"), 1)
                        .with_gold(EventType::Forgotten),
                ],
            ),
            post: story(
                StoryRole::PostRetold,
                &["I went to the zoo with my girlfriend."],
                vec![EventTriple::new("b1", "I", "went to", Some("the zoo"), 0)
                    .with_gold(EventType::Consistent)],
            ),
        }
    }

    #[test]
    fn renders_query_sentences() {
        let t = EventTriple::new("t", "I", "go to", Some("my sitting room"), 0);
        assert_eq!(render_query_sentence(&t), "I go to my sitting room.");
        let t = EventTriple::new("t", "me and my girlfriend", "went to", Some("the zoo"), 0);
        assert_eq!(render_query_sentence(&t), "Me and my girlfriend went to the zoo.");
        let t = EventTriple::new("t", "I", "slept", None, 0);
        assert_eq!(render_query_sentence(&t), "I slept.");
        let t = EventTriple::new("t", "  I ", " went \t to", Some("  the   zoo "), 0);
        assert_eq!(render_query_sentence(&t), "I went to the zoo.");
    }

    #[test]
    fn blank_object_is_absent() {
        let t = EventTriple::new("t", "I", "slept", Some("   "), 0);
        assert_eq!(render_query_sentence(&t), "I slept.");
    }

    #[test]
    fn instances_cover_both_directions() {
        let pair = zoo_pair();
        let inst = instances_of(&pair);
        assert_eq!(inst.len(), 3);
        assert_eq!(
            inst.iter().filter(|i| i.direction == Direction::TargetIsPre).count(),
            2
        );
        let zoo = &inst[0];
        assert_eq!(zoo.query.triple_id, "a1");
        assert_eq!(zoo.reference.role, StoryRole::PostRetold);
        assert_eq!(zoo.query_text, "Me and my girlfriend went to the zoo.");
        assert_eq!(inst[2].reference.role, StoryRole::PreRetold);
    }

    #[test]
    fn empty_post_story_yields_only_pre_instances() {
        let mut pair = zoo_pair();
        pair.post.triples.clear();
        let inst = instances_of(&pair);
        assert_eq!(inst.len(), 2);
        assert!(inst.iter().all(|i| i.direction == Direction::TargetIsPre));
    }

    #[test]
    fn rejects_out_of_range_sentence_index() {
        let mut pair = zoo_pair();
        pair.pre.sentences = vec!["a".into(), "b".into(), "c".into()];
        pair.pre.triples[1].sentence_index = 7;
        match pair.validate() {
            Err(CorpusError::Validation { pair_id, field, .. }) => {
                assert_eq!(pair_id, "zoo");
                assert!(field.contains("a2"), "{field}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_gold_label_on_wrong_side() {
        let mut pair = zoo_pair();
        pair.post.triples[0].gold_label = Some(EventType::Forgotten);
        assert!(matches!(pair.validate(), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn rejects_duplicate_triple_ids_and_empty_slots() {
        let mut pair = zoo_pair();
        pair.pre.triples[1].triple_id = "a1".into();
        assert!(pair.validate().is_err());
        let mut pair = zoo_pair();
        pair.pre.triples[0].predicate = "  ".into();
        assert!(pair.validate().is_err());
    }

    #[test]
    fn rejects_swapped_roles() {
        let mut pair = zoo_pair();
        std::mem::swap(&mut pair.pre.role, &mut pair.post.role);
        assert!(pair.validate().is_err());
    }

    #[test]
    fn schema_errors_are_reported() {
        assert!(matches!(parse_corpus("{"), Err(CorpusError::Schema(_))));
        assert!(matches!(
            parse_corpus(r#"{"schema_version": 1}"#),
            Err(CorpusError::Schema(_))
        ));
        assert!(matches!(
            parse_corpus(r#"{"schema_version": 99, "pairs": []}"#),
            Err(CorpusError::Schema(_))
        ));
    }

    #[test]
    fn event_type_helpers() {
        assert_eq!(EventType::parse_loose("fgt"), Some(EventType::Forgotten));
        assert_eq!(EventType::parse_loose(" Consistent "), Some(EventType::Consistent));
        assert_eq!(EventType::parse_loose("other"), None);
        let relevant: Vec<_> = EventType::ALL.into_iter().filter(|t| t.is_relevant()).collect();
        assert_eq!(
            relevant,
            [EventType::Consistent, EventType::Inconsistent, EventType::Unforgotten]
        );
    }
}
