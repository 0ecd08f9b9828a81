//! Best-effort import of NIR release files into the canonical corpus schema.
//!
//! The upstream layout is not fixed, so the converter accepts two record
//! shapes found in `.json` / `.jsonl` files anywhere under the source
//! directory:
//!
//! * pair records: one object per story pair carrying both stories, each
//!   given as text, a sentence list, or an object with `sentences` and
//!   `triples`/`events`;
//! * instance records: one object per annotated event with a pair id, the
//!   side it comes from (`A`/`B`, `pre`/`post`), the triple and its label.
//!   Instance records are grouped by pair id.
//!
//! Field names are matched against small alias lists. Anything that cannot
//! be interpreted is skipped and listed in the [`ConversionReport`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use super::{
    write_corpus, Corpus, CorpusError, Direction, EventTriple, EventType, Story, StoryPair,
    StoryRole,
};
use crate::text::collapse_whitespace;

const PAIR_ID_KEYS: &[&str] = &["pair_id", "pair", "story_pair_id", "script_id", "sid", "id", "story_id"];
const PRE_KEYS: &[&str] = &["pre", "pre_story", "pre_retold", "story_a", "a", "original", "story1"];
const POST_KEYS: &[&str] = &["post", "post_story", "post_retold", "story_b", "b", "retold", "story2"];
const TRIPLE_LIST_KEYS: &[&str] = &["triples", "events", "event_triples"];
const SENTENCE_KEYS: &[&str] = &["sentences", "sents"];
const TEXT_KEYS: &[&str] = &["text", "story", "content"];
const SUBJECT_KEYS: &[&str] = &["subject", "subj", "s", "arg0"];
const PREDICATE_KEYS: &[&str] = &["predicate", "pred", "relation", "verb", "p"];
const OBJECT_KEYS: &[&str] = &["object", "obj", "o", "arg1"];
const TRIPLE_KEYS: &[&str] = &["triple", "event", "event_triple", "spo"];
const LABEL_KEYS: &[&str] = &["label", "gold_label", "event_type", "type", "tag"];
const SIDE_KEYS: &[&str] = &["side", "target", "source", "direction", "story_side", "from"];
const SENTENCE_INDEX_KEYS: &[&str] = &["sentence_index", "sent_idx", "sentence_id", "sent_id"];
const SENTENCE_TEXT_KEYS: &[&str] = &["sentence", "target_sentence", "query"];
const TRIPLE_ID_KEYS: &[&str] = &["triple_id", "event_id", "eid"];
const REFERENCE_KEYS: &[&str] = &["reference", "reference_story", "ref_story"];

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConversionReport {
    pub files_recognized: Vec<String>,
    pub pair_count: usize,
    pub triple_count: usize,
    /// Gold-labelled triples per event type, in CST/INC/ADD/FGT/UFG order.
    pub class_counts: BTreeMap<String, usize>,
    pub unlabeled_triples: usize,
    pub skipped: Vec<SkippedRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedRecord {
    pub file: String,
    pub record: usize,
    pub reason: String,
}

/// Convert every recognizable NIR file under `src` into one canonical corpus
/// written to `dst`.
pub fn convert_nir(src: impl AsRef<Path>, dst: impl AsRef<Path>) -> Result<ConversionReport, CorpusError> {
    let (corpus, report) = convert_nir_dir(src.as_ref())?;
    write_corpus(&corpus, dst)?;
    Ok(report)
}

/// Conversion without writing, for callers that want the corpus in memory.
pub fn convert_nir_dir(src: &Path) -> Result<(Corpus, ConversionReport), CorpusError> {
    if !src.is_dir() {
        return Err(CorpusError::Conversion(format!(
            "{} is not a directory",
            src.display()
        )));
    }
    let mut files = Vec::new();
    collect_files(src, &mut files)?;
    files.sort();

    let mut report = ConversionReport::default();
    let mut builder = PairBuilder::default();
    for file in &files {
        let name = file
            .strip_prefix(src)
            .unwrap_or(file)
            .display()
            .to_string();
        let records = match read_records(file) {
            Some(records) if !records.is_empty() => records,
            _ => continue,
        };
        let mut recognized = false;
        for (i, record) in records.iter().enumerate() {
            let outcome = match record {
                Value::Object(obj) => builder.ingest(obj, &mut report.notes),
                _ => Err("record is not a JSON object".to_string()),
            };
            match outcome {
                Ok(()) => recognized = true,
                Err(reason) => report.skipped.push(SkippedRecord {
                    file: name.clone(),
                    record: i,
                    reason,
                }),
            }
        }
        if recognized {
            report.files_recognized.push(name);
        }
    }

    if report.files_recognized.is_empty() {
        return Err(CorpusError::Conversion(format!(
            "zero recognized NIR files under {} ({} candidate files, {} skipped records)",
            src.display(),
            files.len(),
            report.skipped.len()
        )));
    }

    let mut pairs = Vec::new();
    for pair in builder.finish() {
        match pair.validate() {
            Ok(()) => pairs.push(pair),
            Err(e) => report.skipped.push(SkippedRecord {
                file: "<assembled>".into(),
                record: 0,
                reason: format!("pair {} failed validation: {e}", pair.pair_id),
            }),
        }
    }

    for ty in EventType::ALL {
        report.class_counts.insert(ty.to_string(), 0);
    }
    for pair in &pairs {
        for triple in pair.pre.triples.iter().chain(&pair.post.triples) {
            report.triple_count += 1;
            match triple.gold_label {
                Some(label) => *report.class_counts.entry(label.to_string()).or_default() += 1,
                None => report.unlabeled_triples += 1,
            }
        }
    }
    report.pair_count = pairs.len();
    Ok((Corpus::new(pairs), report))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("json") | Some("jsonl")
        ) {
            out.push(path);
        }
    }
    Ok(())
}

fn read_records(path: &Path) -> Option<Vec<Value>> {
    let text = fs::read_to_string(path).ok()?;
    if let Ok(value) = serde_json::from_str::<Value>(&text) {
        return Some(match value {
            Value::Array(items) => items,
            Value::Object(obj) => {
                let nested = ["data", "instances", "pairs", "records", "stories"]
                    .iter()
                    .find_map(|k| obj.get(*k).and_then(Value::as_array).cloned());
                match nested {
                    Some(items) => items,
                    None => vec![Value::Object(obj)],
                }
            }
            _ => Vec::new(),
        });
    }
    // JSON lines
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(serde_json::from_str(line).ok()?);
    }
    Some(records)
}

fn lookup<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| {
        obj.iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(k))
            .map(|(_, v)| v)
    })
}

fn as_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let at_boundary = matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if at_boundary {
            let s = collapse_whitespace(&current);
            if !s.is_empty() {
                out.push(s);
            }
            current.clear();
        }
    }
    let s = collapse_whitespace(&current);
    if !s.is_empty() {
        out.push(s);
    }
    out
}

#[derive(Default)]
struct PartialStory {
    sentences: Vec<String>,
    triples: Vec<EventTriple>,
}

impl PartialStory {
    fn sentence_slot(&mut self, text: Option<&str>) -> usize {
        match text.map(collapse_whitespace) {
            Some(t) if !t.is_empty() => {
                if let Some(i) = self.sentences.iter().position(|s| *s == t) {
                    i
                } else {
                    self.sentences.push(t);
                    self.sentences.len() - 1
                }
            }
            _ => {
                if self.sentences.is_empty() {
                    self.sentences.push(String::new());
                }
                0
            }
        }
    }
}

#[derive(Default)]
struct PairBuilder {
    order: Vec<String>,
    pairs: BTreeMap<String, (PartialStory, PartialStory)>,
}

impl PairBuilder {
    fn slot(&mut self, pair_id: &str) -> &mut (PartialStory, PartialStory) {
        if !self.pairs.contains_key(pair_id) {
            self.order.push(pair_id.to_string());
        }
        self.pairs.entry(pair_id.to_string()).or_default()
    }

    fn ingest(&mut self, obj: &Map<String, Value>, notes: &mut Vec<String>) -> Result<(), String> {
        let pair_id = lookup(obj, PAIR_ID_KEYS)
            .and_then(as_text)
            .ok_or("no pair identifier field")?;
        let pre = lookup(obj, PRE_KEYS);
        let post = lookup(obj, POST_KEYS);
        if let (Some(pre), Some(post)) = (pre, post) {
            if is_story_value(pre) && is_story_value(post) {
                return self.ingest_pair(&pair_id, pre, post, notes);
            }
        }
        self.ingest_instance(&pair_id, obj, notes)
    }

    fn ingest_pair(&mut self, pair_id: &str, pre: &Value, post: &Value, notes: &mut Vec<String>) -> Result<(), String> {
        let pre_story = parse_story(pair_id, "A", pre, notes)?;
        let post_story = parse_story(pair_id, "B", post, notes)?;
        let slot = self.slot(pair_id);
        merge_story(&mut slot.0, pre_story);
        merge_story(&mut slot.1, post_story);
        Ok(())
    }

    fn ingest_instance(&mut self, pair_id: &str, obj: &Map<String, Value>, notes: &mut Vec<String>) -> Result<(), String> {
        let label_text = lookup(obj, LABEL_KEYS).and_then(as_text);
        let label = match &label_text {
            Some(t) => Some(EventType::parse_loose(t).ok_or_else(|| format!("unknown label `{t}`"))?),
            None => None,
        };
        let side = match lookup(obj, SIDE_KEYS).and_then(as_text) {
            Some(s) => Direction::parse(&s).ok_or_else(|| format!("unknown side `{s}`"))?,
            None => match label {
                Some(l) if l.allowed_for(Direction::TargetIsPre) => Direction::TargetIsPre,
                Some(_) => Direction::TargetIsPost,
                None => return Err("neither side nor label present".into()),
            },
        };
        let (subject, predicate, object) = triple_slots(obj).ok_or("no recognizable triple")?;
        let triple_id_hint = lookup(obj, TRIPLE_ID_KEYS).and_then(as_text);
        let sentence_text = lookup(obj, SENTENCE_TEXT_KEYS).and_then(as_text);
        let sentence_index = lookup(obj, SENTENCE_INDEX_KEYS).and_then(Value::as_u64);
        let reference = lookup(obj, REFERENCE_KEYS).cloned();

        let slot = self.slot(pair_id);
        let (target, other) = match side {
            Direction::TargetIsPre => (&mut slot.0, &mut slot.1),
            Direction::TargetIsPost => (&mut slot.1, &mut slot.0),
        };
        if other.sentences.is_empty() {
            if let Some(text) = reference.as_ref().and_then(story_sentences) {
                other.sentences = text;
            }
        }
        let index = match sentence_index {
            Some(i) if (i as usize) < target.sentences.len() => i as usize,
            _ => target.sentence_slot(sentence_text.as_deref()),
        };
        let triple_id = triple_id_hint.unwrap_or_else(|| format!("e{}", target.triples.len() + 1));
        if object.is_none() {
            notes.push(format!("{pair_id}/{triple_id}: object absent"));
        }
        target.triples.push(EventTriple {
            triple_id,
            subject,
            predicate,
            object,
            sentence_index: index,
            gold_label: label,
        });
        Ok(())
    }

    fn finish(self) -> Vec<StoryPair> {
        let mut pairs = self.pairs;
        self.order
            .into_iter()
            .filter_map(|id| {
                let (pre, post) = pairs.remove(&id)?;
                Some(StoryPair {
                    pre: finish_story(&id, "A", StoryRole::PreRetold, pre),
                    post: finish_story(&id, "B", StoryRole::PostRetold, post),
                    pair_id: id,
                })
            })
            .collect()
    }
}

fn finish_story(pair_id: &str, side: &str, role: StoryRole, partial: PartialStory) -> Story {
    let mut sentences = partial.sentences;
    if sentences.is_empty() && !partial.triples.is_empty() {
        sentences.push(String::new());
    }
    Story {
        story_id: format!("{pair_id}-{side}"),
        role,
        sentences,
        triples: dedupe_ids(partial.triples),
        coref: None,
    }
}

fn dedupe_ids(mut triples: Vec<EventTriple>) -> Vec<EventTriple> {
    let mut seen = std::collections::HashSet::new();
    for (i, t) in triples.iter_mut().enumerate() {
        if !seen.insert(t.triple_id.clone()) {
            t.triple_id = format!("{}#{}", t.triple_id, i + 1);
            seen.insert(t.triple_id.clone());
        }
    }
    triples
}

fn merge_story(into: &mut PartialStory, from: PartialStory) {
    if into.sentences.is_empty() {
        into.sentences = from.sentences;
        into.triples.extend(from.triples);
    } else {
        for mut t in from.triples {
            let text = from.sentences.get(t.sentence_index).cloned();
            t.sentence_index = into.sentence_slot(text.as_deref());
            into.triples.push(t);
        }
    }
}

fn is_story_value(v: &Value) -> bool {
    matches!(v, Value::String(_) | Value::Array(_) | Value::Object(_))
}

fn story_sentences(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::String(s) => Some(split_sentences(s)),
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(as_text)
                .map(|s| collapse_whitespace(&s))
                .collect(),
        ),
        Value::Object(obj) => {
            if let Some(list) = lookup(obj, SENTENCE_KEYS) {
                story_sentences(list)
            } else {
                lookup(obj, TEXT_KEYS).and_then(story_sentences)
            }
        }
        _ => None,
    }
}

fn parse_story(pair_id: &str, side: &str, v: &Value, notes: &mut Vec<String>) -> Result<PartialStory, String> {
    let sentences = story_sentences(v).ok_or_else(|| format!("story {side} has no text"))?;
    let mut story = PartialStory {
        sentences,
        triples: Vec::new(),
    };
    let Value::Object(obj) = v else {
        return Ok(story);
    };
    let Some(Value::Array(items)) = lookup(obj, TRIPLE_LIST_KEYS) else {
        return Ok(story);
    };
    for (i, item) in items.iter().enumerate() {
        let Some((subject, predicate, object)) = (match item {
            Value::Object(t) => triple_slots(t),
            other => slots_from_array(other),
        }) else {
            notes.push(format!("{pair_id}/{side}: unreadable triple #{i} skipped"));
            continue;
        };
        let t = item.as_object();
        let triple_id = t
            .and_then(|t| lookup(t, TRIPLE_ID_KEYS))
            .and_then(as_text)
            .unwrap_or_else(|| format!("{}{}", side.to_ascii_lowercase(), i + 1));
        let label = t
            .and_then(|t| lookup(t, LABEL_KEYS))
            .and_then(as_text)
            .and_then(|l| EventType::parse_loose(&l));
        let index = match t.and_then(|t| lookup(t, SENTENCE_INDEX_KEYS)).and_then(Value::as_u64) {
            Some(i) if (i as usize) < story.sentences.len() => i as usize,
            _ => {
                let text = t.and_then(|t| lookup(t, SENTENCE_TEXT_KEYS)).and_then(as_text);
                story.sentence_slot(text.as_deref())
            }
        };
        if object.is_none() {
            notes.push(format!("{pair_id}/{triple_id}: object absent"));
        }
        story.triples.push(EventTriple {
            triple_id,
            subject,
            predicate,
            object,
            sentence_index: index,
            gold_label: label,
        });
    }
    Ok(story)
}

type Slots = (String, String, Option<String>);

fn slots_from_array(v: &Value) -> Option<Slots> {
    let items = v.as_array()?;
    let subject = items.first().and_then(as_text)?;
    let predicate = items.get(1).and_then(as_text)?;
    let object = items.get(2).and_then(as_text).filter(|o| !o.trim().is_empty());
    (!subject.trim().is_empty() && !predicate.trim().is_empty()).then_some((subject, predicate, object))
}

fn triple_slots(obj: &Map<String, Value>) -> Option<Slots> {
    if let Some(nested) = lookup(obj, TRIPLE_KEYS) {
        return match nested {
            Value::Object(inner) => triple_slots(inner),
            other => slots_from_array(other),
        };
    }
    let subject = lookup(obj, SUBJECT_KEYS).and_then(as_text)?;
    let predicate = lookup(obj, PREDICATE_KEYS).and_then(as_text)?;
    let object = lookup(obj, OBJECT_KEYS)
        .and_then(as_text)
        .filter(|o| !o.trim().is_empty());
    (!subject.trim().is_empty() && !predicate.trim().is_empty()).then_some((subject, predicate, object))
}
