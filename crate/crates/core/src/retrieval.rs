//! KG-based support-event classifier.
//!
//! Every KG node is scored by cosine similarity against the query sentence
//! (max over its merged surface forms). Nodes at or above the node threshold
//! are key nodes; every triple touching a key node is a candidate; a
//! candidate's score aggregates its node scores, and candidates at or above
//! the triple threshold are the support events. Both thresholds are closed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EventTriple, Story};
use crate::embed::{cosine, embed, EmbedError, EmbeddingProvider};
use crate::graph::{KgTriple, NodeId, PersonalKg};
use crate::text::normalize;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    Config(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
    /// Geometric mean of scores clamped to [0, 1].
    #[serde(rename = "geo")]
    GeometricMeanNonNeg,
}

impl Aggregation {
    pub fn parse(text: &str) -> Option<Aggregation> {
        match text.trim().to_ascii_lowercase().as_str() {
            "mean" => Some(Aggregation::Mean),
            "min" => Some(Aggregation::Min),
            "geo" | "geometric" | "geometric_mean" => Some(Aggregation::GeometricMeanNonNeg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub node_threshold: f64,
    pub triple_threshold: f64,
    pub aggregation: Aggregation,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            node_threshold: 0.5,
            triple_threshold: 0.5,
            aggregation: Aggregation::Mean,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for (name, v) in [
            ("node_threshold", self.node_threshold),
            ("triple_threshold", self.triple_threshold),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(RetrievalError::Config(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

/// Canonical identity of a support event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SupportKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple_id: Option<String>,
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl SupportKey {
    pub fn from_triple(triple: &EventTriple) -> Self {
        SupportKey {
            triple_id: Some(triple.triple_id.clone()),
            subject: normalize(&triple.subject),
            predicate: normalize(&triple.predicate),
            object: triple.object_text().map(normalize).unwrap_or_default(),
        }
    }
}

impl fmt::Display for SupportKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = &self.triple_id {
            write!(f, "{id}:")?;
        }
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

/// Set of support events with set semantics over canonical keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportEventSet(pub BTreeSet<SupportKey>);

impl SupportEventSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keys for the given reference-story triple ids; unknown ids are
    /// returned separately.
    pub fn from_triple_ids<'a>(story: &Story, ids: impl IntoIterator<Item = &'a str>) -> (Self, Vec<String>) {
        let mut set = BTreeSet::new();
        let mut unknown = Vec::new();
        for id in ids {
            match story.triple(id) {
                Some(t) => {
                    set.insert(SupportKey::from_triple(t));
                }
                None => unknown.push(id.to_string()),
            }
        }
        (SupportEventSet(set), unknown)
    }

    pub fn intersection(&self, other: &SupportEventSet) -> SupportEventSet {
        SupportEventSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SupportKey> {
        self.0.iter()
    }

    pub fn triple_ids(&self) -> Vec<&str> {
        self.0.iter().filter_map(|k| k.triple_id.as_deref()).collect()
    }
}

impl FromIterator<SupportKey> for SupportEventSet {
    fn from_iter<I: IntoIterator<Item = SupportKey>>(iter: I) -> Self {
        SupportEventSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNode {
    pub node_id: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub triple_id: String,
    pub score: f64,
    /// Subject, predicate and (when present) object scores.
    pub node_scores: Vec<f64>,
}

/// Every intermediate of one retrieval, for inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub scored_nodes: Vec<ScoredNode>,
    pub key_nodes: Vec<NodeId>,
    pub candidates: Vec<ScoredTriple>,
    pub support: SupportEventSet,
}

/// One score per node: the max cosine between the query and any of the
/// node's surface forms. Ordered by node id.
pub fn score_nodes(kg: &PersonalKg, query_text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<ScoredNode>, RetrievalError> {
    let query = embed(provider, query_text)?;
    let surfaces: Vec<String> = kg
        .nodes
        .iter()
        .flat_map(|n| n.surface_forms.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = provider.embed_batch(&surfaces)?;
    let mut by_surface = BTreeMap::new();
    for (surface, v) in surfaces.iter().zip(&vectors) {
        by_surface.insert(surface.as_str(), cosine(&query, v)?);
    }
    Ok(kg
        .nodes
        .iter()
        .map(|n| ScoredNode {
            node_id: n.node_id,
            score: n
                .surface_forms
                .iter()
                .map(|s| by_surface[s.as_str()])
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}

/// Nodes scoring at least `node_threshold`, order preserved.
pub fn key_nodes(scored: &[ScoredNode], node_threshold: f64) -> Vec<ScoredNode> {
    scored
        .iter()
        .filter(|n| n.score >= node_threshold)
        .cloned()
        .collect()
}

/// Triples containing at least one key node, deduplicated, in triple-id order.
pub fn candidate_triples(kg: &PersonalKg, key: &[ScoredNode]) -> Vec<String> {
    let mut ids = BTreeSet::new();
    for node in key {
        if let Ok(triples) = kg.triples_containing(node.node_id) {
            ids.extend(triples.into_iter().map(|t| t.triple_id.clone()));
        }
    }
    ids.into_iter().collect()
}

/// Combine a triple's node scores. Expects the subject and predicate scores
/// and optionally the object score.
pub fn triple_score(node_scores: &[f64], aggregation: Aggregation) -> f64 {
    debug_assert!(node_scores.len() >= 2, "a triple has at least two nodes");
    let n = node_scores.len() as f64;
    match aggregation {
        Aggregation::Mean => node_scores.iter().sum::<f64>() / n,
        Aggregation::Min => node_scores.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::GeometricMeanNonNeg => {
            let clamped: Vec<f64> = node_scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
            if clamped.contains(&0.0) {
                0.0
            } else {
                (clamped.iter().map(|s| s.ln()).sum::<f64>() / n).exp()
            }
        }
    }
}

fn node_scores_of(triple: &KgTriple, scores: &[ScoredNode]) -> Vec<f64> {
    triple.nodes().map(|id| scores[id.0].score).collect()
}

/// Full retrieval with intermediates.
pub fn retrieve(
    kg: &PersonalKg,
    reference: &Story,
    query_text: &str,
    provider: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> Result<RetrievalOutcome, RetrievalError> {
    cfg.validate()?;
    if kg.nodes.is_empty() {
        return Ok(RetrievalOutcome {
            scored_nodes: Vec::new(),
            key_nodes: Vec::new(),
            candidates: Vec::new(),
            support: SupportEventSet::new(),
        });
    }
    let scored = score_nodes(kg, query_text, provider)?;
    let key = key_nodes(&scored, cfg.node_threshold);
    let candidates: Vec<ScoredTriple> = candidate_triples(kg, &key)
        .into_iter()
        .filter_map(|id| kg.triple(&id))
        .map(|t| {
            let node_scores = node_scores_of(t, &scored);
            ScoredTriple {
                triple_id: t.triple_id.clone(),
                score: triple_score(&node_scores, cfg.aggregation),
                node_scores,
            }
        })
        .collect();
    let passing = candidates
        .iter()
        .filter(|t| t.score >= cfg.triple_threshold)
        .map(|t| t.triple_id.as_str());
    let (support, _) = SupportEventSet::from_triple_ids(reference, passing);
    Ok(RetrievalOutcome {
        key_nodes: key.iter().map(|n| n.node_id).collect(),
        scored_nodes: scored,
        candidates,
        support,
    })
}

/// Support events for `query_text` from the reference story's KG.
pub fn support_events_kg(
    kg: &PersonalKg,
    reference: &Story,
    query_text: &str,
    provider: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> Result<SupportEventSet, RetrievalError> {
    retrieve(kg, reference, query_text, provider, cfg).map(|o| o.support)
}
