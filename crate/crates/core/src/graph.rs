//! Personal knowledge graph built from one story's event triples.
//!
//! Subjects, predicates and objects become nodes; every event triple becomes
//! an edge group linking its nodes. Nodes with the same role and the same
//! normalized surface are one node. Coreference clusters additionally merge
//! same-role subject/object surfaces into one node and put all linked
//! subject/object nodes into one cluster. Predicates are only ever merged by
//! exact match.
//!
//! Node ids are assigned after merging, in order of `(role, smallest surface)`,
//! so building from any permutation of the triples yields the same graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Story;
use crate::text::normalize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("coreference mention `{text}` references sentence {sentence_index}, story has {sentence_count}")]
    Coref {
        text: String,
        sentence_index: usize,
        sentence_count: usize,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Subject,
    Predicate,
    Object,
}

/// One mention inside a coreference cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_index: usize,
    pub text: String,
}

/// Mention clusters for one story. Clusters are expected to be disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorefMap {
    pub clusters: Vec<Vec<Mention>>,
}

impl CorefMap {
    pub fn new(clusters: Vec<Vec<Mention>>) -> Self {
        CorefMap { clusters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgNode {
    pub node_id: NodeId,
    /// Normalized (trimmed, whitespace-collapsed, case-folded) surfaces.
    pub surface_forms: BTreeSet<String>,
    pub role: NodeRole,
    pub cluster_id: ClusterId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgTriple {
    pub triple_id: String,
    pub subject: NodeId,
    pub predicate: NodeId,
    pub object: Option<NodeId>,
    pub sentence_index: usize,
}

impl KgTriple {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        [Some(self.subject), Some(self.predicate), self.object]
            .into_iter()
            .flatten()
    }
}

/// Immutable KG over one story. Triples are sorted by `triple_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalKg {
    pub story_id: String,
    pub nodes: Vec<KgNode>,
    pub triples: Vec<KgTriple>,
}

type SlotKey = (NodeRole, String);

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Build the KG for `story`. When `coref` is `None` the story's own `coref`
/// annotation is used if present; pass `Some(&CorefMap::default())` to force
/// exact-match merging only.
pub fn build_kg(story: &Story, coref: Option<&CorefMap>) -> Result<PersonalKg, GraphError> {
    let coref = coref.or(story.coref.as_ref());

    // Distinct (role, surface) keys in sorted order.
    let mut keys: BTreeSet<SlotKey> = BTreeSet::new();
    for t in &story.triples {
        keys.insert((NodeRole::Subject, normalize(&t.subject)));
        keys.insert((NodeRole::Predicate, normalize(&t.predicate)));
        if let Some(o) = t.object_text() {
            keys.insert((NodeRole::Object, normalize(o)));
        }
    }
    let keys: Vec<SlotKey> = keys.into_iter().collect();
    let index: HashMap<&SlotKey, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();

    // node_uf merges same-role surfaces; cluster_uf links subject/object
    // surfaces across roles.
    let mut node_uf = UnionFind::new(keys.len());
    let mut cluster_uf = UnionFind::new(keys.len());

    if let Some(coref) = coref {
        for cluster in &coref.clusters {
            let mut members: Vec<usize> = Vec::new();
            for mention in cluster {
                if mention.sentence_index >= story.sentences.len() {
                    return Err(GraphError::Coref {
                        text: mention.text.clone(),
                        sentence_index: mention.sentence_index,
                        sentence_count: story.sentences.len(),
                    });
                }
                let surface = normalize(&mention.text);
                for t in story
                    .triples
                    .iter()
                    .filter(|t| t.sentence_index == mention.sentence_index)
                {
                    if normalize(&t.subject) == surface {
                        members.push(index[&(NodeRole::Subject, surface.clone())]);
                    }
                    if t.object_text().map(normalize).as_deref() == Some(surface.as_str()) {
                        members.push(index[&(NodeRole::Object, surface.clone())]);
                    }
                }
            }
            for pair in members.windows(2) {
                cluster_uf.union(pair[0], pair[1]);
            }
            for role in [NodeRole::Subject, NodeRole::Object] {
                let same: Vec<usize> = members.iter().copied().filter(|&m| keys[m].0 == role).collect();
                for pair in same.windows(2) {
                    node_uf.union(pair[0], pair[1]);
                }
            }
        }
    }

    // Root key indices are the minimum member, so iterating keys in sorted
    // order visits nodes in (role, smallest surface) order.
    let mut node_of_root: BTreeMap<usize, NodeId> = BTreeMap::new();
    let mut node_of_key = vec![NodeId(0); keys.len()];
    let mut nodes: Vec<KgNode> = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        let root = node_uf.find(k);
        let id = *node_of_root.entry(root).or_insert_with(|| {
            let id = NodeId(nodes.len());
            nodes.push(KgNode {
                node_id: id,
                surface_forms: BTreeSet::new(),
                role: key.0,
                cluster_id: ClusterId(0),
            });
            id
        });
        nodes[id.0].surface_forms.insert(key.1.clone());
        node_of_key[k] = id;
    }
    let mut cluster_of_root: BTreeMap<usize, ClusterId> = BTreeMap::new();
    let mut next_cluster = 0;
    for (k, &node) in node_of_key.iter().enumerate() {
        let root = cluster_uf.find(k);
        let cluster = *cluster_of_root.entry(root).or_insert_with(|| {
            next_cluster += 1;
            ClusterId(next_cluster - 1)
        });
        nodes[node.0].cluster_id = cluster;
    }

    let mut triples: Vec<KgTriple> = story
        .triples
        .iter()
        .map(|t| {
            let node = |role, text: &str| node_of_key[index[&(role, normalize(text))]];
            KgTriple {
                triple_id: t.triple_id.clone(),
                subject: node(NodeRole::Subject, &t.subject),
                predicate: node(NodeRole::Predicate, &t.predicate),
                object: t.object_text().map(|o| node(NodeRole::Object, o)),
                sentence_index: t.sentence_index,
            }
        })
        .collect();
    triples.sort_by(|a, b| a.triple_id.cmp(&b.triple_id));

    Ok(PersonalKg {
        story_id: story.story_id.clone(),
        nodes,
        triples,
    })
}

impl PersonalKg {
    pub fn node(&self, id: NodeId) -> Option<&KgNode> {
        self.nodes.get(id.0)
    }

    pub fn triple(&self, triple_id: &str) -> Option<&KgTriple> {
        self.triples
            .binary_search_by(|t| t.triple_id.as_str().cmp(triple_id))
            .ok()
            .map(|i| &self.triples[i])
    }

    /// Node holding `surface` in `role`, if any.
    pub fn find_node(&self, role: NodeRole, surface: &str) -> Option<NodeId> {
        let surface = normalize(surface);
        self.nodes
            .iter()
            .find(|n| n.role == role && n.surface_forms.contains(&surface))
            .map(|n| n.node_id)
    }

    /// Triples that reference `id` directly or through any node in its
    /// coreference cluster, ordered by `triple_id`.
    pub fn triples_containing(&self, id: NodeId) -> Result<Vec<&KgTriple>, GraphError> {
        let cluster = self.node(id).ok_or(GraphError::UnknownNode(id))?.cluster_id;
        Ok(self
            .triples
            .iter()
            .filter(|t| t.nodes().any(|n| self.nodes[n.0].cluster_id == cluster))
            .collect())
    }

    /// Human-readable surface for a node (its smallest surface form).
    pub fn label(&self, id: NodeId) -> &str {
        self.nodes[id.0]
            .surface_forms
            .iter()
            .next()
            .map(String::as_str)
            .unwrap_or("")
    }

    pub fn cluster_members(&self, cluster: ClusterId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.cluster_id == cluster)
            .map(|n| n.node_id)
            .collect()
    }
}
