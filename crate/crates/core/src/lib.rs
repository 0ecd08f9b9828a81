//! Graph-empowered refinement (GER) for proactive personal information access.
//!
//! Given a pair of lifelog stories (written before and after a delay) and the
//! event triples extracted from them, the pipeline decides for every event in
//! the target story whether it is Consistent, Inconsistent, Additional,
//! Forgotten or Unforgotten with respect to the reference story.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: story pairs, event triples, canonical JSON schema, NIR import
//! - [`graph`]: per-story personal knowledge graph with coreference merging
//! - [`embed`]: embedding providers and cosine similarity
//! - [`retrieval`]: KG-based support-event classifier
//! - [`llm`]: prompt catalog, chat providers, response parsing, caches
//! - [`pipeline`]: base / support / correction / label-mapper orchestration
//! - [`eval`]: confusion matrices, per-class metrics, McNemar's test

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod graph;
pub mod hashing;
pub mod http;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod text;

pub use corpus::{
    Direction, EventTriple, EventType, InstanceKey, QueryInstance, RelevanceLabel, Story, StoryPair,
    StoryRole,
};
pub use graph::PersonalKg;
pub use pipeline::{GerConfig, PipelinePrediction};
pub use retrieval::{RetrievalConfig, SupportEventSet};
