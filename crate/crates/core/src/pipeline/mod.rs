//! Orchestration of the four modules for every query instance:
//!
//! 1. base: an initial relevance label, from a chat model or a predictions file;
//! 2. support: KG retrieval and an LLM classifier, fused by intersection;
//! 3. correction: keep agreeing labels, otherwise rethink or explore;
//! 4. label mapper: relevance back to an event type for the instance's direction.
//!
//! Each prediction carries a trace of the steps that produced it.

mod config;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    instances_of, render_query_sentence, Corpus, CorpusError, Direction, EventType, InstanceKey,
    QueryInstance, Story,
};
use crate::embed::{CachedEmbedder, DeterministicEmbedder, EmbeddingProvider, RemoteEmbedder};
use crate::graph::{build_kg, PersonalKg};
use crate::llm::{
    parse_consistency, parse_relevance, parse_support_ids, Bindings, ChatProvider, Consistency,
    LlmClient, LlmError, MockChat, MockScript, OpenAiChat, PrecomputedLabelSource, PromptCatalog,
    ResponseCache, TemplateId, TraceLog,
};
use crate::retrieval::{support_events_kg, RetrievalConfig, SupportEventSet};

pub use crate::corpus::RelevanceLabel;
pub use config::{
    BaseSection, BaseSourceKind, CacheSection, DiscriminatorFallback, DiscriminatorSection,
    EmbeddingSection, GerConfig, PromptSection, ProviderRef, ProviderSection, RunSection,
    SupportSection,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionBranch {
    Agree,
    Rethink,
    Explore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Base,
    SupportKg,
    SupportLlm,
    SupportOracle,
    Correction,
    Discriminator,
}

/// One step of an instance's computation. LLM steps log one entry per
/// request, so a retried request shows up twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: Step,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    pub parsed: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl TraceEntry {
    fn local(step: Step, parsed: impl Into<String>, warnings: Vec<String>) -> Self {
        TraceEntry {
            step,
            template: None,
            prompt_hash: None,
            parsed: parsed.into(),
            warnings,
            prompt: None,
            response: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePrediction {
    #[serde(flatten)]
    pub key: InstanceKey,
    pub base_label: RelevanceLabel,
    /// `None` when the source is disabled.
    pub kg_support: Option<SupportEventSet>,
    pub llm_support: Option<SupportEventSet>,
    pub fused_support: SupportEventSet,
    pub support_label: RelevanceLabel,
    pub correction_branch: CorrectionBranch,
    pub final_relevance: RelevanceLabel,
    pub final_event_type: EventType,
    pub trace: Vec<TraceEntry>,
}

impl PipelinePrediction {
    /// Number of requests sent to the correction provider.
    pub fn correction_calls(&self) -> usize {
        self.trace.iter().filter(|t| t.step == Step::Correction).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    #[serde(flatten)]
    pub key: InstanceKey,
    pub failure: String,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionRecord {
    Prediction(Box<PipelinePrediction>),
    Failure(InstanceFailure),
}

impl PredictionRecord {
    pub fn key(&self) -> &InstanceKey {
        match self {
            PredictionRecord::Prediction(p) => &p.key,
            PredictionRecord::Failure(f) => &f.key,
        }
    }

    pub fn prediction(&self) -> Option<&PipelinePrediction> {
        match self {
            PredictionRecord::Prediction(p) => Some(p),
            PredictionRecord::Failure(_) => None,
        }
    }
}

pub fn write_predictions(records: &[PredictionRecord], out: impl Write) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_predictions(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| PipelineError::Io(format!("{}: {e}", path.display()));
    write_predictions(records, File::create(path).map_err(io)?).map_err(io)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, PipelineError> {
    let path = path.as_ref();
    let io = |m: String| PipelineError::Io(format!("{}: {m}", path.display()));
    let file = File::open(path).map_err(|e| io(e.to_string()))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// A mock script that answers every prompt with the gold-derived value:
/// base and correction replies carry the gold relevance, the support
/// classifier selects every reference event for relevant instances and none
/// otherwise, and the discriminator returns the gold Consistent/Inconsistent
/// label. Unlabelled instances are skipped.
pub fn gold_mock_script(corpus: &Corpus) -> MockScript {
    let mut script = MockScript::new();
    for pair in &corpus.pairs {
        for inst in instances_of(pair) {
            let Some(gold) = inst.gold_label else { continue };
            let key = inst.key().to_string();
            let relevance = format!("ANSWER: {}", gold.relevance());
            script.respond(TemplateId::BasePredict, &key, relevance.clone());
            script.respond(TemplateId::Rethink, &key, relevance.clone());
            script.respond(TemplateId::Explore, &key, relevance);
            let ids = match gold.relevance() {
                RelevanceLabel::Relevant if !inst.reference.triples.is_empty() => (1..=inst.reference.triples.len())
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
                _ => "none".to_string(),
            };
            script.respond(TemplateId::SupportClassify, &key, format!("ANSWER: {ids}"));
            if matches!(gold, EventType::Consistent | EventType::Inconsistent) {
                script.respond(TemplateId::ConsistencyDiscriminate, &key, format!("ANSWER: {gold}"));
            }
        }
    }
    script
}

/// The embedding provider named in `cfg`; remote embeddings are cached.
pub fn embedder_from_config(cfg: &GerConfig) -> Result<Arc<dyn EmbeddingProvider>, PipelineError> {
    Ok(match (&cfg.embedding, &cfg.cache.embeddings) {
        (EmbeddingSection::Deterministic { dimension }, _) => Arc::new(DeterministicEmbedder::new(*dimension)),
        (EmbeddingSection::Openai(c), None) => Arc::new(CachedEmbedder::in_memory(RemoteEmbedder::new(c.clone()))),
        (EmbeddingSection::Openai(c), Some(path)) => Arc::new(
            CachedEmbedder::with_file(RemoteEmbedder::new(c.clone()), path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?,
        ),
    })
}

pub enum BaseSource {
    Chat(LlmClient),
    Precomputed(Arc<PrecomputedLabelSource>),
}

pub struct SupportSources {
    pub kg: bool,
    pub llm: Option<LlmClient>,
    /// Replaces both classifiers when set.
    pub ground_truth: Option<Arc<PrecomputedLabelSource>>,
}

/// A configured pipeline, ready to run.
pub struct Ger {
    pub base: BaseSource,
    pub support: SupportSources,
    pub correction: LlmClient,
    pub discriminator: LlmClient,
    pub discriminator_fallback: DiscriminatorFallback,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub retrieval: RetrievalConfig,
    pub workers: usize,
    /// Keep raw prompts and responses in the trace.
    pub trace_full: bool,
}

/// Support-module result for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportOutcome {
    pub kg: Option<SupportEventSet>,
    pub llm: Option<SupportEventSet>,
    pub fused: SupportEventSet,
    pub label: RelevanceLabel,
}

type InstanceResult<T> = Result<T, String>;

/// Reference events numbered from 1 in story order, as shown to the model.
fn numbered_events(reference: &Story) -> String {
    reference
        .triples
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, render_query_sentence(t)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn support_lines(reference: &Story, fused: &SupportEventSet) -> String {
    if fused.is_empty() {
        return "(none)".to_string();
    }
    fused
        .iter()
        .map(|key| {
            let triple = key.triple_id.as_deref().and_then(|id| reference.triple(id));
            match triple {
                Some(t) => match reference.sentences.get(t.sentence_index) {
                    Some(s) => format!("- {} (from: \"{}\")", render_query_sentence(t), s),
                    None => format!("- {}", render_query_sentence(t)),
                },
                None => format!("- {} {} {}", key.subject, key.predicate, key.object),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// KG shared by all instances of one (pair, direction), or the build error.
type SharedKg = Result<Option<Arc<PersonalKg>>, String>;

impl Ger {
    /// Every role served by one chat provider; KG and LLM support enabled,
    /// built-in prompts, default retrieval settings, one worker.
    pub fn with_provider(chat: Arc<dyn ChatProvider>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        let client = LlmClient::new(chat, Arc::new(PromptCatalog::builtin()));
        Ger {
            base: BaseSource::Chat(client.clone()),
            support: SupportSources {
                kg: true,
                llm: Some(client.clone()),
                ground_truth: None,
            },
            correction: client.clone(),
            discriminator: client,
            discriminator_fallback: DiscriminatorFallback::Consistent,
            embedder,
            retrieval: RetrievalConfig::default(),
            workers: 1,
            trace_full: false,
        }
    }

    /// Build providers, caches and sources named in `cfg`.
    pub fn from_config(cfg: &GerConfig, trace_log: Option<Arc<TraceLog>>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let config_err = |e: LlmError| PipelineError::Config(e.to_string());
        let catalog = Arc::new(match &cfg.prompts.catalog {
            Some(path) => PromptCatalog::load(path).map_err(config_err)?,
            None => PromptCatalog::builtin(),
        });
        let cache = match &cfg.cache.chat {
            Some(path) => Some(Arc::new(ResponseCache::open(path).map_err(config_err)?)),
            None => None,
        };
        let client = |name: &str| -> Result<LlmClient, PipelineError> {
            let provider: Arc<dyn ChatProvider> = match &cfg.providers[name] {
                ProviderSection::Openai(c) => Arc::new(OpenAiChat::new(name, c.clone())),
                ProviderSection::Mock { script } => {
                    Arc::new(MockChat::named(name, MockScript::load(script).map_err(config_err)?))
                }
            };
            let mut client = LlmClient::new(provider, catalog.clone());
            if let Some(cache) = &cache {
                client = client.with_cache(cache.clone());
            }
            if let Some(trace) = &trace_log {
                client = client.with_trace(trace.clone());
            }
            Ok(client)
        };
        let precomputed = |path: &Path| -> Result<Arc<PrecomputedLabelSource>, PipelineError> {
            PrecomputedLabelSource::load(path).map(Arc::new).map_err(config_err)
        };

        let base = match cfg.base.source {
            BaseSourceKind::Chat => BaseSource::Chat(client(cfg.base.provider.as_deref().unwrap_or_default())?),
            BaseSourceKind::Precomputed => {
                BaseSource::Precomputed(precomputed(cfg.base.path.as_deref().unwrap_or(Path::new("")))?)
            }
        };
        let support = match &cfg.support.ground_truth {
            Some(path) => SupportSources {
                kg: false,
                llm: None,
                ground_truth: Some(precomputed(path)?),
            },
            None => SupportSources {
                kg: cfg.support.kg,
                llm: match (cfg.support.llm, &cfg.support.provider) {
                    (true, Some(name)) => Some(client(name)?),
                    _ => None,
                },
                ground_truth: None,
            },
        };
        let embedder = embedder_from_config(cfg)?;
        Ok(Ger {
            base,
            support,
            correction: client(&cfg.correction.provider)?,
            discriminator: client(&cfg.discriminator.provider)?,
            discriminator_fallback: cfg.discriminator.fallback,
            embedder,
            retrieval: cfg.retrieval,
            workers: cfg.run.workers,
            trace_full: false,
        })
    }

    fn bindings(inst: &QueryInstance<'_>) -> Bindings {
        let mut b = Bindings::new();
        b.insert("reference_story", inst.reference.text());
        b.insert("query", inst.query_text.clone());
        b
    }

    /// Send a templated request, retrying once with a reminder when the
    /// reply cannot be parsed. Every request is traced.
    #[allow(clippy::too_many_arguments)]
    fn ask<T>(
        &self,
        client: &LlmClient,
        step: Step,
        template: TemplateId,
        bindings: &Bindings,
        key: &str,
        trace: &mut Vec<TraceEntry>,
        parse: impl Fn(&str) -> Result<(T, String, Vec<String>), LlmError>,
    ) -> Result<T, LlmError> {
        let mut last = None;
        for attempt in 0..2 {
            let c = client.complete(template, bindings, Some(key), attempt)?;
            let (outcome, parsed, warnings) = match parse(&c.response) {
                Ok((value, shown, warnings)) => (Ok(value), shown, warnings),
                Err(e) => {
                    let w = e.to_string();
                    (Err(e), "unparsed".to_string(), vec![w])
                }
            };
            trace.push(TraceEntry {
                step,
                template: Some(template),
                prompt_hash: Some(c.prompt_hash),
                parsed,
                warnings,
                prompt: self.trace_full.then_some(c.prompt),
                response: self.trace_full.then_some(c.response),
            });
            match outcome {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("two attempts"))
    }

    fn ask_relevance(
        &self,
        client: &LlmClient,
        step: Step,
        template: TemplateId,
        bindings: &Bindings,
        key: &str,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<RelevanceLabel, LlmError> {
        self.ask(client, step, template, bindings, key, trace, |text| {
            parse_relevance(text).map(|l| (l, l.to_string(), Vec::new()))
        })
    }

    pub fn base_predict(&self, inst: &QueryInstance<'_>, trace: &mut Vec<TraceEntry>) -> InstanceResult<RelevanceLabel> {
        let key = inst.key();
        match &self.base {
            BaseSource::Chat(client) => self
                .ask_relevance(client, Step::Base, TemplateId::BasePredict, &Self::bindings(inst), &key.to_string(), trace)
                .map_err(|e| format!("base: {e}")),
            BaseSource::Precomputed(source) => {
                let label = source.label(&key).map_err(|e| format!("base: {e}"))?;
                trace.push(TraceEntry::local(Step::Base, label.to_string(), Vec::new()));
                Ok(label)
            }
        }
    }

    fn support_llm(&self, client: &LlmClient, inst: &QueryInstance<'_>, trace: &mut Vec<TraceEntry>) -> InstanceResult<SupportEventSet> {
        let reference = inst.reference;
        let mut bindings = Self::bindings(inst);
        bindings.insert("reference_events", numbered_events(reference));
        let valid: BTreeSet<usize> = (1..=reference.triples.len()).collect();
        let ids = self
            .ask(client, Step::SupportLlm, TemplateId::SupportClassify, &bindings, &inst.key().to_string(), trace, |text| {
                parse_support_ids(text, &valid).map(|s| {
                    let shown = s.ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                    (s.ids, shown, s.warnings)
                })
            })
            .map_err(|e| format!("support: {e}"))?;
        let triple_ids = ids.iter().map(|i| reference.triples[i - 1].triple_id.as_str());
        Ok(SupportEventSet::from_triple_ids(reference, triple_ids).0)
    }

    /// Run the enabled support sources and fuse their results.
    pub fn support_predict(
        &self,
        inst: &QueryInstance<'_>,
        kg: Option<&PersonalKg>,
        trace: &mut Vec<TraceEntry>,
    ) -> InstanceResult<SupportOutcome> {
        if let Some(oracle) = &self.support.ground_truth {
            let ids = oracle.support_ids(&inst.key()).map_err(|e| format!("support: {e}"))?;
            let (fused, unknown) = SupportEventSet::from_triple_ids(inst.reference, ids.iter().map(String::as_str));
            let warnings = unknown
                .into_iter()
                .map(|id| format!("gold support id {id} is not in the reference story"))
                .collect();
            trace.push(TraceEntry::local(Step::SupportOracle, fused.triple_ids().join(","), warnings));
            let label = RelevanceLabel::from_bool(!fused.is_empty());
            return Ok(SupportOutcome {
                kg: None,
                llm: None,
                fused,
                label,
            });
        }

        let kg_set = match (self.support.kg, kg) {
            (false, _) => None,
            (true, None) => return Err("support: KG source enabled but no KG was built".to_string()),
            (true, Some(kg)) => {
                let set = support_events_kg(kg, inst.reference, &inst.query_text, self.embedder.as_ref(), &self.retrieval)
                    .map_err(|e| format!("support: {e}"))?;
                trace.push(TraceEntry::local(Step::SupportKg, set.triple_ids().join(","), Vec::new()));
                Some(set)
            }
        };
        let llm_set = match &self.support.llm {
            Some(client) => Some(self.support_llm(client, inst, trace)?),
            None => None,
        };
        let fused = match (&kg_set, &llm_set) {
            (Some(a), Some(b)) => a.intersection(b),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => return Err("support: no support source enabled".to_string()),
        };
        let label = RelevanceLabel::from_bool(!fused.is_empty());
        Ok(SupportOutcome {
            kg: kg_set,
            llm: llm_set,
            fused,
            label,
        })
    }

    /// Reconcile base and support labels. Unparsable replies fall back to
    /// the base label.
    pub fn correct(
        &self,
        inst: &QueryInstance<'_>,
        base: RelevanceLabel,
        support: RelevanceLabel,
        fused: &SupportEventSet,
        trace: &mut Vec<TraceEntry>,
    ) -> InstanceResult<(RelevanceLabel, CorrectionBranch)> {
        let (branch, template) = match (base, support) {
            (b, s) if b == s => return Ok((base, CorrectionBranch::Agree)),
            (RelevanceLabel::Relevant, _) => (CorrectionBranch::Rethink, TemplateId::Rethink),
            (RelevanceLabel::Irrelevant, _) => (CorrectionBranch::Explore, TemplateId::Explore),
        };
        let mut bindings = Self::bindings(inst);
        bindings.insert("support_events", support_lines(inst.reference, fused));
        match self.ask_relevance(&self.correction, Step::Correction, template, &bindings, &inst.key().to_string(), trace) {
            Ok(label) => Ok((label, branch)),
            Err(LlmError::Parse(_)) => {
                if let Some(last) = trace.last_mut() {
                    last.warnings.push(format!("falling back to base label {base}"));
                }
                Ok((base, branch))
            }
            Err(e) => Err(format!("correction: {e}")),
        }
    }

    /// Convert the final relevance label to an event type for the
    /// instance's direction.
    pub fn map_label(
        &self,
        inst: &QueryInstance<'_>,
        relevance: RelevanceLabel,
        trace: &mut Vec<TraceEntry>,
    ) -> InstanceResult<EventType> {
        match (inst.direction, relevance) {
            (Direction::TargetIsPre, RelevanceLabel::Relevant) => Ok(EventType::Unforgotten),
            (Direction::TargetIsPre, RelevanceLabel::Irrelevant) => Ok(EventType::Forgotten),
            (Direction::TargetIsPost, RelevanceLabel::Irrelevant) => Ok(EventType::Additional),
            (Direction::TargetIsPost, RelevanceLabel::Relevant) => {
                let verdict = self.ask(
                    &self.discriminator,
                    Step::Discriminator,
                    TemplateId::ConsistencyDiscriminate,
                    &Self::bindings(inst),
                    &inst.key().to_string(),
                    trace,
                    |text| parse_consistency(text).map(|c| (c, format!("{c:?}"), Vec::new())),
                );
                match verdict {
                    Ok(Consistency::Consistent) => Ok(EventType::Consistent),
                    Ok(Consistency::Inconsistent) => Ok(EventType::Inconsistent),
                    Err(LlmError::Parse(_)) => {
                        let fallback = match self.discriminator_fallback {
                            DiscriminatorFallback::Consistent => EventType::Consistent,
                            DiscriminatorFallback::Inconsistent => EventType::Inconsistent,
                        };
                        if let Some(last) = trace.last_mut() {
                            last.warnings.push(format!("falling back to {fallback}"));
                        }
                        Ok(fallback)
                    }
                    Err(e) => Err(format!("discriminator: {e}")),
                }
            }
        }
    }

    /// All four modules for one instance.
    pub fn predict(&self, inst: &QueryInstance<'_>, kg: Option<&PersonalKg>) -> PredictionRecord {
        let mut trace = Vec::new();
        let outcome = (|| {
            let base = self.base_predict(inst, &mut trace)?;
            let support = self.support_predict(inst, kg, &mut trace)?;
            let (final_relevance, branch) = self.correct(inst, base, support.label, &support.fused, &mut trace)?;
            let event_type = self.map_label(inst, final_relevance, &mut trace)?;
            Ok::<_, String>((base, support, final_relevance, branch, event_type))
        })();
        match outcome {
            Ok((base_label, support, final_relevance, correction_branch, final_event_type)) => {
                PredictionRecord::Prediction(Box::new(PipelinePrediction {
                    key: inst.key(),
                    base_label,
                    kg_support: support.kg,
                    llm_support: support.llm,
                    fused_support: support.fused,
                    support_label: support.label,
                    correction_branch,
                    final_relevance,
                    final_event_type,
                    trace,
                }))
            }
            Err(failure) => PredictionRecord::Failure(InstanceFailure { key: inst.key(), failure }),
        }
    }

    /// Predict every instance of the corpus, in corpus order. Instance
    /// failures are recorded in the output; only setup errors abort.
    pub fn run(&self, corpus: &Corpus) -> Result<Vec<PredictionRecord>, PipelineError> {
        corpus.validate()?;
        let mut work: Vec<(QueryInstance<'_>, SharedKg)> = Vec::new();
        for pair in &corpus.pairs {
            let kg_for = |direction: Direction| -> SharedKg {
                if !self.support.kg || self.support.ground_truth.is_some() {
                    return Ok(None);
                }
                build_kg(pair.reference(direction), None)
                    .map(|kg| Some(Arc::new(kg)))
                    .map_err(|e| format!("kg: {e}"))
            };
            let pre = kg_for(Direction::TargetIsPre);
            let post = kg_for(Direction::TargetIsPost);
            for inst in instances_of(pair) {
                let kg = match inst.direction {
                    Direction::TargetIsPre => pre.clone(),
                    Direction::TargetIsPost => post.clone(),
                };
                work.push((inst, kg));
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
        Ok(pool.install(|| {
            work.par_iter()
                .map(|(inst, kg)| match kg {
                    Ok(kg) => self.predict(inst, kg.as_deref()),
                    Err(e) => PredictionRecord::Failure(InstanceFailure {
                        key: inst.key(),
                        failure: e.clone(),
                    }),
                })
                .collect()
        }))
    }
}
