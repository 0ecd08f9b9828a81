//! `ger`: convert data, inspect graphs and retrieval, run the pipeline,
//! evaluate and sweep thresholds.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.

mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use ger_core::corpus::{convert_nir, load_corpus, render_query_sentence, Corpus, CorpusError, Direction};
use ger_core::embed::{DeterministicEmbedder, EmbeddingProvider};
use ger_core::eval::{
    align, class_metrics, confusion, contribution_analysis, correction_analysis, emit_report, gold_labels, mcnemar,
    EvalError, EvalReport, ReportFormat, ReportRow,
};
use ger_core::graph::build_kg;
use ger_core::llm::{PromptCatalog, TraceLog};
use ger_core::pipeline::{
    embedder_from_config, load_predictions, save_predictions, Ger, GerConfig, PipelineError, PredictionRecord,
};
use ger_core::retrieval::{retrieve, Aggregation, RetrievalConfig};
use serde_json::json;

use manifest::{file_sha256, providers_of, timestamp, FileDigest, ProviderInfo, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "ger", version, about = "Graph-empowered refinement for personal event recall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Md => ReportFormat::Markdown,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Agg {
    Mean,
    Min,
    Geo,
}

impl From<Agg> for Aggregation {
    fn from(a: Agg) -> Self {
        match a {
            Agg::Mean => Aggregation::Mean,
            Agg::Min => Aggregation::Min,
            Agg::Geo => Aggregation::GeometricMeanNonNeg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Pre,
    Post,
}

impl From<Side> for Direction {
    fn from(s: Side) -> Self {
        match s {
            Side::Pre => Direction::TargetIsPre,
            Side::Post => Direction::TargetIsPost,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert an NIR release directory into the canonical corpus JSON.
    ConvertNir {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the conversion report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export the knowledge graphs of a story pair as JSON.
    BuildKg {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        out: PathBuf,
        /// Only this story (default: both).
        #[arg(long, value_enum)]
        story: Option<Side>,
    },
    /// Show KG retrieval for one query triple.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long)]
        triple: String,
        /// Story the query triple comes from; needed when both stories use the id.
        #[arg(long, value_enum)]
        direction: Option<Side>,
        #[arg(long)]
        tau_node: Option<f64>,
        #[arg(long)]
        tau_triple: Option<f64>,
        #[arg(long, value_enum)]
        agg: Option<Agg>,
        /// Take the embedder and retrieval defaults from a run config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the pipeline over a corpus.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep raw prompts and responses in the predictions.
        #[arg(long)]
        trace_full: bool,
        /// Manifest path (default: <out>.manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Timestamped JSON-lines log of every LLM exchange.
        #[arg(long)]
        trace_log: Option<PathBuf>,
    },
    /// Score predictions against a gold corpus.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        pred_b: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// McNemar's test between --pred and --pred-b.
        #[arg(long)]
        mcnemar: bool,
        /// Use the continuity-corrected McNemar statistic.
        #[arg(long)]
        continuity: bool,
        /// Add the support- and correction-module analyses for --pred.
        #[arg(long)]
        analysis: bool,
        /// Row label for --pred.
        #[arg(long, default_value = "A")]
        name: String,
        /// Row label for --pred-b.
        #[arg(long, default_value = "B")]
        name_b: String,
        /// Check the predictions and gold against a run manifest first.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
    /// Run the pipeline over a grid of retrieval settings; one row per setting.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// start:stop:step, inclusive.
        #[arg(long)]
        tau_node: Option<String>,
        #[arg(long)]
        tau_triple: Option<String>,
        /// Comma-separated list of mean, min, geo.
        #[arg(long)]
        agg: Option<String>,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::ConvertNir { src, out, report } => cmd_convert(&src, &out, report.as_deref()),
        Command::BuildKg { corpus, pair, out, story } => cmd_build_kg(&corpus, &pair, &out, story),
        Command::Retrieve {
            corpus,
            pair,
            triple,
            direction,
            tau_node,
            tau_triple,
            agg,
            config,
        } => cmd_retrieve(&corpus, &pair, &triple, direction, tau_node, tau_triple, agg, config.as_deref()),
        Command::Run {
            corpus,
            config,
            out,
            trace_full,
            manifest,
            trace_log,
        } => cmd_run(&corpus, &config, &out, trace_full, manifest, trace_log.as_deref()),
        Command::Evaluate {
            pred,
            pred_b,
            gold,
            format,
            mcnemar,
            continuity,
            analysis,
            name,
            name_b,
            verify,
        } => cmd_evaluate(EvaluateArgs {
            pred,
            pred_b,
            gold,
            format: format.into(),
            mcnemar,
            continuity,
            analysis,
            name,
            name_b,
            verify,
        }),
        Command::Sweep {
            corpus,
            config,
            tau_node,
            tau_triple,
            agg,
            format,
        } => cmd_sweep(&corpus, &config, tau_node.as_deref(), tau_triple.as_deref(), agg.as_deref(), format.into()),
    }
}

/// Write to stdout; a closed pipe (`ger ... | head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_convert(src: &Path, out: &Path, report_path: Option<&Path>) -> Result<(), CliError> {
    let report = convert_nir(src, out)?;
    let counts: Vec<String> = report.class_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!(
        "{} pairs, {} instances ({} unlabelled); classes: {}",
        report.pair_count,
        report.triple_count,
        report.unlabeled_triples,
        counts.join(", ")
    );
    for s in &report.skipped {
        log::warn!("skipped {}#{}: {}", s.file, s.record, s.reason);
    }
    if let Some(path) = report_path {
        write_json(path, &serde_json::to_value(&report).expect("serializable"))?;
    }
    Ok(())
}

fn find_pair<'c>(corpus: &'c Corpus, pair: &str) -> Result<&'c ger_core::StoryPair, CliError> {
    corpus
        .pair(pair)
        .ok_or_else(|| CliError::Runtime(format!("pair `{pair}` not in corpus")))
}

fn cmd_build_kg(corpus: &Path, pair: &str, out: &Path, story: Option<Side>) -> Result<(), CliError> {
    let corpus = load_corpus(corpus)?;
    let pair = find_pair(&corpus, pair)?;
    let mut graphs = serde_json::Map::new();
    for (name, s) in [("pre", &pair.pre), ("post", &pair.post)] {
        let wanted = match story {
            None => true,
            Some(Side::Pre) => name == "pre",
            Some(Side::Post) => name == "post",
        };
        if wanted {
            let kg = build_kg(s, None).map_err(|e| CliError::Runtime(e.to_string()))?;
            graphs.insert(name.to_string(), serde_json::to_value(&kg).expect("serializable"));
        }
    }
    write_json(out, &json!({"pair_id": pair.pair_id, "graphs": graphs}))
}

#[allow(clippy::too_many_arguments)]
fn cmd_retrieve(
    corpus: &Path,
    pair: &str,
    triple: &str,
    direction: Option<Side>,
    tau_node: Option<f64>,
    tau_triple: Option<f64>,
    agg: Option<Agg>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = load_corpus(corpus)?;
    let pair = find_pair(&corpus, pair)?;
    let (mut cfg, embedder): (RetrievalConfig, Arc<dyn EmbeddingProvider>) = match config {
        Some(path) => {
            let c = GerConfig::load(path)?;
            (c.retrieval, embedder_from_config(&c)?)
        }
        None => (RetrievalConfig::default(), Arc::new(DeterministicEmbedder::new(384))),
    };
    if let Some(t) = tau_node {
        cfg.node_threshold = t;
    }
    if let Some(t) = tau_triple {
        cfg.triple_threshold = t;
    }
    if let Some(a) = agg {
        cfg.aggregation = a.into();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let directions: Vec<Direction> = match direction {
        Some(d) => vec![d.into()],
        None => [Direction::TargetIsPre, Direction::TargetIsPost]
            .into_iter()
            .filter(|d| pair.target(*d).triple(triple).is_some())
            .collect(),
    };
    let direction = match directions.as_slice() {
        [d] => *d,
        [] => return Err(CliError::Runtime(format!("triple `{triple}` not in pair `{}`", pair.pair_id))),
        _ => return Err(CliError::Usage(format!("triple `{triple}` is in both stories; pass --direction"))),
    };
    let query = pair
        .target(direction)
        .triple(triple)
        .ok_or_else(|| CliError::Runtime(format!("triple `{triple}` not in the {direction} story")))?;
    let reference = pair.reference(direction);
    let kg = build_kg(reference, None).map_err(|e| CliError::Runtime(e.to_string()))?;
    let query_text = render_query_sentence(query);
    let outcome =
        retrieve(&kg, reference, &query_text, embedder.as_ref(), &cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let nodes: Vec<_> = outcome
        .scored_nodes
        .iter()
        .map(|n| json!({"node_id": n.node_id, "label": kg.label(n.node_id), "score": n.score}))
        .collect();
    let doc = json!({
        "pair_id": pair.pair_id,
        "triple_id": triple,
        "direction": direction,
        "query": query_text,
        "config": cfg,
        "embedder": {"name": embedder.name(), "model": embedder.model()},
        "scored_nodes": nodes,
        "key_nodes": outcome.key_nodes,
        "candidates": outcome.candidates,
        "support": outcome.support,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable")))
}

fn catalog_hash(cfg: &GerConfig) -> Result<String, CliError> {
    let catalog = match &cfg.prompts.catalog {
        Some(p) => PromptCatalog::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => PromptCatalog::builtin(),
    };
    Ok(catalog.hash().to_string())
}

fn default_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_run(
    corpus_path: &Path,
    config: &Path,
    out: &Path,
    trace_full: bool,
    manifest_path: Option<PathBuf>,
    trace_log: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = GerConfig::load(config)?;
    let corpus = load_corpus(corpus_path)?;
    let trace = match trace_log {
        Some(p) => Some(Arc::new(TraceLog::create(p).map_err(|e| CliError::Runtime(e.to_string()))?)),
        None => None,
    };
    let mut ger = Ger::from_config(&cfg, trace)?;
    ger.trace_full = trace_full;
    let records = ger.run(&corpus)?;
    save_predictions(&records, out)?;

    let failures = records.iter().filter(|r| r.prediction().is_none()).count();
    if failures > 0 {
        log::warn!("{failures} of {} instances failed", records.len());
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_at: timestamp(),
        corpus: FileDigest {
            path: corpus_path.display().to_string(),
            sha256: file_sha256(corpus_path)?,
        },
        predictions_sha256: file_sha256(out)?,
        prompt_catalog_sha256: ger.correction.catalog().hash().to_string(),
        providers: providers_of(&ger),
        embedder: ProviderInfo {
            name: ger.embedder.name().to_string(),
            model: ger.embedder.model().to_string(),
        },
        instances: records.len(),
        failures,
        trace_full,
        config: cfg,
    };
    manifest.save(&manifest_path.unwrap_or_else(|| default_manifest_path(out)))?;
    eprintln!("{} predictions, {failures} failures", records.len());
    Ok(())
}

struct EvaluateArgs {
    pred: PathBuf,
    pred_b: Option<PathBuf>,
    gold: PathBuf,
    format: ReportFormat,
    mcnemar: bool,
    continuity: bool,
    analysis: bool,
    name: String,
    name_b: String,
    verify: Option<PathBuf>,
}

fn report_row(model: &str, records: &[PredictionRecord], gold: &ger_core::eval::LabelMap) -> Result<ReportRow, CliError> {
    let aligned = align(records, gold)?;
    let matrix = confusion(&aligned.predicted, &aligned.gold)?;
    Ok(ReportRow {
        model: model.to_string(),
        metrics: class_metrics(&matrix),
        failed: aligned.failed.len() as u64,
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    if args.mcnemar && args.pred_b.is_none() {
        return Err(CliError::Usage("--mcnemar needs --pred-b".into()));
    }
    if let Some(path) = &args.verify {
        let manifest = RunManifest::load(path)?;
        let problems = manifest.verify(&args.pred, &args.gold, &catalog_hash(&manifest.config)?)?;
        if !problems.is_empty() {
            return Err(CliError::Runtime(format!("manifest check failed: {}", problems.join("; "))));
        }
    }
    let corpus = load_corpus(&args.gold)?;
    let gold = gold_labels(&corpus);
    let records_a = load_predictions(&args.pred)?;
    let mut report = EvalReport {
        rows: vec![report_row(&args.name, &records_a, &gold)?],
        ..EvalReport::default()
    };
    if let Some(path) = &args.pred_b {
        let records_b = load_predictions(path)?;
        report.rows.push(report_row(&args.name_b, &records_b, &gold)?);
        if args.mcnemar {
            let a = align(&records_a, &gold)?;
            let b = align(&records_b, &gold)?;
            // only instances scored in both files
            let both: ger_core::eval::LabelMap = a
                .gold
                .iter()
                .filter(|(k, _)| b.predicted.contains_key(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            let restrict = |m: &ger_core::eval::LabelMap| -> ger_core::eval::LabelMap {
                m.iter().filter(|(k, _)| both.contains_key(*k)).map(|(k, v)| (k.clone(), *v)).collect()
            };
            match mcnemar(&restrict(&a.predicted), &restrict(&b.predicted), &both, args.continuity) {
                Ok(m) => report.mcnemar = Some(m),
                Err(EvalError::DegenerateTest) => log::warn!("no discordant pairs; McNemar's test omitted"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    if args.analysis {
        let preds: Vec<_> = records_a.iter().filter_map(|r| r.prediction()).collect();
        let scored: ger_core::eval::LabelMap =
            preds.iter().filter_map(|p| gold.get(&p.key).map(|g| (p.key.clone(), *g))).collect();
        report.contribution = Some(contribution_analysis(&preds, &scored)?);
        report.correction = Some(correction_analysis(&preds, &scored)?);
    }
    emit(&emit_report(&report, args.format))
}

/// Inclusive `start:stop:step` range, computed as start + i * step.
fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad range `{text}`; expected start:stop:step or a single value"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        [start, stop, step] if *step > 0.0 && stop >= start => {
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn cmd_sweep(
    corpus: &Path,
    config: &Path,
    tau_node: Option<&str>,
    tau_triple: Option<&str>,
    agg: Option<&str>,
    format: ReportFormat,
) -> Result<(), CliError> {
    let cfg = GerConfig::load(config)?;
    let corpus = load_corpus(corpus)?;
    let gold = gold_labels(&corpus);
    let nodes = match tau_node {
        Some(r) => parse_range(r)?,
        None => vec![cfg.retrieval.node_threshold],
    };
    let triples = match tau_triple {
        Some(r) => parse_range(r)?,
        None => vec![cfg.retrieval.triple_threshold],
    };
    let aggs = match agg {
        Some(list) => list
            .split(',')
            .map(|a| Aggregation::parse(a).ok_or_else(|| CliError::Usage(format!("unknown aggregation `{a}`"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![cfg.retrieval.aggregation],
    };
    let mut ger = Ger::from_config(&cfg, None)?;
    let mut report = EvalReport::default();
    for &aggregation in &aggs {
        for &node_threshold in &nodes {
            for &triple_threshold in &triples {
                ger.retrieval = RetrievalConfig {
                    node_threshold,
                    triple_threshold,
                    aggregation,
                };
                ger.retrieval.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                let records = ger.run(&corpus)?;
                let name = serde_json::to_value(aggregation).expect("serializable");
                let model = format!(
                    "node={node_threshold:.3} triple={triple_threshold:.3} agg={}",
                    name.as_str().unwrap_or_default()
                );
                report.rows.push(report_row(&model, &records, &gold)?);
            }
        }
    }
    emit(&emit_report(&report, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        let r = parse_range("0.5:0.7:0.1").unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[2] - 0.7).abs() < 1e-12);
        assert_eq!(parse_range("0.3").unwrap(), vec![0.3]);
        assert!(parse_range("0.7:0.5:0.1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }

    #[test]
    fn manifest_sits_next_to_predictions() {
        assert_eq!(
            default_manifest_path(Path::new("out/pred.jsonl")),
            PathBuf::from("out/pred.jsonl.manifest.json")
        );
    }
}
