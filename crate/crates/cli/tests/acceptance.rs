//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each and exits non-zero if any criterion fails.
//!
//! `cargo test -p ger-cli --test acceptance`

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ger_core::corpus::{instances_of, load_corpus, EventTriple, Story, StoryPair, StoryRole};
use ger_core::embed::{cosine, embed, DeterministicEmbedder};
use ger_core::eval::{
    align, chi2_sf_1df, class_metrics, confusion, emit_report, gold_labels, mcnemar_counts, ClassMetric, ClassMetrics,
    EvalReport, LabelMap, ReportFormat, ReportRow,
};
use ger_core::graph::build_kg;
use ger_core::llm::{MockChat, MockScript, TemplateId};
use ger_core::pipeline::{CorrectionBranch, Ger, GerConfig};
use ger_core::retrieval::{support_events_kg, Aggregation, RetrievalConfig, SupportEventSet};
use ger_core::{Direction, EventType, InstanceKey, RelevanceLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned limits and tolerances.
const FAST: Duration = Duration::from_secs(1);
const SLOW: Duration = Duration::from_secs(5);
const MCNEMAR_TOL: f64 = 1e-4;
const MCNEMAR_STAT: f64 = 5.3333;
const MCNEMAR_P: f64 = 0.02092;
const ORACLE_TOL: f64 = 1e-9;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    match result {
        Ok(detail) if elapsed <= limit => Outcome::Pass(format!("{detail} in {elapsed:.2?}")),
        Ok(detail) => Outcome::Fail(format!("{detail} but took {elapsed:.2?} (limit {limit:?})")),
        Err(e) => Outcome::Fail(e),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn story(id: &str, role: StoryRole, triples: Vec<EventTriple>) -> Story {
    let n = triples.iter().map(|t| t.sentence_index + 1).max().unwrap_or(1);
    Story {
        story_id: id.into(),
        role,
        sentences: (0..n).map(|i| format!("Sentence number {i}.")).collect(),
        triples,
        coref: None,
    }
}

fn small_pair() -> StoryPair {
    StoryPair {
        pair_id: "p".into(),
        pre: story(
            "a",
            StoryRole::PreRetold,
            vec![EventTriple::new("a1", "I", "went to", Some("the zoo"), 0)],
        ),
        post: story(
            "b",
            StoryRole::PostRetold,
            vec![EventTriple::new("b1", "we", "saw", Some("seals"), 0)],
        ),
    }
}

fn mock_ger(script: MockScript) -> (Ger, Arc<MockChat>) {
    let mock = Arc::new(MockChat::new(script));
    (Ger::with_provider(mock.clone(), Arc::new(DeterministicEmbedder::new(16))), mock)
}

fn decision_table() -> Check {
    use RelevanceLabel::*;
    let pair = small_pair();
    let inst = &instances_of(&pair)[0];
    let mut cases = 0;
    for base in [Relevant, Irrelevant] {
        for support in [Relevant, Irrelevant] {
            // a parsable reply for each label, then an unparsable one
            for reply in [Some(Relevant), Some(Irrelevant), None] {
                let text = reply.map_or_else(|| "cannot tell".to_string(), |r| format!("ANSWER: {r}"));
                let mut script = MockScript::new();
                script.respond_any(TemplateId::Rethink, text.clone());
                script.respond_any(TemplateId::Explore, text);
                let (ger, mock) = mock_ger(script);
                let got = ger
                    .correct(inst, base, support, &SupportEventSet::new(), &mut Vec::new())
                    .map_err(|e| format!("({base}, {support}): {e}"))?;
                let expected = match (base, support) {
                    (b, s) if b == s => (b, CorrectionBranch::Agree),
                    (Relevant, _) => (reply.unwrap_or(base), CorrectionBranch::Rethink),
                    _ => (reply.unwrap_or(base), CorrectionBranch::Explore),
                };
                ensure(got == expected, || format!("({base}, {support}, {reply:?}): got {got:?}, expected {expected:?}"))?;
                let calls = match (expected.1, reply) {
                    (CorrectionBranch::Agree, _) => 0,
                    (_, Some(_)) => 1,
                    (_, None) => 2,
                };
                ensure(mock.calls() == calls, || format!("({base}, {support}, {reply:?}): {} calls", mock.calls()))?;
                if reply.is_some() {
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} cases exact, parse fallback keeps the base label"))
}

fn label_mapper() -> Check {
    let pair = small_pair();
    let mut combos = 0;
    for inst in &instances_of(&pair) {
        for relevance in [RelevanceLabel::Relevant, RelevanceLabel::Irrelevant] {
            for reply in ["ANSWER: Consistent", "ANSWER: Inconsistent", "unclear"] {
                let mut script = MockScript::new();
                script.respond_any(TemplateId::ConsistencyDiscriminate, reply);
                let (ger, mock) = mock_ger(script);
                let got = ger.map_label(inst, relevance, &mut Vec::new()).map_err(|e| e.to_string())?;
                let expected = match (inst.direction, relevance) {
                    (Direction::TargetIsPre, RelevanceLabel::Relevant) => EventType::Unforgotten,
                    (Direction::TargetIsPre, RelevanceLabel::Irrelevant) => EventType::Forgotten,
                    (Direction::TargetIsPost, RelevanceLabel::Irrelevant) => EventType::Additional,
                    (Direction::TargetIsPost, RelevanceLabel::Relevant) if reply.ends_with("Inconsistent") => {
                        EventType::Inconsistent
                    }
                    (Direction::TargetIsPost, RelevanceLabel::Relevant) => EventType::Consistent,
                };
                ensure(got == expected, || {
                    format!("({}, {relevance}, {reply}): got {got}, expected {expected}", inst.direction)
                })?;
                let asks = inst.direction == Direction::TargetIsPost && relevance == RelevanceLabel::Relevant;
                ensure((mock.calls() > 0) == asks, || format!("discriminator called {} times", mock.calls()))?;
                combos += 1;
            }
        }
    }
    Ok(format!("{combos} combinations exact"))
}

const SUBJECTS: [&str; 5] = ["I", "we", "my sister", "the dog", "our guide"];
const PREDICATES: [&str; 5] = ["went to", "saw", "ate", "bought", "photographed"];
const OBJECTS: [&str; 5] = ["the zoo", "seals", "ice cream", "a cake", "the lake"];
const QUERY: &str = "query event";
const DIM: usize = 8;

fn random_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

fn brute_force(reference: &Story, embedder: &DeterministicEmbedder, cfg: &RetrievalConfig) -> BTreeSet<String> {
    let q = embed(embedder, QUERY).unwrap();
    let score = |text: &str| cosine(&q, &embed(embedder, text).unwrap()).unwrap();
    reference
        .triples
        .iter()
        .filter(|t| {
            let mut s = vec![score(&t.subject), score(&t.predicate)];
            if let Some(o) = t.object_text() {
                s.push(score(o));
            }
            let agg = match cfg.aggregation {
                Aggregation::Mean => s.iter().sum::<f64>() / s.len() as f64,
                Aggregation::Min => s.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregation::GeometricMeanNonNeg => {
                    s.iter().map(|x| x.clamp(0.0, 1.0)).product::<f64>().powf(1.0 / s.len() as f64)
                }
            };
            agg >= cfg.triple_threshold
        })
        .map(|t| t.triple_id.clone())
        .collect()
}

fn retrieval_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let aggs = [Aggregation::Mean, Aggregation::Min, Aggregation::GeometricMeanNonNeg];
    let mut nonempty = 0;
    for scenario in 0..50 {
        let n = rng.random_range(1..=8);
        let triples: Vec<EventTriple> = (0..n)
            .map(|i| {
                let object = rng.random_bool(0.8).then(|| OBJECTS[rng.random_range(0..5)]);
                EventTriple::new(
                    format!("t{i}"),
                    SUBJECTS[rng.random_range(0..5)],
                    PREDICATES[rng.random_range(0..5)],
                    object,
                    i,
                )
            })
            .collect();
        let reference = story("ref", StoryRole::PostRetold, triples);
        // planted vectors: each surface leans towards the query by a random weight
        let embedder = DeterministicEmbedder::new(DIM);
        let query = random_vector(&mut rng);
        embedder.plant(QUERY, query.clone());
        for word in SUBJECTS.iter().chain(&PREDICATES).chain(&OBJECTS) {
            let w: f64 = rng.random_range(0.0..1.0);
            let noise = random_vector(&mut rng);
            let v: Vec<f64> = query.iter().zip(&noise).map(|(q, e)| 2.0 * w * q + (1.0 - w) * e).collect();
            embedder.plant(word, if v.iter().all(|x| x.abs() < 1e-9) { noise } else { v });
        }
        // thresholds drawn from [0, 1]; the node threshold is the smaller one
        let (a, b): (f64, f64) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let cfg = RetrievalConfig {
            node_threshold: a.min(b),
            triple_threshold: a.max(b),
            aggregation: aggs[scenario % 3],
        };
        let kg = build_kg(&reference, None).map_err(|e| e.to_string())?;
        let got: BTreeSet<String> = support_events_kg(&kg, &reference, QUERY, &embedder, &cfg)
            .map_err(|e| e.to_string())?
            .triple_ids()
            .into_iter()
            .map(str::to_string)
            .collect();
        let expected = brute_force(&reference, &embedder, &cfg);
        ensure(got == expected, || format!("scenario {scenario} ({cfg:?}): {got:?} != {expected:?}"))?;
        nonempty += usize::from(!got.is_empty());
    }
    Ok(format!("50 scenarios equal ({nonempty} with non-empty support)"))
}

fn lossless_fixture() -> Check {
    let corpus = load_corpus(fixture("corpus.json")).map_err(|e| e.to_string())?;
    let gold = gold_labels(&corpus);
    ensure(gold.len() == 30, || format!("fixture has {} instances", gold.len()))?;
    for t in EventType::ALL {
        ensure(gold.values().any(|g| *g == t), || format!("fixture lacks {t}"))?;
    }
    let cfg = GerConfig::load(fixture("mock.toml")).map_err(|e| e.to_string())?;
    let records = Ger::from_config(&cfg, None)
        .and_then(|g| g.run(&corpus))
        .map_err(|e| e.to_string())?;
    let aligned = align(&records, &gold).map_err(|e| e.to_string())?;
    ensure(aligned.failed.is_empty(), || format!("{} failed instances", aligned.failed.len()))?;
    let metrics = class_metrics(&confusion(&aligned.predicted, &aligned.gold).map_err(|e| e.to_string())?);
    for c in &metrics.classes {
        ensure(c.recall == Some(1.0) && c.f1 == Some(1.0), || {
            format!("{}: recall {:?}, F1 {:?}", c.event_type, c.recall, c.f1)
        })?;
    }
    Ok("30 instances, recall and F1 1.0 for all five classes".into())
}

/// Per-class recount straight from the label lists.
fn recount(pairs: &[(EventType, EventType)], t: EventType) -> (Option<f64>, Option<f64>, Option<f64>) {
    let tp = pairs.iter().filter(|(g, p)| *g == t && *p == t).count() as f64;
    let gold_n = pairs.iter().filter(|(g, _)| *g == t).count() as f64;
    let pred_n = pairs.iter().filter(|(_, p)| *p == t).count() as f64;
    let recall = (gold_n > 0.0).then(|| tp / gold_n);
    let precision = (pred_n > 0.0).then(|| tp / pred_n);
    let f1 = (tp > 0.0).then(|| 2.0 * tp / (gold_n + pred_n));
    (recall, precision, f1)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce);
    for set in 0..100 {
        let n = rng.random_range(0..=20);
        let pairs: Vec<(EventType, EventType)> = (0..n)
            .map(|_| (EventType::ALL[rng.random_range(0..5)], EventType::ALL[rng.random_range(0..5)]))
            .collect();
        let key = |i: usize| InstanceKey::new("r", format!("t{i}"), Direction::TargetIsPost);
        let gold: LabelMap = pairs.iter().enumerate().map(|(i, p)| (key(i), p.0)).collect();
        let pred: LabelMap = pairs.iter().enumerate().map(|(i, p)| (key(i), p.1)).collect();
        let metrics = class_metrics(&confusion(&pred, &gold).map_err(|e| e.to_string())?);
        for c in &metrics.classes {
            let (r, p, f) = recount(&pairs, c.event_type);
            ensure(close(c.recall, r) && close(c.precision, p) && close(c.f1, f), || {
                format!("set {set}, {}: {c:?} vs ({r:?}, {p:?}, {f:?})", c.event_type)
            })?;
        }
    }
    let m = mcnemar_counts(10, 2, false).map_err(|e| e.to_string())?;
    ensure((m.statistic - MCNEMAR_STAT).abs() <= MCNEMAR_TOL, || format!("statistic {}", m.statistic))?;
    ensure((m.p_value - MCNEMAR_P).abs() <= MCNEMAR_TOL, || format!("p {}", m.p_value))?;
    let oracle = simpson_chi2_sf(m.statistic);
    ensure((chi2_sf_1df(m.statistic) - oracle).abs() < ORACLE_TOL, || format!("sf {} vs oracle {oracle}", m.p_value))?;
    Ok(format!("100 sets match; McNemar b=10 c=2: {:.4}, p {:.5}", m.statistic, m.p_value))
}

/// Chi-square(1) survival function as twice the standard normal tail,
/// integrated with composite Simpson's rule.
fn simpson_chi2_sf(x: f64) -> f64 {
    let phi = |u: f64| (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (lo, hi, n) = (x.sqrt(), x.sqrt() + 40.0, 200_000);
    let h = (hi - lo) / n as f64;
    let mut sum = phi(lo) + phi(hi);
    for i in 1..n {
        sum += phi(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * sum * h / 3.0
}

fn dataset_statistics() -> Outcome {
    let Some(dir) = std::env::var_os("GER_NIR_DIR") else {
        return Outcome::Skip("set GER_NIR_DIR to the NIR release to check the dataset statistics".into());
    };
    timed(Duration::from_secs(120), || {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus_path = out.path().join("nir.json");
        let status = Command::new(env!("CARGO_BIN_EXE_ger"))
            .args(["convert-nir", "--src"])
            .arg(&dir)
            .arg("--out")
            .arg(&corpus_path)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("convert-nir exited with {status}"))?;
        let corpus = load_corpus(&corpus_path).map_err(|e| e.to_string())?;
        let gold = gold_labels(&corpus);
        let count = |t: EventType| gold.values().filter(|g| **g == t).count();
        let got = EventType::ALL.map(count);
        let expected = [1268, 24, 1986, 1897, 1388];
        ensure(gold.len() == 6563 && got == expected, || {
            format!("{} instances, class counts {got:?}; expected 6563 and {expected:?}", gold.len())
        })?;
        Ok("6563 instances, CST/INC/ADD/FGT/UFG = 1268/24/1986/1897/1388".into())
    })
}

fn published_row(values: [f64; 5]) -> ClassMetrics {
    let classes = EventType::ALL
        .iter()
        .zip(values)
        .map(|(&event_type, v)| ClassMetric {
            event_type,
            recall: Some(v),
            precision: None,
            f1: Some(v),
            support: 0,
        })
        .collect();
    ClassMetrics {
        classes,
        total: 0,
        accuracy: None,
    }
}

fn report_layout() -> Check {
    // Published GER rows, recall then F1.
    let recall = [0.7650, 0.0417, 0.8338, 0.8635, 0.7248];
    let f1 = [0.7543, 0.0741, 0.8370, 0.8364, 0.7584];
    let report = EvalReport {
        rows: vec![
            ReportRow {
                model: "GER".into(),
                metrics: published_row(recall),
                failed: 0,
            },
            ReportRow {
                model: "GER-F1".into(),
                metrics: published_row(f1),
                failed: 0,
            },
        ],
        ..EvalReport::default()
    };
    let md = emit_report(&report, ReportFormat::Markdown);
    let recall_section = md.split("### F1").next().unwrap_or_default();
    let f1_section = md.split("### F1").nth(1).unwrap_or_default();
    for (section, name) in [(recall_section, "Recall"), (f1_section, "F1")] {
        ensure(section.contains("| Model | CST | INC | ADD | FGT | UFG |"), || format!("{name} header missing:\n{md}"))?;
    }
    ensure(recall_section.contains("| GER | 0.7650 | 0.0417 | 0.8338 | 0.8635 | 0.7248 |"), || {
        format!("recall row not in table layout:\n{md}")
    })?;
    ensure(f1_section.contains("| GER-F1 | 0.7543 | 0.0741 | 0.8370 | 0.8364 | 0.7584 |"), || {
        format!("F1 row not in table layout:\n{md}")
    })?;
    Ok("published scores (FGT recall 0.8635, F1 0.8364) need GPT-4o, Llama3-70B, SEEN checkpoints and a \
        fine-tuned 7B discriminator and are not reproduced here; reports use the recall/F1 table layout \
        and criteria 1-5 stand in as the property-based substitute"
        .into())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let run_dir = dir.path().join(run);
        std::fs::create_dir(&run_dir).map_err(|e| e.to_string())?;
        let out = run_dir.join("predictions.jsonl");
        let result = Command::new(env!("CARGO_BIN_EXE_ger"))
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .arg("run")
            .arg("--corpus")
            .arg(fixture("corpus.json"))
            .arg("--config")
            .arg(fixture("mock.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(result.status.success(), || {
            format!("{run} run exited with {}: {}", result.status, String::from_utf8_lossy(&result.stderr))
        })?;
        let manifest = run_dir.join("predictions.jsonl.manifest.json");
        let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
        outputs.push((read(&out)?, read(&manifest)?));
    }
    ensure(outputs[0].0 == outputs[1].0, || "predictions differ between runs".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "manifests differ between runs".into())?;
    ensure(!outputs[0].0.is_empty(), || "empty predictions".into())?;
    Ok(format!("predictions ({} bytes) and manifests byte-identical", outputs[0].0.len()))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; only a bare
    // `--list` needs an answer.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<Criterion> = vec![
        ("decision table", Box::new(|| timed(FAST, decision_table))),
        ("label mapper", Box::new(|| timed(FAST, label_mapper))),
        ("retrieval oracle", Box::new(|| timed(SLOW, retrieval_oracle))),
        ("lossless fixture run", Box::new(|| timed(SLOW, lossless_fixture))),
        ("metrics oracle", Box::new(|| timed(SLOW, metrics_oracle))),
        ("dataset statistics", Box::new(dataset_statistics)),
        ("published scores / report layout", Box::new(|| timed(SLOW, report_layout))),
        ("determinism", Box::new(|| timed(SLOW, determinism))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{tag}] {name}: {detail}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
