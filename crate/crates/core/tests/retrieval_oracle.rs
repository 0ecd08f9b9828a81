//! KG retrieval against a brute-force oracle that scores every reference
//! triple directly, with no key-node shortcut.

use std::collections::BTreeSet;

use ger_core::corpus::{EventTriple, Story, StoryRole};
use ger_core::embed::{cosine, embed, DeterministicEmbedder};
use ger_core::graph::build_kg;
use ger_core::retrieval::{support_events_kg, Aggregation, RetrievalConfig};
use proptest::prelude::*;

const DIM: usize = 8;
const SUBJECTS: [&str; 4] = ["I", "we", "my sister", "the dog"];
const PREDICATES: [&str; 4] = ["went to", "saw", "ate", "bought"];
const OBJECTS: [&str; 4] = ["the zoo", "seals", "ice cream", "a cake"];
const QUERY: &str = "query event";

#[derive(Debug, Clone)]
struct Scenario {
    triples: Vec<(usize, usize, Option<usize>)>,
    query: Vec<f64>,
    /// Per vocabulary entry: weight on the query direction, then noise.
    surfaces: Vec<(f64, Vec<f64>)>,
    thresholds: (f64, f64),
}

fn vocabulary() -> Vec<&'static str> {
    SUBJECTS.iter().chain(&PREDICATES).chain(&OBJECTS).copied().collect()
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let triple = (0..4usize, 0..4usize, prop::option::weighted(0.8, 0..4usize));
    let vector = prop::collection::vec(-1.0..1.0f64, DIM);
    (
        prop::collection::vec(triple, 1..=8),
        vector.clone().prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3)),
        prop::collection::vec((0.0..1.0f64, vector), 12),
        (0.0..=1.0f64, 0.0..=1.0f64),
    )
        .prop_map(|(triples, query, surfaces, thresholds)| Scenario {
            triples,
            query,
            surfaces,
            thresholds,
        })
}

fn build(s: &Scenario) -> (Story, DeterministicEmbedder) {
    let triples = s
        .triples
        .iter()
        .enumerate()
        .map(|(i, &(a, b, c))| {
            EventTriple::new(format!("t{i}"), SUBJECTS[a], PREDICATES[b], c.map(|c| OBJECTS[c]), i)
        })
        .collect::<Vec<_>>();
    let story = Story {
        story_id: "ref".into(),
        role: StoryRole::PreRetold,
        sentences: (0..triples.len()).map(|i| format!("Sentence {i}.")).collect(),
        triples,
        coref: None,
    };
    let embedder = DeterministicEmbedder::new(DIM);
    embedder.plant(QUERY, s.query.clone());
    for (word, (weight, noise)) in vocabulary().into_iter().zip(&s.surfaces) {
        let v: Vec<f64> = s.query.iter().zip(noise).map(|(q, n)| weight * 2.0 * q + (1.0 - weight) * n).collect();
        let v = if v.iter().all(|x| x.abs() < 1e-9) { noise.clone() } else { v };
        embedder.plant(word, v);
    }
    (story, embedder)
}

fn oracle(story: &Story, embedder: &DeterministicEmbedder, tau: f64, agg: Aggregation) -> BTreeSet<String> {
    let q = embed(embedder, QUERY).unwrap();
    let score = |text: &str| cosine(&q, &embed(embedder, text).unwrap()).unwrap();
    story
        .triples
        .iter()
        .filter(|t| {
            let mut scores = vec![score(&t.subject), score(&t.predicate)];
            if let Some(o) = t.object_text() {
                scores.push(score(o));
            }
            let s = match agg {
                Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
                Aggregation::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregation::GeometricMeanNonNeg => {
                    let p: f64 = scores.iter().map(|s| s.clamp(0.0, 1.0)).product();
                    p.powf(1.0 / scores.len() as f64)
                }
            };
            s >= tau
        })
        .map(|t| t.triple_id.clone())
        .collect()
}

fn retrieved(story: &Story, embedder: &DeterministicEmbedder, cfg: &RetrievalConfig) -> BTreeSet<String> {
    let kg = build_kg(story, None).unwrap();
    support_events_kg(&kg, story, QUERY, embedder, cfg)
        .unwrap()
        .triple_ids()
        .into_iter()
        .map(str::to_string)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// With tau_node <= tau_triple every passing triple has a key node (its
    /// best node scores at least the aggregate), so the shortcut prunes nothing.
    #[test]
    fn matches_brute_force_when_node_threshold_is_lower(s in scenario(), agg in prop::sample::select(vec![Aggregation::Mean, Aggregation::Min, Aggregation::GeometricMeanNonNeg])) {
        let (story, embedder) = build(&s);
        let (a, b) = s.thresholds;
        let cfg = RetrievalConfig { node_threshold: a.min(b), triple_threshold: a.max(b), aggregation: agg };
        prop_assert_eq!(retrieved(&story, &embedder, &cfg), oracle(&story, &embedder, cfg.triple_threshold, agg));
    }

    #[test]
    fn raising_thresholds_never_adds_triples(s in scenario(), bump in 0.0..0.5f64) {
        let (story, embedder) = build(&s);
        let base = RetrievalConfig { node_threshold: s.thresholds.0, triple_threshold: s.thresholds.1, aggregation: Aggregation::Mean };
        let low = retrieved(&story, &embedder, &base);
        let higher_triple = RetrievalConfig { triple_threshold: (base.triple_threshold + bump).min(1.0), ..base };
        let higher_node = RetrievalConfig { node_threshold: (base.node_threshold + bump).min(1.0), ..base };
        prop_assert!(retrieved(&story, &embedder, &higher_triple).is_subset(&low));
        prop_assert!(retrieved(&story, &embedder, &higher_node).is_subset(&low));
    }

    #[test]
    fn retrieval_is_deterministic(s in scenario()) {
        let (story, embedder) = build(&s);
        let cfg = RetrievalConfig::default();
        let first = retrieved(&story, &embedder, &cfg);
        let (story2, embedder2) = build(&s);
        prop_assert_eq!(first, retrieved(&story2, &embedder2, &cfg));
    }
}
