//! Scoring predictions against gold event types.

mod contribution;
mod mcnemar;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{instances_of, Corpus, EventType, InstanceKey};
use crate::pipeline::PredictionRecord;

pub use contribution::{
    contribution_analysis, correction_analysis, ContributionReport, ContributionRow, CorrectionReport,
    CorrectionRow,
};
pub use mcnemar::{chi2_sf_1df, mcnemar, mcnemar_counts, McNemarResult};
pub use report::{emit_report, EvalReport, ReportFormat, ReportRow};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("instance keys differ: {missing_gold} without gold, {missing_pred} without prediction (first: {example})")]
    KeyMismatch {
        missing_gold: usize,
        missing_pred: usize,
        example: String,
    },
    #[error("McNemar's test is undefined: no discordant pairs (b = c = 0)")]
    DegenerateTest,
    #[error("report parse error: {0}")]
    Parse(String),
}

pub type LabelMap = BTreeMap<InstanceKey, EventType>;

/// Gold event types of every labelled instance in the corpus.
pub fn gold_labels(corpus: &Corpus) -> LabelMap {
    corpus
        .pairs
        .iter()
        .flat_map(instances_of)
        .filter_map(|i| i.gold_label.map(|g| (i.key(), g)))
        .collect()
}

/// Check that two maps cover exactly the same keys.
pub fn check_keys<A, B>(a: &BTreeMap<InstanceKey, A>, b: &BTreeMap<InstanceKey, B>) -> Result<(), EvalError> {
    let missing_gold: Vec<_> = a.keys().filter(|k| !b.contains_key(k)).collect();
    let missing_pred: Vec<_> = b.keys().filter(|k| !a.contains_key(k)).collect();
    if missing_gold.is_empty() && missing_pred.is_empty() {
        return Ok(());
    }
    let example = missing_gold
        .first()
        .or(missing_pred.first())
        .map(|k| k.to_string())
        .unwrap_or_default();
    Err(EvalError::KeyMismatch {
        missing_gold: missing_gold.len(),
        missing_pred: missing_pred.len(),
        example,
    })
}

/// Predictions file aligned with gold: successful predictions, and the
/// keys of failed instances (excluded from scoring).
#[derive(Debug, Clone, Default)]
pub struct Aligned {
    pub predicted: LabelMap,
    pub gold: LabelMap,
    pub failed: BTreeSet<InstanceKey>,
}

/// Split `records` into scored predictions and failures. Every record must
/// have a gold label and every gold label must have a record.
pub fn align(records: &[PredictionRecord], gold: &LabelMap) -> Result<Aligned, EvalError> {
    let mut predicted = LabelMap::new();
    let mut failed = BTreeSet::new();
    for record in records {
        match record {
            PredictionRecord::Prediction(p) => {
                predicted.insert(p.key.clone(), p.final_event_type);
            }
            PredictionRecord::Failure(f) => {
                failed.insert(f.key.clone());
            }
        }
    }
    let all: BTreeMap<InstanceKey, ()> = predicted.keys().chain(&failed).map(|k| (k.clone(), ())).collect();
    check_keys(&all, gold)?;
    let scored_gold = gold
        .iter()
        .filter(|(k, _)| predicted.contains_key(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    Ok(Aligned {
        predicted,
        gold: scored_gold,
        failed,
    })
}

/// Counts indexed by (gold, predicted) in [`EventType::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: EventType, predicted: EventType) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn get(&self, gold: EventType, predicted: EventType) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (EventType, EventType)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (g, p) in pairs {
            m.add(g, p);
        }
        m
    }
}

pub fn confusion(predicted: &LabelMap, gold: &LabelMap) -> Result<ConfusionMatrix, EvalError> {
    check_keys(predicted, gold)?;
    Ok(ConfusionMatrix::from_pairs(
        gold.iter().map(|(k, g)| (*g, predicted[k])),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetric {
    pub event_type: EventType,
    /// Undefined when the class has no gold instances.
    pub recall: Option<f64>,
    /// Undefined when the class was never predicted.
    pub precision: Option<f64>,
    /// Undefined unless precision and recall are defined with a positive sum.
    pub f1: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub classes: Vec<ClassMetric>,
    pub total: u64,
    pub accuracy: Option<f64>,
}

impl ClassMetrics {
    pub fn get(&self, t: EventType) -> &ClassMetric {
        &self.classes[t.index()]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(m: &ConfusionMatrix) -> ClassMetrics {
    let classes = EventType::ALL
        .iter()
        .map(|&t| {
            let i = t.index();
            let tp = m.counts[i][i];
            let support: u64 = m.counts[i].iter().sum();
            let predicted: u64 = m.counts.iter().map(|row| row[i]).sum();
            let recall = ratio(tp, support);
            let precision = ratio(tp, predicted);
            let f1 = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                _ => None,
            };
            ClassMetric {
                event_type: t,
                recall,
                precision,
                f1,
                support,
            }
        })
        .collect();
    let correct: u64 = (0..5).map(|i| m.counts[i][i]).sum();
    ClassMetrics {
        classes,
        total: m.total(),
        accuracy: ratio(correct, m.total()),
    }
}
