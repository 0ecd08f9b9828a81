//! How the support and correction modules affected each gold class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_keys, EvalError, LabelMap};
use crate::corpus::{EventType, InstanceKey};
use crate::pipeline::{CorrectionBranch, PipelinePrediction};

/// Per gold class: Fail (base and support both wrong), Success (base right
/// and support agrees), Alternative Insight (support disagrees with base).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub event_type: EventType,
    pub count: u64,
    pub fail: Option<f64>,
    pub success: Option<f64>,
    pub alternative_insight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub rows: Vec<ContributionRow>,
}

/// Among instances where the correction module ran: did the final label
/// end up right?
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub event_type: EventType,
    pub count: u64,
    pub fail: Option<f64>,
    pub success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub rows: Vec<CorrectionRow>,
}

fn by_key<'a>(predictions: &[&'a PipelinePrediction]) -> BTreeMap<InstanceKey, &'a PipelinePrediction> {
    predictions.iter().map(|p| (p.key.clone(), *p)).collect()
}

fn share(n: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| n as f64 / total as f64)
}

pub fn contribution_analysis(predictions: &[&PipelinePrediction], gold: &LabelMap) -> Result<ContributionReport, EvalError> {
    let preds = by_key(predictions);
    check_keys(&preds, gold)?;
    let mut counts = [[0u64; 4]; 5];
    for (key, g) in gold {
        let p = preds[key];
        let truth = g.relevance();
        let slot = if p.support_label != p.base_label {
            2
        } else if p.base_label == truth {
            1
        } else {
            0
        };
        counts[g.index()][slot] += 1;
        counts[g.index()][3] += 1;
    }
    let rows = EventType::ALL
        .iter()
        .map(|&t| {
            let [fail, success, alt, n] = counts[t.index()];
            ContributionRow {
                event_type: t,
                count: n,
                fail: share(fail, n),
                success: share(success, n),
                alternative_insight: share(alt, n),
            }
        })
        .collect();
    Ok(ContributionReport { rows })
}

pub fn correction_analysis(predictions: &[&PipelinePrediction], gold: &LabelMap) -> Result<CorrectionReport, EvalError> {
    let preds = by_key(predictions);
    check_keys(&preds, gold)?;
    let mut counts = [[0u64; 2]; 5];
    for (key, g) in gold {
        let p = preds[key];
        if p.correction_branch == CorrectionBranch::Agree {
            continue;
        }
        counts[g.index()][usize::from(p.final_relevance == g.relevance())] += 1;
    }
    let rows = EventType::ALL
        .iter()
        .map(|&t| {
            let [fail, success] = counts[t.index()];
            let n = fail + success;
            CorrectionRow {
                event_type: t,
                count: n,
                fail: share(fail, n),
                success: share(success, n),
            }
        })
        .collect();
    Ok(CorrectionReport { rows })
}
