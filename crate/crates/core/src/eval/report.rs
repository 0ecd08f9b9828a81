//! Markdown and JSON rendering of evaluation results. Markdown tables list
//! one model per row with the classes as columns; undefined values print as
//! `null`.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ClassMetrics, ContributionReport, CorrectionReport, EvalError, McNemarResult};
use crate::corpus::EventType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub metrics: ClassMetrics,
    /// Instances that failed in the pipeline and were left out of scoring.
    pub failed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcnemar: Option<McNemarResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution: Option<ContributionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionReport>,
}

impl EvalReport {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "json" => Some(ReportFormat::Json),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.4}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{:.2}%", 100.0 * x))
}

fn class_header(out: &mut String, first: &str) {
    let names: Vec<_> = EventType::ALL.iter().map(|t| t.abbreviation()).collect();
    writeln!(out, "| {first} | {} |", names.join(" | ")).unwrap();
    writeln!(out, "|---|{}", "---|".repeat(names.len())).unwrap();
}

fn metric_table(out: &mut String, title: &str, rows: &[ReportRow], pick: impl Fn(&super::ClassMetric) -> Option<f64>) {
    writeln!(out, "### {title}\n").unwrap();
    class_header(out, "Model");
    for row in rows {
        let cells: Vec<_> = row.metrics.classes.iter().map(|c| num(pick(c))).collect();
        writeln!(out, "| {} | {} |", row.model, cells.join(" | ")).unwrap();
    }
    out.push('\n');
}

fn markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    metric_table(&mut out, "Recall", &report.rows, |c| c.recall);
    metric_table(&mut out, "F1", &report.rows, |c| c.f1);

    writeln!(out, "### Instances\n").unwrap();
    writeln!(out, "| Model | Scored | Failed | Accuracy |").unwrap();
    writeln!(out, "|---|---|---|---|").unwrap();
    for row in &report.rows {
        writeln!(out, "| {} | {} | {} | {} |", row.model, row.metrics.total, row.failed, num(row.metrics.accuracy)).unwrap();
    }

    if let Some(m) = &report.mcnemar {
        let variant = if m.continuity_correction { ", continuity-corrected" } else { "" };
        writeln!(out, "\n### McNemar's test{variant}\n").unwrap();
        writeln!(out, "| b | c | statistic | p |").unwrap();
        writeln!(out, "|---|---|---|---|").unwrap();
        writeln!(out, "| {} | {} | {:.4} | {:.4} |", m.b, m.c, m.statistic, m.p_value).unwrap();
    }
    if let Some(c) = &report.contribution {
        writeln!(out, "\n### Support module\n").unwrap();
        writeln!(out, "| | Fail | Success | Alternative Insight | Count |").unwrap();
        writeln!(out, "|---|---|---|---|---|").unwrap();
        for r in &c.rows {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                r.event_type,
                pct(r.fail),
                pct(r.success),
                pct(r.alternative_insight),
                r.count
            )
            .unwrap();
        }
    }
    if let Some(c) = &report.correction {
        writeln!(out, "\n### Correction module\n").unwrap();
        writeln!(out, "| | Fail | Success | Count |").unwrap();
        writeln!(out, "|---|---|---|---|").unwrap();
        for r in &c.rows {
            writeln!(out, "| {} | {} | {} | {} |", r.event_type, pct(r.fail), pct(r.success), r.count).unwrap();
        }
    }
    out
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("serializable");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{class_metrics, mcnemar_counts, ConfusionMatrix};

    fn report() -> EvalReport {
        use EventType::*;
        let m = ConfusionMatrix::from_pairs([(Forgotten, Forgotten), (Forgotten, Unforgotten), (Unforgotten, Unforgotten)]);
        EvalReport {
            rows: vec![ReportRow {
                model: "GER".into(),
                metrics: class_metrics(&m),
                failed: 1,
            }],
            mcnemar: Some(mcnemar_counts(10, 2, false).unwrap()),
            contribution: None,
            correction: None,
        }
    }

    #[test]
    fn markdown_layout() {
        let md = emit_report(&report(), ReportFormat::Markdown);
        assert!(md.contains("| Model | CST | INC | ADD | FGT | UFG |"));
        assert!(md.contains("| GER | null | null | null | 0.5000 | 1.0000 |"));
        assert!(md.contains("| GER | null | null | null | 0.6667 | 0.6667 |"));
        assert!(md.contains("| 10 | 2 | 5.3333 | 0.0209 |"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let md = emit_report(&EvalReport::default(), ReportFormat::Markdown);
        let recall: Vec<_> = md.split("### F1").next().unwrap().lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(recall.len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        assert_eq!(EvalReport::from_json(&emit_report(&r, ReportFormat::Json)).unwrap(), r);
        assert_eq!(ReportFormat::parse("md"), Some(ReportFormat::Markdown));
    }
}
