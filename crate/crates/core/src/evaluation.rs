//! Multi-label classification metrics: per-class precision/recall/F1 with
//! support, micro average, and samples average.
//!
//! Zero-denominator conventions (documented in every report header):
//! precision is 0 when there are no predicted positives, recall is 0 when
//! there are no gold positives, F1 is 0 when precision + recall is 0. For
//! the samples average, an ad with empty gold and empty predicted sets
//! scores 1 on all three metrics; an ad where exactly one side is empty
//! scores 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabelMatrix, LabelMode};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("matrices must both be binary")]
    NotBinary,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot evaluate empty matrices")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub category_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub micro_avg: Prf,
    pub samples_avg: Prf,
    pub total_support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

fn check_aligned(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<(), EvalError> {
    if gold.mode() != LabelMode::Binary || pred.mode() != LabelMode::Binary {
        return Err(EvalError::NotBinary);
    }
    if gold.ad_ids() != pred.ad_ids() {
        return Err(EvalError::ShapeMismatch(
            "ad orderings differ".to_string(),
        ));
    }
    if gold.category_ids() != pred.category_ids() {
        return Err(EvalError::ShapeMismatch(
            "category orderings differ".to_string(),
        ));
    }
    if gold.rows() == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

fn column_counts(gold: &LabelMatrix, pred: &LabelMatrix, col: usize) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for row in 0..gold.rows() {
        let g = gold.get(row, col) > 0.0;
        let p = pred.get(row, col) > 0.0;
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// Per-category precision/recall/F1 with support (gold positives).
pub fn per_class_prf(
    gold: &LabelMatrix,
    pred: &LabelMatrix,
) -> Result<Vec<ClassMetrics>, EvalError> {
    check_aligned(gold, pred)?;
    Ok((0..gold.cols())
        .map(|col| {
            let (tp, fp, fn_) = column_counts(gold, pred, col);
            let prf = prf_from_counts(tp, fp, fn_);
            ClassMetrics {
                category_id: gold.category_ids()[col].clone(),
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                support: tp + fn_,
            }
        })
        .collect())
}

/// Precision/recall/F1 from confusion counts pooled across all categories.
pub fn micro_average(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<Prf, EvalError> {
    check_aligned(gold, pred)?;
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for col in 0..gold.cols() {
        let (t, f, n) = column_counts(gold, pred, col);
        tp += t;
        fp += f;
        fn_ += n;
    }
    Ok(prf_from_counts(tp, fp, fn_))
}

/// Per-ad set precision/recall/F1, averaged over ads.
pub fn samples_average(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<Prf, EvalError> {
    check_aligned(gold, pred)?;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for row in 0..gold.rows() {
        let gold_size = gold.row(row).iter().filter(|v| **v > 0.0).count();
        let pred_size = pred.row(row).iter().filter(|v| **v > 0.0).count();
        let inter = (0..gold.cols())
            .filter(|&c| gold.get(row, c) > 0.0 && pred.get(row, c) > 0.0)
            .count();
        let (p, r, f) = match (gold_size, pred_size) {
            (0, 0) => (1.0, 1.0, 1.0),
            (_, 0) | (0, _) => (0.0, 0.0, 0.0),
            _ => (
                inter as f64 / pred_size as f64,
                inter as f64 / gold_size as f64,
                2.0 * inter as f64 / (gold_size + pred_size) as f64,
            ),
        };
        precision_sum += p;
        recall_sum += r;
        f1_sum += f;
    }
    let n = gold.rows() as f64;
    Ok(Prf {
        precision: precision_sum / n,
        recall: recall_sum / n,
        f1: f1_sum / n,
    })
}

/// Full report: per-class metrics plus micro and samples averages.
pub fn classification_report(
    gold: &LabelMatrix,
    pred: &LabelMatrix,
) -> Result<ClassReport, EvalError> {
    let classes = per_class_prf(gold, pred)?;
    let micro_avg = micro_average(gold, pred)?;
    let samples_avg = samples_average(gold, pred)?;
    let total_support = classes.iter().map(|c| c.support).sum();
    Ok(ClassReport {
        classes,
        micro_avg,
        samples_avg,
        total_support,
    })
}

/// Deterministic report rendering. Markdown shows two decimals; CSV and
/// JSON keep full precision.
pub fn render_report(report: &ClassReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["category", "precision", "recall", "f1", "support"])
                .expect("csv record");
            for class in &report.classes {
                w.write_record([
                    class.category_id.as_str(),
                    &format!("{}", class.precision),
                    &format!("{}", class.recall),
                    &format!("{}", class.f1),
                    &class.support.to_string(),
                ])
                .expect("csv record");
            }
            for (name, prf) in [
                ("micro avg", &report.micro_avg),
                ("samples avg", &report.samples_avg),
            ] {
                w.write_record([
                    name,
                    &format!("{}", prf.precision),
                    &format!("{}", prf.recall),
                    &format!("{}", prf.f1),
                    &report.total_support.to_string(),
                ])
                .expect("csv record");
            }
            String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str(
                "Conventions: precision/recall are 0 when undefined; \
                 an ad with empty gold and predicted sets scores 1 on samples metrics.\n\n",
            );
            out.push_str("| category | precision | recall | f1 | support |\n");
            out.push_str("|---|---:|---:|---:|---:|\n");
            for class in &report.classes {
                out.push_str(&format!(
                    "| {} | {:.2} | {:.2} | {:.2} | {} |\n",
                    class.category_id, class.precision, class.recall, class.f1, class.support
                ));
            }
            for (name, prf) in [
                ("micro avg", &report.micro_avg),
                ("samples avg", &report.samples_avg),
            ] {
                out.push_str(&format!(
                    "| {} | {:.2} | {:.2} | {:.2} | {} |\n",
                    name, prf.precision, prf.recall, prf.f1, report.total_support
                ));
            }
            out
        }
    }
}
