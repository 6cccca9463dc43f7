//! Annotator reliability analysis: pairwise Cohen kappa per category,
//! complexity subgroups, gold-vs-crowd classification reports, and
//! category co-occurrence counts.

use std::fmt;

use thiserror::Error;

use crate::evaluation::{self, ClassReport, EvalError};
use crate::labeling::{LabelMatrix, LabelMode, LabelingError};

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("vectors must have equal, non-zero length")]
    BadVectors,
    #[error("matrices must both be binary")]
    NotBinary,
    #[error("matrices share no ads")]
    NoCommonAds,
    #[error("matrices share no categories")]
    NoCommonCategories,
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Matrix(#[from] LabelingError),
}

/// 2x2 agreement counts between a reference rater and another rater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryConfusion {
    pub both_yes: usize,
    pub ref_yes_only: usize,
    pub other_yes_only: usize,
    pub both_no: usize,
}

impl BinaryConfusion {
    pub fn from_vectors(reference: &[bool], other: &[bool]) -> Result<Self, AgreementError> {
        if reference.len() != other.len() || reference.is_empty() {
            return Err(AgreementError::BadVectors);
        }
        let mut counts = BinaryConfusion::default();
        for (r, o) in reference.iter().zip(other) {
            match (r, o) {
                (true, true) => counts.both_yes += 1,
                (true, false) => counts.ref_yes_only += 1,
                (false, true) => counts.other_yes_only += 1,
                (false, false) => counts.both_no += 1,
            }
        }
        Ok(counts)
    }

    pub fn total(&self) -> usize {
        self.both_yes + self.ref_yes_only + self.other_yes_only + self.both_no
    }

    /// Cohen kappa from the counts: `(p_o - p_e) / (1 - p_e)` with `p_e`
    /// the chance agreement from the two raters' marginals.
    pub fn kappa(&self) -> KappaOutcome {
        let n = self.total() as f64;
        let observed = (self.both_yes + self.both_no) as f64 / n;
        let ref_yes = (self.both_yes + self.ref_yes_only) as f64 / n;
        let other_yes = (self.both_yes + self.other_yes_only) as f64 / n;
        let expected = ref_yes * other_yes + (1.0 - ref_yes) * (1.0 - other_yes);
        if expected == 1.0 {
            // both raters constant and identical, so observed agreement is
            // also 1; reported as 1.0 but flagged
            KappaOutcome::ConstantAgreement
        } else {
            KappaOutcome::Value((observed - expected) / (1.0 - expected))
        }
    }
}

/// A kappa result: a value, the degenerate constant-labeling case
/// (conventionally 1.0), or undefined on an empty partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaOutcome {
    Value(f64),
    ConstantAgreement,
    UndefinedEmpty,
}

impl KappaOutcome {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            KappaOutcome::Value(v) => Some(*v),
            KappaOutcome::ConstantAgreement => Some(1.0),
            KappaOutcome::UndefinedEmpty => None,
        }
    }
}

impl fmt::Display for KappaOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaOutcome::Value(v) => write!(f, "{v}"),
            KappaOutcome::ConstantAgreement => write!(f, "1 (constant labeling)"),
            KappaOutcome::UndefinedEmpty => write!(f, "undefined (empty)"),
        }
    }
}

/// Pairwise Cohen kappa between two binary vectors.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<KappaOutcome, AgreementError> {
    Ok(BinaryConfusion::from_vectors(a, b)?.kappa())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAgreement {
    pub category_id: String,
    pub kappa: KappaOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupReport {
    pub item_count: usize,
    pub categories: Vec<CategoryAgreement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupBreakdown {
    pub complexity_threshold: usize,
    /// Ads whose union label count is at or below the threshold.
    pub low: SubgroupReport,
    /// Ads whose union label count exceeds the threshold.
    pub high: SubgroupReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub item_count: usize,
    pub categories: Vec<CategoryAgreement>,
    pub subgroups: Option<SubgroupBreakdown>,
}

struct CommonView {
    /// (reference row, other row) per common ad, in reference order.
    ad_rows: Vec<(usize, usize)>,
    /// (reference column, other column) per common category, in reference
    /// order.
    category_cols: Vec<(usize, usize)>,
    category_ids: Vec<String>,
}

fn common_view(
    reference: &LabelMatrix,
    other: &LabelMatrix,
) -> Result<CommonView, AgreementError> {
    if reference.mode() != LabelMode::Binary || other.mode() != LabelMode::Binary {
        return Err(AgreementError::NotBinary);
    }
    let ad_rows: Vec<(usize, usize)> = reference
        .ad_ids()
        .iter()
        .enumerate()
        .filter_map(|(r, id)| other.ad_index(id).map(|o| (r, o)))
        .collect();
    if ad_rows.is_empty() {
        return Err(AgreementError::NoCommonAds);
    }
    let mut category_cols = Vec::new();
    let mut category_ids = Vec::new();
    for (c, id) in reference.category_ids().iter().enumerate() {
        if let Some(o) = other.category_index(id) {
            category_cols.push((c, o));
            category_ids.push(id.clone());
        }
    }
    if category_cols.is_empty() {
        return Err(AgreementError::NoCommonCategories);
    }
    Ok(CommonView {
        ad_rows,
        category_cols,
        category_ids,
    })
}

fn kappa_over(
    reference: &LabelMatrix,
    other: &LabelMatrix,
    view: &CommonView,
    rows: &[(usize, usize)],
) -> Vec<CategoryAgreement> {
    view.category_cols
        .iter()
        .zip(&view.category_ids)
        .map(|(&(ref_col, other_col), id)| {
            let kappa = if rows.is_empty() {
                KappaOutcome::UndefinedEmpty
            } else {
                let a: Vec<bool> = rows
                    .iter()
                    .map(|&(r, _)| reference.get(r, ref_col) > 0.0)
                    .collect();
                let b: Vec<bool> = rows
                    .iter()
                    .map(|&(_, o)| other.get(o, other_col) > 0.0)
                    .collect();
                cohen_kappa(&a, &b).expect("aligned non-empty vectors")
            };
            CategoryAgreement {
                category_id: id.clone(),
                kappa,
            }
        })
        .collect()
}

/// Kappa per category over the ads and categories common to both matrices.
pub fn per_category_kappa(
    reference: &LabelMatrix,
    other: &LabelMatrix,
) -> Result<AgreementReport, AgreementError> {
    let view = common_view(reference, other)?;
    let categories = kappa_over(reference, other, &view, &view.ad_rows);
    Ok(AgreementReport {
        item_count: view.ad_rows.len(),
        categories,
        subgroups: None,
    })
}

/// Kappa per category, additionally split by annotation complexity: an ad
/// is "low complexity" when the number of distinct categories assigned to
/// it across both raters is at most `complexity_threshold`.
pub fn subgroup_kappa(
    reference: &LabelMatrix,
    other: &LabelMatrix,
    complexity_threshold: usize,
) -> Result<AgreementReport, AgreementError> {
    let view = common_view(reference, other)?;
    let mut low_rows = Vec::new();
    let mut high_rows = Vec::new();
    for &(r, o) in &view.ad_rows {
        let union_count = view
            .category_cols
            .iter()
            .filter(|&&(rc, oc)| reference.get(r, rc) > 0.0 || other.get(o, oc) > 0.0)
            .count();
        if union_count <= complexity_threshold {
            low_rows.push((r, o));
        } else {
            high_rows.push((r, o));
        }
    }
    let categories = kappa_over(reference, other, &view, &view.ad_rows);
    let low = SubgroupReport {
        item_count: low_rows.len(),
        categories: kappa_over(reference, other, &view, &low_rows),
    };
    let high = SubgroupReport {
        item_count: high_rows.len(),
        categories: kappa_over(reference, other, &view, &high_rows),
    };
    Ok(AgreementReport {
        item_count: view.ad_rows.len(),
        categories,
        subgroups: Some(SubgroupBreakdown {
            complexity_threshold,
            low,
            high,
        }),
    })
}

/// Classification report treating gold labels as ground truth and crowd
/// labels as predictions, over their common ads and categories.
pub fn gold_vs_crowd_report(
    gold: &LabelMatrix,
    crowd: &LabelMatrix,
) -> Result<ClassReport, AgreementError> {
    let view = common_view(gold, crowd)?;
    let ids: Vec<String> = view
        .ad_rows
        .iter()
        .map(|&(r, _)| gold.ad_ids()[r].clone())
        .collect();
    let build = |matrix: &LabelMatrix, pick_row: fn(&(usize, usize)) -> usize, col_side: usize| {
        let mut entries = Vec::with_capacity(ids.len() * view.category_cols.len());
        for pair in &view.ad_rows {
            let row = pick_row(pair);
            for cols in &view.category_cols {
                let col = if col_side == 0 { cols.0 } else { cols.1 };
                entries.push(matrix.get(row, col));
            }
        }
        LabelMatrix::new(
            ids.clone(),
            view.category_ids.clone(),
            entries,
            LabelMode::Binary,
        )
    };
    let gold_common = build(gold, |p| p.0, 0)?;
    let crowd_common = build(crowd, |p| p.1, 1)?;
    Ok(evaluation::classification_report(&gold_common, &crowd_common)?)
}

/// Symmetric joint-label counts; the diagonal carries category supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoOccurrenceMatrix {
    pub category_ids: Vec<String>,
    counts: Vec<u64>,
}

impl CoOccurrenceMatrix {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.category_ids.len() + j]
    }

    /// CSV with a category-id header row and column.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["category".to_string()];
        header.extend(self.category_ids.iter().cloned());
        w.write_record(&header).expect("csv record");
        for (i, id) in self.category_ids.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend((0..self.category_ids.len()).map(|j| self.get(i, j).to_string()));
            w.write_record(&record).expect("csv record");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
    }
}

/// Counts, for every category pair, the ads labeled with both.
pub fn cooccurrence(matrix: &LabelMatrix) -> Result<CoOccurrenceMatrix, AgreementError> {
    if matrix.mode() != LabelMode::Binary {
        return Err(AgreementError::NotBinary);
    }
    let k = matrix.cols();
    let mut counts = vec![0u64; k * k];
    for row in 0..matrix.rows() {
        let positives: Vec<usize> = (0..k).filter(|&j| matrix.get(row, j) > 0.0).collect();
        for &a in &positives {
            for &b in &positives {
                counts[a * k + b] += 1;
            }
        }
    }
    Ok(CoOccurrenceMatrix {
        category_ids: matrix.category_ids().to_vec(),
        counts,
    })
}

fn format_kappa_cell(outcome: &KappaOutcome) -> String {
    match outcome {
        KappaOutcome::Value(v) => format!("{v}"),
        KappaOutcome::ConstantAgreement => "1".to_string(),
        KappaOutcome::UndefinedEmpty => "".to_string(),
    }
}

/// CSV rendering; with subgroups present, one kappa column per partition.
pub fn render_agreement_csv(report: &AgreementReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    match &report.subgroups {
        None => {
            w.write_record(["category", "kappa"]).expect("csv record");
            for c in &report.categories {
                w.write_record([c.category_id.as_str(), &format_kappa_cell(&c.kappa)])
                    .expect("csv record");
            }
        }
        Some(sub) => {
            w.write_record(["category", "kappa_all", "kappa_low", "kappa_high"])
                .expect("csv record");
            for (i, c) in report.categories.iter().enumerate() {
                w.write_record([
                    c.category_id.as_str(),
                    &format_kappa_cell(&c.kappa),
                    &format_kappa_cell(&sub.low.categories[i].kappa),
                    &format_kappa_cell(&sub.high.categories[i].kappa),
                ])
                .expect("csv record");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Aligned-column plain-text rendering.
pub fn render_agreement_text(report: &AgreementReport) -> String {
    let name_width = report
        .categories
        .iter()
        .map(|c| c.category_id.len())
        .chain(["category".len()])
        .max()
        .unwrap_or(8);
    let fmt_value = |outcome: &KappaOutcome| match outcome {
        KappaOutcome::Value(v) => format!("{v:>7.3}"),
        KappaOutcome::ConstantAgreement => format!("{:>7}", "1*"),
        KappaOutcome::UndefinedEmpty => format!("{:>7}", "n/a"),
    };
    let mut out = String::new();
    match &report.subgroups {
        None => {
            out.push_str(&format!(
                "{:<name_width$}  {:>7}\n",
                "category", "kappa"
            ));
            for c in &report.categories {
                out.push_str(&format!(
                    "{:<name_width$}  {}\n",
                    c.category_id,
                    fmt_value(&c.kappa)
                ));
            }
            out.push_str(&format!("items: {}\n", report.item_count));
        }
        Some(sub) => {
            out.push_str(&format!(
                "{:<name_width$}  {:>7}  {:>7}  {:>7}\n",
                "category", "all", "<=thr", ">thr"
            ));
            for (i, c) in report.categories.iter().enumerate() {
                out.push_str(&format!(
                    "{:<name_width$}  {}  {}  {}\n",
                    c.category_id,
                    fmt_value(&c.kappa),
                    fmt_value(&sub.low.categories[i].kappa),
                    fmt_value(&sub.high.categories[i].kappa)
                ));
            }
            out.push_str(&format!(
                "items: {} total, {} with <= {} labels, {} above\n",
                report.item_count, sub.low.item_count, sub.complexity_threshold, sub.high.item_count
            ));
        }
    }
    out
}
