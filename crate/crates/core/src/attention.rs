//! Case-study analytics over predicted labels: coverage statistics,
//! candidate-mention attention tables, and demographic/region exposure
//! tables with a baseline and over/under flags.
//!
//! All aggregation weights ads by their impression-range midpoint, so
//! multi-label ads contribute their full impression mass to every
//! predicted category. Ads are accumulated in sorted ad-id order to keep
//! float sums reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use thiserror::Error;

use crate::ingest::{midpoint, AdRecord, AgeBucket, CandidateAliasSet, Gender, Region};

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no ads with a predicted label")]
    NoLabeledAds,
    #[error("table and baseline buckets differ")]
    BucketMismatch,
    #[error("{0}")]
    Invalid(String),
}

/// Predicted label sets per ad; empty sets are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionSet {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl PredictionSet {
    pub fn new() -> Self {
        PredictionSet::default()
    }

    pub fn insert(&mut self, ad_id: impl Into<String>, labels: BTreeSet<String>) {
        self.map.insert(ad_id.into(), labels);
    }

    pub fn get(&self, ad_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(ad_id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.map.iter()
    }

    /// CSV export: `ad_id,labels` with `|`-separated labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AttentionError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ad_id", "labels"])
            .map_err(|e| AttentionError::Schema(e.to_string()))?;
        for (ad_id, labels) in &self.map {
            let joined = labels.iter().cloned().collect::<Vec<_>>().join("|");
            w.write_record([ad_id.as_str(), joined.as_str()])
                .map_err(|e| AttentionError::Schema(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AttentionError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| AttentionError::Schema(e.to_string()))?
            .clone();
        if header.get(0) != Some("ad_id") || header.get(1) != Some("labels") {
            return Err(AttentionError::Schema(
                "expected header ad_id,labels".to_string(),
            ));
        }
        let mut set = PredictionSet::new();
        for record in r.records() {
            let record = record.map_err(|e| AttentionError::Schema(e.to_string()))?;
            let ad_id = record.get(0).unwrap_or("").to_string();
            if ad_id.is_empty() {
                return Err(AttentionError::Schema("empty ad_id".to_string()));
            }
            let labels: BTreeSet<String> = record
                .get(1)
                .unwrap_or("")
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            set.insert(ad_id, labels);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureAxis {
    Gender,
    Age,
    Region,
}

impl ExposureAxis {
    pub fn name(&self) -> &'static str {
        match self {
            ExposureAxis::Gender => "gender",
            ExposureAxis::Age => "age",
            ExposureAxis::Region => "region",
        }
    }

    /// Bucket labels, in table column order. The gender axis excludes the
    /// unknown-gender mass (shares renormalize over female/male).
    pub fn buckets(&self) -> Vec<String> {
        match self {
            ExposureAxis::Gender => vec!["female".to_string(), "male".to_string()],
            ExposureAxis::Age => AgeBucket::ALL.iter().map(|b| b.to_string()).collect(),
            ExposureAxis::Region => Region::ALL.iter().map(|r| r.name().to_string()).collect(),
        }
    }
}

/// Raw per-bucket impression mass for one ad.
fn bucket_mass(ad: &AdRecord, axis: ExposureAxis, impression_mass: f64) -> Vec<f64> {
    match axis {
        ExposureAxis::Gender => {
            let mut out = vec![0.0; 2];
            for cell in &ad.demographics {
                match cell.gender {
                    Gender::Female => out[0] += impression_mass * cell.share,
                    Gender::Male => out[1] += impression_mass * cell.share,
                    Gender::Unknown => {}
                }
            }
            out
        }
        ExposureAxis::Age => {
            let mut out = vec![0.0; AgeBucket::ALL.len()];
            for cell in &ad.demographics {
                let idx = AgeBucket::ALL
                    .iter()
                    .position(|b| *b == cell.age_bucket)
                    .expect("bucket registered");
                out[idx] += impression_mass * cell.share;
            }
            out
        }
        ExposureAxis::Region => {
            let mut out = vec![0.0; Region::ALL.len()];
            for cell in &ad.regions {
                let idx = Region::ALL
                    .iter()
                    .position(|r| *r == cell.region)
                    .expect("region registered");
                out[idx] += impression_mass * cell.share;
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow {
    pub category_id: String,
    /// Normalized shares over the axis buckets (sum 1).
    pub shares: Vec<f64>,
    /// Total impression mass accumulated before normalization.
    pub total_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTable {
    pub axis: ExposureAxis,
    pub buckets: Vec<String>,
    pub rows: Vec<ExposureRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub axis: ExposureAxis,
    pub buckets: Vec<String>,
    pub shares: Vec<f64>,
    pub total_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureWarning {
    pub category_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureFlag {
    Over,
    Under,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureFlags {
    pub rho: f64,
    pub buckets: Vec<String>,
    pub categories: Vec<String>,
    flags: Vec<ExposureFlag>,
}

impl ExposureFlags {
    pub fn get(&self, row: usize, col: usize) -> ExposureFlag {
        self.flags[row * self.buckets.len() + col]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["category".to_string()];
        header.extend(self.buckets.iter().cloned());
        w.write_record(&header).expect("csv record");
        for (i, category) in self.categories.iter().enumerate() {
            let mut record = vec![category.clone()];
            record.extend((0..self.buckets.len()).map(|j| {
                match self.get(i, j) {
                    ExposureFlag::Over => "over",
                    ExposureFlag::Under => "under",
                    ExposureFlag::Neutral => "none",
                }
                .to_string()
            }));
            w.write_record(&record).expect("csv record");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub with_any: usize,
    pub with_multiple: usize,
    /// Median label count among ads with at least one label; 0 when no ad
    /// is labeled (flagged by `median_defined`).
    pub median_labels: f64,
    pub median_defined: bool,
}

/// Coverage of the prediction set over a universe of ad ids.
pub fn coverage_stats(preds: &PredictionSet, universe: &[String]) -> CoverageStats {
    let mut counts: Vec<usize> = universe
        .iter()
        .filter_map(|id| preds.get(id))
        .map(BTreeSet::len)
        .filter(|n| *n > 0)
        .collect();
    counts.sort_unstable();
    let with_any = counts.len();
    let with_multiple = counts.iter().filter(|n| **n > 1).count();
    let (median_labels, median_defined) = if counts.is_empty() {
        (0.0, false)
    } else if counts.len() % 2 == 1 {
        (counts[counts.len() / 2] as f64, true)
    } else {
        let upper = counts.len() / 2;
        ((counts[upper - 1] + counts[upper]) as f64 / 2.0, true)
    };
    CoverageStats {
        with_any,
        with_multiple,
        median_labels,
        median_defined,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateColumn {
    pub candidate_id: String,
    /// Share per category (aligned with the table's category list);
    /// sums to 1.
    pub shares: Vec<f64>,
    pub total_mass: f64,
    /// Number of mentioning, labeled ads behind the column.
    pub ad_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAttentionTable {
    pub categories: Vec<String>,
    pub candidates: Vec<CandidateColumn>,
}

impl CandidateAttentionTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["category".to_string()];
        header.extend(self.candidates.iter().map(|c| c.candidate_id.clone()));
        w.write_record(&header).expect("csv record");
        for (i, category) in self.categories.iter().enumerate() {
            let mut record = vec![category.clone()];
            record.extend(self.candidates.iter().map(|c| format!("{}", c.shares[i])));
            w.write_record(&record).expect("csv record");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| category |");
        for c in &self.candidates {
            out.push_str(&format!(" {} |", c.candidate_id));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.candidates {
            out.push_str("---:|");
        }
        out.push('\n');
        for (i, category) in self.categories.iter().enumerate() {
            out.push_str(&format!("| {category} |"));
            for c in &self.candidates {
                out.push_str(&format!(" {:.2}% |", c.shares[i] * 100.0));
            }
            out.push('\n');
        }
        out
    }
}

fn sorted_ads(ads: &[AdRecord]) -> Vec<&AdRecord> {
    let mut refs: Vec<&AdRecord> = ads.iter().collect();
    refs.sort_by(|a, b| a.ad_id.cmp(&b.ad_id));
    refs
}

fn predicted_labels<'p>(
    preds: &'p PredictionSet,
    ad: &AdRecord,
) -> Option<&'p BTreeSet<String>> {
    preds.get(&ad.ad_id).filter(|labels| !labels.is_empty())
}

/// Impression attention per candidate: each cell sums the impression
/// midpoints of ads that mention the candidate and carry the category;
/// shares normalize by the candidate's total over all cells, so every
/// column sums to 1. Candidates without any labeled mentioning ad are
/// omitted with a warning.
pub fn candidate_attention(
    ads: &[AdRecord],
    preds: &PredictionSet,
    alias_sets: &[CandidateAliasSet],
) -> (CandidateAttentionTable, Vec<String>) {
    let ads = sorted_ads(ads);
    let mut categories: BTreeSet<String> = BTreeSet::new();
    let mut mentions: BTreeMap<&str, Vec<&AdRecord>> = BTreeMap::new();
    for aliases in alias_sets {
        let mentioned: Vec<&AdRecord> = ads
            .iter()
            .filter(|ad| {
                predicted_labels(preds, ad).is_some()
                    && crate::ingest::match_candidate(ad, aliases)
            })
            .copied()
            .collect();
        for ad in &mentioned {
            categories.extend(predicted_labels(preds, ad).unwrap().iter().cloned());
        }
        mentions.insert(aliases.candidate_id.as_str(), mentioned);
    }
    let categories: Vec<String> = categories.into_iter().collect();

    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    for aliases in alias_sets {
        let mentioned = &mentions[aliases.candidate_id.as_str()];
        if mentioned.is_empty() {
            warnings.push(format!(
                "candidate {:?} has no labeled mentioning ads; column omitted",
                aliases.candidate_id
            ));
            continue;
        }
        let mut cells = vec![0.0; categories.len()];
        for ad in mentioned {
            let mass = midpoint(&ad.impressions).value;
            for label in predicted_labels(preds, ad).unwrap() {
                let idx = categories.iter().position(|c| c == label).expect("category");
                cells[idx] += mass;
            }
        }
        let total: f64 = cells.iter().sum();
        if total <= 0.0 {
            warnings.push(format!(
                "candidate {:?} accumulated no impression mass; column omitted",
                aliases.candidate_id
            ));
            continue;
        }
        candidates.push(CandidateColumn {
            candidate_id: aliases.candidate_id.clone(),
            shares: cells.iter().map(|c| c / total).collect(),
            total_mass: total,
            ad_count: mentioned.len(),
        });
    }
    (
        CandidateAttentionTable {
            categories,
            candidates,
        },
        warnings,
    )
}

/// Per-category impression-share distribution over an axis's buckets.
/// Categories that accumulate no mass are omitted with a warning.
pub fn demographic_exposure(
    ads: &[AdRecord],
    preds: &PredictionSet,
    axis: ExposureAxis,
) -> (ExposureTable, Vec<ExposureWarning>) {
    let ads = sorted_ads(ads);
    let buckets = axis.buckets();
    let mut cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ad in &ads {
        let Some(labels) = predicted_labels(preds, ad) else {
            continue;
        };
        let mass = midpoint(&ad.impressions).value;
        let contribution = bucket_mass(ad, axis, mass);
        for label in labels {
            let row = cells
                .entry(label.clone())
                .or_insert_with(|| vec![0.0; buckets.len()]);
            for (slot, value) in row.iter_mut().zip(&contribution) {
                *slot += value;
            }
        }
    }

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (category_id, raw) in cells {
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            warnings.push(ExposureWarning {
                category_id,
                message: "no impression mass on this axis; row omitted".to_string(),
            });
            continue;
        }
        rows.push(ExposureRow {
            category_id,
            shares: raw.iter().map(|v| v / total).collect(),
            total_mass: total,
        });
    }
    (
        ExposureTable {
            axis,
            buckets,
            rows,
        },
        warnings,
    )
}

/// The exposure computation applied to the single pseudo-category "any",
/// over exactly the ads with at least one predicted label.
pub fn baseline(
    ads: &[AdRecord],
    preds: &PredictionSet,
    axis: ExposureAxis,
) -> Result<BaselineRow, AttentionError> {
    let ads = sorted_ads(ads);
    let buckets = axis.buckets();
    let mut raw = vec![0.0; buckets.len()];
    let mut labeled = 0usize;
    for ad in &ads {
        if predicted_labels(preds, ad).is_none() {
            continue;
        }
        labeled += 1;
        let mass = midpoint(&ad.impressions).value;
        for (slot, value) in raw.iter_mut().zip(bucket_mass(ad, axis, mass)) {
            *slot += value;
        }
    }
    if labeled == 0 {
        return Err(AttentionError::NoLabeledAds);
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(AttentionError::Invalid(
            "labeled ads carry no impression mass on this axis".to_string(),
        ));
    }
    Ok(BaselineRow {
        axis,
        buckets,
        shares: raw.iter().map(|v| v / total).collect(),
        total_mass: total,
    })
}

/// Relative-deviation flags: over when `share >= (1 + rho) * baseline`,
/// under when `share <= (1 - rho) * baseline`. A zero baseline flags any
/// positive share as over.
pub fn flag_exposure(
    table: &ExposureTable,
    baseline: &BaselineRow,
    rho: f64,
) -> Result<ExposureFlags, AttentionError> {
    if table.buckets != baseline.buckets {
        return Err(AttentionError::BucketMismatch);
    }
    if rho < 0.0 || !rho.is_finite() {
        return Err(AttentionError::Invalid(format!(
            "rho {rho} must be non-negative"
        )));
    }
    let mut flags = Vec::with_capacity(table.rows.len() * table.buckets.len());
    for row in &table.rows {
        for (share, base) in row.shares.iter().zip(&baseline.shares) {
            let flag = if *base == 0.0 {
                if *share > 0.0 {
                    ExposureFlag::Over
                } else {
                    ExposureFlag::Neutral
                }
            } else if *share >= (1.0 + rho) * base {
                ExposureFlag::Over
            } else if *share <= (1.0 - rho) * base {
                ExposureFlag::Under
            } else {
                ExposureFlag::Neutral
            };
            flags.push(flag);
        }
    }
    Ok(ExposureFlags {
        rho,
        buckets: table.buckets.clone(),
        categories: table.rows.iter().map(|r| r.category_id.clone()).collect(),
        flags,
    })
}

/// CSV rendering of an exposure table (shares as decimals).
pub fn exposure_table_csv(table: &ExposureTable, baseline: Option<&BaselineRow>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["category".to_string()];
    header.extend(table.buckets.iter().cloned());
    w.write_record(&header).expect("csv record");
    if let Some(base) = baseline {
        let mut record = vec!["any".to_string()];
        record.extend(base.shares.iter().map(|v| format!("{v}")));
        w.write_record(&record).expect("csv record");
    }
    for row in &table.rows {
        let mut record = vec![row.category_id.clone()];
        record.extend(row.shares.iter().map(|v| format!("{v}")));
        w.write_record(&record).expect("csv record");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Markdown rendering with `+`/`-` flag annotations next to each share.
pub fn exposure_table_markdown(
    table: &ExposureTable,
    baseline: Option<&BaselineRow>,
    flags: Option<&ExposureFlags>,
) -> String {
    let mut out = String::new();
    out.push_str("| category |");
    for bucket in &table.buckets {
        out.push_str(&format!(" {bucket} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &table.buckets {
        out.push_str("---:|");
    }
    out.push('\n');
    if let Some(base) = baseline {
        out.push_str("| any (baseline) |");
        for share in &base.shares {
            out.push_str(&format!(" {:.2}% |", share * 100.0));
        }
        out.push('\n');
    }
    for (i, row) in table.rows.iter().enumerate() {
        out.push_str(&format!("| {} |", row.category_id));
        for (j, share) in row.shares.iter().enumerate() {
            let mark = match flags.map(|f| f.get(i, j)) {
                Some(ExposureFlag::Over) => " +",
                Some(ExposureFlag::Under) => " -",
                _ => "",
            };
            out.push_str(&format!(" {:.2}%{mark} |", share * 100.0));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DemographicCell, RegionCell, ValueRange};
    use chrono::{TimeZone, Utc};

    fn ad(id: &str, body: &str, impressions: (u64, u64)) -> AdRecord {
        AdRecord {
            ad_id: id.to_string(),
            page_id: "p".to_string(),
            page_name: "P".to_string(),
            creation_time: Utc.with_ymd_and_hms(2022, 3, 1, 0, 0, 0).unwrap(),
            creative_body: body.to_string(),
            bylines: None,
            languages: vec!["fr".to_string()],
            impressions: ValueRange::closed(impressions.0, impressions.1).unwrap(),
            currency: "EUR".to_string(),
            spend: ValueRange::closed(0, 99).unwrap(),
            demographics: Vec::new(),
            regions: Vec::new(),
        }
    }

    fn demo(gender: Gender, age: &str, share: f64) -> DemographicCell {
        DemographicCell {
            gender,
            age_bucket: age.parse().unwrap(),
            share,
        }
    }

    fn preds(items: &[(&str, &[&str])]) -> PredictionSet {
        let mut set = PredictionSet::new();
        for (id, labels) in items {
            set.insert(*id, labels.iter().map(|l| l.to_string()).collect());
        }
        set
    }

    #[test]
    fn coverage_all_unlabeled() {
        let universe: Vec<String> = (0..3).map(|i| format!("a{i}")).collect();
        let stats = coverage_stats(&preds(&[("a0", &[])]), &universe);
        assert_eq!(stats.with_any, 0);
        assert_eq!(stats.with_multiple, 0);
        assert_eq!(stats.median_labels, 0.0);
        assert!(!stats.median_defined);
    }

    #[test]
    fn coverage_hand_median() {
        let universe: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
        let set = preds(&[
            ("a0", &["x"]),
            ("a1", &["x"]),
            ("a2", &["x", "y"]),
            ("a3", &["x", "y", "z"]),
            ("a4", &[]),
        ]);
        let stats = coverage_stats(&set, &universe);
        assert_eq!(stats.with_any, 4);
        assert_eq!(stats.with_multiple, 2);
        assert_eq!(stats.median_labels, 1.5);
        assert!(stats.median_defined);
    }

    #[test]
    fn coverage_single_label_everywhere() {
        let universe: Vec<String> = (0..3).map(|i| format!("a{i}")).collect();
        let set = preds(&[("a0", &["x"]), ("a1", &["y"]), ("a2", &["x"])]);
        let stats = coverage_stats(&set, &universe);
        assert_eq!(stats.median_labels, 1.0);
        assert_eq!(stats.with_multiple, 0);
    }

    fn aliases(candidate: &str, names: &[&str]) -> CandidateAliasSet {
        CandidateAliasSet::new(candidate, names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn candidate_single_ad_full_share() {
        let ads = vec![ad("a1", "Votez Macron", (1000, 1000))];
        let set = preds(&[("a1", &["health"])]);
        let (table, warnings) =
            candidate_attention(&ads, &set, &[aliases("macron", &["Macron"])]);
        assert!(warnings.is_empty());
        assert_eq!(table.categories, vec!["health".to_string()]);
        assert_eq!(table.candidates[0].shares, vec![1.0]);
    }

    #[test]
    fn candidate_proportional_shares() {
        let ads = vec![
            ad("a1", "Macron parle santé", (1000, 1000)),
            ad("a2", "Macron parle économie", (3000, 3000)),
        ];
        let set = preds(&[("a1", &["health"]), ("a2", &["economy"])]);
        let (table, _) = candidate_attention(&ads, &set, &[aliases("macron", &["Macron"])]);
        let health = table.categories.iter().position(|c| c == "health").unwrap();
        let economy = table.categories.iter().position(|c| c == "economy").unwrap();
        let column = &table.candidates[0];
        assert!((column.shares[health] - 0.25).abs() < 1e-12);
        assert!((column.shares[economy] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn candidate_multi_label_splits_evenly() {
        let ads = vec![ad("a1", "Macron santé et économie", (1000, 1000))];
        let set = preds(&[("a1", &["health", "economy"])]);
        let (table, _) = candidate_attention(&ads, &set, &[aliases("macron", &["Macron"])]);
        let column = &table.candidates[0];
        assert_eq!(column.shares, vec![0.5, 0.5]);
        assert_eq!(column.total_mass, 2000.0);
    }

    #[test]
    fn candidate_without_labeled_mentions_warned() {
        let ads = vec![ad("a1", "Rien du tout", (1000, 1000))];
        let set = preds(&[("a1", &["health"])]);
        let (table, warnings) =
            candidate_attention(&ads, &set, &[aliases("macron", &["Macron"])]);
        assert!(table.candidates.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn candidate_columns_sum_to_one() {
        let ads = vec![
            ad("a1", "Le Pen santé", (1000, 2000)),
            ad("a2", "Le Pen immigration et santé", (4000, 5000)),
        ];
        let set = preds(&[("a1", &["health"]), ("a2", &["immigration", "health"])]);
        let (table, _) = candidate_attention(&ads, &set, &[aliases("lepen", &["Le Pen"])]);
        let sum: f64 = table.candidates[0].shares.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gender_exposure_single_ad() {
        let mut a = ad("a1", "", (1000, 1000));
        a.demographics = vec![demo(Gender::Female, "25-34", 1.0)];
        let set = preds(&[("a1", &["health"])]);
        let (table, warnings) = demographic_exposure(&[a], &set, ExposureAxis::Gender);
        assert!(warnings.is_empty());
        assert_eq!(table.rows[0].shares, vec![1.0, 0.0]);
    }

    #[test]
    fn gender_exposure_weighted_mean() {
        let mut a1 = ad("a1", "", (1000, 1000));
        a1.demographics = vec![demo(Gender::Female, "25-34", 1.0)];
        let mut a2 = ad("a2", "", (1000, 1000));
        a2.demographics = vec![
            demo(Gender::Female, "25-34", 0.5),
            demo(Gender::Male, "25-34", 0.5),
        ];
        let set = preds(&[("a1", &["health"]), ("a2", &["health"])]);
        let (table, _) = demographic_exposure(&[a1, a2], &set, ExposureAxis::Gender);
        assert!((table.rows[0].shares[0] - 0.75).abs() < 1e-12);
        assert!((table.rows[0].shares[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unknown_gender_mass_renormalized() {
        let mut a = ad("a1", "", (1000, 1000));
        a.demographics = vec![
            demo(Gender::Female, "25-34", 0.3),
            demo(Gender::Male, "25-34", 0.1),
            demo(Gender::Unknown, "25-34", 0.6),
        ];
        let set = preds(&[("a1", &["health"])]);
        let (table, _) = demographic_exposure(&[a], &set, ExposureAxis::Gender);
        assert!((table.rows[0].shares[0] - 0.75).abs() < 1e-12);
        assert!((table.rows[0].shares[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn age_axis_aggregates_genders() {
        let mut a = ad("a1", "", (2000, 2000));
        a.demographics = vec![
            demo(Gender::Female, "18-24", 0.25),
            demo(Gender::Male, "18-24", 0.25),
            demo(Gender::Female, "65+", 0.5),
        ];
        let set = preds(&[("a1", &["health"])]);
        let (table, _) = demographic_exposure(&[a], &set, ExposureAxis::Age);
        let row = &table.rows[0];
        let idx_18 = table.buckets.iter().position(|b| b == "18-24").unwrap();
        let idx_65 = table.buckets.iter().position(|b| b == "65+").unwrap();
        assert!((row.shares[idx_18] - 0.5).abs() < 1e-12);
        assert!((row.shares[idx_65] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn region_axis_uses_region_shares() {
        let mut a = ad("a1", "", (1000, 1000));
        a.regions = vec![
            RegionCell {
                region: Region::Bretagne,
                share: 0.4,
            },
            RegionCell {
                region: Region::IleDeFrance,
                share: 0.6,
            },
        ];
        let set = preds(&[("a1", &["health"])]);
        let (table, _) = demographic_exposure(&[a], &set, ExposureAxis::Region);
        let bretagne = table.buckets.iter().position(|b| b == "Bretagne").unwrap();
        let idf = table.buckets.iter().position(|b| b == "Île-de-France").unwrap();
        assert!((table.rows[0].shares[bretagne] - 0.4).abs() < 1e-12);
        assert!((table.rows[0].shares[idf] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn exposure_rows_sum_to_one() {
        let mut a1 = ad("a1", "", (1000, 4999));
        a1.demographics = vec![
            demo(Gender::Female, "18-24", 0.2),
            demo(Gender::Male, "35-44", 0.3),
            demo(Gender::Female, "65+", 0.5),
        ];
        let mut a2 = ad("a2", "", (5000, 9999));
        a2.demographics = vec![
            demo(Gender::Male, "18-24", 0.9),
            demo(Gender::Female, "55-64", 0.1),
        ];
        let set = preds(&[("a1", &["health", "economy"]), ("a2", &["economy"])]);
        for axis in [ExposureAxis::Gender, ExposureAxis::Age] {
            let (table, _) = demographic_exposure(&[a1.clone(), a2.clone()], &set, axis);
            for row in &table.rows {
                let sum: f64 = row.shares.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "{axis:?} {}", row.category_id);
            }
        }
    }

    #[test]
    fn exposure_split_invariance() {
        // splitting an ad into two with the same shares and midpoints
        // summing to the original leaves the table unchanged
        let mut original = ad("a1", "", (0, 4000)); // midpoint 2000
        original.demographics = vec![
            demo(Gender::Female, "18-24", 0.6),
            demo(Gender::Male, "45-54", 0.4),
        ];
        let mut part1 = ad("a1x", "", (500, 500));
        part1.demographics = original.demographics.clone();
        let mut part2 = ad("a1y", "", (1500, 1500));
        part2.demographics = original.demographics.clone();

        let set_a = preds(&[("a1", &["health"])]);
        let set_b = preds(&[("a1x", &["health"]), ("a1y", &["health"])]);
        let (table_a, _) = demographic_exposure(&[original], &set_a, ExposureAxis::Gender);
        let (table_b, _) =
            demographic_exposure(&[part1, part2], &set_b, ExposureAxis::Gender);
        for (x, y) in table_a.rows[0].shares.iter().zip(&table_b.rows[0].shares) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_single_ad_matches_its_shares() {
        let mut a = ad("a1", "", (1000, 1000));
        a.demographics = vec![
            demo(Gender::Female, "25-34", 0.7),
            demo(Gender::Male, "25-34", 0.3),
        ];
        let set = preds(&[("a1", &["health"])]);
        let base = baseline(&[a], &set, ExposureAxis::Gender).unwrap();
        assert!((base.shares[0] - 0.7).abs() < 1e-12);
        assert!((base.shares[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn baseline_counts_ads_once_regardless_of_labels() {
        let mut a1 = ad("a1", "", (1000, 1000));
        a1.demographics = vec![demo(Gender::Female, "25-34", 1.0)];
        let mut a2 = ad("a2", "", (1000, 1000));
        a2.demographics = vec![demo(Gender::Male, "25-34", 1.0)];
        let multi = preds(&[("a1", &["health", "economy", "energy"]), ("a2", &["health"])]);
        let single = preds(&[("a1", &["health"]), ("a2", &["health"])]);
        let base_multi = baseline(&[a1.clone(), a2.clone()], &multi, ExposureAxis::Gender).unwrap();
        let base_single = baseline(&[a1, a2], &single, ExposureAxis::Gender).unwrap();
        assert_eq!(base_multi.shares, base_single.shares);
        assert!((base_multi.shares[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn baseline_requires_labeled_ads() {
        let a = ad("a1", "", (1000, 1000));
        let set = preds(&[("a1", &[])]);
        assert!(matches!(
            baseline(&[a], &set, ExposureAxis::Gender),
            Err(AttentionError::NoLabeledAds)
        ));
    }

    fn flag_fixture(share: f64, base: f64) -> (ExposureTable, BaselineRow) {
        let axis = ExposureAxis::Gender;
        let table = ExposureTable {
            axis,
            buckets: axis.buckets(),
            rows: vec![ExposureRow {
                category_id: "health".to_string(),
                shares: vec![share, 1.0 - share],
                total_mass: 1.0,
            }],
        };
        let baseline = BaselineRow {
            axis,
            buckets: axis.buckets(),
            shares: vec![base, 1.0 - base],
            total_mass: 1.0,
        };
        (table, baseline)
    }

    #[test]
    fn flag_rule_examples() {
        let (table, base) = flag_fixture(0.10, 0.10);
        let flags = flag_exposure(&table, &base, 0.2).unwrap();
        assert_eq!(flags.get(0, 0), ExposureFlag::Neutral);

        let (table, base) = flag_fixture(0.13, 0.10);
        let flags = flag_exposure(&table, &base, 0.2).unwrap();
        assert_eq!(flags.get(0, 0), ExposureFlag::Over);

        let (table, base) = flag_fixture(0.085, 0.10);
        let flags = flag_exposure(&table, &base, 0.2).unwrap();
        assert_eq!(flags.get(0, 0), ExposureFlag::Neutral);

        let (table, base) = flag_fixture(0.079, 0.10);
        let flags = flag_exposure(&table, &base, 0.2).unwrap();
        assert_eq!(flags.get(0, 0), ExposureFlag::Under);
    }

    #[test]
    fn huge_rho_flags_nothing() {
        let (table, base) = flag_fixture(0.9, 0.10);
        let flags = flag_exposure(&table, &base, 10.0).unwrap();
        for i in 0..table.rows.len() {
            for j in 0..table.buckets.len() {
                assert_eq!(flags.get(i, j), ExposureFlag::Neutral);
            }
        }
    }

    #[test]
    fn flag_bucket_mismatch_rejected() {
        let (table, _) = flag_fixture(0.5, 0.5);
        let bad = BaselineRow {
            axis: ExposureAxis::Age,
            buckets: ExposureAxis::Age.buckets(),
            shares: vec![0.0; 7],
            total_mass: 1.0,
        };
        assert!(matches!(
            flag_exposure(&table, &bad, 0.2),
            Err(AttentionError::BucketMismatch)
        ));
    }

    #[test]
    fn prediction_set_csv_round_trip() {
        let set = preds(&[("a1", &["health", "economy"]), ("a2", &[]), ("a3", &["x"])]);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let reread = PredictionSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(set, reread);
    }

    #[test]
    fn renders_are_deterministic() {
        let mut a = ad("a1", "", (1000, 1000));
        a.demographics = vec![demo(Gender::Female, "25-34", 1.0)];
        let set = preds(&[("a1", &["health"])]);
        let (table, _) = demographic_exposure(&[a.clone()], &set, ExposureAxis::Gender);
        let base = baseline(&[a], &set, ExposureAxis::Gender).unwrap();
        let flags = flag_exposure(&table, &base, 0.2).unwrap();
        assert_eq!(
            exposure_table_csv(&table, Some(&base)),
            exposure_table_csv(&table, Some(&base))
        );
        let md = exposure_table_markdown(&table, Some(&base), Some(&flags));
        assert_eq!(md, exposure_table_markdown(&table, Some(&base), Some(&flags)));
        assert!(md.contains("any (baseline)"));
        assert!(flags.to_csv().starts_with("category,female,male"));
    }
}
