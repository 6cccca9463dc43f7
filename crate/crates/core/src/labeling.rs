//! From raw annotation votes to label matrices and dataset splits.
//!
//! Two aggregations are supported: majority vote (binary entries, rows
//! without any agreed category dropped) and the soft encoding 0.3/0.6/1.0
//! for one/two/three supporting votes (all rows kept).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::ingest::{ParseOutcome, RowError};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{0}")]
    Invalid(String),
    #[error("operation requires a matrix in {expected:?} mode")]
    WrongMode { expected: LabelMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Binary,
    Soft,
}

/// One annotator's category choices for one ad. `duration_seconds` is the
/// whole-survey duration for this worker, used by the speed filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationVote {
    pub worker_id: String,
    pub ad_id: String,
    pub categories: BTreeSet<String>,
    pub duration_seconds: u64,
    pub submitted_at: DateTime<Utc>,
}

/// Exactly three votes from distinct workers for one ad.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteAssembly {
    pub ad_id: String,
    pub votes: [AnnotationVote; 3],
}

/// Ads-by-categories label matrix, dense row-major.
///
/// Binary entries are 0/1; soft entries are 0, 0.3, 0.6 or 1.0 (the
/// three-vote encoding). Matrices produced by [`vm_aggregate`] have at
/// least one nonzero per row; constructed matrices (e.g. model
/// predictions) may carry empty rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    ad_ids: Vec<String>,
    category_ids: Vec<String>,
    entries: Vec<f64>,
    mode: LabelMode,
}

fn valid_entry(value: f64, mode: LabelMode) -> bool {
    match mode {
        LabelMode::Binary => value == 0.0 || value == 1.0,
        LabelMode::Soft => value == 0.0 || value == 0.3 || value == 0.6 || value == 1.0,
    }
}

impl LabelMatrix {
    pub fn new(
        ad_ids: Vec<String>,
        category_ids: Vec<String>,
        entries: Vec<f64>,
        mode: LabelMode,
    ) -> Result<Self, LabelingError> {
        if entries.len() != ad_ids.len() * category_ids.len() {
            return Err(LabelingError::Invalid(format!(
                "entry count {} does not match {} ads x {} categories",
                entries.len(),
                ad_ids.len(),
                category_ids.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &ad_ids {
            if !seen.insert(id) {
                return Err(LabelingError::Invalid(format!("duplicate ad id {id:?}")));
            }
        }
        let mut seen = BTreeSet::new();
        for id in &category_ids {
            if !seen.insert(id) {
                return Err(LabelingError::Invalid(format!(
                    "duplicate category id {id:?}"
                )));
            }
        }
        if let Some(bad) = entries.iter().find(|v| !valid_entry(**v, mode)) {
            return Err(LabelingError::Invalid(format!(
                "entry {bad} not allowed in {mode:?} mode"
            )));
        }
        Ok(LabelMatrix {
            ad_ids,
            category_ids,
            entries,
            mode,
        })
    }

    pub fn rows(&self) -> usize {
        self.ad_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.category_ids.len()
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn ad_ids(&self) -> &[String] {
        &self.ad_ids
    }

    pub fn category_ids(&self) -> &[String] {
        &self.category_ids
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.category_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let cols = self.category_ids.len();
        &self.entries[row * cols..(row + 1) * cols]
    }

    pub fn ad_index(&self, ad_id: &str) -> Option<usize> {
        self.ad_ids.iter().position(|a| a == ad_id)
    }

    pub fn category_index(&self, category_id: &str) -> Option<usize> {
        self.category_ids.iter().position(|c| c == category_id)
    }

    /// Number of rows with a positive entry in the given column.
    pub fn support(&self, col: usize) -> usize {
        (0..self.rows()).filter(|&r| self.get(r, col) > 0.0).count()
    }

    /// Category ids with a positive entry in the given row.
    pub fn row_labels(&self, row: usize) -> Vec<&str> {
        self.row(row)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| self.category_ids[j].as_str())
            .collect()
    }

    /// Restricts the matrix to the given ads, in the given order.
    pub fn select_rows(&self, ad_ids: &[String]) -> Result<LabelMatrix, LabelingError> {
        let mut entries = Vec::with_capacity(ad_ids.len() * self.cols());
        for id in ad_ids {
            let row = self
                .ad_index(id)
                .ok_or_else(|| LabelingError::Invalid(format!("unknown ad id {id:?}")))?;
            entries.extend_from_slice(self.row(row));
        }
        LabelMatrix::new(ad_ids.to_vec(), self.category_ids.clone(), entries, self.mode)
    }

    /// CSV export: first column `ad_id`, then one column per category.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), LabelingError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["ad_id".to_string()];
        header.extend(self.category_ids.iter().cloned());
        w.write_record(&header)
            .map_err(|e| LabelingError::Schema(e.to_string()))?;
        for (i, ad_id) in self.ad_ids.iter().enumerate() {
            let mut record = vec![ad_id.clone()];
            record.extend(self.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&record)
                .map_err(|e| LabelingError::Schema(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, mode: LabelMode) -> Result<LabelMatrix, LabelingError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| LabelingError::Schema(e.to_string()))?
            .clone();
        if header.get(0) != Some("ad_id") {
            return Err(LabelingError::Schema(
                "first column must be ad_id".to_string(),
            ));
        }
        let category_ids: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
        let mut ad_ids = Vec::new();
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| LabelingError::Schema(e.to_string()))?;
            if record.len() != category_ids.len() + 1 {
                return Err(LabelingError::Schema(format!(
                    "row for {:?} has {} fields, expected {}",
                    record.get(0).unwrap_or(""),
                    record.len(),
                    category_ids.len() + 1
                )));
            }
            ad_ids.push(record.get(0).unwrap_or("").to_string());
            for field in record.iter().skip(1) {
                let value: f64 = field
                    .parse()
                    .map_err(|_| LabelingError::Schema(format!("malformed entry {field:?}")))?;
                entries.push(value);
            }
        }
        LabelMatrix::new(ad_ids, category_ids, entries, mode)
    }
}

/// Keeps votes whose survey duration is at least `min_duration_seconds`
/// (inclusive; the default threshold is 240).
pub fn filter_votes(votes: Vec<AnnotationVote>, min_duration_seconds: u64) -> Vec<AnnotationVote> {
    votes
        .into_iter()
        .filter(|v| v.duration_seconds >= min_duration_seconds)
        .collect()
}

/// Groups votes per ad and keeps the three earliest votes from distinct
/// workers (earliest vote wins per worker, ordered by
/// `(submitted_at, worker_id)`). Ads with fewer than three distinct
/// workers are dropped. Output is sorted by ad id.
pub fn assemble(votes: Vec<AnnotationVote>) -> Vec<VoteAssembly> {
    let mut per_ad: BTreeMap<String, Vec<AnnotationVote>> = BTreeMap::new();
    for vote in votes {
        per_ad.entry(vote.ad_id.clone()).or_default().push(vote);
    }
    let mut assemblies = Vec::new();
    for (ad_id, mut ad_votes) in per_ad {
        ad_votes.sort_by(|a, b| {
            a.submitted_at
                .cmp(&b.submitted_at)
                .then_with(|| a.worker_id.cmp(&b.worker_id))
                .then_with(|| a.categories.cmp(&b.categories))
        });
        let mut seen_workers = BTreeSet::new();
        let mut picked = Vec::new();
        for vote in ad_votes {
            if seen_workers.insert(vote.worker_id.clone()) {
                picked.push(vote);
                if picked.len() == 3 {
                    break;
                }
            }
        }
        if picked.len() == 3 {
            let votes: [AnnotationVote; 3] = picked.try_into().expect("exactly three votes");
            assemblies.push(VoteAssembly { ad_id, votes });
        }
    }
    assemblies
}

fn voted_categories(assemblies: &[VoteAssembly]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for assembly in assemblies {
        for vote in &assembly.votes {
            set.extend(vote.categories.iter().cloned());
        }
    }
    set.into_iter().collect()
}

fn vote_count(assembly: &VoteAssembly, category: &str) -> usize {
    assembly
        .votes
        .iter()
        .filter(|v| v.categories.contains(category))
        .count()
}

/// Majority-vote aggregation: entry 1 iff at least two of the three votes
/// include the category. Ads whose majority set is empty are dropped; when
/// annotators agree on several categories, all of them are kept.
pub fn vm_aggregate(assemblies: &[VoteAssembly]) -> LabelMatrix {
    let categories = voted_categories(assemblies);
    let mut ad_ids = Vec::new();
    let mut entries = Vec::new();
    for assembly in assemblies {
        let row: Vec<f64> = categories
            .iter()
            .map(|c| if vote_count(assembly, c) >= 2 { 1.0 } else { 0.0 })
            .collect();
        if row.iter().any(|v| *v > 0.0) {
            ad_ids.push(assembly.ad_id.clone());
            entries.extend(row);
        }
    }
    LabelMatrix::new(ad_ids, categories, entries, LabelMode::Binary)
        .expect("aggregation produces a valid binary matrix")
}

/// Soft aggregation: entry 0.3/0.6/1.0 for one/two/three supporting votes.
/// No rows are dropped.
pub fn distrib_aggregate(assemblies: &[VoteAssembly]) -> LabelMatrix {
    let categories = voted_categories(assemblies);
    let mut ad_ids = Vec::new();
    let mut entries = Vec::new();
    for assembly in assemblies {
        ad_ids.push(assembly.ad_id.clone());
        for category in &categories {
            entries.push(match vote_count(assembly, category) {
                0 => 0.0,
                1 => 0.3,
                2 => 0.6,
                _ => 1.0,
            });
        }
    }
    LabelMatrix::new(ad_ids, categories, entries, LabelMode::Soft)
        .expect("aggregation produces a valid soft matrix")
}

/// Fraction of rows carrying two or more labels. Binary matrices only.
pub fn multi_label_fraction(matrix: &LabelMatrix) -> Result<f64, LabelingError> {
    if matrix.mode() != LabelMode::Binary {
        return Err(LabelingError::WrongMode {
            expected: LabelMode::Binary,
        });
    }
    if matrix.rows() == 0 {
        return Ok(0.0);
    }
    let multi = (0..matrix.rows())
        .filter(|&r| matrix.row(r).iter().filter(|v| **v > 0.0).count() >= 2)
        .count();
    Ok(multi as f64 / matrix.rows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitParams {
    /// Test ads drawn per eligible category (default 100).
    pub per_category: usize,
    /// Categories below this support are not sampled for the test set
    /// (default 90).
    pub min_support: usize,
    /// Share of the non-test remainder assigned to validation (default 0.1).
    pub validation_fraction: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            per_category: 100,
            min_support: 90,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitWarning {
    pub category_id: String,
    pub requested: usize,
    pub available: usize,
}

/// Builds a test set balanced per category, then splits the remainder into
/// train and validation.
///
/// Categories with support at or above `min_support` are processed in
/// descending-support order (ties by category id); for each, up to
/// `per_category` not-yet-selected ads carrying the label are drawn without
/// replacement. Multi-label ads count for every category they carry, so the
/// test set is a deduplicated union. The remainder is shuffled and split by
/// `validation_fraction`. Deterministic in `(matrix, params, seed)`.
pub fn stratified_test_split(
    matrix: &LabelMatrix,
    params: &SplitParams,
    seed: u64,
) -> Result<(DatasetSplit, Vec<SplitWarning>), LabelingError> {
    if matrix.mode() != LabelMode::Binary {
        return Err(LabelingError::WrongMode {
            expected: LabelMode::Binary,
        });
    }
    if params.per_category == 0 {
        return Err(LabelingError::Invalid(
            "per_category must be at least 1".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&params.validation_fraction) {
        return Err(LabelingError::Invalid(format!(
            "validation_fraction {} out of [0,1]",
            params.validation_fraction
        )));
    }

    let mut eligible: Vec<(usize, usize)> = (0..matrix.cols())
        .map(|j| (j, matrix.support(j)))
        .filter(|(_, support)| *support >= params.min_support)
        .collect();
    eligible.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| matrix.category_ids()[a.0].cmp(&matrix.category_ids()[b.0]))
    });

    let mut rng = SeededRng::new(seed);
    let mut selected: BTreeSet<usize> = BTreeSet::new();
    let mut warnings = Vec::new();
    for (col, _) in eligible {
        let pool: Vec<usize> = (0..matrix.rows())
            .filter(|&r| matrix.get(r, col) > 0.0 && !selected.contains(&r))
            .collect();
        if pool.len() < params.per_category {
            warnings.push(SplitWarning {
                category_id: matrix.category_ids()[col].clone(),
                requested: params.per_category,
                available: pool.len(),
            });
        }
        let take = params.per_category.min(pool.len());
        for idx in rng.sample_indices(pool.len(), take) {
            selected.insert(pool[idx]);
        }
    }

    let test: Vec<String> = selected
        .iter()
        .map(|&r| matrix.ad_ids()[r].clone())
        .collect();
    let mut remaining: Vec<usize> = (0..matrix.rows())
        .filter(|r| !selected.contains(r))
        .collect();
    rng.shuffle(&mut remaining);
    let validation_count =
        ((remaining.len() as f64) * params.validation_fraction).round() as usize;
    let validation_count = validation_count.min(remaining.len());
    let mut validation: Vec<usize> = remaining[..validation_count].to_vec();
    let mut train: Vec<usize> = remaining[validation_count..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();

    let split = DatasetSplit {
        train: train.iter().map(|&r| matrix.ad_ids()[r].clone()).collect(),
        validation: validation
            .iter()
            .map(|&r| matrix.ad_ids()[r].clone())
            .collect(),
        test,
        seed,
    };
    Ok((split, warnings))
}

/// Parses the annotations CSV
/// (`ad_id,worker_id,categories,duration_seconds,submitted_at`, with
/// categories `|`-separated). Malformed rows are collected per line.
pub fn parse_annotations<R: Read>(
    reader: R,
) -> Result<ParseOutcome<AnnotationVote>, LabelingError> {
    let mut bytes = Vec::new();
    let mut reader = reader;
    reader.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| LabelingError::Schema("input is not valid UTF-8".to_string()))?;

    let mut csv_reader = csv::Reader::from_reader(text.as_bytes());
    let headers = csv_reader
        .headers()
        .map_err(|e| LabelingError::Schema(format!("cannot read header: {e}")))?
        .clone();
    let required = [
        "ad_id",
        "worker_id",
        "categories",
        "duration_seconds",
        "submitted_at",
    ];
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(required) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabelingError::Schema(format!("missing required column {name:?}")))?;
    }
    let [ad_col, worker_col, cat_col, dur_col, time_col] = cols;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let line = (i + 2) as u64;
        let fail = |message: String, errors: &mut Vec<RowError>| {
            errors.push(RowError { line, message });
        };
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                fail(format!("unreadable row: {e}"), &mut errors);
                continue;
            }
        };
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();
        let ad_id = field(ad_col);
        let worker_id = field(worker_col);
        if ad_id.is_empty() || worker_id.is_empty() {
            fail("ad_id and worker_id must be non-empty".to_string(), &mut errors);
            continue;
        }
        let categories: BTreeSet<String> = field(cat_col)
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if categories.is_empty() {
            fail("vote has no categories".to_string(), &mut errors);
            continue;
        }
        let duration_seconds = match field(dur_col).parse::<u64>() {
            Ok(d) => d,
            Err(_) => {
                fail(format!("malformed duration {:?}", field(dur_col)), &mut errors);
                continue;
            }
        };
        let submitted_at = match DateTime::parse_from_rfc3339(field(time_col)) {
            Ok(t) => t.with_timezone(&Utc),
            Err(_) => {
                fail(format!("malformed timestamp {:?}", field(time_col)), &mut errors);
                continue;
            }
        };
        records.push(AnnotationVote {
            worker_id: worker_id.to_string(),
            ad_id: ad_id.to_string(),
            categories,
            duration_seconds,
            submitted_at,
        });
    }
    Ok(ParseOutcome { records, errors })
}
