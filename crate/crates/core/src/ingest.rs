//! Parsing, normalization, deduplication, and enrichment of ad records and
//! advertiser daily reports.
//!
//! Platforms report impressions and spend only as intervals, so every
//! numeric estimate here goes through [`midpoint`], which flags open-ended
//! top buckets instead of guessing an upper bound.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8")]
    Utf8,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct InvalidRange(String);

/// An interval of values as reported by the platform. A missing upper bound
/// means the open-ended top bucket (e.g. "1000000+").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lower: u64,
    pub upper: Option<u64>,
}

impl ValueRange {
    pub fn new(lower: u64, upper: Option<u64>) -> Result<Self, InvalidRange> {
        if let Some(u) = upper {
            if lower > u {
                return Err(InvalidRange(format!(
                    "range lower bound {lower} exceeds upper bound {u}"
                )));
            }
        }
        Ok(ValueRange { lower, upper })
    }

    pub fn closed(lower: u64, upper: u64) -> Result<Self, InvalidRange> {
        Self::new(lower, Some(upper))
    }

    pub fn open_ended(lower: u64) -> Self {
        ValueRange { lower, upper: None }
    }

    /// Parses textual range forms: `"1000-4999"`, `"1000000+"`, or a bare
    /// number (treated as an exact value). Commas and spaces are ignored.
    pub fn parse(text: &str) -> Result<Self, InvalidRange> {
        let cleaned: String = text
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '\u{a0}' | '\u{202f}'))
            .collect();
        let parse_num = |s: &str| -> Result<u64, InvalidRange> {
            s.parse::<u64>()
                .map_err(|_| InvalidRange(format!("malformed number {s:?} in range {text:?}")))
        };
        if let Some(rest) = cleaned.strip_suffix('+') {
            return Ok(ValueRange::open_ended(parse_num(rest)?));
        }
        match cleaned.split_once('-') {
            Some((lo, hi)) => ValueRange::new(parse_num(lo)?, Some(parse_num(hi)?)),
            None => {
                let n = parse_num(&cleaned)?;
                Ok(ValueRange {
                    lower: n,
                    upper: Some(n),
                })
            }
        }
    }
}

/// Point estimate of a [`ValueRange`]. Open-ended ranges fall back to the
/// lower bound and are marked so reports can footnote the underestimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Midpoint {
    pub value: f64,
    pub open_ended: bool,
}

pub fn midpoint(range: &ValueRange) -> Midpoint {
    match range.upper {
        Some(upper) => Midpoint {
            value: (range.lower as f64 + upper as f64) / 2.0,
            open_ended: false,
        },
        None => Midpoint {
            value: range.lower as f64,
            open_ended: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            "unknown" => Ok(Gender::Unknown),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::Female => write!(f, "female"),
            Gender::Male => write!(f, "male"),
            Gender::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgeBucket {
    From13To17,
    From18To24,
    From25To34,
    From35To44,
    From45To54,
    From55To64,
    From65Up,
}

impl AgeBucket {
    pub const ALL: [AgeBucket; 7] = [
        AgeBucket::From13To17,
        AgeBucket::From18To24,
        AgeBucket::From25To34,
        AgeBucket::From35To44,
        AgeBucket::From45To54,
        AgeBucket::From55To64,
        AgeBucket::From65Up,
    ];
}

impl FromStr for AgeBucket {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "13-17" => Ok(AgeBucket::From13To17),
            "18-24" => Ok(AgeBucket::From18To24),
            "25-34" => Ok(AgeBucket::From25To34),
            "35-44" => Ok(AgeBucket::From35To44),
            "45-54" => Ok(AgeBucket::From45To54),
            "55-64" => Ok(AgeBucket::From55To64),
            "65+" | "65" => Ok(AgeBucket::From65Up),
            other => Err(format!("unknown age bucket {other:?}")),
        }
    }
}

impl fmt::Display for AgeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            AgeBucket::From13To17 => "13-17",
            AgeBucket::From18To24 => "18-24",
            AgeBucket::From25To34 => "25-34",
            AgeBucket::From35To44 => "35-44",
            AgeBucket::From45To54 => "45-54",
            AgeBucket::From55To64 => "55-64",
            AgeBucket::From65Up => "65+",
        };
        write!(f, "{label}")
    }
}

/// The 13 metropolitan-France regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Region {
    AuvergneRhoneAlpes,
    BourgogneFrancheComte,
    Bretagne,
    CentreValDeLoire,
    Corse,
    GrandEst,
    HautsDeFrance,
    IleDeFrance,
    Normandie,
    NouvelleAquitaine,
    Occitanie,
    PaysDeLaLoire,
    ProvenceAlpesCoteDAzur,
}

impl Region {
    pub const ALL: [Region; 13] = [
        Region::AuvergneRhoneAlpes,
        Region::BourgogneFrancheComte,
        Region::Bretagne,
        Region::CentreValDeLoire,
        Region::Corse,
        Region::GrandEst,
        Region::HautsDeFrance,
        Region::IleDeFrance,
        Region::Normandie,
        Region::NouvelleAquitaine,
        Region::Occitanie,
        Region::PaysDeLaLoire,
        Region::ProvenceAlpesCoteDAzur,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Region::AuvergneRhoneAlpes => "Auvergne-Rhône-Alpes",
            Region::BourgogneFrancheComte => "Bourgogne-Franche-Comté",
            Region::Bretagne => "Bretagne",
            Region::CentreValDeLoire => "Centre-Val de Loire",
            Region::Corse => "Corse",
            Region::GrandEst => "Grand Est",
            Region::HautsDeFrance => "Hauts-de-France",
            Region::IleDeFrance => "Île-de-France",
            Region::Normandie => "Normandie",
            Region::NouvelleAquitaine => "Nouvelle-Aquitaine",
            Region::Occitanie => "Occitanie",
            Region::PaysDeLaLoire => "Pays de la Loire",
            Region::ProvenceAlpesCoteDAzur => "Provence-Alpes-Côte d'Azur",
        }
    }
}

impl FromStr for Region {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // tolerate case, accents, and hyphen/space variation in inputs
        let wanted = normalize_region_key(s);
        Region::ALL
            .iter()
            .find(|r| normalize_region_key(r.name()) == wanted)
            .copied()
            .ok_or_else(|| format!("unknown region {s:?}"))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

fn normalize_region_key(s: &str) -> String {
    fold_text(s)
        .chars()
        .map(|c| if c == '-' || c == '\'' { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicCell {
    pub gender: Gender,
    pub age_bucket: AgeBucket,
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCell {
    pub region: Region,
    pub share: f64,
}

/// One political ad as normalized from the ad-library export.
#[derive(Debug, Clone, PartialEq)]
pub struct AdRecord {
    pub ad_id: String,
    pub page_id: String,
    pub page_name: String,
    pub creation_time: DateTime<Utc>,
    pub creative_body: String,
    pub bylines: Option<String>,
    pub languages: Vec<String>,
    pub impressions: ValueRange,
    pub currency: String,
    pub spend: ValueRange,
    pub demographics: Vec<DemographicCell>,
    pub regions: Vec<RegionCell>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyReportRow {
    pub page_id: String,
    pub page_name: String,
    pub ads_count: u64,
    pub spend: ValueRange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateAliasSet {
    pub candidate_id: String,
    pub aliases: Vec<String>,
}

impl CandidateAliasSet {
    pub fn new(candidate_id: impl Into<String>, aliases: Vec<String>) -> Result<Self, IngestError> {
        let candidate_id = candidate_id.into();
        if aliases.is_empty() || aliases.iter().any(|a| a.trim().is_empty()) {
            return Err(IngestError::Schema(format!(
                "candidate {candidate_id:?} needs a non-empty list of non-blank aliases"
            )));
        }
        Ok(CandidateAliasSet {
            candidate_id,
            aliases,
        })
    }
}

/// A row that could not be parsed, reported with its 1-based line number
/// (or element index for JSON arrays).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

/// Result of a tolerant parse: well-formed records plus per-row failures.
#[derive(Debug, Clone)]
pub struct ParseOutcome<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowError>,
}

const SHARE_SUM_SLACK: f64 = 1e-6;

// --- Daily report CSV ----------------------------------------------------

/// Parses an advertiser daily report (CSV with header
/// `page_id,page_name,ads_count,spend_lower,spend_upper`).
///
/// Missing required columns abort with a schema error; malformed rows are
/// collected with their line numbers and parsing continues.
pub fn parse_daily_report<R: Read>(reader: R) -> Result<ParseOutcome<DailyReportRow>, IngestError> {
    let mut bytes = Vec::new();
    let mut reader = reader;
    reader.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| IngestError::Utf8)?;

    let mut csv_reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = csv_reader
        .headers()
        .map_err(|e| IngestError::Schema(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["page_id", "page_name", "ads_count", "spend_lower", "spend_upper"];
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(required) {
        *slot = col(name)
            .ok_or_else(|| IngestError::Schema(format!("missing required column {name:?}")))?;
    }
    let [page_id_col, page_name_col, ads_count_col, spend_lower_col, spend_upper_col] = cols;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let line = (i + 2) as u64;
        let push_err = |errors: &mut Vec<RowError>, message: String| {
            errors.push(RowError { line, message });
        };
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                push_err(&mut errors, format!("unreadable row: {e}"));
                continue;
            }
        };
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();
        let page_id = field(page_id_col);
        if page_id.is_empty() {
            push_err(&mut errors, "missing page_id".to_string());
            continue;
        }
        let ads_count = match field(ads_count_col).parse::<u64>() {
            Ok(n) => n,
            Err(_) => {
                push_err(
                    &mut errors,
                    format!("malformed ads_count {:?}", field(ads_count_col)),
                );
                continue;
            }
        };
        let spend_lower = match field(spend_lower_col).parse::<u64>() {
            Ok(n) => n,
            Err(_) => {
                push_err(
                    &mut errors,
                    format!("malformed spend_lower {:?}", field(spend_lower_col)),
                );
                continue;
            }
        };
        let upper_text = field(spend_upper_col);
        let spend_upper = if upper_text.is_empty() {
            None
        } else {
            match upper_text.parse::<u64>() {
                Ok(n) => Some(n),
                Err(_) => {
                    push_err(&mut errors, format!("malformed spend_upper {upper_text:?}"));
                    continue;
                }
            }
        };
        let spend = match ValueRange::new(spend_lower, spend_upper) {
            Ok(r) => r,
            Err(e) => {
                push_err(&mut errors, e.to_string());
                continue;
            }
        };
        records.push(DailyReportRow {
            page_id: page_id.to_string(),
            page_name: field(page_name_col).to_string(),
            ads_count,
            spend,
        });
    }
    Ok(ParseOutcome { records, errors })
}

// --- Ad records (JSON) ----------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumText {
    Uint(u64),
    Text(String),
}

impl NumText {
    fn as_u64(&self) -> Result<u64, InvalidRange> {
        match self {
            NumText::Uint(n) => Ok(*n),
            NumText::Text(s) => {
                let cleaned: String = s
                    .chars()
                    .filter(|c| !matches!(c, ',' | ' ' | '\u{a0}' | '\u{202f}'))
                    .collect();
                cleaned
                    .parse::<u64>()
                    .map_err(|_| InvalidRange(format!("malformed number {s:?}")))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawRange {
    Bounds {
        lower_bound: NumText,
        #[serde(skip_serializing_if = "Option::is_none")]
        upper_bound: Option<NumText>,
    },
    Text(String),
}

impl RawRange {
    fn to_range(&self) -> Result<ValueRange, InvalidRange> {
        match self {
            RawRange::Bounds {
                lower_bound,
                upper_bound,
            } => {
                let lower = lower_bound.as_u64()?;
                let upper = upper_bound.as_ref().map(|u| u.as_u64()).transpose()?;
                ValueRange::new(lower, upper)
            }
            RawRange::Text(s) => ValueRange::parse(s),
        }
    }

    fn from_range(range: &ValueRange) -> Self {
        RawRange::Bounds {
            lower_bound: NumText::Text(range.lower.to_string()),
            upper_bound: range.upper.map(|u| NumText::Text(u.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawShare {
    Num(f64),
    Text(String),
}

impl RawShare {
    fn as_f64(&self) -> Result<f64, String> {
        match self {
            RawShare::Num(v) => Ok(*v),
            RawShare::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("malformed percentage {s:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawDemographicCell {
    gender: String,
    age: String,
    percentage: RawShare,
}

#[derive(Serialize, Deserialize)]
struct RawRegionCell {
    region: String,
    percentage: RawShare,
}

#[derive(Serialize, Deserialize)]
struct RawAd {
    id: String,
    page_id: String,
    page_name: String,
    ad_creation_time: String,
    ad_creative_body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bylines: Option<String>,
    languages: Vec<String>,
    impressions: RawRange,
    spend: RawRange,
    currency: String,
    #[serde(default)]
    demographic_distribution: Vec<RawDemographicCell>,
    #[serde(default)]
    region_distribution: Vec<RawRegionCell>,
}

fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Ok(dt.with_timezone(&Utc));
    }
    if let Ok(date) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        if let Some(dt) = date.and_hms_opt(0, 0, 0) {
            return Ok(dt.and_utc());
        }
    }
    Err(format!("malformed timestamp {text:?}"))
}

fn validate_share(context: &str, share: f64) -> Result<f64, String> {
    if !(0.0..=1.0).contains(&share) || !share.is_finite() {
        return Err(format!("{context} share {share} out of [0,1]"));
    }
    Ok(share)
}

impl RawAd {
    fn into_record(self) -> Result<AdRecord, String> {
        if self.id.trim().is_empty() {
            return Err("empty ad id".to_string());
        }
        let creation_time = parse_timestamp(&self.ad_creation_time)?;
        let mut languages = Vec::new();
        for lang in &self.languages {
            let lang = lang.trim().to_ascii_lowercase();
            if lang.len() != 2 || !lang.chars().all(|c| c.is_ascii_alphabetic()) {
                return Err(format!("malformed language code {lang:?}"));
            }
            languages.push(lang);
        }
        let currency = self.currency.trim().to_ascii_uppercase();
        if currency.len() != 3 || !currency.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(format!("malformed currency code {:?}", self.currency));
        }
        let impressions = self.impressions.to_range().map_err(|e| e.to_string())?;
        let spend = self.spend.to_range().map_err(|e| e.to_string())?;

        let mut demographics = Vec::new();
        let mut demo_sum = 0.0;
        for cell in &self.demographic_distribution {
            let gender: Gender = cell.gender.parse()?;
            let age_bucket: AgeBucket = cell.age.parse()?;
            let share = validate_share("demographic", cell.percentage.as_f64()?)?;
            demo_sum += share;
            demographics.push(DemographicCell {
                gender,
                age_bucket,
                share,
            });
        }
        if demo_sum > 1.0 + SHARE_SUM_SLACK {
            return Err(format!("demographic shares sum to {demo_sum}, above 1"));
        }

        let mut regions = Vec::new();
        let mut region_sum = 0.0;
        for cell in &self.region_distribution {
            let region: Region = cell.region.parse()?;
            let share = validate_share("region", cell.percentage.as_f64()?)?;
            region_sum += share;
            regions.push(RegionCell { region, share });
        }
        if region_sum > 1.0 + SHARE_SUM_SLACK {
            return Err(format!("region shares sum to {region_sum}, above 1"));
        }

        Ok(AdRecord {
            ad_id: self.id,
            page_id: self.page_id,
            page_name: self.page_name,
            creation_time,
            creative_body: self.ad_creative_body,
            bylines: self.bylines,
            languages,
            impressions,
            currency,
            spend,
            demographics,
            regions,
        })
    }

    fn from_record(ad: &AdRecord) -> Self {
        RawAd {
            id: ad.ad_id.clone(),
            page_id: ad.page_id.clone(),
            page_name: ad.page_name.clone(),
            ad_creation_time: ad
                .creation_time
                .to_rfc3339_opts(SecondsFormat::Secs, true),
            ad_creative_body: ad.creative_body.clone(),
            bylines: ad.bylines.clone(),
            languages: ad.languages.clone(),
            impressions: RawRange::from_range(&ad.impressions),
            spend: RawRange::from_range(&ad.spend),
            currency: ad.currency.clone(),
            demographic_distribution: ad
                .demographics
                .iter()
                .map(|c| RawDemographicCell {
                    gender: c.gender.to_string(),
                    age: c.age_bucket.to_string(),
                    percentage: RawShare::Text(format!("{}", c.share)),
                })
                .collect(),
            region_distribution: ad
                .regions
                .iter()
                .map(|c| RawRegionCell {
                    region: c.region.name().to_string(),
                    percentage: RawShare::Text(format!("{}", c.share)),
                })
                .collect(),
        }
    }
}

/// Parses ad records from newline-delimited JSON or a single JSON array.
///
/// Duplicate ad ids are allowed here (resolved later by [`dedupe`]);
/// non-UTF-8 input is fatal.
pub fn parse_ads<R: Read>(reader: R) -> Result<ParseOutcome<AdRecord>, IngestError> {
    let mut bytes = Vec::new();
    let mut reader = reader;
    reader.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| IngestError::Utf8)?;

    let mut records = Vec::new();
    let mut errors = Vec::new();
    if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(text)?;
        for (i, value) in values.into_iter().enumerate() {
            let line = (i + 1) as u64;
            match serde_json::from_value::<RawAd>(value)
                .map_err(|e| e.to_string())
                .and_then(RawAd::into_record)
            {
                Ok(ad) => records.push(ad),
                Err(message) => errors.push(RowError { line, message }),
            }
        }
    } else {
        for (i, line_text) in text.lines().enumerate() {
            if line_text.trim().is_empty() {
                continue;
            }
            let line = (i + 1) as u64;
            match serde_json::from_str::<RawAd>(line_text)
                .map_err(|e| e.to_string())
                .and_then(RawAd::into_record)
            {
                Ok(ad) => records.push(ad),
                Err(message) => errors.push(RowError { line, message }),
            }
        }
    }
    Ok(ParseOutcome { records, errors })
}

/// Writes ad records as newline-delimited JSON in the same schema
/// [`parse_ads`] reads.
pub fn write_ads<W: std::io::Write>(mut writer: W, ads: &[AdRecord]) -> Result<(), IngestError> {
    for ad in ads {
        let raw = RawAd::from_record(ad);
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads candidate alias sets from a JSON map `candidate_id -> [aliases]`,
/// returned sorted by candidate id.
pub fn load_alias_sets<R: Read>(reader: R) -> Result<Vec<CandidateAliasSet>, IngestError> {
    let map: BTreeMap<String, Vec<String>> = serde_json::from_reader(reader)?;
    map.into_iter()
        .map(|(candidate_id, aliases)| CandidateAliasSet::new(candidate_id, aliases))
        .collect()
}

/// Keeps exactly the ads whose language list contains `lang`
/// (case-insensitive).
pub fn filter_language(ads: Vec<AdRecord>, lang: &str) -> Vec<AdRecord> {
    let wanted = lang.to_ascii_lowercase();
    ads.into_iter()
        .filter(|ad| ad.languages.iter().any(|l| l.eq_ignore_ascii_case(&wanted)))
        .collect()
}

/// One record per ad id: among duplicates the earliest `creation_time` wins
/// (first occurrence on ties). Output is ordered by `(creation_time, ad_id)`.
pub fn dedupe(ads: Vec<AdRecord>) -> Vec<AdRecord> {
    let mut kept: BTreeMap<String, AdRecord> = BTreeMap::new();
    for ad in ads {
        match kept.get(&ad.ad_id) {
            Some(existing) if existing.creation_time <= ad.creation_time => {}
            _ => {
                kept.insert(ad.ad_id.clone(), ad);
            }
        }
    }
    let mut out: Vec<AdRecord> = kept.into_values().collect();
    out.sort_by(|a, b| {
        a.creation_time
            .cmp(&b.creation_time)
            .then_with(|| a.ad_id.cmp(&b.ad_id))
    });
    out
}

/// Corpus-level estimates from range midpoints. Spend is grouped per
/// currency; open-ended counts record how many estimates are lower bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusTotals {
    pub impressions_estimate: f64,
    pub open_ended_impressions: usize,
    pub spend_estimate: BTreeMap<String, f64>,
    pub open_ended_spend: usize,
}

pub fn corpus_totals(ads: &[AdRecord]) -> CorpusTotals {
    let mut totals = CorpusTotals::default();
    for ad in ads {
        let imp = midpoint(&ad.impressions);
        totals.impressions_estimate += imp.value;
        if imp.open_ended {
            totals.open_ended_impressions += 1;
        }
        let spend = midpoint(&ad.spend);
        *totals.spend_estimate.entry(ad.currency.clone()).or_insert(0.0) += spend.value;
        if spend.open_ended {
            totals.open_ended_spend += 1;
        }
    }
    totals
}

/// Lowercases and strips diacritics (NFD, combining marks removed; œ/æ
/// expanded). Used for candidate matching and region normalization.
pub fn fold_text(text: &str) -> String {
    let mut expanded = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            'œ' | 'Œ' => expanded.push_str("oe"),
            'æ' | 'Æ' => expanded.push_str("ae"),
            _ => expanded.push(c),
        }
    }
    expanded
        .to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect()
}

fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut search_from = 0;
    while let Some(found) = haystack[search_from..].find(needle) {
        let start = search_from + found;
        let end = start + needle.len();
        let boundary_before = !haystack[..start]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric());
        let boundary_after = !haystack[end..]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric());
        if boundary_before && boundary_after {
            return true;
        }
        let step = haystack[start..].chars().next().map_or(1, char::len_utf8);
        search_from = start + step;
    }
    false
}

/// True iff any alias occurs in the creative body under case-insensitive,
/// diacritic-insensitive, word-boundary matching.
pub fn match_candidate(ad: &AdRecord, aliases: &CandidateAliasSet) -> bool {
    let body = fold_text(&ad.creative_body);
    aliases
        .aliases
        .iter()
        .any(|alias| contains_word(&body, &fold_text(alias)))
}
