//! Text preprocessing, TF-IDF features, external embedding ingestion, and
//! back-translation data augmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabelMatrix, LabelMode, LabelingError};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum TextFeatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embeddings row {line}: {message}")]
    EmbeddingRow { line: u64, message: String },
    #[error("{0}")]
    Matrix(#[from] LabelingError),
}

/// Error from a translation call; `retriable` distinguishes transport
/// hiccups from permanent failures.
#[derive(Debug, Error, Clone)]
#[error("translation failed: {message}")]
pub struct TranslationError {
    pub message: String,
    pub retriable: bool,
}

impl TranslationError {
    pub fn retriable(message: impl Into<String>) -> Self {
        TranslationError {
            message: message.into(),
            retriable: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        TranslationError {
            message: message.into(),
            retriable: false,
        }
    }
}

// --- Preprocessing ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub remove_links: bool,
    pub remove_emojis: bool,
    pub remove_stopwords: bool,
    pub remove_punct: bool,
    pub lowercase: bool,
    pub stopword_list: BTreeSet<String>,
}

impl PreprocessConfig {
    /// All cleanup steps enabled with the given stopword list.
    pub fn with_all(stopword_list: BTreeSet<String>) -> Self {
        PreprocessConfig {
            remove_links: true,
            remove_emojis: true,
            remove_stopwords: true,
            remove_punct: true,
            lowercase: true,
            stopword_list,
        }
    }

    pub fn validate(&self) -> Result<(), TextFeatError> {
        if self.remove_stopwords && self.stopword_list.is_empty() {
            return Err(TextFeatError::Invalid(
                "remove_stopwords requires a stopword list".to_string(),
            ));
        }
        Ok(())
    }
}

const FRENCH_STOPWORDS: &str = include_str!("../data/stopwords_fr.txt");

/// The bundled French stopword list.
pub fn default_french_stopwords() -> BTreeSet<String> {
    FRENCH_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").expect("valid url regex"))
}

fn is_emoji(c: char) -> bool {
    matches!(c,
        '\u{1F300}'..='\u{1F5FF}'   // miscellaneous symbols and pictographs
        | '\u{1F600}'..='\u{1F64F}' // emoticons
        | '\u{1F680}'..='\u{1F6FF}' // transport and map
        | '\u{1F900}'..='\u{1F9FF}' // supplemental symbols and pictographs
        | '\u{2700}'..='\u{27BF}'   // dingbats
        | '\u{FE00}'..='\u{FE0F}'   // variation selectors
    )
}

/// Tokenization pipeline: strip URLs, strip emojis, lowercase, tokenize
/// into Unicode-letter runs and punctuation runs (apostrophes split words:
/// "l'écologie" becomes "l", "écologie"), then drop punctuation tokens and
/// stopwords. Each step is gated by its config flag.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let without_links = if config.remove_links {
        url_regex().replace_all(text, " ").into_owned()
    } else {
        text.to_string()
    };
    let without_emojis = if config.remove_emojis {
        // replaced by a space so letter runs never merge across an emoji
        without_links
            .chars()
            .map(|c| if is_emoji(c) { ' ' } else { c })
            .collect()
    } else {
        without_links
    };
    let cased = if config.lowercase {
        without_emojis.to_lowercase()
    } else {
        without_emojis
    };

    let mut tokens: Vec<(String, bool)> = Vec::new(); // (token, is_word)
    let mut current = String::new();
    let mut current_is_word = false;
    for c in cased.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push((std::mem::take(&mut current), current_is_word));
            }
            continue;
        }
        let is_word = c.is_alphabetic();
        if !current.is_empty() && is_word != current_is_word {
            tokens.push((std::mem::take(&mut current), current_is_word));
        }
        current.push(c);
        current_is_word = is_word;
    }
    if !current.is_empty() {
        tokens.push((current, current_is_word));
    }

    tokens
        .into_iter()
        .filter(|(_, is_word)| !config.remove_punct || *is_word)
        .map(|(token, _)| token)
        .filter(|token| !config.remove_stopwords || !config.stopword_list.contains(token))
        .collect()
}

// --- TF-IDF -----------------------------------------------------------------

/// Term registry with smoothed inverse document frequencies:
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_index: BTreeMap<String, usize>,
    idf: Vec<f64>,
    document_count: usize,
    min_document_frequency: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from explicit entries (used by model files).
    pub fn from_entries(
        entries: Vec<(String, usize, f64)>,
        document_count: usize,
        min_document_frequency: usize,
    ) -> Result<Self, TextFeatError> {
        let mut terms = vec![String::new(); entries.len()];
        let mut idf = vec![0.0; entries.len()];
        let mut term_index = BTreeMap::new();
        for (term, index, weight) in entries {
            if index >= terms.len() {
                return Err(TextFeatError::Invalid(format!(
                    "vocabulary index {index} out of range for {} terms",
                    terms.len()
                )));
            }
            if !terms[index].is_empty() {
                return Err(TextFeatError::Invalid(format!(
                    "vocabulary index {index} assigned twice"
                )));
            }
            if weight <= 0.0 || !weight.is_finite() {
                return Err(TextFeatError::Invalid(format!(
                    "idf for {term:?} must be positive and finite"
                )));
            }
            if term_index.insert(term.clone(), index).is_some() {
                return Err(TextFeatError::Invalid(format!(
                    "duplicate vocabulary term {term:?}"
                )));
            }
            terms[index] = term;
            idf[index] = weight;
        }
        Ok(Vocabulary {
            terms,
            term_index,
            idf,
            document_count,
            min_document_frequency,
        })
    }

    pub fn dimension(&self) -> usize {
        self.terms.len()
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn min_document_frequency(&self) -> usize {
        self.min_document_frequency
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, f64)> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i, self.idf[i]))
    }
}

/// Fits a vocabulary over the corpus, keeping terms whose document
/// frequency reaches `min_document_frequency`. Indices are assigned in
/// sorted term order.
pub fn fit_tfidf(
    corpus: &[Vec<String>],
    min_document_frequency: usize,
) -> Result<Vocabulary, TextFeatError> {
    if corpus.is_empty() {
        return Err(TextFeatError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let n = corpus.len();
    let mut terms = Vec::new();
    let mut idf = Vec::new();
    let mut term_index = BTreeMap::new();
    for (term, freq) in df {
        if freq < min_document_frequency {
            continue;
        }
        let weight = ((1.0 + n as f64) / (1.0 + freq as f64)).ln() + 1.0;
        term_index.insert(term.to_string(), terms.len());
        terms.push(term.to_string());
        idf.push(weight);
    }
    Ok(Vocabulary {
        terms,
        term_index,
        idf,
        document_count: n,
        min_document_frequency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Tfidf,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
enum FeatureData {
    Sparse(Vec<(usize, f64)>),
    Dense(Vec<f64>),
}

/// A feature vector, sparse (TF-IDF) or dense (external embeddings).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dimension: usize,
    source: FeatureSource,
    data: FeatureData,
}

impl FeatureVector {
    pub fn sparse(
        dimension: usize,
        entries: Vec<(usize, f64)>,
        source: FeatureSource,
    ) -> Result<Self, TextFeatError> {
        let mut last: Option<usize> = None;
        for (index, _) in &entries {
            if *index >= dimension {
                return Err(TextFeatError::Invalid(format!(
                    "sparse index {index} out of dimension {dimension}"
                )));
            }
            if let Some(prev) = last {
                if *index <= prev {
                    return Err(TextFeatError::Invalid(
                        "sparse entries must be strictly index-sorted".to_string(),
                    ));
                }
            }
            last = Some(*index);
        }
        Ok(FeatureVector {
            dimension,
            source,
            data: FeatureData::Sparse(entries),
        })
    }

    pub fn dense(values: Vec<f64>, source: FeatureSource) -> Self {
        FeatureVector {
            dimension: values.len(),
            source,
            data: FeatureData::Dense(values),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match &self.data {
            FeatureData::Sparse(entries) => entries.iter().map(|(i, v)| v * weights[*i]).sum(),
            FeatureData::Dense(values) => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
        }
    }

    /// Visits the nonzero entries in index order.
    pub fn for_each_entry(&self, mut visit: impl FnMut(usize, f64)) {
        match &self.data {
            FeatureData::Sparse(entries) => {
                for (i, v) in entries {
                    visit(*i, *v);
                }
            }
            FeatureData::Dense(values) => {
                for (i, v) in values.iter().enumerate() {
                    if *v != 0.0 {
                        visit(i, *v);
                    }
                }
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.for_each_entry(|_, v| sum += v * v);
        sum.sqrt()
    }
}

/// Raw term counts weighted by idf, L2-normalized when nonzero.
/// Out-of-vocabulary tokens are ignored.
pub fn transform(tokens: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokens {
        if let Some(index) = vocab.index_of(token) {
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(index, count)| (index, count * vocab.idf(index)))
        .collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    FeatureVector::sparse(vocab.dimension(), entries, FeatureSource::Tfidf)
        .expect("transform builds sorted in-range entries")
}

// --- External embeddings ----------------------------------------------------

/// Precomputed per-ad embedding vectors (TSV `ad_id<TAB>v1...<TAB>vd`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vectors: BTreeMap<String, Vec<f64>>,
    dimension: usize,
}

impl EmbeddingTable {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, ad_id: &str) -> Option<&[f64]> {
        self.vectors.get(ad_id).map(Vec::as_slice)
    }

    pub fn feature_vector(&self, ad_id: &str) -> Option<FeatureVector> {
        self.get(ad_id)
            .map(|v| FeatureVector::dense(v.to_vec(), FeatureSource::Embedding))
    }
}

pub fn load_embeddings<R: Read>(reader: R) -> Result<EmbeddingTable, TextFeatError> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dimension: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = (i + 1) as u64;
        let mut fields = line.split('\t');
        let ad_id = fields.next().unwrap_or("").to_string();
        if ad_id.is_empty() {
            return Err(TextFeatError::EmbeddingRow {
                line: line_no,
                message: "empty ad id".to_string(),
            });
        }
        let mut values = Vec::new();
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| TextFeatError::EmbeddingRow {
                line: line_no,
                message: format!("malformed value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(TextFeatError::EmbeddingRow {
                    line: line_no,
                    message: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(TextFeatError::EmbeddingRow {
                line: line_no,
                message: "row has no values".to_string(),
            });
        }
        match dimension {
            None => dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(TextFeatError::EmbeddingRow {
                    line: line_no,
                    message: format!("dimension {} does not match table dimension {d}", values.len()),
                });
            }
            _ => {}
        }
        if vectors.insert(ad_id.clone(), values).is_some() {
            return Err(TextFeatError::EmbeddingRow {
                line: line_no,
                message: format!("duplicate ad id {ad_id:?}"),
            });
        }
    }
    match dimension {
        Some(dimension) => Ok(EmbeddingTable { vectors, dimension }),
        None => Err(TextFeatError::Invalid(
            "embeddings file is empty; dimension unknowable".to_string(),
        )),
    }
}

// --- Back-translation augmentation ------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    /// Per-category fraction of the training support to draw (default 0.4).
    pub fraction: f64,
    pub pivot_language: String,
    pub seed: u64,
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<(), TextFeatError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(TextFeatError::Invalid(format!(
                "augmentation fraction {} out of [0,1]",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// A directional translation service.
pub trait Translator {
    fn translate(
        &self,
        text: &str,
        source_lang: &str,
        target_lang: &str,
    ) -> Result<String, TranslationError>;
}

/// Round trip through the pivot language: source -> pivot -> source.
pub fn back_translate(
    text: &str,
    source_lang: &str,
    pivot_lang: &str,
    translator: &dyn Translator,
) -> Result<String, TranslationError> {
    let through = translator.translate(text, source_lang, pivot_lang)?;
    translator.translate(&through, pivot_lang, source_lang)
}

/// A paraphrase source: the round-trip result of back-translation, or a
/// mock standing in for one.
pub trait Paraphraser {
    fn paraphrase(&self, text: &str) -> Result<String, TranslationError>;
}

/// Adapts any [`Translator`] into a [`Paraphraser`] via [`back_translate`].
pub struct BackTranslation<'a> {
    pub translator: &'a dyn Translator,
    pub source_lang: String,
    pub pivot_lang: String,
}

impl Paraphraser for BackTranslation<'_> {
    fn paraphrase(&self, text: &str) -> Result<String, TranslationError> {
        back_translate(text, &self.source_lang, &self.pivot_lang, self.translator)
    }
}

/// Echoes the input for any direction (`mock:identity`).
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslationError> {
        Ok(text.to_string())
    }
}

impl Paraphraser for IdentityTranslator {
    fn paraphrase(&self, text: &str) -> Result<String, TranslationError> {
        Ok(text.to_string())
    }
}

pub fn reverse_words(text: &str) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    words.reverse();
    words.join(" ")
}

/// Reverses word order on every call; two passes restore the (whitespace-
/// normalized) input, which makes it useful for exercising
/// [`back_translate`]'s composition.
pub struct ReverseWordsTranslator;

impl Translator for ReverseWordsTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslationError> {
        Ok(reverse_words(text))
    }
}

/// Paraphrase mock whose round trip nets one word reversal
/// (`mock:reverse`): stands in for a back-translation service that returns
/// a reordered paraphrase.
pub struct ReverseWordsParaphrase;

impl Paraphraser for ReverseWordsParaphrase {
    fn paraphrase(&self, text: &str) -> Result<String, TranslationError> {
        Ok(reverse_words(text))
    }
}

/// Wire format of the translation endpoint: POST a JSON request, receive a
/// JSON response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslationResponse {
    pub text: String,
}

/// Per category (in matrix column order), draws
/// `floor(fraction * support)` labeled ads without replacement. An ad
/// drawn for several categories appears once per category here but is
/// translated only once by [`augment_dataset`].
pub fn sample_for_augmentation(
    train: &LabelMatrix,
    plan: &AugmentPlan,
) -> Result<BTreeSet<(String, String)>, TextFeatError> {
    if train.mode() != LabelMode::Binary {
        return Err(TextFeatError::Invalid(
            "augmentation sampling needs a binary matrix".to_string(),
        ));
    }
    plan.validate()?;
    let mut rng = SeededRng::new(plan.seed);
    let mut draws = BTreeSet::new();
    for col in 0..train.cols() {
        let pool: Vec<usize> = (0..train.rows())
            .filter(|&r| train.get(r, col) > 0.0)
            .collect();
        let take = (plan.fraction * pool.len() as f64).floor() as usize;
        for idx in rng.sample_indices(pool.len(), take) {
            draws.insert((
                train.ad_ids()[pool[idx]].clone(),
                train.category_ids()[col].clone(),
            ));
        }
    }
    Ok(draws)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentFailure {
    pub ad_id: String,
    pub message: String,
    pub retriable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AugmentReport {
    /// Distinct ads drawn for translation.
    pub drawn: usize,
    /// Synthetic rows added.
    pub added: usize,
    /// Paraphrases dropped for being identical to their original.
    pub dropped_identical: usize,
    pub failures: Vec<AugmentFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub texts: BTreeMap<String, String>,
    pub matrix: LabelMatrix,
    pub report: AugmentReport,
}

/// Suffix appended to an original ad id to name its synthetic paraphrase.
pub const SYNTHETIC_SUFFIX: &str = "#bt";

/// Enlarges a training set with back-translated paraphrases.
///
/// Each drawn ad yields one synthetic ad (`<id>#bt`) carrying the
/// original's full label row; paraphrases identical to their original are
/// dropped, and translation failures are collected per ad without aborting
/// the rest.
pub fn augment_dataset(
    train: &LabelMatrix,
    texts: &BTreeMap<String, String>,
    plan: &AugmentPlan,
    paraphraser: &dyn Paraphraser,
) -> Result<AugmentOutcome, TextFeatError> {
    for ad_id in train.ad_ids() {
        if !texts.contains_key(ad_id) {
            return Err(TextFeatError::Invalid(format!(
                "no text for train ad {ad_id:?}"
            )));
        }
    }
    let draws = sample_for_augmentation(train, plan)?;
    let drawn_ids: BTreeSet<&String> = draws.iter().map(|(ad, _)| ad).collect();

    let mut report = AugmentReport {
        drawn: drawn_ids.len(),
        ..AugmentReport::default()
    };
    let mut out_texts = texts.clone();
    let mut ad_ids: Vec<String> = train.ad_ids().to_vec();
    let mut entries: Vec<f64> = Vec::with_capacity(train.rows() * train.cols());
    for row in 0..train.rows() {
        entries.extend_from_slice(train.row(row));
    }

    for ad_id in drawn_ids {
        let original = &texts[ad_id];
        match paraphraser.paraphrase(original) {
            Err(e) => report.failures.push(AugmentFailure {
                ad_id: ad_id.clone(),
                message: e.message,
                retriable: e.retriable,
            }),
            Ok(paraphrase) if paraphrase == *original => {
                report.dropped_identical += 1;
            }
            Ok(paraphrase) => {
                let synthetic_id = format!("{ad_id}{SYNTHETIC_SUFFIX}");
                let row = train.ad_index(ad_id).expect("drawn id is a train row");
                out_texts.insert(synthetic_id.clone(), paraphrase);
                ad_ids.push(synthetic_id);
                entries.extend_from_slice(train.row(row));
                report.added += 1;
            }
        }
    }

    let matrix = LabelMatrix::new(ad_ids, train.category_ids().to_vec(), entries, train.mode())?;
    Ok(AugmentOutcome {
        texts: out_texts,
        matrix,
        report,
    })
}
