//! Subcommand implementations.

pub mod analysis;
pub mod data;
pub mod modeling;

use std::collections::BTreeSet;
use std::path::PathBuf;

use policyscope_core::codebook::{drop_category, subset_filter, Codebook};
use policyscope_core::labeling::{LabelMatrix, LabelMode};
use policyscope_core::textfeat::{
    default_french_stopwords, load_embeddings, preprocess, transform, EmbeddingTable,
    FeatureVector, PreprocessConfig, Vocabulary,
};

use crate::config::Config;
use crate::error::CliError;
use crate::files;

pub const ADS_STORE: &str = "ads_store.ndjson";
pub const LABELS_VM: &str = "labels_vm.csv";
pub const LABELS_DISTRIB: &str = "labels_distrib.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const MODEL_FILE: &str = "model.json";
pub const AUGMENTED_LABELS: &str = "augmented_labels.csv";
pub const AUGMENTED_TEXTS: &str = "augmented_texts.ndjson";
pub const PREDICTIONS: &str = "predictions.csv";

pub fn load_codebook(config: &Config) -> Result<Codebook, CliError> {
    match &config.codebook {
        Some(path) => Ok(Codebook::load(files::open(path)?)?),
        None => Ok(Codebook::bundled_default()),
    }
}

pub fn load_stopwords(config: &Config) -> Result<BTreeSet<String>, CliError> {
    match &config.stopwords {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect())
        }
        None => Ok(default_french_stopwords()),
    }
}

pub fn preprocess_config(config: &Config) -> Result<PreprocessConfig, CliError> {
    let preprocess = PreprocessConfig::with_all(load_stopwords(config)?);
    preprocess.validate()?;
    Ok(preprocess)
}

/// Applies the configured subset filter and catch-all drop to a label
/// matrix, so every consumer sees the same category space.
pub fn prepare_matrix(config: &Config, matrix: LabelMatrix) -> Result<LabelMatrix, CliError> {
    let mut matrix = matrix;
    if config.labeling.subset != "all" {
        let codebook = load_codebook(config)?;
        matrix = subset_filter(&matrix, &config.labeling.subset, &codebook)?;
    }
    if config.labeling.drop_other_in_training
        && matrix
            .category_ids()
            .iter()
            .any(|c| c == policyscope_core::codebook::OTHER_CATEGORY)
    {
        matrix = drop_category(&matrix, policyscope_core::codebook::OTHER_CATEGORY)?;
    }
    Ok(matrix)
}

pub fn labels_path(config: &Config, mode: LabelMode) -> PathBuf {
    let name = match mode {
        LabelMode::Binary => LABELS_VM,
        LabelMode::Soft => LABELS_DISTRIB,
    };
    files::out_path(&config.output_dir, name)
}

pub fn load_prepared_matrix(config: &Config, mode: LabelMode) -> Result<LabelMatrix, CliError> {
    let path = labels_path(config, mode);
    if !path.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `policyscope aggregate` first",
            path.display()
        )));
    }
    let matrix = LabelMatrix::read_csv(files::open(&path)?, mode)?;
    prepare_matrix(config, matrix)
}

/// Turns ad texts into model inputs, either through a fitted vocabulary or
/// an external embedding table.
pub enum FeatureBackend {
    Tfidf {
        vocabulary: Vocabulary,
        preprocess: PreprocessConfig,
    },
    Embedding {
        table: EmbeddingTable,
    },
}

impl FeatureBackend {
    pub fn embedding_from_config(config: &Config) -> Result<Self, CliError> {
        let path = config.require(&config.embeddings, "embeddings")?;
        let table = load_embeddings(files::open(path)?)?;
        Ok(FeatureBackend::Embedding { table })
    }

    pub fn from_model(
        config: &Config,
        vocabulary: Option<Vocabulary>,
    ) -> Result<Self, CliError> {
        match vocabulary {
            Some(vocabulary) => Ok(FeatureBackend::Tfidf {
                vocabulary,
                preprocess: preprocess_config(config)?,
            }),
            None => Self::embedding_from_config(config),
        }
    }

    /// Feature vector for one ad; `None` when an embedding is missing.
    pub fn vector(&self, ad_id: &str, text: &str) -> Option<FeatureVector> {
        match self {
            FeatureBackend::Tfidf {
                vocabulary,
                preprocess: cfg,
            } => Some(transform(&preprocess(text, cfg), vocabulary)),
            FeatureBackend::Embedding { table } => table.feature_vector(ad_id),
        }
    }

    pub fn vector_required(&self, ad_id: &str, text: &str) -> Result<FeatureVector, CliError> {
        self.vector(ad_id, text)
            .ok_or_else(|| CliError::data(format!("no embedding for ad {ad_id:?}")))
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match self {
            FeatureBackend::Tfidf { vocabulary, .. } => Some(vocabulary),
            FeatureBackend::Embedding { .. } => None,
        }
    }
}

pub fn echo(config: &Config, stage: &str, details: &str) {
    println!(
        "policyscope {stage}: seed={} out={} {details}",
        config.seed,
        config.output_dir.display()
    );
}
