//! Pipeline configuration: a TOML file plus command-line overrides.
//! Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    pipeline: PipelineSection,
    paths: PathsSection,
    #[serde(default)]
    labeling: LabelingSection,
    #[serde(default)]
    features: FeaturesSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    calibration: CalibrationSection,
    #[serde(default)]
    augmentation: AugmentationSection,
    #[serde(default)]
    analysis: AnalysisSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineSection {
    language: String,
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    ads: Option<PathBuf>,
    daily_report: Option<PathBuf>,
    annotations: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    aliases: Option<PathBuf>,
    codebook: Option<PathBuf>,
    stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingSection {
    pub min_duration_seconds: u64,
    pub apply_grouping: bool,
    pub drop_other_in_training: bool,
    pub subset: String,
    pub per_category: usize,
    pub min_support: usize,
    pub validation_fraction: f64,
    pub complexity_threshold: usize,
}

impl Default for LabelingSection {
    fn default() -> Self {
        LabelingSection {
            min_duration_seconds: 240,
            apply_grouping: true,
            drop_other_in_training: true,
            subset: "cap14".to_string(),
            per_category: 100,
            min_support: 90,
            validation_fraction: 0.1,
            complexity_threshold: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub source: String,
    pub min_document_frequency: usize,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            source: "tfidf".to_string(),
            min_document_frequency: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Option<f64>,
    pub use_augmented: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 4,
            batch_size: 8,
            learning_rate: None,
            use_augmented: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub precision_target: f64,
    pub grid_step: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            precision_target: 0.85,
            grid_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSection {
    pub fraction: f64,
    pub pivot_language: String,
    pub translator: String,
    pub timeout_seconds: u64,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        AugmentationSection {
            fraction: 0.4,
            pivot_language: "en".to_string(),
            translator: "mock:identity".to_string(),
            timeout_seconds: 30,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub exposure_rho: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { exposure_rho: 0.2 }
    }
}

/// Fully resolved configuration with absolute paths.
#[derive(Debug, Clone)]
pub struct Config {
    pub language: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ads: Option<PathBuf>,
    pub daily_report: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub labeling: LabelingSection,
    pub features: FeaturesSection,
    pub train: TrainSection,
    pub calibration: CalibrationSection,
    pub augmentation: AugmentationSection,
    pub analysis: AnalysisSection,
}

impl Config {
    pub fn load(
        config_path: &Path,
        seed_override: Option<u64>,
        out_override: Option<&Path>,
    ) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(config_path).map_err(|e| {
            CliError::usage(format!("cannot read config {}: {e}", config_path.display()))
        })?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("malformed config: {e}")))?;

        let base = config_path.parent().unwrap_or(Path::new("."));
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let output_dir = match out_override {
            Some(out) => out.to_path_buf(),
            None => {
                let dir = file.pipeline.output_dir;
                if dir.is_absolute() {
                    dir
                } else {
                    base.join(dir)
                }
            }
        };

        let config = Config {
            language: file.pipeline.language,
            seed: seed_override.unwrap_or(file.pipeline.seed),
            output_dir,
            ads: resolve(file.paths.ads),
            daily_report: resolve(file.paths.daily_report),
            annotations: resolve(file.paths.annotations),
            embeddings: resolve(file.paths.embeddings),
            aliases: resolve(file.paths.aliases),
            codebook: resolve(file.paths.codebook),
            stopwords: resolve(file.paths.stopwords),
            labeling: file.labeling,
            features: file.features,
            train: file.train,
            calibration: file.calibration,
            augmentation: file.augmentation,
            analysis: file.analysis,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.language.len() != 2 || !self.language.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(CliError::usage(format!(
                "language filter {:?} must be a two-letter code",
                self.language
            )));
        }
        if !(0.0..=1.0).contains(&self.labeling.validation_fraction) {
            return Err(CliError::usage("validation_fraction must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.augmentation.fraction) {
            return Err(CliError::usage("augmentation fraction must be in [0,1]"));
        }
        if !matches!(self.features.source.as_str(), "tfidf" | "embedding") {
            return Err(CliError::usage(format!(
                "feature source {:?} must be \"tfidf\" or \"embedding\"",
                self.features.source
            )));
        }
        Ok(())
    }

    /// Required-path accessor with an error message naming the key.
    pub fn require<'a>(
        &self,
        path: &'a Option<PathBuf>,
        key: &str,
    ) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::usage(format!("config is missing paths.{key}")))
    }
}
