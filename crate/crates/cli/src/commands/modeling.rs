//! Modeling commands: train, calibrate, evaluate, predict.

use std::collections::BTreeMap;
use std::io::Write;

use policyscope_core::attention::{coverage_stats, PredictionSet};
use policyscope_core::evaluation::{classification_report, render_report, ReportFormat};
use policyscope_core::labeling::{DatasetSplit, LabelMatrix, LabelMode};
use policyscope_core::model::{
    calibrate_thresholds, load_model, predict, save_model, train, CalibrationOptions, LoadedModel,
    ThresholdVector, TrainConfig,
};
use policyscope_core::rng::stage_seed;
use policyscope_core::textfeat::{fit_tfidf, preprocess, transform, FeatureVector};

use super::{
    echo, load_prepared_matrix, preprocess_config, FeatureBackend, ADS_STORE, AUGMENTED_LABELS,
    AUGMENTED_TEXTS, MODEL_FILE, PREDICTIONS, SPLIT_FILE,
};
use crate::config::Config;
use crate::error::CliError;
use crate::files;

fn read_split(config: &Config) -> Result<DatasetSplit, CliError> {
    let path = files::out_path(&config.output_dir, SPLIT_FILE);
    if !path.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `policyscope split` first",
            path.display()
        )));
    }
    Ok(serde_json::from_reader(files::open(&path)?)?)
}

fn store_texts(config: &Config) -> Result<BTreeMap<String, String>, CliError> {
    let store = files::load_ad_store(&files::out_path(&config.output_dir, ADS_STORE))?;
    Ok(store
        .into_iter()
        .map(|ad| (ad.ad_id, ad.creative_body))
        .collect())
}

fn load_model_file(config: &Config) -> Result<LoadedModel, CliError> {
    let path = files::out_path(&config.output_dir, MODEL_FILE);
    if !path.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `policyscope train` first",
            path.display()
        )));
    }
    let bytes = std::fs::read(&path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(load_model(&bytes)?)
}

fn texts_in_order(
    ids: &[String],
    texts: &BTreeMap<String, String>,
) -> Result<Vec<String>, CliError> {
    ids.iter()
        .map(|id| {
            texts
                .get(id)
                .cloned()
                .ok_or_else(|| CliError::data(format!("no stored text for ad {id:?}")))
        })
        .collect()
}

pub fn cmd_train(config: &Config, labels_mode: LabelMode) -> Result<(), CliError> {
    let seed = stage_seed(config.seed, "train");
    let learning_rate = config.train.learning_rate.unwrap_or(match config.features.source.as_str() {
        "embedding" => TrainConfig::DEFAULT_LEARNING_RATE_EMBEDDING,
        _ => TrainConfig::DEFAULT_LEARNING_RATE_TFIDF,
    });
    echo(
        config,
        "train",
        &format!(
            "labels={} source={} epochs={} batch={} lr={} augmented={} stage_seed={seed}",
            match labels_mode {
                LabelMode::Binary => "vm",
                LabelMode::Soft => "distrib",
            },
            config.features.source,
            config.train.epochs,
            config.train.batch_size,
            learning_rate,
            config.train.use_augmented
        ),
    );

    if config.train.use_augmented && labels_mode != LabelMode::Binary {
        return Err(CliError::usage(
            "use_augmented applies to majority-vote labels only",
        ));
    }

    let split = read_split(config)?;
    let (train_matrix, texts) = if config.train.use_augmented {
        let labels_path = files::out_path(&config.output_dir, AUGMENTED_LABELS);
        if !labels_path.exists() {
            return Err(CliError::data(format!(
                "{} not found; run `policyscope augment` first",
                labels_path.display()
            )));
        }
        let matrix = LabelMatrix::read_csv(files::open(&labels_path)?, LabelMode::Binary)?;
        let texts = files::read_texts(&files::out_path(&config.output_dir, AUGMENTED_TEXTS))?;
        (matrix, texts)
    } else {
        let matrix = load_prepared_matrix(config, labels_mode)?;
        let train_ids: Vec<String> = match labels_mode {
            // the split file partitions exactly the majority-vote rows
            LabelMode::Binary => split.train.clone(),
            // soft labels cover ads without majority agreement too; train on
            // everything that is not held out for validation or testing
            LabelMode::Soft => matrix
                .ad_ids()
                .iter()
                .filter(|id| !split.validation.contains(id) && !split.test.contains(id))
                .cloned()
                .collect(),
        };
        (matrix.select_rows(&train_ids)?, store_texts(config)?)
    };
    if train_matrix.rows() == 0 {
        return Err(CliError::data("training set is empty"));
    }

    let ordered_texts = texts_in_order(train_matrix.ad_ids(), &texts)?;
    let (features, vocabulary): (Vec<FeatureVector>, _) = match config.features.source.as_str() {
        "tfidf" => {
            let preprocess_cfg = preprocess_config(config)?;
            let corpus: Vec<Vec<String>> = ordered_texts
                .iter()
                .map(|t| preprocess(t, &preprocess_cfg))
                .collect();
            let vocabulary = fit_tfidf(&corpus, config.features.min_document_frequency)?;
            let features = corpus.iter().map(|doc| transform(doc, &vocabulary)).collect();
            (features, Some(vocabulary))
        }
        _ => {
            let backend = FeatureBackend::embedding_from_config(config)?;
            let features = train_matrix
                .ad_ids()
                .iter()
                .zip(&ordered_texts)
                .map(|(id, text)| backend.vector_required(id, text))
                .collect::<Result<_, _>>()?;
            (features, None)
        }
    };

    let train_config = TrainConfig {
        epochs: config.train.epochs,
        learning_rate,
        batch_size: config.train.batch_size,
        seed,
    };
    let outcome = train(&features, &train_matrix, &train_config)?;
    let first = outcome.epoch_losses.first().copied().unwrap_or(0.0);
    let last = outcome.epoch_losses.last().copied().unwrap_or(0.0);
    println!(
        "trained on {} rows x {} features, {} labels; epoch loss {first} -> {last}",
        train_matrix.rows(),
        outcome.head.feature_dimension(),
        outcome.head.labels()
    );

    let thresholds = ThresholdVector::uniform(
        outcome.head.labels(),
        ThresholdVector::DEFAULT_THRESHOLD,
    )?;
    let bytes = save_model(&outcome.head, &thresholds, vocabulary.as_ref())?;
    let model_path = files::out_path(&config.output_dir, MODEL_FILE);
    let mut writer = files::create(&model_path)?;
    writer.write_all(&bytes)?;
    writer.flush()?;
    println!("model written to {}", model_path.display());
    Ok(())
}

pub fn cmd_calibrate(config: &Config) -> Result<(), CliError> {
    echo(
        config,
        "calibrate",
        &format!(
            "precision_target={} grid_step={}",
            config.calibration.precision_target, config.calibration.grid_step
        ),
    );

    let model = load_model_file(config)?;
    let split = read_split(config)?;
    if split.validation.is_empty() {
        return Err(CliError::data("validation split is empty"));
    }
    let matrix = load_prepared_matrix(config, LabelMode::Binary)?;
    let gold = matrix.select_rows(&split.validation)?;
    if gold.category_ids() != model.head.category_ids() {
        return Err(CliError::data(
            "validation categories do not match the trained model; \
             rerun split/train with the current config",
        ));
    }

    let texts = store_texts(config)?;
    let backend = FeatureBackend::from_model(config, model.vocabulary)?;
    let features: Vec<FeatureVector> = gold
        .ad_ids()
        .iter()
        .map(|id| backend.vector_required(id, texts.get(id).map(String::as_str).unwrap_or("")))
        .collect::<Result<_, _>>()?;

    let options = CalibrationOptions {
        precision_target: config.calibration.precision_target,
        grid_step: config.calibration.grid_step,
    };
    let (thresholds, warnings) = calibrate_thresholds(&model.head, &features, &gold, &options)?;
    for warning in &warnings {
        eprintln!("category {:?}: {}", warning.category_id, warning.message);
    }

    let bytes = save_model(&model.head, &thresholds, backend.vocabulary())?;
    let model_path = files::out_path(&config.output_dir, MODEL_FILE);
    let mut writer = files::create(&model_path)?;
    writer.write_all(&bytes)?;
    writer.flush()?;
    let rendered: Vec<String> = model
        .head
        .category_ids()
        .iter()
        .zip(thresholds.values())
        .map(|(c, t)| format!("{c}={t}"))
        .collect();
    println!("calibrated thresholds: {}", rendered.join(" "));
    println!("model updated at {}", model_path.display());
    Ok(())
}

fn prediction_matrix(
    model: &LoadedModel,
    backend: &FeatureBackend,
    gold: &LabelMatrix,
    texts: &BTreeMap<String, String>,
) -> Result<LabelMatrix, CliError> {
    let mut entries = Vec::with_capacity(gold.rows() * gold.cols());
    for id in gold.ad_ids() {
        let text = texts.get(id).map(String::as_str).unwrap_or("");
        let features = backend.vector_required(id, text)?;
        let prediction = predict(&model.head, &features, &model.thresholds)?;
        for category in model.head.category_ids() {
            entries.push(if prediction.labels.contains(category) {
                1.0
            } else {
                0.0
            });
        }
    }
    Ok(LabelMatrix::new(
        gold.ad_ids().to_vec(),
        model.head.category_ids().to_vec(),
        entries,
        LabelMode::Binary,
    )?)
}

pub fn cmd_evaluate(config: &Config) -> Result<(), CliError> {
    echo(config, "evaluate", "");

    let model = load_model_file(config)?;
    let split = read_split(config)?;
    if split.test.is_empty() {
        return Err(CliError::data("test split is empty"));
    }
    let matrix = load_prepared_matrix(config, LabelMode::Binary)?;
    let gold = matrix.select_rows(&split.test)?;
    if gold.category_ids() != model.head.category_ids() {
        return Err(CliError::data(
            "test categories do not match the trained model",
        ));
    }

    let texts = store_texts(config)?;
    let backend = FeatureBackend::from_model(config, model.vocabulary.clone())?;
    let pred = prediction_matrix(&model, &backend, &gold, &texts)?;
    let report = classification_report(&gold, &pred)?;

    for (name, format) in [
        ("report.csv", ReportFormat::Csv),
        ("report.json", ReportFormat::Json),
        ("report.md", ReportFormat::Markdown),
    ] {
        files::write_string(
            &files::out_path(&config.output_dir, name),
            &render_report(&report, format),
        )?;
    }
    println!(
        "test ads: {}; micro avg P={:.2} R={:.2} F1={:.2}; samples avg F1={:.2}",
        gold.rows(),
        report.micro_avg.precision,
        report.micro_avg.recall,
        report.micro_avg.f1,
        report.samples_avg.f1
    );
    println!("reports written to {}", config.output_dir.display());
    Ok(())
}

pub fn cmd_predict(config: &Config) -> Result<(), CliError> {
    echo(config, "predict", "");

    let model = load_model_file(config)?;
    let store = files::load_ad_store(&files::out_path(&config.output_dir, ADS_STORE))?;
    let backend = FeatureBackend::from_model(config, model.vocabulary.clone())?;

    let mut predictions = PredictionSet::new();
    let mut missing_features = 0usize;
    for ad in &store {
        match backend.vector(&ad.ad_id, &ad.creative_body) {
            Some(features) => {
                let prediction = predict(&model.head, &features, &model.thresholds)?;
                predictions.insert(ad.ad_id.clone(), prediction.labels);
            }
            None => {
                missing_features += 1;
                predictions.insert(ad.ad_id.clone(), Default::default());
            }
        }
    }
    if missing_features > 0 {
        eprintln!("{missing_features} ads had no embedding; predicted empty label sets");
    }

    let predictions_path = files::out_path(&config.output_dir, PREDICTIONS);
    predictions.write_csv(files::create(&predictions_path)?)?;

    let universe: Vec<String> = store.iter().map(|ad| ad.ad_id.clone()).collect();
    let coverage = coverage_stats(&predictions, &universe);
    let coverage_json = serde_json::json!({
        "universe": universe.len(),
        "with_any": coverage.with_any,
        "with_multiple": coverage.with_multiple,
        "median_labels_among_labeled": coverage.median_labels,
        "median_defined": coverage.median_defined,
    });
    files::write_string(
        &files::out_path(&config.output_dir, "coverage.json"),
        &format!("{coverage_json:#}\n"),
    )?;
    println!(
        "{} ads: {} with at least one label, {} with several, median {} label(s) among labeled",
        universe.len(),
        coverage.with_any,
        coverage.with_multiple,
        coverage.median_labels
    );
    println!("predictions written to {}", predictions_path.display());
    Ok(())
}
