//! Data-side commands: ingest, report, aggregate, split, augment.

use std::collections::BTreeMap;
use std::io::Write;

use policyscope_core::codebook::apply_grouping;
use policyscope_core::ingest::{
    corpus_totals, dedupe, filter_language, midpoint, parse_ads, parse_daily_report, write_ads,
    RowError,
};
use policyscope_core::labeling::{
    assemble, distrib_aggregate, filter_votes, multi_label_fraction, parse_annotations,
    stratified_test_split, vm_aggregate, LabelMode, SplitParams,
};
use policyscope_core::rng::stage_seed;
use policyscope_core::textfeat::{augment_dataset, AugmentPlan};

use super::{echo, load_codebook, load_prepared_matrix, ADS_STORE, AUGMENTED_LABELS,
    AUGMENTED_TEXTS, LABELS_DISTRIB, LABELS_VM, SPLIT_FILE};
use crate::config::Config;
use crate::error::CliError;
use crate::files;
use crate::translator::paraphraser_for;

fn report_row_errors(context: &str, errors: &[RowError]) {
    if errors.is_empty() {
        return;
    }
    eprintln!("{context}: {} malformed rows skipped", errors.len());
    for error in errors.iter().take(10) {
        eprintln!("  line {}: {}", error.line, error.message);
    }
    if errors.len() > 10 {
        eprintln!("  ... and {} more", errors.len() - 10);
    }
}

pub fn cmd_ingest(config: &Config) -> Result<(), CliError> {
    let ads_path = config.require(&config.ads, "ads")?;
    echo(config, "ingest", &format!("ads={}", ads_path.display()));

    let outcome = parse_ads(files::open(ads_path)?)?;
    report_row_errors("ads", &outcome.errors);
    let parsed = outcome.records.len();
    let kept = filter_language(outcome.records, &config.language);
    let after_language = kept.len();
    let store = dedupe(kept);
    if store.is_empty() {
        return Err(CliError::data("no ads survived parsing and filtering"));
    }

    let store_path = files::out_path(&config.output_dir, ADS_STORE);
    let mut writer = files::create(&store_path)?;
    write_ads(&mut writer, &store)?;
    writer.flush()?;

    let totals = corpus_totals(&store);
    println!(
        "parsed {parsed} ads; {after_language} in '{}'; {} unique after dedupe",
        config.language,
        store.len()
    );
    println!(
        "impressions estimate: {} ({} open-ended ranges counted at their lower bound)",
        totals.impressions_estimate, totals.open_ended_impressions
    );
    for (currency, amount) in &totals.spend_estimate {
        println!("spend estimate [{currency}]: {amount}");
    }
    println!("store written to {}", store_path.display());
    Ok(())
}

pub fn cmd_report(config: &Config) -> Result<(), CliError> {
    let path = config.require(&config.daily_report, "daily_report")?;
    echo(config, "report", &format!("daily_report={}", path.display()));

    let outcome = parse_daily_report(files::open(path)?)?;
    report_row_errors("daily report", &outcome.errors);

    let summary_path = files::out_path(&config.output_dir, "daily_report_summary.csv");
    let mut writer = csv::Writer::from_writer(files::create(&summary_path)?);
    writer
        .write_record([
            "page_id",
            "page_name",
            "ads_count",
            "spend_midpoint",
            "spend_open_ended",
        ])
        .map_err(|e| CliError::data(e.to_string()))?;
    let mut total_ads = 0u64;
    let mut total_spend = 0.0;
    for row in &outcome.records {
        let spend = midpoint(&row.spend);
        total_ads += row.ads_count;
        total_spend += spend.value;
        writer
            .write_record([
                row.page_id.as_str(),
                row.page_name.as_str(),
                &row.ads_count.to_string(),
                &format!("{}", spend.value),
                if spend.open_ended { "yes" } else { "no" },
            ])
            .map_err(|e| CliError::data(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "{} advertiser pages, {total_ads} ads, spend midpoint total {total_spend}",
        outcome.records.len()
    );
    println!("summary written to {}", summary_path.display());
    Ok(())
}

pub fn cmd_aggregate(config: &Config, mode: LabelMode) -> Result<(), CliError> {
    let annotations_path = config.require(&config.annotations, "annotations")?;
    echo(
        config,
        "aggregate",
        &format!(
            "annotations={} mode={} min_duration={}s grouping={}",
            annotations_path.display(),
            match mode {
                LabelMode::Binary => "vm",
                LabelMode::Soft => "distrib",
            },
            config.labeling.min_duration_seconds,
            config.labeling.apply_grouping
        ),
    );

    let outcome = parse_annotations(files::open(annotations_path)?)?;
    report_row_errors("annotations", &outcome.errors);
    let mut votes = filter_votes(outcome.records, config.labeling.min_duration_seconds);

    if config.labeling.apply_grouping {
        let codebook = load_codebook(config)?;
        for vote in &mut votes {
            vote.categories = apply_grouping(&vote.categories, &codebook)?;
        }
    }

    let assemblies = assemble(votes);
    if assemblies.is_empty() {
        return Err(CliError::data("no assemblies: no ad has three usable votes"));
    }
    let matrix = match mode {
        LabelMode::Binary => vm_aggregate(&assemblies),
        LabelMode::Soft => distrib_aggregate(&assemblies),
    };
    let name = match mode {
        LabelMode::Binary => LABELS_VM,
        LabelMode::Soft => LABELS_DISTRIB,
    };
    let path = files::out_path(&config.output_dir, name);
    matrix.write_csv(files::create(&path)?)?;
    println!(
        "{} assemblies -> {} labeled ads x {} categories -> {}",
        assemblies.len(),
        matrix.rows(),
        matrix.cols(),
        path.display()
    );
    if mode == LabelMode::Binary && matrix.rows() > 0 {
        let fraction = multi_label_fraction(&matrix)?;
        println!("{:.1}% of labeled ads carry more than one category", fraction * 100.0);
    }
    Ok(())
}

pub fn cmd_split(config: &Config) -> Result<(), CliError> {
    let seed = stage_seed(config.seed, "split");
    echo(
        config,
        "split",
        &format!(
            "subset={} per_category={} min_support={} validation_fraction={} stage_seed={seed}",
            config.labeling.subset,
            config.labeling.per_category,
            config.labeling.min_support,
            config.labeling.validation_fraction
        ),
    );

    let matrix = load_prepared_matrix(config, LabelMode::Binary)?;
    let params = SplitParams {
        per_category: config.labeling.per_category,
        min_support: config.labeling.min_support,
        validation_fraction: config.labeling.validation_fraction,
    };
    let (split, warnings) = stratified_test_split(&matrix, &params, seed)?;
    for warning in &warnings {
        eprintln!(
            "category {:?}: requested {} test ads, only {} available",
            warning.category_id, warning.requested, warning.available
        );
    }
    let path = files::out_path(&config.output_dir, SPLIT_FILE);
    let mut writer = files::create(&path)?;
    serde_json::to_writer_pretty(&mut writer, &split)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    println!(
        "train {} / validation {} / test {} -> {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_augment(config: &Config) -> Result<(), CliError> {
    let seed = stage_seed(config.seed, "augment");
    echo(
        config,
        "augment",
        &format!(
            "fraction={} pivot={} translator={} stage_seed={seed}",
            config.augmentation.fraction,
            config.augmentation.pivot_language,
            config.augmentation.translator
        ),
    );

    let matrix = load_prepared_matrix(config, LabelMode::Binary)?;
    let split_path = files::out_path(&config.output_dir, SPLIT_FILE);
    let split: policyscope_core::labeling::DatasetSplit =
        serde_json::from_reader(files::open(&split_path)?)?;
    let train = matrix.select_rows(&split.train)?;

    let store = files::load_ad_store(&files::out_path(&config.output_dir, ADS_STORE))?;
    let texts: BTreeMap<String, String> = store
        .iter()
        .filter(|ad| train.ad_index(&ad.ad_id).is_some())
        .map(|ad| (ad.ad_id.clone(), ad.creative_body.clone()))
        .collect();

    let plan = AugmentPlan {
        fraction: config.augmentation.fraction,
        pivot_language: config.augmentation.pivot_language.clone(),
        seed,
    };
    let paraphraser = paraphraser_for(
        &config.augmentation.translator,
        &config.language,
        &config.augmentation.pivot_language,
        std::time::Duration::from_secs(config.augmentation.timeout_seconds),
    )?;
    let outcome = augment_dataset(&train, &texts, &plan, paraphraser.as_ref())?;

    let labels_path = files::out_path(&config.output_dir, AUGMENTED_LABELS);
    outcome.matrix.write_csv(files::create(&labels_path)?)?;
    let texts_path = files::out_path(&config.output_dir, AUGMENTED_TEXTS);
    files::write_texts(&texts_path, &outcome.texts)?;

    let report_path = files::out_path(&config.output_dir, "augment_report.json");
    let failures: Vec<serde_json::Value> = outcome
        .report
        .failures
        .iter()
        .map(|f| {
            serde_json::json!({
                "ad_id": f.ad_id,
                "message": f.message,
                "retriable": f.retriable,
            })
        })
        .collect();
    let report = serde_json::json!({
        "drawn": outcome.report.drawn,
        "added": outcome.report.added,
        "dropped_identical": outcome.report.dropped_identical,
        "failures": failures,
    });
    files::write_string(&report_path, &format!("{:#}\n", report))?;

    println!(
        "drew {} ads, added {} synthetic rows ({} identical paraphrases dropped, {} failures)",
        outcome.report.drawn,
        outcome.report.added,
        outcome.report.dropped_identical,
        outcome.report.failures.len()
    );
    println!(
        "augmented training set: {} rows -> {}",
        outcome.matrix.rows(),
        labels_path.display()
    );
    if !outcome.report.failures.is_empty() {
        eprintln!(
            "{} ads failed to translate; see {}",
            outcome.report.failures.len(),
            report_path.display()
        );
    }
    Ok(())
}
