//! Analysis commands: agreement reports and exposure/attention tables.

use std::path::Path;

use policyscope_core::agreement::{
    cooccurrence, gold_vs_crowd_report, render_agreement_csv, render_agreement_text,
    subgroup_kappa,
};
use policyscope_core::attention::{
    baseline, candidate_attention, demographic_exposure, exposure_table_csv,
    exposure_table_markdown, flag_exposure, ExposureAxis, PredictionSet,
};
use policyscope_core::evaluation::{render_report, ReportFormat};
use policyscope_core::ingest::load_alias_sets;
use policyscope_core::labeling::{LabelMatrix, LabelMode};

use super::{echo, load_prepared_matrix, ADS_STORE, PREDICTIONS};
use crate::config::Config;
use crate::error::CliError;
use crate::files;

pub fn cmd_agreement(config: &Config, gold_path: &Path) -> Result<(), CliError> {
    echo(
        config,
        "agreement",
        &format!(
            "gold={} complexity_threshold={}",
            gold_path.display(),
            config.labeling.complexity_threshold
        ),
    );

    let gold = LabelMatrix::read_csv(files::open(gold_path)?, LabelMode::Binary)?;
    let crowd = load_prepared_matrix(config, LabelMode::Binary)?;

    let report = subgroup_kappa(&gold, &crowd, config.labeling.complexity_threshold)?;
    files::write_string(
        &files::out_path(&config.output_dir, "agreement.csv"),
        &render_agreement_csv(&report),
    )?;
    files::write_string(
        &files::out_path(&config.output_dir, "agreement.txt"),
        &render_agreement_text(&report),
    )?;

    let classification = gold_vs_crowd_report(&gold, &crowd)?;
    files::write_string(
        &files::out_path(&config.output_dir, "gold_vs_crowd.csv"),
        &render_report(&classification, ReportFormat::Csv),
    )?;

    files::write_string(
        &files::out_path(&config.output_dir, "cooccurrence_gold.csv"),
        &cooccurrence(&gold)?.to_csv(),
    )?;
    files::write_string(
        &files::out_path(&config.output_dir, "cooccurrence_crowd.csv"),
        &cooccurrence(&crowd)?.to_csv(),
    )?;

    println!(
        "compared {} common ads across {} categories",
        report.item_count,
        report.categories.len()
    );
    println!("{}", render_agreement_text(&report));
    println!("reports written to {}", config.output_dir.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisDimension {
    Candidate,
    Gender,
    Age,
    Region,
}

pub fn cmd_analyze(config: &Config, dimension: AnalysisDimension) -> Result<(), CliError> {
    let store = files::load_ad_store(&files::out_path(&config.output_dir, ADS_STORE))?;
    let predictions_path = files::out_path(&config.output_dir, PREDICTIONS);
    if !predictions_path.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `policyscope predict` first",
            predictions_path.display()
        )));
    }
    let predictions = PredictionSet::read_csv(files::open(&predictions_path)?)?;

    match dimension {
        AnalysisDimension::Candidate => {
            echo(config, "analyze", "dimension=candidate");
            let aliases_path = config.require(&config.aliases, "aliases")?;
            let alias_sets = load_alias_sets(files::open(aliases_path)?)?;
            let (table, warnings) = candidate_attention(&store, &predictions, &alias_sets);
            for warning in &warnings {
                eprintln!("{warning}");
            }
            if table.candidates.is_empty() {
                return Err(CliError::data(
                    "no candidate has labeled mentioning ads; nothing to tabulate",
                ));
            }
            files::write_string(
                &files::out_path(&config.output_dir, "candidate_attention.csv"),
                &table.to_csv(),
            )?;
            files::write_string(
                &files::out_path(&config.output_dir, "candidate_attention.md"),
                &table.to_markdown(),
            )?;
            for column in &table.candidates {
                println!(
                    "candidate {}: {} labeled mentioning ads, impression mass {}",
                    column.candidate_id, column.ad_count, column.total_mass
                );
            }
            println!("tables written to {}", config.output_dir.display());
        }
        AnalysisDimension::Gender | AnalysisDimension::Age | AnalysisDimension::Region => {
            let axis = match dimension {
                AnalysisDimension::Gender => ExposureAxis::Gender,
                AnalysisDimension::Age => ExposureAxis::Age,
                _ => ExposureAxis::Region,
            };
            echo(
                config,
                "analyze",
                &format!("dimension={} rho={}", axis.name(), config.analysis.exposure_rho),
            );
            let (table, warnings) = demographic_exposure(&store, &predictions, axis);
            for warning in &warnings {
                eprintln!("category {:?}: {}", warning.category_id, warning.message);
            }
            let base = baseline(&store, &predictions, axis)?;
            let flags = flag_exposure(&table, &base, config.analysis.exposure_rho)?;

            let stem = format!("exposure_{}", axis.name());
            files::write_string(
                &files::out_path(&config.output_dir, &format!("{stem}.csv")),
                &exposure_table_csv(&table, Some(&base)),
            )?;
            files::write_string(
                &files::out_path(&config.output_dir, &format!("{stem}_flags.csv")),
                &flags.to_csv(),
            )?;
            files::write_string(
                &files::out_path(&config.output_dir, &format!("{stem}.md")),
                &exposure_table_markdown(&table, Some(&base), Some(&flags)),
            )?;
            println!(
                "{} categories tabulated over {} buckets (baseline mass {})",
                table.rows.len(),
                table.buckets.len(),
                base.total_mass
            );
            println!("tables written to {}", config.output_dir.display());
        }
    }
    Ok(())
}
