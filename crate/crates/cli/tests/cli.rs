//! Integration tests driving the `policyscope` binary on the bundled
//! fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn config_path() -> PathBuf {
    fixtures_dir().join("config.toml")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let config = config_path();
    Command::new(env!("CARGO_BIN_EXE_policyscope"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(out: &Path, args: &[&str]) -> String {
    let output = run_in(out, args);
    assert!(
        output.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn prepare_through_split(out: &Path) {
    run_ok(out, &["ingest"]);
    run_ok(out, &["aggregate", "--mode", "vm"]);
    run_ok(out, &["split"]);
}

#[test]
fn missing_config_is_usage_error() {
    let output = Command::new(env!("CARGO_BIN_EXE_policyscope"))
        .arg("ingest")
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("--config"));
}

#[test]
fn unknown_flag_value_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(tmp.path(), &["analyze", "--dimension", "shoe-size"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(tmp.path(), &["frobnicate"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let output = Command::new(env!("CARGO_BIN_EXE_policyscope"))
        .arg("--help")
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for sub in ["ingest", "aggregate", "split", "train", "calibrate", "evaluate",
                "agreement", "augment", "predict", "analyze", "report"] {
        assert!(text.contains(sub), "help misses {sub}");
    }
}

#[test]
fn missing_input_file_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_config = tmp.path().join("bad.toml");
    std::fs::write(
        &bad_config,
        "[pipeline]\nlanguage = \"fr\"\nseed = 1\n[paths]\nads = \"nope.ndjson\"\n",
    )
    .unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_policyscope"))
        .arg("--config")
        .arg(&bad_config)
        .arg("ingest")
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn aggregate_with_impossible_duration_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(
        tmp.path(),
        &["aggregate", "--mode", "vm", "--min-duration", "100000"],
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no assemblies"));
}

#[test]
fn evaluate_before_train_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(tmp.path(), &["evaluate"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn report_summarizes_daily_file() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = run_ok(tmp.path(), &["report"]);
    assert!(stdout.contains("9 advertiser pages"));
    let summary = std::fs::read_to_string(tmp.path().join("daily_report_summary.csv")).unwrap();
    assert!(summary.starts_with("page_id,page_name,ads_count,spend_midpoint,spend_open_ended"));
    assert_eq!(summary.lines().count(), 10);
}

#[test]
fn ingest_matches_manifest_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = run_ok(tmp.path(), &["ingest"]);
    assert!(stdout.contains("58 unique after dedupe"));
    let store = std::fs::read_to_string(tmp.path().join("ads_store.ndjson")).unwrap();
    assert_eq!(store.lines().count(), 58);
}

#[test]
fn aggregate_vm_matches_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = run_ok(tmp.path(), &["aggregate", "--mode", "vm"]);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures_dir().join("manifest.json")).unwrap(),
    )
    .unwrap();
    let expected_rows = manifest["votes"]["vm_rows"].as_u64().unwrap() as usize;
    let expected_assemblies = manifest["votes"]["assemblies"].as_u64().unwrap();
    assert!(stdout.contains(&format!("{expected_assemblies} assemblies")));
    let text = std::fs::read_to_string(tmp.path().join("labels_vm.csv")).unwrap();
    assert_eq!(text.lines().count() - 1, expected_rows);
}

#[test]
fn distrib_matrix_has_soft_entries_only() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(tmp.path(), &["aggregate", "--mode", "distrib"]);
    let text = std::fs::read_to_string(tmp.path().join("labels_distrib.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        rows += 1;
        for field in line.split(',').skip(1) {
            assert!(
                matches!(field, "0" | "0.3" | "0.6" | "1"),
                "unexpected soft entry {field:?}"
            );
        }
    }
    assert_eq!(rows, 55);
}

#[test]
fn train_on_distrib_labels_completes() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    run_ok(tmp.path(), &["aggregate", "--mode", "distrib"]);
    let stdout = run_ok(tmp.path(), &["train", "--labels", "distrib"]);
    assert!(stdout.contains("labels=distrib"));
    assert!(tmp.path().join("model.json").exists());
}

#[test]
fn train_on_embeddings_completes_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    run_ok(tmp.path(), &["train", "--feature-source", "embedding", "--epochs", "60",
                         "--learning-rate", "2.0"]);
    let stdout = run_ok(tmp.path(), &["evaluate"]);
    assert!(stdout.contains("micro avg"));
}

#[test]
fn augment_with_reverse_mock_adds_rows() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    let stdout = run_ok(
        tmp.path(),
        &["augment", "--translator", "mock:reverse", "--fraction", "1.0"],
    );
    assert!(stdout.contains("failures)"));
    let labels = std::fs::read_to_string(tmp.path().join("augmented_labels.csv")).unwrap();
    let synthetic = labels.lines().filter(|l| l.contains("#bt")).count();
    assert!(synthetic > 0, "expected synthetic rows:\n{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("augment_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["added"].as_u64().unwrap() as usize, synthetic);
}

#[test]
fn augmented_training_consumes_augmented_files() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    run_ok(
        tmp.path(),
        &["augment", "--translator", "mock:reverse", "--fraction", "1.0"],
    );
    let stdout = run_ok(tmp.path(), &["train", "--use-augmented"]);
    assert!(stdout.contains("augmented=true"));
}

#[test]
fn unknown_translator_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    let output = run_in(tmp.path(), &["augment", "--translator", "carrier-pigeon"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn seed_override_changes_split() {
    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    let baseline = std::fs::read_to_string(tmp.path().join("split.json")).unwrap();

    let tmp2 = tempfile::tempdir().unwrap();
    run_ok(tmp2.path(), &["ingest"]);
    run_ok(tmp2.path(), &["aggregate", "--mode", "vm"]);
    let config = config_path();
    let output = Command::new(env!("CARGO_BIN_EXE_policyscope"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(tmp2.path())
        .arg("--seed")
        .arg("777")
        .arg("split")
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    let reseeded = std::fs::read_to_string(tmp2.path().join("split.json")).unwrap();
    assert_ne!(baseline, reseeded);
}

#[test]
fn emitted_matrices_round_trip_through_loaders() {
    use policyscope_core::attention::PredictionSet;
    use policyscope_core::labeling::{LabelMatrix, LabelMode};

    let tmp = tempfile::tempdir().unwrap();
    prepare_through_split(tmp.path());
    run_ok(tmp.path(), &["train"]);
    run_ok(tmp.path(), &["predict"]);

    let vm_path = tmp.path().join("labels_vm.csv");
    let matrix =
        LabelMatrix::read_csv(std::fs::File::open(&vm_path).unwrap(), LabelMode::Binary).unwrap();
    let mut rewritten = Vec::new();
    matrix.write_csv(&mut rewritten).unwrap();
    assert_eq!(std::fs::read(&vm_path).unwrap(), rewritten);

    let predictions_path = tmp.path().join("predictions.csv");
    let predictions =
        PredictionSet::read_csv(std::fs::File::open(&predictions_path).unwrap()).unwrap();
    let mut rewritten = Vec::new();
    predictions.write_csv(&mut rewritten).unwrap();
    assert_eq!(std::fs::read(&predictions_path).unwrap(), rewritten);

    let model_bytes = std::fs::read(tmp.path().join("model.json")).unwrap();
    let model = policyscope_core::model::load_model(&model_bytes).unwrap();
    let saved = policyscope_core::model::save_model(
        &model.head,
        &model.thresholds,
        model.vocabulary.as_ref(),
    )
    .unwrap();
    assert_eq!(model_bytes, saved);
}

#[test]
fn agreement_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(tmp.path(), &["aggregate", "--mode", "vm"]);
    let gold = fixtures_dir().join("gold_labels.csv");
    let stdout = run_ok(tmp.path(), &["agreement", "--gold", gold.to_str().unwrap()]);
    assert!(stdout.contains("common ads"));
    for name in ["agreement.csv", "agreement.txt", "gold_vs_crowd.csv",
                 "cooccurrence_gold.csv", "cooccurrence_crowd.csv"] {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }
}
