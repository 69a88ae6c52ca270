//! Golden-path pipeline test: a checked-in dataset plus the reports a
//! reference run produced. Any byte of drift in any report, intermediate,
//! or manifest fails the comparison.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn netx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netx"))
}

/// Copy the fixture inputs (not the expected outputs) into `dst`.
fn stage_inputs(dst: &Path) {
    std::fs::create_dir_all(dst.join("data")).unwrap();
    for f in ["run.toml", "scenario.toml"] {
        std::fs::copy(fixture().join(f), dst.join(f)).unwrap();
    }
    for entry in std::fs::read_dir(fixture().join("data")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dst.join("data").join(entry.file_name())).unwrap();
    }
}

/// Every file the pipeline emits, relative to the run's output directory.
const OUTPUTS: &[&str] = &[
    "clusters.csv",
    "assignment.csv",
    "assignment.meta.json",
    "panel.csv",
    "panel.meta.json",
    "reports/direct.json",
    "reports/persistence.json",
    "reports/exposure.json",
    "reports/upstream.json",
    "manifest.json",
];

fn run_pipeline(dir: &Path, extra: &[&str]) {
    let status = netx()
        .current_dir(dir)
        .args(["run", "--config", "run.toml"])
        .args(extra)
        .status()
        .unwrap();
    assert!(status.success(), "pipeline run failed in {}", dir.display());
}

#[test]
fn golden_run_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    stage_inputs(tmp.path());
    run_pipeline(tmp.path(), &[]);

    let compared: Vec<&str> = OUTPUTS
        .iter()
        .copied()
        .filter(|f| !f.ends_with("meta.json"))
        .collect();
    for f in compared {
        let got = std::fs::read(tmp.path().join("out").join(f)).unwrap();
        let want = std::fs::read(fixture().join("expected").join(f)).unwrap();
        assert_eq!(got, want, "{f} drifted from the checked-in golden copy");
    }
}

#[test]
fn worker_count_never_changes_results() {
    let one = tempfile::tempdir().unwrap();
    let three = tempfile::tempdir().unwrap();
    stage_inputs(one.path());
    stage_inputs(three.path());
    run_pipeline(one.path(), &["--workers", "1"]);
    run_pipeline(three.path(), &["--workers", "3"]);

    for f in OUTPUTS {
        let a = std::fs::read(one.path().join("out").join(f)).unwrap();
        let b = std::fs::read(three.path().join("out").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between --workers 1 and --workers 3");
    }
}

#[test]
fn emitted_reports_validate_against_published_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    stage_inputs(tmp.path());
    run_pipeline(tmp.path(), &[]);

    let schema_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let compiled = |name: &str| {
        let doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(schema_dir.join(name)).unwrap(),
        )
        .unwrap();
        jsonschema::JSONSchema::compile(&doc).unwrap()
    };

    let report_schema = compiled("report.schema.json");
    for name in ["direct", "persistence", "exposure", "upstream"] {
        let doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(format!("out/reports/{name}.json"))).unwrap(),
        )
        .unwrap();
        let errors: Vec<String> = report_schema
            .validate(&doc)
            .err()
            .map(|it| it.map(|e| e.to_string()).collect())
            .unwrap_or_default();
        assert!(errors.is_empty(), "{name}.json schema violations: {errors:?}");
    }

    let manifest_schema = compiled("manifest.schema.json");
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest_schema.is_valid(&doc), "manifest.json violates its schema");
}

#[test]
fn master_seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    stage_inputs(tmp.path());
    run_pipeline(tmp.path(), &["--master-seed", "1"]);

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["master_seed"], 1, "flag must beat the config value");

    // and the assignment actually changes with the seed
    let got = std::fs::read(tmp.path().join("out/assignment.csv")).unwrap();
    let golden = std::fs::read(fixture().join("expected/assignment.csv")).unwrap();
    assert_ne!(got, golden, "different master seed must draw a different assignment");
}
