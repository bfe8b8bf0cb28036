use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "simgen": {"n_areas": 4, "malfunctioning_areas": 2, "area": {"n_days": 200}},
  "reference_areas": 2,
  "predictor": {"window_size": 10, "epochs": 3, "n_test": 5},
  "classifier": {"series_len": 32, "epochs": 2, "folds": 2},
  "ablations": ["sequence_only"],
  "target_rate_horizon": 30
}"#;

fn meterwatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meterwatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn count_files(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn generate_writes_corpus_deterministically() {
    let args = ["generate", "--areas", "20", "--submeters", "10", "--days", "770", "--fraction", "0.3", "--seed", "7"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = meterwatch(d.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let areas = a.path().join("data/areas");
    assert_eq!(count_files(&areas, "csv"), 20);
    assert_eq!(count_files(&a.path().join("data/labels"), "json"), 20);
    for entry in std::fs::read_dir(&areas).unwrap() {
        let p = entry.unwrap().path();
        let twin = b.path().join("data/areas").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(twin).unwrap(), "{}", p.display());
    }
    let labels = std::fs::read_to_string(a.path().join("data/labels/area_000.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&labels).unwrap();
    assert_eq!(v["labels"].as_object().unwrap().len(), 10);
}

#[test]
fn invalid_fraction_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = meterwatch(d.path(), &["generate", "--fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fraction"), "{}", stderr(&o));
    assert!(!d.path().join("data").exists());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"predictor": {"epoch": 3}}"#).unwrap();
    let o = meterwatch(d.path(), &["--config", "c.json", "clean"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let o = meterwatch(d.path(), &["--config", "absent.json", "clean"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(meterwatch(d.path(), &["pipeline", "--stage", "nope"]).status.code(), Some(2));
}

#[test]
fn detect_stage_needs_a_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), SMALL).unwrap();
    assert!(meterwatch(d.path(), &["--config", "c.json", "generate"]).status.success());
    assert!(meterwatch(d.path(), &["--config", "c.json", "clean"]).status.success());
    let o = meterwatch(d.path(), &["--config", "c.json", "pipeline", "--stage", "detect"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("detect") && err.contains("model.json"), "{err}");
    // the cleaned data survives the failure
    assert_eq!(count_files(&d.path().join("out/clean/areas"), "csv"), 4);
}

#[test]
fn clean_corpus_flags_nothing_and_skips_classification() {
    let d = tempfile::tempdir().unwrap();
    let config = SMALL
        .replace(r#""malfunctioning_areas": 2"#, r#""malfunctioning_areas": 0"#)
        .replace(r#""target_rate_horizon": 30"#, r#""target_rate_horizon": 30, "detector": {"t": 1000.0, "L": 4}"#);
    std::fs::write(d.path().join("c.json"), config).unwrap();
    let o = meterwatch(d.path(), &["--config", "c.json", "pipeline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/detect/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["flagged"].as_array().unwrap().len(), 0);
    assert_eq!(summary["detections"].as_array().unwrap().len(), 4);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[classify] skipped"), "{stdout}");
    assert!(!d.path().join("out/classify/classifications.csv").exists());
    assert!(d.path().join("out/manifest.json").exists());
}

#[test]
fn evaluate_without_inputs_names_them() {
    let d = tempfile::tempdir().unwrap();
    let o = meterwatch(d.path(), &["evaluate"]);
    assert_ne!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("cv_report.json") && err.contains("summary.json"), "{err}");
}

#[test]
fn report_encodings_carry_the_same_numbers() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), SMALL).unwrap();
    let o = meterwatch(d.path(), &["--config", "c.json", "pipeline", "--classify-all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.path().join("out/classify/classifications.csv").exists());
    let o = meterwatch(d.path(), &["--config", "c.json", "evaluate", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/report/report.json")).unwrap()).unwrap();
    let mut json_folds = Vec::new();
    for a in report["architectures"].as_array().unwrap() {
        for (r, p) in a["fold_roc_auc"].as_array().unwrap().iter().zip(a["fold_pr_auc"].as_array().unwrap()) {
            json_folds.push((a["architecture"].as_str().unwrap().to_string(), r.as_f64().unwrap(), p.as_f64().unwrap()));
        }
    }
    let mut rdr = csv::Reader::from_path(d.path().join("out/report/architectures.csv")).unwrap();
    let csv_folds: Vec<(String, f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[2].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    assert_eq!(json_folds.len(), 4);
    assert_eq!(csv_folds, json_folds);

    let mut rdr = csv::Reader::from_path(d.path().join("out/report/detections.csv")).unwrap();
    let flagged: Vec<bool> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    let json_flagged: Vec<bool> = report["detections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["flagged"].as_bool().unwrap())
        .collect();
    assert_eq!(flagged, json_flagged);
}
