use std::ffi::{CStr, CString};
use std::ptr;

use meterwatch::classifier::{make_sample, TsRpConfig, TsRpModel};
use meterwatch::data::save_usage_file;
use meterwatch::predictor::{build_features, make_windows, train, PredictorConfig};
use meterwatch::simgen::{generate_area, AreaConfig, Label};
use meterwatch_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mw_last_error()) }.to_string_lossy().into_owned()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(mw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn first_alarm_reports_left_edge() {
    let dpe = [0.6, 0.4, 0.8, 0.9, 0.9, 0.9, 0.9];
    let mut idx = 99;
    let s = unsafe { mw_first_alarm(dpe.as_ptr(), dpe.len(), 0.5, 4, &mut idx) };
    assert_eq!(s, MwStatus::Ok);
    assert_eq!(idx, 2);
    assert_eq!(last_error(), "");

    let s = unsafe { mw_first_alarm(dpe.as_ptr(), dpe.len(), 0.95, 4, &mut idx) };
    assert_eq!((s, idx), (MwStatus::Ok, -1));
}

#[test]
fn errors_set_status_and_message() {
    let mut idx = 0;
    let s = unsafe { mw_first_alarm(ptr::null(), 3, 0.5, 2, &mut idx) };
    assert_eq!(s, MwStatus::NullPointer);
    assert!(last_error().contains("dpe"));

    let dpe = [1.0, 2.0];
    let s = unsafe { mw_first_alarm(dpe.as_ptr(), 2, 0.5, 4, &mut idx) };
    assert_eq!(s, MwStatus::Data);
    assert!(last_error().contains("too short"), "{}", last_error());

    let mut h = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.json").unwrap();
    let s = unsafe { mw_predictor_load(missing.as_ptr(), &mut h) };
    assert_eq!(s, MwStatus::Io);
    assert!(h.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));

    // a later success clears the message
    let s = unsafe { mw_first_alarm(dpe.as_ptr(), 2, 0.5, 1, &mut idx) };
    assert_eq!(s, MwStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn roc_auc_and_recurrence_plot() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    assert_eq!(unsafe { mw_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc) }, MwStatus::Ok);
    assert_eq!(auc, 0.75);

    let one_class = [1u8; 4];
    assert_eq!(
        unsafe { mw_roc_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut auc) },
        MwStatus::Data
    );

    let series = [0.0, 1.0, 3.0];
    let mut rp = [f64::NAN; 9];
    assert_eq!(unsafe { mw_recurrence_plot(series.as_ptr(), 3, -1.0, rp.as_mut_ptr()) }, MwStatus::Ok);
    assert_eq!(rp[0], 1.0);
    assert_eq!(rp[2], 0.0);
    assert_eq!(rp[1], rp[3]);
}

#[test]
fn predictor_handle_detects_on_csv() {
    let dir = tempfile::tempdir().unwrap();
    let area = AreaConfig {
        n_days: 120,
        ..AreaConfig::default()
    };
    let ds = generate_area("a1", &area).unwrap();
    let cfg = PredictorConfig {
        window_size: 7,
        hidden_dims: [4, 4],
        epochs: 2,
        n_test: 5,
        ..PredictorConfig::default()
    };
    let windows = make_windows(&build_features(&ds).unwrap(), cfg.window_size).unwrap();
    let model_path = dir.path().join("model.json");
    train(&windows, &cfg).unwrap().save(&model_path).unwrap();
    let csv = dir.path().join("a1.csv");
    save_usage_file(&csv, &ds.to_records()).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mw_predictor_load(cpath(&model_path).as_ptr(), &mut h) }, MwStatus::Ok);
    let mut w = 0;
    assert_eq!(unsafe { mw_predictor_window_size(h, &mut w) }, MwStatus::Ok);
    assert_eq!(w, 7);

    let mut det = MwDetection::default();
    let s = unsafe { mw_predictor_detect_csv(h, cpath(&csv).as_ptr(), 1e9, 3, &mut det) };
    assert_eq!(s, MwStatus::Ok, "{}", last_error());
    assert!(!det.flagged);
    assert_eq!((det.start_index, det.start_yyyymmdd), (-1, 0));
    assert_eq!(det.n_days, 120 - 7);
    assert!(det.scale > 0.0);

    let s = unsafe { mw_predictor_detect_csv(h, cpath(&csv).as_ptr(), 1e-12, 1, &mut det) };
    assert_eq!(s, MwStatus::Ok, "{}", last_error());
    assert!(det.flagged);
    assert_eq!(det.start_index, 0);
    assert!(det.start_yyyymmdd > 20_000_000);
    unsafe { mw_predictor_free(h) };
}

#[test]
fn classifier_handle_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TsRpConfig {
        series_len: 16,
        ..TsRpConfig::default()
    };
    let model = TsRpModel::new(&cfg, 1).unwrap();
    let path = dir.path().join("clf.json");
    model.save(&path).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mw_classifier_load(cpath(&path).as_ptr(), &mut h) }, MwStatus::Ok);
    let values: Vec<f64> = (0..20).map(|i| (i % 5) as f64 + 0.5).collect();
    let mut p = -1.0;
    assert_eq!(unsafe { mw_classifier_score(h, values.as_ptr(), values.len(), &mut p) }, MwStatus::Ok);
    let sample = make_sample("", "", &values, Label::Accurate, 16, cfg.rp_mode).unwrap();
    assert_eq!(p, model.classify(&sample).unwrap());
    assert!((0.0..=1.0).contains(&p));

    assert_eq!(unsafe { mw_classifier_score(h, ptr::null(), 4, &mut p) }, MwStatus::NullPointer);
    unsafe { mw_classifier_free(h) };
    unsafe { mw_classifier_free(ptr::null_mut()) };
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/meterwatch.h")).unwrap();
    for name in [
        "mw_last_error",
        "mw_predictor_load",
        "mw_predictor_detect_csv",
        "mw_classifier_score",
        "typedef struct MwPredictor MwPredictor",
        "MW_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
