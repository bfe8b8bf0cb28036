//! C interface to the meterwatch detector and classifier.
//!
//! Every fallible call returns an `MwStatus`; on failure the message is
//! available from `mw_last_error` on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use chrono::Datelike;
use meterwatch::classifier::{make_sample, recurrence_plot, RpMode, TsRpModel};
use meterwatch::data::load_datasets;
use meterwatch::detector::{detect_area, first_alarm, DetectionParams};
use meterwatch::eval::roc_auc;
use meterwatch::predictor::{build_features, TrainedPredictor};
use meterwatch::simgen::Label;
use meterwatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Data = 5,
    Panic = 6,
}

/// Trained residual-error predictor.
pub struct MwPredictor {
    inner: TrainedPredictor,
}

/// Trained submeter classifier.
pub struct MwClassifier {
    inner: TsRpModel,
}

/// Result of running detection over one area.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MwDetection {
    pub flagged: bool,
    /// Index into the predicted days, or -1.
    pub start_index: i64,
    /// First alarm date as YYYYMMDD, or 0.
    pub start_yyyymmdd: i32,
    pub n_days: usize,
    /// kWh per DPE unit.
    pub scale: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MwStatus {
    match e {
        Error::Io { .. } | Error::MissingInput(_) => MwStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::ArchitectureMismatch { .. } => MwStatus::Format,
        Error::InvalidArgument(_) | Error::Config(_) | Error::Shape(_) => MwStatus::InvalidArgument,
        _ => MwStatus::Data,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (MwStatus, String)>) -> MwStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MwStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MwStatus::Panic
        }
    }
}

fn lib<T>(r: meterwatch::Result<T>) -> Result<T, (MwStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MwStatus, String) {
    (MwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (MwStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (MwStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (MwStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a predictor checkpoint written by `train-predictor`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_predictor_load(path: *const c_char, out: *mut *mut MwPredictor) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(TrainedPredictor::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(MwPredictor { inner }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `mw_predictor_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mw_predictor_free(handle: *mut MwPredictor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mw_predictor_window_size(handle: *const MwPredictor, out: *mut usize) -> MwStatus {
    guard(|| {
        let (Some(h), false) = (handle.as_ref(), out.is_null()) else {
            return Err(null("handle or out"));
        };
        *out = h.inner.config.window_size;
        Ok(())
    })
}

/// Predicts the residual error of one area stored as a usage CSV and runs
/// sliding-window detection with threshold `t` (standardized units) and
/// run length `l`.
///
/// # Safety
/// `handle` must be live, `csv_path` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mw_predictor_detect_csv(
    handle: *const MwPredictor,
    csv_path: *const c_char,
    t: f64,
    l: usize,
    out: *mut MwDetection,
) -> MwStatus {
    guard(|| {
        let (Some(h), false) = (handle.as_ref(), out.is_null()) else {
            return Err(null("handle or out"));
        };
        let path = path_arg(csv_path)?;
        let mut areas = lib(load_datasets(&path))?;
        if areas.len() != 1 {
            return Err((
                MwStatus::InvalidArgument,
                format!("{} holds {} areas, expected one", path.display(), areas.len()),
            ));
        }
        let ds = areas.remove(0);
        let table = lib(build_features(&ds))?;
        let predicted = lib(h.inner.predict_series(&table))?;
        let observed = lib(table.observed_on(&predicted.dates))?;
        let scale = h.inner.standardizer.error_scale();
        let d = lib(detect_area(&ds.area_id, &observed, &predicted, &DetectionParams { t, l }, scale, None))?;
        let index = d.predicted_start.and_then(|s| predicted.dates.iter().position(|&x| x == s));
        *out = MwDetection {
            flagged: d.flagged,
            start_index: index.map_or(-1, |i| i as i64),
            start_yyyymmdd: d
                .predicted_start
                .map_or(0, |s| s.year() * 10_000 + s.month() as i32 * 100 + s.day() as i32),
            n_days: predicted.len(),
            scale,
        };
        Ok(())
    })
}

/// Loads a classifier checkpoint written by `train-classifier`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mw_classifier_load(path: *const c_char, out: *mut *mut MwClassifier) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(TsRpModel::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(MwClassifier { inner }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `mw_classifier_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mw_classifier_free(handle: *mut MwClassifier) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Probability that a submeter is inaccurate, from its daily readings.
/// Only the last `series_len` values are used; shorter series are padded.
///
/// # Safety
/// `handle` must be live, `values` must hold `len` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mw_classifier_score(
    handle: *const MwClassifier,
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> MwStatus {
    guard(|| {
        let (Some(h), false) = (handle.as_ref(), out.is_null()) else {
            return Err(null("handle or out"));
        };
        let values = slice_arg(values, len, "values")?;
        let cfg = &h.inner.config;
        let sample = lib(make_sample("", "", values, Label::Accurate, cfg.series_len, cfg.rp_mode))?;
        *out = lib(h.inner.classify(&sample))?;
        Ok(())
    })
}

/// Left edge of the first run of `l` values strictly above `t`, or -1.
///
/// # Safety
/// `dpe` must hold `len` doubles and `out_index` be valid.
#[no_mangle]
pub unsafe extern "C" fn mw_first_alarm(dpe: *const f64, len: usize, t: f64, l: usize, out_index: *mut i64) -> MwStatus {
    guard(|| {
        if out_index.is_null() {
            return Err(null("out_index"));
        }
        let dpe = slice_arg(dpe, len, "dpe")?;
        *out_index = lib(first_alarm(dpe, &DetectionParams { t, l }))?.map_or(-1, |i| i as i64);
        Ok(())
    })
}

/// ROC AUC with ties counted as one half. `labels` holds 0 or 1 per score.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mw_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|&b| b != 0).collect();
        *out = lib(roc_auc(scores, &labels))?;
        Ok(())
    })
}

/// Writes the `len x len` recurrence plot of `series` row-major into `out`.
/// A negative `percentile` selects the grayscale plot.
///
/// # Safety
/// `series` must hold `len` doubles and `out` room for `len * len`.
#[no_mangle]
pub unsafe extern "C" fn mw_recurrence_plot(series: *const f64, len: usize, percentile: f64, out: *mut f64) -> MwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let series = slice_arg(series, len, "series")?;
        let mode = if percentile < 0.0 {
            RpMode::Grayscale
        } else {
            RpMode::Binary { percentile }
        };
        let rp = lib(recurrence_plot(series, mode))?;
        std::slice::from_raw_parts_mut(out, rp.matrix.len()).copy_from_slice(&rp.matrix);
        Ok(())
    })
}
