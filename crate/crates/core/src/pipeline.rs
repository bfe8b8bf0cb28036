//! Workflow stages and their on-disk artifacts.
//!
//! ```text
//! data_dir/areas/<area>.csv            monitored areas (usage CSV)
//! data_dir/labels/<area>.json          ground truth, when known
//! data_dir/reference/<ref>.csv         accurate areas for predictor training
//! out/clean/{areas,reference}/...      cleaned CSVs and removed-day reports
//! out/predictor/model.json             LSTM checkpoint
//! out/predictor/training_report.json   loss curve, window sweep, target rates
//! out/predictor/target_rates.csv
//! out/predictions/<area>.csv           date,observed_E,predicted_E
//! out/detect/<area>.{json,csv}         detection result and DPE trace
//! out/detect/summary.json
//! out/classifier/{model,cv_report}.json, oof.csv
//! out/classify/classifications.csv
//! out/report/                          evaluation bundle
//! out/manifest.json                    config, seeds, hashes, timestamps
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{compare_on_detection, fit_all, flatten_windows, TargetRateRow};
use crate::classifier::{
    classification_rows, decide, make_sample, prepare_samples, train as train_classifier, train_cv, InputMode,
    SubmeterSample, TsRpConfig, TsRpModel,
};
use crate::config::RunConfig;
use crate::data::{
    drop_invalid_days, drop_missing_days, load_datasets, save_usage_file, ResidualSeries, UsageDataset,
};
use crate::detector::{detect_area, write_trace_csv, AreaDetection, TraceRow};
use crate::error::{Error, Result};
use crate::eval::{
    pr_curve, roc_curve, ArchitectureSummary, ExperimentReport, FoldCurve, ProportionRow, ReportFormat,
};
use crate::predictor::{
    build_features, make_windows, split_train_test, train as train_predictor, window_sweep, FeatureTable,
    SweepRow, TrainedPredictor, TrainingHistory, WindowSample,
};
use crate::simgen::{make_labeled_corpus, make_reference_areas, CorpusConfig, Label, LabelsFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Stage {
    Generate,
    Clean,
    TrainPredictor,
    Detect,
    TrainClassifier,
    Classify,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::Clean,
        Stage::TrainPredictor,
        Stage::Detect,
        Stage::TrainClassifier,
        Stage::Classify,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Clean => "clean",
            Stage::TrainPredictor => "train-predictor",
            Stage::Detect => "detect",
            Stage::TrainClassifier => "train-classifier",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// What a stage did, for the console.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stage: Stage,
    pub skipped: bool,
    pub summary: String,
}

impl Outcome {
    fn done(stage: Stage, summary: String) -> Self {
        Outcome {
            stage,
            skipped: false,
            summary,
        }
    }

    fn skipped(stage: Stage, why: &str) -> Self {
        Outcome {
            stage,
            skipped: true,
            summary: format!("skipped: {why}"),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.summary)
    }
}

/// Resolved artifact locations for one config.
#[derive(Debug, Clone)]
pub struct Layout {
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        Layout {
            data: config.paths.data_dir.clone(),
            out: config.paths.output_dir.clone(),
        }
    }
    pub fn areas(&self) -> PathBuf {
        self.data.join("areas")
    }
    pub fn labels(&self) -> PathBuf {
        self.data.join("labels")
    }
    pub fn reference(&self) -> PathBuf {
        self.data.join("reference")
    }
    pub fn clean_areas(&self) -> PathBuf {
        self.out.join("clean").join("areas")
    }
    pub fn clean_reference(&self) -> PathBuf {
        self.out.join("clean").join("reference")
    }
    pub fn predictor_model(&self) -> PathBuf {
        self.out.join("predictor").join("model.json")
    }
    pub fn training_report(&self) -> PathBuf {
        self.out.join("predictor").join("training_report.json")
    }
    pub fn predictions(&self) -> PathBuf {
        self.out.join("predictions")
    }
    pub fn detect(&self) -> PathBuf {
        self.out.join("detect")
    }
    pub fn detect_summary(&self) -> PathBuf {
        self.detect().join("summary.json")
    }
    pub fn classifier_model(&self) -> PathBuf {
        self.out.join("classifier").join("model.json")
    }
    pub fn cv_report(&self) -> PathBuf {
        self.out.join("classifier").join("cv_report.json")
    }
    pub fn classifications(&self) -> PathBuf {
        self.out.join("classify").join("classifications.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.out.join("report")
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Serializes `rows` under `header`, writing the header even when empty.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sorted `*.csv` files of `dir`; empty when the directory is absent.
fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Every dataset found in the CSVs of `dir`, ordered by area id.
pub fn load_dir(dir: &Path) -> Result<Vec<UsageDataset>> {
    let mut out = Vec::new();
    for f in csv_files(dir)? {
        out.extend(load_datasets(&f)?);
    }
    out.sort_by(|a, b| a.area_id.cmp(&b.area_id));
    if out.windows(2).any(|w| w[0].area_id == w[1].area_id) {
        return Err(Error::InvalidArgument(format!(
            "an area appears in more than one file under {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn save_dataset(dir: &Path, ds: &UsageDataset) -> Result<()> {
    mkdir(dir)?;
    save_usage_file(&dir.join(format!("{}.csv", ds.area_id)), &ds.to_records())
}

fn load_labels(layout: &Layout, area_id: &str) -> Result<Option<LabelsFile>> {
    let p = layout.labels().join(format!("{area_id}.json"));
    if p.exists() {
        read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}

/// Date of the earliest injected day, read against the raw (uncleaned) dates.
fn actual_start(raw: &BTreeMap<String, Vec<NaiveDate>>, labels: &LabelsFile) -> Result<Option<NaiveDate>> {
    let Some(s) = labels.injection_spec().earliest_start() else {
        return Ok(None);
    };
    let dates = raw
        .get(&labels.area_id)
        .ok_or_else(|| Error::MissingInput(format!("raw data for area {}", labels.area_id)))?;
    Ok(dates.get(s).copied())
}

fn is_malfunctioning(labels: &Option<LabelsFile>) -> bool {
    labels
        .as_ref()
        .is_some_and(|l| l.labels.values().any(|&v| v == Label::Inaccurate))
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GenerateOverrides {
    pub areas: Option<usize>,
    pub submeters: Option<usize>,
    pub days: Option<usize>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl GenerateOverrides {
    pub fn apply(&self, config: &mut RunConfig) {
        let c = &mut config.simgen;
        if let Some(n) = self.areas {
            c.n_areas = n;
            c.malfunctioning_areas = c.malfunctioning_areas.min(n);
        }
        if let Some(n) = self.submeters {
            c.area.n_submeters = n;
        }
        if let Some(n) = self.days {
            c.area.n_days = n;
        }
        if let Some(f) = self.fraction {
            c.fraction_inaccurate = f;
        }
        if let Some(s) = self.seed {
            config.seed = Some(s);
        }
    }
}

pub fn generate(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let corpus = make_labeled_corpus(&config.simgen)?;
    let refs = make_reference_areas(&config.simgen, config.reference_areas)?;
    for area in &corpus {
        save_dataset(&layout.areas(), &area.dataset)?;
        write_json(
            &layout.labels().join(format!("{}.json", area.dataset.area_id)),
            &area.labels_file(),
        )?;
    }
    for r in &refs {
        save_dataset(&layout.reference(), r)?;
    }
    let bad = corpus.iter().filter(|a| a.is_malfunctioning()).count();
    let inaccurate: usize = corpus.iter().map(|a| a.spec.targets.len()).sum();
    let meters: usize = corpus.iter().map(|a| a.dataset.n_submeters()).sum();
    Ok(Outcome::done(
        Stage::Generate,
        format!(
            "{} areas ({} malfunctioning, {} of {} submeters inaccurate), {} reference areas, {} days each -> {}",
            corpus.len(),
            bad,
            inaccurate,
            meters,
            refs.len(),
            config.simgen.area.n_days,
            layout.data.display()
        ),
    ))
}

// ------------------------------------------------------------------- clean

/// Monitored areas only lose days with missing readings: dropping the days
/// where the submeter sum exceeds the master would erase the evidence of a
/// drifting meter. Reference areas get the full cleaning.
pub fn clean(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let areas = load_dir(&layout.areas())?;
    if areas.is_empty() {
        return Err(Error::MissingInput(format!("no area CSVs under {}", layout.areas().display())));
    }
    let refs = load_dir(&layout.reference())?;
    let mut removed = 0;
    for (dir, datasets, full) in [(layout.clean_areas(), &areas, false), (layout.clean_reference(), &refs, true)] {
        for ds in datasets.iter() {
            let (cleaned, r) = if full {
                drop_invalid_days(ds)?
            } else {
                drop_missing_days(ds)?
            };
            removed += r.total();
            save_dataset(&dir, &cleaned)?;
            write_json(&dir.join(format!("{}.removed.json", ds.area_id)), &r.reports())?;
        }
    }
    Ok(Outcome::done(
        Stage::Clean,
        format!("{} areas and {} reference areas cleaned, {removed} days removed", areas.len(), refs.len()),
    ))
}

// --------------------------------------------------------- train-predictor

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// `reference` or `area_history`.
    pub source: String,
    pub n_samples: usize,
    pub history: TrainingHistory,
    pub window_sweep: Vec<SweepRow>,
    pub target_rate_horizon: usize,
    pub target_rates: Vec<TargetRateRow>,
}

fn tables(datasets: &[UsageDataset]) -> Result<Vec<FeatureTable>> {
    datasets.par_iter().map(build_features).collect()
}

pub fn train_predictor_stage(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let pc = &config.predictor;
    let refs = load_dir(&layout.clean_reference())?;
    let areas = load_dir(&layout.clean_areas())?;
    if refs.is_empty() && areas.is_empty() {
        return Err(Error::MissingInput(format!("no cleaned data under {}", layout.out.join("clean").display())));
    }
    let (source, train_tables) = if refs.is_empty() {
        log::warn!("no reference areas; training on the history of the monitored areas");
        ("area_history", tables(&areas)?)
    } else {
        ("reference", tables(&refs)?)
    };
    let mut samples: Vec<WindowSample> = Vec::new();
    for t in &train_tables {
        let w = make_windows(t, pc.window_size)?;
        if source == "reference" {
            samples.extend(w);
        } else {
            let n_test = pc.n_test.min(w.len().saturating_sub(1));
            samples.extend(split_train_test(&w, n_test)?.0);
        }
    }
    log::info!("training predictor on {} windows", samples.len());
    let model = train_predictor(&samples, pc)?;
    mkdir(&layout.out.join("predictor"))?;
    model.save(layout.predictor_model())?;

    let sweep = if config.window_sweep.is_empty() {
        Vec::new()
    } else {
        window_sweep(&train_tables, &config.window_sweep, pc)?
    };
    let target_rates = target_rates(config, &layout, &model, &samples, &areas)?;
    write_rows(
        &layout.out.join("predictor").join("target_rates.csv"),
        &["threshold", "model", "days_outside", "target_rate_pct"],
        &target_rates,
    )?;
    let report = TrainingReport {
        source: source.into(),
        n_samples: samples.len(),
        history: model.history.clone(),
        window_sweep: sweep,
        target_rate_horizon: config.target_rate_horizon,
        target_rates,
    };
    write_json(&layout.training_report(), &report)?;
    Ok(Outcome::done(
        Stage::TrainPredictor,
        format!(
            "{} windows from {source}, {} epochs (best {}), validation MSE {:.5}",
            samples.len(),
            model.history.val_mse.len(),
            model.history.best_epoch,
            model.history.final_val_mse
        ),
    ))
}

/// The LSTM and the classical baselines, all fitted on the predictor's
/// training windows, scored on the last `target_rate_horizon` days of every
/// malfunctioning area.
fn target_rates(
    config: &RunConfig,
    layout: &Layout,
    model: &TrainedPredictor,
    train_samples: &[WindowSample],
    areas: &[UsageDataset],
) -> Result<Vec<TargetRateRow>> {
    if config.baselines.thresholds.is_empty() || config.target_rate_horizon == 0 {
        return Ok(Vec::new());
    }
    let mut horizon: Vec<WindowSample> = Vec::new();
    for ds in areas {
        if !is_malfunctioning(&load_labels(layout, &ds.area_id)?) {
            continue;
        }
        let w = make_windows(&build_features(ds)?, model.config.window_size)?;
        let keep = config.target_rate_horizon.min(w.len());
        horizon.extend_from_slice(&w[w.len() - keep..]);
    }
    if horizon.is_empty() {
        return Ok(Vec::new());
    }
    let flat_train = flatten_windows(train_samples, &model.standardizer);
    let flat_eval = flatten_windows(&horizon, &model.standardizer);
    let baselines = fit_all(&flat_train, &config.baselines)?;
    let mut predictions: Vec<(String, Vec<f64>)> = baselines
        .iter()
        .map(|m| (m.name().to_string(), flat_eval.iter().map(|s| m.predict(&s.x)).collect()))
        .collect();
    predictions.push((
        "lstm".into(),
        horizon
            .iter()
            .map(|s| model.predict_window(&s.inputs))
            .collect::<Result<Vec<_>>>()?,
    ));
    let observed: Vec<f64> = horizon.iter().map(|s| s.target).collect();
    compare_on_detection(&predictions, &observed, &config.baselines.thresholds)
}

// ------------------------------------------------------------------ detect

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub flagged: Vec<String>,
    pub detections: Vec<AreaDetection>,
}

#[derive(Serialize)]
struct PredictionRow {
    date: NaiveDate,
    #[serde(rename = "observed_E")]
    observed: f64,
    #[serde(rename = "predicted_E")]
    predicted: f64,
}

pub fn detect(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let model_path = layout.predictor_model();
    if !model_path.exists() {
        return Err(Error::MissingInput(model_path.display().to_string()));
    }
    let model = TrainedPredictor::load(&model_path)?;
    let scale = model.standardizer.error_scale();
    let areas = load_dir(&layout.clean_areas())?;
    if areas.is_empty() {
        return Err(Error::MissingInput(format!("no cleaned areas under {}", layout.clean_areas().display())));
    }
    let raw: BTreeMap<String, Vec<NaiveDate>> = load_dir(&layout.areas())?
        .into_iter()
        .map(|d| (d.area_id.clone(), d.dates()))
        .collect();
    let truth = areas
        .iter()
        .map(|ds| match load_labels(&layout, &ds.area_id)? {
            Some(l) => actual_start(&raw, &l),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let detections = areas
        .par_iter()
        .zip(truth.par_iter())
        .map(|(ds, start)| -> Result<AreaDetection> {
            let table = build_features(ds)?;
            let predicted = model.predict_series(&table)?;
            let observed: ResidualSeries = table.observed_on(&predicted.dates)?;
            detect_area(&ds.area_id, &observed, &predicted, &config.detector, scale, *start)
        })
        .collect::<Result<Vec<_>>>()?;

    mkdir(&layout.detect())?;
    for d in &detections {
        let rows: Vec<PredictionRow> = d
            .trace
            .iter()
            .map(|r: &TraceRow| PredictionRow {
                date: r.date,
                observed: r.observed,
                predicted: r.predicted,
            })
            .collect();
        write_rows(
            &layout.predictions().join(format!("{}.csv", d.area_id)),
            &["date", "observed_E", "predicted_E"],
            &rows,
        )?;
        write_json(&layout.detect().join(format!("{}.json", d.area_id)), d)?;
        let p = layout.detect().join(format!("{}.csv", d.area_id));
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_trace_csv(f, &d.trace)?;
    }
    let flagged: Vec<String> = detections.iter().filter(|d| d.flagged).map(|d| d.area_id.clone()).collect();
    let summary = DetectionSummary {
        flagged: flagged.clone(),
        detections,
    };
    write_json(&layout.detect_summary(), &summary)?;
    let lags: Vec<String> = summary
        .detections
        .iter()
        .filter_map(|d| d.lag.map(|l| format!("{}:{l}", d.area_id)))
        .collect();
    Ok(Outcome::done(
        Stage::Detect,
        format!(
            "{} of {} areas flagged (t = {}, L = {}, scale {:.3} kWh); lags [{}]",
            flagged.len(),
            summary.detections.len(),
            config.detector.t,
            config.detector.l,
            scale,
            lags.join(", ")
        ),
    ))
}

// -------------------------------------------------------- train-classifier

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub n_samples: usize,
    pub n_inaccurate: usize,
    pub architectures: Vec<ArchitectureSummary>,
    pub curves: Vec<FoldCurve>,
    pub proportion_sweep: Vec<ProportionRow>,
}

/// One sample per submeter of each area; meters without a label count as accurate.
pub fn samples_from(
    datasets: &[UsageDataset],
    labels: &BTreeMap<String, LabelsFile>,
    config: &TsRpConfig,
) -> Result<Vec<SubmeterSample>> {
    let jobs: Vec<(&UsageDataset, &String)> = datasets
        .iter()
        .flat_map(|d| d.submeters.keys().map(move |m| (d, m)))
        .collect();
    jobs.par_iter()
        .map(|(d, m)| {
            let values: Vec<f64> = d.submeters[*m].values().copied().collect();
            let label = labels
                .get(&d.area_id)
                .and_then(|l| l.labels.get(*m).copied())
                .unwrap_or(Label::Accurate);
            make_sample(&d.area_id, m, &values, label, config.series_len, config.rp_mode)
        })
        .collect()
}

fn labels_for(layout: &Layout, datasets: &[UsageDataset]) -> Result<BTreeMap<String, LabelsFile>> {
    let mut out = BTreeMap::new();
    for d in datasets {
        if let Some(l) = load_labels(layout, &d.area_id)? {
            out.insert(d.area_id.clone(), l);
        }
    }
    Ok(out)
}

fn modes(config: &RunConfig) -> Vec<InputMode> {
    let mut m = vec![config.classifier.inputs];
    for &a in &config.ablations {
        if !m.contains(&a) {
            m.push(a);
        }
    }
    m
}

/// Mean ROC AUC of the configured classifier as the share of accurate
/// meters in malfunctioning areas varies. Corpora are regenerated in memory.
pub fn proportion_sweep(corpus: &CorpusConfig, classifier: &TsRpConfig, proportions: &[f64]) -> Result<Vec<ProportionRow>> {
    proportions
        .iter()
        .map(|&p| {
            let cfg = CorpusConfig {
                fraction_inaccurate: 1.0 - p,
                ..corpus.clone()
            };
            let areas = make_labeled_corpus(&cfg)?;
            let samples = prepare_samples(&areas, classifier.series_len, classifier.rp_mode)?;
            let cv = train_cv(&samples, classifier)?;
            let s = ArchitectureSummary::new(classifier.inputs.name(), cv.fold_roc_auc, cv.fold_pr_auc);
            log::info!("accurate proportion {p}: ROC AUC {}", s.roc_auc);
            Ok(ProportionRow {
                accurate_proportion: p,
                mean_roc_auc: s.mean_roc_auc,
                std_roc_auc: s.std_roc_auc,
            })
        })
        .collect()
}

pub fn train_classifier_stage(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let areas = load_dir(&layout.clean_areas())?;
    let labels = labels_for(&layout, &areas)?;
    if labels.is_empty() {
        return Err(Error::MissingInput(format!("no label files under {}", layout.labels().display())));
    }
    let labeled: Vec<UsageDataset> = areas.into_iter().filter(|a| labels.contains_key(&a.area_id)).collect();
    let samples = samples_from(&labeled, &labels, &config.classifier)?;
    let n_inaccurate = samples.iter().filter(|s| s.label == Label::Inaccurate).count();
    let n_accurate = samples.len() - n_inaccurate;
    if n_inaccurate < config.classifier.folds || n_accurate < config.classifier.folds {
        return Ok(Outcome::skipped(
            Stage::TrainClassifier,
            &format!(
                "{n_inaccurate} inaccurate and {n_accurate} accurate meters, need {} of each",
                config.classifier.folds
            ),
        ));
    }

    let mut architectures = Vec::new();
    let mut curves = Vec::new();
    for mode in modes(config) {
        let cfg = config.classifier.with_inputs(mode);
        log::info!("cross-validating {}", mode.name());
        let cv = train_cv(&samples, &cfg)?;
        if mode == config.classifier.inputs {
            for f in 0..cfg.folds {
                let idx: Vec<usize> = (0..samples.len()).filter(|&i| cv.folds[i] == f).collect();
                let s: Vec<f64> = idx.iter().map(|&i| cv.scores[i]).collect();
                let l: Vec<bool> = idx.iter().map(|&i| samples[i].label == Label::Inaccurate).collect();
                curves.push(FoldCurve {
                    architecture: mode.name().into(),
                    fold: f,
                    roc: roc_curve(&s, &l)?,
                    pr: pr_curve(&s, &l)?,
                });
            }
            write_rows(
                &layout.out.join("classifier").join("oof.csv"),
                &["area_id", "meter_id", "score", "label_pred", "label_true"],
                &classification_rows(&samples, &cv.scores),
            )?;
        }
        architectures.push(ArchitectureSummary::new(mode.name(), cv.fold_roc_auc, cv.fold_pr_auc));
    }

    let sweep = if config.proportion_sweep.is_empty() {
        Vec::new()
    } else {
        proportion_sweep(&config.simgen, &config.classifier, &config.proportion_sweep)?
    };

    let refs: Vec<&SubmeterSample> = samples.iter().collect();
    let model = train_classifier(&refs, &config.classifier, config.classifier.seed)?;
    mkdir(&layout.out.join("classifier"))?;
    model.save(layout.classifier_model())?;
    let report = CvReport {
        n_samples: samples.len(),
        n_inaccurate,
        architectures,
        curves,
        proportion_sweep: sweep,
    };
    write_json(&layout.cv_report(), &report)?;
    let table: Vec<String> = report
        .architectures
        .iter()
        .map(|a| format!("{} ROC {} PR {}", a.architecture, a.roc_auc, a.pr_auc))
        .collect();
    Ok(Outcome::done(
        Stage::TrainClassifier,
        format!(
            "{} meters ({n_inaccurate} inaccurate), {}-fold CV: {}",
            samples.len(),
            config.classifier.folds,
            table.join("; ")
        ),
    ))
}

// ---------------------------------------------------------------- classify

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedMeter {
    pub area_id: String,
    pub meter_id: String,
    pub score: f64,
    pub label_pred: Label,
    pub label_true: Option<Label>,
}

pub fn classify(config: &RunConfig) -> Result<Outcome> {
    let layout = Layout::new(config);
    let areas = load_dir(&layout.clean_areas())?;
    let targets: Vec<UsageDataset> = if config.classify_all {
        areas
    } else {
        let summary: DetectionSummary = read_json(&layout.detect_summary())?;
        areas.into_iter().filter(|a| summary.flagged.contains(&a.area_id)).collect()
    };
    let header = ["area_id", "meter_id", "score", "label_pred", "label_true"];
    if targets.is_empty() {
        write_rows::<ClassifiedMeter>(&layout.classifications(), &header, &[])?;
        return Ok(Outcome::skipped(Stage::Classify, "no area flagged"));
    }
    let model = TsRpModel::load(layout.classifier_model())?;
    let labels = labels_for(&layout, &targets)?;
    let samples = samples_from(&targets, &labels, &model.config)?;
    let rows = samples
        .par_iter()
        .map(|s| {
            let score = model.classify(s)?;
            Ok(ClassifiedMeter {
                area_id: s.area_id.clone(),
                meter_id: s.meter_id.clone(),
                score,
                label_pred: decide(score),
                label_true: labels.get(&s.area_id).and_then(|l| l.labels.get(&s.meter_id).copied()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&layout.classifications(), &header, &rows)?;
    let called = rows.iter().filter(|r| r.label_pred == Label::Inaccurate).count();
    Ok(Outcome::done(
        Stage::Classify,
        format!("{} meters in {} areas scored, {called} called inaccurate", rows.len(), targets.len()),
    ))
}

// ---------------------------------------------------------------- evaluate

/// Collects the stage outputs into the report bundle. Absent inputs are
/// listed in the report; unless `allow_missing`, they also fail the stage
/// after the partial report is written.
pub fn evaluate(config: &RunConfig, format: ReportFormat, allow_missing: bool) -> Result<Outcome> {
    let layout = Layout::new(config);
    let mut report = ExperimentReport::default();
    let mut missing = Vec::new();

    match read_json::<TrainingReport>(&layout.training_report()) {
        Ok(t) => {
            report.window_sweep = t.window_sweep;
            report.target_rates = t.target_rates;
        }
        Err(Error::MissingInput(_)) => missing.push(layout.training_report().display().to_string()),
        Err(e) => return Err(e),
    }
    match read_json::<DetectionSummary>(&layout.detect_summary()) {
        Ok(d) => report.detections = d.detections,
        Err(Error::MissingInput(_)) => missing.push(layout.detect_summary().display().to_string()),
        Err(e) => return Err(e),
    }
    match read_json::<CvReport>(&layout.cv_report()) {
        Ok(c) => {
            report.architectures = c.architectures;
            report.curves = c.curves;
            report.proportion_sweep = c.proportion_sweep;
        }
        Err(Error::MissingInput(_)) => missing.push(layout.cv_report().display().to_string()),
        Err(e) => return Err(e),
    }
    report.missing = missing.clone();
    let files = report.write(&layout.report(), format)?;
    if !missing.is_empty() && !allow_missing {
        return Err(Error::MissingInput(missing.join(", ")));
    }
    Ok(Outcome::done(
        Stage::Evaluate,
        format!(
            "{} files under {}{}",
            files.len(),
            layout.report().display(),
            if missing.is_empty() {
                String::new()
            } else {
                format!(" (missing: {})", missing.join(", "))
            }
        ),
    ))
}

// ---------------------------------------------------------------- pipeline

fn run_stage(stage: Stage, config: &RunConfig, format: ReportFormat) -> std::result::Result<Outcome, StageError> {
    let r = match stage {
        Stage::Generate => generate(config),
        Stage::Clean => clean(config),
        Stage::TrainPredictor => train_predictor_stage(config),
        Stage::Detect => detect(config),
        Stage::TrainClassifier => train_classifier_stage(config),
        Stage::Classify => classify(config),
        Stage::Evaluate => evaluate(config, format, false),
    };
    r.map_err(|source| StageError { stage, source })
}

/// Runs one stage, or the whole workflow when `only` is `None`. The full
/// run generates data only when no area CSVs exist, skips classification
/// when nothing is flagged and tolerates the reports of skipped stages.
pub fn run_pipeline(
    config: &RunConfig,
    only: Option<Stage>,
    format: ReportFormat,
) -> std::result::Result<Vec<Outcome>, StageError> {
    if let Some(stage) = only {
        return run_stage(stage, config, format).map(|o| vec![o]);
    }
    let layout = Layout::new(config);
    let mut outcomes = Vec::new();
    let have_data = !csv_files(&layout.areas())
        .map_err(|source| StageError {
            stage: Stage::Generate,
            source,
        })?
        .is_empty();
    outcomes.push(if have_data {
        Outcome::skipped(Stage::Generate, "area CSVs already present")
    } else {
        run_stage(Stage::Generate, config, format)?
    });
    for stage in [Stage::Clean, Stage::TrainPredictor, Stage::Detect, Stage::TrainClassifier] {
        outcomes.push(run_stage(stage, config, format)?);
    }
    let trained = !outcomes.last().is_some_and(|o| o.skipped);
    let summary: DetectionSummary = read_json(&layout.detect_summary()).map_err(|source| StageError {
        stage: Stage::Classify,
        source,
    })?;
    if !trained {
        let _ = std::fs::remove_file(layout.classifications());
        outcomes.push(Outcome::skipped(Stage::Classify, "no trained classifier"));
    } else if summary.flagged.is_empty() && !config.classify_all {
        let _ = std::fs::remove_file(layout.classifications());
        outcomes.push(Outcome::skipped(Stage::Classify, "no area flagged"));
    } else {
        outcomes.push(run_stage(Stage::Classify, config, format)?);
    }
    outcomes.push(
        evaluate(config, format, true).map_err(|source| StageError {
            stage: Stage::Evaluate,
            source,
        })?,
    );
    Ok(outcomes)
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactHash>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// SHA-256 of every file under the data and output directories except the
/// manifest itself, keyed by `data/...` and `out/...` relative paths.
pub fn hash_artifacts(layout: &Layout) -> Result<Vec<ArtifactHash>> {
    let manifest = layout.manifest();
    let mut out = Vec::new();
    for (prefix, root) in [("data", &layout.data), ("out", &layout.out)] {
        let mut files = Vec::new();
        walk(root, &mut files)?;
        for f in files {
            if f == manifest || (prefix == "data" && f.starts_with(&layout.out)) {
                continue;
            }
            let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
            let rel = f.strip_prefix(root).unwrap_or(&f);
            out.push(ArtifactHash {
                path: format!("{prefix}/{}", rel.to_string_lossy().replace('\\', "/")),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn write_manifest(config: &RunConfig, command: &str, started_at: chrono::DateTime<chrono::Utc>) -> Result<PathBuf> {
    let layout = Layout::new(config);
    mkdir(&layout.out)?;
    let seeds = BTreeMap::from([
        ("simgen".to_string(), config.simgen.seed),
        ("predictor".to_string(), config.predictor.seed),
        ("classifier".to_string(), config.classifier.seed),
    ]);
    let manifest = Manifest {
        command: command.to_string(),
        started_at: started_at.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        seeds,
        config: config.clone(),
        artifacts: hash_artifacts(&layout)?,
    };
    let p = layout.manifest();
    write_json(&p, &manifest)?;
    Ok(p)
}
