//! Ranking metrics, stratified folds and the experiment report bundle.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::TargetRateRow;
use crate::detector::AreaDetection;
use crate::error::{Error, Result};
use crate::predictor::SweepRow;

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = class_counts(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::ClassCount("ROC AUC needs both classes".into()));
    }
    // Walk from the highest score down: every negative in a group beats
    // nothing above it, and each positive above it scores 1; ties score ½.
    let mut u = 0.0;
    let mut pos_above = 0usize;
    for g in tie_groups(scores) {
        let gp = g.iter().filter(|&&i| labels[i]).count();
        let gn = g.len() - gp;
        u += (gn * pos_above) as f64 + 0.5 * (gn * gp) as f64;
        pos_above += gp;
    }
    Ok(u / (p as f64 * n as f64))
}

/// Average precision: `Σ (R_k − R_{k−1}) · P_k` over distinct score thresholds.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, _) = class_counts(scores, labels)?;
    if p == 0 {
        return Err(Error::ClassCount("PR AUC needs at least one positive".into()));
    }
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    for g in tie_groups(scores) {
        let gp = g.iter().filter(|&&i| labels[i]).count();
        tp += gp;
        fp += g.len() - gp;
        if gp > 0 {
            ap += (gp as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

/// `(FPR, TPR)` at every distinct threshold, starting at the origin.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let (p, n) = class_counts(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::ClassCount("ROC curve needs both classes".into()));
    }
    let mut pts = vec![CurvePoint { x: 0.0, y: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for g in tie_groups(scores) {
        tp += g.iter().filter(|&&i| labels[i]).count();
        fp = fp + g.len() - g.iter().filter(|&&i| labels[i]).count();
        pts.push(CurvePoint {
            x: fp as f64 / n as f64,
            y: tp as f64 / p as f64,
        });
    }
    Ok(pts)
}

/// `(recall, precision)` at every distinct threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let (p, _) = class_counts(scores, labels)?;
    if p == 0 {
        return Err(Error::ClassCount("PR curve needs at least one positive".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut pts = Vec::new();
    for g in tie_groups(scores) {
        tp += g.iter().filter(|&&i| labels[i]).count();
        seen += g.len();
        pts.push(CurvePoint {
            x: tp as f64 / p as f64,
            y: tp as f64 / seen as f64,
        });
    }
    Ok(pts)
}

/// Fold index per sample. Each class is shuffled and dealt round-robin, so
/// per-class counts differ by at most one between folds.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut folds = vec![0; labels.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::ClassCount(format!(
                "{} samples of class {} for {k} folds",
                idx.len(),
                class as u8
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            folds[i] = (offset + pos) % k;
        }
        offset += idx.len();
    }
    Ok(folds)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    (m, var.sqrt())
}

/// `"0.82 ± 0.07"`
pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.2} ± {s:.2}")
}

/// Per-architecture cross-validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSummary {
    pub architecture: String,
    pub fold_roc_auc: Vec<f64>,
    pub fold_pr_auc: Vec<f64>,
    pub mean_roc_auc: f64,
    pub std_roc_auc: f64,
    pub mean_pr_auc: f64,
    pub std_pr_auc: f64,
    pub roc_auc: String,
    pub pr_auc: String,
}

impl ArchitectureSummary {
    pub fn new(architecture: &str, fold_roc_auc: Vec<f64>, fold_pr_auc: Vec<f64>) -> Self {
        let (mr, sr) = mean_std(&fold_roc_auc);
        let (mp, sp) = mean_std(&fold_pr_auc);
        ArchitectureSummary {
            architecture: architecture.to_string(),
            roc_auc: format_mean_std(&fold_roc_auc),
            pr_auc: format_mean_std(&fold_pr_auc),
            fold_roc_auc,
            fold_pr_auc,
            mean_roc_auc: mr,
            std_roc_auc: sr,
            mean_pr_auc: mp,
            std_pr_auc: sp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCurve {
    pub architecture: String,
    pub fold: usize,
    pub roc: Vec<CurvePoint>,
    pub pr: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionRow {
    pub accurate_proportion: f64,
    pub mean_roc_auc: f64,
    pub std_roc_auc: f64,
}

/// Everything the evaluation stage emits. Sections that could not be
/// produced stay empty and are named in `missing`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub window_sweep: Vec<SweepRow>,
    pub detections: Vec<AreaDetection>,
    pub architectures: Vec<ArchitectureSummary>,
    pub curves: Vec<FoldCurve>,
    pub target_rates: Vec<TargetRateRow>,
    pub proportion_sweep: Vec<ProportionRow>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl ExperimentReport {
    /// Writes the bundle into `dir` and returns the files written.
    pub fn write(&self, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        match format {
            ReportFormat::Json => {
                let p = dir.join("report.json");
                std::fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&p, e))?;
                out.push(p);
            }
            ReportFormat::Csv => {
                let p = dir.join("window_sweep.csv");
                write_csv(&p, &self.window_sweep)?;
                out.push(p);

                #[derive(Serialize)]
                struct DetRow<'a> {
                    area_id: &'a str,
                    flagged: bool,
                    predicted_start: Option<String>,
                    lag: Option<i64>,
                    t: f64,
                    #[serde(rename = "L")]
                    l: usize,
                }
                let p = dir.join("detections.csv");
                write_csv(
                    &p,
                    &self
                        .detections
                        .iter()
                        .map(|d| DetRow {
                            area_id: &d.area_id,
                            flagged: d.flagged,
                            predicted_start: d.predicted_start.map(|s| s.to_string()),
                            lag: d.lag,
                            t: d.params.t,
                            l: d.params.l,
                        })
                        .collect::<Vec<_>>(),
                )?;
                out.push(p);

                #[derive(Serialize)]
                struct ArchRow<'a> {
                    architecture: &'a str,
                    fold: usize,
                    roc_auc: f64,
                    pr_auc: f64,
                }
                let p = dir.join("architectures.csv");
                let rows: Vec<ArchRow> = self
                    .architectures
                    .iter()
                    .flat_map(|a| {
                        a.fold_roc_auc
                            .iter()
                            .zip(&a.fold_pr_auc)
                            .enumerate()
                            .map(move |(fold, (&r, &pr))| ArchRow {
                                architecture: &a.architecture,
                                fold,
                                roc_auc: r,
                                pr_auc: pr,
                            })
                    })
                    .collect();
                write_csv(&p, &rows)?;
                out.push(p);

                #[derive(Serialize)]
                struct CurveRow<'a> {
                    architecture: &'a str,
                    fold: usize,
                    curve: &'static str,
                    x: f64,
                    y: f64,
                }
                let p = dir.join("curves.csv");
                let rows: Vec<CurveRow> = self
                    .curves
                    .iter()
                    .flat_map(|c| {
                        let roc = c.roc.iter().map(move |pt| ("roc", pt));
                        let pr = c.pr.iter().map(move |pt| ("pr", pt));
                        roc.chain(pr).map(move |(curve, pt)| CurveRow {
                            architecture: &c.architecture,
                            fold: c.fold,
                            curve,
                            x: pt.x,
                            y: pt.y,
                        })
                    })
                    .collect();
                write_csv(&p, &rows)?;
                out.push(p);

                let p = dir.join("target_rates.csv");
                write_csv(&p, &self.target_rates)?;
                out.push(p);

                let p = dir.join("proportion_sweep.csv");
                write_csv(&p, &self.proportion_sweep)?;
                out.push(p);
            }
        }
        Ok(out)
    }
}
