//! Per-submeter accurate/inaccurate classification from the raw usage
//! series and its recurrence plot.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{pr_auc, roc_auc, stratified_kfold};
use crate::nn::layers::{sigmoid, LayerTrace};
use crate::nn::loss::bce_with_logits;
use crate::nn::{
    Checkpoint, Conv1d, Conv2d, Dense, Layer, Optimizer, OptimizerConfig, Padding, Params, Sequential, Tensor,
};
use crate::simgen::{derive_seed, Label, LabeledArea};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RpMode {
    /// 1 where the distance is within the given percentile of off-diagonal distances.
    Binary { percentile: f64 },
    /// `1 − D / max D`
    Grayscale,
}

impl Default for RpMode {
    fn default() -> Self {
        RpMode::Binary { percentile: 10.0 }
    }
}

/// Row-major `T×T` matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrencePlot {
    pub size: usize,
    pub matrix: Vec<f64>,
}

impl RecurrencePlot {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }
}

/// Linear-interpolated percentile of `values` (which get sorted).
fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Recurrence plot with embedding dimension 1 and delay 1.
pub fn recurrence_plot(series: &[f64], mode: RpMode) -> Result<RecurrencePlot> {
    let n = series.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("recurrence plot input".into()));
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (series[i] - series[j]).abs();
        }
    }
    let matrix = match mode {
        RpMode::Binary { percentile: pct } => {
            let mut off: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| d[i * n + j])
                .collect();
            let eps = percentile(&mut off, pct);
            d.iter().map(|&v| if v <= eps { 1.0 } else { 0.0 }).collect()
        }
        RpMode::Grayscale => {
            let max = d.iter().cloned().fold(0.0, f64::max);
            if max == 0.0 {
                vec![1.0; n * n]
            } else {
                d.iter().map(|&v| 1.0 - v / max).collect()
            }
        }
    };
    Ok(RecurrencePlot { size: n, matrix })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmeterSample {
    pub area_id: String,
    pub meter_id: String,
    /// Standardized, tail-aligned, zero-padded on the left.
    pub series: Vec<f64>,
    pub rp: RecurrencePlot,
    pub label: Label,
}

/// Keep the last `t_len` values, z-score them (constant series become
/// zeros) and left-pad with zeros.
pub fn standardize_tail(values: &[f64], t_len: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let tail = &values[values.len().saturating_sub(t_len)..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    let sd = (tail.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / tail.len() as f64).sqrt();
    let mut out = vec![0.0; t_len - tail.len()];
    if sd > 1e-12 * m.abs().max(1.0) {
        out.extend(tail.iter().map(|v| (v - m) / sd));
    } else {
        out.extend(std::iter::repeat_n(0.0, tail.len()));
    }
    Ok(out)
}

pub fn make_sample(area_id: &str, meter_id: &str, values: &[f64], label: Label, t_len: usize, mode: RpMode) -> Result<SubmeterSample> {
    if values.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let series = standardize_tail(values, t_len)?;
    let rp = recurrence_plot(&series, mode)?;
    Ok(SubmeterSample {
        area_id: area_id.to_string(),
        meter_id: meter_id.to_string(),
        series,
        rp,
        label,
    })
}

/// One sample per submeter of every area, labeled from the injection truth.
pub fn prepare_samples(areas: &[LabeledArea], t_len: usize, mode: RpMode) -> Result<Vec<SubmeterSample>> {
    let jobs: Vec<(&LabeledArea, &String)> = areas
        .iter()
        .flat_map(|a| a.dataset.submeters.keys().map(move |m| (a, m)))
        .collect();
    jobs.par_iter()
        .map(|(a, m)| {
            let values: Vec<f64> = a.dataset.submeters[*m].values().copied().collect();
            let label = a.labels.get(*m).copied().unwrap_or(Label::Accurate);
            make_sample(&a.dataset.area_id, m, &values, label, t_len, mode)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Max-pool window after the activation; 1 disables pooling.
    pub pool: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Keep positions: flatten the feature map.
    Flatten,
    /// Max over positions for each channel.
    GlobalMax,
    GlobalAvg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub blocks: Vec<ConvBlock>,
    pub readout: Readout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Dual,
    SequenceOnly,
    MatrixOnly,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Dual => "dual",
            InputMode::SequenceOnly => "sequence_only",
            InputMode::MatrixOnly => "matrix_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsRpConfig {
    pub series_len: usize,
    pub rp_mode: RpMode,
    pub sequence_branch: BranchSpec,
    pub matrix_branch: BranchSpec,
    /// Output width of each branch's final dense layer.
    pub merge_width: usize,
    pub merge: Merge,
    pub inputs: InputMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TsRpConfig {
    fn default() -> Self {
        TsRpConfig {
            series_len: 128,
            rp_mode: RpMode::Grayscale,
            sequence_branch: BranchSpec {
                blocks: vec![
                    ConvBlock { filters: 8, kernel: 5, stride: 1, pool: 2 },
                    ConvBlock { filters: 8, kernel: 5, stride: 1, pool: 2 },
                ],
                readout: Readout::GlobalMax,
            },
            matrix_branch: BranchSpec {
                blocks: vec![
                    ConvBlock { filters: 4, kernel: 3, stride: 2, pool: 2 },
                    ConvBlock { filters: 8, kernel: 3, stride: 1, pool: 2 },
                    ConvBlock { filters: 8, kernel: 3, stride: 1, pool: 2 },
                ],
                readout: Readout::Flatten,
            },
            merge_width: 32,
            merge: Merge::Add,
            inputs: InputMode::Dual,
            epochs: 40,
            learning_rate: 1e-3,
            batch_size: 16,
            folds: 5,
            seed: 0,
        }
    }
}

impl TsRpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.series_len < 2 {
            return Err(Error::InvalidArgument("series_len must be at least 2".into()));
        }
        if self.merge_width == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("merge_width and batch_size must be positive".into()));
        }
        if let RpMode::Binary { percentile } = self.rp_mode {
            if !(0.0..=100.0).contains(&percentile) {
                return Err(Error::InvalidArgument("rp percentile must lie in [0, 100]".into()));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        for b in self.sequence_branch.blocks.iter().chain(&self.matrix_branch.blocks) {
            if b.filters == 0 || b.kernel == 0 || b.stride == 0 || b.pool == 0 {
                return Err(Error::InvalidArgument("conv block sizes must be positive".into()));
            }
        }
        if self.matrix_branch.readout != Readout::Flatten {
            return Err(Error::InvalidArgument("the matrix branch supports only the flatten readout".into()));
        }
        Ok(())
    }

    pub fn with_inputs(&self, inputs: InputMode) -> Self {
        TsRpConfig {
            inputs,
            ..self.clone()
        }
    }

    pub fn architecture(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "ts_rp",
            "series_len": self.series_len,
            "sequence_branch": self.sequence_branch,
            "matrix_branch": self.matrix_branch,
            "merge_width": self.merge_width,
            "merge": self.merge,
            "inputs": self.inputs,
        })
    }
}

fn build_branch(spec: &BranchSpec, input_shape: &[usize], width: usize, two_d: bool, rng: &mut ChaCha8Rng) -> Result<Sequential> {
    let mut layers = Vec::new();
    let mut channels = *input_shape.last().unwrap_or(&1);
    for b in &spec.blocks {
        layers.push(if two_d {
            Layer::Conv2d(Conv2d::new(b.kernel, channels, b.filters, b.stride, Padding::Same, rng))
        } else {
            Layer::Conv1d(Conv1d::new(b.kernel, channels, b.filters, b.stride, Padding::Same, rng))
        });
        layers.push(Layer::Relu);
        if b.pool > 1 {
            layers.push(if two_d {
                Layer::MaxPool2d { window: b.pool }
            } else {
                Layer::MaxPool1d { window: b.pool }
            });
        }
        channels = b.filters;
    }
    layers.push(match (spec.readout, two_d) {
        (Readout::Flatten, _) => Layer::Flatten,
        (Readout::GlobalMax, false) => Layer::GlobalMaxPool1d,
        (Readout::GlobalAvg, false) => Layer::GlobalAvgPool1d,
        _ => return Err(Error::InvalidArgument("global readouts apply to the sequence branch only".into())),
    });
    let probe = Sequential::new(layers.clone()).infer(&Tensor::zeros(input_shape))?;
    layers.push(Layer::Dense(Dense::new(probe.len(), width, rng)));
    Ok(Sequential::new(layers))
}

/// The dual-input network: sequence branch and matrix branch, each ending in
/// `dense(d)`, merged and mapped to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct TsRpModel {
    pub config: TsRpConfig,
    pub sequence: Option<Sequential>,
    pub matrix: Option<Sequential>,
    pub head: Dense,
}

pub struct TsRpTrace {
    seq: Option<Vec<LayerTrace>>,
    mat: Option<Vec<LayerTrace>>,
    merged: Tensor,
}

impl TsRpModel {
    pub fn new(config: &TsRpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = config.series_len;
        let d = config.merge_width;
        let sequence = match config.inputs {
            InputMode::MatrixOnly => None,
            _ => Some(build_branch(&config.sequence_branch, &[t, 1], d, false, &mut rng)?),
        };
        let matrix = match config.inputs {
            InputMode::SequenceOnly => None,
            _ => Some(build_branch(&config.matrix_branch, &[t, t, 1], d, true, &mut rng)?),
        };
        let head_in = match (config.merge, config.inputs) {
            (Merge::Concat, InputMode::Dual) => 2 * d,
            _ => d,
        };
        Ok(TsRpModel {
            config: config.clone(),
            sequence,
            matrix,
            head: Dense::new(head_in, 1, &mut rng),
        })
    }

    fn inputs(&self, sample: &SubmeterSample) -> Result<(Tensor, Tensor)> {
        let t = self.config.series_len;
        if sample.series.len() != t || sample.rp.size != t {
            return Err(Error::Shape(format!(
                "model expects length {t}, sample has {} / {}",
                sample.series.len(),
                sample.rp.size
            )));
        }
        Ok((
            Tensor::new(vec![t, 1], sample.series.clone())?,
            Tensor::new(vec![t, t, 1], sample.rp.matrix.clone())?,
        ))
    }

    pub fn forward(&self, sample: &SubmeterSample) -> Result<(f64, TsRpTrace)> {
        let (x, r) = self.inputs(sample)?;
        let seq = self.sequence.as_ref().map(|b| b.forward(&x)).transpose()?;
        let mat = self.matrix.as_ref().map(|b| b.forward(&r)).transpose()?;
        let merged = match (&seq, &mat, self.config.merge) {
            (Some((a, _)), Some((b, _)), Merge::Add) => {
                let mut m = a.clone();
                m.add_assign(b)?;
                m
            }
            (Some((a, _)), Some((b, _)), Merge::Concat) => {
                Tensor::vector(a.data().iter().chain(b.data()).copied().collect())
            }
            (Some((a, _)), None, _) | (None, Some((a, _)), _) => a.clone(),
            (None, None, _) => return Err(Error::InvalidArgument("model has no input branch".into())),
        };
        let logit = self.head.forward(&merged)?.data()[0];
        Ok((
            logit,
            TsRpTrace {
                seq: seq.map(|s| s.1),
                mat: mat.map(|m| m.1),
                merged,
            },
        ))
    }

    pub fn logit(&self, sample: &SubmeterSample) -> Result<f64> {
        Ok(self.forward(sample)?.0)
    }

    /// Probability that the submeter is inaccurate.
    pub fn classify(&self, sample: &SubmeterSample) -> Result<f64> {
        Ok(sigmoid(self.logit(sample)?))
    }

    pub fn backward(&self, trace: &TsRpTrace, dlogit: f64, grads: &mut TsRpModel) -> Result<()> {
        let dm = self
            .head
            .backward(&trace.merged, &Tensor::vector(vec![dlogit]), &mut grads.head)?;
        let d = self.config.merge_width;
        let (ds, dr) = match (self.config.merge, self.config.inputs) {
            (Merge::Concat, InputMode::Dual) => (
                Tensor::vector(dm.data()[..d].to_vec()),
                Tensor::vector(dm.data()[d..].to_vec()),
            ),
            _ => (dm.clone(), dm),
        };
        if let (Some(b), Some(t), Some(g)) = (&self.sequence, &trace.seq, grads.sequence.as_mut()) {
            b.backward(t, &ds, g)?;
        }
        if let (Some(b), Some(t), Some(g)) = (&self.matrix, &trace.mat, grads.matrix.as_mut()) {
            b.backward(t, &dr, g)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            self.config.architecture(),
            self,
            self.config.seed,
            serde_json::to_value(&self.config).unwrap_or_default(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: TsRpConfig = serde_json::from_value(ck.training.clone())?;
        let mut model = TsRpModel::new(&config, config.seed)?;
        ck.restore_into(&config.architecture(), &mut model)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Params for TsRpModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(s) = &self.sequence {
            out.extend(s.params().into_iter().map(|(n, t)| (format!("sequence.{n}"), t)));
        }
        if let Some(m) = &self.matrix {
            out.extend(m.params().into_iter().map(|(n, t)| (format!("matrix.{n}"), t)));
        }
        out.extend(self.head.params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(s) = &mut self.sequence {
            out.extend(s.params_mut().into_iter().map(|(n, t)| (format!("sequence.{n}"), t)));
        }
        if let Some(m) = &mut self.matrix {
            out.extend(m.params_mut().into_iter().map(|(n, t)| (format!("matrix.{n}"), t)));
        }
        out.extend(self.head.params_mut().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }
}

/// Mean binary cross-entropy over `samples`.
pub fn mean_bce(model: &TsRpModel, samples: &[&SubmeterSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += bce_with_logits(model.logit(s)?, s.label.as_f64()).0;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Minibatch Adam on binary cross-entropy.
pub fn train(samples: &[&SubmeterSample], config: &TsRpConfig, seed: u64) -> Result<TsRpModel> {
    let mut model = TsRpModel::new(config, seed)?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(config.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xBA7C));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = model.zeros_like();
            for &k in batch {
                let s = samples[k];
                let (z, trace) = model.forward(s)?;
                let (loss, dz) = bce_with_logits(z, s.label.as_f64());
                epoch_loss += loss;
                model.backward(&trace, dz / batch.len() as f64, &mut grads)?;
            }
            opt.step(&mut model, &grads)?;
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite(format!("classifier loss at epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: bce {:.4}", epoch_loss / samples.len().max(1) as f64);
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<usize>,
    /// Out-of-fold probability for every sample.
    pub scores: Vec<f64>,
    pub fold_roc_auc: Vec<f64>,
    pub fold_pr_auc: Vec<f64>,
    pub models: Vec<TsRpModel>,
}

/// Stratified k-fold cross-validation; folds train in parallel, each from
/// its own seed, so results do not depend on the thread count.
pub fn train_cv(samples: &[SubmeterSample], config: &TsRpConfig) -> Result<CvResult> {
    config.validate()?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label == Label::Inaccurate).collect();
    let folds = stratified_kfold(&labels, config.folds, config.seed)?;
    let per_fold = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let train_set: Vec<&SubmeterSample> = (0..samples.len())
                .filter(|&i| folds[i] != f)
                .map(|i| &samples[i])
                .collect();
            let has = |c: Label| train_set.iter().any(|s| s.label == c);
            if !has(Label::Accurate) || !has(Label::Inaccurate) {
                return Err(Error::ClassCount(format!("fold {f} training set lacks a class")));
            }
            let model = train(&train_set, config, derive_seed(config.seed, f as u64 + 1))?;
            let test: Vec<usize> = (0..samples.len()).filter(|&i| folds[i] == f).collect();
            let scores = test
                .iter()
                .map(|&i| model.classify(&samples[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok((model, test, scores))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scores = vec![f64::NAN; samples.len()];
    let mut fold_roc_auc = Vec::new();
    let mut fold_pr_auc = Vec::new();
    let mut models = Vec::new();
    for (model, test, s) in per_fold {
        let l: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        fold_roc_auc.push(roc_auc(&s, &l)?);
        fold_pr_auc.push(pr_auc(&s, &l)?);
        for (&i, &v) in test.iter().zip(&s) {
            scores[i] = v;
        }
        models.push(model);
    }
    Ok(CvResult {
        folds,
        scores,
        fold_roc_auc,
        fold_pr_auc,
        models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub area_id: String,
    pub meter_id: String,
    pub score: f64,
    pub label_pred: Label,
    pub label_true: Label,
}

/// Scores at or above 0.5 are called inaccurate.
pub fn decide(score: f64) -> Label {
    if score >= 0.5 {
        Label::Inaccurate
    } else {
        Label::Accurate
    }
}

pub fn classification_rows(samples: &[SubmeterSample], scores: &[f64]) -> Vec<ClassificationRow> {
    samples
        .iter()
        .zip(scores)
        .map(|(s, &p)| ClassificationRow {
            area_id: s.area_id.clone(),
            meter_id: s.meter_id.clone(),
            score: p,
            label_pred: decide(p),
            label_true: s.label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rp_examples() {
        let rp = recurrence_plot(&[4.0; 6], RpMode::default()).unwrap();
        assert!(rp.matrix.iter().all(|&v| v == 1.0));
        let g = recurrence_plot(&[0.0, 1.0, 2.0], RpMode::Grayscale).unwrap();
        let d = [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), 1.0 - d[i][j] / 2.0);
            }
        }
        assert!(recurrence_plot(&[1.0], RpMode::Grayscale).is_err());
    }

    #[test]
    fn tail_alignment_and_padding() {
        let long: Vec<f64> = (0..200).map(f64::from).collect();
        let s = standardize_tail(&long, 128).unwrap();
        assert_eq!(s.len(), 128);
        // the kept values are 72..200, so the first standardized value is the minimum
        assert!(s[0] < s[1] && s.iter().all(|&v| v >= s[0]));

        let short: Vec<f64> = (0..100).map(|v| (v as f64).sin()).collect();
        let s = standardize_tail(&short, 128).unwrap();
        assert!(s[..28].iter().all(|&v| v == 0.0));
        assert!(s[28] != 0.0);
        assert!(standardize_tail(&[3.0; 10], 16).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_in_unit_interval_and_deterministic() {
        let cfg = TsRpConfig {
            series_len: 32,
            ..TsRpConfig::default()
        };
        let vals: Vec<f64> = (0..40).map(|v| (v as f64 * 0.3).sin()).collect();
        let s = make_sample("a", "m", &vals, Label::Accurate, 32, cfg.rp_mode).unwrap();
        for mode in [InputMode::Dual, InputMode::SequenceOnly, InputMode::MatrixOnly] {
            let m = TsRpModel::new(&cfg.with_inputs(mode), 1).unwrap();
            let p = m.classify(&s).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p.to_bits(), m.classify(&s).unwrap().to_bits());
        }
        let m = TsRpModel::new(&cfg, 1).unwrap();
        let bad = make_sample("a", "m", &vals, Label::Accurate, 16, cfg.rp_mode).unwrap();
        assert!(m.classify(&bad).is_err());
    }
}
