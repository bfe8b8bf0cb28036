//! Next-day residual-error prediction with a two-layer LSTM.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{encode_date, residual_error, ResidualSeries, UsageDataset, ONE_HOT_DIM};
use crate::error::{Error, Result};
use crate::nn::loss::mse;
use crate::nn::lstm::LstmTrace;
use crate::nn::{Checkpoint, Dense, LstmParams, Optimizer, OptimizerConfig, Params, Tensor};

/// error, master, com_date, 22 one-hot values, submeter count.
pub const FEATURE_DIM: usize = 3 + ONE_HOT_DIM + 1;
const COL_ERROR: usize = 0;
const COL_MASTER: usize = 1;
const COL_COM_DATE: usize = 2;
const COL_NUMBER: usize = FEATURE_DIM - 1;
const CONTINUOUS: [usize; 4] = [COL_ERROR, COL_MASTER, COL_COM_DATE, COL_NUMBER];

pub type FeatureVector = [f64; FEATURE_DIM];

/// Unscaled daily features of one area, in date order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub area_id: String,
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Observed residual error per date.
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[COL_ERROR]).collect()
    }

    /// Observed residual error restricted to `dates`, which must all be present.
    pub fn observed_on(&self, dates: &[NaiveDate]) -> Result<ResidualSeries> {
        let values = dates
            .iter()
            .map(|d| {
                self.dates
                    .binary_search(d)
                    .map(|i| self.rows[i][COL_ERROR])
                    .map_err(|_| Error::Misaligned(format!("no observation on {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ResidualSeries::new(dates.to_vec(), values)
    }
}

/// One vector per master date. The base date is the first date and year
/// index 0 is that date's calendar year.
pub fn build_features(dataset: &UsageDataset) -> Result<FeatureTable> {
    let dates = dataset.dates();
    let base = *dates.first().ok_or(Error::EmptyDataset)?;
    let n = dataset.n_submeters() as f64;
    let rows = dates
        .iter()
        .map(|&d| {
            let cal = encode_date(d, base, base.year())?;
            let mut row = [0.0; FEATURE_DIM];
            row[COL_ERROR] = residual_error(dataset, d)?;
            row[COL_MASTER] = dataset.master[&d];
            row[COL_COM_DATE] = cal.com_date as f64;
            row[3..3 + ONE_HOT_DIM].copy_from_slice(&cal.one_hot());
            row[COL_NUMBER] = n;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureTable {
        area_id: dataset.area_id.clone(),
        dates,
        rows,
    })
}

/// Z-scores the continuous columns; one-hot columns pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        let mut sq = [0.0; FEATURE_DIM];
        for r in rows {
            count += 1;
            for c in CONTINUOUS {
                sum[c] += r[c];
                sq[c] += r[c] * r[c];
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut mean = vec![0.0; FEATURE_DIM];
        let mut std = vec![1.0; FEATURE_DIM];
        for c in CONTINUOUS {
            let m = sum[c] / count as f64;
            let var = (sq[c] / count as f64 - m * m).max(0.0);
            mean[c] = m;
            // Constant columns (e.g. a fixed submeter count) map to zero.
            std[c] = if var.sqrt() > 1e-12 * m.abs().max(1.0) { var.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, row: &FeatureVector) -> FeatureVector {
        let mut out = *row;
        for c in CONTINUOUS {
            out[c] = (row[c] - self.mean[c]) / self.std[c];
        }
        out
    }

    pub fn error_to_std(&self, e: f64) -> f64 {
        (e - self.mean[COL_ERROR]) / self.std[COL_ERROR]
    }

    pub fn error_from_std(&self, z: f64) -> f64 {
        z * self.std[COL_ERROR] + self.mean[COL_ERROR]
    }

    /// Training-set standard deviation of E, the unit of standardized DPE.
    pub fn error_scale(&self) -> f64 {
        self.std[COL_ERROR]
    }
}

/// `W` consecutive days of features and the residual error of the next day.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub inputs: Vec<FeatureVector>,
    /// kWh
    pub target: f64,
    pub target_date: NaiveDate,
}

/// True when `dates[k..=k + w]` are consecutive calendar days.
fn consecutive(dates: &[NaiveDate], k: usize, w: usize) -> bool {
    (dates[k + w] - dates[k]).num_days() == w as i64
}

/// Stride-1 windows: `len − W` samples on a gap-free table. Windows that
/// would span a removed day are skipped.
pub fn make_windows(table: &FeatureTable, window: usize) -> Result<Vec<WindowSample>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window size must be at least 1".into()));
    }
    if table.len() < window + 1 {
        return Err(Error::SeriesTooShort {
            needed: window + 1,
            got: table.len(),
        });
    }
    Ok((0..table.len() - window)
        .filter(|&k| consecutive(&table.dates, k, window))
        .map(|k| WindowSample {
            inputs: table.rows[k..k + window].to_vec(),
            target: table.rows[k + window][COL_ERROR],
            target_date: table.dates[k + window],
        })
        .collect())
}

/// Chronological split: the last `n_test` samples form the test set.
pub fn split_train_test<T: Clone>(samples: &[T], n_test: usize) -> Result<(Vec<T>, Vec<T>)> {
    if n_test >= samples.len() && n_test > 0 {
        return Err(Error::InvalidArgument(format!(
            "n_test {n_test} must be smaller than the {} samples",
            samples.len()
        )));
    }
    let cut = samples.len() - n_test;
    Ok((samples[..cut].to_vec(), samples[cut..].to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub window_size: usize,
    pub hidden_dims: [usize; 2],
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fraction of the training samples (taken from the tail) used for early stopping.
    pub validation_fraction: f64,
    pub patience: usize,
    /// Number of trailing samples held out as the test set.
    pub n_test: usize,
    /// Cap on training samples drawn per epoch; `None` uses all of them.
    pub samples_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            window_size: 40,
            hidden_dims: [30, 30],
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            validation_fraction: 0.1,
            patience: 20,
            n_test: 27,
            samples_per_epoch: None,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 1 {
            return Err(Error::InvalidArgument("window_size must be at least 1".into()));
        }
        if self.hidden_dims.contains(&0) || self.batch_size == 0 {
            return Err(Error::InvalidArgument("hidden_dims and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// LSTM-1 → LSTM-2 → dense(1) on the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmRegressor {
    pub lstm1: LstmParams,
    pub lstm2: LstmParams,
    pub head: Dense,
}

pub struct RegressorTrace {
    t1: LstmTrace,
    t2: LstmTrace,
    h1: Tensor,
    h_last: Tensor,
    steps: usize,
}

impl LstmRegressor {
    pub fn new(input: usize, hidden: [usize; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LstmRegressor {
            lstm1: LstmParams::new(input, hidden[0], &mut rng),
            lstm2: LstmParams::new(hidden[0], hidden[1], &mut rng),
            head: Dense::new(hidden[1], 1, &mut rng),
        }
    }

    pub fn architecture(&self, window: usize) -> serde_json::Value {
        json!({
            "kind": "lstm_regressor",
            "input_dim": self.lstm1.input_dim(),
            "hidden_dims": [self.lstm1.hidden_dim(), self.lstm2.hidden_dim()],
            "window_size": window,
        })
    }

    /// `x` is `[steps, input]`.
    pub fn forward(&self, x: &Tensor) -> Result<(f64, RegressorTrace)> {
        let (h1, t1) = self.lstm1.forward(x)?;
        let (h2, t2) = self.lstm2.forward(&h1)?;
        let steps = x.shape()[0];
        if steps == 0 {
            return Err(Error::SeriesTooShort { needed: 1, got: 0 });
        }
        let hd = self.lstm2.hidden_dim();
        let h_last = Tensor::vector(h2.data()[(steps - 1) * hd..].to_vec());
        let y = self.head.forward(&h_last)?.data()[0];
        Ok((
            y,
            RegressorTrace {
                t1,
                t2,
                h1,
                h_last,
                steps,
            },
        ))
    }

    pub fn predict(&self, x: &Tensor) -> Result<f64> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates gradients of a loss whose derivative with respect to the
    /// output is `dy`.
    pub fn backward(&self, trace: &RegressorTrace, dy: f64, grads: &mut LstmRegressor) -> Result<()> {
        let dh_last = self
            .head
            .backward(&trace.h_last, &Tensor::vector(vec![dy]), &mut grads.head)?;
        let hd = self.lstm2.hidden_dim();
        let mut dh2 = vec![0.0; trace.steps * hd];
        dh2[(trace.steps - 1) * hd..].copy_from_slice(dh_last.data());
        let dh2 = Tensor::new(vec![trace.steps, hd], dh2)?;
        let dh1 = self.lstm2.backward(&trace.t2, &dh2, &mut grads.lstm2)?;
        dh1.expect_shape(trace.h1.shape())?;
        self.lstm1.backward(&trace.t1, &dh1, &mut grads.lstm1)?;
        Ok(())
    }
}

impl Params for LstmRegressor {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in [("lstm1", &self.lstm1), ("lstm2", &self.lstm2)] {
            out.extend(p.params().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.head.params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in [("lstm1", &mut self.lstm1), ("lstm2", &mut self.lstm2)] {
            out.extend(p.params_mut().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.head.params_mut().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: usize,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPredictor {
    pub model: LstmRegressor,
    pub standardizer: Standardizer,
    pub config: PredictorConfig,
    pub history: TrainingHistory,
}

fn to_input(std: &Standardizer, rows: &[FeatureVector]) -> Tensor {
    let data = rows.iter().flat_map(|r| std.apply(r)).collect();
    Tensor::new(vec![rows.len(), FEATURE_DIM], data).expect("feature rows have fixed width")
}

struct Prepared {
    x: Tensor,
    y: f64,
}

fn prepare(std: &Standardizer, samples: &[WindowSample]) -> Vec<Prepared> {
    samples
        .iter()
        .map(|s| Prepared {
            x: to_input(std, &s.inputs),
            y: std.error_to_std(s.target),
        })
        .collect()
}

fn mean_mse(model: &LstmRegressor, data: &[Prepared]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for p in data {
        let y = model.predict(&p.x)?;
        total += (y - p.y) * (y - p.y);
    }
    Ok(total / data.len() as f64)
}

/// Trains on `samples` in chronological order. Feature scaling is fitted on
/// the training rows only; the trailing `validation_fraction` of samples
/// drives early stopping and the best-validation parameters are returned.
pub fn train(samples: &[WindowSample], config: &PredictorConfig) -> Result<TrainedPredictor> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    if samples.iter().any(|s| s.inputs.len() != config.window_size) {
        return Err(Error::Shape(format!(
            "every sample must span window_size = {} days",
            config.window_size
        )));
    }
    let n_val = if samples.len() > 1 {
        ((samples.len() as f64 * config.validation_fraction).round() as usize).min(samples.len() - 1)
    } else {
        0
    };
    let (fit_part, val_part) = samples.split_at(samples.len() - n_val);
    let standardizer = Standardizer::fit(fit_part.iter().flat_map(|s| s.inputs.iter()))?;
    let train_data = prepare(&standardizer, fit_part);
    let val_data = prepare(&standardizer, val_part);

    let mut model = LstmRegressor::new(FEATURE_DIM, config.hidden_dims, config.seed);
    let mut opt = Optimizer::new(OptimizerConfig::adam(config.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7EA1);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = TrainingHistory::default();
    let mut best = (f64::INFINITY, model.clone(), 0usize);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let take = config.samples_per_epoch.unwrap_or(order.len()).min(order.len());
        let mut epoch_loss = 0.0;
        for batch in order[..take].chunks(config.batch_size) {
            let mut grads = model.zeros_like();
            for &k in batch {
                let p = &train_data[k];
                let (y, trace) = model.forward(&p.x)?;
                let (loss, g) = mse(&[y], &[p.y]);
                epoch_loss += loss;
                model.backward(&trace, g[0] / batch.len() as f64, &mut grads)?;
            }
            opt.step(&mut model, &grads)?;
        }
        let train_mse = epoch_loss / take.max(1) as f64;
        if !train_mse.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let val_mse = if val_data.is_empty() { train_mse } else { mean_mse(&model, &val_data)? };
        log::debug!("epoch {epoch}: train {train_mse:.5} val {val_mse:.5}");
        history.train_mse.push(train_mse);
        history.val_mse.push(val_mse);
        if val_mse < best.0 {
            best = (val_mse, model.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    let (best_val, model, best_epoch) = best;
    history.best_epoch = best_epoch;
    history.final_val_mse = best_val;
    history.final_train_mse = mean_mse(&model, &train_data)?;
    Ok(TrainedPredictor {
        model,
        standardizer,
        config: config.clone(),
        history,
    })
}

impl TrainedPredictor {
    /// Prediction for one window, in kWh.
    pub fn predict_window(&self, rows: &[FeatureVector]) -> Result<f64> {
        let z = self.model.predict(&to_input(&self.standardizer, rows))?;
        Ok(self.standardizer.error_from_std(z))
    }

    /// One-step-ahead predictions for every day preceded by `W` consecutive
    /// days; on a gap-free table the dates are the feature dates shifted by `W`.
    pub fn predict_series(&self, table: &FeatureTable) -> Result<ResidualSeries> {
        let windows = make_windows(table, self.config.window_size)?;
        if windows.is_empty() {
            return Err(Error::SeriesTooShort {
                needed: self.config.window_size + 1,
                got: 0,
            });
        }
        let values = windows
            .iter()
            .map(|s| self.predict_window(&s.inputs))
            .collect::<Result<Vec<_>>>()?;
        ResidualSeries::new(windows.iter().map(|s| s.target_date).collect(), values)
    }

    /// Mean squared error over `samples`, in standardized units.
    pub fn mse_std(&self, samples: &[WindowSample]) -> Result<f64> {
        mean_mse(&self.model, &prepare(&self.standardizer, samples))
    }

    pub fn architecture(&self) -> serde_json::Value {
        self.model.architecture(self.config.window_size)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::capture(
            self.architecture(),
            &self.model,
            self.config.seed,
            serde_json::to_value(&self.config)?,
        );
        ck.extra = json!({
            "standardizer": self.standardizer,
            "history": self.history,
        });
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: PredictorConfig = serde_json::from_value(ck.training.clone())?;
        let input = ck.architecture["input_dim"].as_u64().unwrap_or(FEATURE_DIM as u64) as usize;
        let mut model = LstmRegressor::new(input, config.hidden_dims, config.seed);
        ck.restore_into(&model.architecture(config.window_size), &mut model)?;
        let standardizer = serde_json::from_value(ck.extra["standardizer"].clone())?;
        let history = serde_json::from_value(ck.extra["history"].clone())?;
        Ok(TrainedPredictor {
            model,
            standardizer,
            config,
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_size: usize,
    pub test_mse: f64,
    pub val_mse: f64,
}

/// Trains one model per window size on each table's chronological training
/// part and reports test MSE in standardized units.
pub fn window_sweep(tables: &[FeatureTable], windows: &[usize], config: &PredictorConfig) -> Result<Vec<SweepRow>> {
    windows
        .iter()
        .map(|&w| {
            let cfg = PredictorConfig {
                window_size: w,
                ..config.clone()
            };
            let mut train_set = Vec::new();
            let mut test_set = Vec::new();
            for t in tables {
                let s = make_windows(t, w)?;
                let (a, b) = split_train_test(&s, cfg.n_test.min(s.len().saturating_sub(1)))?;
                train_set.extend(a);
                test_set.extend(b);
            }
            let model = train(&train_set, &cfg)?;
            Ok(SweepRow {
                window_size: w,
                test_mse: model.mse_std(&test_set)?,
                val_mse: model.history.final_val_mse,
            })
        })
        .collect()
}
