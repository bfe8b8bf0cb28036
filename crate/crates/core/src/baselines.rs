//! Classical regressors on flattened windows: Bayesian ridge, elastic net
//! and gradient-boosted trees, plus the target-rate comparison table.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{Standardizer, WindowSample};

/// One window flattened day by day into `26·W` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Flatten windows with the same feature scaling the LSTM uses; targets stay in kWh.
pub fn flatten_windows(samples: &[WindowSample], standardizer: &Standardizer) -> Vec<FlatSample> {
    samples
        .iter()
        .map(|s| FlatSample {
            x: s.inputs.iter().flat_map(|r| standardizer.apply(r)).collect(),
            y: s.target,
        })
        .collect()
}

fn check_samples(samples: &[FlatSample], min: usize) -> Result<usize> {
    if samples.len() < min {
        return Err(Error::SeriesTooShort {
            needed: min,
            got: samples.len(),
        });
    }
    let p = samples[0].x.len();
    if samples.iter().any(|s| s.x.len() != p) {
        return Err(Error::Shape("samples have differing feature counts".into()));
    }
    if samples.iter().any(|s| !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("baseline training data".into()));
    }
    Ok(p)
}

/// Centered design matrix, centered targets and the centering offsets.
fn centered(samples: &[FlatSample], p: usize) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let n = samples.len();
    let mut x_mean = vec![0.0; p];
    for s in samples {
        for (m, v) in x_mean.iter_mut().zip(&s.x) {
            *m += v / n as f64;
        }
    }
    let y_mean = samples.iter().map(|s| s.y).sum::<f64>() / n as f64;
    let x = DMatrix::from_fn(n, p, |i, j| samples[i].x[j] - x_mean[j]);
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.y - y_mean));
    (x, y, x_mean, y_mean)
}

/// `y ≈ intercept + coef · x`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    fn from_centered(coef: Vec<f64>, x_mean: &[f64], y_mean: f64) -> Self {
        let intercept = y_mean - coef.iter().zip(x_mean).map(|(c, m)| c * m).sum::<f64>();
        LinearModel { coef, intercept }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesRidgeConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Gamma hyperprior shape/rate on the noise precision.
    pub alpha_1: f64,
    pub alpha_2: f64,
    /// Gamma hyperprior shape/rate on the weight precision.
    pub lambda_1: f64,
    pub lambda_2: f64,
    /// Pins the weight precision instead of estimating it.
    pub fixed_lambda: Option<f64>,
}

impl Default for BayesRidgeConfig {
    fn default() -> Self {
        BayesRidgeConfig {
            max_iter: 300,
            tol: 1e-6,
            alpha_1: 1e-6,
            alpha_2: 1e-6,
            lambda_1: 1e-6,
            lambda_2: 1e-6,
            fixed_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesRidgeFit {
    pub model: LinearModel,
    /// Noise precision.
    pub alpha: f64,
    /// Weight precision.
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Evidence maximization over the noise and weight precisions, with the
/// ridge solution recomputed from one SVD at each step.
pub fn fit_bayesian_ridge(samples: &[FlatSample], config: &BayesRidgeConfig) -> Result<BayesRidgeFit> {
    let p = check_samples(samples, 2)?;
    let n = samples.len();
    let (x, y, x_mean, y_mean) = centered(samples, p);
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let s = &svd.singular_values;
    let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
    let uty = u.transpose() * &y;

    let var_y = y.norm_squared() / n as f64;
    let mut alpha = 1.0 / (var_y + f64::EPSILON);
    let mut lambda = config.fixed_lambda.unwrap_or(1.0);
    let solve = |alpha: f64, lambda: f64| -> DVector<f64> {
        let w = DVector::from_iterator(
            s.len(),
            (0..s.len()).map(|k| if s[k] > 0.0 { s[k] / (s2[k] + lambda / alpha) * uty[k] } else { 0.0 }),
        );
        vt.transpose() * w
    };
    let mut coef = solve(alpha, lambda);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iter {
        iterations = it + 1;
        let rss = (&y - &x * &coef).norm_squared();
        let gamma: f64 = s2.iter().map(|&e| alpha * e / (lambda + alpha * e)).sum();
        let new_lambda = config
            .fixed_lambda
            .unwrap_or((gamma + 2.0 * config.lambda_1) / (coef.norm_squared() + 2.0 * config.lambda_2));
        let new_alpha = (n as f64 - gamma + 2.0 * config.alpha_1) / (rss + 2.0 * config.alpha_2);
        let change = ((new_alpha - alpha) / alpha).abs().max(((new_lambda - lambda) / lambda).abs());
        alpha = new_alpha;
        lambda = new_lambda;
        coef = solve(alpha, lambda);
        if !(alpha.is_finite() && lambda.is_finite()) {
            return Err(Error::NonFinite("bayesian ridge precisions".into()));
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(BayesRidgeFit {
        model: LinearModel::from_centered(coef.iter().copied().collect(), &x_mean, y_mean),
        alpha,
        lambda,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticNetConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetFit {
    pub model: LinearModel,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `½‖y − Xβ‖² + λ1‖β‖₁ + λ2‖β‖²` with an
/// unpenalized intercept.
pub fn fit_elastic_net(samples: &[FlatSample], config: &ElasticNetConfig) -> Result<ElasticNetFit> {
    if !(config.lambda1 >= 0.0 && config.lambda2 >= 0.0) {
        return Err(Error::InvalidArgument("elastic net penalties must be >= 0".into()));
    }
    let p = check_samples(samples, 1)?;
    let (x, y, x_mean, y_mean) = centered(samples, p);
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut beta = vec![0.0; p];
    let mut r = y.clone();
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..config.max_iter {
        sweeps = sweep + 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&r) + norms[j] * beta[j];
            let new = soft_threshold(rho, config.lambda1) / (norms[j] + 2.0 * config.lambda2);
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetFit {
        model: LinearModel::from_centered(beta, &x_mean, y_mean),
        sweeps,
        converged,
    })
}

/// Largest violation of the elastic-net optimality conditions.
pub fn elastic_net_kkt_residual(samples: &[FlatSample], model: &LinearModel, config: &ElasticNetConfig) -> f64 {
    let p = model.coef.len();
    let resid: Vec<f64> = samples.iter().map(|s| s.y - model.predict(&s.x)).collect();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let g: f64 = samples.iter().zip(&resid).map(|(s, r)| s.x[j] * r).sum::<f64>() - 2.0 * config.lambda2 * model.coef[j];
        let v = if model.coef[j] != 0.0 {
            (g - config.lambda1 * model.coef[j].signum()).abs()
        } else {
            (g.abs() - config.lambda1).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbrConfig {
    pub n_trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbrConfig {
    fn default() -> Self {
        GbrConfig {
            n_trees: 100,
            depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
    /// Training MSE after each stage, starting with the constant model.
    pub stage_mse: Vec<f64>,
}

impl GbrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

struct TreeBuilder<'a> {
    samples: &'a [FlatSample],
    /// Sample indices ordered by each feature's value.
    sorted: Vec<Vec<usize>>,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, members: &[usize], target: &[f64], depth: usize) -> TreeNode {
        let n = members.len() as f64;
        let total: f64 = members.iter().map(|&i| target[i]).sum();
        let leaf = TreeNode::Leaf { value: total / n };
        if depth == 0 || members.len() < 2 * self.min_leaf {
            return leaf;
        }
        let mut in_node = vec![false; self.samples.len()];
        for &i in members {
            in_node[i] = true;
        }
        // Maximizing S_L²/n_L + S_R²/n_R minimizes the children's SSE.
        let base_score = total * total / n;
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut sum_l, mut n_l) = (0.0, 0usize);
            let mut prev: Option<usize> = None;
            for &i in order.iter().filter(|&&i| in_node[i]) {
                if let Some(pi) = prev {
                    let (a, b) = (self.samples[pi].x[f], self.samples[i].x[f]);
                    let n_r = members.len() - n_l;
                    if a < b && n_l >= self.min_leaf && n_r >= self.min_leaf {
                        let sum_r = total - sum_l;
                        let score = sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64;
                        if score > base_score + 1e-12 * base_score.abs().max(1e-300)
                            && best.is_none_or(|(s, _, _)| score > s)
                        {
                            best = Some((score, f, 0.5 * (a + b)));
                        }
                    }
                }
                sum_l += target[i];
                n_l += 1;
                prev = Some(i);
            }
        }
        match best {
            None => leaf,
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| self.samples[i].x[feature] <= threshold);
                TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(self.build(&l, target, depth - 1)),
                    right: Box::new(self.build(&r, target, depth - 1)),
                }
            }
        }
    }
}

/// Stagewise least-squares boosting of depth-limited regression trees.
pub fn fit_gbr(samples: &[FlatSample], config: &GbrConfig) -> Result<GbrModel> {
    let p = check_samples(samples, 2)?;
    if config.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument("min_samples_leaf must be positive".into()));
    }
    let n = samples.len();
    let sorted = (0..p)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| samples[a].x[f].total_cmp(&samples[b].x[f]));
            idx
        })
        .collect();
    let builder = TreeBuilder {
        samples,
        sorted,
        min_leaf: config.min_samples_leaf,
    };
    let init = samples.iter().map(|s| s.y).sum::<f64>() / n as f64;
    let mut fitted = vec![init; n];
    let mse = |f: &[f64]| samples.iter().zip(f).map(|(s, v)| (s.y - v) * (s.y - v)).sum::<f64>() / n as f64;
    let mut stage_mse = vec![mse(&fitted)];
    let mut trees = Vec::with_capacity(config.n_trees);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..config.n_trees {
        let resid: Vec<f64> = samples.iter().zip(&fitted).map(|(s, f)| s.y - f).collect();
        let tree = builder.build(&all, &resid, config.depth);
        for (f, s) in fitted.iter_mut().zip(samples) {
            *f += config.learning_rate * tree.predict(&s.x);
        }
        stage_mse.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(GbrModel {
        init,
        learning_rate: config.learning_rate,
        trees,
        stage_mse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    BayesianRidge(BayesRidgeFit),
    ElasticNet(ElasticNetFit),
    Gbr(GbrModel),
}

impl BaselineModel {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineModel::BayesianRidge(_) => "bayesian_ridge",
            BaselineModel::ElasticNet(_) => "elastic_net",
            BaselineModel::Gbr(_) => "gbr",
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            BaselineModel::BayesianRidge(m) => m.model.predict(x),
            BaselineModel::ElasticNet(m) => m.model.predict(x),
            BaselineModel::Gbr(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    pub bayesian_ridge: BayesRidgeConfig,
    pub elastic_net: ElasticNetConfig,
    pub gbr: GbrConfig,
    /// Thresholds (kWh) of the target-rate table.
    pub thresholds: Vec<f64>,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        BaselinesConfig {
            bayesian_ridge: BayesRidgeConfig::default(),
            elastic_net: ElasticNetConfig::default(),
            gbr: GbrConfig::default(),
            thresholds: vec![0.5, 1.0, 4.0, 6.0, 8.0],
        }
    }
}

pub fn fit_all(samples: &[FlatSample], config: &BaselinesConfig) -> Result<Vec<BaselineModel>> {
    let (br, (en, gbr)) = rayon::join(
        || fit_bayesian_ridge(samples, &config.bayesian_ridge),
        || {
            rayon::join(
                || fit_elastic_net(samples, &config.elastic_net),
                || fit_gbr(samples, &config.gbr),
            )
        },
    );
    Ok(vec![
        BaselineModel::BayesianRidge(br?),
        BaselineModel::ElasticNet(en?),
        BaselineModel::Gbr(gbr?),
    ])
}

/// Row of the malfunction-horizon target-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRateRow {
    pub threshold: f64,
    pub model: String,
    pub days_outside: usize,
    pub target_rate_pct: f64,
}

/// For each model and threshold, count the days whose prediction falls
/// outside `observed ± t`.
pub fn compare_on_detection(predictions: &[(String, Vec<f64>)], observed: &[f64], thresholds: &[f64]) -> Result<Vec<TargetRateRow>> {
    let mut rows = Vec::new();
    for &t in thresholds {
        for (name, pred) in predictions {
            if pred.len() != observed.len() {
                return Err(Error::Misaligned(format!(
                    "{name} has {} predictions for {} observed days",
                    pred.len(),
                    observed.len()
                )));
            }
            let outside = pred.iter().zip(observed).filter(|(p, o)| (*p - *o).abs() > t).count();
            rows.push(TargetRateRow {
                threshold: t,
                model: name.clone(),
                days_outside: outside,
                target_rate_pct: if observed.is_empty() {
                    0.0
                } else {
                    100.0 * outside as f64 / observed.len() as f64
                },
            });
        }
    }
    Ok(rows)
}
