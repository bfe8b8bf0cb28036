//! The single JSON document that drives a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselinesConfig;
use crate::classifier::{InputMode, TsRpConfig};
use crate::detector::DetectionParams;
use crate::error::{Error, Result};
use crate::predictor::PredictorConfig;
use crate::simgen::CorpusConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Holds `areas/`, `labels/` and `reference/`.
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    /// When set, replaces the seeds of every section.
    pub seed: Option<u64>,
    pub simgen: CorpusConfig,
    /// Accurate areas generated alongside the corpus to train the predictor.
    pub reference_areas: usize,
    pub predictor: PredictorConfig,
    pub detector: DetectionParams,
    pub classifier: TsRpConfig,
    /// Extra input modes cross-validated next to `classifier.inputs`.
    pub ablations: Vec<InputMode>,
    pub baselines: BaselinesConfig,
    /// Days at the end of each malfunctioning area scored in the target-rate table.
    pub target_rate_horizon: usize,
    /// Window sizes for the predictor sweep; empty skips it.
    pub window_sweep: Vec<usize>,
    /// Accurate-meter proportions for the classifier sweep; empty skips it.
    pub proportion_sweep: Vec<f64>,
    /// Classify every area instead of only the flagged ones.
    pub classify_all: bool,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            seed: None,
            simgen: CorpusConfig::default(),
            reference_areas: 8,
            predictor: PredictorConfig::default(),
            detector: DetectionParams::default(),
            classifier: TsRpConfig::default(),
            ablations: vec![InputMode::SequenceOnly, InputMode::MatrixOnly],
            baselines: BaselinesConfig::default(),
            target_rate_horizon: 72,
            window_sweep: Vec::new(),
            proportion_sweep: Vec::new(),
            classify_all: false,
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Pushes the global seed into every section.
    pub fn resolve_seeds(&mut self) {
        if let Some(s) = self.seed {
            self.simgen.seed = s;
            self.predictor.seed = s;
            self.classifier.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("{section}: {e}")));
        wrap("simgen", self.simgen.validate())?;
        wrap("predictor", self.predictor.validate())?;
        wrap("detector", self.detector.validate())?;
        wrap("classifier", self.classifier.validate())?;
        if self.baselines.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("baselines: thresholds must be finite and >= 0".into()));
        }
        if self.window_sweep.contains(&0) {
            return Err(Error::Config("window_sweep: sizes must be positive".into()));
        }
        if self.proportion_sweep.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Config("proportion_sweep: proportions must lie in (0, 1)".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"sead": 1}"#), Err(Error::Config(_))));
        assert!(RunConfig::from_json(r#"{"predictor": {"windw_size": 3}}"#).is_err());
    }

    #[test]
    fn global_seed_overrides_sections() {
        let mut c = RunConfig::from_json(r#"{"seed": 9, "predictor": {"seed": 1}}"#).unwrap();
        c.resolve_seeds();
        assert_eq!((c.simgen.seed, c.predictor.seed, c.classifier.seed), (9, 9, 9));
    }

    #[test]
    fn roundtrip_and_validation() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let bad = RunConfig::from_json(r#"{"simgen": {"fraction_inaccurate": 1.5}}"#).unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
