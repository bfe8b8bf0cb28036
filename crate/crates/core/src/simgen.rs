//! Synthetic residential areas and controlled submeter malfunction injection.
//!
//! Each submeter's daily usage is
//! `(base + amplitude * cos(2π (doy − peak) / 365.25)) * weekday[dow] + noise`,
//! clamped at zero. The master meter records the submeter sum plus a
//! strictly positive overhead (line losses and unmetered loads), part of
//! which scales with load.
//!
//! An inaccurate submeter drifts linearly from its start day `s`:
//! `new(i) = (1 + α (i − s)) · usage(i) + N` for `i ≥ s`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DailySeries, UsageDataset};
use crate::error::{Error, Result};

/// Derive an independent stream seed from a parent seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn str_stream(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AreaConfig {
    pub n_submeters: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    /// kWh/day per submeter
    pub base_usage_mean: f64,
    /// kWh/day, peak deviation of the seasonal cycle
    pub seasonal_amplitude: f64,
    /// Day of year with peak usage.
    pub seasonal_peak_day: f64,
    /// Multipliers, Monday first.
    pub weekday_effect: [f64; 7],
    /// kWh/day, per-submeter Gaussian reading noise
    pub noise_sigma: f64,
    /// Log-scale sd of each household's usage multiplier.
    pub usage_scale_spread: f64,
    /// Household seasonal amplitude is drawn from `amplitude · [1 − s, 1 + s]`.
    pub amplitude_spread: f64,
    /// Household noise sigma is drawn from `noise_sigma · [1 − s, 1 + s]`.
    pub noise_spread: f64,
    /// Days, sd of each household's seasonal peak shift.
    pub peak_day_spread: f64,
    /// kWh/day, mean master overhead over the submeter sum
    pub master_overhead_mean: f64,
    /// Fraction of the overhead proportional to area load, in [0, 1).
    pub overhead_load_share: f64,
    /// Log-scale sigma of the multiplicative overhead noise.
    pub overhead_noise: f64,
    pub seed: u64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        AreaConfig {
            n_submeters: 10,
            n_days: 770,
            start_date: NaiveDate::from_ymd_opt(2014, 8, 1).unwrap(),
            base_usage_mean: 10.0,
            seasonal_amplitude: 5.0,
            seasonal_peak_day: 15.0,
            weekday_effect: [1.0, 0.97, 0.97, 1.0, 1.05, 1.15, 1.2],
            noise_sigma: 1.0,
            usage_scale_spread: 0.4,
            amplitude_spread: 0.9,
            noise_spread: 0.9,
            peak_day_spread: 0.0,
            master_overhead_mean: 8.0,
            overhead_load_share: 0.8,
            overhead_noise: 0.02,
            seed: 0,
        }
    }
}

impl AreaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_submeters < 1 {
            return Err(Error::InvalidArgument("n_submeters must be at least 1".into()));
        }
        if self.n_days < 1 {
            return Err(Error::InvalidArgument("n_days must be at least 1".into()));
        }
        if !(self.master_overhead_mean > 0.0) {
            return Err(Error::InvalidArgument("master_overhead_mean must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overhead_load_share) {
            return Err(Error::InvalidArgument("overhead_load_share must lie in [0, 1)".into()));
        }
        let nonneg = [
            ("base_usage_mean", self.base_usage_mean),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("usage_scale_spread", self.usage_scale_spread),
            ("peak_day_spread", self.peak_day_spread),
            ("overhead_noise", self.overhead_noise),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("amplitude_spread", self.amplitude_spread), ("noise_spread", self.noise_spread)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.weekday_effect.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weekday_effect must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_days)
            .map(|i| self.start_date + Duration::days(i as i64))
            .collect()
    }

    /// Noise-free expected usage of a nominal submeter on `date`.
    pub fn expected_usage(&self, date: NaiveDate) -> f64 {
        self.household_usage(date, &Household::nominal(self))
    }

    fn household_usage(&self, date: NaiveDate, h: &Household) -> f64 {
        let doy = date.ordinal0() as f64;
        let season = (2.0 * std::f64::consts::PI * (doy - self.seasonal_peak_day - h.peak_shift) / 365.25).cos();
        let weekday = self.weekday_effect[date.weekday().num_days_from_monday() as usize];
        h.scale * (self.base_usage_mean + h.amplitude * season) * weekday
    }
}

/// Per-submeter draw of the household parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Household {
    scale: f64,
    amplitude: f64,
    noise: f64,
    peak_shift: f64,
}

impl Household {
    fn nominal(c: &AreaConfig) -> Self {
        Household {
            scale: 1.0,
            amplitude: c.seasonal_amplitude,
            noise: c.noise_sigma,
            peak_shift: 0.0,
        }
    }

    fn draw<R: Rng>(c: &AreaConfig, rng: &mut R) -> Self {
        let z: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let u: [f64; 2] = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        Household {
            scale: (c.usage_scale_spread * z[0]).exp(),
            amplitude: c.seasonal_amplitude * (1.0 + c.amplitude_spread * u[0]),
            noise: c.noise_sigma * (1.0 + c.noise_spread * u[1]),
            peak_shift: c.peak_day_spread * z[1],
        }
    }
}

pub fn meter_id(index: usize) -> String {
    format!("m{index:03}")
}

/// Generate one accurate residential area. Deterministic in `config.seed`.
pub fn generate_area(area_id: &str, config: &AreaConfig) -> Result<UsageDataset> {
    config.validate()?;
    let dates = config.dates();

    let mut submeters = BTreeMap::new();
    for m in 0..config.n_submeters {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, m as u64 + 1));
        let house = Household::draw(config, &mut rng);
        let noise = Normal::new(0.0, house.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let series: DailySeries = dates
            .iter()
            .map(|&d| {
                let eps = if house.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (d, (config.household_usage(d, &house) + eps).max(0.0))
            })
            .collect();
        submeters.insert(meter_id(m), series);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let nominal_load: f64 = config.n_submeters as f64 * config.base_usage_mean;
    let sigma = config.overhead_noise;
    let master = dates
        .iter()
        .map(|&d| {
            let ssub: f64 = submeters.values().map(|s: &DailySeries| s[&d]).sum();
            let load_ratio = if nominal_load > 0.0 { ssub / nominal_load } else { 1.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            let jitter = (sigma * z - 0.5 * sigma * sigma).exp();
            let overhead = config.master_overhead_mean
                * ((1.0 - config.overhead_load_share) + config.overhead_load_share * load_ratio)
                * jitter;
            (d, ssub + overhead)
        })
        .collect();

    Ok(UsageDataset {
        area_id: area_id.to_string(),
        master,
        submeters,
    })
}

/// Which submeters drift, from which day, and how fast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Target meter id → start day index `s`.
    pub targets: BTreeMap<String, usize>,
    pub alpha: f64,
    /// kWh, std of the additive noise term
    pub noise_sigma_n: f64,
    pub seed: u64,
}

impl InjectionSpec {
    pub fn empty(alpha: f64, noise_sigma_n: f64, seed: u64) -> Self {
        InjectionSpec {
            targets: BTreeMap::new(),
            alpha,
            noise_sigma_n,
            seed,
        }
    }

    /// Earliest start day over all targets.
    pub fn earliest_start(&self) -> Option<usize> {
        self.targets.values().copied().min()
    }
}

/// Apply the linear drift to one target meter's series.
pub fn inject_malfunction(
    series: &DailySeries,
    spec: &InjectionSpec,
    meter_id: &str,
) -> Result<DailySeries> {
    let &s = spec.targets.get(meter_id).ok_or_else(|| {
        Error::InvalidArgument(format!("meter `{meter_id}` is not an injection target"))
    })?;
    if s >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "start day {s} is beyond the series length {}",
            series.len()
        )));
    }
    if !(spec.alpha >= 0.0 && spec.alpha.is_finite()) {
        return Err(Error::InvalidArgument("alpha must be finite and >= 0".into()));
    }
    let noise = Normal::new(0.0, spec.noise_sigma_n)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, str_stream(meter_id)));
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, (&d, &u))| {
            if i < s {
                return (d, u);
            }
            let n = if spec.noise_sigma_n > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let drifted = (1.0 + spec.alpha * (i - s) as f64) * u + n;
            (d, drifted.max(0.0))
        })
        .collect())
}

/// Apply `spec` to every target in `dataset`. The master series is untouched.
pub fn inject_area(dataset: &UsageDataset, spec: &InjectionSpec) -> Result<UsageDataset> {
    let mut out = dataset.clone();
    for meter in spec.targets.keys() {
        let series = dataset.submeters.get(meter).ok_or_else(|| {
            Error::InvalidArgument(format!("target `{meter}` is not a submeter of the area"))
        })?;
        out.submeters
            .insert(meter.clone(), inject_malfunction(series, spec, meter)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Accurate,
    Inaccurate,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Accurate => 0.0,
            Label::Inaccurate => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledArea {
    pub dataset: UsageDataset,
    pub clean_dataset: UsageDataset,
    pub spec: InjectionSpec,
    pub labels: BTreeMap<String, Label>,
}

impl LabeledArea {
    pub fn is_malfunctioning(&self) -> bool {
        !self.spec.targets.is_empty()
    }

    /// Date of the earliest injection, if any.
    pub fn injection_start(&self) -> Option<NaiveDate> {
        let s = self.spec.earliest_start()?;
        self.dataset.dates().get(s).copied()
    }

    pub fn labels_file(&self) -> LabelsFile {
        LabelsFile {
            area_id: self.dataset.area_id.clone(),
            labels: self.labels.clone(),
            spec: SpecFile {
                targets: self.spec.targets.keys().cloned().collect(),
                start_day: self.spec.targets.clone(),
                alpha: self.spec.alpha,
                noise_sigma_n: self.spec.noise_sigma_n,
                seed: self.spec.seed,
            },
        }
    }
}

/// On-disk ground truth for one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub area_id: String,
    pub labels: BTreeMap<String, Label>,
    pub spec: SpecFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub targets: Vec<String>,
    pub start_day: BTreeMap<String, usize>,
    pub alpha: f64,
    #[serde(rename = "noise_sigma_N")]
    pub noise_sigma_n: f64,
    pub seed: u64,
}

impl LabelsFile {
    pub fn injection_spec(&self) -> InjectionSpec {
        InjectionSpec {
            targets: self.spec.start_day.clone(),
            alpha: self.spec.alpha,
            noise_sigma_n: self.spec.noise_sigma_n,
            seed: self.spec.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub area: AreaConfig,
    pub n_areas: usize,
    /// How many of the areas receive injected malfunctions.
    pub malfunctioning_areas: usize,
    /// Fraction of submeters corrupted in a malfunctioning area.
    pub fraction_inaccurate: f64,
    pub alpha: f64,
    /// kWh; `None` means 1% of `area.base_usage_mean`.
    pub noise_sigma_n: Option<f64>,
    /// Start days are drawn uniformly from this fraction interval of `n_days`.
    pub start_window: (f64, f64),
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            area: AreaConfig::default(),
            n_areas: 20,
            malfunctioning_areas: 10,
            fraction_inaccurate: 0.30,
            alpha: 0.01,
            noise_sigma_n: None,
            start_window: (0.25, 0.75),
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        if !(self.fraction_inaccurate > 0.0 && self.fraction_inaccurate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction_inaccurate must lie in (0, 1), got {}",
                self.fraction_inaccurate
            )));
        }
        if self.malfunctioning_areas > self.n_areas {
            return Err(Error::InvalidArgument(
                "malfunctioning_areas cannot exceed n_areas".into(),
            ));
        }
        let (lo, hi) = self.start_window;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidArgument(
                "start_window must satisfy 0 <= lo <= hi < 1".into(),
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument("alpha must be finite and >= 0".into()));
        }
        if self.malfunctioning_areas > 0 && self.targets_per_area() == 0 {
            return Err(Error::InvalidArgument(
                "fraction_inaccurate selects no submeters".into(),
            ));
        }
        Ok(())
    }

    /// ⌈fraction · n⌉ with a guard against float noise such as 0.3 · 10.
    pub fn targets_per_area(&self) -> usize {
        let raw = self.fraction_inaccurate * self.area.n_submeters as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(self.area.n_submeters)
    }

    pub fn noise_sigma_n(&self) -> f64 {
        self.noise_sigma_n
            .unwrap_or(0.01 * self.area.base_usage_mean)
    }

    fn start_day_range(&self) -> (usize, usize) {
        let n = self.area.n_days as f64;
        let lo = (self.start_window.0 * n).ceil() as usize;
        let hi = ((self.start_window.1 * n).floor() as usize).min(self.area.n_days - 1);
        (lo.min(hi), hi)
    }
}

pub fn area_id(index: usize) -> String {
    format!("area_{index:03}")
}

/// Build one labeled area. `malfunctioning` decides whether targets are drawn.
pub fn make_labeled_area(config: &CorpusConfig, index: usize, malfunctioning: bool) -> Result<LabeledArea> {
    let area_seed = derive_seed(config.seed, index as u64 + 1);
    let area_cfg = AreaConfig {
        seed: area_seed,
        ..config.area.clone()
    };
    let clean = generate_area(&area_id(index), &area_cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(area_seed, 0xA11CE));
    let mut spec = InjectionSpec::empty(config.alpha, config.noise_sigma_n(), derive_seed(area_seed, 7));
    if malfunctioning {
        let ids: Vec<String> = clean.submeters.keys().cloned().collect();
        let (lo, hi) = config.start_day_range();
        for id in ids.choose_multiple(&mut rng, config.targets_per_area()) {
            spec.targets.insert(id.clone(), rng.gen_range(lo..=hi));
        }
    }
    let dataset = inject_area(&clean, &spec)?;
    let labels = clean
        .submeters
        .keys()
        .map(|id| {
            let label = if spec.targets.contains_key(id) {
                Label::Inaccurate
            } else {
                Label::Accurate
            };
            (id.clone(), label)
        })
        .collect();
    Ok(LabeledArea {
        dataset,
        clean_dataset: clean,
        spec,
        labels,
    })
}

/// Indices of the malfunctioning areas, chosen uniformly from the seed.
pub fn malfunctioning_indices(config: &CorpusConfig) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..config.n_areas).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    idx.shuffle(&mut rng);
    idx.into_iter().take(config.malfunctioning_areas).collect()
}

/// Generate `config.n_areas` labeled areas. Each area draws from its own
/// stream derived from `(seed, index)`, so the output does not depend on
/// evaluation order.
pub fn make_labeled_corpus(config: &CorpusConfig) -> Result<Vec<LabeledArea>> {
    config.validate()?;
    let bad = malfunctioning_indices(config);
    (0..config.n_areas)
        .into_par_iter()
        .map(|i| make_labeled_area(config, i, bad.contains(&i)))
        .collect()
}

/// Accurate reference areas for predictor training, on streams disjoint
/// from the labeled corpus.
pub fn make_reference_areas(config: &CorpusConfig, count: usize) -> Result<Vec<UsageDataset>> {
    config.area.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let cfg = AreaConfig {
                seed: derive_seed(config.seed ^ 0x5_EED0_F2EF, i as u64 + 1),
                ..config.area.clone()
            };
            generate_area(&format!("ref_{i:03}"), &cfg)
        })
        .collect()
}

/// Identity check used by tests: master readings never change.
pub fn master_unchanged(area: &LabeledArea) -> bool {
    area.dataset.master == area.clean_dataset.master
        && area.dataset.master.keys().all(|d| {
            area.dataset.master[d].to_bits() == area.clean_dataset.master[d].to_bits()
        })
}
