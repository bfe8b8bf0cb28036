//! Sliding-window malfunction detection over daily prediction errors.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::ResidualSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionParams {
    /// Threshold, in the units of the DPE series.
    pub t: f64,
    /// Consecutive days that must all exceed `t`.
    #[serde(rename = "L")]
    pub l: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams { t: 0.5, l: 4 }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::InvalidArgument(format!("threshold t must be > 0, got {}", self.t)));
        }
        if self.l < 1 {
            return Err(Error::InvalidArgument("window length L must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(UB, LB) = (p + t, p − t)`.
pub fn bounds(p: f64, t: f64) -> (f64, f64) {
    (p + t, p - t)
}

/// Per-day `|observed − predicted|`; both series must cover the same dates.
pub fn dpe(observed: &ResidualSeries, predicted: &ResidualSeries) -> Result<Vec<f64>> {
    if observed.dates != predicted.dates {
        return Err(Error::Misaligned(format!(
            "observed has {} dates, predicted {}, or the dates differ",
            observed.len(),
            predicted.len()
        )));
    }
    Ok(observed
        .values
        .iter()
        .zip(&predicted.values)
        .map(|(e, p)| (e - p).abs())
        .collect())
}

/// Strict exceedance: the observed value lies outside `[LB, UB]`.
pub fn exceeds(dpe: f64, t: f64) -> bool {
    dpe > t
}

/// Index of the left edge of the first window whose `L` values all exceed `t`.
pub fn first_alarm(dpe: &[f64], params: &DetectionParams) -> Result<Option<usize>> {
    params.validate()?;
    if dpe.len() < params.l {
        return Err(Error::SeriesTooShort {
            needed: params.l,
            got: dpe.len(),
        });
    }
    let mut run = 0usize;
    for (i, &d) in dpe.iter().enumerate() {
        if exceeds(d, params.t) {
            run += 1;
            if run == params.l {
                return Ok(Some(i + 1 - params.l));
            }
        } else {
            run = 0;
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub flagged: bool,
    pub predicted_start: Option<NaiveDate>,
    pub lag: Option<i64>,
    pub dpe_series: Vec<f64>,
}

/// Scan a DPE series aligned with `dates`.
pub fn sliding_window_detect(dates: &[NaiveDate], dpe: &[f64], params: &DetectionParams) -> Result<DetectionResult> {
    if dates.len() != dpe.len() {
        return Err(Error::Misaligned(format!(
            "{} dates for {} DPE values",
            dates.len(),
            dpe.len()
        )));
    }
    let start = first_alarm(dpe, params)?.map(|i| dates[i]);
    Ok(DetectionResult {
        flagged: start.is_some(),
        predicted_start: start,
        lag: None,
        dpe_series: dpe.to_vec(),
    })
}

/// Signed whole days from the true start to the predicted start.
pub fn compute_lag(predicted_start: NaiveDate, actual_start: NaiveDate) -> i64 {
    (predicted_start - actual_start).num_days()
}

impl DetectionResult {
    /// Fill in the lag against a known injection start.
    pub fn with_truth(mut self, actual_start: Option<NaiveDate>) -> Self {
        self.lag = match (self.predicted_start, actual_start) {
            (Some(p), Some(a)) => Some(compute_lag(p, a)),
            _ => None,
        };
        self
    }

    pub fn is_false_alarm(&self) -> bool {
        self.lag.is_some_and(|l| l < 0)
    }
}

/// Area-level detection run in `scale` units: observed and predicted E are
/// divided by `scale` before the DPE is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaDetection {
    pub area_id: String,
    pub flagged: bool,
    pub predicted_start: Option<NaiveDate>,
    pub lag: Option<i64>,
    pub params: DetectionParams,
    /// kWh per DPE unit.
    pub scale: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub date: NaiveDate,
    #[serde(rename = "observed_E")]
    pub observed: f64,
    #[serde(rename = "predicted_E")]
    pub predicted: f64,
    #[serde(rename = "DPE")]
    pub dpe: f64,
    pub exceeds: bool,
}

pub fn detect_area(
    area_id: &str,
    observed: &ResidualSeries,
    predicted: &ResidualSeries,
    params: &DetectionParams,
    scale: f64,
    actual_start: Option<NaiveDate>,
) -> Result<AreaDetection> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let dpe: Vec<f64> = dpe(observed, predicted)?.into_iter().map(|d| d / scale).collect();
    let result = sliding_window_detect(&observed.dates, &dpe, params)?.with_truth(actual_start);
    let trace = observed
        .dates
        .iter()
        .zip(observed.values.iter().zip(&predicted.values))
        .zip(&dpe)
        .map(|((&date, (&o, &p)), &d)| TraceRow {
            date,
            observed: o,
            predicted: p,
            dpe: d,
            exceeds: exceeds(d, params.t),
        })
        .collect();
    Ok(AreaDetection {
        area_id: area_id.to_string(),
        flagged: result.flagged,
        predicted_start: result.predicted_start,
        lag: result.lag,
        params: *params,
        scale,
        trace,
    })
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect()
    }

    #[test]
    fn bounds_arithmetic() {
        assert_eq!(bounds(1.0, 0.5), (1.5, 0.5));
        assert_eq!(bounds(0.0, 1.0), (1.0, -1.0));
    }

    #[test]
    fn dpe_and_exceedance() {
        let d = days(3);
        let obs = ResidualSeries::new(d.clone(), vec![1.0, 2.0, 1.4]).unwrap();
        let pred = ResidualSeries::new(d.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        let v = dpe(&obs, &pred).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(!exceeds(v[0], 0.5));
        assert!(exceeds(v[1], 0.5));
        assert!(!exceeds(v[2], 0.5));
        let other = ResidualSeries::new(days(2), vec![1.0, 1.0]).unwrap();
        assert!(matches!(dpe(&obs, &other), Err(Error::Misaligned(_))));
    }

    #[test]
    fn window_scans() {
        let p = DetectionParams::default();
        assert_eq!(first_alarm(&[0.6, 0.7, 0.8, 0.9], &p).unwrap(), Some(0));
        assert_eq!(
            first_alarm(&[0.6, 0.4, 0.8, 0.9, 0.9, 0.9, 0.9], &p).unwrap(),
            Some(2)
        );
        assert_eq!(first_alarm(&[0.5; 10], &p).unwrap(), None);
        assert!(first_alarm(&[1.0; 3], &p).is_err());
    }

    #[test]
    fn lag_sign() {
        let d = days(200);
        assert_eq!(compute_lag(d[100], d[100]), 0);
        assert_eq!(compute_lag(d[165], d[100]), 65);
        let r = DetectionResult {
            flagged: true,
            predicted_start: Some(d[90]),
            lag: None,
            dpe_series: vec![],
        }
        .with_truth(Some(d[100]));
        assert_eq!(r.lag, Some(-10));
        assert!(r.is_false_alarm());
    }

    #[test]
    fn invalid_params() {
        assert!(first_alarm(&[1.0; 5], &DetectionParams { t: 0.0, l: 4 }).is_err());
        assert!(first_alarm(&[1.0; 5], &DetectionParams { t: 0.5, l: 0 }).is_err());
    }
}
