//! Meter telemetry types, cleaning, calendar encoding and the daily
//! residual error between the master meter and the sum of its submeters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meter id reserved for the area's master meter in usage CSV files.
pub const MASTER_METER_ID: &str = "master";

pub const WEEKDAYS: usize = 7;
pub const MONTHS: usize = 12;
pub const YEARS: usize = 3;
pub const ONE_HOT_DIM: usize = WEEKDAYS + MONTHS + YEARS;

/// One row of the everyday-usage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub region_id: String,
    pub meter_id: String,
    pub system_id: String,
    pub date: NaiveDate,
    /// kWh
    pub usage: f64,
}

impl UsageRecord {
    pub fn new(region_id: &str, meter_id: &str, date: NaiveDate, usage: f64) -> Self {
        UsageRecord {
            region_id: region_id.to_string(),
            meter_id: meter_id.to_string(),
            system_id: format!("sys-{meter_id}"),
            date,
            usage,
        }
    }
}

pub type DailySeries = BTreeMap<NaiveDate, f64>;

/// Daily readings of one residential area: the master meter and its submeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageDataset {
    pub area_id: String,
    pub master: DailySeries,
    pub submeters: BTreeMap<String, DailySeries>,
}

impl UsageDataset {
    pub fn n_submeters(&self) -> usize {
        self.submeters.len()
    }

    /// Inclusive first and last date over every meter.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let dates = self.all_dates();
        Some((*dates.first()?, *dates.last()?))
    }

    pub fn all_dates(&self) -> Vec<NaiveDate> {
        let mut dates: BTreeSet<NaiveDate> = self.master.keys().copied().collect();
        for series in self.submeters.values() {
            dates.extend(series.keys().copied());
        }
        dates.into_iter().collect()
    }

    /// Dates carried by the master meter, in order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.master.keys().copied().collect()
    }

    /// Sum of all submeter readings on `date` (SSub).
    pub fn submeter_sum(&self, date: NaiveDate) -> Result<f64> {
        let mut total = 0.0;
        for (meter, series) in &self.submeters {
            total += series.get(&date).copied().ok_or_else(|| Error::MissingReading {
                meter: meter.clone(),
                date,
            })?;
        }
        Ok(total)
    }

    /// Group records into one dataset per region. Rows whose meter id is
    /// [`MASTER_METER_ID`] feed the master series. Later duplicates of a
    /// `(meter_id, date)` key are ignored, so dedupe first if order matters.
    pub fn from_records(records: &[UsageRecord]) -> Result<Vec<UsageDataset>> {
        let mut areas: BTreeMap<String, UsageDataset> = BTreeMap::new();
        for r in records {
            if !r.usage.is_finite() || r.usage < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "usage for meter `{}` on {} must be a nonnegative number, got {}",
                    r.meter_id, r.date, r.usage
                )));
            }
            let area = areas
                .entry(r.region_id.clone())
                .or_insert_with(|| UsageDataset {
                    area_id: r.region_id.clone(),
                    master: BTreeMap::new(),
                    submeters: BTreeMap::new(),
                });
            let series = if r.meter_id == MASTER_METER_ID {
                &mut area.master
            } else {
                area.submeters.entry(r.meter_id.clone()).or_default()
            };
            series.entry(r.date).or_insert(r.usage);
        }
        let out: Vec<UsageDataset> = areas.into_values().collect();
        for area in &out {
            if area.submeters.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "area `{}` has no submeters",
                    area.area_id
                )));
            }
            if area.master.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "area `{}` has no master meter readings",
                    area.area_id
                )));
            }
        }
        Ok(out)
    }

    /// Flatten back into records ordered by date, master first.
    pub fn to_records(&self) -> Vec<UsageRecord> {
        let mut out = Vec::new();
        for date in self.all_dates() {
            if let Some(&u) = self.master.get(&date) {
                out.push(UsageRecord::new(&self.area_id, MASTER_METER_ID, date, u));
            }
            for (meter, series) in &self.submeters {
                if let Some(&u) = series.get(&date) {
                    out.push(UsageRecord::new(&self.area_id, meter, date, u));
                }
            }
        }
        out
    }
}

/// Calendar features of one day. One-hot layout is `[Mon..Sun][Jan..Dec][year0..year2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub com_date: i64,
    pub weekday_onehot: [f64; WEEKDAYS],
    pub month_onehot: [f64; MONTHS],
    pub year_onehot: [f64; YEARS],
}

impl CalendarFeatures {
    /// The 22 one-hot values in canonical order.
    pub fn one_hot(&self) -> [f64; ONE_HOT_DIM] {
        let mut out = [0.0; ONE_HOT_DIM];
        out[..WEEKDAYS].copy_from_slice(&self.weekday_onehot);
        out[WEEKDAYS..WEEKDAYS + MONTHS].copy_from_slice(&self.month_onehot);
        out[WEEKDAYS + MONTHS..].copy_from_slice(&self.year_onehot);
        out
    }
}

/// Daily residual error E, one value per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ResidualSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Misaligned("dates must be strictly increasing".into()));
        }
        Ok(ResidualSeries { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Keep the first row for each `(meter_id, date)` key, preserving order.
pub fn dedupe_rows(rows: &[UsageRecord]) -> Vec<UsageRecord> {
    let mut seen: HashSet<(&str, &str, NaiveDate)> = HashSet::new();
    rows.iter()
        .filter(|r| seen.insert((r.region_id.as_str(), r.meter_id.as_str(), r.date)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    SsubOverflow,
    Missing,
}

/// Dates dropped by [`drop_invalid_days`], grouped by reason.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovedDays {
    pub ssub_overflow: Vec<NaiveDate>,
    pub missing: Vec<NaiveDate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovedDaysReport {
    pub removed_dates: Vec<NaiveDate>,
    pub reason: RemovalReason,
}

impl RemovedDays {
    pub fn total(&self) -> usize {
        self.ssub_overflow.len() + self.missing.len()
    }

    pub fn reports(&self) -> Vec<RemovedDaysReport> {
        vec![
            RemovedDaysReport {
                removed_dates: self.ssub_overflow.clone(),
                reason: RemovalReason::SsubOverflow,
            },
            RemovedDaysReport {
                removed_dates: self.missing.clone(),
                reason: RemovalReason::Missing,
            },
        ]
    }
}

/// Remove days where any reading is missing or where SSub exceeds the
/// master reading. Equality is kept.
pub fn drop_invalid_days(dataset: &UsageDataset) -> Result<(UsageDataset, RemovedDays)> {
    clean_days(dataset, true)
}

/// Remove only days with a missing reading. Used on monitored data, where a
/// submeter sum above the master is the malfunction symptom itself.
pub fn drop_missing_days(dataset: &UsageDataset) -> Result<(UsageDataset, RemovedDays)> {
    clean_days(dataset, false)
}

fn clean_days(dataset: &UsageDataset, drop_overflow: bool) -> Result<(UsageDataset, RemovedDays)> {
    let mut removed = RemovedDays::default();
    let mut keep = BTreeSet::new();
    for date in dataset.all_dates() {
        let Some(&master) = dataset.master.get(&date) else {
            removed.missing.push(date);
            continue;
        };
        match dataset.submeter_sum(date) {
            Err(_) => removed.missing.push(date),
            Ok(ssub) if drop_overflow && ssub > master => removed.ssub_overflow.push(date),
            Ok(_) => {
                keep.insert(date);
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let filter = |s: &DailySeries| -> DailySeries {
        s.iter()
            .filter(|(d, _)| keep.contains(*d))
            .map(|(d, v)| (*d, *v))
            .collect()
    };
    let cleaned = UsageDataset {
        area_id: dataset.area_id.clone(),
        master: filter(&dataset.master),
        submeters: dataset
            .submeters
            .iter()
            .map(|(k, s)| (k.clone(), filter(s)))
            .collect(),
    };
    Ok((cleaned, removed))
}

/// Encode `date` relative to `base_date`; `first_year` is year index 0 of
/// the three-year one-hot block.
pub fn encode_date(date: NaiveDate, base_date: NaiveDate, first_year: i32) -> Result<CalendarFeatures> {
    let com_date = (date - base_date).num_days();
    if com_date < 0 {
        return Err(Error::InvalidArgument(format!(
            "date {date} precedes base date {base_date}"
        )));
    }
    let year_idx = date.year() - first_year;
    if !(0..YEARS as i32).contains(&year_idx) {
        return Err(Error::YearOutOfRange { date, first_year });
    }
    let mut f = CalendarFeatures {
        com_date,
        weekday_onehot: [0.0; WEEKDAYS],
        month_onehot: [0.0; MONTHS],
        year_onehot: [0.0; YEARS],
    };
    f.weekday_onehot[date.weekday().num_days_from_monday() as usize] = 1.0;
    f.month_onehot[date.month0() as usize] = 1.0;
    f.year_onehot[year_idx as usize] = 1.0;
    Ok(f)
}

/// E = master − Σ submeters on `date`.
pub fn residual_error(dataset: &UsageDataset, date: NaiveDate) -> Result<f64> {
    let master = dataset
        .master
        .get(&date)
        .copied()
        .ok_or_else(|| Error::MissingReading {
            meter: MASTER_METER_ID.to_string(),
            date,
        })?;
    Ok(master - dataset.submeter_sum(date)?)
}

/// Residual error for every master date.
pub fn residual_series(dataset: &UsageDataset) -> Result<ResidualSeries> {
    let dates = dataset.dates();
    let values = dates
        .iter()
        .map(|&d| residual_error(dataset, d))
        .collect::<Result<Vec<_>>>()?;
    ResidualSeries::new(dates, values)
}

pub fn read_usage_csv<R: Read>(reader: R) -> Result<Vec<UsageRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["region_id", "meter_id", "system_id", "date", "usage"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidArgument(format!(
            "usage CSV header must be `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_usage_csv<W: Write>(writer: W, records: &[UsageRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["region_id", "meter_id", "system_id", "date", "usage"])?;
    for r in records {
        wtr.write_record([
            r.region_id.as_str(),
            r.meter_id.as_str(),
            r.system_id.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            &format_usage(r.usage),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<usage csv>", e))?;
    Ok(())
}

// Shortest representation that round-trips exactly.
fn format_usage(v: f64) -> String {
    format!("{v}")
}

pub fn load_usage_file(path: &Path) -> Result<Vec<UsageRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_usage_csv(std::io::BufReader::new(file))
}

pub fn save_usage_file(path: &Path, records: &[UsageRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_usage_csv(std::io::BufWriter::new(file), records)
}

/// Load, dedupe and split a usage CSV into its areas.
pub fn load_datasets(path: &Path) -> Result<Vec<UsageDataset>> {
    let rows = load_usage_file(path)?;
    UsageDataset::from_records(&dedupe_rows(&rows))
}

/// Column count of the 15-minute voltage/current tables: region, user,
/// system, phase, multiplier, date and 96 readings.
pub const REALTIME_COLUMNS: usize = 102;

/// Validate a voltage or current table and return its row count. The
/// contents are not used by any model.
pub fn validate_realtime_table<R: Read>(reader: R) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = rdr.headers()?.len();
    if width != REALTIME_COLUMNS {
        return Err(Error::InvalidArgument(format!(
            "real-time table must have {REALTIME_COLUMNS} columns, found {width}"
        )));
    }
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter().skip(6) {
            if !field.is_empty() && field.trim().parse::<f64>().is_err() {
                return Err(Error::InvalidArgument(format!(
                    "non-numeric reading `{field}` in real-time table row {}",
                    rows + 1
                )));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn area(master: f64, subs: &[f64]) -> UsageDataset {
        let date = d("2015-03-02");
        UsageDataset {
            area_id: "a".into(),
            master: [(date, master)].into_iter().collect(),
            submeters: subs
                .iter()
                .enumerate()
                .map(|(i, &u)| (format!("m{i}"), [(date, u)].into_iter().collect()))
                .collect(),
        }
    }

    #[test]
    fn dedupe_keeps_first_occurrence() {
        assert!(dedupe_rows(&[]).is_empty());
        let d1 = d("2015-01-01");
        let d2 = d("2015-01-02");
        let rows = vec![
            UsageRecord::new("r", "m1", d1, 5.0),
            UsageRecord::new("r", "m1", d1, 7.0),
        ];
        assert_eq!(dedupe_rows(&rows), vec![UsageRecord::new("r", "m1", d1, 5.0)]);

        let rows = vec![
            UsageRecord::new("r", "m1", d1, 5.0),
            UsageRecord::new("r", "m2", d1, 5.0),
            UsageRecord::new("r", "m1", d2, 6.0),
        ];
        assert_eq!(dedupe_rows(&rows), rows);
        assert_eq!(dedupe_rows(&dedupe_rows(&rows)), dedupe_rows(&rows));
    }

    #[test]
    fn invalid_day_boundaries() {
        let (kept, removed) = drop_invalid_days(&area(10.0, &[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(kept.master.len(), 1);
        assert_eq!(removed.total(), 0);

        assert!(matches!(
            drop_invalid_days(&area(8.0, &[3.0, 3.0, 3.0])),
            Err(Error::EmptyDataset)
        ));

        let (kept, _) = drop_invalid_days(&area(9.0, &[3.0, 3.0, 3.0])).unwrap();
        assert_eq!(kept.master.len(), 1);
    }

    #[test]
    fn missing_readings_are_dropped() {
        let mut ds = area(10.0, &[3.0, 3.0]);
        let extra = d("2015-03-03");
        ds.master.insert(extra, 10.0);
        ds.submeters.get_mut("m0").unwrap().insert(extra, 1.0);
        let overflow = d("2015-03-04");
        ds.master.insert(overflow, 1.0);
        for s in ds.submeters.values_mut() {
            s.insert(overflow, 1.0);
        }
        let (clean, removed) = drop_invalid_days(&ds).unwrap();
        assert_eq!(removed.missing, vec![extra]);
        assert_eq!(removed.ssub_overflow, vec![overflow]);
        assert_eq!(clean.dates(), vec![d("2015-03-02")]);
        let (again, removed_again) = drop_invalid_days(&clean).unwrap();
        assert_eq!(again, clean);
        assert_eq!(removed_again.total(), 0);
    }

    #[test]
    fn calendar_encoding() {
        // 2018-01-01 is a Monday.
        let base = d("2018-01-01");
        let f = encode_date(base, base, 2018).unwrap();
        assert_eq!(f.com_date, 0);
        assert_eq!(f.weekday_onehot[0], 1.0);
        assert_eq!(f.month_onehot[0], 1.0);
        assert_eq!(f.year_onehot[0], 1.0);
        assert_eq!(f.one_hot().iter().sum::<f64>(), 3.0);

        let next = encode_date(d("2018-01-02"), base, 2018).unwrap();
        assert_eq!(next.com_date, 1);
        assert_eq!(next.weekday_onehot[1], 1.0);

        let late = encode_date(d("2020-12-31"), base, 2018).unwrap();
        assert_eq!(late.year_onehot, [0.0, 0.0, 1.0]);
        assert_eq!(late.month_onehot[11], 1.0);

        assert!(matches!(
            encode_date(d("2021-01-01"), base, 2018),
            Err(Error::YearOutOfRange { .. })
        ));
        assert!(encode_date(d("2017-12-31"), base, 2017).is_err());
    }

    #[test]
    fn residual_error_arithmetic() {
        let date = d("2015-03-02");
        assert_eq!(residual_error(&area(10.0, &[3.0, 3.0, 3.0]), date).unwrap(), 1.0);
        assert_eq!(residual_error(&area(7.5, &[7.5]), date).unwrap(), 0.0);
        assert!(matches!(
            residual_error(&area(7.5, &[7.5]), d("2015-03-03")),
            Err(Error::MissingReading { .. })
        ));
    }

    #[test]
    fn residual_error_is_antilinear_in_submeters() {
        let date = d("2015-03-02");
        let ds = area(20.0, &[3.0, 4.0, 5.0]);
        let base = residual_error(&ds, date).unwrap();
        let mut bumped = ds.clone();
        *bumped.submeters.get_mut("m1").unwrap().get_mut(&date).unwrap() += 2.5;
        assert_eq!(residual_error(&bumped, date).unwrap(), base - 2.5);
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let ds = area(10.25, &[3.0, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_usage_csv(&mut buf, &ds.to_records()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("region_id,meter_id,system_id,date,usage\n"));
        let back = UsageDataset::from_records(&read_usage_csv(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, vec![ds]);

        let bad = "a,b,c\n1,2,3\n";
        assert!(read_usage_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn negative_usage_rejected() {
        let rows = vec![
            UsageRecord::new("r", MASTER_METER_ID, d("2015-01-01"), 1.0),
            UsageRecord::new("r", "m1", d("2015-01-01"), -1.0),
        ];
        assert!(UsageDataset::from_records(&rows).is_err());
    }

    #[test]
    fn realtime_table_validation() {
        let header: Vec<String> = ["region", "user", "system", "phase", "multiplier", "date"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..96).map(|i| format!("t{i}")))
            .collect();
        let row: Vec<String> = ["r", "u", "s", "A", "1", "2015-01-01"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..96).map(|i| format!("{}", 220.0 + i as f64 * 0.1)))
            .collect();
        let text = format!("{}\n{}\n", header.join(","), row.join(","));
        assert_eq!(validate_realtime_table(text.as_bytes()).unwrap(), 1);
        assert!(validate_realtime_table("a,b\n1,2\n".as_bytes()).is_err());
    }
}
