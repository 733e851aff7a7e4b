//! Observation container, CSV ingestion, and calendar bookkeeping.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days in the mean tropical-ish year used as the default periodic bias period.
pub const CALENDAR_PERIOD: f64 = 365.25;

/// Daily observations sorted by date. Dates are strictly increasing and all
/// values are finite; both are enforced at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series from already-clean parts: dates strictly increasing,
    /// values finite, equal lengths. Use [`ingest`] for raw records.
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} dates, {} values",
                dates.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        for pair in dates.windows(2) {
            if pair[0] >= pair[1] {
                return Err(if pair[0] == pair[1] {
                    Error::DuplicateDate(pair[0])
                } else {
                    Error::invalid(format!(
                        "dates out of order: {} then {}",
                        pair[0], pair[1]
                    ))
                });
            }
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {bad}")));
        }
        Ok(TimeSeries { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.dates[i]
    }
}

/// Outcome of [`ingest`]: the cleaned series plus how many records were
/// discarded for carrying a non-finite value.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub series: TimeSeries,
    pub dropped_non_finite: usize,
}

/// Builds a [`TimeSeries`] from raw records: sorts by date, drops non-finite
/// values (counted in the report), and rejects duplicate dates.
pub fn ingest(records: Vec<(NaiveDate, f64)>) -> Result<IngestReport> {
    let before = records.len();
    let mut kept: Vec<(NaiveDate, f64)> = records
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .collect();
    let dropped_non_finite = before - kept.len();
    kept.sort_by_key(|(d, _)| *d);
    for pair in kept.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDate(pair[0].0));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptySeries);
    }
    let (dates, values) = kept.into_iter().unzip();
    Ok(IngestReport {
        series: TimeSeries { dates, values },
        dropped_non_finite,
    })
}

/// Reads a daily series from CSV. Two layouts are accepted, detected from the
/// header: `date,value`, or `date,gnss,erai` in which case the stored value is
/// the difference `gnss - erai`. Dates are ISO-8601 (`YYYY-MM-DD`).
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<IngestReport> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let layout = match headers.as_slice() {
        [a, b] if a == "date" && b == "value" => Layout::Value,
        [a, b, c] if a == "date" && b == "gnss" && c == "erai" => Layout::Difference,
        _ => {
            return Err(Error::Malformed {
                path: path_str,
                line: 1,
                msg: format!(
                    "unrecognized header {:?}; expected `date,value` or `date,gnss,erai`",
                    headers.join(",")
                ),
            })
        }
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::Malformed {
                path: path_str.clone(),
                line,
                msg: format!("missing field {}", i + 1),
            })
        };
        let date_txt = field(0)?;
        let date = date_txt
            .parse::<NaiveDate>()
            .map_err(|e| Error::Malformed {
                path: path_str.clone(),
                line,
                msg: format!("bad date {date_txt:?}: {e}"),
            })?;
        let parse_num = |txt: &str| -> Result<f64> {
            txt.parse::<f64>().map_err(|_| Error::Malformed {
                path: path_str.clone(),
                line,
                msg: format!("bad number {txt:?}"),
            })
        };
        let value = match layout {
            Layout::Value => parse_num(field(1)?)?,
            Layout::Difference => parse_num(field(1)?)? - parse_num(field(2)?)?,
        };
        records.push((date, value));
    }
    ingest(records)
}

enum Layout {
    Value,
    Difference,
}

/// Calendar month label (1..=12) of every observation. For simulated series
/// the labels come from the block design instead of real dates, so the index
/// is stored rather than recomputed from the calendar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthIndex {
    labels: Vec<u8>,
}

impl MonthIndex {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&m| !(1..=12).contains(&m)) {
            return Err(Error::invalid(format!("month label {bad} outside 1..=12")));
        }
        Ok(MonthIndex { labels })
    }

    pub fn from_dates(dates: &[NaiveDate]) -> Self {
        MonthIndex {
            labels: dates.iter().map(|d| d.month() as u8).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Observation count per month, indexed by `month - 1`.
    pub fn counts(&self) -> [usize; 12] {
        let mut counts = [0usize; 12];
        for &m in &self.labels {
            counts[m as usize - 1] += 1;
        }
        counts
    }
}

/// A series together with the covariates the pipeline needs: month labels for
/// the noise model and a phase (plus period) for the periodic bias.
///
/// Real data uses the day of year against a period of 365.25 days; simulated
/// series use the raw 1-based index against the design period.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: TimeSeries,
    pub months: MonthIndex,
    pub phase: Vec<f64>,
    pub period: f64,
}

impl Dataset {
    /// Wraps a calendar-dated series: month labels from the dates, phase set
    /// to the day of year, period 365.25. Leap days keep their raw ordinal.
    pub fn from_calendar(series: TimeSeries) -> Self {
        let months = MonthIndex::from_dates(series.dates());
        let phase = series
            .dates()
            .iter()
            .map(|d| f64::from(d.ordinal()))
            .collect();
        Dataset {
            series,
            months,
            phase,
            period: CALENDAR_PERIOD,
        }
    }

    /// Wraps a series whose month labels and phase are imposed by a design
    /// rather than derived from dates.
    pub fn with_design(
        series: TimeSeries,
        months: MonthIndex,
        phase: Vec<f64>,
        period: f64,
    ) -> Result<Self> {
        let n = series.len();
        if months.len() != n || phase.len() != n {
            return Err(Error::invalid(format!(
                "design length mismatch: {n} observations, {} month labels, {} phases",
                months.len(),
                phase.len()
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(format!("period {period} must be positive")));
        }
        Ok(Dataset {
            series,
            months,
            phase,
            period,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn ingest_sorts_and_keeps_finite_records() {
        let report = ingest(vec![
            (d("2001-01-02"), 2.0),
            (d("2001-01-01"), 1.0),
            (d("2001-01-03"), f64::NAN),
        ])
        .unwrap();
        assert_eq!(report.series.len(), 2);
        assert_eq!(report.dropped_non_finite, 1);
        assert_eq!(report.series.dates(), &[d("2001-01-01"), d("2001-01-02")]);
        assert_eq!(report.series.values(), &[1.0, 2.0]);
    }

    #[test]
    fn ingest_rejects_duplicate_dates() {
        let err = ingest(vec![(d("2001-01-01"), 1.0), (d("2001-01-01"), 2.0)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateDate(_)));
    }

    #[test]
    fn ingest_rejects_all_non_finite() {
        let err = ingest(vec![(d("2001-01-01"), f64::INFINITY)]).unwrap_err();
        assert!(matches!(err, Error::EmptySeries));
    }

    #[test]
    fn sixteen_years_of_daily_data_has_5844_points() {
        // Full calendar enumeration 1995-01-01 through 2010-12-31, which
        // contains four leap years.
        let mut records = Vec::new();
        let mut day = d("1995-01-01");
        let end = d("2010-12-31");
        while day <= end {
            records.push((day, 0.5));
            day = day.succ_opt().unwrap();
        }
        let report = ingest(records).unwrap();
        assert_eq!(report.series.len(), 5844);
        assert_eq!(report.dropped_non_finite, 0);
    }

    #[test]
    fn month_labels_follow_the_calendar() {
        let idx = MonthIndex::from_dates(&[d("2001-01-31"), d("2001-02-01")]);
        assert_eq!(idx.labels(), &[1, 2]);
    }

    #[test]
    fn month_index_rejects_labels_outside_range() {
        assert!(MonthIndex::new(vec![0]).is_err());
        assert!(MonthIndex::new(vec![13]).is_err());
        assert!(MonthIndex::new(vec![1, 12]).is_ok());
    }

    #[test]
    fn calendar_dataset_uses_day_of_year_phase() {
        let report = ingest(vec![
            (d("2000-01-01"), 0.0),
            (d("2000-03-01"), 0.0),
            (d("2000-12-31"), 0.0),
        ])
        .unwrap();
        let ds = Dataset::from_calendar(report.series);
        // 2000 is a leap year: March 1 is ordinal 61, December 31 is 366.
        assert_eq!(ds.phase, vec![1.0, 61.0, 366.0]);
        assert_eq!(ds.period, 365.25);
        assert_eq!(ds.months.labels(), &[1, 3, 12]);
    }

    #[test]
    fn with_design_checks_lengths() {
        let report = ingest(vec![(d("2000-01-01"), 0.0), (d("2000-01-02"), 0.0)]).unwrap();
        let months = MonthIndex::new(vec![1, 1]).unwrap();
        let err = Dataset::with_design(report.series, months, vec![1.0], 100.0).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn csv_value_layout_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "date,value\n2001-01-02,1.5\n2001-01-01,-0.5\n").unwrap();
        let report = read_series_csv(&path).unwrap();
        assert_eq!(report.series.values(), &[-0.5, 1.5]);
    }

    #[test]
    fn csv_difference_layout_subtracts_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "date,gnss,erai\n2001-01-01,3.25,1.25\n").unwrap();
        let report = read_series_csv(&path).unwrap();
        assert_eq!(report.series.values(), &[2.0]);
    }

    #[test]
    fn csv_nan_field_is_dropped_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "date,value\n2001-01-01,NaN\n2001-01-02,1.0\n").unwrap();
        let report = read_series_csv(&path).unwrap();
        assert_eq!(report.series.len(), 1);
        assert_eq!(report.dropped_non_finite, 1);
    }

    #[test]
    fn csv_bad_date_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "date,value\n01/02/2001,1.0\n").unwrap();
        let err = read_series_csv(&path).unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_unknown_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "time,val\n1,2\n").unwrap();
        assert!(read_series_csv(&path).is_err());
    }
}
