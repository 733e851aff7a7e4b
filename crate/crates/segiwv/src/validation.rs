//! Comparison of detected changepoints against maintenance metadata.
//!
//! A detection is validated when a logged event lies within a day window of
//! it, with events and detections matched one to one, closest pairs first.
//! Short spike segments whose two bounding offsets cancel are flagged as
//! position outliers so validation rates can be reported with and without
//! them.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robust::MonthlyStd;
use crate::segmentation::Segmentation;
use crate::series::Dataset;

/// Event codes accepted in metadata files: receiver, antenna, dome and
/// processing changes.
const EVENT_KINDS: [char; 4] = ['R', 'A', 'D', 'P'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEvent {
    pub station: String,
    pub date: NaiveDate,
    pub kind: char,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetadataLog {
    events: Vec<MetadataEvent>,
}

impl MetadataLog {
    pub fn new(mut events: Vec<MetadataEvent>) -> Self {
        events.sort_by(|a, b| (&a.station, a.date).cmp(&(&b.station, b.date)));
        MetadataLog { events }
    }

    pub fn events(&self) -> &[MetadataEvent] {
        &self.events
    }

    pub fn for_station(&self, station: &str) -> Vec<&MetadataEvent> {
        self.events
            .iter()
            .filter(|e| e.station == station)
            .collect()
    }

    pub fn stations(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.events.iter().map(|e| e.station.as_str()).collect();
        out.dedup();
        out
    }
}

/// Reads a `station,date,type` CSV of maintenance events.
pub fn read_metadata_csv(path: &Path) -> Result<MetadataLog> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let want = ["station", "date", "type"];
    let ok = headers.len() == 3
        && headers
            .iter()
            .zip(want)
            .all(|(h, w)| h.eq_ignore_ascii_case(w));
    if !ok {
        return Err(Error::Malformed {
            path: display,
            line: 1,
            msg: "expected header station,date,type".to_string(),
        });
    }
    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record?;
        let malformed = |msg: String| Error::Malformed {
            path: display.clone(),
            line,
            msg,
        };
        if record.len() != 3 {
            return Err(malformed(format!("expected 3 fields, got {}", record.len())));
        }
        let station = record[0].to_string();
        if station.is_empty() {
            return Err(malformed("empty station".to_string()));
        }
        let date = record[1]
            .parse::<NaiveDate>()
            .map_err(|e| malformed(format!("bad date {:?}: {e}", &record[1])))?;
        let kind_str = record[2].to_ascii_uppercase();
        let mut kind_chars = kind_str.chars();
        let kind = match (kind_chars.next(), kind_chars.next()) {
            (Some(c), None) if EVENT_KINDS.contains(&c) => c,
            _ => {
                return Err(malformed(format!(
                    "event type {:?} is not one of R, A, D, P",
                    &record[2]
                )))
            }
        };
        events.push(MetadataEvent {
            station,
            date,
            kind,
        });
    }
    Ok(MetadataLog::new(events))
}

/// A changepoint put forward for validation. `position` is its index in the
/// series, `outlier` marks it as bounding a flagged spike segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    pub position: usize,
    pub date: NaiveDate,
    pub outlier: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRow {
    pub position: usize,
    pub date: NaiveDate,
    pub outlier: bool,
    pub validated: bool,
    pub event_date: Option<NaiveDate>,
    pub event_kind: Option<char>,
    /// Detection date minus event date, in days.
    pub distance_days: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<DetectionRow>,
    pub detections: usize,
    pub validated: usize,
    pub outliers: usize,
    pub validated_non_outlier: usize,
    pub non_outlier_detections: usize,
    /// validated / detections, in percent.
    pub pct_with_outliers: f64,
    /// validated / detections over non-outlier detections only, in percent.
    pub pct_without_outliers: f64,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Matches detections to events one to one within `window_days`. Candidate
/// pairs are processed by ascending absolute distance, so shrinking the
/// window only removes matches from the tail and never reshuffles closer
/// ones.
pub fn validate(
    detections: &[Detection],
    events: &[MetadataEvent],
    window_days: i64,
) -> Result<ValidationReport> {
    if window_days < 0 {
        return Err(Error::invalid("window must be non-negative"));
    }
    let mut pairs: Vec<(i64, usize, usize)> = Vec::new();
    for (di, det) in detections.iter().enumerate() {
        for (ei, ev) in events.iter().enumerate() {
            let dist = (det.date - ev.date).num_days();
            if dist.abs() <= window_days {
                pairs.push((dist, di, ei));
            }
        }
    }
    pairs.sort_by_key(|&(dist, di, ei)| (dist.abs(), di, ei));

    let mut det_match: Vec<Option<usize>> = vec![None; detections.len()];
    let mut event_used = vec![false; events.len()];
    for &(_, di, ei) in &pairs {
        if det_match[di].is_none() && !event_used[ei] {
            det_match[di] = Some(ei);
            event_used[ei] = true;
        }
    }

    let rows: Vec<DetectionRow> = detections
        .iter()
        .enumerate()
        .map(|(di, det)| {
            let matched = det_match[di].map(|ei| &events[ei]);
            DetectionRow {
                position: det.position,
                date: det.date,
                outlier: det.outlier,
                validated: matched.is_some(),
                event_date: matched.map(|e| e.date),
                event_kind: matched.map(|e| e.kind),
                distance_days: matched.map(|e| (det.date - e.date).num_days()),
            }
        })
        .collect();

    let detections_n = rows.len();
    let validated = rows.iter().filter(|r| r.validated).count();
    let outliers = rows.iter().filter(|r| r.outlier).count();
    let validated_non_outlier = rows.iter().filter(|r| r.validated && !r.outlier).count();
    let non_outlier_detections = detections_n - outliers;
    Ok(ValidationReport {
        rows,
        detections: detections_n,
        validated,
        outliers,
        validated_non_outlier,
        non_outlier_detections,
        pct_with_outliers: percent(validated, detections_n),
        pct_without_outliers: percent(validated_non_outlier, non_outlier_detections),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutlierParams {
    /// Maximum calendar span of a spike segment, in days.
    pub gap_days: i64,
    /// Both bounding offsets must exceed this multiple of the local noise
    /// scale.
    pub amp_factor: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        OutlierParams {
            gap_days: 30,
            amp_factor: 2.0,
        }
    }
}

/// Flags changepoints that bound short spike segments: an interior segment
/// spanning at most `gap_days` whose entry and exit offsets have opposite
/// signs and both exceed `amp_factor` times the noise scale of the month at
/// the segment midpoint. Returns one flag per changepoint; both boundaries
/// of a flagged segment are marked.
pub fn classify_outliers(
    data: &Dataset,
    segmentation: &Segmentation,
    means: &[f64],
    monthly: &MonthlyStd,
    params: &OutlierParams,
) -> Result<Vec<bool>> {
    if means.len() != segmentation.k() {
        return Err(Error::invalid("one mean per segment required"));
    }
    if segmentation.n() != data.len() {
        return Err(Error::invalid("segmentation does not match the series"));
    }
    let dates = data.series.dates();
    let labels = data.months.labels();
    let k = segmentation.k();
    let mut flags = vec![false; k.saturating_sub(1)];
    for (s, range) in segmentation.segments().enumerate() {
        if s == 0 || s == k - 1 {
            continue;
        }
        let span = (dates[range.end - 1] - dates[range.start]).num_days();
        if span > params.gap_days {
            continue;
        }
        let entry = means[s] - means[s - 1];
        let exit = means[s + 1] - means[s];
        if entry * exit >= 0.0 {
            continue;
        }
        let mid = range.start + (range.end - range.start) / 2;
        let sigma = monthly
            .sigma(labels[mid])
            .ok_or(Error::MissingMonthScale { month: labels[mid] })?;
        let threshold = params.amp_factor * sigma;
        if entry.abs() > threshold && exit.abs() > threshold {
            flags[s - 1] = true;
            flags[s] = true;
        }
    }
    Ok(flags)
}
