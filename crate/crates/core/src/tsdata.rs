//! Ingestion of sub-daily measurement streams and their reduction to an
//! aligned daily table.
//!
//! The data path is `parse_series` → `fill_gaps` → `resample_daily` →
//! `align`. Every step is a pure function over immutable values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy channel name.
pub const ENERGY_CHANNEL: &str = "kwh";

/// Weather channel names with their canonical units.
pub const WEATHER_CHANNELS: [(&str, &str); 6] = [
    ("drybulb_c", "°C"),
    ("solar_wm2", "W/m²"),
    ("rh_pct", "%"),
    ("dewpoint_c", "°C"),
    ("windspeed_ms", "m/s"),
    ("winddir_deg", "degrees"),
];

const UNITS: [&str; 6] = ["kWh", "°C", "W/m²", "%", "m/s", "degrees"];

/// Fraction of expected samples a day needs before its aggregate is trusted.
pub const DAILY_VALIDITY_THRESHOLD: f64 = 0.9;

/// Canonical unit of a known channel, if the name is one of the fixed ones.
pub fn canonical_unit(channel: &str) -> Option<&'static str> {
    if channel == ENERGY_CHANNEL {
        return Some("kWh");
    }
    WEATHER_CHANNELS
        .iter()
        .find(|(name, _)| *name == channel)
        .map(|(_, unit)| *unit)
}

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn is_valid(&self) -> bool {
        self.start <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let end = self.end;
        self.start.iter_days().take_while(move |d| *d <= end)
    }

    pub fn len_days(&self) -> usize {
        if self.is_valid() {
            (self.end - self.start).num_days() as usize + 1
        } else {
            0
        }
    }
}

/// What a CSV channel is expected to carry.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSchema {
    pub channel: String,
    pub unit: String,
    /// Building-local offset; daily boundaries are drawn in this zone.
    pub utc_offset: FixedOffset,
    /// Nominal cadence. Inferred from the median spacing when `None`.
    pub interval_seconds: Option<u32>,
}

impl SeriesSchema {
    /// Schema for one of the fixed channels, using its canonical unit.
    pub fn standard(channel: &str, utc_offset: FixedOffset) -> Result<Self> {
        let unit = canonical_unit(channel)
            .ok_or_else(|| Error::Schema(format!("unknown channel `{channel}`")))?;
        Ok(SeriesSchema {
            channel: channel.to_string(),
            unit: unit.to_string(),
            utc_offset,
            interval_seconds: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub timestamp: DateTime<FixedOffset>,
    pub value: Option<f64>,
}

/// A single measurement channel at sub-daily cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub channel: String,
    pub unit: String,
    pub interval_seconds: u32,
    pub points: Vec<Sample>,
    /// Rows dropped because they repeated an earlier timestamp.
    pub duplicates_merged: usize,
}

impl RawSeries {
    pub fn new(channel: &str, unit: &str, interval_seconds: u32, points: Vec<Sample>) -> Self {
        RawSeries {
            channel: channel.to_string(),
            unit: unit.to_string(),
            interval_seconds,
            points,
            duplicates_merged: 0,
        }
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|p| p.value.is_some()).count()
    }

    /// Writes the series in the same CSV layout `parse_series` reads.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 40);
        let _ = writeln!(out, "timestamp,{}", self.channel);
        for p in &self.points {
            out.push_str(&p.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, false));
            out.push(',');
            if let Some(v) = p.value {
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn parse_timestamp(raw: &str, offset: FixedOffset) -> Option<DateTime<FixedOffset>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&offset));
    }
    for fmt in ["%Y-%m-%dT%H:%M%:z", "%Y-%m-%d %H:%M:%S%:z"] {
        if let Ok(ts) = DateTime::parse_from_str(raw, fmt) {
            return Some(ts.with_timezone(&offset));
        }
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return offset.from_local_datetime(&naive).single();
        }
    }
    None
}

fn median_spacing_seconds(points: &[Sample]) -> Option<f64> {
    let mut gaps: Vec<i64> = points
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds())
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    let mid = gaps.len() / 2;
    Some(if gaps.len() % 2 == 1 {
        gaps[mid] as f64
    } else {
        (gaps[mid - 1] + gaps[mid]) as f64 / 2.0
    })
}

/// Parses a `timestamp,<channel>` CSV into a sorted, deduplicated series.
///
/// Empty cells and non-finite numbers become explicit missing values. Rows
/// sharing a timestamp collapse to the mean of their present values.
pub fn parse_series(csv_text: &str, schema: &SeriesSchema) -> Result<RawSeries> {
    if csv_text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    if !UNITS.contains(&schema.unit.as_str()) {
        return Err(Error::Schema(format!("unsupported unit `{}`", schema.unit)));
    }
    if let Some(unit) = canonical_unit(&schema.channel) {
        if unit != schema.unit {
            return Err(Error::Schema(format!(
                "channel `{}` is measured in {unit}, schema says {}",
                schema.channel, schema.unit
            )));
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() != 2 || &header[0] != "timestamp" {
        return Err(Error::Schema(format!(
            "expected header `timestamp,{}`",
            schema.channel
        )));
    }
    if header[1] != schema.channel {
        return Err(Error::Schema(format!(
            "header names channel `{}`, schema expects `{}`",
            &header[1], schema.channel
        )));
    }

    let mut rows: Vec<Sample> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0], schema.utc_offset).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", &record[0]),
        })?;
        let cell = &record[1];
        let value = if cell.is_empty() {
            None
        } else {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("unparseable value `{cell}`"),
            })?;
            v.is_finite().then_some(v)
        };
        rows.push(Sample { timestamp, value });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    rows.sort_by_key(|s| s.timestamp);
    let mut points: Vec<Sample> = Vec::with_capacity(rows.len());
    let mut duplicates_merged = 0;
    let mut i = 0;
    while i < rows.len() {
        let mut j = i + 1;
        while j < rows.len() && rows[j].timestamp == rows[i].timestamp {
            j += 1;
        }
        let group = &rows[i..j];
        let present: Vec<f64> = group.iter().filter_map(|s| s.value).collect();
        let value = if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        };
        duplicates_merged += group.len() - 1;
        points.push(Sample { timestamp: rows[i].timestamp, value });
        i = j;
    }

    let interval_seconds = match (median_spacing_seconds(&points), schema.interval_seconds) {
        (Some(median), Some(nominal)) => {
            if (median - nominal as f64).abs() > 0.01 * nominal as f64 {
                return Err(Error::Schema(format!(
                    "median spacing {median}s disagrees with declared interval {nominal}s"
                )));
            }
            nominal
        }
        (Some(median), None) => median.round() as u32,
        (None, Some(nominal)) => nominal,
        (None, None) => {
            return Err(Error::Schema(
                "cannot infer the sampling interval from a single row".into(),
            ))
        }
    };
    if interval_seconds == 0 {
        return Err(Error::Schema("sampling interval must be positive".into()));
    }

    Ok(RawSeries {
        channel: schema.channel.clone(),
        unit: schema.unit.clone(),
        interval_seconds,
        points,
        duplicates_merged,
    })
}

/// Limits on how much data gap filling may invent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapPolicy {
    /// Longest interior missing run that is interpolated.
    pub max_interior: usize,
    /// Longest leading or trailing run filled by holding the nearest value.
    pub max_edge: usize,
}

impl Default for GapPolicy {
    fn default() -> Self {
        GapPolicy { max_interior: 30, max_edge: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillMethod {
    InteriorInterpolate,
    EdgeHold,
    LeftUnfilled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub start: DateTime<FixedOffset>,
    pub length: usize,
    pub method: FillMethod,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GapReport {
    pub channel: String,
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }
}

/// Inserts explicit missing samples where whole intervals were skipped.
fn regularize(series: &RawSeries) -> Vec<Sample> {
    let step = i64::from(series.interval_seconds);
    let mut out = Vec::with_capacity(series.points.len());
    for (i, p) in series.points.iter().enumerate() {
        if i > 0 {
            let prev = series.points[i - 1].timestamp;
            let dt = (p.timestamp - prev).num_seconds();
            if dt * 2 > step * 3 {
                let slots = ((dt as f64 / step as f64).round() as i64 - 1).max(0);
                for k in 1..=slots {
                    out.push(Sample {
                        timestamp: prev + Duration::seconds(k * step),
                        value: None,
                    });
                }
            }
        }
        out.push(*p);
    }
    out
}

/// Fills bounded missing runs and reports every run it saw.
///
/// Interior runs are linearly interpolated between the bounding samples; a
/// single missing sample therefore becomes the mean of its two neighbours.
/// Leading and trailing runs hold the nearest present value. Runs longer
/// than the policy allows stay missing and are reported as such.
pub fn fill_gaps(series: &RawSeries, policy: GapPolicy) -> Result<(RawSeries, GapReport)> {
    let mut points = regularize(series);
    let n = points.len();
    if points.iter().all(|p| p.value.is_none()) {
        return Err(Error::UnfillableChannel(series.channel.clone()));
    }

    let mut report = GapReport {
        channel: series.channel.clone(),
        gaps: Vec::new(),
    };
    let mut i = 0;
    while i < n {
        if points[i].value.is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && points[i].value.is_none() {
            i += 1;
        }
        let end = i;
        let len = end - start;
        let method = if start == 0 || end == n {
            if len <= policy.max_edge {
                let held = if start == 0 { points[end].value } else { points[start - 1].value };
                for p in &mut points[start..end] {
                    p.value = held;
                }
                FillMethod::EdgeHold
            } else {
                FillMethod::LeftUnfilled
            }
        } else if len <= policy.max_interior {
            let a = points[start - 1].value.expect("bounded run");
            let b = points[end].value.expect("bounded run");
            if len == 1 {
                points[start].value = Some((a + b) / 2.0);
            } else {
                let span = (len + 1) as f64;
                for (k, p) in points[start..end].iter_mut().enumerate() {
                    p.value = Some(a + ((b - a) * (k + 1) as f64) / span);
                }
            }
            FillMethod::InteriorInterpolate
        } else {
            FillMethod::LeftUnfilled
        };
        report.gaps.push(Gap {
            start: points[start].timestamp,
            length: len,
            method,
        });
    }

    Ok((
        RawSeries {
            channel: series.channel.clone(),
            unit: series.unit.clone(),
            interval_seconds: series.interval_seconds,
            points,
            duplicates_merged: series.duplicates_merged,
        },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Sum,
    Mean,
}

impl Aggregation {
    /// Energy is summed; every weather channel is averaged.
    pub fn for_channel(channel: &str) -> Self {
        if channel == ENERGY_CHANNEL {
            Aggregation::Sum
        } else {
            Aggregation::Mean
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyValue {
    pub date: NaiveDate,
    pub value: Option<f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub channel: String,
    pub unit: String,
    pub days: Vec<DailyValue>,
}

impl DailySeries {
    pub fn get(&self, date: NaiveDate) -> Option<&DailyValue> {
        self.days
            .binary_search_by_key(&date, |d| d.date)
            .ok()
            .map(|i| &self.days[i])
    }
}

/// Aggregates a series to one value per local calendar date.
///
/// Coverage is the present-sample count over the count a full day at the
/// series' cadence would hold. Days under [`DAILY_VALIDITY_THRESHOLD`] keep
/// their coverage but lose their value.
pub fn resample_daily(series: &RawSeries, aggregation: Aggregation) -> DailySeries {
    let expected = 86_400.0 / f64::from(series.interval_seconds);
    let mut days: Vec<DailyValue> = Vec::new();
    let mut current: Option<(NaiveDate, f64, usize)> = None;

    let flush = |acc: Option<(NaiveDate, f64, usize)>, days: &mut Vec<DailyValue>| {
        if let Some((date, total, present)) = acc {
            let coverage = (present as f64 / expected).min(1.0);
            let value = (coverage >= DAILY_VALIDITY_THRESHOLD).then(|| match aggregation {
                Aggregation::Sum => total,
                Aggregation::Mean => total / present as f64,
            });
            days.push(DailyValue { date, value, coverage });
        }
    };

    for p in &series.points {
        let date = p.timestamp.date_naive();
        match current {
            Some((d, _, _)) if d == date => {}
            _ => {
                flush(current.take(), &mut days);
                current = Some((date, 0.0, 0));
            }
        }
        if let (Some(v), Some((_, total, present))) = (p.value, current.as_mut()) {
            *total += v;
            *present += 1;
        }
    }
    flush(current, &mut days);

    DailySeries {
        channel: series.channel.clone(),
        unit: series.unit.clone(),
        days,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub energy_kwh: Option<f64>,
    pub weather: BTreeMap<String, Option<f64>>,
    pub coverage: BTreeMap<String, f64>,
    /// Energy or some weather channel is missing on this date.
    pub excluded: bool,
}

/// Date-indexed join of daily energy and weather.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyTable {
    pub channels: Vec<String>,
    pub rows: Vec<DailyRow>,
}

impl DailyTable {
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.rows.iter().map(|r| r.date)
    }

    /// Rows inside `range` that are usable for modelling.
    pub fn usable_in(&self, range: &DateRange) -> impl Iterator<Item = &DailyRow> + '_ {
        let range = *range;
        self.rows
            .iter()
            .filter(move |r| !r.excluded && range.contains(r.date))
    }
}

/// Inner-joins daily energy with every weather series on date within `range`.
pub fn align(energy: &DailySeries, weather: &[DailySeries], range: DateRange) -> Result<DailyTable> {
    let mut rows = Vec::new();
    'dates: for day in &energy.days {
        if !range.contains(day.date) {
            continue;
        }
        let mut values = BTreeMap::new();
        let mut coverage = BTreeMap::new();
        coverage.insert(energy.channel.clone(), day.coverage);
        for w in weather {
            match w.get(day.date) {
                Some(v) => {
                    values.insert(w.channel.clone(), v.value);
                    coverage.insert(w.channel.clone(), v.coverage);
                }
                None => continue 'dates,
            }
        }
        let energy_kwh = day.value.filter(|v| *v >= 0.0);
        let excluded = energy_kwh.is_none() || values.values().any(Option::is_none);
        rows.push(DailyRow {
            date: day.date,
            energy_kwh,
            weather: values,
            coverage,
            excluded,
        });
    }
    if rows.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(DailyTable {
        channels: weather.iter().map(|w| w.channel.clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cst() -> FixedOffset {
        FixedOffset::west_opt(6 * 3600).unwrap()
    }

    fn schema(channel: &str) -> SeriesSchema {
        SeriesSchema::standard(channel, cst()).unwrap()
    }

    fn series(values: &[Option<f64>]) -> RawSeries {
        let t0 = cst().with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
        let points = values
            .iter()
            .enumerate()
            .map(|(i, v)| Sample {
                timestamp: t0 + Duration::seconds(120 * i as i64),
                value: *v,
            })
            .collect();
        RawSeries::new("kwh", "kWh", 120, points)
    }

    fn day(date: &str, value: Option<f64>) -> DailyValue {
        DailyValue {
            date: date.parse().unwrap(),
            value,
            coverage: if value.is_some() { 1.0 } else { 0.0 },
        }
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = "timestamp,kwh\n\
            2019-01-01T00:00:00-06:00,1.5\n\
            2019-01-01T00:02:00-06:00,\n\
            2019-01-01T00:04:00-06:00,2\n";
        let s = parse_series(text, &schema("kwh")).unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.values(), vec![Some(1.5), None, Some(2.0)]);
        assert_eq!(s.interval_seconds, 120);
    }

    #[test]
    fn reversed_rows_equal_sorted_rows() {
        let sorted = "timestamp,kwh\n2019-01-01T00:00,1\n2019-01-01T00:02,2\n2019-01-01T00:04,3\n";
        let reversed = "timestamp,kwh\n2019-01-01T00:04,3\n2019-01-01T00:02,2\n2019-01-01T00:00,1\n";
        assert_eq!(
            parse_series(sorted, &schema("kwh")).unwrap(),
            parse_series(reversed, &schema("kwh")).unwrap()
        );
    }

    #[test]
    fn invalid_calendar_date_names_line() {
        let text = "timestamp,kwh\n2019-01-01T00:00,1\n2020-13-40T99:99,2\n";
        match parse_series(text, &schema("kwh")) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("2020-13-40T99:99"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_header_only_inputs() {
        assert!(matches!(parse_series("", &schema("kwh")), Err(Error::EmptyInput)));
        assert!(matches!(
            parse_series("timestamp,kwh\n", &schema("kwh")),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn unit_and_header_mismatch_are_schema_errors() {
        let mut bad = schema("drybulb_c");
        bad.unit = "kWh".into();
        let text = "timestamp,drybulb_c\n2019-01-01T00:00,1\n2019-01-01T00:02,2\n";
        assert!(matches!(parse_series(text, &bad), Err(Error::Schema(_))));
        let text = "timestamp,rh_pct\n2019-01-01T00:00,1\n2019-01-01T00:02,2\n";
        assert!(matches!(parse_series(text, &schema("drybulb_c")), Err(Error::Schema(_))));
    }

    #[test]
    fn duplicates_collapse_to_mean() {
        let text = "timestamp,kwh\n2019-01-01T00:00,1\n2019-01-01T00:00,3\n2019-01-01T00:02,5\n";
        let s = parse_series(text, &schema("kwh")).unwrap();
        assert_eq!(s.values(), vec![Some(2.0), Some(5.0)]);
        assert_eq!(s.duplicates_merged, 1);
    }

    #[test]
    fn non_finite_values_become_missing() {
        let text = "timestamp,kwh\n2019-01-01T00:00,NaN\n2019-01-01T00:02,inf\n2019-01-01T00:04,1\n";
        let s = parse_series(text, &schema("kwh")).unwrap();
        assert_eq!(s.values(), vec![None, None, Some(1.0)]);
    }

    #[test]
    fn declared_interval_must_match_spacing() {
        let mut sch = schema("kwh");
        sch.interval_seconds = Some(60);
        let text = "timestamp,kwh\n2019-01-01T00:00,1\n2019-01-01T00:02,2\n";
        assert!(matches!(parse_series(text, &sch), Err(Error::Schema(_))));
    }

    #[test]
    fn timestamps_convert_into_building_zone() {
        let text = "timestamp,kwh\n2019-01-02T03:00:00Z,1\n2019-01-02T03:02:00Z,2\n";
        let s = parse_series(text, &schema("kwh")).unwrap();
        assert_eq!(s.points[0].timestamp.date_naive(), "2019-01-01".parse().unwrap());
    }

    #[test]
    fn single_gap_is_mean_of_neighbours() {
        let (filled, report) =
            fill_gaps(&series(&[Some(5.0), None, Some(7.0)]), GapPolicy::default()).unwrap();
        assert_eq!(filled.values(), vec![Some(5.0), Some(6.0), Some(7.0)]);
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].method, FillMethod::InteriorInterpolate);
    }

    #[test]
    fn two_sample_gap_is_linear() {
        let (filled, _) =
            fill_gaps(&series(&[Some(4.0), None, None, Some(10.0)]), GapPolicy::default()).unwrap();
        assert_eq!(filled.values(), vec![Some(4.0), Some(6.0), Some(8.0), Some(10.0)]);
    }

    #[test]
    fn no_gaps_is_identity() {
        let s = series(&[Some(1.0), Some(2.0), Some(3.0)]);
        let (filled, report) = fill_gaps(&s, GapPolicy::default()).unwrap();
        assert_eq!(filled, s);
        assert!(report.is_empty());
    }

    #[test]
    fn edges_hold_and_long_runs_stay_missing() {
        let policy = GapPolicy { max_interior: 2, max_edge: 1 };
        let s = series(&[None, Some(1.0), None, None, None, Some(2.0), None, None]);
        let (filled, report) = fill_gaps(&s, policy).unwrap();
        assert_eq!(
            filled.values(),
            vec![Some(1.0), Some(1.0), None, None, None, Some(2.0), None, None]
        );
        let methods: Vec<_> = report.gaps.iter().map(|g| (g.length, g.method)).collect();
        assert_eq!(
            methods,
            vec![
                (1, FillMethod::EdgeHold),
                (3, FillMethod::LeftUnfilled),
                (2, FillMethod::LeftUnfilled)
            ]
        );
    }

    #[test]
    fn all_missing_is_unfillable() {
        assert!(matches!(
            fill_gaps(&series(&[None, None]), GapPolicy::default()),
            Err(Error::UnfillableChannel(_))
        ));
    }

    #[test]
    fn skipped_timestamps_are_reinstated_and_filled() {
        let mut s = series(&[Some(2.0), Some(0.0), Some(4.0)]);
        s.points.remove(1);
        let (filled, report) = fill_gaps(&s, GapPolicy::default()).unwrap();
        assert_eq!(filled.values(), vec![Some(2.0), Some(3.0), Some(4.0)]);
        assert_eq!(report.gaps[0].length, 1);
    }

    #[test]
    fn full_day_of_energy_sums() {
        let s = series(&vec![Some(0.5); 720]);
        let daily = resample_daily(&s, Aggregation::Sum);
        assert_eq!(daily.days.len(), 1);
        assert_eq!(daily.days[0].value, Some(360.0));
        assert_eq!(daily.days[0].coverage, 1.0);
    }

    #[test]
    fn constant_weather_means() {
        let mut s = series(&vec![Some(20.0); 720]);
        s.channel = "drybulb_c".into();
        let daily = resample_daily(&s, Aggregation::Mean);
        assert_eq!(daily.days[0].value, Some(20.0));
    }

    #[test]
    fn low_coverage_day_is_missing() {
        let values: Vec<_> = (0..720).map(|i| (i < 300).then_some(1.0)).collect();
        let daily = resample_daily(&series(&values), Aggregation::Sum);
        assert_eq!(daily.days[0].value, None);
        assert!((daily.days[0].coverage - 300.0 / 720.0).abs() < 1e-12);
    }

    #[test]
    fn align_joins_identical_ranges() {
        let dates: Vec<String> = (1..=10).map(|d| format!("2019-01-{d:02}")).collect();
        let energy = DailySeries {
            channel: "kwh".into(),
            unit: "kWh".into(),
            days: dates.iter().map(|d| day(d, Some(100.0))).collect(),
        };
        let mut temp = DailySeries {
            channel: "drybulb_c".into(),
            unit: "°C".into(),
            days: dates.iter().map(|d| day(d, Some(10.0))).collect(),
        };
        let range = DateRange::new("2019-01-01".parse().unwrap(), "2019-12-31".parse().unwrap());
        let table = align(&energy, std::slice::from_ref(&temp), range).unwrap();
        assert_eq!(table.rows.len(), 10);
        assert!(table.rows.iter().all(|r| !r.excluded));

        temp.days[3].value = None;
        let table = align(&energy, &[temp], range).unwrap();
        let flagged: Vec<_> = table.rows.iter().filter(|r| r.excluded).map(|r| r.date).collect();
        assert_eq!(flagged, vec!["2019-01-04".parse::<NaiveDate>().unwrap()]);
    }

    #[test]
    fn align_without_overlap_fails() {
        let energy = DailySeries {
            channel: "kwh".into(),
            unit: "kWh".into(),
            days: vec![day("2019-01-15", Some(1.0))],
        };
        let temp = DailySeries {
            channel: "drybulb_c".into(),
            unit: "°C".into(),
            days: vec![day("2019-02-15", Some(1.0))],
        };
        let range = DateRange::new("2019-01-01".parse().unwrap(), "2019-12-31".parse().unwrap());
        assert!(matches!(align(&energy, &[temp], range), Err(Error::NoOverlap)));
    }
}
