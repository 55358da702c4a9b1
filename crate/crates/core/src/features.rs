//! Model inputs: tabular feature matrices for the tree and feed-forward
//! models, and sliding windows for the recurrent model.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tsdata::DailyTable;

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalendarFeatures {
    pub day_of_week: bool,
    pub month_cyclic: bool,
    pub weekend: bool,
}

impl Default for CalendarFeatures {
    fn default() -> Self {
        CalendarFeatures { day_of_week: true, month_cyclic: true, weekend: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSpec {
    pub weather_channels: Vec<String>,
    pub calendar: CalendarFeatures,
    /// Window length for recurrent sequences.
    pub lookback_days: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            weather_channels: ["drybulb_c", "solar_wm2", "rh_pct", "dewpoint_c", "windspeed_ms"]
                .map(String::from)
                .to_vec(),
            calendar: CalendarFeatures::default(),
            lookback_days: 7,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lookback_days == 0 {
            return Err(Error::Config("lookback_days must be at least 1".into()));
        }
        if self.weather_channels.is_empty() {
            return Err(Error::Config("at least one weather channel is required".into()));
        }
        Ok(())
    }

    /// Column names in the order `build_features` lays them out.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.weather_channels.clone();
        if self.calendar.day_of_week {
            names.extend(WEEKDAYS.iter().map(|d| format!("dow_{d}")));
        }
        if self.calendar.month_cyclic {
            names.push("month_sin".into());
            names.push("month_cos".into());
        }
        if self.calendar.weekend {
            names.push("weekend".into());
        }
        names
    }
}

/// Whether standardization applies to a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Indicator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            kinds: self.kinds.clone(),
        }
    }
}

/// `(sin θ, cos θ)` with θ = 2π(m−1)/12.
pub fn month_encoding(date: NaiveDate) -> (f64, f64) {
    let theta = 2.0 * PI * f64::from(date.month0()) / 12.0;
    (theta.sin(), theta.cos())
}

/// Lays out usable table rows as a feature matrix.
///
/// Columns are the weather channels in the order `spec` lists them,
/// followed by the enabled calendar features. Excluded rows are skipped.
pub fn build_features(table: &DailyTable, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    for ch in &spec.weather_channels {
        if !table.channels.contains(ch) {
            return Err(Error::UnknownFeature(ch.clone()));
        }
    }
    let feature_names = spec.feature_names();
    let mut kinds = vec![FeatureKind::Continuous; spec.weather_channels.len()];
    if spec.calendar.day_of_week {
        kinds.extend([FeatureKind::Indicator; 7]);
    }
    if spec.calendar.month_cyclic {
        kinds.extend([FeatureKind::Continuous; 2]);
    }
    if spec.calendar.weekend {
        kinds.push(FeatureKind::Indicator);
    }

    let cols = feature_names.len();
    let mut dates = Vec::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for row in table.rows.iter().filter(|r| !r.excluded) {
        let Some(energy) = row.energy_kwh else { continue };
        let start = data.len();
        for ch in &spec.weather_channels {
            match row.weather.get(ch).copied().flatten() {
                Some(v) => data.push(v),
                None => break,
            }
        }
        if data.len() - start != spec.weather_channels.len() {
            data.truncate(start);
            continue;
        }
        let dow = row.date.weekday().num_days_from_monday() as usize;
        if spec.calendar.day_of_week {
            data.extend((0..7).map(|d| if d == dow { 1.0 } else { 0.0 }));
        }
        if spec.calendar.month_cyclic {
            let (s, c) = month_encoding(row.date);
            data.push(s);
            data.push(c);
        }
        if spec.calendar.weekend {
            data.push(if dow >= 5 { 1.0 } else { 0.0 });
        }
        dates.push(row.date);
        y.push(energy);
    }
    let x = Matrix::from_vec(dates.len(), cols, data);
    Ok(FeatureMatrix { dates, x, y, feature_names, kinds })
}

/// Per-column z-score parameters. Indicator columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scaled: Vec<bool>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits means and population standard deviations on masked rows only.
pub fn fit_scaler(matrix: &FeatureMatrix, train_rows: &[bool]) -> Result<Scaler> {
    if train_rows.len() != matrix.len() {
        return Err(Error::LengthMismatch { left: train_rows.len(), right: matrix.len() });
    }
    let idx: Vec<usize> = (0..matrix.len()).filter(|&i| train_rows[i]).collect();
    if idx.is_empty() {
        return Err(Error::InsufficientData("scaler mask selects no rows".into()));
    }
    let cols = matrix.x.cols();
    let mut mean = vec![0.0; cols];
    let mut std = vec![1.0; cols];
    let mut scaled = vec![false; cols];
    for j in 0..cols {
        if matrix.kinds[j] == FeatureKind::Indicator {
            mean[j] = 0.0;
            std[j] = 1.0;
            continue;
        }
        let (m, s) = mean_std(idx.iter().map(|&i| matrix.x.get(i, j)));
        mean[j] = m;
        std[j] = s;
        scaled[j] = true;
    }
    Ok(Scaler { mean, std, scaled })
}

impl Scaler {
    fn effective_std(&self, j: usize) -> f64 {
        if self.std[j] > 0.0 {
            self.std[j]
        } else {
            1.0
        }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if self.scaled[j] {
                *v = (*v - self.mean[j]) / self.effective_std(j);
            }
        }
    }

    pub fn inverse_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            if self.scaled[j] {
                *v = *v * self.effective_std(j) + self.mean[j];
            }
        }
    }
}

/// Returns a scaled copy of `matrix`; targets are left as they are.
pub fn apply_scaler(matrix: &FeatureMatrix, scaler: &Scaler) -> Result<FeatureMatrix> {
    if scaler.mean.len() != matrix.x.cols() {
        return Err(Error::Dimension(format!(
            "scaler has {} columns, matrix has {}",
            scaler.mean.len(),
            matrix.x.cols()
        )));
    }
    let mut out = matrix.clone();
    for i in 0..out.x.rows() {
        scaler.transform_row(out.x.row_mut(i));
    }
    Ok(out)
}

/// Z-score parameters for the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InsufficientData("no targets to fit".into()));
        }
        let (mean, std) = mean_std(y.iter().copied());
        Ok(TargetScaler { mean, std: if std > 0.0 { std } else { 1.0 } })
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// One recurrent training example: days `t−L+1..=t` predicting day `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub window: Matrix,
    pub target: f64,
    pub target_date: NaiveDate,
}

/// Builds every length-`lookback` window of consecutive calendar days.
///
/// Windows that would straddle a missing or excluded date are dropped.
pub fn make_sequences(matrix: &FeatureMatrix, lookback: usize) -> Result<Vec<Sequence>> {
    if lookback == 0 {
        return Err(Error::Config("lookback must be at least 1".into()));
    }
    let n = matrix.len();
    if n < lookback {
        return Err(Error::InsufficientHistory { rows: n, lookback });
    }
    let span = lookback as i64 - 1;
    let mut out = Vec::with_capacity(n + 1 - lookback);
    for t in (lookback - 1)..n {
        let first = t + 1 - lookback;
        if (matrix.dates[t] - matrix.dates[first]).num_days() != span {
            continue;
        }
        let idx: Vec<usize> = (first..=t).collect();
        out.push(Sequence {
            window: matrix.x.select_rows(&idx),
            target: matrix.y[t],
            target_date: matrix.dates[t],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::tsdata::DailyRow;

    fn table(days: usize, excluded: &[usize]) -> DailyTable {
        let start: NaiveDate = "2019-01-07".parse().unwrap(); // a Monday
        let rows = (0..days)
            .map(|i| {
                let mut weather = BTreeMap::new();
                weather.insert("drybulb_c".to_string(), Some(21.5 + i as f64));
                weather.insert("solar_wm2".to_string(), Some(100.0));
                DailyRow {
                    date: start + chrono::Duration::days(i as i64),
                    energy_kwh: Some(1000.0 + i as f64),
                    weather,
                    coverage: BTreeMap::new(),
                    excluded: excluded.contains(&i),
                }
            })
            .collect();
        DailyTable {
            channels: vec!["drybulb_c".into(), "solar_wm2".into()],
            rows,
        }
    }

    fn spec() -> FeatureSpec {
        FeatureSpec {
            weather_channels: vec!["drybulb_c".into(), "solar_wm2".into()],
            calendar: CalendarFeatures { day_of_week: true, month_cyclic: true, weekend: true },
            lookback_days: 3,
        }
    }

    #[test]
    fn january_month_encoding() {
        let (s, c) = month_encoding("2020-01-15".parse().unwrap());
        assert_eq!((s, c), (0.0, 1.0));
    }

    #[test]
    fn column_layout_and_passthrough() {
        let fm = build_features(&table(3, &[]), &spec()).unwrap();
        assert_eq!(
            fm.feature_names,
            vec![
                "drybulb_c", "solar_wm2", "dow_mon", "dow_tue", "dow_wed", "dow_thu", "dow_fri",
                "dow_sat", "dow_sun", "month_sin", "month_cos", "weekend"
            ]
        );
        let monday = fm.x.row(0);
        assert_eq!(monday[0], 21.5);
        assert_eq!(&monday[2..9], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(monday[11], 0.0);
        assert_eq!(fm.x.cols(), fm.feature_names.len());
    }

    #[test]
    fn unknown_channel() {
        let mut s = spec();
        s.weather_channels.push("rh_pct".into());
        assert!(matches!(
            build_features(&table(3, &[]), &s),
            Err(Error::UnknownFeature(c)) if c == "rh_pct"
        ));
    }

    #[test]
    fn scaler_population_std() {
        let mut fm = build_features(&table(3, &[]), &spec()).unwrap();
        for (i, v) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            fm.x.set(i, 0, v);
        }
        let scaler = fit_scaler(&fm, &[true; 3]).unwrap();
        let scaled = apply_scaler(&fm, &scaler).unwrap();
        let col = scaled.x.column(0);
        // σ = √(2/3)
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in col.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        // Constant solar column: std 0 recorded, treated as 1.
        assert_eq!(scaler.std[1], 0.0);
        assert_eq!(scaled.x.column(1), vec![0.0; 3]);
        // Indicator columns untouched.
        assert_eq!(scaled.x.column(2), fm.x.column(2));
    }

    #[test]
    fn scaler_round_trip() {
        let fm = build_features(&table(20, &[]), &spec()).unwrap();
        let scaler = fit_scaler(&fm, &[true; 20]).unwrap();
        let mut scaled = apply_scaler(&fm, &scaler).unwrap();
        for i in 0..scaled.x.rows() {
            scaler.inverse_row(scaled.x.row_mut(i));
        }
        for (a, b) in scaled.x.as_slice().iter().zip(fm.x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mask_rejected() {
        let fm = build_features(&table(3, &[]), &spec()).unwrap();
        assert!(fit_scaler(&fm, &[false; 3]).is_err());
    }

    #[test]
    fn sequence_counts() {
        let fm = build_features(&table(10, &[]), &spec()).unwrap();
        assert_eq!(make_sequences(&fm, 7).unwrap().len(), 4);
        let fm = build_features(&table(7, &[]), &spec()).unwrap();
        assert_eq!(make_sequences(&fm, 7).unwrap().len(), 1);
        assert!(matches!(
            make_sequences(&fm, 8),
            Err(Error::InsufficientHistory { rows: 7, lookback: 8 })
        ));
    }

    #[test]
    fn windows_spanning_excluded_date_dropped() {
        let fm = build_features(&table(10, &[5]), &spec()).unwrap();
        assert_eq!(fm.len(), 9);
        let seqs = make_sequences(&fm, 3).unwrap();
        // Targets at positions 2,3,4 and 8,9 survive; 5,6,7 would cover the hole.
        let start: NaiveDate = "2019-01-07".parse().unwrap();
        let days: Vec<i64> = seqs.iter().map(|s| (s.target_date - start).num_days()).collect();
        assert_eq!(days, vec![2, 3, 4, 8, 9]);
        for s in &seqs {
            assert_eq!(s.window.rows(), 3);
        }
    }
}
