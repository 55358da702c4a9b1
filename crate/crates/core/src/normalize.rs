//! Baseline training, validation against ASHRAE Guideline 14, and
//! counterfactual estimation over a disrupted study period.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_scaler, build_features, fit_scaler, FeatureMatrix, FeatureSpec, Scaler, TargetScaler};
use crate::gb::{boost_fit, boost_predict, BoostConfig, Ensemble, EnsembleKind};
use crate::matrix::Matrix;
use crate::metrics::{kpi_report, KpiConfig, KpiReport, YearMonth};
use crate::nn::{lstm_forward, lstm_train, mlp_forward, mlp_train, Activation, LstmParams, MlpParams, TrainConfig};
use crate::tsdata::{DailyTable, DateRange};

pub const MIN_TRAIN_ROWS: usize = 100;
pub const MIN_TEST_ROWS: usize = 30;
pub const MIN_STUDY_ROWS: usize = 1;

/// Training, held-out test, and study date ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    pub train: DateRange,
    pub test: DateRange,
    pub study: DateRange,
}

impl PeriodSpec {
    /// Ranges must be non-empty and strictly ordered train, test, study.
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("test", self.test), ("study", self.study)] {
            if !r.is_valid() {
                return Err(Error::Config(format!("{name} range ends before it starts")));
            }
        }
        if self.train.end >= self.test.start || self.test.end >= self.study.start {
            return Err(Error::Config("periods must be disjoint and ordered train < test < study".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ann,
    Lstm,
    Xgboost,
    Lightgbm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ann, ModelKind::Lstm, ModelKind::Xgboost, ModelKind::Lightgbm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ann => "ann",
            ModelKind::Lstm => "lstm",
            ModelKind::Xgboost => "xgboost",
            ModelKind::Lightgbm => "lightgbm",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnConfig {
    pub enabled: bool,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig { enabled: true, hidden: vec![32], activation: Activation::Relu, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    pub enabled: bool,
    pub hidden_size: usize,
    pub train: TrainConfig,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            enabled: true,
            hidden_size: 16,
            train: TrainConfig { epochs: 200, early_stop_patience: 30, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostModelConfig {
    pub enabled: bool,
    pub boost: BoostConfig,
}

impl Default for BoostModelConfig {
    fn default() -> Self {
        BoostModelConfig { enabled: true, boost: BoostConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfigs {
    pub ann: AnnConfig,
    pub lstm: LstmConfig,
    pub xgboost: BoostModelConfig,
    pub lightgbm: BoostModelConfig,
}

impl ModelConfigs {
    pub fn enabled(&self) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|k| match k {
                ModelKind::Ann => self.ann.enabled,
                ModelKind::Lstm => self.lstm.enabled,
                ModelKind::Xgboost => self.xgboost.enabled,
                ModelKind::Lightgbm => self.lightgbm.enabled,
            })
            .collect()
    }

    /// Sets every model's seed.
    pub fn reseed(&mut self, seed: u64) {
        self.ann.train.seed = seed;
        self.lstm.train.seed = seed;
        self.xgboost.boost.seed = seed;
        self.lightgbm.boost.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.ann.train.validate()?;
        self.lstm.train.validate()?;
        self.xgboost.boost.validate()?;
        self.lightgbm.boost.validate()?;
        if self.lstm.hidden_size == 0 || self.ann.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.enabled().is_empty() {
            return Err(Error::Config("no model is enabled".into()));
        }
        Ok(())
    }
}

/// Which models the ensemble averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSelection {
    /// Every model that passes the gate.
    #[default]
    GatePassing,
    /// The `k` gate-passing models with the lowest daily CV(RMSE).
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub periods: PeriodSpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub models: ModelConfigs,
    #[serde(default)]
    pub kpi: KpiConfig,
    #[serde(default)]
    pub ensemble: EnsembleSelection,
    /// Year of actual consumption the reduction is expressed against;
    /// defaults to the test range.
    #[serde(default)]
    pub annual_reference: Option<DateRange>,
}

impl Default for PeriodSpec {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        PeriodSpec {
            train: DateRange::new(d(2017, 1, 1), d(2018, 12, 31)),
            test: DateRange::new(d(2019, 1, 1), d(2019, 12, 31)),
            study: DateRange::new(d(2020, 3, 12), d(2020, 7, 31)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelBody {
    Mlp(MlpParams),
    Lstm(LstmParams),
    Boost(Ensemble),
}

/// A fitted model together with the scaling it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    pub lookback_days: usize,
    pub scaler: Scaler,
    pub target: TargetScaler,
    pub body: ModelBody,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model document: {e}")))
    }

    /// Predicted kWh for rows `idx` of an unscaled feature matrix.
    ///
    /// Recurrent models yield `None` for rows without a full window of
    /// consecutive preceding days.
    pub fn predict(&self, fm: &FeatureMatrix, idx: &[usize]) -> Result<Vec<Option<f64>>> {
        if fm.feature_names != self.feature_names {
            return Err(Error::Dimension("feature columns differ from the trained model".into()));
        }
        let scaled = apply_scaler(fm, &self.scaler)?;
        let raw: Vec<Option<f64>> = match &self.body {
            ModelBody::Mlp(p) => idx
                .iter()
                .map(|&i| mlp_forward(p, scaled.x.row(i)).map(Some))
                .collect::<Result<_>>()?,
            ModelBody::Lstm(p) => idx
                .iter()
                .map(|&i| match window(&scaled, i, self.lookback_days) {
                    Some(w) => lstm_forward(p, &w).map(Some),
                    None => Ok(None),
                })
                .collect::<Result<_>>()?,
            ModelBody::Boost(e) => boost_predict(e, &scaled.x.select_rows(idx))?.into_iter().map(Some).collect(),
        };
        Ok(raw.into_iter().map(|v| v.map(|s| self.target.unscale(s))).collect())
    }
}

/// Rows `t−L+1..=t` when they are consecutive calendar days.
fn window(fm: &FeatureMatrix, t: usize, lookback: usize) -> Option<Matrix> {
    let first = (t + 1).checked_sub(lookback)?;
    if (fm.dates[t] - fm.dates[first]).num_days() != lookback as i64 - 1 {
        return None;
    }
    Some(fm.x.select_rows(&(first..=t).collect::<Vec<_>>()))
}

fn train_model(kind: ModelKind, fm: &FeatureMatrix, train_idx: &[usize], cfg: &PipelineConfig) -> Result<TrainedModel> {
    let mask: Vec<bool> = {
        let mut m = vec![false; fm.len()];
        for &i in train_idx {
            m[i] = true;
        }
        m
    };
    let scaler = fit_scaler(fm, &mask)?;
    let scaled = apply_scaler(fm, &scaler)?;
    let y_raw: Vec<f64> = train_idx.iter().map(|&i| fm.y[i]).collect();
    let target = TargetScaler::fit(&y_raw)?;
    let models = &cfg.models;
    let lookback = cfg.features.lookback_days;

    let body = match kind {
        ModelKind::Ann => {
            let x = scaled.x.select_rows(train_idx);
            let y: Vec<f64> = y_raw.iter().map(|&v| target.scale(v)).collect();
            let (p, _) = mlp_train(&x, &y, &models.ann.train, &models.ann.hidden, models.ann.activation)?;
            ModelBody::Mlp(p)
        }
        ModelKind::Lstm => {
            let (mut seqs, mut ys) = (Vec::new(), Vec::new());
            for &i in train_idx {
                if let Some(w) = window(&scaled, i, lookback) {
                    seqs.push(w);
                    ys.push(target.scale(fm.y[i]));
                }
            }
            let (p, _) = lstm_train(&seqs, &ys, &models.lstm.train, models.lstm.hidden_size)?;
            ModelBody::Lstm(p)
        }
        ModelKind::Xgboost | ModelKind::Lightgbm => {
            let (bcfg, ekind) = if kind == ModelKind::Xgboost {
                (&models.xgboost.boost, EnsembleKind::Exact)
            } else {
                (&models.lightgbm.boost, EnsembleKind::Histogram)
            };
            let x = scaled.x.select_rows(train_idx);
            let y: Vec<f64> = y_raw.iter().map(|&v| target.scale(v)).collect();
            let (e, _) = boost_fit(&x, &y, bcfg, ekind)?;
            ModelBody::Boost(e)
        }
    };
    Ok(TrainedModel {
        kind,
        feature_names: fm.feature_names.clone(),
        lookback_days: lookback,
        scaler,
        target,
        body,
    })
}

/// `actual / predicted` per date; `None` where the prediction is not positive.
pub fn daily_load_ratio(actual: &[f64], predicted: &[f64]) -> Result<Vec<Option<f64>>> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    Ok(actual.iter().zip(predicted).map(|(&a, &p)| (p > 0.0).then(|| a / p)).collect())
}

/// Running sums of a daily series.
pub fn cumulative(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Total avoided energy `Σ predicted − Σ actual` and its fraction of
/// `Σ predicted`.
///
/// The total is the difference of the final cumulative points, so it agrees
/// exactly with the cumulative curves in the report.
pub fn cumulative_reduction(actual: &[f64], predicted: &[f64]) -> Result<(f64, f64)> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cum_a = cumulative(actual);
    let cum_p = cumulative(predicted);
    let sum_p = *cum_p.last().unwrap();
    if sum_p <= 0.0 {
        return Err(Error::UndefinedMetric("reduction fraction with non-positive predicted total"));
    }
    let total = sum_p - cum_a.last().unwrap();
    Ok((total, total / sum_p))
}

/// Pointwise mean of the member series, clamped to the members' range.
pub fn ensemble_mean(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members.first().ok_or(Error::EmptyInput)?;
    if let Some(bad) = members.iter().find(|m| m.len() != first.len()) {
        return Err(Error::LengthMismatch { left: first.len(), right: bad.len() });
    }
    Ok((0..first.len())
        .map(|t| {
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for m in members {
                lo = lo.min(m[t]);
                hi = hi.max(m[t]);
                sum += m[t];
            }
            (sum / members.len() as f64).clamp(lo, hi)
        })
        .collect())
}

/// Reduction as a fraction of a reference year's consumption.
pub fn annual_share(reduction_kwh: f64, reference_kwh: f64) -> Result<f64> {
    if reference_kwh <= 0.0 || reference_kwh.is_nan() {
        return Err(Error::UndefinedMetric("annual share with non-positive reference consumption"));
    }
    Ok(reduction_kwh / reference_kwh)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub test: KpiReport,
    pub gate_pass: bool,
    pub in_ensemble: bool,
    pub study_predicted_kwh: f64,
    pub reduction_kwh: f64,
    pub reduction_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyDay {
    pub date: NaiveDate,
    pub actual_kwh: f64,
    pub predicted_kwh: BTreeMap<ModelKind, f64>,
    pub ensemble_kwh: Option<f64>,
    pub dlr: BTreeMap<ModelKind, Option<f64>>,
    pub ensemble_dlr: Option<f64>,
    pub cumulative_actual_kwh: f64,
    pub cumulative_predicted_kwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMonth {
    pub month: YearMonth,
    pub days: usize,
    pub actual_kwh: f64,
    pub ensemble_kwh: Option<f64>,
    pub reduction_kwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UndefinedRatio {
    pub date: NaiveDate,
    /// `None` for the ensemble.
    pub model: Option<ModelKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestDay {
    pub date: NaiveDate,
    pub actual_kwh: f64,
    pub predicted_kwh: BTreeMap<ModelKind, f64>,
}

/// Everything a normalization run produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub periods: PeriodSpec,
    pub feature_names: Vec<String>,
    pub rows: RowCounts,
    pub models: Vec<ModelSummary>,
    pub ensemble_selection: EnsembleSelection,
    pub ensemble_members: Vec<ModelKind>,
    pub baseline_valid: bool,
    pub total_reduction_kwh: Option<f64>,
    pub reduction_fraction: Option<f64>,
    pub reference_range: DateRange,
    pub reference_actual_kwh: f64,
    pub annual_share: Option<f64>,
    pub undefined_dlr: Vec<UndefinedRatio>,
    /// Usable study dates some model could not predict.
    pub skipped_study_dates: Vec<NaiveDate>,
    pub test_days: Vec<TestDay>,
    pub study_days: Vec<StudyDay>,
    pub study_months: Vec<StudyMonth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub train: usize,
    pub test: usize,
    pub study: usize,
}

/// A finished run: the report and the models behind it.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: NormalizationReport,
    pub models: Vec<TrainedModel>,
}

/// Like [`run_pipeline`], but also returns the trained models.
pub fn run_pipeline_with_models(table: &DailyTable, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.periods.validate()?;
    cfg.models.validate()?;
    let fm = build_features(table, &cfg.features)?;
    let pick = |r: &DateRange| -> Vec<usize> { (0..fm.len()).filter(|&i| r.contains(fm.dates[i])).collect() };
    let (train_idx, test_idx, study_idx) = (pick(&cfg.periods.train), pick(&cfg.periods.test), pick(&cfg.periods.study));
    for (name, n, min) in [
        ("train", train_idx.len(), MIN_TRAIN_ROWS),
        ("test", test_idx.len(), MIN_TEST_ROWS),
        ("study", study_idx.len(), MIN_STUDY_ROWS),
    ] {
        if n < min {
            return Err(Error::InsufficientData(format!("{name} period has {n} usable days, needs {min}")));
        }
    }
    let rows = RowCounts { train: train_idx.len(), test: test_idx.len(), study: study_idx.len() };

    let kinds = cfg.models.enabled();
    let trained: Vec<TrainedModel> = kinds
        .par_iter()
        .map(|&k| train_model(k, &fm, &train_idx, cfg))
        .collect::<Result<_>>()?;

    // Dates every model can predict.
    type Covered = (Vec<usize>, Vec<Vec<f64>>, Vec<usize>);
    let covered = |idx: &[usize]| -> Result<Covered> {
        let preds: Vec<Vec<Option<f64>>> = trained.iter().map(|m| m.predict(&fm, idx)).collect::<Result<_>>()?;
        let mut keep = Vec::new();
        let mut skipped = Vec::new();
        for (pos, &i) in idx.iter().enumerate() {
            if preds.iter().all(|p| p[pos].is_some()) {
                keep.push(pos);
            } else {
                skipped.push(i);
            }
        }
        let series = preds
            .iter()
            .map(|p| keep.iter().map(|&pos| p[pos].unwrap()).collect())
            .collect();
        Ok((keep.iter().map(|&pos| idx[pos]).collect(), series, skipped))
    };

    let (test_rows, test_preds, _) = covered(&test_idx)?;
    if test_rows.len() < MIN_TEST_ROWS {
        return Err(Error::InsufficientData(format!(
            "only {} test days have full model history, needs {MIN_TEST_ROWS}",
            test_rows.len()
        )));
    }
    let test_dates: Vec<NaiveDate> = test_rows.iter().map(|&i| fm.dates[i]).collect();
    let test_actual: Vec<f64> = test_rows.iter().map(|&i| fm.y[i]).collect();
    let kpis: Vec<KpiReport> = test_preds
        .iter()
        .map(|p| kpi_report(&test_dates, &test_actual, p, &cfg.kpi))
        .collect::<Result<_>>()?;

    let (study_rows, study_preds, skipped) = covered(&study_idx)?;
    if study_rows.is_empty() {
        return Err(Error::InsufficientData("no study day has full model history".into()));
    }
    let study_dates: Vec<NaiveDate> = study_rows.iter().map(|&i| fm.dates[i]).collect();
    let study_actual: Vec<f64> = study_rows.iter().map(|&i| fm.y[i]).collect();

    let mut passing: Vec<usize> = (0..kinds.len()).filter(|&m| kpis[m].gate.pass).collect();
    if let EnsembleSelection::TopK(k) = cfg.ensemble {
        passing.sort_by(|&a, &b| kpis[a].daily.cv_rmse.total_cmp(&kpis[b].daily.cv_rmse).then(a.cmp(&b)));
        passing.truncate(k);
        passing.sort_unstable();
    }
    let members = passing;
    let ensemble: Option<Vec<f64>> = if members.is_empty() {
        None
    } else {
        let refs: Vec<&[f64]> = members.iter().map(|&m| study_preds[m].as_slice()).collect();
        Some(ensemble_mean(&refs)?)
    };

    let mut undefined_dlr = Vec::new();
    let model_dlr: Vec<Vec<Option<f64>>> = study_preds
        .iter()
        .map(|p| daily_load_ratio(&study_actual, p))
        .collect::<Result<_>>()?;
    let ens_dlr = ensemble.as_ref().map(|e| daily_load_ratio(&study_actual, e)).transpose()?;
    for (t, &date) in study_dates.iter().enumerate() {
        for (m, dlr) in model_dlr.iter().enumerate() {
            if dlr[t].is_none() {
                undefined_dlr.push(UndefinedRatio { date, model: Some(kinds[m]) });
            }
        }
        if ens_dlr.as_ref().is_some_and(|d| d[t].is_none()) {
            undefined_dlr.push(UndefinedRatio { date, model: None });
        }
    }

    let cum_actual = cumulative(&study_actual);
    let cum_pred = ensemble.as_deref().map(cumulative);
    let study_days = (0..study_dates.len())
        .map(|t| StudyDay {
            date: study_dates[t],
            actual_kwh: study_actual[t],
            predicted_kwh: kinds.iter().zip(&study_preds).map(|(&k, p)| (k, p[t])).collect(),
            ensemble_kwh: ensemble.as_ref().map(|e| e[t]),
            dlr: kinds.iter().zip(&model_dlr).map(|(&k, d)| (k, d[t])).collect(),
            ensemble_dlr: ens_dlr.as_ref().and_then(|d| d[t]),
            cumulative_actual_kwh: cum_actual[t],
            cumulative_predicted_kwh: cum_pred.as_ref().map(|c| c[t]),
        })
        .collect();

    let mut study_months: Vec<StudyMonth> = Vec::new();
    for (t, &date) in study_dates.iter().enumerate() {
        let ym = YearMonth::of(date);
        if study_months.last().is_none_or(|m| m.month != ym) {
            study_months.push(StudyMonth {
                month: ym,
                days: 0,
                actual_kwh: 0.0,
                ensemble_kwh: ensemble.as_ref().map(|_| 0.0),
                reduction_kwh: None,
            });
        }
        let m = study_months.last_mut().unwrap();
        m.days += 1;
        m.actual_kwh += study_actual[t];
        if let (Some(sum), Some(e)) = (m.ensemble_kwh.as_mut(), ensemble.as_ref()) {
            *sum += e[t];
        }
    }
    for m in &mut study_months {
        m.reduction_kwh = m.ensemble_kwh.map(|e| e - m.actual_kwh);
    }

    let models: Vec<ModelSummary> = kinds
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let (reduction_kwh, reduction_fraction) = match cumulative_reduction(&study_actual, &study_preds[m]) {
                Ok((t, f)) => (t, Some(f)),
                Err(_) => (study_preds[m].iter().sum::<f64>() - cum_actual.last().unwrap(), None),
            };
            ModelSummary {
                model: k,
                test: kpis[m].clone(),
                gate_pass: kpis[m].gate.pass,
                in_ensemble: members.contains(&m),
                study_predicted_kwh: *cumulative(&study_preds[m]).last().unwrap(),
                reduction_kwh,
                reduction_fraction,
            }
        })
        .collect();

    let reduction = ensemble.as_ref().map(|e| cumulative_reduction(&study_actual, e)).transpose().ok().flatten();
    let reference_range = cfg.annual_reference.unwrap_or(cfg.periods.test);
    let reference_actual_kwh: f64 = table.usable_in(&reference_range).filter_map(|r| r.energy_kwh).sum();
    let annual = reduction.and_then(|(total, _)| annual_share(total, reference_actual_kwh).ok());

    let test_days = test_rows
        .iter()
        .enumerate()
        .map(|(t, &i)| TestDay {
            date: fm.dates[i],
            actual_kwh: fm.y[i],
            predicted_kwh: kinds.iter().zip(&test_preds).map(|(&k, p)| (k, p[t])).collect(),
        })
        .collect();

    let report = NormalizationReport {
        periods: cfg.periods,
        feature_names: fm.feature_names.clone(),
        rows,
        models,
        ensemble_selection: cfg.ensemble,
        ensemble_members: members.iter().map(|&m| kinds[m]).collect(),
        baseline_valid: !members.is_empty(),
        total_reduction_kwh: reduction.map(|r| r.0),
        reduction_fraction: reduction.map(|r| r.1),
        reference_range,
        reference_actual_kwh,
        annual_share: annual,
        undefined_dlr,
        skipped_study_dates: skipped.iter().map(|&i| fm.dates[i]).collect(),
        test_days,
        study_days,
        study_months,
    };
    if members.is_empty() {
        return Err(Error::NoValidBaseline { report: Box::new(report) });
    }
    Ok(PipelineOutput { report, models: trained })
}

/// Trains every enabled model on the training range, scores it on the test
/// range, and estimates the counterfactual over the study range.
///
/// When no model passes the gate the error still carries the full report.
pub fn run_pipeline(table: &DailyTable, cfg: &PipelineConfig) -> Result<NormalizationReport> {
    run_pipeline_with_models(table, cfg).map(|o| o.report)
}

impl NormalizationReport {
    /// Deterministic pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
