//! Goodness-of-fit measures for baseline models and the ASHRAE Guideline 14
//! acceptance gate.
//!
//! Residuals are `actual − predicted` throughout, so NMBE is positive when a
//! model under-predicts.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monthly CV(RMSE) must stay below this fraction.
pub const MONTHLY_CV_RMSE_LIMIT: f64 = 0.15;
/// Daily CV(RMSE) must stay below this fraction.
pub const DAILY_CV_RMSE_LIMIT: f64 = 0.22;
/// Monthly |NMBE| must stay below this fraction.
pub const MONTHLY_NMBE_LIMIT: f64 = 0.05;
/// Daily |NMBE| must stay below this fraction.
pub const DAILY_NMBE_LIMIT: f64 = 0.07;

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite value in input"));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sum_sq_residuals(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum()
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    Ok((sum_sq_residuals(actual, predicted) / actual.len() as f64).sqrt())
}

/// RMSE divided by the mean of `actual`.
pub fn cv_rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    let r = rmse(actual, predicted)?;
    let m = mean(actual);
    if m == 0.0 {
        return Err(Error::UndefinedMetric("CV(RMSE) with zero mean"));
    }
    Ok(r / m)
}

pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let m = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - m) * (a - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant series"));
    }
    Ok(1.0 - sum_sq_residuals(actual, predicted) / ss_tot)
}

/// Σ(actual − predicted) / ((N − p) · mean(actual)).
pub fn nmbe(actual: &[f64], predicted: &[f64], p: usize) -> Result<f64> {
    check_pair(actual, predicted)?;
    let n = actual.len();
    if n <= p {
        return Err(Error::UndefinedMetric("NMBE needs more points than parameters"));
    }
    let m = mean(actual);
    if m == 0.0 {
        return Err(Error::UndefinedMetric("NMBE with zero mean"));
    }
    let bias: f64 = actual.iter().zip(predicted).map(|(a, p)| a - p).sum();
    Ok(bias / ((n - p) as f64 * m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KpiConfig {
    /// Parameter count subtracted from N in the NMBE denominator.
    pub p: usize,
}

impl Default for KpiConfig {
    fn default() -> Self {
        KpiConfig { p: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSet {
    pub rmse: f64,
    pub cv_rmse: f64,
    pub r2: f64,
    pub nmbe: f64,
    pub n: usize,
}

impl KpiSet {
    pub fn compute(actual: &[f64], predicted: &[f64], p: usize) -> Result<Self> {
        Ok(KpiSet {
            rmse: rmse(actual, predicted)?,
            cv_rmse: cv_rmse(actual, predicted)?,
            r2: r_squared(actual, predicted)?,
            nmbe: nmbe(actual, predicted, p)?,
            n: actual.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(date: NaiveDate) -> Self {
        YearMonth { year: date.year(), month: date.month() }
    }

    pub fn days_in_month(self) -> u32 {
        let next = if self.month == 12 {
            NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(self.year, self.month + 1, 1)
        };
        let first = NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month");
        (next.expect("valid month") - first).num_days() as u32
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialMonth {
    pub month: YearMonth,
    pub days_present: u32,
    pub days_in_month: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyRollup {
    pub months: Vec<YearMonth>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Months dropped because some of their days were absent.
    pub excluded: Vec<PartialMonth>,
}

/// Sums daily values into calendar months that have every day present.
///
/// `dates` must be strictly increasing.
pub fn monthly_rollup(dates: &[NaiveDate], actual: &[f64], predicted: &[f64]) -> Result<MonthlyRollup> {
    check_pair(actual, predicted)?;
    if dates.len() != actual.len() {
        return Err(Error::LengthMismatch { left: dates.len(), right: actual.len() });
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InsufficientData("dates must be strictly increasing".into()));
    }
    let mut out = MonthlyRollup {
        months: Vec::new(),
        actual: Vec::new(),
        predicted: Vec::new(),
        excluded: Vec::new(),
    };
    let mut i = 0;
    while i < dates.len() {
        let month = YearMonth::of(dates[i]);
        let mut j = i;
        let (mut a, mut p) = (0.0, 0.0);
        while j < dates.len() && YearMonth::of(dates[j]) == month {
            a += actual[j];
            p += predicted[j];
            j += 1;
        }
        let present = (j - i) as u32;
        let full = month.days_in_month();
        if present == full {
            out.months.push(month);
            out.actual.push(a);
            out.predicted.push(p);
        } else {
            out.excluded.push(PartialMonth { month, days_present: present, days_in_month: full });
        }
        i = j;
    }
    if out.months.is_empty() {
        return Err(Error::InsufficientData("no complete calendar month".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub monthly_cv_rmse: bool,
    pub daily_cv_rmse: bool,
    pub monthly_nmbe: bool,
    pub daily_nmbe: bool,
    pub pass: bool,
}

impl GateVerdict {
    /// Names of the criteria that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.monthly_cv_rmse {
            out.push("monthly_cv_rmse");
        }
        if !self.daily_cv_rmse {
            out.push("daily_cv_rmse");
        }
        if !self.monthly_nmbe {
            out.push("monthly_nmbe");
        }
        if !self.daily_nmbe {
            out.push("daily_nmbe");
        }
        out
    }
}

/// Strict-inequality check of all four ASHRAE Guideline 14 limits.
pub fn ashrae_gate(daily: &KpiSet, monthly: &KpiSet) -> GateVerdict {
    let monthly_cv_rmse = monthly.cv_rmse < MONTHLY_CV_RMSE_LIMIT;
    let daily_cv_rmse = daily.cv_rmse < DAILY_CV_RMSE_LIMIT;
    let monthly_nmbe = monthly.nmbe.abs() < MONTHLY_NMBE_LIMIT;
    let daily_nmbe = daily.nmbe.abs() < DAILY_NMBE_LIMIT;
    GateVerdict {
        monthly_cv_rmse,
        daily_cv_rmse,
        monthly_nmbe,
        daily_nmbe,
        pass: monthly_cv_rmse && daily_cv_rmse && monthly_nmbe && daily_nmbe,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub daily: KpiSet,
    pub monthly: KpiSet,
    pub months_excluded: Vec<PartialMonth>,
    pub gate: GateVerdict,
}

/// Daily and monthly KPIs for one model over dated predictions.
pub fn kpi_report(
    dates: &[NaiveDate],
    actual: &[f64],
    predicted: &[f64],
    cfg: &KpiConfig,
) -> Result<KpiReport> {
    let daily = KpiSet::compute(actual, predicted, cfg.p)?;
    let rollup = monthly_rollup(dates, actual, predicted)?;
    let monthly = KpiSet::compute(&rollup.actual, &rollup.predicted, cfg.p)?;
    Ok(KpiReport {
        daily,
        monthly,
        months_excluded: rollup.excluded,
        gate: ashrae_gate(&daily, &monthly),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f64; 3] = [100.0, 200.0, 300.0];
    const P: [f64; 3] = [110.0, 190.0, 310.0];

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn hand_fixture() {
        assert!(close(rmse(&A, &P).unwrap(), 10.0));
        assert!(close(cv_rmse(&A, &P).unwrap(), 0.05));
        assert!(close(r_squared(&A, &P).unwrap(), 0.985));
        assert!(close(nmbe(&A, &P, 1).unwrap(), -0.025));
    }

    #[test]
    fn perfect_prediction() {
        assert_eq!(rmse(&A, &A).unwrap(), 0.0);
        assert_eq!(cv_rmse(&A, &A).unwrap(), 0.0);
        assert_eq!(r_squared(&A, &A).unwrap(), 1.0);
        assert_eq!(nmbe(&A, &A, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_rmse() {
        assert_eq!(rmse(&[5.0], &[8.0]).unwrap(), 3.0);
    }

    #[test]
    fn mean_prediction_has_zero_r2() {
        assert_eq!(r_squared(&A, &[200.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn constant_bias_nmbe() {
        let c = 7.0;
        let shifted: Vec<f64> = A.iter().map(|a| a + c).collect();
        assert!(close(nmbe(&A, &shifted, 0).unwrap(), -c / 200.0));
    }

    #[test]
    fn error_paths() {
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(rmse(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(cv_rmse(&[-1.0, 1.0], &[0.0, 0.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(nmbe(&A, &P, 3), Err(Error::UndefinedMetric(_))));
    }

    fn kpi(cv: f64, nmbe: f64) -> KpiSet {
        KpiSet { rmse: 0.0, cv_rmse: cv, r2: 1.0, nmbe, n: 10 }
    }

    #[test]
    fn gate_cases() {
        assert!(ashrae_gate(&kpi(0.0, 0.0), &kpi(0.0, 0.0)).pass);
        let v = ashrae_gate(&kpi(0.25, 0.0), &kpi(0.0, 0.0));
        assert!(!v.pass);
        assert_eq!(v.failures(), vec!["daily_cv_rmse"]);
        let v = ashrae_gate(&kpi(0.0, 0.0), &kpi(0.0, -0.06));
        assert_eq!(v.failures(), vec!["monthly_nmbe"]);
    }

    #[test]
    fn january_rollup_and_partial_february() {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let mut dates: Vec<NaiveDate> = (0..59).map(|d| start + chrono::Duration::days(d)).collect();
        dates.remove(40);
        let actual = vec![10.0; dates.len()];
        let predicted = vec![9.0; dates.len()];
        let r = monthly_rollup(&dates, &actual, &predicted).unwrap();
        assert_eq!(r.months, vec![YearMonth { year: 2019, month: 1 }]);
        assert_eq!(r.actual, vec![310.0]);
        assert_eq!(r.predicted, vec![279.0]);
        assert_eq!(r.excluded[0].days_present, 27);
        assert_eq!(r.excluded[0].days_in_month, 28);
    }

    #[test]
    fn rollup_needs_a_complete_month() {
        let d = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        assert!(matches!(
            monthly_rollup(&[d], &[1.0], &[1.0]),
            Err(Error::InsufficientData(_))
        ));
    }
}
