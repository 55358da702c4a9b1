//! Synthetic weather and energy with a planted, exactly known disruption.
//!
//! Weather comes from seasonal sinusoids plus seeded day-to-day anomalies
//! and a diurnal cycle, sampled at the configured cadence. Daily energy is
//!
//! ```text
//! w[dow] · (base · ((1 − s) + s · occ) + k_T · max(0, T − T_bal) + k_S · S) + ε
//! ```
//!
//! where `T` and `S` are the daily means of the emitted temperature and
//! irradiance samples, `s` is the occupant share, `occ` is 1 before the study
//! range and `1 − drop` inside it, and `ε` is daily Gaussian noise. Each day's
//! energy is split evenly across its samples, so summing a day recovers it.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, TimeZone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsdata::{canonical_unit, DateRange, RawSeries, Sample, ENERGY_CHANNEL, WEATHER_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherParams {
    pub temp_mean_c: f64,
    pub temp_seasonal_amplitude_c: f64,
    pub temp_diurnal_amplitude_c: f64,
    /// Standard deviation of the daily temperature anomaly.
    pub temp_anomaly_sd_c: f64,
    pub solar_peak_mean_wm2: f64,
    pub solar_peak_seasonal_amplitude_wm2: f64,
    pub rh_mean_pct: f64,
    pub wind_mean_ms: f64,
    pub wind_sd_ms: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            temp_mean_c: 20.0,
            temp_seasonal_amplitude_c: 10.0,
            temp_diurnal_amplitude_c: 5.0,
            temp_anomaly_sd_c: 2.5,
            solar_peak_mean_wm2: 650.0,
            solar_peak_seasonal_amplitude_wm2: 250.0,
            rh_mean_pct: 65.0,
            wind_mean_ms: 4.0,
            wind_sd_ms: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Undisrupted history.
    pub pre: DateRange,
    /// Disrupted range; days between `pre` and `study` are generated
    /// undisrupted.
    pub study: DateRange,
    pub base_load_kwh: f64,
    /// kWh per °C of daily mean temperature above the balance point.
    pub temp_coeff: f64,
    pub balance_temp_c: f64,
    /// kWh per W/m² of daily mean irradiance.
    pub solar_coeff: f64,
    /// Multipliers Monday through Sunday.
    pub weekly_pattern: [f64; 7],
    pub occupancy_drop: f64,
    pub occupant_share: f64,
    /// Standard deviation of the daily energy noise, kWh.
    pub noise_sigma: f64,
    /// When set, `occupancy_drop` is solved so the noiseless study-range
    /// reduction equals this fraction.
    pub target_reduction: Option<f64>,
    pub utc_offset_hours: i32,
    pub interval_seconds: u32,
    pub weather: WeatherParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        SynthConfig {
            seed: 42,
            pre: DateRange::new(d(2017, 1, 1), d(2019, 12, 31)),
            study: DateRange::new(d(2020, 3, 12), d(2020, 7, 31)),
            base_load_kwh: 1000.0,
            temp_coeff: 25.0,
            balance_temp_c: 18.0,
            solar_coeff: 0.4,
            weekly_pattern: [1.0, 1.0, 1.0, 1.0, 1.0, 0.85, 0.8],
            occupancy_drop: 0.0,
            occupant_share: 0.6,
            noise_sigma: 30.0,
            target_reduction: None,
            utc_offset_hours: -6,
            interval_seconds: 120,
            weather: WeatherParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !self.pre.is_valid() || !self.study.is_valid() {
            return fail("date ranges must end on or after their start");
        }
        if self.pre.end >= self.study.start {
            return fail("pre range must precede the study range");
        }
        let finite = [
            self.base_load_kwh,
            self.temp_coeff,
            self.balance_temp_c,
            self.solar_coeff,
            self.noise_sigma,
            self.weather.temp_mean_c,
            self.weather.temp_seasonal_amplitude_c,
            self.weather.temp_diurnal_amplitude_c,
            self.weather.temp_anomaly_sd_c,
            self.weather.solar_peak_mean_wm2,
            self.weather.solar_peak_seasonal_amplitude_wm2,
            self.weather.rh_mean_pct,
            self.weather.wind_mean_ms,
            self.weather.wind_sd_ms,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("coefficients must be finite");
        }
        if self.weekly_pattern.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return fail("weekly multipliers must be positive");
        }
        for (name, v) in [("occupancy_drop", self.occupancy_drop), ("occupant_share", self.occupant_share)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if let Some(t) = self.target_reduction {
            if !(0.0..1.0).contains(&t) {
                return fail("target_reduction must be in [0, 1)");
            }
        }
        if self.noise_sigma < 0.0 {
            return fail("noise_sigma must be non-negative");
        }
        if self.interval_seconds == 0 || 86_400 % self.interval_seconds != 0 {
            return fail("interval_seconds must divide a day");
        }
        if self.utc_offset().is_none() {
            return fail("utc_offset_hours out of range");
        }
        Ok(())
    }

    fn utc_offset(&self) -> Option<FixedOffset> {
        FixedOffset::east_opt(self.utc_offset_hours * 3600)
    }
}

/// Per-day drivers of the latent load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentDay {
    pub date: NaiveDate,
    pub mean_temp_c: f64,
    pub mean_solar_wm2: f64,
    pub weekly_multiplier: f64,
    pub in_study: bool,
    /// Standard-normal draw scaled by `noise_sigma` for this day.
    pub noise_kwh: f64,
}

impl LatentDay {
    /// Noiseless load at occupancy level `occ`.
    pub fn load(&self, cfg: &SynthConfig, occ: f64) -> f64 {
        let s = cfg.occupant_share;
        self.weekly_multiplier
            * (cfg.base_load_kwh * ((1.0 - s) + s * occ)
                + cfg.temp_coeff * (self.mean_temp_c - cfg.balance_temp_c).max(0.0)
                + cfg.solar_coeff * self.mean_solar_wm2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub occupancy_drop: f64,
    pub occupant_share: f64,
    pub study: DateRange,
    pub study_days: usize,
    /// Noiseless undisrupted study-range energy.
    pub baseline_kwh: f64,
    /// Noiseless study-range energy avoided by the disruption.
    pub reduction_kwh: f64,
    pub reduction_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub energy: RawSeries,
    /// One series per weather channel, in the fixed channel order.
    pub weather: Vec<RawSeries>,
    pub latent: Vec<LatentDay>,
    /// Daily energy actually emitted, noise included.
    pub daily_energy: Vec<f64>,
    pub ground_truth: GroundTruth,
}

fn day_index(date: NaiveDate) -> f64 {
    f64::from(date.ordinal0())
}

/// Smooth daily anomalies: anchors at noon joined by cosine interpolation.
fn anomaly_at(anchors: &[f64], day: usize, hour: f64) -> f64 {
    let pos = day as f64 + (hour - 12.0) / 24.0;
    let i = pos.floor();
    let frac = pos - i;
    let at = |k: f64| anchors[(k.max(0.0) as usize).min(anchors.len() - 1)];
    let w = (1.0 - (PI * frac).cos()) / 2.0;
    at(i) * (1.0 - w) + at(i + 1.0) * w
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Weather {
    series: Vec<Vec<f64>>,
    latent: Vec<LatentDay>,
}

fn simulate_weather(cfg: &SynthConfig) -> Weather {
    let w = &cfg.weather;
    let start = cfg.pre.start;
    let n_days = DateRange::new(start, cfg.study.end).len_days();
    let per_day = (86_400 / cfg.interval_seconds) as usize;

    let mut temp_rng = stream(cfg.seed, 1);
    let mut sky_rng = stream(cfg.seed, 2);
    let mut humid_rng = stream(cfg.seed, 3);
    let mut wind_rng = stream(cfg.seed, 4);
    let mut noise_rng = stream(cfg.seed, 5);

    let mut temp_anom = Vec::with_capacity(n_days);
    let mut prev = 0.0;
    for _ in 0..n_days {
        let z: f64 = temp_rng.sample(StandardNormal);
        prev = 0.7 * prev + (1.0f64 - 0.49).sqrt() * w.temp_anomaly_sd_c * z;
        temp_anom.push(prev);
    }
    let clearness: Vec<f64> = (0..n_days).map(|_| sky_rng.random_range(0.35..1.0)).collect();
    let rh_anom: Vec<f64> = (0..n_days).map(|_| 8.0 * humid_rng.sample::<f64, _>(StandardNormal)).collect();
    let wind_anom: Vec<f64> = (0..n_days).map(|_| w.wind_sd_ms * wind_rng.sample::<f64, _>(StandardNormal)).collect();
    let wind_dir: Vec<f64> = (0..n_days).map(|_| wind_rng.random_range(0.0..360.0)).collect();

    let mut series = vec![Vec::with_capacity(n_days * per_day); WEATHER_CHANNELS.len()];
    let mut latent = Vec::with_capacity(n_days);
    for day in 0..n_days {
        let date = start + Duration::days(day as i64);
        let season = (2.0 * PI * (day_index(date) - 15.0) / 365.25).cos();
        let t_season = w.temp_mean_c - w.temp_seasonal_amplitude_c * season;
        let solar_peak = (w.solar_peak_mean_wm2 - w.solar_peak_seasonal_amplitude_wm2 * season).max(0.0);
        let (mut t_sum, mut s_sum) = (0.0, 0.0);
        for k in 0..per_day {
            let hour = (k as u64 * u64::from(cfg.interval_seconds)) as f64 / 3600.0;
            let anomaly = anomaly_at(&temp_anom, day, hour);
            let temp = t_season + anomaly + w.temp_diurnal_amplitude_c * (2.0 * PI * (hour - 9.0) / 24.0).sin();
            let sky = anomaly_at(&clearness, day, hour);
            let solar = solar_peak * sky * (PI * (hour - 6.0) / 12.0).sin().max(0.0);
            let rh = (w.rh_mean_pct - 2.5 * (temp - t_season) + anomaly_at(&rh_anom, day, hour)).clamp(5.0, 100.0);
            let gamma = (rh / 100.0).ln() + 17.62 * temp / (243.12 + temp);
            let dewpoint = 243.12 * gamma / (17.62 - gamma);
            let wind = (w.wind_mean_ms + anomaly_at(&wind_anom, day, hour)
                + 0.8 * (2.0 * PI * (hour - 14.0) / 24.0).sin())
            .max(0.0);
            let dir = (anomaly_at(&wind_dir, day, hour) + 15.0 * (2.0 * PI * hour / 24.0).sin()).rem_euclid(360.0);
            for (ch, v) in [temp, solar, rh, dewpoint, wind, dir].into_iter().enumerate() {
                series[ch].push(v);
            }
            t_sum += temp;
            s_sum += solar;
        }
        let z: f64 = noise_rng.sample(StandardNormal);
        latent.push(LatentDay {
            date,
            mean_temp_c: t_sum / per_day as f64,
            mean_solar_wm2: s_sum / per_day as f64,
            weekly_multiplier: cfg.weekly_pattern[date.weekday().num_days_from_monday() as usize],
            in_study: cfg.study.contains(date),
            noise_kwh: cfg.noise_sigma * z,
        });
    }
    Weather { series, latent }
}

/// Closed-form study-range reduction for a given drop.
fn analytic_truth(cfg: &SynthConfig, latent: &[LatentDay], drop: f64) -> GroundTruth {
    let study: Vec<&LatentDay> = latent.iter().filter(|d| d.in_study).collect();
    let baseline_kwh: f64 = study.iter().map(|d| d.load(cfg, 1.0)).sum();
    let multiplier_sum: f64 = study.iter().map(|d| d.weekly_multiplier).sum();
    let reduction_kwh = drop * cfg.occupant_share * cfg.base_load_kwh * multiplier_sum;
    GroundTruth {
        seed: cfg.seed,
        occupancy_drop: drop,
        occupant_share: cfg.occupant_share,
        study: cfg.study,
        study_days: study.len(),
        baseline_kwh,
        reduction_kwh,
        reduction_fraction: if baseline_kwh > 0.0 { reduction_kwh / baseline_kwh } else { 0.0 },
    }
}

/// The occupancy drop whose noiseless reduction fraction equals `target`.
pub fn drop_for_target_fraction(cfg: &SynthConfig, target: f64) -> Result<f64> {
    cfg.validate()?;
    let weather = simulate_weather(cfg);
    solve_drop(cfg, &weather.latent, target)
}

fn solve_drop(cfg: &SynthConfig, latent: &[LatentDay], target: f64) -> Result<f64> {
    let unit = analytic_truth(cfg, latent, 1.0);
    if unit.reduction_fraction <= 0.0 {
        return Err(Error::Config("occupant share is zero, no drop can reach the target".into()));
    }
    let drop = target / unit.reduction_fraction;
    if drop > 1.0 {
        return Err(Error::Config(format!(
            "target reduction {target} needs an occupancy drop of {drop:.3}, above 1"
        )));
    }
    Ok(drop)
}

/// Builds the dataset described by `cfg`. Identical configs give
/// bit-identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let offset = cfg.utc_offset().expect("validated offset");
    let Weather { series, latent } = simulate_weather(cfg);
    let drop = match cfg.target_reduction {
        Some(t) => solve_drop(cfg, &latent, t)?,
        None => cfg.occupancy_drop,
    };
    let per_day = (86_400 / cfg.interval_seconds) as usize;
    let daily_energy: Vec<f64> = latent
        .iter()
        .map(|d| d.load(cfg, if d.in_study { 1.0 - drop } else { 1.0 }) + d.noise_kwh)
        .collect();

    let t0 = offset
        .from_local_datetime(&cfg.pre.start.and_hms_opt(0, 0, 0).expect("midnight"))
        .single()
        .expect("fixed offsets are unambiguous");
    let step = i64::from(cfg.interval_seconds);
    let stamp = |k: usize| t0 + Duration::seconds(step * k as i64);
    let energy_points = daily_energy
        .iter()
        .enumerate()
        .flat_map(|(day, &e)| {
            let v = e / per_day as f64;
            (0..per_day).map(move |k| (day * per_day + k, v))
        })
        .map(|(k, v)| Sample { timestamp: stamp(k), value: Some(v) })
        .collect();
    let energy = RawSeries::new(ENERGY_CHANNEL, "kWh", cfg.interval_seconds, energy_points);
    let weather = WEATHER_CHANNELS
        .iter()
        .zip(series)
        .map(|((name, unit), values)| {
            let points = values
                .into_iter()
                .enumerate()
                .map(|(k, v)| Sample { timestamp: stamp(k), value: Some(v) })
                .collect();
            RawSeries::new(name, unit, cfg.interval_seconds, points)
        })
        .collect();
    let ground_truth = analytic_truth(cfg, &latent, drop);
    Ok(SynthDataset { energy, weather, latent, daily_energy, ground_truth })
}

impl SynthDataset {
    /// Writes `<channel>.csv` for every channel plus `ground_truth.json`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        let mut written = Vec::new();
        for s in std::iter::once(&self.energy).chain(&self.weather) {
            debug_assert_eq!(canonical_unit(&s.channel), Some(s.unit.as_str()));
            let path = dir.join(format!("{}.csv", s.channel));
            std::fs::write(&path, s.to_csv()).map_err(|e| Error::io(path.display(), e))?;
            written.push(path);
        }
        let path = dir.join("ground_truth.json");
        let json = serde_json::to_string_pretty(&self.ground_truth).expect("ground truth serializes");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(path.display(), e))?;
        written.push(path);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdata::{resample_daily, Aggregation};

    fn small() -> SynthConfig {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        SynthConfig {
            pre: DateRange::new(d(2019, 1, 1), d(2019, 2, 28)),
            study: DateRange::new(d(2019, 3, 5), d(2019, 3, 20)),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn no_drop_means_no_reduction() {
        let cfg = SynthConfig { noise_sigma: 0.0, ..small() };
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.ground_truth.reduction_kwh, 0.0);
        assert_eq!(ds.ground_truth.reduction_fraction, 0.0);
    }

    #[test]
    fn full_occupant_share_halves() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            occupant_share: 1.0,
            occupancy_drop: 0.5,
            temp_coeff: 0.0,
            solar_coeff: 0.0,
            weekly_pattern: [1.0; 7],
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        for (d, e) in ds.latent.iter().zip(&ds.daily_energy) {
            let expect = if d.in_study { 500.0 } else { 1000.0 };
            assert_eq!(*e, expect);
        }
        assert_eq!(ds.ground_truth.reduction_fraction, 0.5);
    }

    #[test]
    fn target_fraction_is_hit() {
        let cfg = SynthConfig { target_reduction: Some(0.4), ..small() };
        let ds = generate(&cfg).unwrap();
        assert!((ds.ground_truth.reduction_fraction - 0.4).abs() < 1e-12);
        let d = drop_for_target_fraction(&small(), 0.4).unwrap();
        assert_eq!(d, ds.ground_truth.occupancy_drop);
    }

    #[test]
    fn unreachable_target_rejected() {
        let cfg = SynthConfig { target_reduction: Some(0.95), ..small() };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn daily_resample_inverts_generation() {
        let ds = generate(&small()).unwrap();
        let daily = resample_daily(&ds.energy, Aggregation::Sum);
        assert_eq!(daily.days.len(), ds.daily_energy.len());
        for (d, e) in daily.days.iter().zip(&ds.daily_energy) {
            let v = d.value.unwrap();
            assert!((v - e).abs() <= 1e-9 * e.abs());
        }
        let t = resample_daily(&ds.weather[0], Aggregation::Mean);
        for (d, l) in t.days.iter().zip(&ds.latent) {
            assert!((d.value.unwrap() - l.mean_temp_c).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.energy, b.energy);
        assert_eq!(a.weather, b.weather);
        let c = generate(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.weather[0], c.weather[0]);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = small();
        cfg.study.start = cfg.pre.end;
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig { weekly_pattern: [1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0], ..small() };
        assert!(generate(&cfg).is_err());
    }
}
