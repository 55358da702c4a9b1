#![allow(dead_code)]

use normbase::normalize::{PeriodSpec, PipelineConfig};
use normbase::synth::{generate, SynthConfig, SynthDataset};
use normbase::tsdata::{align, fill_gaps, resample_daily, Aggregation, DailyTable, DateRange, GapPolicy};
use chrono::NaiveDate;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Runs a synthetic dataset through the same gap-fill, resample, and
/// alignment steps the command line uses.
pub fn daily_table(ds: &SynthDataset, range: DateRange) -> DailyTable {
    let daily = |s| {
        let (filled, _) = fill_gaps(s, GapPolicy::default()).unwrap();
        resample_daily(&filled, Aggregation::for_channel(&filled.channel))
    };
    let energy = daily(&ds.energy);
    let weather: Vec<_> = ds.weather.iter().map(daily).collect();
    align(&energy, &weather, range).unwrap()
}

pub fn recovery_config(target: f64) -> SynthConfig {
    SynthConfig { target_reduction: Some(target), noise_sigma: 30.0, base_load_kwh: 1000.0, ..SynthConfig::default() }
}

pub fn pipeline_config() -> PipelineConfig {
    PipelineConfig {
        periods: PeriodSpec {
            train: DateRange::new(date(2017, 1, 1), date(2018, 12, 31)),
            test: DateRange::new(date(2019, 1, 1), date(2019, 12, 31)),
            study: DateRange::new(date(2020, 3, 12), date(2020, 7, 31)),
        },
        ..PipelineConfig::default()
    }
}

pub fn synthetic_run(target: f64) -> (SynthDataset, DailyTable) {
    let cfg = recovery_config(target);
    let ds = generate(&cfg).unwrap();
    let table = daily_table(&ds, DateRange::new(cfg.pre.start, cfg.study.end));
    (ds, table)
}
