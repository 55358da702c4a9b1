//! The `normbase` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{FixedOffset, NaiveDate};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_features, FeatureSpec};
use crate::metrics::{kpi_report, KpiConfig, KpiReport};
use crate::normalize::{
    run_pipeline_with_models, EnsembleSelection, ModelConfigs, NormalizationReport, PeriodSpec, PipelineConfig,
    TrainedModel,
};
use crate::plot::{line_chart, Line};
use crate::synth::{generate, SynthConfig};
use crate::tsdata::{
    align, canonical_unit, fill_gaps, parse_series, resample_daily, Aggregation, DailyTable, DateRange, GapPolicy,
    SeriesSchema, ENERGY_CHANNEL,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "NORMBASE_THREADS";

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 2,
    GateFailure = 3,
    Data = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn of(e: &Error) -> Exit {
        match e {
            Error::Config(_) | Error::Schema(_) | Error::UnknownFeature(_) | Error::Io { .. } => Exit::Usage,
            Error::NoValidBaseline { .. } => Exit::GateFailure,
            _ => Exit::Data,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "normbase", version, about = "Weather-normalized energy baselines and disruption estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train baselines, validate them, and estimate the study-period reduction.
    Normalize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for every model; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic dataset with a known disruption.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print daily and monthly KPIs with gate verdicts per model.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub energy: PathBuf,
    /// Weather channel name to CSV path.
    pub weather: BTreeMap<String, PathBuf>,
}

/// Configuration of `normbase normalize`. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    #[serde(default)]
    pub utc_offset_hours: i32,
    #[serde(default)]
    pub gap_policy: GapPolicy,
    pub periods: PeriodSpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub models: ModelConfigs,
    #[serde(default)]
    pub kpi: KpiConfig,
    #[serde(default)]
    pub ensemble: EnsembleSelection,
    #[serde(default)]
    pub annual_reference: Option<DateRange>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        let mut models = self.models.clone();
        if let Some(seed) = self.seed {
            models.reseed(seed);
        }
        PipelineConfig {
            periods: self.periods,
            features: self.features.clone(),
            models,
            kpi: self.kpi,
            ensemble: self.ensemble,
            annual_reference: self.annual_reference,
        }
    }

    fn validate(&self) -> Result<()> {
        self.periods.validate()?;
        self.features.validate()?;
        self.pipeline().models.validate()?;
        offset(self.utc_offset_hours)?;
        for ch in &self.features.weather_channels {
            if !self.inputs.weather.contains_key(ch) {
                return Err(Error::Config(format!("feature channel `{ch}` has no input file")));
            }
        }
        for ch in self.inputs.weather.keys() {
            if ch == ENERGY_CHANNEL || canonical_unit(ch).is_none() {
                return Err(Error::Config(format!("unknown weather channel `{ch}` in inputs.weather")));
            }
        }
        Ok(())
    }
}

/// Configuration of `normbase synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRunConfig {
    #[serde(default = "default_synth_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synth: SynthConfig,
}

fn default_synth_dir() -> PathBuf {
    PathBuf::from("synth")
}

/// Configuration of `normbase evaluate`: either a predictions table or a
/// run config, optionally with previously trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// CSV with `date,actual,<model>...` columns.
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    /// Run config whose test range is scored.
    #[serde(default)]
    pub run_config: Option<PathBuf>,
    /// Directory of `*.json` models; without it the run config's models are trained.
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    #[serde(default)]
    pub kpi: KpiConfig,
}

fn offset(hours: i32) -> Result<FixedOffset> {
    FixedOffset::east_opt(hours * 3600).ok_or_else(|| Error::Config(format!("utc_offset_hours {hours} out of range")))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads and strictly deserializes a JSON config, reporting line and column.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("{}:{}:{}: {}", path.display(), e.line(), e.column(), strip_position(&e)))
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

fn read_daily(path: &Path, channel: &str, utc: FixedOffset, policy: GapPolicy) -> Result<crate::tsdata::DailySeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let schema = SeriesSchema::standard(channel, utc)?;
    let raw = parse_series(&text, &schema).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })?;
    let (filled, _) = fill_gaps(&raw, policy)?;
    Ok(resample_daily(&filled, Aggregation::for_channel(channel)))
}

/// Loads, fills, resamples, and aligns every input named by `cfg`.
pub fn load_table(cfg: &RunConfig, base: &Path) -> Result<DailyTable> {
    let utc = offset(cfg.utc_offset_hours)?;
    let energy = read_daily(&resolve(base, &cfg.inputs.energy), ENERGY_CHANNEL, utc, cfg.gap_policy)?;
    let weather = cfg
        .inputs
        .weather
        .iter()
        .map(|(ch, p)| read_daily(&resolve(base, p), ch, utc, cfg.gap_policy))
        .collect::<Result<Vec<_>>>()?;
    align(&energy, &weather, DateRange::new(cfg.periods.train.start, cfg.periods.study.end))
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

fn with_pool<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match thread_pool()? {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display(), e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn daily_csv(report: &NormalizationReport) -> Result<String> {
    let kinds: Vec<_> = report.models.iter().map(|m| m.model).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string(), "actual_kwh".into()];
    header.extend(kinds.iter().map(|k| format!("{k}_kwh")));
    header.push("ensemble_kwh".into());
    header.extend(kinds.iter().map(|k| format!("{k}_dlr")));
    header.extend(["ensemble_dlr".into(), "cumulative_actual_kwh".into(), "cumulative_predicted_kwh".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for d in &report.study_days {
        let mut rec = vec![d.date.to_string(), d.actual_kwh.to_string()];
        rec.extend(kinds.iter().map(|k| d.predicted_kwh[k].to_string()));
        rec.push(fmt_opt(d.ensemble_kwh));
        rec.extend(kinds.iter().map(|k| fmt_opt(d.dlr[k])));
        rec.push(fmt_opt(d.ensemble_dlr));
        rec.push(d.cumulative_actual_kwh.to_string());
        rec.push(fmt_opt(d.cumulative_predicted_kwh));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(w)
}

fn monthly_csv(report: &NormalizationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["month", "days", "actual_kwh", "ensemble_kwh", "reduction_kwh"]).map_err(csv_err)?;
    for m in &report.study_months {
        w.write_record([
            m.month.to_string(),
            m.days.to_string(),
            m.actual_kwh.to_string(),
            fmt_opt(m.ensemble_kwh),
            fmt_opt(m.reduction_kwh),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::InsufficientData(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InsufficientData(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn plots(report: &NormalizationReport) -> Vec<(&'static str, String)> {
    let study_dates: Vec<NaiveDate> = report.study_days.iter().map(|d| d.date).collect();
    let cumulative = line_chart(
        "Cumulative consumption, study period",
        "kWh",
        &study_dates,
        &[
            Line {
                name: "actual",
                values: report.study_days.iter().map(|d| Some(d.cumulative_actual_kwh)).collect(),
            },
            Line { name: "predicted", values: report.study_days.iter().map(|d| d.cumulative_predicted_kwh).collect() },
        ],
    );

    let test_dates: Vec<NaiveDate> = report.test_days.iter().map(|d| d.date).collect();
    let mut test_lines =
        vec![Line { name: "actual", values: report.test_days.iter().map(|d| Some(d.actual_kwh)).collect() }];
    for m in &report.models {
        test_lines.push(Line {
            name: m.model.name(),
            values: report.test_days.iter().map(|d| Some(d.predicted_kwh[&m.model])).collect(),
        });
    }
    let overlay = line_chart("Test period: actual vs predicted", "kWh/day", &test_dates, &test_lines);

    let mut dlr_lines: Vec<Line> = report
        .models
        .iter()
        .map(|m| Line { name: m.model.name(), values: report.study_days.iter().map(|d| d.dlr[&m.model]).collect() })
        .collect();
    dlr_lines.push(Line { name: "ensemble", values: report.study_days.iter().map(|d| d.ensemble_dlr).collect() });
    let dlr = line_chart("Daily load ratio", "actual / predicted", &study_dates, &dlr_lines);

    vec![("cumulative.svg", cumulative), ("test_overlay.svg", overlay), ("dlr.svg", dlr)]
}

/// Writes `report.json`, `daily.csv`, `monthly.csv`, and `plots/*.svg`.
pub fn write_report(dir: &Path, report: &NormalizationReport) -> Result<()> {
    let plot_dir = dir.join("plots");
    std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(plot_dir.display(), e))?;
    write_file(&dir.join("report.json"), &(report.to_json() + "\n"))?;
    write_file(&dir.join("daily.csv"), &daily_csv(report)?)?;
    write_file(&dir.join("monthly.csv"), &monthly_csv(report)?)?;
    for (name, svg) in plots(report) {
        write_file(&plot_dir.join(name), &svg)?;
    }
    Ok(())
}

fn write_models(dir: &Path, models: &[TrainedModel]) -> Result<()> {
    let model_dir = dir.join("models");
    std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(model_dir.display(), e))?;
    for m in models {
        write_file(&model_dir.join(format!("{}.json", m.kind)), &(m.to_json() + "\n"))?;
    }
    Ok(())
}

fn cmd_normalize(config: &Path, out_override: Option<&Path>, seed: Option<u64>, out: &mut dyn Write) -> Result<Exit> {
    let mut cfg: RunConfig = load_config(config)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let base = config_dir(config);
    let out_dir = match out_override {
        Some(p) => p.to_path_buf(),
        None => resolve(&base, &cfg.output_dir),
    };
    let table = load_table(&cfg, &base)?;
    let pipeline = cfg.pipeline();
    match with_pool(|| run_pipeline_with_models(&table, &pipeline)) {
        Ok(o) => {
            write_report(&out_dir, &o.report)?;
            write_models(&out_dir, &o.models)?;
            let _ = writeln!(
                out,
                "reduction {:.1} kWh ({:.1}%) from {} model(s); report in {}",
                o.report.total_reduction_kwh.unwrap_or(f64::NAN),
                100.0 * o.report.reduction_fraction.unwrap_or(f64::NAN),
                o.report.ensemble_members.len(),
                out_dir.display()
            );
            Ok(Exit::Ok)
        }
        Err(Error::NoValidBaseline { report }) => {
            write_report(&out_dir, &report)?;
            Err(Error::NoValidBaseline { report })
        }
        Err(e) => Err(e),
    }
}

fn cmd_synth(config: &Path, out: &mut dyn Write) -> Result<Exit> {
    let cfg: SynthRunConfig = load_config(config)?;
    cfg.synth.validate()?;
    let dir = resolve(&config_dir(config), &cfg.output_dir);
    let ds = generate(&cfg.synth)?;
    let files = ds.write_to(&dir)?;
    let _ = writeln!(
        out,
        "wrote {} files to {}; planted reduction fraction {}",
        files.len(),
        dir.display(),
        ds.ground_truth.reduction_fraction
    );
    Ok(Exit::Ok)
}

/// Dates, actual values, and named prediction columns.
type PredictionTable = (Vec<NaiveDate>, Vec<f64>, Vec<(String, Vec<f64>)>);

fn read_predictions(path: &Path) -> Result<PredictionTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 3 || &headers[0] != "date" || &headers[1] != "actual" {
        return Err(Error::Schema("predictions need `date,actual,<model>...` columns".into()));
    }
    let mut dates = Vec::new();
    let mut actual = Vec::new();
    let mut models: Vec<(String, Vec<f64>)> = headers.iter().skip(2).map(|h| (h.to_string(), Vec::new())).collect();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let bad = |m: String| Error::Parse { line, message: m };
        dates.push(
            NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(format!("date `{}`: {e}", &rec[0])))?,
        );
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("value `{s}`")));
        actual.push(num(&rec[1])?);
        for (k, (_, v)) in models.iter_mut().enumerate() {
            v.push(num(&rec[k + 2])?);
        }
    }
    Ok((dates, actual, models))
}

fn evaluate_rows(cfg: &EvaluateConfig, config: &Path) -> Result<Vec<(String, KpiReport)>> {
    let base = config_dir(config);
    match (&cfg.predictions, &cfg.run_config) {
        (Some(p), None) => {
            let (dates, actual, models) = read_predictions(&resolve(&base, p))?;
            models
                .into_iter()
                .map(|(name, pred)| Ok((name, kpi_report(&dates, &actual, &pred, &cfg.kpi)?)))
                .collect()
        }
        (None, Some(rc)) => {
            let rc_path = resolve(&base, rc);
            let run: RunConfig = load_config(&rc_path)?;
            run.validate()?;
            let table = load_table(&run, &config_dir(&rc_path))?;
            match &cfg.models_dir {
                Some(dir) => score_saved_models(&table, &run, &resolve(&base, dir), &cfg.kpi),
                None => {
                    let mut pipeline = run.pipeline();
                    pipeline.kpi = cfg.kpi;
                    let report = match with_pool(|| run_pipeline_with_models(&table, &pipeline)) {
                        Ok(o) => o.report,
                        Err(Error::NoValidBaseline { report }) => *report,
                        Err(e) => return Err(e),
                    };
                    Ok(report.models.into_iter().map(|m| (m.model.name().to_string(), m.test)).collect())
                }
            }
        }
        _ => Err(Error::Config("set exactly one of `predictions` or `run_config`".into())),
    }
}

fn score_saved_models(table: &DailyTable, run: &RunConfig, dir: &Path, kpi: &KpiConfig) -> Result<Vec<(String, KpiReport)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no model files in {}", dir.display())));
    }
    let fm = build_features(table, &run.features)?;
    let idx: Vec<usize> = (0..fm.len()).filter(|&i| run.periods.test.contains(fm.dates[i])).collect();
    let mut rows = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(p.display(), e))?;
        let model = TrainedModel::from_json(&text)?;
        let pred = model.predict(&fm, &idx)?;
        let keep: Vec<usize> = (0..idx.len()).filter(|&k| pred[k].is_some()).collect();
        let dates: Vec<NaiveDate> = keep.iter().map(|&k| fm.dates[idx[k]]).collect();
        let actual: Vec<f64> = keep.iter().map(|&k| fm.y[idx[k]]).collect();
        let predicted: Vec<f64> = keep.iter().map(|&k| pred[k].unwrap()).collect();
        rows.push((model.kind.name().to_string(), kpi_report(&dates, &actual, &predicted, kpi)?));
    }
    Ok(rows)
}

fn pct(v: f64, failed: bool) -> String {
    let s = format!("{:.2}%", 100.0 * v);
    if failed {
        format!("*{s}*")
    } else {
        s
    }
}

/// KPI table with columns CV(RMSE), R², NMBE for daily then monthly data.
/// Values breaking a gate limit are wrapped in `*`.
pub fn kpi_table(rows: &[(String, KpiReport)]) -> String {
    let header = [
        "model",
        "daily CV(RMSE)",
        "daily R²",
        "daily NMBE",
        "monthly CV(RMSE)",
        "monthly R²",
        "monthly NMBE",
        "verdict",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (name, k) in rows {
        let g = k.gate;
        let verdict = if g.pass {
            "PASS".to_string()
        } else {
            let names: Vec<&str> = g
                .failures()
                .into_iter()
                .map(|f| match f {
                    "daily_cv_rmse" => "daily CV(RMSE)",
                    "monthly_cv_rmse" => "monthly CV(RMSE)",
                    "daily_nmbe" => "daily NMBE",
                    _ => "monthly NMBE",
                })
                .collect();
            format!("FAIL ({})", names.join(", "))
        };
        table.push(vec![
            name.clone(),
            pct(k.daily.cv_rmse, !g.daily_cv_rmse),
            format!("{:.4}", k.daily.r2),
            pct(k.daily.nmbe, !g.daily_nmbe),
            pct(k.monthly.cv_rmse, !g.monthly_cv_rmse),
            format!("{:.4}", k.monthly.r2),
            pct(k.monthly.nmbe, !g.monthly_nmbe),
            verdict,
        ]);
    }
    let widths: Vec<usize> =
        (0..header.len()).map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

fn cmd_evaluate(config: &Path, out: &mut dyn Write) -> Result<Exit> {
    let cfg: EvaluateConfig = load_config(config)?;
    let rows = evaluate_rows(&cfg, config)?;
    let _ = write!(out, "{}", kpi_table(&rows));
    Ok(if rows.iter().any(|(_, k)| k.gate.pass) { Exit::Ok } else { Exit::GateFailure })
}

/// Parses `args` and runs the chosen command, returning the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { Exit::Usage } else { Exit::Ok };
        }
    };
    let result = match &cli.command {
        Command::Normalize { config, out: dir, seed } => cmd_normalize(config, dir.as_deref(), *seed, out),
        Command::Synth { config } => cmd_synth(config, out),
        Command::Evaluate { config } => cmd_evaluate(config, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            Exit::of(&e)
        }
    }
}
