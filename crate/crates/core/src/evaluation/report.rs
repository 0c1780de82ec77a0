//! Report files: metrics as JSON and CSV, per-station forecast CSVs, plot
//! data, and the saved run they are rendered from.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-exact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use super::backtest::{score_runs, OriginRun};
use crate::error::EvalError;
use crate::ingest::format_timestamp;
use crate::model::{ForecastSet, Frequency, MetricReport, Metrics, Panel};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const PLOTDATA_JSON: &str = "plotdata.json";
pub const SAVED_RUN_JSON: &str = "forecasts.json";

/// Everything needed to re-render the report without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedRun {
    pub station_ids: Vec<String>,
    pub frequency: Frequency,
    pub timestamps: Vec<NaiveDateTime>,
    /// Raw observations per station, `None` for gaps.
    pub observed: Vec<Vec<Option<f64>>>,
    pub backtest: Vec<OriginRun>,
    /// Forecast past the end of the panel, if one was made.
    pub future: Option<ForecastSet>,
}

impl SavedRun {
    pub fn new(panel: &Panel, backtest: Vec<OriginRun>, future: Option<ForecastSet>) -> Self {
        Self {
            station_ids: panel.station_ids().to_vec(),
            frequency: panel.frequency(),
            timestamps: panel.timestamps().to_vec(),
            observed: (0..panel.n_stations())
                .map(|s| (0..panel.n_times()).map(|t| panel.value(t, s)).collect())
                .collect(),
            backtest,
            future,
        }
    }
}

/// Renders a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory JSON serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_owned(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    write_text(path, &to_json_string(value))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| EvalError::Json { path: path.to_owned(), source })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), format_f64)
}

fn metrics_csv_row(label: &str, m: &Metrics) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{}\n",
        m.n,
        format_f64(m.mse),
        format_f64(m.rmse),
        format_f64(m.mae),
        opt(m.mape),
        opt(m.kge),
        opt(m.r),
        opt(m.beta),
        opt(m.gamma)
    )
}

/// One row per station, in id order, then the pooled row.
pub fn metrics_csv(report: &MetricReport) -> String {
    let mut out = String::from("station,n,mse,rmse,mae,mape,kge,r,beta,gamma\n");
    for (id, m) in &report.stations {
        out.push_str(&metrics_csv_row(id, m));
    }
    out.push_str(&metrics_csv_row("pooled", &report.pooled));
    out
}

/// File-system friendly form of a station id.
pub fn station_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn forecast_file_name(id: &str) -> String {
    format!("forecast_{}.csv", station_file_stem(id))
}

/// Backtest windows (with the observed value) followed by the forward
/// forecast (observed left empty).
pub fn forecast_csv(run: &SavedRun, station: usize) -> String {
    let mut out = String::from("timestamp,observed,predicted\n");
    let fmt_ts = |ts: &NaiveDateTime| format_timestamp(*ts, run.frequency);
    for origin in &run.backtest {
        for (h, ts) in origin.forecast.timestamps.iter().enumerate() {
            let observed = origin.observed[station][h].map(format_f64).unwrap_or_default();
            let predicted = format_f64(origin.forecast.predictions[station][h]);
            out.push_str(&format!("{},{observed},{predicted}\n", fmt_ts(ts)));
        }
    }
    if let Some(future) = &run.future {
        for (h, ts) in future.timestamps.iter().enumerate() {
            out.push_str(&format!("{},,{}\n", fmt_ts(ts), format_f64(future.predictions[station][h])));
        }
    }
    out
}

/// Per station: one shared time axis covering history and forward forecast,
/// with observed values, one aligned series per backtest origin, and the
/// forward forecast. Absent points are `null`.
pub fn plot_data(run: &SavedRun) -> Value {
    let mut axis: Vec<NaiveDateTime> = run.timestamps.clone();
    if let Some(future) = &run.future {
        axis.extend(future.timestamps.iter().copied());
    }
    let len = axis.len();
    let stations: Vec<Value> = run
        .station_ids
        .iter()
        .enumerate()
        .map(|(s, id)| {
            let mut observed: Vec<Option<f64>> = run.observed[s].clone();
            observed.resize(len, None);
            let backtest: Vec<Value> = run
                .backtest
                .iter()
                .map(|o| {
                    let mut series = vec![None; len];
                    for (h, p) in o.forecast.predictions[s].iter().enumerate() {
                        series[o.origin + h] = Some(*p);
                    }
                    json!({ "origin": o.origin, "predicted": series })
                })
                .collect();
            let forecast: Option<Vec<Option<f64>>> = run.future.as_ref().map(|f| {
                let mut series = vec![None; len];
                for (h, p) in f.predictions[s].iter().enumerate() {
                    series[run.timestamps.len() + h] = Some(*p);
                }
                series
            });
            json!({ "id": id, "observed": observed, "backtest": backtest, "forecast": forecast })
        })
        .collect();
    json!({
        "frequency": run.frequency,
        "timestamps": axis.iter().map(|ts| format_timestamp(*ts, run.frequency)).collect::<Vec<_>>(),
        "stations": stations,
    })
}

/// Scores the saved backtest and writes the report files into `dir`.
/// Returns the written paths.
pub fn emit_report(dir: &Path, run: &SavedRun) -> Result<(MetricReport, Vec<PathBuf>), EvalError> {
    let report = score_runs(&run.backtest)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), EvalError> {
        let path = dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put(METRICS_JSON.into(), to_json_string(&report))?;
    put(METRICS_CSV.into(), metrics_csv(&report))?;
    for (s, id) in run.station_ids.iter().enumerate() {
        put(forecast_file_name(id), forecast_csv(run, s))?;
    }
    put(PLOTDATA_JSON.into(), to_json_string(&plot_data(run)))?;
    Ok((report, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample_report() -> MetricReport {
        let mut refusals = BTreeMap::new();
        refusals.insert("mape".to_owned(), "MAPE undefined for this series".to_owned());
        let m = Metrics {
            n: 3,
            mse: 0.1 + 0.2,
            rmse: (0.3f64).sqrt(),
            mae: 1.0 / 3.0,
            mape: None,
            kge: Some(-0.123_456_789_012_345_68),
            r: Some(0.9),
            beta: Some(1.1),
            gamma: Some(std::f64::consts::PI),
            refusals,
        };
        let mut stations = BTreeMap::new();
        stations.insert("B".to_owned(), m.clone());
        stations.insert("A".to_owned(), m.clone());
        MetricReport { stations, pooled: m, origins: Vec::new() }
    }

    #[test]
    fn json_round_trips_exactly() {
        let report = sample_report();
        let text = to_json_string(&report);
        assert!(text.contains("\"mape\": null"));
        assert!(text.contains("3.0000000000000004e-1"), "{text}");
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_has_pooled_row_and_na() {
        let csv = metrics_csv(&sample_report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("A,3,"));
        assert!(lines[3].starts_with("pooled,"));
        assert_eq!(lines[1].split(',').nth(5), Some("n/a"));
    }

    #[test]
    fn file_stems_are_sanitized() {
        assert_eq!(forecast_file_name("st/1 a"), "forecast_st_1_a.csv");
    }
}
