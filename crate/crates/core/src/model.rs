//! Shared data model: stations, aligned panels, distance and kernel
//! matrices, feature tables, forecasts and metric reports.
//!
//! Everything here is immutable once constructed. Missing panel cells are
//! carried by an explicit mask; the value slot of a missing cell is always
//! `0.0` and must never be read as data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, Months, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

/// How station coordinates are to be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordMode {
    /// Projected planar coordinates in meters.
    EuclideanMeters,
    /// Longitude / latitude in decimal degrees.
    LonlatDegrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// Ordered set of monitoring stations with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    stations: Vec<Station>,
    coord_mode: CoordMode,
}

impl StationSet {
    pub fn new(stations: Vec<Station>, coord_mode: CoordMode) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for s in &stations {
            if s.id.is_empty() {
                return Err(ModelError::Invalid("empty station id".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate station id {}", s.id)));
            }
            if !s.x.is_finite() || !s.y.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "non-finite coordinate for station {}",
                    s.id
                )));
            }
        }
        Ok(Self { stations, coord_mode })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn coord_mode(&self) -> CoordMode {
        self.coord_mode
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }
}

/// Sampling frequency of a panel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Hourly,
    Daily,
    Monthly,
}

impl Frequency {
    /// Timestamp `n` grid steps after `ts`. Monthly steps are calendar months.
    pub fn advance(self, ts: NaiveDateTime, n: u32) -> NaiveDateTime {
        match self {
            Frequency::Hourly => ts + Duration::hours(n as i64),
            Frequency::Daily => ts + Duration::days(n as i64),
            Frequency::Monthly => ts
                .checked_add_months(Months::new(n))
                .expect("monthly grid out of chrono range"),
        }
    }

    /// Whether `ts` sits on a grid point of this frequency: top of the hour,
    /// midnight, or midnight on the first day of a month.
    pub fn on_grid(self, ts: NaiveDateTime) -> bool {
        let whole_hour = ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0;
        match self {
            Frequency::Hourly => whole_hour,
            Frequency::Daily => whole_hour && ts.hour() == 0,
            Frequency::Monthly => whole_hour && ts.hour() == 0 && ts.day() == 1,
        }
    }

    /// Number of grid steps from `from` to `to`, if `to` lies on the grid
    /// anchored at `from`.
    pub fn steps_between(self, from: NaiveDateTime, to: NaiveDateTime) -> Option<i64> {
        match self {
            Frequency::Hourly => {
                let d = to - from;
                (d.num_seconds() % 3600 == 0).then(|| d.num_hours())
            }
            Frequency::Daily => {
                let d = to - from;
                (d.num_seconds() % 86_400 == 0).then(|| d.num_days())
            }
            Frequency::Monthly => {
                if from.day() != to.day() || from.time() != to.time() {
                    return None;
                }
                let months = |t: NaiveDateTime| t.year() as i64 * 12 + t.month0() as i64;
                Some(months(to) - months(from))
            }
        }
    }

    /// Length in grid steps of the calendar cycle used for cyclic grouping
    /// (hour-of-day, day-of-week, month-of-year).
    pub fn cycle_len(self) -> usize {
        match self {
            Frequency::Hourly => 24,
            Frequency::Daily => 7,
            Frequency::Monthly => 12,
        }
    }

    pub fn default_lags(self) -> Vec<usize> {
        match self {
            Frequency::Hourly | Frequency::Daily => vec![1, 2, 3, 7],
            Frequency::Monthly => vec![1, 2, 3, 12],
        }
    }

    pub fn default_windows(self) -> Vec<usize> {
        match self {
            Frequency::Hourly => vec![6, 12, 24],
            Frequency::Daily => vec![3, 7, 14],
            Frequency::Monthly => vec![3, 6, 12],
        }
    }

    pub fn default_seasonal_periods(self) -> Vec<f64> {
        match self {
            Frequency::Hourly => vec![24.0, 168.0],
            Frequency::Daily => vec![7.0, 365.25],
            Frequency::Monthly => vec![12.0],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Hourly => "hourly",
            Frequency::Daily => "daily",
            Frequency::Monthly => "monthly",
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frequency {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hourly" => Ok(Frequency::Hourly),
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            other => Err(ModelError::Invalid(format!("unknown frequency {other:?}"))),
        }
    }
}

/// Time-aligned observation matrix (time × station) on a uniform grid.
///
/// Values are stored per station column. A cell whose mask entry is
/// `false` is missing and holds `0.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    station_ids: Vec<String>,
    frequency: Frequency,
    timestamps: Vec<NaiveDateTime>,
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
}

impl Panel {
    /// Builds a panel from per-station columns. Missing cells are normalized
    /// to `0.0`.
    pub fn new(
        station_ids: Vec<String>,
        frequency: Frequency,
        timestamps: Vec<NaiveDateTime>,
        mut values: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
    ) -> Result<Self, ModelError> {
        if values.len() != station_ids.len() || mask.len() != station_ids.len() {
            return Err(ModelError::Invalid(
                "station count does not match value/mask columns".into(),
            ));
        }
        let n = timestamps.len();
        if n == 0 {
            return Err(ModelError::Invalid("panel has no timestamps".into()));
        }
        for (s, (col, m)) in values.iter().zip(&mask).enumerate() {
            if col.len() != n || m.len() != n {
                return Err(ModelError::Invalid(format!(
                    "column for station {} has wrong length",
                    station_ids[s]
                )));
            }
        }
        for (i, ts) in timestamps.iter().enumerate() {
            if !frequency.on_grid(*ts) {
                return Err(ModelError::Invalid(format!(
                    "timestamp {ts} is off the {frequency} grid"
                )));
            }
            if i > 0 && frequency.advance(timestamps[i - 1], 1) != *ts {
                return Err(ModelError::Invalid(format!(
                    "timestamps are not a uniform {frequency} grid at {ts}"
                )));
            }
        }
        for (s, (col, m)) in values.iter_mut().zip(&mask).enumerate() {
            for (t, (v, &observed)) in col.iter_mut().zip(m).enumerate() {
                if observed {
                    if !v.is_finite() {
                        return Err(ModelError::Invalid(format!(
                            "non-finite observation for station {} at row {t}",
                            station_ids[s]
                        )));
                    }
                } else {
                    *v = 0.0;
                }
            }
        }
        Ok(Self { station_ids, frequency, timestamps, values, mask })
    }

    /// Convenience constructor for a fully observed panel.
    pub fn complete(
        station_ids: Vec<String>,
        frequency: Frequency,
        timestamps: Vec<NaiveDateTime>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let mask = values.iter().map(|c| vec![true; c.len()]).collect();
        Self::new(station_ids, frequency, timestamps, values, mask)
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn n_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_stations(&self) -> usize {
        self.station_ids.len()
    }

    pub fn series(&self, station: usize) -> &[f64] {
        &self.values[station]
    }

    pub fn mask(&self, station: usize) -> &[bool] {
        &self.mask[station]
    }

    pub fn value(&self, t: usize, station: usize) -> Option<f64> {
        self.mask[station][t].then(|| self.values[station][t])
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| m.iter().all(|&b| b))
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().map(|m| m.iter().filter(|&&b| !b).count()).sum()
    }

    /// First `len` rows.
    pub fn truncate(&self, len: usize) -> Panel {
        let len = len.min(self.n_times()).max(1);
        Panel {
            station_ids: self.station_ids.clone(),
            frequency: self.frequency,
            timestamps: self.timestamps[..len].to_vec(),
            values: self.values.iter().map(|c| c[..len].to_vec()).collect(),
            mask: self.mask.iter().map(|c| c[..len].to_vec()).collect(),
        }
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Panel {
        Panel {
            station_ids: self.station_ids.clone(),
            frequency: self.frequency,
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values.iter().map(|c| c[start..end].to_vec()).collect(),
            mask: self.mask.iter().map(|c| c[start..end].to_vec()).collect(),
        }
    }

    /// A copy with one fully observed row appended at the next grid point.
    pub fn extended(&self, row: &[f64]) -> Result<Panel, ModelError> {
        if row.len() != self.n_stations() {
            return Err(ModelError::Invalid("appended row has wrong width".into()));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(ModelError::Invalid(format!("non-finite appended value {v}")));
        }
        let next = self.frequency.advance(*self.timestamps.last().expect("nonempty"), 1);
        let mut out = self.clone();
        out.timestamps.push(next);
        for (s, v) in row.iter().enumerate() {
            out.values[s].push(*v);
            out.mask[s].push(true);
        }
        Ok(out)
    }

    /// Same data with the mask replaced by all-observed, values replaced.
    pub(crate) fn with_values(&self, values: Vec<Vec<f64>>) -> Panel {
        let mask = values.iter().map(|c| vec![true; c.len()]).collect();
        Panel {
            station_ids: self.station_ids.clone(),
            frequency: self.frequency,
            timestamps: self.timestamps.clone(),
            values,
            mask,
        }
    }
}

/// Symmetric station-to-station distance matrix in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, ModelError> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "invalid distance {v} between stations {i} and {j}"
                    )));
                }
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Median of the strictly upper-triangular entries.
    pub fn median_off_diagonal(&self) -> Option<f64> {
        let mut v: Vec<f64> = (0..self.n)
            .flat_map(|i| ((i + 1)..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

/// Shape of the distance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// `exp(-d / sigma)`.
    #[default]
    Exponential,
    /// `exp(-d^2 / (2 sigma^2))`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    n: usize,
    w: Vec<f64>,
    sigma: f64,
    shape: KernelShape,
}

impl KernelWeights {
    pub(crate) fn from_parts(n: usize, w: Vec<f64>, sigma: f64, shape: KernelShape) -> Self {
        debug_assert_eq!(w.len(), n * n);
        Self { n, w, sigma, shape }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }
}

/// Identity of a feature-table row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub station: String,
    pub t: usize,
}

/// Tabular representation handed to regression backends.
///
/// Row `r` predicts the panel value of `keys[r].station` at time
/// `keys[r].t + horizon`. Query tables built at a forecast frontier carry
/// no target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    schema: Vec<String>,
    keys: Vec<RowKey>,
    rows: Vec<Vec<f64>>,
    target: Option<Vec<f64>>,
    holdout: Vec<bool>,
    horizon: usize,
}

impl FeatureTable {
    pub fn new(
        schema: Vec<String>,
        keys: Vec<RowKey>,
        rows: Vec<Vec<f64>>,
        target: Option<Vec<f64>>,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        let mut names = BTreeSet::new();
        for name in &schema {
            if !names.insert(name.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate feature name {name}")));
            }
        }
        if keys.len() != rows.len() {
            return Err(ModelError::Invalid("row keys and rows differ in length".into()));
        }
        if let Some(y) = &target {
            if y.len() != rows.len() {
                return Err(ModelError::Invalid("target length differs from row count".into()));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Invalid("non-finite target value".into()));
            }
        }
        for (key, row) in keys.iter().zip(&rows) {
            if row.len() != schema.len() {
                return Err(ModelError::Invalid(format!(
                    "row ({}, {}) has {} values for {} features",
                    key.station,
                    key.t,
                    row.len(),
                    schema.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::Invalid(format!(
                    "non-finite feature {} in row ({}, {})",
                    schema[i], key.station, key.t
                )));
            }
        }
        let holdout = vec![false; rows.len()];
        Ok(Self { schema, keys, rows, target, holdout, horizon })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_holdout(&self, row: usize) -> bool {
        self.holdout[row]
    }

    /// Flags rows whose target time `t + horizon` is at or after `cut`.
    pub fn with_holdout_from(mut self, cut: usize) -> Self {
        for (flag, key) in self.holdout.iter_mut().zip(&self.keys) {
            *flag = key.t + self.horizon >= cut;
        }
        self
    }

    /// Indices of rows not flagged as holdout.
    pub fn training_indices(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&r| !self.holdout[r]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|n| n == name)
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Projects onto the named columns, in the given order.
    pub fn project(&self, names: &[String]) -> Result<FeatureTable, ModelError> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| ModelError::Invalid(format!("unknown feature {n}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        Ok(FeatureTable {
            schema: names.to_vec(),
            keys: self.keys.clone(),
            rows,
            target: self.target.clone(),
            holdout: self.holdout.clone(),
            horizon: self.horizon,
        })
    }

    /// Keeps the rows whose indices are listed, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: self.target.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect()),
            holdout: indices.iter().map(|&i| self.holdout[i]).collect(),
            horizon: self.horizon,
        }
    }

    /// The same rows without the target column.
    pub fn without_target(&self) -> FeatureTable {
        FeatureTable { target: None, ..self.clone() }
    }

    /// CSV dump: `station,t,<schema...>[,target]`. Floats use the shortest
    /// round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("station,t");
        for name in &self.schema {
            out.push(',');
            out.push_str(name);
        }
        if self.target.is_some() {
            out.push_str(",target");
        }
        out.push('\n');
        for (r, (key, row)) in self.keys.iter().zip(&self.rows).enumerate() {
            out.push_str(&key.station);
            out.push(',');
            out.push_str(&key.t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            if let Some(y) = &self.target {
                out.push(',');
                out.push_str(&y[r].to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Per-station multi-step point forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub station_ids: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    pub predictions: Vec<Vec<f64>>,
    pub horizon: usize,
    pub backend_id: String,
    pub config_digest: String,
}

impl ForecastSet {
    pub fn for_station(&self, id: &str) -> Option<&[f64]> {
        self.station_ids
            .iter()
            .position(|s| s == id)
            .map(|i| self.predictions[i].as_slice())
    }
}

/// Scores for one station (or the pooled set). Metrics whose preconditions
/// fail are `None`, with the reason recorded in `refusals`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub kge: Option<f64>,
    pub r: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub refusals: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginMetrics {
    pub origin: usize,
    pub stations: BTreeMap<String, Metrics>,
    pub pooled: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub stations: BTreeMap<String, Metrics>,
    pub pooled: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub origins: Vec<OriginMetrics>,
}

/// Stable 16-hex-digit digest of a structured configuration.
///
/// Object keys are sorted and every number is rendered as an `f64`, so
/// `5000` and `5000.0` hash identically.
pub fn config_digest(config: &serde_json::Value) -> String {
    let mut canonical = String::new();
    write_canonical(config, &mut canonical);
    let hash = Sha256::digest(canonical.as_bytes());
    hex::encode(&hash[..8])
}

/// Digest of any serializable configuration.
pub fn digest_of<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("configuration serializes to JSON");
    config_digest(&value)
}

fn write_canonical(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            out.push_str(&format!("{f:?}"));
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string"));
                out.push(':');
                write_canonical(&map[k.as_str()], out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use serde_json::json;

    fn day(d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn digest_ignores_key_order() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"sigma": 5000, "backend": {"id": "ridge", "lambda": 1.0}}"#)
                .unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"backend": {"lambda": 1, "id": "ridge"}, "sigma": 5000.0}"#)
                .unwrap();
        assert_eq!(config_digest(&a), config_digest(&b));
        assert_eq!(config_digest(&a).len(), 16);
    }

    #[test]
    fn digest_distinguishes_sigma() {
        assert_ne!(
            config_digest(&json!({"sigma": 5000})),
            config_digest(&json!({"sigma": 5001}))
        );
    }

    #[test]
    fn empty_config_digest_is_frozen() {
        // First 8 bytes of SHA-256("{}"), computed with an independent hasher.
        assert_eq!(config_digest(&json!({})), "44136fa355b3678a");
    }

    #[test]
    fn monthly_grid_uses_calendar_months() {
        let jan = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mar = Frequency::Monthly.advance(jan, 2);
        assert_eq!(mar.date(), NaiveDate::from_ymd_opt(2019, 3, 1).unwrap());
        assert_eq!(Frequency::Monthly.steps_between(jan, mar), Some(2));
        assert!(!Frequency::Monthly.on_grid(day(15)));
    }

    #[test]
    fn panel_rejects_gaps_and_normalizes_missing() {
        let err = Panel::complete(
            vec!["A".into()],
            Frequency::Daily,
            vec![day(1), day(3)],
            vec![vec![1.0, 2.0]],
        );
        assert!(err.is_err());
        let p = Panel::new(
            vec!["A".into()],
            Frequency::Daily,
            vec![day(1), day(2)],
            vec![vec![1.0, f64::NAN]],
            vec![vec![true, false]],
        )
        .unwrap();
        assert_eq!(p.series(0), &[1.0, 0.0]);
        assert_eq!(p.value(1, 0), None);
        assert_eq!(p.missing_count(), 1);
    }

    #[test]
    fn feature_table_rejects_duplicate_names() {
        let t = FeatureTable::new(vec!["a".into(), "a".into()], vec![], vec![], None, 1);
        assert!(t.is_err());
    }

    #[test]
    fn median_off_diagonal_even_count() {
        // 4 stations → 6 pairs
        let d = DistanceMatrix::from_fn(4, |i, j| (i + j) as f64).unwrap();
        // pairs: 1,2,3,3,4,5 → median (3+3)/2
        assert_eq!(d.median_off_diagonal(), Some(3.0));
    }
}
