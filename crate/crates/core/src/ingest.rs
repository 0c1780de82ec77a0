//! Station and panel CSV parsing, grid alignment, distance computation and
//! missing-value imputation.

use std::collections::{BTreeMap, HashMap};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{CoordMode, DistanceMatrix, Frequency, Panel, Station, StationSet};

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    Linear,
    Knn,
    #[default]
    LinearThenKnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub imputation: Imputation,
    pub knn_k: usize,
    /// Longest gap (in steps) linear interpolation may bridge; `None` is
    /// unlimited.
    pub max_gap_for_linear: Option<usize>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { imputation: Imputation::default(), knn_k: 3, max_gap_for_linear: None }
    }
}

impl IngestConfig {
    pub fn validate(&self, n_stations: usize) -> Result<(), IngestError> {
        if self.knn_k == 0 {
            return Err(IngestError::Config("knn_k must be positive".into()));
        }
        if self.imputation != Imputation::Linear && self.knn_k >= n_stations {
            return Err(IngestError::Config(format!(
                "knn_k = {} must be smaller than the station count {n_stations}",
                self.knn_k
            )));
        }
        if self.max_gap_for_linear == Some(0) {
            return Err(IngestError::Config("max_gap_for_linear must be positive".into()));
        }
        Ok(())
    }
}

/// Parses a stations file with header `station_id,x,y` (planar meters) or
/// `station_id,lon,lat` (degrees). Rows are numbered from 1 at the header.
pub fn parse_stations(csv_text: &str) -> Result<StationSet, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mode = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["station_id", "x", "y"] => CoordMode::EuclideanMeters,
        ["station_id", "lon", "lat"] => CoordMode::LonlatDegrees,
        _ => {
            return Err(IngestError::Header(format!(
                "expected station_id,x,y or station_id,lon,lat, found {}",
                header.join(",")
            )))
        }
    };

    let mut stations: Vec<Station> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let id = record.get(0).unwrap_or_default().to_owned();
        if id.is_empty() {
            return Err(IngestError::Header(format!("empty station id at row {row}")));
        }
        if stations.iter().any(|s| s.id == id) {
            return Err(IngestError::DuplicateStation { id, row });
        }
        let coord = |k: usize| -> Result<f64, IngestError> {
            let raw = record.get(k).unwrap_or_default();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::BadCoordinate { value: raw.to_owned(), row })
        };
        let (x, y) = (coord(1)?, coord(2)?);
        stations.push(Station { id, x, y });
    }
    if stations.len() < 2 {
        return Err(IngestError::TooFewStations(stations.len()));
    }
    Ok(StationSet::new(stations, mode)?)
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim().trim_end_matches('Z');
    const FORMATS: [&str; 4] =
        ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

pub(crate) fn format_timestamp(ts: NaiveDateTime, frequency: Frequency) -> String {
    match frequency {
        Frequency::Hourly => ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
        Frequency::Daily | Frequency::Monthly => ts.format("%Y-%m-%d").to_string(),
    }
}

/// Parses a wide panel CSV: first column is the timestamp, then one column
/// per station id. Empty cells are missing. Grid points absent from the
/// file become fully missing rows. Columns are reordered to station order.
pub fn parse_panel(
    csv_text: &str,
    frequency: Frequency,
    stations: &StationSet,
) -> Result<Panel, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(IngestError::Header("panel needs a timestamp column and station columns".into()));
    }
    let mut column_of = HashMap::new();
    for (c, name) in header.iter().enumerate().skip(1) {
        let s = stations
            .index_of(name)
            .ok_or_else(|| IngestError::UnknownStation(name.clone()))?;
        if column_of.insert(s, c).is_some() {
            return Err(IngestError::Header(format!("station column {name} appears twice")));
        }
    }
    for (s, st) in stations.stations().iter().enumerate() {
        if !column_of.contains_key(&s) {
            return Err(IngestError::MissingStation(st.id.clone()));
        }
    }

    // grid offset -> per-station cells
    let mut rows: BTreeMap<i64, Vec<Option<f64>>> = BTreeMap::new();
    let mut anchor: Option<NaiveDateTime> = None;
    let mut last_offset = -1i64;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let raw_ts = record.get(0).unwrap_or_default();
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| IngestError::BadTimestamp { value: raw_ts.to_owned(), row })?;
        let off_grid = || IngestError::OffGrid {
            value: raw_ts.to_owned(),
            row,
            frequency: frequency.to_string(),
        };
        if !frequency.on_grid(ts) {
            return Err(off_grid());
        }
        let anchor = *anchor.get_or_insert(ts);
        let offset = frequency.steps_between(anchor, ts).ok_or_else(off_grid)?;
        if offset <= last_offset {
            return Err(IngestError::NotIncreasing { value: raw_ts.to_owned(), row });
        }
        last_offset = offset;

        let mut cells = vec![None; stations.len()];
        for (s, cell) in cells.iter_mut().enumerate() {
            let c = column_of[&s];
            let raw = record.get(c).unwrap_or_default();
            if raw.is_empty() {
                continue;
            }
            let v = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                IngestError::BadValue { value: raw.to_owned(), row, column: header[c].clone() }
            })?;
            *cell = Some(v);
        }
        rows.insert(offset, cells);
    }
    let anchor = anchor.ok_or_else(|| IngestError::Header("panel has no data rows".into()))?;

    let n = (last_offset + 1) as usize;
    let timestamps: Vec<NaiveDateTime> =
        (0..n).map(|k| frequency.advance(anchor, k as u32)).collect();
    let mut values = vec![vec![0.0; n]; stations.len()];
    let mut mask = vec![vec![false; n]; stations.len()];
    for (offset, cells) in rows {
        let t = offset as usize;
        for (s, cell) in cells.into_iter().enumerate() {
            if let Some(v) = cell {
                values[s][t] = v;
                mask[s][t] = true;
            }
        }
    }
    Ok(Panel::new(stations.ids(), frequency, timestamps, values, mask)?)
}

/// Writes stations in the layout accepted by [`parse_stations`].
pub fn serialize_stations(stations: &StationSet) -> String {
    let mut out = String::from(match stations.coord_mode() {
        CoordMode::EuclideanMeters => "station_id,x,y\n",
        CoordMode::LonlatDegrees => "station_id,lon,lat\n",
    });
    for st in stations.stations() {
        out.push_str(&format!("{},{},{}\n", st.id, st.x, st.y));
    }
    out
}

/// Writes a panel in the wide CSV layout accepted by [`parse_panel`].
pub fn serialize_panel(panel: &Panel) -> String {
    let mut out = String::from("timestamp");
    for id in panel.station_ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (t, ts) in panel.timestamps().iter().enumerate() {
        out.push_str(&format_timestamp(*ts, panel.frequency()));
        for s in 0..panel.n_stations() {
            out.push(',');
            if let Some(v) = panel.value(t, s) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Planar distance for projected coordinates, haversine for lon/lat.
pub fn compute_distances(stations: &StationSet) -> DistanceMatrix {
    let st = stations.stations();
    let mode = stations.coord_mode();
    DistanceMatrix::from_fn(st.len(), |i, j| match mode {
        CoordMode::EuclideanMeters => (st[i].x - st[j].x).hypot(st[i].y - st[j].y),
        CoordMode::LonlatDegrees => haversine(st[i].x, st[i].y, st[j].x, st[j].y),
    })
    .expect("distances from finite coordinates are finite")
}

/// Great-circle distance in meters between two lon/lat points in degrees.
pub fn haversine(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Stations other than `i`, by ascending distance with ties broken by id.
pub fn neighbor_order(distances: &DistanceMatrix, ids: &[String], i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        distances
            .get(i, a)
            .total_cmp(&distances.get(i, b))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMethod {
    Linear,
    /// Nearest observed value, for gaps touching either end of a series.
    Flat,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledCell {
    pub station: String,
    pub t: usize,
    pub method: FillMethod,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationAudit {
    pub filled: Vec<FilledCell>,
}

/// Fills every missing cell. Observed cells are never modified; the returned
/// panel is fully observed.
///
/// * `Linear`: interior gaps interpolated between the nearest observed
///   neighbors in time, edge gaps take the nearest observed value.
/// * `Knn`: mean of the `knn_k` spatially nearest stations observed at the
///   same time; cells with no observed neighbor fall back to `Linear`.
/// * `LinearThenKnn`: interior gaps within `max_gap_for_linear` are
///   interpolated first, the remaining cells go through `Knn`.
///
/// `distances` must be indexed in panel station order.
pub fn impute(
    panel: &Panel,
    config: &IngestConfig,
    distances: &DistanceMatrix,
) -> Result<(Panel, ImputationAudit), IngestError> {
    let n_st = panel.n_stations();
    config.validate(n_st)?;
    if distances.len() != n_st {
        return Err(IngestError::Config("distance matrix does not match the panel".into()));
    }
    for s in 0..n_st {
        let observed = panel.mask(s).iter().filter(|&&b| b).count();
        if observed < 2 {
            return Err(IngestError::InsufficientObservations {
                station: panel.station_ids()[s].clone(),
                observed,
            });
        }
    }

    let ids = panel.station_ids();
    let mut values: Vec<Vec<f64>> = (0..n_st).map(|s| panel.series(s).to_vec()).collect();
    let mut filled = Vec::new();
    let mut record = |s: usize, t: usize, method: FillMethod, value: f64| {
        filled.push(FilledCell { station: ids[s].clone(), t, method, value });
    };

    for s in 0..n_st {
        let mask = panel.mask(s);
        let series = panel.series(s);
        let order = neighbor_order(distances, ids, s);
        for t in 0..panel.n_times() {
            if mask[t] {
                continue;
            }
            let linear = || linear_fill(series, mask, t);
            let (value, method) = match config.imputation {
                Imputation::Linear => {
                    let (v, m, gap) = linear();
                    check_gap(config, &ids[s], gap)?;
                    (v, m)
                }
                Imputation::Knn => match knn_fill(panel, &order, t, config.knn_k) {
                    Some(v) => (v, FillMethod::Knn),
                    None => {
                        let (v, m, _) = linear();
                        (v, m)
                    }
                },
                Imputation::LinearThenKnn => {
                    let (v, m, gap) = linear();
                    let within = config.max_gap_for_linear.is_none_or(|max| gap.len <= max);
                    if m == FillMethod::Linear && within {
                        (v, m)
                    } else if let Some(k) = knn_fill(panel, &order, t, config.knn_k) {
                        (k, FillMethod::Knn)
                    } else {
                        (v, m)
                    }
                }
            };
            values[s][t] = value;
            record(s, t, method, value);
        }
    }
    Ok((panel.with_values(values), ImputationAudit { filled }))
}

#[derive(Debug, Clone, Copy)]
struct Gap {
    start: usize,
    len: usize,
}

fn check_gap(config: &IngestConfig, station: &str, gap: Gap) -> Result<(), IngestError> {
    match config.max_gap_for_linear {
        Some(max) if gap.len > max => Err(IngestError::GapTooLong {
            station: station.to_owned(),
            start: gap.start,
            len: gap.len,
        }),
        _ => Ok(()),
    }
}

fn linear_fill(series: &[f64], mask: &[bool], t: usize) -> (f64, FillMethod, Gap) {
    let prev = (0..t).rev().find(|&j| mask[j]);
    let next = ((t + 1)..series.len()).find(|&j| mask[j]);
    match (prev, next) {
        (Some(p), Some(n)) => {
            let frac = (t - p) as f64 / (n - p) as f64;
            let v = series[p] + (series[n] - series[p]) * frac;
            (v, FillMethod::Linear, Gap { start: p + 1, len: n - p - 1 })
        }
        (Some(p), None) => (series[p], FillMethod::Flat, Gap { start: p + 1, len: series.len() - p - 1 }),
        (None, Some(n)) => (series[n], FillMethod::Flat, Gap { start: 0, len: n }),
        (None, None) => unreachable!("stations are checked for at least two observations"),
    }
}

fn knn_fill(panel: &Panel, order: &[usize], t: usize, k: usize) -> Option<f64> {
    let picked: Vec<f64> = order.iter().filter_map(|&j| panel.value(t, j)).take(k).collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}
