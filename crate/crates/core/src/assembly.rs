//! Feature-table assembly, correlation-based selection and the causality
//! audit.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FeatureError;
use crate::features::spatial::{pearson_or_zero, SpatialContext};
use crate::features::{FeatureContext, Featurizer};
use crate::model::{FeatureTable, Panel, RowKey};

/// Name of the one-hot column for a station.
pub fn one_hot_name(station: &str) -> String {
    format!("station_{station}")
}

fn sorted_station_order(panel: &Panel) -> Vec<usize> {
    let ids = panel.station_ids();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

fn full_schema(featurizer: &Featurizer, panel: &Panel) -> Vec<String> {
    let mut schema = featurizer.schema().to_vec();
    let ids = panel.station_ids();
    schema.extend(sorted_station_order(panel).into_iter().map(|s| one_hot_name(&ids[s])));
    schema
}

fn with_one_hot(mut row: Vec<f64>, panel: &Panel, station: usize) -> Vec<f64> {
    row.extend(sorted_station_order(panel).into_iter().map(|j| if j == station { 1.0 } else { 0.0 }));
    row
}

/// Training table: one row per `(station, t)` whose features are all defined
/// and whose target `x(t + horizon)` lies in the panel. Rows are ordered by
/// station id, then time; one-hot station columns follow the features.
pub fn assemble(
    ctx: &FeatureContext<'_>,
    featurizer: &Featurizer,
    horizon: usize,
) -> Result<FeatureTable, FeatureError> {
    if horizon == 0 {
        return Err(FeatureError::Config("target horizon must be >= 1".into()));
    }
    let panel = ctx.panel;
    let n = panel.n_times();
    let ids = panel.station_ids();
    let per_station: Vec<Vec<(RowKey, Vec<f64>, f64)>> = sorted_station_order(panel)
        .into_par_iter()
        .map(|s| {
            let series = panel.series(s);
            (0..n.saturating_sub(horizon))
                .filter_map(|t| {
                    let row: Option<Vec<f64>> =
                        featurizer.compute_row(ctx, s, t).into_iter().collect();
                    row.map(|r| {
                        let key = RowKey { station: ids[s].clone(), t };
                        (key, with_one_hot(r, panel, s), series[t + horizon])
                    })
                })
                .collect()
        })
        .collect();

    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for (k, r, y) in per_station.into_iter().flatten() {
        keys.push(k);
        rows.push(r);
        target.push(y);
    }
    if rows.is_empty() {
        return Err(FeatureError::EmptyTable);
    }
    Ok(FeatureTable::new(full_schema(featurizer, panel), keys, rows, Some(target), horizon)?)
}

/// Query rows at time `t` for every station (in station-id order), without
/// target. Fails if any feature is still undefined at `t`.
pub fn frontier_rows(
    ctx: &FeatureContext<'_>,
    featurizer: &Featurizer,
    t: usize,
    horizon: usize,
) -> Result<FeatureTable, FeatureError> {
    let panel = ctx.panel;
    let ids = panel.station_ids();
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    for s in sorted_station_order(panel) {
        let row: Option<Vec<f64>> = featurizer.compute_row(ctx, s, t).into_iter().collect();
        let row = row.ok_or_else(|| {
            FeatureError::TooShort(format!("features undefined at frontier t = {t}"))
        })?;
        keys.push(RowKey { station: ids[s].clone(), t });
        rows.push(with_one_hot(row, panel, s));
    }
    Ok(FeatureTable::new(full_schema(featurizer, panel), keys, rows, None, horizon)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub min_target_corr: f64,
    pub redundancy_corr: f64,
    pub max_features: usize,
    /// Glob patterns of features exempt from the target-correlation floor and
    /// the feature cap (but not from redundancy pruning).
    pub always_keep: Vec<String>,
    pub correlation: Correlation,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            min_target_corr: 0.05,
            redundancy_corr: 0.95,
            max_features: 60,
            always_keep: vec!["lag_*".into(), "sin_*".into(), "cos_*".into()],
            correlation: Correlation::Pearson,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Config(m));
        if !(0.0..1.0).contains(&self.min_target_corr) {
            return bad(format!("min_target_corr {} not in [0, 1)", self.min_target_corr));
        }
        if !(self.redundancy_corr > 0.0 && self.redundancy_corr <= 1.0) {
            return bad(format!("redundancy_corr {} not in (0, 1]", self.redundancy_corr));
        }
        if self.min_target_corr >= self.redundancy_corr {
            return bad("min_target_corr must be below redundancy_corr".into());
        }
        if self.max_features == 0 {
            return bad("max_features must be positive".into());
        }
        for g in &self.always_keep {
            glob::Pattern::new(g).map_err(|e| FeatureError::Config(format!("bad glob {g}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DropReason {
    LowTargetCorr,
    RedundantWith(String),
    Overflow,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::LowTargetCorr => f.write_str("low_target_corr"),
            DropReason::RedundantWith(n) => write!(f, "redundant_with:{n}"),
            DropReason::Overflow => f.write_str("overflow"),
        }
    }
}

impl From<DropReason> for String {
    fn from(r: DropReason) -> Self {
        r.to_string()
    }
}

impl TryFrom<String> for DropReason {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "low_target_corr" => Ok(DropReason::LowTargetCorr),
            "overflow" => Ok(DropReason::Overflow),
            _ => s
                .strip_prefix("redundant_with:")
                .map(|n| DropReason::RedundantWith(n.to_owned()))
                .ok_or_else(|| format!("unknown drop reason {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    /// Absolute correlation of each input feature with the target.
    pub target_corrs: BTreeMap<String, f64>,
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Correlation-based selection with redundancy pruning. See
/// [`select_features_with_probe`].
pub fn select_features(
    table: &FeatureTable,
    config: &SelectionConfig,
) -> Result<(FeatureTable, SelectionReport), FeatureError> {
    select_features_with_probe(table, config, &mut |_| {})
}

/// Selection computed on training rows only:
///
/// 1. features with `|r(feature, target)| < min_target_corr` are dropped
///    (constant features have `r = 0`);
/// 2. the rest, scanned by descending `|r|` (ties by name), are dropped when
///    `|r|` with an already kept feature exceeds `redundancy_corr`;
/// 3. at most `max_features` survivors are kept, by `|r|`.
///
/// `always_keep` globs bypass steps 1 and 3. Kept columns retain schema
/// order. `probe` is called with every row index the selection reads.
pub fn select_features_with_probe(
    table: &FeatureTable,
    config: &SelectionConfig,
    probe: &mut dyn FnMut(usize),
) -> Result<(FeatureTable, SelectionReport), FeatureError> {
    config.validate()?;
    let target = table
        .target()
        .ok_or_else(|| FeatureError::Config("selection needs a target column".into()))?;
    let train = table.training_indices();
    if train.len() < 10 {
        return Err(FeatureError::TooShort(format!(
            "selection needs at least 10 training rows, got {}",
            train.len()
        )));
    }

    let schema = table.schema();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(train.len()); schema.len()];
    let mut y = Vec::with_capacity(train.len());
    for &r in &train {
        probe(r);
        for (c, v) in table.rows()[r].iter().enumerate() {
            columns[c].push(*v);
        }
        y.push(target[r]);
    }
    if config.correlation == Correlation::Spearman {
        columns = columns.par_iter().map(|c| ranks(c)).collect();
        y = ranks(&y);
    }

    let corrs: Vec<f64> = columns.par_iter().map(|c| pearson_or_zero(c, &y).abs()).collect();
    let patterns: Vec<glob::Pattern> =
        config.always_keep.iter().map(|g| glob::Pattern::new(g).expect("validated")).collect();
    let pinned = |c: usize| patterns.iter().any(|p| p.matches(&schema[c]));

    let mut reasons: BTreeMap<usize, DropReason> = BTreeMap::new();
    let mut candidates: Vec<usize> = Vec::new();
    for (c, &corr) in corrs.iter().enumerate() {
        if corr < config.min_target_corr && !pinned(c) {
            reasons.insert(c, DropReason::LowTargetCorr);
        } else {
            candidates.push(c);
        }
    }
    candidates.sort_by(|&a, &b| corrs[b].total_cmp(&corrs[a]).then_with(|| schema[a].cmp(&schema[b])));

    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        let blocker = kept
            .iter()
            .find(|&&k| pearson_or_zero(&columns[c], &columns[k]).abs() > config.redundancy_corr);
        match blocker {
            Some(&k) => {
                reasons.insert(c, DropReason::RedundantWith(schema[k].clone()));
            }
            None => kept.push(c),
        }
    }

    let mut budget = config.max_features;
    kept.retain(|&c| {
        if pinned(c) {
            return true;
        }
        if budget > 0 {
            budget -= 1;
            true
        } else {
            reasons.insert(c, DropReason::Overflow);
            false
        }
    });
    kept.sort_unstable();

    let kept_names: Vec<String> = kept.iter().map(|&c| schema[c].clone()).collect();
    let report = SelectionReport {
        kept: kept_names.clone(),
        dropped: reasons
            .into_iter()
            .map(|(c, reason)| DroppedFeature { name: schema[c].clone(), reason })
            .collect(),
        target_corrs: schema.iter().cloned().zip(corrs).collect(),
    };
    Ok((table.project(&kept_names)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub station: String,
    pub t: usize,
    pub feature: String,
    pub full: Option<f64>,
    pub truncated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub probes: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}

/// Recomputes `probes` random `(station, t, feature)` cells on the panel
/// truncated right after `t` and compares them bit for bit with the value
/// computed on the full panel.
pub fn causality_audit(
    featurizer: &Featurizer,
    panel: &Panel,
    spatial: &SpatialContext,
    probes: usize,
    seed: u64,
) -> Result<AuditReport, FeatureError> {
    if probes == 0 {
        return Err(FeatureError::Config("the audit needs at least one probe".into()));
    }
    let full = FeatureContext::new(panel, spatial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_features = featurizer.schema().len();
    let picks: Vec<(usize, usize, usize)> = (0..probes)
        .map(|_| {
            (
                rng.gen_range(0..panel.n_stations()),
                rng.gen_range(0..panel.n_times()),
                rng.gen_range(0..n_features),
            )
        })
        .collect();

    let violations: Vec<Violation> = picks
        .par_iter()
        .filter_map(|&(s, t, f)| {
            let truncated_panel = panel.truncate(t + 1);
            let truncated = FeatureContext::new(&truncated_panel, spatial).expect("complete");
            let a = featurizer.compute_feature(&full, s, t, f);
            let b = featurizer.compute_feature(&truncated, s, t, f);
            (!same(a, b)).then(|| Violation {
                station: panel.station_ids()[s].clone(),
                t,
                feature: featurizer.schema()[f].clone(),
                full: a,
                truncated: b,
            })
        })
        .collect();
    Ok(AuditReport { probes, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowKey;

    fn table(cols: Vec<(&str, Vec<f64>)>, y: Vec<f64>) -> FeatureTable {
        let n = y.len();
        let schema = cols.iter().map(|(n, _)| n.to_string()).collect();
        let rows = (0..n).map(|r| cols.iter().map(|(_, c)| c[r]).collect()).collect();
        let keys = (0..n).map(|t| RowKey { station: "A".into(), t }).collect();
        FeatureTable::new(schema, keys, rows, Some(y), 1).unwrap()
    }

    fn no_pins() -> SelectionConfig {
        SelectionConfig { always_keep: vec![], ..Default::default() }
    }

    #[test]
    fn duplicate_of_target_is_pruned() {
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() + i as f64 * 0.1).collect();
        let t = table(vec![("copy_b", y.clone()), ("copy_a", y.clone())], y);
        let (out, rep) = select_features(&t, &no_pins()).unwrap();
        assert_eq!(rep.kept, vec!["copy_a"]);
        assert_eq!(out.schema(), &["copy_a".to_string()]);
        assert_eq!(rep.dropped[0].reason, DropReason::RedundantWith("copy_a".into()));
    }

    #[test]
    fn constant_feature_dropped_with_zero_corr() {
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let t = table(vec![("flat", vec![3.0; 20]), ("x", y.clone())], y);
        let (_, rep) = select_features(&t, &no_pins()).unwrap();
        assert_eq!(rep.target_corrs["flat"], 0.0);
        assert_eq!(rep.dropped, vec![DroppedFeature { name: "flat".into(), reason: DropReason::LowTargetCorr }]);
    }

    #[test]
    fn overflow_respects_pins() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let noise = |k: usize| -> Vec<f64> { (0..30).map(|i| y[i] + ((i * k) % 5) as f64).collect() };
        let t = table(
            vec![("a", noise(1)), ("b", noise(2)), ("c", noise(3)), ("lag_1", noise(4))],
            y.clone(),
        );
        let cfg = SelectionConfig {
            max_features: 1,
            redundancy_corr: 1.0,
            always_keep: vec!["lag_*".into()],
            ..Default::default()
        };
        let (_, rep) = select_features(&t, &cfg).unwrap();
        assert_eq!(rep.kept.len(), 2);
        assert!(rep.kept.contains(&"lag_1".to_string()));
        assert_eq!(rep.dropped.iter().filter(|d| d.reason == DropReason::Overflow).count(), 2);
    }

    #[test]
    fn too_few_rows() {
        let t = table(vec![("a", vec![1.0; 5])], vec![1.0; 5]);
        assert!(select_features(&t, &no_pins()).is_err());
    }

    #[test]
    fn drop_reason_strings_round_trip() {
        for r in [DropReason::LowTargetCorr, DropReason::Overflow, DropReason::RedundantWith("lag_1".into())] {
            let s: String = r.clone().into();
            assert_eq!(DropReason::try_from(s).unwrap(), r);
        }
    }

    #[test]
    fn spearman_ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }
}
