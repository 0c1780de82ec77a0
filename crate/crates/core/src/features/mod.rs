//! Feature families and the featurizer that evaluates them row by row.
//!
//! A family computes named columns for one `(station, t)` cell from a
//! [`FeatureContext`]. Built-in families only read panel values at indices
//! `<= t`; the causality audit in [`crate::assembly`] checks that contract.

pub mod regime;
pub mod spatial;
pub mod temporal;

use serde::{Deserialize, Serialize};

use crate::error::FeatureError;
use crate::model::{Frequency, Panel};

use regime::RegimeConfig;
use spatial::{SpatialConfig, SpatialContext};
use temporal::TemporalFeatureConfig;

/// All feature-engineering settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub temporal: TemporalFeatureConfig,
    pub regime: RegimeConfig,
    pub spatial: SpatialConfig,
}

impl FeatureConfig {
    pub fn resolved(&self, frequency: Frequency) -> Self {
        Self { temporal: self.temporal.resolved(frequency), ..self.clone() }
    }

    pub fn validate(&self, n_stations: usize) -> Result<(), FeatureError> {
        self.temporal.validate()?;
        self.regime.validate()?;
        self.spatial.validate(n_stations)
    }
}

/// Read-only view handed to feature families.
#[derive(Clone, Copy)]
pub struct FeatureContext<'a> {
    pub panel: &'a Panel,
    pub spatial: &'a SpatialContext,
}

impl<'a> FeatureContext<'a> {
    pub fn new(panel: &'a Panel, spatial: &'a SpatialContext) -> Result<Self, FeatureError> {
        if !panel.is_complete() {
            return Err(FeatureError::Incomplete);
        }
        if spatial.distances.len() != panel.n_stations() {
            return Err(FeatureError::Config("spatial context does not match the panel".into()));
        }
        Ok(Self { panel, spatial })
    }

    /// Station series up to and including `t`.
    pub fn history(&self, station: usize, t: usize) -> &'a [f64] {
        &self.panel.series(station)[..=t]
    }

    pub fn n_stations(&self) -> usize {
        self.panel.n_stations()
    }
}

/// A group of feature columns computed together.
pub trait FeatureFamily: Send + Sync {
    fn names(&self) -> Vec<String>;

    /// Appends one value per name for `(station, t)`; `None` while warming up.
    fn compute(&self, ctx: &FeatureContext<'_>, station: usize, t: usize, out: &mut Vec<Option<f64>>);
}

#[derive(Debug, Clone)]
enum Builtin {
    Lags(Vec<usize>),
    Rolling(usize),
    Diff,
    Cv(usize, f64),
    Iqr(usize),
    Cumulative(usize, f64),
    Seasonal(Vec<f64>),
    Trend(usize, u8),
    Cyclic(Frequency, f64),
    Peak(usize, f64),
    Dynamics(usize, f64),
    VarianceRatio(usize, usize, f64),
    Stage(f64),
    WeightedAverage,
    Nearest(usize),
    Gradient(usize),
    Synchronicity(f64),
    CrossStation(usize),
}

fn fmt_period(p: f64) -> String {
    p.to_string()
}

impl FeatureFamily for Builtin {
    fn names(&self) -> Vec<String> {
        let w_names = |prefixes: &[&str], w: usize| -> Vec<String> {
            prefixes.iter().map(|p| format!("{p}_{w}")).collect()
        };
        match self {
            Builtin::Lags(lags) => lags.iter().map(|k| format!("lag_{k}")).collect(),
            Builtin::Rolling(w) => w_names(&["rollmean", "rollstd", "rollmin", "rollmax"], *w),
            Builtin::Diff => vec!["diff_1".into(), "diff_2".into()],
            Builtin::Cv(w, _) => w_names(&["cv"], *w),
            Builtin::Iqr(w) => w_names(&["iqr"], *w),
            Builtin::Cumulative(w, _) => w_names(&["cumsum", "cumratio"], *w),
            Builtin::Seasonal(periods) => periods
                .iter()
                .flat_map(|p| [format!("sin_{}", fmt_period(*p)), format!("cos_{}", fmt_period(*p))])
                .collect(),
            Builtin::Trend(w, _) => w_names(&["trend_slope", "trend_fit"], *w),
            Builtin::Cyclic(..) => vec!["cyc_mean".into(), "cyc_std".into(), "cyc_anom".into()],
            Builtin::Peak(..) => vec!["is_peak".into(), "steps_since_peak".into()],
            Builtin::Dynamics(w, _) => w_names(&["zscore", "trend_dir", "relpos"], *w),
            Builtin::VarianceRatio(..) => vec!["var_ratio".into()],
            Builtin::Stage(_) => [
                "stage1_mean",
                "stage2_mean",
                "stage3_mean",
                "stage_change_12",
                "stage_change_23",
                "stage_id",
            ]
            .map(String::from)
            .to_vec(),
            Builtin::WeightedAverage => vec!["dwavg".into()],
            Builtin::Nearest(k) => (1..=*k)
                .flat_map(|r| [format!("nn{r}_val"), format!("nn{r}_wval")])
                .collect(),
            Builtin::Gradient(_) => vec!["grad_nn1".into(), "grad_all".into()],
            Builtin::Synchronicity(_) => {
                vec!["region_mean".into(), "region_std".into(), "sync_dev".into()]
            }
            Builtin::CrossStation(w) => w_names(&["xmean", "xstd", "xcorr"], *w),
        }
    }

    fn compute(&self, ctx: &FeatureContext<'_>, s: usize, t: usize, out: &mut Vec<Option<f64>>) {
        let h = ctx.history(s, t);
        let values_at_t = || -> Vec<f64> { (0..ctx.n_stations()).map(|j| ctx.panel.series(j)[t]).collect() };
        let all_histories = || -> Vec<&[f64]> { (0..ctx.n_stations()).map(|j| ctx.history(j, t)).collect() };
        match self {
            Builtin::Lags(lags) => out.extend(lags.iter().map(|&k| temporal::lag(h, k))),
            Builtin::Rolling(w) => {
                let r = temporal::rolling_stats(h, *w);
                out.extend([r.map(|r| r.mean), r.map(|r| r.std), r.map(|r| r.min), r.map(|r| r.max)]);
            }
            Builtin::Diff => {
                let (d1, d2) = temporal::diffs(h);
                out.extend([d1, d2]);
            }
            Builtin::Cv(w, eps) => out.push(temporal::coeff_variation(h, *w, *eps)),
            Builtin::Iqr(w) => out.push(temporal::iqr(h, *w)),
            Builtin::Cumulative(w, eps) => {
                let c = temporal::cumulative(h, *w, *eps);
                out.extend([c.map(|c| c.0), c.map(|c| c.1)]);
            }
            Builtin::Seasonal(periods) => {
                for p in periods {
                    let (sin, cos) = temporal::seasonal_encoding(t, *p);
                    out.extend([Some(sin), Some(cos)]);
                }
            }
            Builtin::Trend(w, degree) => {
                let f = temporal::trend(h, *w, *degree);
                out.extend([f.map(|f| f.0), f.map(|f| f.1)]);
            }
            Builtin::Cyclic(freq, eps) => {
                let c = temporal::cyclic_group_stats(h, *freq, *eps);
                out.extend([c.map(|c| c.mean), c.map(|c| c.std), c.map(|c| c.anomaly)]);
            }
            Builtin::Peak(w, q) => {
                let p = temporal::peak_features(h, *w, *q);
                out.extend([p.map(|p| p.0), p.map(|p| p.1)]);
            }
            Builtin::Dynamics(w, eps) => {
                let d = temporal::window_dynamics(h, *w, *eps);
                out.extend([d.map(|d| d.zscore), d.map(|d| d.trend_dir), d.map(|d| d.relpos)]);
            }
            Builtin::VarianceRatio(short, long, eps) => {
                out.push(regime::variance_ratio(h, *short, *long, *eps))
            }
            Builtin::Stage(eps) => match regime::stage_stats(h, *eps) {
                Some(st) => out.extend(
                    [st.means[0], st.means[1], st.means[2], st.change_12, st.change_23, st.stage_id]
                        .map(Some),
                ),
                None => out.extend([None; 6]),
            },
            Builtin::WeightedAverage => {
                let v = values_at_t();
                out.push(Some(spatial::distance_weighted_average(
                    &v,
                    ctx.spatial.weights.row(s),
                    s,
                )));
            }
            Builtin::Nearest(k) => {
                let v = values_at_t();
                let feats = spatial::nearest_station_features(
                    &v,
                    &ctx.spatial.neighbors[s],
                    ctx.spatial.weights.row(s),
                    *k,
                );
                out.extend(feats.into_iter().flat_map(|(a, b)| [Some(a), Some(b)]));
            }
            Builtin::Gradient(w) => {
                let hist = all_histories();
                let g = spatial::spatial_gradient(&hist, s, ctx.spatial.neighbors[s][0], *w);
                out.extend([g.map(|g| g.0), g.map(|g| g.1)]);
            }
            Builtin::Synchronicity(eps) => {
                let r = spatial::regional_synchronicity(&values_at_t(), s, *eps);
                out.extend([Some(r.region_mean), Some(r.region_std), Some(r.sync_dev)]);
            }
            Builtin::CrossStation(w) => {
                let c = spatial::cross_station_stats(&all_histories(), s, *w);
                out.extend([c.map(|c| c.xmean), c.map(|c| c.xstd), c.map(|c| c.xcorr)]);
            }
        }
    }
}

/// Centered rolling mean that peeks `w / 2` steps into the future. Only
/// used to prove the causality audit catches leakage.
#[derive(Debug, Clone)]
pub struct LeakyCenteredMean {
    pub window: usize,
}

impl FeatureFamily for LeakyCenteredMean {
    fn names(&self) -> Vec<String> {
        vec![format!("centered_mean_{}", self.window)]
    }

    fn compute(&self, ctx: &FeatureContext<'_>, s: usize, t: usize, out: &mut Vec<Option<f64>>) {
        let half = self.window / 2;
        let series = ctx.panel.series(s);
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(series.len() - 1);
        let win = &series[lo..=hi];
        out.push(Some(win.iter().sum::<f64>() / win.len() as f64));
    }
}

/// Periods of the calendar encodings a time-series foundation model derives
/// from timestamps on its own; merged into the seasonal family by name.
pub fn calendar_periods(frequency: Frequency) -> Vec<f64> {
    frequency.default_seasonal_periods()
}

/// Ordered collection of feature families with a fixed schema.
pub struct Featurizer {
    families: Vec<Box<dyn FeatureFamily>>,
    schema: Vec<String>,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer").field("schema", &self.schema).finish()
    }
}

impl Featurizer {
    /// Builds the standard catalog. Hourly panels get regional synchronicity
    /// columns; daily and monthly panels get cross-station rolling columns.
    pub fn new(
        config: &FeatureConfig,
        frequency: Frequency,
        n_stations: usize,
    ) -> Result<Self, FeatureError> {
        let config = config.resolved(frequency);
        config.validate(n_stations)?;
        let tc = &config.temporal;
        let rc = &config.regime;
        let sc = &config.spatial;
        let eps = tc.epsilon;

        let mut lags = tc.lags.clone().unwrap_or_default();
        dedup_in_order(&mut lags);
        let mut windows = tc.windows.clone().unwrap_or_default();
        dedup_in_order(&mut windows);
        let mut periods = tc.seasonal_periods.clone().unwrap_or_default();
        periods.extend(calendar_periods(frequency));
        let mut seen = std::collections::BTreeSet::new();
        periods.retain(|p| seen.insert(fmt_period(*p)));

        let mut fam: Vec<Builtin> = Vec::new();
        if !lags.is_empty() {
            fam.push(Builtin::Lags(lags));
        }
        fam.extend(windows.iter().map(|&w| Builtin::Rolling(w)));
        fam.push(Builtin::Diff);
        fam.extend(windows.iter().map(|&w| Builtin::Cv(w, eps)));
        fam.extend(windows.iter().map(|&w| Builtin::Iqr(w)));
        fam.extend(windows.iter().map(|&w| Builtin::Cumulative(w, eps)));
        fam.push(Builtin::Seasonal(periods));
        fam.extend(
            windows
                .iter()
                .filter(|&&w| w >= tc.trend_degree as usize + 2)
                .map(|&w| Builtin::Trend(w, tc.trend_degree)),
        );
        fam.push(Builtin::Cyclic(frequency, eps));
        if let Some(&w) = windows.iter().max() {
            fam.push(Builtin::Peak(w, tc.peak_percentile));
        }
        fam.extend(windows.iter().map(|&w| Builtin::Dynamics(w, eps)));
        fam.push(Builtin::VarianceRatio(rc.short_window, rc.long_window, rc.epsilon));
        fam.push(Builtin::Stage(rc.epsilon));
        fam.push(Builtin::WeightedAverage);
        fam.push(Builtin::Nearest(sc.k_nearest));
        fam.push(Builtin::Gradient(sc.gradient_window));
        match frequency {
            Frequency::Hourly => fam.push(Builtin::Synchronicity(sc.epsilon)),
            Frequency::Daily | Frequency::Monthly => {
                let mut cw = sc.cross_windows.clone();
                dedup_in_order(&mut cw);
                fam.extend(cw.into_iter().map(Builtin::CrossStation));
            }
        }

        let mut out = Self { families: Vec::new(), schema: Vec::new() };
        for f in fam {
            out = out.with_family(Box::new(f))?;
        }
        Ok(out)
    }

    /// Appends a family; its names must not collide with the schema.
    pub fn with_family(mut self, family: Box<dyn FeatureFamily>) -> Result<Self, FeatureError> {
        for name in family.names() {
            if self.schema.contains(&name) {
                return Err(FeatureError::Config(format!("duplicate feature name {name}")));
            }
            self.schema.push(name);
        }
        self.families.push(family);
        Ok(self)
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    /// All feature values for one cell, in schema order.
    pub fn compute_row(&self, ctx: &FeatureContext<'_>, station: usize, t: usize) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(self.schema.len());
        for f in &self.families {
            f.compute(ctx, station, t, &mut out);
        }
        debug_assert_eq!(out.len(), self.schema.len());
        out
    }

    /// Value of one named feature at one cell.
    pub fn compute_feature(
        &self,
        ctx: &FeatureContext<'_>,
        station: usize,
        t: usize,
        feature: usize,
    ) -> Option<f64> {
        self.compute_row(ctx, station, t)[feature]
    }
}

fn dedup_in_order<T: PartialEq + Clone>(v: &mut Vec<T>) {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for x in v.drain(..) {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    *v = out;
}
