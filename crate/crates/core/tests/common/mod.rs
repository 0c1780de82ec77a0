//! Shared fixtures and brute-force reference implementations.
//!
//! The references are deliberately naive: loops over explicit index ranges,
//! fresh sorts, direct formulas. They share no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use geopanel::features::FeatureConfig;
use geopanel::model::{CoordMode, Frequency, Panel, Station, StationSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

pub fn grid(freq: Frequency, n: usize) -> Vec<NaiveDateTime> {
    (0..n).map(|k| freq.advance(start(), k as u32)).collect()
}

/// Stations `S0..` on a slightly irregular planar layout.
pub fn line_stations(n: usize) -> StationSet {
    let list = (0..n)
        .map(|i| Station {
            id: format!("S{i}"),
            x: 1000.0 * i as f64 + 137.0 * ((i * i) % 5) as f64,
            y: 800.0 * ((i * 3) % 4) as f64,
        })
        .collect();
    StationSet::new(list, CoordMode::EuclideanMeters).unwrap()
}

pub fn complete_panel(stations: &StationSet, freq: Frequency, values: Vec<Vec<f64>>) -> Panel {
    let n = values[0].len();
    Panel::complete(stations.ids(), freq, grid(freq, n), values).unwrap()
}

/// Positive series with occasional plateaus of exactly representable values.
pub fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if rng.gen_bool(0.08) {
            let level = f64::from(rng.gen_range(2u32..40)) * 0.25;
            let len = rng.gen_range(2..6).min(n - out.len());
            out.extend(std::iter::repeat_n(level, len));
        } else {
            out.push(rng.gen_range(0.5..20.0));
        }
    }
    out
}

// ---------------------------------------------------------------- metrics

pub fn ref_mse(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (y[i] - p[i]).powi(2);
    }
    s / y.len() as f64
}

pub fn ref_mae(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (p[i] - y[i]).abs();
    }
    s / y.len() as f64
}

pub fn ref_mape(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += ((p[i] - y[i]) / y[i]).abs();
    }
    s * 100.0 / y.len() as f64
}

fn moments(v: &[f64]) -> (f64, f64) {
    let mut m = 0.0;
    for x in v {
        m += x;
    }
    m /= v.len() as f64;
    let mut var = 0.0;
    for x in v {
        var += (x - m).powi(2);
    }
    (m, (var / v.len() as f64).sqrt())
}

/// `(kge, r, beta, gamma)` with population moments.
pub fn ref_kge(y: &[f64], p: &[f64]) -> (f64, f64, f64, f64) {
    let (my, sy) = moments(y);
    let (mp, sp) = moments(p);
    let mut cov = 0.0;
    for i in 0..y.len() {
        cov += (y[i] - my) * (p[i] - mp);
    }
    cov /= y.len() as f64;
    let r = cov / (sy * sp);
    let beta = mp / my;
    let gamma = (sp * my) / (sy * mp);
    let kge = 1.0 - ((r - 1.0).powi(2) + (beta - 1.0).powi(2) + (gamma - 1.0).powi(2)).sqrt();
    (kge, r, beta, gamma)
}

// --------------------------------------------------------------- features

fn mean(v: &[f64]) -> f64 {
    moments(v).0
}

fn pstd(v: &[f64]) -> f64 {
    moments(v).1
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

/// Linear-interpolation percentile on the zero-based rank `(n-1) p / 100`.
pub fn ref_percentile(values: &[f64], p: f64) -> f64 {
    let s = sorted(values);
    let rank = (s.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + frac * (s[hi] - s[lo])
}

fn pearson0(a: &[f64], b: &[f64]) -> f64 {
    let flat = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if flat(a) || flat(b) {
        return 0.0;
    }
    let (ma, _) = moments(a);
    let (mb, _) = moments(b);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    (num / (da * db).sqrt()).clamp(-1.0, 1.0)
}

/// Least-squares polynomial of `degree` through `(i, v[i])`; returns the
/// leading coefficient and the fitted value at the last index. Solved by QR
/// on the centered Vandermonde matrix.
pub fn ref_polyfit(v: &[f64], degree: usize) -> (f64, f64) {
    let w = v.len();
    let c = (w - 1) as f64 / 2.0;
    let a = DMatrix::from_fn(w, degree + 1, |i, k| (i as f64 - c).powi(k as i32));
    let b = DVector::from_column_slice(v);
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let coef = qr.r().solve_upper_triangular(&qtb).expect("full-rank Vandermonde");
    let u_last = (w - 1) as f64 - c;
    let fit = (0..=degree).map(|k| coef[k] * u_last.powi(k as i32)).sum();
    (coef[degree], fit)
}

fn peak(x: &[f64], j: usize, t: usize, w: usize, q: f64) -> bool {
    if j < 1 || j + 1 > t {
        return false;
    }
    if !(x[j - 1] < x[j] && x[j] >= x[j + 1]) {
        return false;
    }
    let lo = (j + 1).saturating_sub(w);
    x[j] > ref_percentile(&x[lo..=j], q)
}

fn calendar_unit(ts: NaiveDateTime, freq: Frequency) -> u32 {
    match freq {
        Frequency::Hourly => ts.hour(),
        Frequency::Daily => ts.weekday().num_days_from_monday(),
        Frequency::Monthly => ts.month(),
    }
}

fn euclid(a: &Station, b: &Station) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Every feature of the default catalog at `(s, t)`, keyed by column name.
pub fn oracle_row(
    stations: &StationSet,
    panel: &Panel,
    config: &FeatureConfig,
    s: usize,
    t: usize,
) -> BTreeMap<String, Option<f64>> {
    let freq = panel.frequency();
    let cfg = config.resolved(freq);
    let tc = &cfg.temporal;
    let rc = &cfg.regime;
    let sc = &cfg.spatial;
    let eps = tc.epsilon;
    let n_st = panel.n_stations();
    let x: Vec<f64> = panel.series(s)[..=t].to_vec();
    let at = |j: usize, k: usize| panel.series(j)[k];
    let win = |v: &[f64], w: usize| -> Option<Vec<f64>> { (t + 1 >= w).then(|| v[t + 1 - w..=t].to_vec()) };

    let mut out: BTreeMap<String, Option<f64>> = BTreeMap::new();
    let mut put = |name: String, v: Option<f64>| {
        out.insert(name, v);
    };

    for &k in tc.lags.as_ref().unwrap() {
        put(format!("lag_{k}"), (t >= k).then(|| x[t - k]));
    }
    let windows = tc.windows.clone().unwrap();
    for &w in &windows {
        let wv = win(&x, w);
        put(format!("rollmean_{w}"), wv.as_ref().map(|v| mean(v)));
        put(format!("rollstd_{w}"), wv.as_ref().map(|v| pstd(v)));
        put(format!("rollmin_{w}"), wv.as_ref().map(|v| sorted(v)[0]));
        put(format!("rollmax_{w}"), wv.as_ref().map(|v| sorted(v)[w - 1]));
        put(format!("cv_{w}"), wv.as_ref().map(|v| pstd(v) / (mean(v) + eps)));
        put(
            format!("iqr_{w}"),
            wv.as_ref().map(|v| ref_percentile(v, 75.0) - ref_percentile(v, 25.0)),
        );
        let sum = wv.as_ref().map(|v| v.iter().sum::<f64>());
        put(format!("cumsum_{w}"), sum);
        put(format!("cumratio_{w}"), sum.map(|s| x[t] / (s + eps)));
        if w >= tc.trend_degree as usize + 2 {
            let fit = wv.as_ref().map(|v| ref_polyfit(v, tc.trend_degree as usize));
            put(format!("trend_slope_{w}"), fit.map(|f| f.0));
            put(format!("trend_fit_{w}"), fit.map(|f| f.1));
        }
        let prev_mean = (t >= w).then(|| mean(&x[t - w..t]));
        put(
            format!("zscore_{w}"),
            wv.as_ref().map(|v| (x[t] - mean(v)) / (pstd(v) + eps)),
        );
        put(
            format!("trend_dir_{w}"),
            wv.as_ref().map(|v| match prev_mean {
                Some(p) if mean(v) > p => 1.0,
                Some(p) if mean(v) < p => -1.0,
                _ => 0.0,
            }),
        );
        put(
            format!("relpos_{w}"),
            wv.as_ref().map(|v| {
                let s = sorted(v);
                (x[t] - s[0]) / (s[w - 1] - s[0] + eps)
            }),
        );
    }
    put("diff_1".into(), (t >= 1).then(|| x[t] - x[t - 1]));
    put("diff_2".into(), (t >= 2).then(|| x[t] - 2.0 * x[t - 1] + x[t - 2]));

    let mut periods: Vec<f64> = tc.seasonal_periods.clone().unwrap();
    periods.extend(freq.default_seasonal_periods());
    for p in periods {
        let angle = 2.0 * std::f64::consts::PI * t as f64 / p;
        put(format!("sin_{p}"), Some(angle.sin()));
        put(format!("cos_{p}"), Some(angle.cos()));
    }

    // prior rows sharing the calendar unit of t
    let ts = panel.timestamps();
    let unit = calendar_unit(ts[t], freq);
    let prior: Vec<f64> = (0..t).filter(|&k| calendar_unit(ts[k], freq) == unit).map(|k| x[k]).collect();
    let (cm, cs, ca) = if prior.len() < 2 {
        (x[t], 0.0, 0.0)
    } else {
        (mean(&prior), pstd(&prior), (x[t] - mean(&prior)) / (pstd(&prior) + eps))
    };
    put("cyc_mean".into(), Some(cm));
    put("cyc_std".into(), Some(cs));
    put("cyc_anom".into(), Some(ca));

    let wmax = *windows.iter().max().unwrap();
    let q = tc.peak_percentile;
    let (is_peak, since) = if t < 2 {
        (None, None)
    } else {
        let flag = if peak(&x, t - 1, t, wmax, q) { 1.0 } else { 0.0 };
        let mut since = wmax;
        for d in 1..=wmax.min(t) {
            if peak(&x, t - d, t, wmax, q) {
                since = d;
                break;
            }
        }
        (Some(flag), Some(since as f64))
    };
    put("is_peak".into(), is_peak);
    put("steps_since_peak".into(), since);

    put(
        "var_ratio".into(),
        (t + 1 >= rc.long_window).then(|| {
            let short = pstd(&x[t + 1 - rc.short_window..]).powi(2);
            let long = pstd(&x[t + 1 - rc.long_window..]).powi(2);
            short / (long + rc.epsilon)
        }),
    );

    let n = t + 1;
    let stage_names = ["stage1_mean", "stage2_mean", "stage3_mean", "stage_change_12", "stage_change_23", "stage_id"];
    if n >= 6 {
        let mut lens = [n / 3; 3];
        for len in lens.iter_mut().take(n % 3) {
            *len += 1;
        }
        let m1 = mean(&x[..lens[0]]);
        let m2 = mean(&x[lens[0]..lens[0] + lens[1]]);
        let m3 = mean(&x[lens[0] + lens[1]..]);
        let vals = [
            m1,
            m2,
            m3,
            (m2 - m1) / (m1.abs() + rc.epsilon),
            (m3 - m2) / (m2.abs() + rc.epsilon),
            3.0,
        ];
        for (name, v) in stage_names.iter().zip(vals) {
            put((*name).into(), Some(v));
        }
    } else {
        for name in stage_names {
            put(name.into(), None);
        }
    }

    // spatial
    let st = stations.stations();
    let mut pairs = Vec::new();
    for i in 0..n_st {
        for j in i + 1..n_st {
            pairs.push(euclid(&st[i], &st[j]));
        }
    }
    let pairs = sorted(&pairs);
    let m = pairs.len();
    let sigma = sc.sigma.unwrap_or(if m % 2 == 1 { pairs[m / 2] } else { (pairs[m / 2 - 1] + pairs[m / 2]) / 2.0 });
    let weight = |j: usize| (-euclid(&st[s], &st[j]) / sigma).exp();

    let (mut num, mut den) = (0.0, 0.0);
    for j in (0..n_st).filter(|&j| j != s) {
        num += weight(j) * at(j, t);
        den += weight(j);
    }
    put("dwavg".into(), Some(num / den));

    let mut order: Vec<usize> = (0..n_st).filter(|&j| j != s).collect();
    order.sort_by(|&a, &b| {
        euclid(&st[s], &st[a])
            .partial_cmp(&euclid(&st[s], &st[b]))
            .unwrap()
            .then_with(|| st[a].id.cmp(&st[b].id))
    });
    for r in 1..=sc.k_nearest {
        let j = order[r - 1];
        put(format!("nn{r}_val"), Some(at(j, t)));
        put(format!("nn{r}_wval"), Some(weight(j) * at(j, t)));
    }

    let gw = sc.gradient_window;
    let roll = |j: usize| -> Option<f64> { (t + 1 >= gw).then(|| mean(&panel.series(j)[t + 1 - gw..=t])) };
    let grads = roll(s).map(|own| {
        let others: Vec<f64> = (0..n_st).filter(|&j| j != s).map(|j| roll(j).unwrap()).collect();
        (own - roll(order[0]).unwrap(), own - mean(&others))
    });
    put("grad_nn1".into(), grads.map(|g| g.0));
    put("grad_all".into(), grads.map(|g| g.1));

    if freq == Frequency::Hourly {
        let now: Vec<f64> = (0..n_st).map(|j| at(j, t)).collect();
        put("region_mean".into(), Some(mean(&now)));
        put("region_std".into(), Some(pstd(&now)));
        put("sync_dev".into(), Some((at(s, t) - mean(&now)) / (pstd(&now) + sc.epsilon)));
    } else {
        for &w in &sc.cross_windows {
            let stats = (t + 1 >= w).then(|| {
                let range = t + 1 - w..=t;
                let regional: Vec<f64> =
                    range.clone().map(|k| mean(&(0..n_st).map(|j| at(j, k)).collect::<Vec<_>>())).collect();
                let loo: Vec<f64> = range
                    .clone()
                    .map(|k| mean(&(0..n_st).filter(|&j| j != s).map(|j| at(j, k)).collect::<Vec<_>>()))
                    .collect();
                (mean(&regional), pstd(&regional), pearson0(&x[t + 1 - w..=t], &loo))
            });
            put(format!("xmean_{w}"), stats.map(|v| v.0));
            put(format!("xstd_{w}"), stats.map(|v| v.1));
            put(format!("xcorr_{w}"), stats.map(|v| v.2));
        }
    }
    out
}
