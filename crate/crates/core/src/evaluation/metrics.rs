//! Point-forecast error metrics.

use std::collections::BTreeMap;

use crate::error::EvalError;
use crate::model::Metrics;

/// Observed values at or below this magnitude make MAPE undefined.
pub const MAPE_ZERO_TOL: f64 = 1e-9;

fn check(y: &[f64], yhat: &[f64], min_len: usize) -> Result<(), EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.len() < min_len {
        return Err(EvalError::TooFew(min_len));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check(y, yhat, 1)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    mse(y, yhat).map(f64::sqrt)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check(y, yhat, 1)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (b - a).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], yhat: &[f64], zero_tol: f64) -> Result<f64, EvalError> {
    check(y, yhat, 1)?;
    if let Some(v) = y.iter().find(|v| v.abs() <= zero_tol) {
        return Err(EvalError::MapeUndefined(*v));
    }
    let sum: f64 = y.iter().zip(yhat).map(|(a, b)| ((b - a) / a).abs()).sum();
    Ok(100.0 * sum / y.len() as f64)
}

/// Kling-Gupta efficiency and its three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kge {
    pub kge: f64,
    pub r: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// KGE with population moments. Refuses when either series is constant or
/// has zero mean, naming the failed condition.
pub fn kge(y: &[f64], yhat: &[f64]) -> Result<Kge, EvalError> {
    check(y, yhat, 2)?;
    let n = y.len() as f64;
    let mu_y = y.iter().sum::<f64>() / n;
    let mu_p = yhat.iter().sum::<f64>() / n;
    let var_y = y.iter().map(|v| (v - mu_y) * (v - mu_y)).sum::<f64>() / n;
    let var_p = yhat.iter().map(|v| (v - mu_p) * (v - mu_p)).sum::<f64>() / n;
    let cov = y.iter().zip(yhat).map(|(a, b)| (a - mu_y) * (b - mu_p)).sum::<f64>() / n;
    let (sd_y, sd_p) = (var_y.sqrt(), var_p.sqrt());

    let refuse = |why: &str| Err(EvalError::KgeUndefined(why.to_owned()));
    if sd_y == 0.0 {
        return refuse("observed series has zero variance");
    }
    if sd_p == 0.0 {
        return refuse("predicted series has zero variance");
    }
    if mu_y == 0.0 {
        return refuse("observed series has zero mean");
    }
    if mu_p == 0.0 {
        return refuse("predicted series has zero mean");
    }

    let r = cov / (sd_p * sd_y);
    let beta = mu_p / mu_y;
    let gamma = (sd_p / mu_p) / (sd_y / mu_y);
    let kge = 1.0 - ((r - 1.0).powi(2) + (beta - 1.0).powi(2) + (gamma - 1.0).powi(2)).sqrt();
    Ok(Kge { kge, r, beta, gamma })
}

/// Every metric whose preconditions hold; the rest are recorded as refusals.
pub fn score(y: &[f64], yhat: &[f64]) -> Result<Metrics, EvalError> {
    let mse = mse(y, yhat)?;
    let mut refusals = BTreeMap::new();
    let mape = match mape(y, yhat, MAPE_ZERO_TOL) {
        Ok(v) => Some(v),
        Err(e) => {
            refusals.insert("mape".to_owned(), e.to_string());
            None
        }
    };
    let k = match kge(y, yhat) {
        Ok(k) => Some(k),
        Err(e) => {
            refusals.insert("kge".to_owned(), e.to_string());
            None
        }
    };
    Ok(Metrics {
        n: y.len(),
        mse,
        rmse: mse.sqrt(),
        mae: mae(y, yhat)?,
        mape,
        kge: k.map(|k| k.kge),
        r: k.map(|k| k.r),
        beta: k.map(|k| k.beta),
        gamma: k.map(|k| k.gamma),
        refusals,
    })
}

/// Unweighted mean of each metric over several evaluations. An optional
/// metric survives only if every input defines it.
pub fn average(items: &[Metrics]) -> Metrics {
    let m = items.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / m;
    let mean_opt = |f: fn(&Metrics) -> Option<f64>| {
        items.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / m)
    };
    let mut refusals = BTreeMap::new();
    for (k, item) in items.iter().enumerate() {
        for (metric, why) in &item.refusals {
            refusals.entry(metric.clone()).or_insert_with(|| format!("origin {k}: {why}"));
        }
    }
    Metrics {
        n: items.iter().map(|i| i.n).sum(),
        mse: mean(|i| i.mse),
        rmse: mean(|i| i.rmse),
        mae: mean(|i| i.mae),
        mape: mean_opt(|i| i.mape),
        kge: mean_opt(|i| i.kge),
        r: mean_opt(|i| i.r),
        beta: mean_opt(|i| i.beta),
        gamma: mean_opt(|i| i.gamma),
        refusals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_examples() {
        let y = [1.0, 2.0, 3.0];
        let p = [2.0, 2.0, 2.0];
        assert_abs_diff_eq!(mse(&y, &p).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse(&y, &p).unwrap(), (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(mae(&y, &p).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mape(&[1.0, 2.0], &[2.0, 2.0], MAPE_ZERO_TOL).unwrap(), 50.0);
        assert_eq!(mape(&[4.0], &[5.0], MAPE_ZERO_TOL).unwrap(), 25.0);
    }

    #[test]
    fn guards() {
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(mse(&[], &[]), Err(EvalError::TooFew(1))));
        assert!(matches!(mape(&[0.0, 1.0], &[1.0, 1.0], MAPE_ZERO_TOL), Err(EvalError::MapeUndefined(_))));
        let err = kge(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains("predicted series has zero variance"), "{err}");
    }

    #[test]
    fn kge_identities() {
        let y = [1.0, 3.0, 2.0, 5.0];
        let k = kge(&y, &y).unwrap();
        assert_eq!((k.kge, k.r, k.beta, k.gamma), (1.0, 1.0, 1.0, 1.0));
        let doubled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let k = kge(&y, &doubled).unwrap();
        assert_abs_diff_eq!(k.r, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.beta, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.gamma, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.kge, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn score_records_refusals() {
        let m = score(&[0.0, 1.0], &[0.5, 1.5]).unwrap();
        assert_eq!(m.mape, None);
        assert!(m.refusals["mape"].contains("MAPE undefined for this series"));
        assert!(m.kge.is_some());
    }

    #[test]
    fn average_is_unweighted() {
        let a = score(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let b = score(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        let avg = average(&[a, b]);
        assert_eq!(avg.mae, 0.5);
        assert_eq!(avg.n, 6);
        assert_eq!(avg.mape, Some((0.0 + b_mape()) / 2.0));
    }

    fn b_mape() -> f64 {
        mape(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0], MAPE_ZERO_TOL).unwrap()
    }
}
