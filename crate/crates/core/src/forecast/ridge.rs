//! Closed-form ridge regression on z-scored features.

use nalgebra::{DMatrix, DVector};

use super::{Backend, FitState, Standardizer};
use crate::error::ForecastError;
use crate::model::FeatureTable;

#[derive(Debug, Clone)]
pub struct RidgeBackend {
    pub lambda: f64,
}

impl Backend for RidgeBackend {
    fn id(&self) -> &str {
        "ridge"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "lambda": self.lambda })
    }

    fn fit(&self, train: &FeatureTable, _seed: u64) -> Result<Box<dyn FitState>, ForecastError> {
        Ok(Box::new(RidgeModel::fit(train, self.lambda)?))
    }
}

/// Fitted ridge model. Coefficients live in standardized space; the
/// intercept is the training target mean and is not penalized.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    schema: Vec<String>,
    scaler: Standardizer,
    beta: Vec<f64>,
    intercept: f64,
}

impl RidgeModel {
    pub fn fit(train: &FeatureTable, lambda: f64) -> Result<Self, ForecastError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ForecastError::Config(format!("ridge lambda must be >= 0, got {lambda}")));
        }
        let y = super::training_target(train)?;
        let scaler = Standardizer::fit(train);
        let n = train.n_rows();
        let p = train.schema().len();
        let y_mean = y.iter().sum::<f64>() / n as f64;

        let z = DMatrix::from_fn(n, p, |r, c| scaler.transform(c, train.rows()[r][c]));
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.transpose() * &z;
        for d in 0..p {
            gram[(d, d)] += lambda;
        }
        let rhs = z.transpose() * yc;
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| ForecastError::Training(format!("ridge solve failed: {e}")))?,
        };
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(ForecastError::Training("ridge produced non-finite coefficients".into()));
        }
        Ok(Self {
            schema: train.schema().to_vec(),
            scaler,
            beta: beta.iter().copied().collect(),
            intercept: y_mean,
        })
    }

    /// Coefficients on the original feature scale.
    pub fn coefficients(&self) -> Vec<f64> {
        self.beta.iter().enumerate().map(|(c, b)| b / self.scaler.scale[c]).collect()
    }

    /// Intercept on the original feature scale.
    pub fn intercept(&self) -> f64 {
        let shift: f64 = self
            .coefficients()
            .iter()
            .zip(&self.scaler.mean)
            .map(|(b, m)| b * m)
            .sum();
        self.intercept - shift
    }

    fn predict_one(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (c, (b, x)) in self.beta.iter().zip(row).enumerate() {
            acc += b * self.scaler.transform(c, *x);
        }
        acc
    }
}

impl FitState for RidgeModel {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        Ok(rows.rows().iter().map(|r| self.predict_one(r)).collect())
    }
}
