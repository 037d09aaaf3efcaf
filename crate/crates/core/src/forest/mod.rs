//! Random-forest regression with expanding-window cross-validation and
//! Gini/permutation importance.

mod cv;
mod importance;
mod model;
mod tree;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cv::{expanding_folds, ts_cross_validate, CvCell, CvResult, Fold};
pub use importance::{
    explain_target, gini_importance, permutation_importance, FeatureImportance, ImportanceReport, TargetReport,
};
pub use model::{default_grid, fit_forest, ForestModel, ForestParams, MaxFeatures};
pub use tree::{fit_tree, RegressionTree, Split, TreeNode};

pub const MIN_ROWS: usize = 51;

/// Rows in date order; `x[f][q]` is feature `f` at row `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, feature_names: Vec<String>, dates: Vec<NaiveDate>) -> Result<Self> {
        let d = Self {
            x,
            y,
            feature_names,
            dates,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.y.len();
        if q < MIN_ROWS {
            return Err(Error::CrossValidation(format!("{q} rows, need at least {MIN_ROWS}")));
        }
        if self.x.is_empty() || self.x.len() != self.feature_names.len() {
            return Err(Error::CrossValidation("feature columns and names disagree".into()));
        }
        if self.x.iter().any(|c| c.len() != q) || self.dates.len() != q {
            return Err(Error::CrossValidation("ragged dataset".into()));
        }
        if self.y.iter().chain(self.x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::CrossValidation("missing or non-finite value".into()));
        }
        if self.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::CrossValidation("rows not in date order".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.len()
    }

    pub fn row(&self, q: usize) -> Vec<f64> {
        self.x.iter().map(|c| c[q]).collect()
    }

    /// Contiguous rows `range`, without re-validation.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            x: self.x.iter().map(|c| c[range.clone()].to_vec()).collect(),
            y: self.y[range.clone()].to_vec(),
            feature_names: self.feature_names.clone(),
            dates: self.dates[range].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub rae: f64,
    pub rse: f64,
}

impl EvalMetrics {
    pub const NAMES: [&'static str; 5] = ["r2", "mae", "mse", "rae", "rse"];

    pub fn values(&self) -> [f64; 5] {
        [self.r2, self.mae, self.mse, self.rae, self.rse]
    }
}

/// Goodness of fit against the mean-of-truth benchmark.
pub fn evaluate(y: &[f64], yhat: &[f64]) -> Result<EvalMetrics> {
    if y.len() != yhat.len() || y.len() < 2 {
        return Err(Error::Metric(format!(
            "need equal lengths of at least 2, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    let q = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / q;
    let (mut abs_err, mut sq_err, mut abs_dev, mut sq_dev) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        abs_err += (a - b).abs();
        sq_err += (a - b) * (a - b);
        abs_dev += (a - ybar).abs();
        sq_dev += (a - ybar) * (a - ybar);
    }
    if sq_dev == 0.0 {
        return Err(Error::Metric("constant target".into()));
    }
    let rse = sq_err / sq_dev;
    Ok(EvalMetrics {
        r2: 1.0 - rse,
        mae: abs_err / q,
        mse: sq_err / q,
        rae: abs_err / abs_dev,
        rse,
    })
}

pub(crate) fn mse(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}
