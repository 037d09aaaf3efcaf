use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_panel, regressors};
use crate::linalg::{ln_det_spd, ols};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub p: usize,
    /// AIC for p = 1..=p_max.
    pub aic: Vec<f64>,
    pub bic: Vec<f64>,
}

/// Fits constant-coefficient VAR(p) models (no intercept) by least squares on a
/// common sample for `p = 1..=p_max` and returns the AIC minimizer, ties going
/// to the smaller lag.
pub fn select_lag(panel: &[Vec<f64>], p_max: usize) -> Result<LagSelection> {
    let t = check_panel(panel)?;
    let n = panel.len();
    if p_max == 0 {
        return Err(Error::LagSelection("p_max must be at least 1".into()));
    }
    if t <= p_max * n + 10 {
        return Err(Error::LagSelection(format!(
            "{t} observations are too few for {n} variables at p_max={p_max}"
        )));
    }
    let rows = t - p_max;
    let y = DMatrix::from_fn(rows, n, |i, j| panel[j][p_max + i]);
    let mut aic = Vec::with_capacity(p_max);
    let mut bic = Vec::with_capacity(p_max);
    let mut buf = vec![0.0; n * p_max];
    for p in 1..=p_max {
        let k = n * p;
        let mut x = DMatrix::zeros(rows, k);
        for i in 0..rows {
            regressors(panel, p_max + i, p, &mut buf[..k]);
            for c in 0..k {
                x[(i, c)] = buf[c];
            }
        }
        let b = ols(&x, &y).map_err(|e| Error::LagSelection(e.to_string()))?;
        let resid = &y - &x * b;
        let sigma = resid.transpose() * &resid / rows as f64;
        let ld =
            ln_det_spd(&sigma).ok_or_else(|| Error::LagSelection(format!("singular residual covariance at p={p}")))?;
        let params = (p * n * n) as f64;
        aic.push(ld + 2.0 * params / rows as f64);
        bic.push(ld + (rows as f64).ln() * params / rows as f64);
    }
    let mut best = 0;
    for (i, v) in aic.iter().enumerate() {
        if *v < aic[best] {
            best = i;
        }
    }
    Ok(LagSelection { p: best + 1, aic, bic })
}
