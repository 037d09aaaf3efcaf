//! Time-varying-parameter VAR with forgetting factors.
//!
//! Coefficients follow a random walk whose innovation covariance is never
//! estimated: the prediction step inflates the state covariance by `1/kappa1`,
//! and the residual covariance is an exponentially weighted average with decay
//! `kappa2`.

mod kalman;
mod lag;
mod vma;

pub use kalman::{kalman_tvp, TvpVarConfig, TvpVarPath};
pub use lag::{select_lag, LagSelection};
pub use vma::{companion_spectral_radius, stabilize, vma, VmaOperator};

/// Stacks lags `[y_{t-1}; ...; y_{t-p}]` for row `t` of an `N`-column panel.
pub(crate) fn regressors(panel: &[Vec<f64>], t: usize, p: usize, out: &mut [f64]) {
    let n = panel.len();
    for l in 1..=p {
        for (j, s) in panel.iter().enumerate() {
            out[(l - 1) * n + j] = s[t - l];
        }
    }
}

pub(crate) fn check_panel(panel: &[Vec<f64>]) -> crate::Result<usize> {
    let Some(first) = panel.first() else {
        return Err(crate::Error::TvpVar("empty panel".into()));
    };
    let t = first.len();
    if panel.iter().any(|s| s.len() != t) {
        return Err(crate::Error::TvpVar("series lengths differ".into()));
    }
    if panel.iter().flatten().any(|v| !v.is_finite()) {
        return Err(crate::Error::TvpVar("non-finite value in panel".into()));
    }
    Ok(t)
}
