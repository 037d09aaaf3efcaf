use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::vma::stabilize;
use super::{check_panel, regressors};
use crate::linalg::{eigen_floor, ols, symmetrize};
use crate::{stats, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct TvpVarConfig {
    /// Lag order.
    pub p: usize,
    /// Coefficient forgetting factor.
    pub kappa1: f64,
    /// Residual-covariance decay factor.
    pub kappa2: f64,
    /// Rows used for the least-squares initialization.
    pub prior_obs: usize,
    /// Multiplier on the OLS coefficient covariance for the initial state.
    pub prior_cov_scale: f64,
    /// Admissible range for both forgetting factors.
    pub kappa_bounds: (f64, f64),
    /// Fraction of filter steps with an eigenvalue floor event above which a
    /// warning is attached to the result.
    pub floor_warn_fraction: f64,
    /// Cap on the companion spectral radius of the reported coefficients.
    /// A filtered estimate at or above it is shrunk onto the cap before it is
    /// stored; the filter state itself is not altered. `None` reports the raw
    /// estimates.
    pub max_radius: Option<f64>,
}

impl Default for TvpVarConfig {
    fn default() -> Self {
        Self {
            p: 1,
            kappa1: 0.99,
            kappa2: 0.96,
            prior_obs: 200,
            prior_cov_scale: 4.0,
            kappa_bounds: (0.9, 1.0),
            floor_warn_fraction: 0.01,
            max_radius: Some(0.99),
        }
    }
}

impl TvpVarConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kappa_bounds;
        if self.p == 0 {
            return Err(Error::TvpVar("lag order must be at least 1".into()));
        }
        for (name, k) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(k >= lo && k <= hi && k > 0.0 && k <= 1.0) {
                return Err(Error::TvpVar(format!("{name}={k} outside [{lo}, {hi}]")));
            }
        }
        if let Some(r) = self.max_radius {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::TvpVar(format!("max_radius={r} outside (0, 1)")));
            }
        }
        if !(self.prior_cov_scale > 0.0) {
            return Err(Error::TvpVar("prior_cov_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Filtered coefficients and covariances. Entry `i` belongs to panel row
/// `start + i`; the first `prior_obs` entries repeat the least-squares
/// initialization and are flagged as burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct TvpVarPath {
    pub n: usize,
    pub p: usize,
    pub start: usize,
    /// `N x (N p)` stacked `[Phi_1 ... Phi_p]`.
    pub phi: Vec<DMatrix<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    /// Per-equation coefficient variances, `N x (N p)`: row `j` holds the
    /// diagonal of equation `j`'s state covariance.
    pub state_var: Vec<DMatrix<f64>>,
    pub burn_in: Vec<bool>,
    pub floor_events: usize,
    /// Dates whose coefficients were shrunk onto `max_radius`.
    pub stabilized: usize,
    /// Largest companion radius of the filtered estimates before shrinking.
    pub max_raw_radius: f64,
    pub warnings: Vec<String>,
}

impl TvpVarPath {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Long CSV `date,i,j,value` for one matrix family.
    pub fn family_csv(&self, family: &[DMatrix<f64>], dates: &[NaiveDate]) -> String {
        let mut out = String::from("date,i,j,value\n");
        for (m, d) in family.iter().zip(&dates[self.start..]) {
            let ds = d.format("%Y-%m-%d");
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push_str(&format!("{ds},{i},{j},{:.12e}\n", m[(i, j)]));
                }
            }
        }
        out
    }
}

/// Per-equation Kalman filter with forgetting. The state is initialized from
/// least squares on the first `prior_obs` regression rows, with covariance
/// `prior_cov_scale * sigma_jj (X'X)^{-1}`. Each step predicts
/// `P <- P / kappa1`, updates with observation variance `Sigma_{t-1,jj}`, and
/// then sets `Sigma_t = kappa2 Sigma_{t-1} + (1 - kappa2) e e'` from the
/// one-step prediction errors, symmetrized and floored at
/// `1e-12 * trace / N`.
pub fn kalman_tvp(panel: &[Vec<f64>], cfg: &TvpVarConfig) -> Result<TvpVarPath> {
    cfg.validate()?;
    let t_len = check_panel(panel)?;
    let n = panel.len();
    let p = cfg.p;
    let k = n * p;
    if t_len < cfg.prior_obs + p + 10 {
        return Err(Error::TvpVar(format!(
            "{t_len} observations, need at least {}",
            cfg.prior_obs + p + 10
        )));
    }
    if cfg.prior_obs < k + 2 {
        return Err(Error::TvpVar(format!(
            "prior_obs={} too small for {k} regressors",
            cfg.prior_obs
        )));
    }
    for (j, s) in panel.iter().enumerate() {
        if stats::variance(s) == 0.0 {
            return Err(Error::TvpVar(format!("series {j} has zero variance")));
        }
    }

    let rows = t_len - p;
    let m0 = cfg.prior_obs;
    let mut buf = vec![0.0; k];
    let mut x0 = DMatrix::zeros(m0, k);
    for i in 0..m0 {
        regressors(panel, p + i, p, &mut buf);
        for c in 0..k {
            x0[(i, c)] = buf[c];
        }
    }
    let y0 = DMatrix::from_fn(m0, n, |i, j| panel[j][p + i]);
    let b0 = ols(&x0, &y0).map_err(|e| Error::TvpVar(format!("initialization: {e}")))?;
    let resid = &y0 - &x0 * &b0;
    let mut sigma = resid.transpose() * &resid / (m0 - k) as f64;
    symmetrize(&mut sigma);
    let floor0 = 1e-12 * sigma.trace() / n as f64;
    sigma = eigen_floor(&sigma, floor0).0;

    let xtx = x0.transpose() * &x0;
    let xtx_inv = match xtx.clone().cholesky() {
        Some(c) => c.inverse(),
        None => {
            let ridge = 1e-10 * xtx.trace() / k as f64;
            (xtx + DMatrix::identity(k, k) * ridge)
                .cholesky()
                .ok_or_else(|| Error::TvpVar("singular initialization regressors".into()))?
                .inverse()
        }
    };

    // state per equation: coefficients on the stacked regressors
    let mut beta: Vec<DVector<f64>> = (0..n).map(|j| b0.column(j).into_owned()).collect();
    let mut cov: Vec<DMatrix<f64>> = (0..n)
        .map(|j| &xtx_inv * (cfg.prior_cov_scale * sigma[(j, j)]))
        .collect();

    let stack_phi = |beta: &[DVector<f64>]| DMatrix::from_fn(n, k, |i, c| beta[i][c]);
    let stack_var = |cov: &[DMatrix<f64>]| DMatrix::from_fn(n, k, |i, c| cov[i][(c, c)]);

    let mut path = TvpVarPath {
        n,
        p,
        start: p,
        phi: Vec::with_capacity(rows),
        sigma: Vec::with_capacity(rows),
        state_var: Vec::with_capacity(rows),
        burn_in: Vec::with_capacity(rows),
        floor_events: 0,
        stabilized: 0,
        max_raw_radius: 0.0,
        warnings: Vec::new(),
    };
    let report = |mut phi: DMatrix<f64>, path: &mut TvpVarPath| {
        if let Some(cap) = cfg.max_radius {
            let r = stabilize(&mut phi, cap);
            path.max_raw_radius = path.max_raw_radius.max(r);
            path.stabilized += (r >= cap) as usize;
        }
        phi
    };
    let phi0 = report(stack_phi(&beta), &mut path);
    let var0 = stack_var(&cov);
    for _ in 0..m0 {
        path.phi.push(phi0.clone());
        path.sigma.push(sigma.clone());
        path.state_var.push(var0.clone());
        path.burn_in.push(true);
    }

    let mut x = DVector::zeros(k);
    let mut innov = DVector::zeros(n);
    for i in m0..rows {
        let t = p + i;
        regressors(panel, t, p, x.as_mut_slice());
        for j in 0..n {
            let pj = &mut cov[j];
            *pj /= cfg.kappa1;
            let px = &*pj * &x;
            let s = x.dot(&px) + sigma[(j, j)];
            let e = panel[j][t] - beta[j].dot(&x);
            innov[j] = e;
            let gain = &px / s;
            beta[j] += &gain * e;
            // P <- P - K x'P, with P symmetric so x'P = (P x)'
            pj.ger(-1.0, &gain, &px, 1.0);
            symmetrize(pj);
        }
        let mut next = &sigma * cfg.kappa2 + (&innov * innov.transpose()) * (1.0 - cfg.kappa2);
        symmetrize(&mut next);
        let floor = 1e-12 * next.trace() / n as f64;
        let (floored, lifted) = eigen_floor(&next, floor);
        path.floor_events += lifted as usize;
        sigma = floored;

        if beta.iter().any(|b| b.iter().any(|v| !v.is_finite())) || sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::TvpVar(format!("non-finite filter state at row {t}")));
        }
        let phi = report(stack_phi(&beta), &mut path);
        path.phi.push(phi);
        path.sigma.push(sigma.clone());
        path.state_var.push(stack_var(&cov));
        path.burn_in.push(false);
    }

    let steps = (rows - m0).max(1);
    if path.floor_events as f64 / steps as f64 > cfg.floor_warn_fraction {
        path.warnings.push(format!(
            "residual covariance floored at {} of {steps} steps",
            path.floor_events
        ));
    }
    if path.stabilized > 0 {
        path.warnings.push(format!(
            "coefficients shrunk onto radius {} at {} of {rows} dates (raw radius up to {:.3})",
            cfg.max_radius.unwrap_or(1.0),
            path.stabilized,
            path.max_raw_radius
        ));
    }
    Ok(path)
}
