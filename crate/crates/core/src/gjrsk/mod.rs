//! Conditional volatility, skewness and kurtosis with leverage terms.
//!
//! Mean, variance, skewness and kurtosis follow
//!
//! ```text
//! r_t   = a1 r_{t-1} + e_t
//! h_t   = b0 + b1 e_{t-1}^2 + b2 h_{t-1} + b3 e_{t-1}^2 1{eta_{t-1} < 0}
//! s_t   = g0 + g1 eta_{t-1}^3 + g2 s_{t-1} + g3 eta_{t-1}^3 1{eta_{t-1} < 0}
//! k_t   = d0 + d1 eta_{t-1}^4 + d2 k_{t-1} + d3 eta_{t-1}^4 1{eta_{t-1} < 0}
//! eta_t = e_t / sqrt(h_t)
//! ```
//!
//! with `eta_t` drawn from the positive Gram-Charlier density
//! `phi(eta) Psi(eta)^2 / Gamma` (see [`gc_density`]).

mod density;
mod estimate;
mod filter;
mod simulate;

pub use density::{gc_cdf, gc_density, gc_gamma, gc_psi, gc_quantile};
pub use estimate::{estimate, EstimateOptions, GjrskFit};
pub use filter::{filter_moments, loglik, loglik_with, LoglikForm, MomentPath, K_BOUNDS, S_BOUNDS};
pub use simulate::simulate;

use serde::{Deserialize, Serialize};

/// Model parameters: AR(1) mean coefficient and the four coefficients of each
/// moment equation (constant, shock, persistence, negative-shock increment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GjrskParams {
    pub alpha1: f64,
    pub beta: [f64; 4],
    pub gamma: [f64; 4],
    pub delta: [f64; 4],
}

pub const N_PARAMS: usize = 13;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "alpha1", "beta0", "beta1", "beta2", "beta3", "gamma0", "gamma1", "gamma2", "gamma3", "delta0", "delta1", "delta2",
    "delta3",
];

impl GjrskParams {
    pub fn to_vec(&self) -> [f64; N_PARAMS] {
        let mut v = [0.0; N_PARAMS];
        v[0] = self.alpha1;
        v[1..5].copy_from_slice(&self.beta);
        v[5..9].copy_from_slice(&self.gamma);
        v[9..13].copy_from_slice(&self.delta);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), N_PARAMS);
        let arr = |o: usize| [v[o], v[o + 1], v[o + 2], v[o + 3]];
        Self {
            alpha1: v[0],
            beta: arr(1),
            gamma: arr(5),
            delta: arr(9),
        }
    }

    /// `b1 + b2 + b3/2`, the variance persistence under a symmetric density.
    pub fn persistence(&self) -> f64 {
        self.beta[1] + self.beta[2] + 0.5 * self.beta[3]
    }

    /// Unconditional variance implied by the variance equation, if stationary.
    pub fn unconditional_variance(&self) -> Option<f64> {
        let p = self.persistence();
        (p < 1.0).then(|| self.beta[0] / (1.0 - p))
    }

    /// Checks finiteness, `b0 > 0`, `b1, b2 >= 0` and `b1 + b2 + b3/2 < 1`.
    pub fn validate(&self) -> crate::Result<()> {
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidParams("non-finite parameter".into()));
        }
        if !(self.beta[0] > 0.0) {
            return Err(crate::Error::InvalidParams("beta0 must be positive".into()));
        }
        if self.beta[1] < 0.0 || self.beta[2] < 0.0 {
            return Err(crate::Error::InvalidParams(
                "beta1 and beta2 must be nonnegative".into(),
            ));
        }
        if self.persistence() >= 1.0 {
            return Err(crate::Error::InvalidParams(format!(
                "beta1 + beta2 + beta3/2 = {} must be below 1",
                self.persistence()
            )));
        }
        Ok(())
    }
}
