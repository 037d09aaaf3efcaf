use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::density::{gc_gamma, gc_psi};
use super::GjrskParams;
use crate::{stats, Error, Result};

/// Clamp range for conditional skewness inside the recursion.
pub const S_BOUNDS: (f64, f64) = (-3.0, 3.0);
/// Clamp range for conditional kurtosis inside the recursion.
pub const K_BOUNDS: (f64, f64) = (1.2, 30.0);

pub(crate) const MIN_LEN: usize = 10;

/// Filtered residuals and conditional moments, one entry per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPath {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    /// Number of times `s_t` or `k_t` hit its clamp bound.
    pub clamp_events: usize,
}

impl MomentPath {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `date,eps,eta,h,s,k` rows.
    pub fn to_csv(&self, dates: &[NaiveDate]) -> String {
        let mut out = String::from("date,eps,eta,h,s,k\n");
        for (t, d) in dates.iter().enumerate().take(self.len()) {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                d.format("%Y-%m-%d"),
                self.eps[t],
                self.eta[t],
                self.h[t],
                self.s[t],
                self.k[t]
            ));
        }
        out
    }
}

/// Which likelihood contribution to maximize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoglikForm {
    /// `-1/2 ln h - 1/2 eta^2 + ln Psi^2 - ln Gamma`: the log of the density.
    #[default]
    LogDensity,
    /// Same but subtracting `Gamma` itself rather than its logarithm. Kept for
    /// comparison with the printed form of the likelihood; not a density.
    PaperLiteral,
}

// Starting values of the recursion, taken from the sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Init {
    h: f64,
    s: f64,
    k: f64,
}

impl Init {
    pub(crate) fn from_sample(r: &[f64]) -> Self {
        Self {
            h: stats::variance(r),
            s: stats::skewness(r).clamp(-1.0, 1.0),
            k: stats::kurtosis(r).clamp(2.0, 10.0),
        }
    }
}

/// Runs the moment recursions over `r`. The first observation uses the sample
/// variance, sample skewness clamped to `[-1, 1]` and sample kurtosis clamped to
/// `[2, 10]`; `r_0` and `eta_0` are taken as zero.
pub fn filter_moments(params: &GjrskParams, r: &[f64]) -> Result<MomentPath> {
    if r.len() < MIN_LEN {
        return Err(Error::InvalidParams(format!(
            "series of length {} is shorter than {MIN_LEN}",
            r.len()
        )));
    }
    let n = r.len();
    let mut path = MomentPath {
        eps: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        clamp_events: 0,
    };
    run(params, r, Init::from_sample(r), |_, e, eta, h, s, k, clamped| {
        path.eps.push(e);
        path.eta.push(eta);
        path.h.push(h);
        path.s.push(s);
        path.k.push(k);
        path.clamp_events += clamped as usize;
    })?;
    Ok(path)
}

/// Sum of per-observation log-likelihood contributions, the constant
/// `-1/2 ln(2 pi)` per observation dropped. Invalid filter states (e.g. a
/// non-positive variance) give `-inf`.
pub fn loglik(params: &GjrskParams, r: &[f64]) -> f64 {
    loglik_with(params, r, LoglikForm::LogDensity)
}

pub fn loglik_with(params: &GjrskParams, r: &[f64], form: LoglikForm) -> f64 {
    if r.len() < MIN_LEN {
        return f64::NEG_INFINITY;
    }
    loglik_init(params, r, Init::from_sample(r), form)
}

pub(crate) fn loglik_init(params: &GjrskParams, r: &[f64], init: Init, form: LoglikForm) -> f64 {
    let mut total = 0.0;
    let res = match form {
        LoglikForm::LogDensity => {
            // Density ratios are multiplied up and logged only when the
            // running product leaves [1e-150, 1e150]; one ln per block.
            let mut prod = 1.0f64;
            let res = run(params, r, init, |_, _, eta, h, s, k, _| {
                let psi = gc_psi(eta, s, k);
                let psi2 = (psi * psi).max(f64::MIN_POSITIVE);
                prod *= psi2 / (gc_gamma(s, k) * h.sqrt());
                total -= 0.5 * eta * eta;
                if !(1e-150..=1e150).contains(&prod) {
                    total += prod.ln();
                    prod = 1.0;
                }
            });
            total += prod.ln();
            res
        }
        LoglikForm::PaperLiteral => run(params, r, init, |_, _, eta, h, s, k, _| {
            let psi = gc_psi(eta, s, k);
            let psi2 = (psi * psi).max(f64::MIN_POSITIVE);
            total += -0.5 * h.ln() - 0.5 * eta * eta + psi2.ln() - gc_gamma(s, k);
        }),
    };
    match res {
        Ok(()) if total.is_finite() => total,
        _ => f64::NEG_INFINITY,
    }
}

#[inline(always)]
fn run<F>(p: &GjrskParams, r: &[f64], init: Init, mut sink: F) -> Result<()>
where
    F: FnMut(usize, f64, f64, f64, f64, f64, bool),
{
    let [b0, b1, b2, b3] = p.beta;
    let [g0, g1, g2, g3] = p.gamma;
    let [d0, d1, d2, d3] = p.delta;
    let (mut h, mut s, mut k) = (init.h, init.s, init.k);
    let mut e = r[0];
    let mut eta = e / h.sqrt();
    if !(h > 0.0) {
        return Err(Error::InvalidParams("non-positive initial variance".into()));
    }
    sink(0, e, eta, h, s, k, false);
    for t in 1..r.len() {
        let neg = eta < 0.0;
        let e2 = e * e;
        let eta3 = eta * eta * eta;
        let eta4 = eta3 * eta;
        h = b0 + (b1 + if neg { b3 } else { 0.0 }) * e2 + b2 * h;
        let s_raw = g0 + (g1 + if neg { g3 } else { 0.0 }) * eta3 + g2 * s;
        let k_raw = d0 + (d1 + if neg { d3 } else { 0.0 }) * eta4 + d2 * k;
        s = s_raw.clamp(S_BOUNDS.0, S_BOUNDS.1);
        k = k_raw.clamp(K_BOUNDS.0, K_BOUNDS.1);
        let clamped = s != s_raw || k != k_raw;
        if !(h > 0.0 && h.is_finite()) || s.is_nan() || k.is_nan() {
            return Err(Error::InvalidParams(format!("conditional variance {h} at t={t}")));
        }
        e = r[t] - p.alpha1 * r[t - 1];
        eta = e / h.sqrt();
        sink(t, e, eta, h, s, k, clamped);
    }
    Ok(())
}
