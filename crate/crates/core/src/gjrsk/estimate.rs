use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{filter_moments, loglik_init, Init, LoglikForm, MomentPath};
use super::{GjrskParams, N_PARAMS, PARAM_NAMES};
use crate::optim::{gradient, hessian, nelder_mead, SimplexOptions};
use crate::{stats, Error, Result};

pub const MIN_ESTIMATION_LEN: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    /// Number of starting points: up to four anchors, the rest jittered.
    pub starts: usize,
    pub max_evals: usize,
    /// Relative tolerance on the objective across the simplex.
    pub rel_tol: f64,
    /// Extra simplex restarts from the best point found.
    pub restarts: usize,
    pub seed: u64,
    pub loglik_form: LoglikForm,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_evals: 5000,
            rel_tol: 1e-8,
            restarts: 3,
            seed: 0,
            loglik_form: LoglikForm::LogDensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GjrskFit {
    pub params: GjrskParams,
    /// Standard errors from the inverse of the negative numerical Hessian;
    /// `None` where the Hessian gives no positive variance.
    pub std_errors: [Option<f64>; N_PARAMS],
    /// Total log-likelihood without the `-1/2 ln(2 pi)` per-observation constant.
    pub loglik: f64,
    pub path: MomentPath,
    pub converged: bool,
    /// Objective evaluations over all starts and restarts.
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl GjrskFit {
    pub fn to_json(&self) -> serde_json::Value {
        let p = self.params.to_vec();
        let params: serde_json::Map<String, serde_json::Value> = PARAM_NAMES
            .iter()
            .zip(p)
            .map(|(n, v)| (n.to_string(), serde_json::json!(v)))
            .collect();
        let ses: serde_json::Map<String, serde_json::Value> = PARAM_NAMES
            .iter()
            .zip(self.std_errors)
            .map(|(n, v)| (n.to_string(), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "params": params,
            "std_errors": ses,
            "loglik": self.loglik,
            "loglik_convention": "constant -0.5*ln(2*pi) per observation omitted",
            "n_obs": self.path.len(),
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "clamp_events": self.path.clamp_events,
        })
    }
}

// Objective in scaled coordinates: theta = u * scale.
struct Objective<'a> {
    r: &'a [f64],
    init: Init,
    scale: [f64; N_PARAMS],
    form: LoglikForm,
}

impl Objective<'_> {
    fn params(&self, u: &[f64]) -> GjrskParams {
        let mut v = [0.0; N_PARAMS];
        for i in 0..N_PARAMS {
            v[i] = u[i] * self.scale[i];
        }
        GjrskParams::from_slice(&v)
    }

    fn loglik(&self, u: &[f64]) -> f64 {
        loglik_init(&self.params(u), self.r, self.init, self.form)
    }

    // Negative log-likelihood plus a quadratic penalty on the constraint
    // violations b0 > 0, b1 >= 0, b2 >= 0, b1 + b2 + b3/2 < 1.
    fn value(&self, u: &[f64]) -> f64 {
        let p = self.params(u);
        let n = self.r.len() as f64;
        let viol = [
            (-u[1]).max(0.0),
            (-p.beta[1]).max(0.0),
            (-p.beta[2]).max(0.0),
            (p.persistence() - 0.9999).max(0.0),
        ];
        let pen: f64 = viol.iter().map(|v| v * v).sum::<f64>() * 1e3 * n;
        -self.loglik(u) + pen
    }
}

/// Maximum-likelihood fit by multi-start Nelder-Mead. Starts are up to four
/// moment-consistent anchors followed by seeded jitters around them; the best result is
/// refined by further simplex restarts. Deterministic given `opts.seed`.
pub fn estimate(r: &[f64], opts: &EstimateOptions) -> Result<GjrskFit> {
    if r.len() < MIN_ESTIMATION_LEN {
        return Err(Error::Estimation {
            msg: format!("series of length {} is shorter than {MIN_ESTIMATION_LEN}", r.len()),
            best: None,
        });
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation {
            msg: "non-finite return".into(),
            best: None,
        });
    }
    let var = stats::variance(r);
    let scale_ref = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(var > 1e-20 * scale_ref.max(1e-300).powi(2)) || var == 0.0 {
        return Err(Error::Estimation {
            msg: "degenerate variance: series is constant".into(),
            best: None,
        });
    }
    let init = Init::from_sample(r);
    let skew = stats::skewness(r).clamp(-1.0, 1.0);
    let kurt = stats::kurtosis(r).clamp(2.0, 10.0);
    let rho1 = stats::autocorrelation(r, 1).clamp(-0.5, 0.5);

    // Higher-moment equations are multimodal in (persistence, news loading);
    // anchor starts at both ends and keep each intercept moment-consistent.
    let anchors: [(f64, f64); 4] = [(0.5, 0.0), (0.0, 0.2), (0.85, 0.05), (0.3, 0.1)];
    let anchored = |(persist, news): (f64, f64)| GjrskParams {
        alpha1: rho1,
        beta: [var * 0.035, 0.05, 0.90, 0.03],
        gamma: [skew * (1.0 - persist), 0.0, persist, news],
        delta: [kurt * (1.0 - persist), 0.0, persist, news],
    };
    let start = anchored(anchors[0]);
    let scale = [
        0.1,
        var * 0.05,
        0.05,
        0.1,
        0.05,
        0.1,
        0.05,
        0.2,
        0.05,
        0.5,
        0.05,
        0.2,
        0.05,
    ];
    let obj = Objective {
        r,
        init,
        scale,
        form: opts.loglik_form,
    };
    let to_u = |p: &GjrskParams| -> Vec<f64> { p.to_vec().iter().zip(&scale).map(|(v, s)| v / s).collect() };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_starts = opts.starts.max(1);
    let mut starts: Vec<Vec<f64>> = anchors.iter().take(n_starts).map(|&a| to_u(&anchored(a))).collect();
    for i in starts.len()..n_starts {
        let mut v = anchored(anchors[i % anchors.len()]).to_vec();
        for (i, x) in v.iter_mut().enumerate() {
            *x += scale[i] * rng.gen_range(-1.0..1.0);
        }
        let mut p = GjrskParams::from_slice(&v);
        p.beta[0] = p.beta[0].abs().max(var * 1e-3);
        p.beta[1] = p.beta[1].abs();
        p.beta[2] = p.beta[2].abs();
        if p.persistence() > 0.99 {
            let f = 0.99 / p.persistence();
            p.beta[1] *= f;
            p.beta[2] *= f;
            p.beta[3] *= f;
        }
        starts.push(to_u(&p));
    }

    let simplex = SimplexOptions {
        max_evals: opts.max_evals,
        f_tol: opts.rel_tol,
        x_tol: 1e-4,
        step: 0.5,
    };
    let mut evals = 0usize;
    let mut best: Option<crate::optim::SimplexResult> = None;
    for u0 in &starts {
        let res = refine_start(&obj, u0, simplex, opts.rel_tol);
        evals += res.evals;
        if res.f.is_finite() && best.as_ref().is_none_or(|b| res.f < b.f) {
            best = Some(res);
        }
    }
    let Some(mut best) = best else {
        return Err(Error::Estimation {
            msg: "all starting points diverged".into(),
            best: Some(Box::new(start)),
        });
    };
    for _ in 0..opts.restarts {
        let res = nelder_mead(|u| obj.value(u), &best.x, SimplexOptions { step: 0.1, ..simplex });
        evals += res.evals;
        let improved = best.f - res.f;
        let done = improved <= opts.rel_tol * best.f.abs() && res.tolerance_met;
        if res.f < best.f {
            best = res;
        }
        if done {
            break;
        }
    }

    let polished = newton_polish(&obj, &best.x, best.f, 25);
    evals += polished.evals;
    let (best_x, best_f) = (polished.x, polished.f);

    let params = obj.params(&best_x);
    let loglik = obj.loglik(&best_x);
    if !loglik.is_finite() {
        return Err(Error::Estimation {
            msg: "optimum has non-finite likelihood".into(),
            best: Some(Box::new(params)),
        });
    }
    let n = r.len() as f64;
    let grad = gradient(|u| obj.value(u) / n, &best_x, 1e-5);
    let gradient_norm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let converged = best.simplex_size <= 1e-2 && gradient_norm < 1e-3;
    debug_assert!(best_f <= best.f);

    let std_errors = standard_errors(&obj, &best_x);
    let path = filter_moments(&params, r)?;
    Ok(GjrskFit {
        params,
        std_errors,
        loglik,
        path,
        converged,
        iterations: evals,
        gradient_norm,
    })
}

// The log-density has narrow log-singular troughs wherever some Psi(eta_t)
// crosses zero, and a simplex collapses against them well short of the
// optimum. Re-expanding the simplex from the stalled point steps across;
// rounds repeat until one gains less than `rel_tol` or the per-start budget
// `simplex.max_evals` is spent.
fn refine_start(obj: &Objective, u0: &[f64], simplex: SimplexOptions, rel_tol: f64) -> crate::optim::SimplexResult {
    let budget = simplex.max_evals;
    let first = SimplexOptions {
        max_evals: budget.min(1500),
        ..simplex
    };
    let mut res = nelder_mead(|u| obj.value(u), u0, first);
    let mut spent = res.evals;
    while spent < budget && res.f.is_finite() {
        let next = nelder_mead(
            |u| obj.value(u),
            &res.x,
            SimplexOptions {
                max_evals: (budget - spent).min(1000),
                step: 0.2,
                ..simplex
            },
        );
        spent += next.evals;
        let gain = res.f - next.f;
        if next.f < res.f {
            res = next;
        }
        if gain <= rel_tol * res.f.abs() {
            break;
        }
    }
    res.evals = spent;
    res
}

struct Polished {
    x: Vec<f64>,
    f: f64,
    evals: usize,
}

// Levenberg-damped Newton steps on finite-difference derivatives, accepted
// only when they lower the objective. Sharpens the simplex optimum, which in
// 13 dimensions tends to stall a little short of the maximum.
fn newton_polish(obj: &Objective, x0: &[f64], f0: f64, max_iter: usize) -> Polished {
    let np = x0.len();
    let mut x = x0.to_vec();
    let mut f = f0;
    let mut evals = 0usize;
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        let g = gradient(|u| obj.value(u), &x, 1e-4);
        let h = hessian(|u| obj.value(u), &x, 1e-3);
        evals += 2 * np + 1 + 2 * np * (np - 1);
        if g.iter().chain(h.iter().flatten()).any(|v| !v.is_finite()) {
            break;
        }
        let hm = DMatrix::from_fn(np, np, |i, j| h[i][j]);
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut improved = false;
        for _ in 0..12 {
            let diag_scale = hm.diagonal().map(|d| d.abs().max(1e-8));
            let damped = &hm + DMatrix::from_diagonal(&diag_scale) * lambda;
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&gv))) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let fc = obj.value(&cand);
            evals += 1;
            if fc < f {
                let gain = f - fc;
                x = cand;
                f = fc;
                lambda = (lambda / 10.0).max(1e-9);
                improved = gain > 1e-10 * f.abs().max(1.0);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Polished { x, f, evals }
}

fn standard_errors(obj: &Objective, u: &[f64]) -> [Option<f64>; N_PARAMS] {
    // Coarser than the polish step: finer differences resolve the log
    // troughs and return curvature that is noise, often indefinite.
    let h = hessian(|x| obj.loglik(x), u, 1e-2);
    let neg = DMatrix::from_fn(N_PARAMS, N_PARAMS, |i, j| -h[i][j]);
    let mut out = [None; N_PARAMS];
    if neg.iter().any(|v| !v.is_finite()) {
        return out;
    }
    let inv = neg
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| neg.clone().try_inverse());
    if let Some(inv) = inv {
        for i in 0..N_PARAMS {
            let v = inv[(i, i)];
            if v > 0.0 && v.is_finite() {
                out[i] = Some(v.sqrt() * obj.scale[i]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gjrsk::{loglik, simulate};

    fn truth() -> GjrskParams {
        GjrskParams {
            alpha1: 0.0,
            beta: [1e-6, 0.05, 0.85, 0.04],
            gamma: [0.0, 0.0, 0.0, 0.3],
            delta: [3.0, 0.0, 0.0, 0.2],
        }
    }

    #[test]
    fn constant_series_fails() {
        let r = vec![0.001; 400];
        assert!(matches!(
            estimate(&r, &EstimateOptions::default()),
            Err(Error::Estimation { .. })
        ));
    }

    #[test]
    fn short_series_fails() {
        let r = simulate(&truth(), 100, 1).unwrap();
        assert!(estimate(&r, &EstimateOptions::default()).is_err());
    }

    #[test]
    fn fit_improves_on_truth_and_is_reproducible() {
        let r = simulate(&truth(), 3000, 5).unwrap();
        let opts = EstimateOptions {
            starts: 4,
            seed: 9,
            ..Default::default()
        };
        let a = estimate(&r, &opts).unwrap();
        let b = estimate(&r, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.loglik >= loglik(&truth(), &r) - 1e-6);
        assert!(a.std_errors.iter().flatten().all(|s| *s >= 0.0));
        assert!(a.to_json()["params"]["beta2"].is_number());
    }

    #[test]
    fn scaling_returns_shifts_loglik_by_log_scale() {
        // r -> c r with b0 -> c^2 b0 leaves eta, s, k unchanged and shifts
        // sum(-1/2 ln h) by -T ln c.
        let p = truth();
        let r = simulate(&p, 2000, 3).unwrap();
        let c = 3.0;
        let rc: Vec<f64> = r.iter().map(|v| v * c).collect();
        let mut pc = p;
        pc.beta[0] *= c * c;
        let shift = loglik(&pc, &rc) - loglik(&p, &r);
        assert!((shift + r.len() as f64 * c.ln()).abs() < 1e-6, "{shift}");
    }

    #[test]
    fn average_loglik_for_normal_data() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let r: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = GjrskParams {
            alpha1: 0.0,
            beta: [1.0, 0.0, 0.0, 0.0],
            gamma: [0.0; 4],
            delta: [3.0, 0.0, 0.0, 0.0],
        };
        // first observation uses sample moments; the rest have h=1, s=0, k=3
        let avg = loglik(&p, &r) / r.len() as f64;
        assert!((avg + 0.5).abs() < 0.02, "{avg}");
    }
}
