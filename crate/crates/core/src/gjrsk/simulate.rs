use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::density::gc_quantile;
use super::filter::{K_BOUNDS, S_BOUNDS};
use super::GjrskParams;
use crate::Result;

const BURN_IN: usize = 200;

/// Simulates `n` returns. Innovations are drawn from the Gram-Charlier
/// density at the current `(s_t, k_t)` by inverting its closed-form CDF; the
/// recursion starts at the unconditional moments and discards a burn-in.
pub fn simulate(params: &GjrskParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [b0, b1, b2, b3] = params.beta;
    let [g0, g1, g2, g3] = params.gamma;
    let [d0, d1, d2, d3] = params.delta;
    let stationary = |c: f64, p: f64| if p.abs() < 1.0 { c / (1.0 - p) } else { c };

    let mut h = params.unconditional_variance().expect("validated");
    let mut s = stationary(g0, g2).clamp(S_BOUNDS.0, S_BOUNDS.1);
    let mut k = stationary(d0, d2).clamp(K_BOUNDS.0, K_BOUNDS.1);
    let (mut e, mut eta, mut r_prev) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(n);
    for t in 0..(n + BURN_IN) {
        if t > 0 {
            let neg = eta < 0.0;
            let eta3 = eta * eta * eta;
            h = b0 + (b1 + if neg { b3 } else { 0.0 }) * e * e + b2 * h;
            s = (g0 + (g1 + if neg { g3 } else { 0.0 }) * eta3 + g2 * s).clamp(S_BOUNDS.0, S_BOUNDS.1);
            k = (d0 + (d1 + if neg { d3 } else { 0.0 }) * eta3 * eta + d2 * k).clamp(K_BOUNDS.0, K_BOUNDS.1);
        }
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        eta = gc_quantile(u, s, k);
        e = h.sqrt() * eta;
        let r = params.alpha1 * r_prev + e;
        r_prev = r;
        if t >= BURN_IN {
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gjrsk::filter_moments;
    use crate::stats;

    fn symmetric() -> GjrskParams {
        GjrskParams {
            alpha1: 0.0,
            beta: [1e-6, 0.05, 0.90, 0.04],
            gamma: [0.0; 4],
            delta: [3.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn mean_variance_matches_unconditional() {
        let p = symmetric();
        let r = simulate(&p, 100_000, 42).unwrap();
        let path = filter_moments(&p, &r).unwrap();
        let mean_h = stats::mean(&path.h);
        let target = p.unconditional_variance().unwrap();
        assert!((mean_h / target - 1.0).abs() < 0.02, "{mean_h} vs {target}");
    }

    #[test]
    fn zero_skew_params_give_symmetric_innovations() {
        let p = symmetric();
        let r = simulate(&p, 100_000, 7).unwrap();
        let path = filter_moments(&p, &r).unwrap();
        assert!(stats::skewness(&path.eta).abs() < 0.03);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = symmetric();
        assert_eq!(simulate(&p, 500, 1).unwrap(), simulate(&p, 500, 1).unwrap());
        assert_ne!(simulate(&p, 500, 1).unwrap(), simulate(&p, 500, 2).unwrap());
    }

    #[test]
    fn fat_tailed_innovations_raise_effective_persistence() {
        // E[eta^2] under the density exceeds one once k leaves 3, so
        // b1 + b2 + b3/2 < 1 does not bound the variance.
        let m2: f64 = (-40_000..=40_000)
            .map(|i| {
                let x = i as f64 * 1e-3;
                x * x * crate::gjrsk::gc_density(x, 0.0, 6.0) * 1e-3
            })
            .sum();
        assert!(m2 > 3.0, "{m2}");
        let p = GjrskParams {
            alpha1: 0.0,
            beta: [1e-6, 0.05, 0.90, 0.04],
            gamma: [0.0, 0.0, 0.0, 0.3],
            delta: [3.0, 0.0, 0.0, 0.2],
        };
        assert!(p.validate().is_ok());
        let r = simulate(&p, 20_000, 3).unwrap();
        let h = filter_moments(&p, &r).unwrap().h;
        assert!(h[h.len() - 1] > 1e3 * p.unconditional_variance().unwrap());
    }

    #[test]
    fn rejects_nonstationary_params() {
        let mut p = symmetric();
        p.beta[2] = 0.99;
        assert!(simulate(&p, 10, 0).is_err());
    }
}
