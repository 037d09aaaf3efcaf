use crate::stats::{normal_cdf, normal_pdf};

const INV6: f64 = 1.0 / 6.0;
const INV24: f64 = 1.0 / 24.0;

/// `Psi(eta) = 1 + s/3! (eta^3 - 3 eta) + (k-3)/4! (eta^4 - 6 eta^2 + 3)`.
#[inline]
pub fn gc_psi(eta: f64, s: f64, k: f64) -> f64 {
    let e2 = eta * eta;
    1.0 + s * INV6 * (e2 * eta - 3.0 * eta) + (k - 3.0) * INV24 * (e2 * e2 - 6.0 * e2 + 3.0)
}

/// Normalizer `Gamma = 1 + s^2/3! + (k-3)^2/4!`.
#[inline]
pub fn gc_gamma(s: f64, k: f64) -> f64 {
    1.0 + s * s * INV6 + (k - 3.0) * (k - 3.0) * INV24
}

/// Positive Gram-Charlier density `phi(eta) Psi(eta)^2 / Gamma` with `phi`
/// the standard normal density. Integrates to one for every `(s, k)`.
pub fn gc_density(eta: f64, s: f64, k: f64) -> f64 {
    let psi = gc_psi(eta, s, k);
    normal_pdf(eta) * psi * psi / gc_gamma(s, k)
}

// Coefficients of Psi(x)^2 as a polynomial in x, degree 8.
fn psi_sq_coeffs(s: f64, k: f64) -> [f64; 9] {
    let a = s / 6.0;
    let b = (k - 3.0) / 24.0;
    let c = [1.0 + 3.0 * b, -3.0 * a, -6.0 * b, a, b];
    let mut d = [0.0; 9];
    for (i, ci) in c.iter().enumerate() {
        for (j, cj) in c.iter().enumerate() {
            d[i + j] += ci * cj;
        }
    }
    d
}

/// Closed-form CDF: `int_{-inf}^x u^m phi(u) du` obeys
/// `I_m = -x^{m-1} phi(x) + (m-1) I_{m-2}` with `I_0 = Phi(x)`, `I_1 = -phi(x)`.
pub fn gc_cdf(x: f64, s: f64, k: f64) -> f64 {
    let d = psi_sq_coeffs(s, k);
    let pdf = normal_pdf(x);
    let mut i = [0.0; 9];
    i[0] = normal_cdf(x);
    i[1] = -pdf;
    let mut xp = x; // x^{m-1}
    for m in 2..9 {
        i[m] = -xp * pdf + (m as f64 - 1.0) * i[m - 2];
        xp *= x;
    }
    let v: f64 = d.iter().zip(&i).map(|(a, b)| a * b).sum::<f64>() / gc_gamma(s, k);
    v.clamp(0.0, 1.0)
}

/// Inverse of [`gc_cdf`] by safeguarded Newton iteration on `[-40, 40]`.
pub fn gc_quantile(u: f64, s: f64, k: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut x = 0.0;
    for _ in 0..100 {
        let f = gc_cdf(x, s, k) - u;
        if f.abs() < 1e-14 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dens = gc_density(x, s, k);
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-13 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // Adaptive Simpson quadrature, independent of the closed-form CDF.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn reduces_to_standard_normal() {
        assert!((gc_density(0.0, 0.0, 3.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((gc_density(1.0, 0.0, 3.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_skewed_point() {
        // Psi(0) = 1, Gamma = 1 + 0.25/6
        let expected = 0.398_942_280_401_432_7 / (1.0 + 0.25 / 6.0);
        assert!((gc_density(0.0, 0.5, 3.0) - expected).abs() < 1e-15);
        assert!((expected - 0.382_985).abs() < 1e-6);
    }

    #[test]
    fn cdf_matches_quadrature() {
        for &(s, k) in &[(0.0, 3.0), (0.7, 5.0), (-1.0, 1.5), (0.3, 7.0)] {
            for &x in &[-3.0, -1.2, 0.0, 0.4, 2.5] {
                let q = simpson(|u| gc_density(u, s, k), -40.0, x, 1e-13);
                assert!((gc_cdf(x, s, k) - q).abs() < 1e-9, "s={s} k={k} x={x}");
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &(s, k) in &[(0.0, 3.0), (-2.0, 8.0), (1.5, 2.0)] {
            for &u in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
                let x = gc_quantile(u, s, k);
                assert!((gc_cdf(x, s, k) - u).abs() < 1e-10, "s={s} k={k} u={u}");
            }
        }
    }

    #[test]
    fn integrates_to_one_on_grid() {
        for i in 0..=8 {
            let s = -1.0 + 0.25 * i as f64;
            for j in 0..=11 {
                let k = 1.5 + 0.5 * j as f64;
                let total = simpson(|u| gc_density(u, s, k), -40.0, 40.0, 1e-12);
                assert!((total - 1.0).abs() < 1e-6, "s={s} k={k}: {total}");
            }
        }
    }
}
