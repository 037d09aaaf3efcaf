//! Small numeric helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (1/n) variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Unbiased (1/(n-1)) standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    (variance(xs) * n / (n - 1.0)).sqrt()
}

/// Central moments `(m2, m3, m4)` with 1/n normalization.
pub fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3, _) = central_moments(xs);
    m3 / m2.powf(1.5)
}

/// Raw (non-excess) kurtosis.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let (m2, _, m4) = central_moments(xs);
    m4 / (m2 * m2)
}

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Upper tail probability of a chi-square variate.
pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    if !stat.is_finite() {
        return 0.0;
    }
    if stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Sample autocorrelation at `lag` around the series mean.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let num: f64 = xs.iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum();
    num / denom
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0, 10.0];
        let m = 4.0;
        let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
        let m2 = d.iter().map(|x| x * x).sum::<f64>() / 5.0;
        let m3 = d.iter().map(|x| x * x * x).sum::<f64>() / 5.0;
        let m4 = d.iter().map(|x| x.powi(4)).sum::<f64>() / 5.0;
        assert!((skewness(&xs) - m3 / m2.powf(1.5)).abs() < 1e-12);
        assert!((kurtosis(&xs) - m4 / (m2 * m2)).abs() < 1e-12);
    }

    #[test]
    fn chi2_tail() {
        // 95th percentile of chi2(2) is 2 ln 20.
        assert!((chi2_sf(2.0 * 20f64.ln(), 2.0) - 0.05).abs() < 1e-10);
        assert_eq!(chi2_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn seed_mixing_is_stable() {
        assert_eq!(mix_seed(1, 2), mix_seed(1, 2));
        assert_ne!(mix_seed(1, 2), mix_seed(1, 3));
        assert_ne!(label_tag("gjrsk"), label_tag("forest"));
    }
}
