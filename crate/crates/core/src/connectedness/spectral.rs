use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{check_sigma, dy_measures, ConnectednessMeasures, GfevdMatrix, Scope};
use crate::tvpvar::VmaOperator;
use crate::{Error, Result};

/// Half-open frequency interval `(a, b]` in radians per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub label: String,
    pub a: f64,
    pub b: f64,
}

impl FrequencyBand {
    pub fn new(label: &str, a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && a < b && b <= PI + 1e-12) {
            return Err(Error::Aggregation(format!(
                "band {label}: need 0 <= a < b <= pi, got ({a}, {b}]"
            )));
        }
        Ok(Self {
            label: label.to_string(),
            a,
            b: b.min(PI),
        })
    }

    /// Band holding cycles with periods in `[min_period, max_period)`
    /// observations; `None` means unbounded.
    pub fn from_periods(label: &str, min_period: f64, max_period: Option<f64>) -> Result<Self> {
        let a = max_period.map_or(0.0, |p| 2.0 * PI / p);
        Self::new(label, a, (2.0 * PI / min_period).min(PI))
    }

    /// Period bounds `2 pi / b` and `2 pi / a`; the upper one is `None` for a
    /// band reaching frequency zero.
    pub fn day_range(&self) -> (f64, Option<f64>) {
        let hi = (self.a > 0.0).then(|| 2.0 * PI / self.a);
        (2.0 * PI / self.b, hi)
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega > self.a && omega <= self.b
    }

    pub fn scope(&self) -> Scope {
        Scope::Band {
            label: self.label.clone(),
            a: self.a,
            b: self.b,
        }
    }
}

/// Short (1-5 days), medium (5-120 days) and long (over 120 days) bands.
pub fn default_bands() -> Vec<FrequencyBand> {
    vec![
        FrequencyBand::new("short", 2.0 * PI / 5.0, PI).unwrap(),
        FrequencyBand::new("medium", 2.0 * PI / 120.0, 2.0 * PI / 5.0).unwrap(),
        FrequencyBand::new("long", 0.0, 2.0 * PI / 120.0).unwrap(),
    ]
}

/// Checks that `bands` tile `(0, pi]` without gaps or overlap and returns
/// them ordered from low to high frequency.
pub fn validate_partition(bands: &[FrequencyBand]) -> Result<Vec<FrequencyBand>> {
    if bands.is_empty() {
        return Err(Error::Aggregation("empty band list".into()));
    }
    let mut sorted = bands.to_vec();
    sorted.sort_by(|x, y| x.a.total_cmp(&y.a));
    let tol = 1e-12;
    if sorted[0].a.abs() > tol {
        return Err(Error::Aggregation(format!(
            "bands start at {} instead of 0",
            sorted[0].a
        )));
    }
    if (sorted[sorted.len() - 1].b - PI).abs() > tol {
        return Err(Error::Aggregation("bands do not reach pi".into()));
    }
    for w in sorted.windows(2) {
        if (w[0].b - w[1].a).abs() > tol {
            return Err(Error::Aggregation(format!(
                "bands {} and {} leave a gap or overlap",
                w[0].label, w[1].label
            )));
        }
    }
    Ok(sorted)
}

/// Per-frequency decomposition on the midpoint grid
/// `omega_s = pi (s - 1/2) / S`, `s = 1..=S`.
#[derive(Debug, Clone)]
pub struct SpectralGfevd {
    pub grid: Vec<f64>,
    /// Unnormalized `theta(omega)`: numerator over `S_y(omega)_jj`.
    pub theta_of_omega: Vec<DMatrix<f64>>,
    /// `|(Psi(e^{-i omega}) Sigma)_jk|^2 / sigma_kk`.
    pub numerators: Vec<DMatrix<f64>>,
    pub spectral_density: Vec<DMatrix<Complex64>>,
    pub warnings: Vec<String>,
}

pub(crate) const MIN_GRID: usize = 64;

/// Frequency responses through one batched FFT of length `2S`; the
/// modulation `e^{i pi h / 2S}` shifts the FFT bins onto the midpoints.
pub(crate) struct SpectralEngine {
    size: usize,
    fft: Arc<dyn Fft<f64>>,
    modulation: Vec<Complex64>,
}

impl SpectralEngine {
    pub(crate) fn new(size: usize) -> Result<Self> {
        if size < MIN_GRID {
            return Err(Error::Spectral {
                omega: 0.0,
                msg: format!("grid size {size} below {MIN_GRID}"),
            });
        }
        let m = 2 * size;
        let fft = FftPlanner::new().plan_fft_forward(m);
        let modulation = (0..m)
            .map(|h| Complex64::from_polar(1.0, PI * h as f64 / m as f64))
            .collect();
        Ok(Self { size, fft, modulation })
    }

    pub(crate) fn grid(&self) -> Vec<f64> {
        (1..=self.size)
            .map(|s| PI * (s as f64 - 0.5) / self.size as f64)
            .collect()
    }

    /// `Psi(e^{-i omega_s})` for every grid point.
    pub(crate) fn responses(&self, vma: &VmaOperator) -> Vec<DMatrix<Complex64>> {
        let n = vma.dim();
        let m = 2 * self.size;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n * m];
        for (h, psi) in vma.psi.iter().enumerate() {
            let (bin, rot) = (
                h % m,
                self.modulation[h % m] * if (h / m) % 2 == 1 { -1.0 } else { 1.0 },
            );
            for j in 0..n {
                for k in 0..n {
                    buf[(j * n + k) * m + bin] += rot * psi[(j, k)];
                }
            }
        }
        self.fft.process(&mut buf);
        (1..=self.size)
            .map(|s| DMatrix::from_fn(n, n, |j, k| buf[(j * n + k) * m + s]))
            .collect()
    }

    /// Per-frequency numerators; fails on the first non-finite value.
    pub(crate) fn numerators(
        &self,
        vma: &VmaOperator,
        sigma: &DMatrix<f64>,
    ) -> Result<(Vec<DMatrix<Complex64>>, Vec<DMatrix<f64>>)> {
        let n = vma.dim();
        let sc = sigma.map(|v| Complex64::new(v, 0.0));
        let grid = self.grid();
        let responses = self.responses(vma);
        let mut out = Vec::with_capacity(self.size);
        let mut products = Vec::with_capacity(self.size);
        for (f, &omega) in responses.iter().zip(&grid) {
            let a = f * &sc;
            let num = DMatrix::from_fn(n, n, |j, k| a[(j, k)].norm_sqr() / sigma[(k, k)]);
            if num.iter().any(|v| !v.is_finite()) {
                return Err(Error::Spectral {
                    omega,
                    msg: "non-finite frequency response".into(),
                });
            }
            out.push(num);
            products.push(a);
        }
        Ok((products, out))
    }
}

/// Frequency-domain decomposition of one date's system.
pub fn spectral_gfevd(vma: &VmaOperator, sigma: &DMatrix<f64>, grid_size: usize) -> Result<SpectralGfevd> {
    let n = vma.dim();
    if sigma.shape() != (n, n) {
        return Err(Error::Decomposition(format!(
            "sigma is {:?}, operator dimension {n}",
            sigma.shape()
        )));
    }
    check_sigma(sigma)?;
    let engine = SpectralEngine::new(grid_size)?;
    let grid = engine.grid();
    let responses = engine.responses(vma);
    let (products, numerators) = engine.numerators(vma, sigma)?;
    let mut theta_of_omega = Vec::with_capacity(grid_size);
    let mut spectral_density = Vec::with_capacity(grid_size);
    for ((f, a), (num, &omega)) in responses.iter().zip(&products).zip(numerators.iter().zip(&grid)) {
        // S_y = Psi Sigma Psi^H; Psi' (e^{+i omega}) is the conjugate transpose.
        let sy = a * f.adjoint();
        let theta = DMatrix::from_fn(n, n, |j, k| num[(j, k)] / sy[(j, j)].re);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spectral {
                omega,
                msg: "zero spectral density".into(),
            });
        }
        theta_of_omega.push(theta);
        spectral_density.push(sy);
    }
    let mut warnings = Vec::new();
    let tail = vma.psi.last().map_or(0.0, |m| m.abs().max());
    if tail >= 1e-3 {
        warnings.push(format!(
            "|Psi_H| = {tail:.3e} at H = {}; response truncated early",
            vma.horizon()
        ));
    }
    Ok(SpectralGfevd {
        grid,
        theta_of_omega,
        numerators,
        spectral_density,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub band: FrequencyBand,
    pub gfevd: GfevdMatrix,
    pub measures: ConnectednessMeasures,
}

/// Band decompositions with every row scaled by its all-frequency total, so
/// that the bands of a partition add up to the whole-spectrum decomposition.
pub(crate) fn band_thetas(grid: &[f64], numerators: &[DMatrix<f64>], bands: &[FrequencyBand]) -> Vec<DMatrix<f64>> {
    let n = numerators[0].nrows();
    let mut sums = vec![DMatrix::zeros(n, n); bands.len()];
    let mut totals = vec![0.0; n];
    for (num, &omega) in numerators.iter().zip(grid) {
        for j in 0..n {
            totals[j] += num.row(j).sum();
        }
        if let Some(i) = bands.iter().position(|b| b.contains(omega)) {
            sums[i] += num;
        }
    }
    for m in &mut sums {
        for j in 0..n {
            let mut row = m.row_mut(j);
            row /= totals[j];
        }
    }
    sums
}

/// Per-band decomposition and measures over a partition of `(0, pi]`.
pub fn band_measures(sg: &SpectralGfevd, bands: &[FrequencyBand]) -> Result<Vec<BandResult>> {
    validate_partition(bands)?;
    let thetas = band_thetas(&sg.grid, &sg.numerators, bands);
    Ok(bands
        .iter()
        .zip(thetas)
        .map(|(band, theta)| {
            let gfevd = GfevdMatrix {
                theta,
                scope: band.scope(),
            };
            let measures = dy_measures(&gfevd);
            BandResult {
                band: band.clone(),
                gfevd,
                measures,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectedness::gfevd;
    use crate::tvpvar::vma;
    use proptest::prelude::*;

    fn whole() -> Vec<FrequencyBand> {
        vec![FrequencyBand::new("all", 0.0, PI).unwrap()]
    }

    #[test]
    fn fft_matches_direct_sum() {
        let phi = DMatrix::from_row_slice(2, 4, &[0.5, 0.1, 0.2, 0.0, -0.3, 0.4, 0.1, -0.2]);
        // horizon beyond 2S exercises the folding of long responses
        let v = vma(&phi, 300);
        let engine = SpectralEngine::new(64).unwrap();
        let resp = engine.responses(&v);
        for (s, omega) in engine.grid().iter().enumerate() {
            let mut direct = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
            for (h, psi) in v.psi.iter().enumerate() {
                let z = Complex64::from_polar(1.0, -omega * h as f64);
                direct += psi.map(|x| z * x);
            }
            assert!((&resp[s] - direct).iter().all(|d| d.norm() < 1e-10), "s={s}");
        }
    }

    #[test]
    fn scalar_ar1_spectrum() {
        let v = vma(&DMatrix::from_element(1, 1, 0.5), 80);
        let sg = spectral_gfevd(&v, &DMatrix::from_element(1, 1, 1.0), 512).unwrap();
        for (omega, sy) in sg.grid.iter().zip(&sg.spectral_density) {
            let exact = 1.0 / (Complex64::new(1.0, 0.0) - Complex64::from_polar(0.5, -omega)).norm_sqr();
            assert!((sy[(0, 0)].re - exact).abs() < 1e-10);
            assert!(sy[(0, 0)].im.abs() < 1e-12);
        }
        assert!(sg.warnings.is_empty());
    }

    #[test]
    fn white_noise_is_flat() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let sg = spectral_gfevd(&vma(&DMatrix::zeros(2, 2), 10), &sigma, 128).unwrap();
        for sy in &sg.spectral_density {
            assert!(sy.iter().zip(sigma.iter()).all(|(a, b)| (a.re - b).abs() < 1e-12));
        }
        for t in &sg.theta_of_omega {
            assert!((t - &sg.theta_of_omega[0]).abs().max() < 1e-12);
        }
    }

    #[test]
    fn white_noise_band_tci_tracks_band_width() {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, 0.2, 0.1, 0.2, 1.5]);
        let s = 512;
        let sg = spectral_gfevd(&vma(&DMatrix::zeros(3, 3), 10), &sigma, s).unwrap();
        let time = dy_measures(&gfevd(&vma(&DMatrix::zeros(3, 3), 10), &sigma, 10).unwrap());
        for r in band_measures(&sg, &default_bands()).unwrap() {
            // midpoints in (a, b]: s - 1/2 in (aS/pi, bS/pi]
            let lo = (r.band.a * s as f64 / PI + 0.5).floor() as i64;
            let hi = (r.band.b * s as f64 / PI + 0.5).floor() as i64;
            let share = (hi - lo) as f64 / s as f64;
            assert!((r.measures.tci - share * time.tci).abs() < 1e-10);
            assert!((share - (r.band.b - r.band.a) / PI).abs() <= 1.0 / s as f64);
        }
    }

    #[test]
    fn default_bands_follow_period_mapping() {
        let b = default_bands();
        assert_eq!(b[0].day_range(), (2.0, Some(5.0)));
        let (lo, hi) = b[1].day_range();
        assert!((lo - 5.0).abs() < 1e-12 && (hi.unwrap() - 120.0).abs() < 1e-9);
        assert_eq!(b[2].day_range().1, None);
        assert!(b[0].contains(PI) && !b[0].contains(2.0 * PI / 5.0) && b[1].contains(2.0 * PI / 5.0));
        let from_periods = FrequencyBand::from_periods("medium", 5.0, Some(120.0)).unwrap();
        assert_eq!((from_periods.a, from_periods.b), (b[1].a, b[1].b));
        assert_eq!(validate_partition(&b).unwrap().len(), 3);
    }

    #[test]
    fn rejects_bad_partitions() {
        let mut b = default_bands();
        b.pop();
        assert!(matches!(validate_partition(&b), Err(Error::Aggregation(_))));
        let overlap = vec![
            FrequencyBand::new("x", 0.0, 2.0).unwrap(),
            FrequencyBand::new("y", 1.5, PI).unwrap(),
        ];
        assert!(validate_partition(&overlap).is_err());
        assert!(FrequencyBand::new("z", 2.0, 1.0).is_err());
    }

    #[test]
    fn small_grid_rejected() {
        let v = vma(&DMatrix::zeros(1, 1), 5);
        assert!(matches!(
            spectral_gfevd(&v, &DMatrix::from_element(1, 1, 1.0), 32),
            Err(Error::Spectral { .. })
        ));
    }

    #[test]
    fn slow_decay_warns() {
        let v = vma(&DMatrix::from_element(1, 1, 0.99), 50);
        let sg = spectral_gfevd(&v, &DMatrix::from_element(1, 1, 1.0), 64).unwrap();
        assert_eq!(sg.warnings.len(), 1);
    }

    fn stable_system() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (2usize..5).prop_flat_map(|n| {
            (
                prop::collection::vec(-1.0f64..1.0, 2 * n * n),
                prop::collection::vec(-1.0f64..1.0, n * n),
            )
                .prop_map(move |(a, b)| {
                    let mut phi = DMatrix::from_row_slice(n, 2 * n, &a);
                    let norm = phi.norm();
                    phi *= 0.7 / norm.max(1e-9);
                    let l = DMatrix::from_row_slice(n, n, &b);
                    let sigma = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
                    (phi, sigma)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn density_is_hermitian_psd((phi, sigma) in stable_system()) {
            let sg = spectral_gfevd(&vma(&phi, 60), &sigma, 64).unwrap();
            for sy in &sg.spectral_density {
                let scale = sy.trace().re;
                prop_assert!((sy - sy.adjoint()).iter().all(|d| d.norm() < 1e-8 * scale.max(1.0)));
                let eig = sy.clone().symmetric_eigenvalues();
                prop_assert!(eig.iter().all(|e| *e > -1e-8 * scale.max(1.0)));
            }
        }

        #[test]
        fn bands_add_up_to_whole_and_time_domain((phi, sigma) in stable_system()) {
            let h = 100;
            let v = vma(&phi, h);
            let sg = spectral_gfevd(&v, &sigma, 512).unwrap();
            let parts = band_measures(&sg, &default_bands()).unwrap();
            let all = band_measures(&sg, &whole()).unwrap().remove(0);
            let n = phi.nrows();
            let sum_theta = parts.iter().fold(DMatrix::zeros(n, n), |acc, r| acc + &r.gfevd.theta);
            prop_assert!((&sum_theta - &all.gfevd.theta).abs().max() < 1e-12);
            let sum_tci: f64 = parts.iter().map(|r| r.measures.tci).sum();
            prop_assert!((sum_tci - all.measures.tci).abs() < 1e-10);
            for j in 0..n {
                prop_assert!(parts.iter().all(|r| r.gfevd.theta.row(j).sum() <= 1.0 + 1e-12));
                let sum_net: f64 = parts.iter().map(|r| r.measures.net[j]).sum();
                prop_assert!((sum_net - all.measures.net[j]).abs() < 1e-10);
            }
            // midpoint-grid Parseval: the spectral whole is the H-step GFEVD
            let time = gfevd(&v, &sigma, h).unwrap();
            prop_assert!((&time.theta - &all.gfevd.theta).abs().max() < 1e-10);
        }
    }
}
