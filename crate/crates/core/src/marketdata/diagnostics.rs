//! Descriptive statistics and the usual battery of return diagnostics:
//! Jarque-Bera, ADF, KPSS, Ljung-Box on levels and squares, ARCH-LM.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ReturnPanel;
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Lag order used (ADF: selected augmentation lags, KPSS: bandwidth).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lags: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub name: String,
    pub n: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    /// Raw kurtosis (3 for a normal distribution).
    pub kurtosis: f64,
    pub jarque_bera: TestResult,
    pub adf: TestResult,
    pub kpss: TestResult,
    pub ljung_box: TestResult,
    pub ljung_box_squared: TestResult,
    pub arch_lm: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub lb_lags: usize,
    pub series: Vec<SeriesDiagnostics>,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Long CSV: `series,statistic,value,p_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,statistic,value,p_value\n");
        for s in &self.series {
            for (k, v) in [
                ("max", s.max),
                ("min", s.min),
                ("mean", s.mean),
                ("std_dev", s.std_dev),
                ("skewness", s.skewness),
                ("kurtosis", s.kurtosis),
            ] {
                out.push_str(&format!("{},{k},{v:.10e},\n", s.name));
            }
            for (k, t) in [
                ("jarque_bera", s.jarque_bera),
                ("adf", s.adf),
                ("kpss", s.kpss),
                ("ljung_box", s.ljung_box),
                ("ljung_box_squared", s.ljung_box_squared),
                ("arch_lm", s.arch_lm),
            ] {
                out.push_str(&format!("{},{k},{:.10e},{:.10e}\n", s.name, t.statistic, t.p_value));
            }
        }
        out
    }
}

/// Runs the full battery on every series of the panel. Ljung-Box and ARCH-LM
/// both use `lb_lags` lags.
pub fn diagnostics(r: &ReturnPanel, lb_lags: usize) -> Result<DiagnosticsReport> {
    if lb_lags == 0 {
        return Err(Error::Diagnostics("lb_lags must be positive".into()));
    }
    let series = r
        .names
        .par_iter()
        .zip(r.series.par_iter())
        .map(|(name, x)| series_diagnostics(name, x, lb_lags))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport { lb_lags, series })
}

fn series_diagnostics(name: &str, x: &[f64], lags: usize) -> Result<SeriesDiagnostics> {
    if x.len() < 5 * lags {
        return Err(Error::Diagnostics(format!(
            "series `{name}` has {} observations, need at least {}",
            x.len(),
            5 * lags
        )));
    }
    let std_dev = stats::sample_std(x);
    if !(std_dev > 0.0) {
        return Err(Error::Diagnostics(format!("series `{name}` is constant")));
    }
    let sq: Vec<f64> = {
        let m = stats::mean(x);
        x.iter().map(|v| (v - m) * (v - m)).collect()
    };
    Ok(SeriesDiagnostics {
        name: name.to_string(),
        n: x.len(),
        max: x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: x.iter().cloned().fold(f64::INFINITY, f64::min),
        mean: stats::mean(x),
        std_dev,
        skewness: stats::skewness(x),
        kurtosis: stats::kurtosis(x),
        jarque_bera: jarque_bera(x),
        adf: adf_test(x)?,
        kpss: kpss_test(x),
        ljung_box: ljung_box(x, lags),
        ljung_box_squared: ljung_box(&sq, lags),
        arch_lm: arch_lm_test(x, lags)?,
    })
}

/// `JB = n/6 (S^2 + (K-3)^2/4)` against chi-square(2).
pub fn jarque_bera(x: &[f64]) -> TestResult {
    let n = x.len() as f64;
    let s = stats::skewness(x);
    let k = stats::kurtosis(x);
    let jb = n / 6.0 * (s * s + (k - 3.0).powi(2) / 4.0);
    TestResult {
        statistic: jb,
        p_value: stats::chi2_sf(jb, 2.0),
        lags: None,
    }
}

/// `Q(L) = n(n+2) sum_k rho_k^2/(n-k)` against chi-square(L).
pub fn ljung_box(x: &[f64], lags: usize) -> TestResult {
    let n = x.len() as f64;
    let m = stats::mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    let q: f64 = (1..=lags)
        .map(|k| {
            let rho = d.iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom;
            rho * rho / (n - k as f64)
        })
        .sum::<f64>()
        * n
        * (n + 2.0);
    TestResult {
        statistic: q,
        p_value: stats::chi2_sf(q, lags as f64),
        lags: Some(lags),
    }
}

/// Engle's LM test: `n R^2` from regressing squared demeaned values on a
/// constant and `lags` of their own lags, against chi-square(lags).
pub fn arch_lm_test(x: &[f64], lags: usize) -> Result<TestResult> {
    let m = stats::mean(x);
    let u2: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    let n = u2.len() - lags;
    if n <= lags + 1 {
        return Err(Error::Diagnostics("series too short for ARCH-LM".into()));
    }
    let xm = DMatrix::from_fn(n, lags + 1, |i, j| if j == 0 { 1.0 } else { u2[lags + i - j] });
    let y = DVector::from_fn(n, |i, _| u2[lags + i]);
    let (ssr, _) = regress(&xm, &y)?;
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let lm = n as f64 * r2;
    Ok(TestResult {
        statistic: lm,
        p_value: stats::chi2_sf(lm, lags as f64),
        lags: Some(lags),
    })
}

// Returns (SSR, coefficient vector).
fn regress(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let b = crate::linalg::ols(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()))?;
    let b = DVector::from_column_slice(b.as_slice());
    let resid = y - x * &b;
    Ok((resid.norm_squared(), b))
}

/// Asymptotic quantiles of the Dickey-Fuller t-statistic, constant, no trend.
const ADF_TABLE: [(f64, f64); 8] = [
    (0.01, -3.43),
    (0.025, -3.12),
    (0.05, -2.86),
    (0.10, -2.57),
    (0.90, -0.44),
    (0.95, -0.07),
    (0.975, 0.23),
    (0.99, 0.60),
];

/// Asymptotic upper-tail critical values of the KPSS level statistic.
const KPSS_TABLE: [(f64, f64); 4] = [(0.10, 0.347), (0.05, 0.463), (0.025, 0.574), (0.01, 0.739)];

/// Augmented Dickey-Fuller test with a constant. The augmentation order is
/// chosen by AIC over `0..=floor(12 (T/100)^(1/4))` on a common sample, then
/// the chosen regression is refit on all usable observations. The p-value is
/// interpolated from [`ADF_TABLE`] and clipped to `[0.01, 0.99]`.
pub fn adf_test(y: &[f64]) -> Result<TestResult> {
    let t = y.len();
    let kmax = (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize;
    if t < kmax + 10 {
        return Err(Error::Diagnostics("series too short for ADF".into()));
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();

    // Columns: const, y_{t-1}, dy_{t-1}, ..., dy_{t-kmax}; rows t = kmax..dy.len()
    let build = |k: usize, start: usize| {
        let n = dy.len() - start;
        let x = DMatrix::from_fn(n, k + 2, |i, j| {
            let t = start + i;
            match j {
                0 => 1.0,
                1 => y[t],
                _ => dy[t - (j - 1)],
            }
        });
        let z = DVector::from_fn(n, |i, _| dy[start + i]);
        (x, z)
    };

    let (xfull, zfull) = build(kmax, kmax);
    let n = zfull.len() as f64;
    let xtx = xfull.transpose() * &xfull;
    let xtz = xfull.transpose() * &zfull;
    let ztz = zfull.norm_squared();
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..=kmax {
        let m = k + 2;
        let a = xtx.view((0, 0), (m, m)).into_owned();
        let b = xtz.rows(0, m).into_owned();
        let Some(chol) = a.cholesky() else { continue };
        let coef = chol.solve(&b);
        let ssr = (ztz - coef.dot(&b)).max(f64::MIN_POSITIVE);
        let aic = n * (ssr / n).ln() + 2.0 * m as f64;
        if aic < best.0 {
            best = (aic, k);
        }
    }
    let k = best.1;
    let (x, z) = build(k, k);
    let (ssr, coef) = regress(&x, &z)?;
    let dof = (z.len() - (k + 2)) as f64;
    let sigma2 = ssr / dof;
    let inv = crate::linalg::spd_inverse(&(x.transpose() * &x))
        .ok_or_else(|| Error::Diagnostics("singular ADF regression".into()))?;
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let stat = coef[1] / se;
    Ok(TestResult {
        statistic: stat,
        p_value: interpolate_lower(&ADF_TABLE, stat),
        lags: Some(k),
    })
}

// Lower-tail p-value by linear interpolation in a (prob, quantile) table.
fn interpolate_lower(table: &[(f64, f64)], stat: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if stat <= first.1 {
        return first.0;
    }
    if stat >= last.1 {
        return last.0;
    }
    for w in table.windows(2) {
        let ((p0, q0), (p1, q1)) = (w[0], w[1]);
        if stat <= q1 {
            return p0 + (p1 - p0) * (stat - q0) / (q1 - q0);
        }
    }
    last.0
}

/// KPSS level-stationarity test with a Bartlett-kernel long-run variance,
/// bandwidth `floor(4 (T/100)^(1/4))`. The p-value is interpolated from
/// [`KPSS_TABLE`] and clipped to `[0.01, 0.10]`.
pub fn kpss_test(y: &[f64]) -> TestResult {
    let t = y.len();
    let tf = t as f64;
    let m = stats::mean(y);
    let e: Vec<f64> = y.iter().map(|v| v - m).collect();
    let l = (4.0 * (tf / 100.0).powf(0.25)).floor() as usize;
    let mut lrv = e.iter().map(|v| v * v).sum::<f64>() / tf;
    for s in 1..=l {
        let w = 1.0 - s as f64 / (l as f64 + 1.0);
        let g: f64 = e.iter().zip(&e[s..]).map(|(a, b)| a * b).sum::<f64>() / tf;
        lrv += 2.0 * w * g;
    }
    let mut cum = 0.0;
    let mut ss = 0.0;
    for v in &e {
        cum += v;
        ss += cum * cum;
    }
    let stat = ss / (tf * tf * lrv);
    let p = if stat <= KPSS_TABLE[0].1 {
        KPSS_TABLE[0].0
    } else if stat >= KPSS_TABLE[3].1 {
        KPSS_TABLE[3].0
    } else {
        let w = KPSS_TABLE
            .windows(2)
            .find(|w| stat <= w[1].1)
            .expect("stat inside table range");
        let ((p0, q0), (p1, q1)) = (w[0], w[1]);
        p0 + (p1 - p0) * (stat - q0) / (q1 - q0)
    };
    TestResult {
        statistic: stat,
        p_value: p,
        lags: Some(l),
    }
}
