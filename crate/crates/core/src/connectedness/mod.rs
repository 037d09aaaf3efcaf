//! Time- and frequency-domain connectedness from generalized forecast-error
//! variance decompositions.
//!
//! All reported measures are percentages. `NPDC[(j, k)] > 0` means `k`
//! transmits more to `j` than it receives from it.

mod path;
mod reconcile;
mod spectral;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::tvpvar::VmaOperator;
use crate::{Error, Result};

pub use path::{connectedness_path, AverageTable, ConnectednessConfig, ConnectednessPath};
pub use reconcile::{reconcile, ReconciliationReport};
pub use spectral::{
    band_measures, default_bands, spectral_gfevd, validate_partition, BandResult, FrequencyBand, SpectralGfevd,
};

/// What a decomposition covers: a forecast horizon or a frequency band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scope {
    Time { horizon: usize },
    Band { label: String, a: f64, b: f64 },
}

impl Scope {
    pub fn label(&self) -> String {
        match self {
            Scope::Time { .. } => "time".into(),
            Scope::Band { label, .. } => label.clone(),
        }
    }
}

/// `theta[(j, k)]`: share of `j`'s forecast-error variance attributed to `k`.
/// Rows sum to one in the time domain and to at most one for a band.
#[derive(Debug, Clone, PartialEq)]
pub struct GfevdMatrix {
    pub theta: DMatrix<f64>,
    pub scope: Scope,
}

/// Directional measures in percentage points.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectednessMeasures {
    pub to: Vec<f64>,
    pub from: Vec<f64>,
    pub net: Vec<f64>,
    pub npdc: DMatrix<f64>,
    pub tci: f64,
    pub scope: Scope,
}

fn check_sigma(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.iter().any(|v| !v.is_finite()) || sigma.clone().cholesky().is_none() {
        return Err(Error::Decomposition(
            "residual covariance is not positive definite".into(),
        ));
    }
    Ok(())
}

/// Generalized (Pesaran-Shin) decomposition over `h = 0..=horizon`, row
/// normalized.
pub fn gfevd(vma: &VmaOperator, sigma: &DMatrix<f64>, horizon: usize) -> Result<GfevdMatrix> {
    let n = vma.dim();
    if sigma.shape() != (n, n) {
        return Err(Error::Decomposition(format!(
            "sigma is {:?}, operator dimension {n}",
            sigma.shape()
        )));
    }
    if vma.horizon() < horizon {
        return Err(Error::Decomposition(format!(
            "operator horizon {} shorter than {horizon}",
            vma.horizon()
        )));
    }
    check_sigma(sigma)?;
    let mut num = DMatrix::<f64>::zeros(n, n);
    let mut den = vec![0.0f64; n];
    for psi in &vma.psi[..=horizon] {
        let ps = psi * sigma;
        for j in 0..n {
            for k in 0..n {
                num[(j, k)] += ps[(j, k)] * ps[(j, k)];
            }
            // (Psi Sigma Psi')_jj = sum_k (Psi Sigma)_jk Psi_jk
            den[j] += (0..n).map(|k| ps[(j, k)] * psi[(j, k)]).sum::<f64>();
        }
    }
    let mut theta = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            theta[(j, k)] = num[(j, k)] / sigma[(k, k)] / den[j];
        }
    }
    row_normalize(&mut theta);
    Ok(GfevdMatrix {
        theta,
        scope: Scope::Time { horizon },
    })
}

fn row_normalize(theta: &mut DMatrix<f64>) {
    for mut row in theta.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
}

/// TO, FROM, NET, NPDC and TCI from a (band or time) decomposition.
pub fn dy_measures(g: &GfevdMatrix) -> ConnectednessMeasures {
    let t = &g.theta;
    let n = t.nrows();
    let mut to = vec![0.0; n];
    let mut from = vec![0.0; n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                to[j] += t[(k, j)] * 100.0;
                from[j] += t[(j, k)] * 100.0;
            }
        }
    }
    let net = to.iter().zip(&from).map(|(a, b)| a - b).collect();
    let mut npdc = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let v = (t[(j, k)] - t[(k, j)]) * 100.0;
            npdc[(j, k)] = v;
            npdc[(k, j)] = -v;
        }
    }
    let tci = to.iter().sum::<f64>() / n as f64;
    ConnectednessMeasures {
        to,
        from,
        net,
        npdc,
        tci,
        scope: g.scope.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvpvar::vma;
    use proptest::prelude::*;

    fn time(theta: DMatrix<f64>) -> GfevdMatrix {
        GfevdMatrix {
            theta,
            scope: Scope::Time { horizon: 10 },
        }
    }

    // Independent oracle: iterate a generalized unit shock through the VAR
    // for the numerator and the forecast-error covariance recursion
    // C_h = Phi C_{h-1} Phi' for the denominator.
    fn oracle(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
        let n = phi.nrows();
        let mut theta = DMatrix::zeros(n, n);
        let mut den = vec![0.0; n];
        let mut c = sigma.clone();
        for _ in 0..=horizon {
            for j in 0..n {
                den[j] += c[(j, j)];
            }
            c = phi * &c * phi.transpose();
        }
        for k in 0..n {
            let mut x = sigma.column(k).into_owned();
            for _ in 0..=horizon {
                for j in 0..n {
                    theta[(j, k)] += x[j] * x[j] / sigma[(k, k)];
                }
                x = phi * x;
            }
        }
        for j in 0..n {
            let row_total: f64 = (0..n).map(|k| theta[(j, k)] / den[j]).sum();
            for k in 0..n {
                theta[(j, k)] = theta[(j, k)] / den[j] / row_total;
            }
        }
        theta
    }

    #[test]
    fn white_noise_is_unconnected() {
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let g = gfevd(&vma(&DMatrix::zeros(3, 3), 10), &sigma, 10).unwrap();
        assert!((&g.theta - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
        assert_eq!(dy_measures(&g).tci, 0.0);
    }

    #[test]
    fn single_variable_attributes_everything_to_itself() {
        let g = gfevd(
            &vma(&DMatrix::from_element(1, 1, 0.7), 20),
            &DMatrix::from_element(1, 1, 3.0),
            20,
        )
        .unwrap();
        assert!((g.theta[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_recursion_oracle() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.5]);
        let sigma = DMatrix::identity(2, 2);
        let g = gfevd(&vma(&phi, 10), &sigma, 10).unwrap();
        let o = oracle(&phi, &sigma, 10);
        assert!((&g.theta - &o).abs().max() < 1e-10);

        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let g = gfevd(&vma(&phi, 10), &sigma, 10).unwrap();
        assert!((&g.theta - &oracle(&phi, &sigma, 10)).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_indefinite_sigma() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            gfevd(&vma(&DMatrix::zeros(2, 2), 5), &sigma, 5),
            Err(Error::Decomposition(_))
        ));
    }

    #[test]
    fn hand_evaluated_symmetric_pair() {
        let m = dy_measures(&time(DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.4, 0.6])));
        for v in m.to.iter().chain(&m.from) {
            assert!((v - 40.0).abs() < 1e-12);
        }
        assert_eq!(m.net, vec![0.0, 0.0]);
        assert!((m.tci - 40.0).abs() < 1e-12);
    }

    #[test]
    fn identity_has_zero_measures() {
        let m = dy_measures(&time(DMatrix::identity(4, 4)));
        assert_eq!(m.tci, 0.0);
        assert!(m.npdc.iter().all(|v| *v == 0.0));
    }

    fn stochastic_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(0.001f64..1.0, n * n).prop_map(move |v| {
            let mut m = DMatrix::from_row_slice(n, n, &v);
            row_normalize(&mut m);
            m
        })
    }

    fn stable_system() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (2usize..5).prop_flat_map(|n| {
            (
                prop::collection::vec(-1.0f64..1.0, n * n),
                prop::collection::vec(-1.0f64..1.0, n * n),
            )
                .prop_map(move |(a, b)| {
                    let mut phi = DMatrix::from_row_slice(n, n, &a);
                    let norm = phi.norm();
                    if norm > 0.0 {
                        phi *= 0.8 / norm;
                    }
                    let l = DMatrix::from_row_slice(n, n, &b);
                    let sigma = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
                    (phi, sigma)
                })
        })
    }

    proptest! {
        #[test]
        fn dy_identities(theta in (2usize..9).prop_flat_map(stochastic_matrix)) {
            let m = dy_measures(&time(theta.clone()));
            let n = theta.nrows() as f64;
            for j in 0..theta.nrows() {
                prop_assert!((theta.row(j).sum() - 1.0).abs() < 1e-10);
                prop_assert_eq!(m.net[j], m.to[j] - m.from[j]);
                for k in 0..theta.nrows() {
                    prop_assert_eq!(m.npdc[(j, k)], -m.npdc[(k, j)]);
                }
            }
            prop_assert!(m.net.iter().sum::<f64>().abs() < 1e-10);
            prop_assert!((m.tci - m.to.iter().sum::<f64>() / n).abs() < 1e-10);
            prop_assert!((m.tci - m.from.iter().sum::<f64>() / n).abs() < 1e-10);
        }

        #[test]
        fn rows_sum_to_one((phi, sigma) in stable_system()) {
            let g = gfevd(&vma(&phi, 30), &sigma, 30).unwrap();
            let n = phi.nrows();
            for j in 0..n {
                prop_assert!((g.theta.row(j).sum() - 1.0).abs() < 1e-10);
            }
            prop_assert!((g.theta.sum() - n as f64).abs() < 1e-9);
            prop_assert!(g.theta.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn permutation_equivariance((phi, sigma) in stable_system(), seed in any::<u64>()) {
            let n = phi.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = crate::stats::mix_seed(s, i as u64);
                perm.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let p = DMatrix::from_fn(n, n, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
            let g = gfevd(&vma(&phi, 20), &sigma, 20).unwrap();
            let gp = gfevd(
                &vma(&(&p * &phi * p.transpose()), 20),
                &(&p * &sigma * p.transpose()),
                20,
            )
            .unwrap();
            let expect = &p * &g.theta * p.transpose();
            prop_assert!((&gp.theta - &expect).abs().max() < 1e-12);
            let m = dy_measures(&g);
            let mp = dy_measures(&gp);
            for i in 0..n {
                prop_assert!((mp.net[i] - m.net[perm[i]]).abs() < 1e-9);
            }
            prop_assert!((mp.tci - m.tci).abs() < 1e-9);
        }
    }
}
