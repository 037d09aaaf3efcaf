use nalgebra::DMatrix;

/// Moving-average matrices `Psi_0 = I, Psi_1, ..., Psi_H` at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct VmaOperator {
    pub psi: Vec<DMatrix<f64>>,
}

impl VmaOperator {
    pub fn horizon(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.psi[0].nrows()
    }
}

/// `Psi_h = sum_{i=1}^{min(h,p)} Phi_i Psi_{h-i}` from the stacked
/// `N x (N p)` coefficient matrix `[Phi_1 ... Phi_p]`.
pub fn vma(phi: &DMatrix<f64>, horizon: usize) -> VmaOperator {
    let n = phi.nrows();
    assert!(n > 0 && phi.ncols().is_multiple_of(n), "phi must be N x Np");
    let p = phi.ncols() / n;
    let blocks: Vec<DMatrix<f64>> = (0..p).map(|i| phi.columns(i * n, n).into_owned()).collect();
    let mut psi = Vec::with_capacity(horizon + 1);
    psi.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut acc = DMatrix::zeros(n, n);
        for i in 1..=h.min(p) {
            acc += &blocks[i - 1] * &psi[h - i];
        }
        psi.push(acc);
    }
    VmaOperator { psi }
}

/// Largest modulus among the eigenvalues of the VAR companion matrix.
pub fn companion_spectral_radius(phi: &DMatrix<f64>) -> f64 {
    let n = phi.nrows();
    let np = phi.ncols();
    let mut c = DMatrix::zeros(np, np);
    c.rows_mut(0, n).copy_from(phi);
    for i in n..np {
        c[(i, i - n)] = 1.0;
    }
    c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rescales lag block `l` by `c^l`, which multiplies every companion
/// eigenvalue by `c`, so the radius lands exactly on `cap`. Returns the
/// radius before rescaling; `phi` is untouched when it is already below `cap`.
pub fn stabilize(phi: &mut DMatrix<f64>, cap: f64) -> f64 {
    let r = companion_spectral_radius(phi);
    if r >= cap {
        let n = phi.nrows();
        let c = cap / r;
        for l in 0..phi.ncols() / n {
            phi.columns_mut(l * n, n).scale_mut(c.powi(l as i32 + 1));
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_has_no_memory() {
        let v = vma(&DMatrix::zeros(3, 6), 5);
        assert_eq!(v.psi[0], DMatrix::identity(3, 3));
        assert!(v.psi[1..].iter().all(|m| m.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn scalar_ar1_is_geometric() {
        let v = vma(&DMatrix::from_element(1, 1, 0.5), 20);
        for (h, m) in v.psi.iter().enumerate() {
            assert!((m[(0, 0)] - 0.5f64.powi(h as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn var2_matches_simulated_impulse_responses() {
        // Psi_h e_k is the response at h to a unit shock in variable k at 0.
        let phi = DMatrix::from_row_slice(2, 4, &[0.5, 0.1, 0.2, 0.0, -0.3, 0.4, 0.1, -0.2]);
        let v = vma(&phi, 30);
        for k in 0..2 {
            let mut hist = vec![vec![0.0; 2]; 33];
            hist[2][k] = 1.0;
            for t in 3..33 {
                for i in 0..2 {
                    hist[t][i] = phi[(i, 0)] * hist[t - 1][0]
                        + phi[(i, 1)] * hist[t - 1][1]
                        + phi[(i, 2)] * hist[t - 2][0]
                        + phi[(i, 3)] * hist[t - 2][1];
                }
            }
            for h in 0..=30 {
                for i in 0..2 {
                    assert!((v.psi[h][(i, k)] - hist[h + 2][i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn stable_systems_decay() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.5]);
        assert!(companion_spectral_radius(&phi) < 1.0);
        let v = vma(&phi, 100);
        assert!(v.psi[100].norm() < 1e-4);
    }

    #[test]
    fn stabilize_puts_radius_on_cap() {
        let mut phi = DMatrix::from_row_slice(2, 4, &[0.9, 0.3, 0.4, 0.0, 0.2, 0.8, 0.1, 0.3]);
        let before = stabilize(&mut phi, 0.95);
        assert!(before > 1.0, "{before}");
        assert!((companion_spectral_radius(&phi) - 0.95).abs() < 1e-10);

        let stable = DMatrix::from_row_slice(1, 1, &[0.5]);
        let mut same = stable.clone();
        assert_eq!(stabilize(&mut same, 0.95), 0.5);
        assert_eq!(same, stable);
    }
}
