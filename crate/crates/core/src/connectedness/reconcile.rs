use serde::Serialize;

use super::ConnectednessMeasures;

/// Largest absolute gap, per measure, between time-domain values and the
/// sum over a band partition. Percentage points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconciliationReport {
    pub tci: f64,
    pub to: f64,
    pub from: f64,
    pub net: f64,
    pub npdc: f64,
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const RECONCILE_TOLERANCE: f64 = 1e-2;

pub fn reconcile(time: &ConnectednessMeasures, bands: &[ConnectednessMeasures]) -> ReconciliationReport {
    let n = time.to.len();
    let vec_gap = |get: &dyn Fn(&ConnectednessMeasures) -> &Vec<f64>| {
        (0..n)
            .map(|j| (get(time)[j] - bands.iter().map(|b| get(b)[j]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    };
    let to = vec_gap(&|m| &m.to);
    let from = vec_gap(&|m| &m.from);
    let net = vec_gap(&|m| &m.net);
    let mut npdc = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let s: f64 = bands.iter().map(|b| b.npdc[(j, k)]).sum();
            npdc = npdc.max((time.npdc[(j, k)] - s).abs());
        }
    }
    let tci = (time.tci - bands.iter().map(|b| b.tci).sum::<f64>()).abs();
    let max_gap = [tci, to, from, net, npdc].into_iter().fold(0.0, f64::max);
    ReconciliationReport {
        tci,
        to,
        from,
        net,
        npdc,
        max_gap,
        tolerance: RECONCILE_TOLERANCE,
        pass: max_gap < RECONCILE_TOLERANCE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectedness::{band_measures, default_bands, dy_measures, gfevd, spectral_gfevd, FrequencyBand};
    use crate::tvpvar::vma;
    use nalgebra::DMatrix;

    #[test]
    fn single_band_reconciles_with_spectral_whole() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.4, 0.2, -0.1, 0.3]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let sg = spectral_gfevd(&vma(&phi, 100), &sigma, 256).unwrap();
        let all = vec![FrequencyBand::new("all", 0.0, std::f64::consts::PI).unwrap()];
        let whole = band_measures(&sg, &all).unwrap().remove(0).measures;
        let r = reconcile(&whole, std::slice::from_ref(&whole));
        assert_eq!(r.max_gap, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn white_noise_reconciles_tightly() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let v = vma(&DMatrix::zeros(2, 2), 100);
        let time = dy_measures(&gfevd(&v, &sigma, 100).unwrap());
        let sg = spectral_gfevd(&v, &sigma, 512).unwrap();
        let bands: Vec<_> = band_measures(&sg, &default_bands())
            .unwrap()
            .into_iter()
            .map(|b| b.measures)
            .collect();
        assert!(reconcile(&time, &bands).max_gap < 1e-10);
    }

    #[test]
    fn stable_var_reconciles_within_tolerance() {
        let phi = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.1, 0.4, 0.2, -0.1, 0.0, 0.6]);
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.0]);
        let v = vma(&phi, 100);
        let time = dy_measures(&gfevd(&v, &sigma, 100).unwrap());
        let sg = spectral_gfevd(&v, &sigma, 512).unwrap();
        let bands: Vec<_> = band_measures(&sg, &default_bands())
            .unwrap()
            .into_iter()
            .map(|b| b.measures)
            .collect();
        let r = reconcile(&time, &bands);
        assert!(r.pass && r.tci < 1e-2, "{r:?}");
    }
}
