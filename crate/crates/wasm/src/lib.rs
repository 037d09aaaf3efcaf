//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the numerics can be
//! tested natively; results cross the boundary as `Float64Array`s or JSON.

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use spillover::connectedness::{
    band_measures, default_bands, dy_measures, gfevd, spectral_gfevd, ConnectednessMeasures,
};
use spillover::gjrsk::{filter_moments, gc_density, simulate, GjrskParams, N_PARAMS};
use spillover::tvpvar::{companion_spectral_radius, vma};

/// Density values at `points` evenly spaced abscissae on `[lo, hi]`.
pub fn density_curve(s: f64, k: f64, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points).map(|i| gc_density(lo + step * i as f64, s, k)).collect()
}

#[derive(Debug, Serialize)]
pub struct SimulatedPaths {
    pub r: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    pub clamp_events: usize,
}

/// Simulates `n` returns and refilters them through the true parameters.
/// `params` is in the order alpha1, beta0..3, gamma0..3, delta0..3.
pub fn simulate_paths(params: &[f64], n: usize, seed: u64) -> Result<SimulatedPaths, String> {
    if params.len() != N_PARAMS {
        return Err(format!("expected {N_PARAMS} parameters, got {}", params.len()));
    }
    let p = GjrskParams::from_slice(params);
    let r = simulate(&p, n, seed).map_err(|e| e.to_string())?;
    let path = filter_moments(&p, &r).map_err(|e| e.to_string())?;
    Ok(SimulatedPaths {
        r,
        h: path.h,
        s: path.s,
        k: path.k,
        clamp_events: path.clamp_events,
    })
}

#[derive(Debug, Serialize)]
pub struct ScopeSummary {
    pub scope: String,
    pub tci: f64,
    pub to: Vec<f64>,
    pub from: Vec<f64>,
    pub net: Vec<f64>,
    /// Row-major, percent.
    pub npdc: Vec<f64>,
}

impl From<(String, ConnectednessMeasures)> for ScopeSummary {
    fn from((scope, m): (String, ConnectednessMeasures)) -> Self {
        Self {
            scope,
            tci: m.tci,
            to: m.to,
            from: m.from,
            net: m.net,
            npdc: m.npdc.transpose().iter().copied().collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DemoConnectedness {
    pub radius: f64,
    /// Time domain first, then short, medium and long bands.
    pub scopes: Vec<ScopeSummary>,
}

/// Time and band connectedness of a VAR(1) with row-major `phi` and `sigma`.
pub fn var1_connectedness(phi: &[f64], sigma: &[f64], n: usize, horizon: usize) -> Result<DemoConnectedness, String> {
    if n == 0 || phi.len() != n * n || sigma.len() != n * n {
        return Err(format!("phi and sigma must both hold {} entries", n * n));
    }
    let phi = DMatrix::from_row_slice(n, n, phi);
    let sigma = DMatrix::from_row_slice(n, n, sigma);
    let radius = companion_spectral_radius(&phi);
    if radius >= 1.0 {
        return Err(format!("spectral radius {radius:.3} is not below one"));
    }
    let v = vma(&phi, horizon);
    let time = gfevd(&v, &sigma, horizon).map_err(|e| e.to_string())?;
    let sg = spectral_gfevd(&v, &sigma, 512).map_err(|e| e.to_string())?;
    let mut bands = band_measures(&sg, &default_bands()).map_err(|e| e.to_string())?;
    // short, medium, long
    bands.sort_by(|a, b| b.band.a.total_cmp(&a.band.a));
    let mut scopes = vec![ScopeSummary::from(("time".to_string(), dy_measures(&time)))];
    scopes.extend(
        bands
            .into_iter()
            .map(|b| ScopeSummary::from((b.band.label, b.measures))),
    );
    Ok(DemoConnectedness { radius, scopes })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve_js(s: f64, k: f64, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    density_curve(s, k, lo, hi, points)
}

/// JSON `{r, h, s, k, clamp_events}`.
#[wasm_bindgen(js_name = simulateGjrsk)]
pub fn simulate_gjrsk_js(params: &[f64], n: usize, seed: u32) -> Result<String, JsError> {
    to_json(&simulate_paths(params, n, seed as u64).map_err(|e| JsError::new(&e))?)
}

/// JSON `{radius, scopes: [{scope, tci, to, from, net, npdc}]}`.
#[wasm_bindgen(js_name = var1Connectedness)]
pub fn var1_connectedness_js(phi: &[f64], sigma: &[f64], n: usize, horizon: usize) -> Result<String, JsError> {
    to_json(&var1_connectedness(phi, sigma, n, horizon).map_err(|e| JsError::new(&e))?)
}
