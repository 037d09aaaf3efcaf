use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reconcile::reconcile;
use super::spectral::{band_thetas, default_bands, validate_partition, FrequencyBand, SpectralEngine};
use super::{check_sigma, dy_measures, gfevd, ConnectednessMeasures, GfevdMatrix, Scope};
use crate::tvpvar::{vma, TvpVarPath};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectednessConfig {
    pub horizon: usize,
    pub grid_size: usize,
    pub bands: Vec<FrequencyBand>,
}

impl Default for ConnectednessConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            grid_size: 512,
            bands: default_bands(),
        }
    }
}

/// Measures for every filtered date. `band[t][d]` follows `bands[d]`.
#[derive(Debug, Clone)]
pub struct ConnectednessPath {
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub burn_in: Vec<bool>,
    pub horizon: usize,
    pub bands: Vec<FrequencyBand>,
    pub time_theta: Vec<DMatrix<f64>>,
    pub time: Vec<ConnectednessMeasures>,
    pub band_theta: Vec<Vec<DMatrix<f64>>>,
    pub band: Vec<Vec<ConnectednessMeasures>>,
    /// Worst time-versus-band-sum gap over all dates and measures.
    pub max_reconciliation_gap: f64,
    pub warnings: Vec<String>,
}

struct DateResult {
    time_theta: DMatrix<f64>,
    band_theta: Vec<DMatrix<f64>>,
    gap: f64,
    tail: f64,
}

fn at_date(e: Error, date: NaiveDate) -> Error {
    match e {
        Error::Decomposition(m) => Error::Decomposition(format!("{date}: {m}")),
        Error::Spectral { omega, msg } => Error::Spectral {
            omega,
            msg: format!("{date}: {msg}"),
        },
        other => other,
    }
}

fn one_date(
    phi: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    cfg: &ConnectednessConfig,
    engine: &SpectralEngine,
    grid: &[f64],
) -> Result<DateResult> {
    let op = vma(phi, cfg.horizon);
    let g = gfevd(&op, sigma, cfg.horizon)?;
    check_sigma(sigma)?;
    let (_, numerators) = engine.numerators(&op, sigma)?;
    let band_theta = band_thetas(grid, &numerators, &cfg.bands);
    let time_m = dy_measures(&g);
    let band_m: Vec<ConnectednessMeasures> = band_theta
        .iter()
        .zip(&cfg.bands)
        .map(|(t, b)| {
            dy_measures(&GfevdMatrix {
                theta: t.clone(),
                scope: b.scope(),
            })
        })
        .collect();
    let gap = reconcile(&time_m, &band_m).max_gap;
    let tail = op.psi.last().map_or(0.0, |m| m.abs().max());
    Ok(DateResult {
        time_theta: g.theta,
        band_theta,
        gap,
        tail,
    })
}

/// Time and band connectedness along a filtered TVP-VAR path. `dates` are
/// the panel's dates; path entry `i` belongs to `dates[path.start + i]`.
/// Burn-in entries share one computation.
pub fn connectedness_path(
    path: &TvpVarPath,
    dates: &[NaiveDate],
    names: &[String],
    cfg: &ConnectednessConfig,
    drop_burnin: bool,
) -> Result<ConnectednessPath> {
    if cfg.horizon < 1 {
        return Err(Error::Decomposition("horizon must be positive".into()));
    }
    let bands = validate_partition(&cfg.bands)?;
    let cfg = ConnectednessConfig { bands, ..cfg.clone() };
    if names.len() != path.n {
        return Err(Error::Decomposition(format!(
            "{} names for {} variables",
            names.len(),
            path.n
        )));
    }
    if dates.len() < path.start + path.len() {
        return Err(Error::Decomposition("fewer dates than filtered rows".into()));
    }
    let engine = SpectralEngine::new(cfg.grid_size)?;
    let grid = engine.grid();

    let rows: Vec<usize> = (0..path.len()).filter(|&i| !(drop_burnin && path.burn_in[i])).collect();
    let first_burn = rows.iter().copied().find(|&i| path.burn_in[i]);
    let burn_result = match first_burn {
        Some(i) => Some(
            one_date(&path.phi[i], &path.sigma[i], &cfg, &engine, &grid)
                .map_err(|e| at_date(e, dates[path.start + i]))?,
        ),
        None => None,
    };
    let live: Vec<usize> = rows.iter().copied().filter(|&i| !path.burn_in[i]).collect();
    let computed: Vec<DateResult> = live
        .par_iter()
        .map(|&i| {
            one_date(&path.phi[i], &path.sigma[i], &cfg, &engine, &grid).map_err(|e| at_date(e, dates[path.start + i]))
        })
        .collect::<Result<_>>()?;

    let mut out = ConnectednessPath {
        names: names.to_vec(),
        dates: Vec::with_capacity(rows.len()),
        burn_in: Vec::with_capacity(rows.len()),
        horizon: cfg.horizon,
        bands: cfg.bands.clone(),
        time_theta: Vec::with_capacity(rows.len()),
        time: Vec::with_capacity(rows.len()),
        band_theta: Vec::with_capacity(rows.len()),
        band: Vec::with_capacity(rows.len()),
        max_reconciliation_gap: 0.0,
        warnings: Vec::new(),
    };
    let mut live_iter = computed.iter();
    let mut worst_tail = 0.0f64;
    for &i in &rows {
        let r = if path.burn_in[i] {
            burn_result.as_ref().expect("burn-in computed")
        } else {
            live_iter.next().expect("one result per live row")
        };
        out.dates.push(dates[path.start + i]);
        out.burn_in.push(path.burn_in[i]);
        let tg = GfevdMatrix {
            theta: r.time_theta.clone(),
            scope: Scope::Time { horizon: cfg.horizon },
        };
        out.time.push(dy_measures(&tg));
        out.time_theta.push(r.time_theta.clone());
        out.band.push(
            r.band_theta
                .iter()
                .zip(&cfg.bands)
                .map(|(t, b)| {
                    dy_measures(&GfevdMatrix {
                        theta: t.clone(),
                        scope: b.scope(),
                    })
                })
                .collect(),
        );
        out.band_theta.push(r.band_theta.clone());
        out.max_reconciliation_gap = out.max_reconciliation_gap.max(r.gap);
        worst_tail = worst_tail.max(r.tail);
    }
    if worst_tail >= 1e-3 {
        out.warnings.push(format!(
            "|Psi_H| reaches {worst_tail:.3e} at H = {}; spectral measures truncate slow responses",
            cfg.horizon
        ));
    }
    Ok(out)
}

/// Date-averaged decomposition in percent with its directional summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageTable {
    pub scope: String,
    pub names: Vec<String>,
    /// Row-major `theta[j][k]` in percent.
    pub theta: Vec<Vec<f64>>,
    pub to: Vec<f64>,
    pub from: Vec<f64>,
    pub net: Vec<f64>,
    pub tci: f64,
    pub dates: usize,
}

impl AverageTable {
    /// Measures of the averaged decomposition. By linearity they equal the
    /// averages of the per-date measures.
    pub fn measures(&self) -> ConnectednessMeasures {
        let n = self.names.len();
        let theta = DMatrix::from_fn(n, n, |j, k| self.theta[j][k] / 100.0);
        let mut m = dy_measures(&GfevdMatrix {
            theta,
            scope: Scope::Band {
                label: self.scope.clone(),
                a: 0.0,
                b: 0.0,
            },
        });
        if self.scope == "time" {
            m.scope = Scope::Time { horizon: 0 };
        }
        m
    }

    /// Square table: variables by row with a FROM column, then TO and NET
    /// rows and a final TCI row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",FROM\n");
        for (j, name) in self.names.iter().enumerate() {
            s.push_str(name);
            for v in &self.theta[j] {
                let _ = write!(s, ",{v:.4}");
            }
            let _ = writeln!(s, ",{:.4}", self.from[j]);
        }
        for (label, vals) in [("TO", &self.to), ("NET", &self.net)] {
            s.push_str(label);
            for v in vals {
                let _ = write!(s, ",{v:.4}");
            }
            s.push_str(",\n");
        }
        let _ = writeln!(s, "TCI,{:.4}", self.tci);
        s
    }
}

impl ConnectednessPath {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Scope labels in column order: `time` then the bands.
    pub fn scopes(&self) -> Vec<String> {
        std::iter::once("time".to_string())
            .chain(self.bands.iter().map(|b| b.label.clone()))
            .collect()
    }

    fn scope_theta(&self, t: usize, scope: usize) -> &DMatrix<f64> {
        if scope == 0 {
            &self.time_theta[t]
        } else {
            &self.band_theta[t][scope - 1]
        }
    }

    fn scope_measures(&self, t: usize, scope: usize) -> &ConnectednessMeasures {
        if scope == 0 {
            &self.time[t]
        } else {
            &self.band[t][scope - 1]
        }
    }

    /// TCI for one scope index (0 = time domain).
    pub fn tci_series(&self, scope: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.scope_measures(t, scope).tci).collect()
    }

    /// Average over non-burn-in dates (all dates when every one is burn-in).
    pub fn average_table(&self, scope: usize) -> AverageTable {
        let n = self.names.len();
        let mut idx: Vec<usize> = (0..self.len()).filter(|&t| !self.burn_in[t]).collect();
        if idx.is_empty() {
            idx = (0..self.len()).collect();
        }
        let mut acc = DMatrix::zeros(n, n);
        for &t in &idx {
            acc += self.scope_theta(t, scope);
        }
        acc *= 100.0 / idx.len().max(1) as f64;
        let m = dy_measures(&GfevdMatrix {
            theta: &acc / 100.0,
            scope: Scope::Time { horizon: 0 },
        });
        AverageTable {
            scope: self.scopes()[scope].clone(),
            names: self.names.clone(),
            theta: (0..n).map(|j| acc.row(j).iter().copied().collect()).collect(),
            to: m.to,
            from: m.from,
            net: m.net,
            tci: m.tci,
            dates: idx.len(),
        }
    }

    /// Long format `date,scope,measure,i,j,value`: TO, FROM, NET per
    /// variable, NPDC for each pair `i < j`, and TCI.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("date,scope,measure,i,j,value\n");
        let scopes = self.scopes();
        for t in 0..self.len() {
            let d = self.dates[t].format("%Y-%m-%d").to_string();
            for (si, sc) in scopes.iter().enumerate() {
                let m = self.scope_measures(t, si);
                for (label, vals) in [("to", &m.to), ("from", &m.from), ("net", &m.net)] {
                    for (name, v) in self.names.iter().zip(vals.iter()) {
                        let _ = writeln!(s, "{d},{sc},{label},{name},,{v:.8}");
                    }
                }
                for i in 0..self.names.len() {
                    for j in (i + 1)..self.names.len() {
                        let _ = writeln!(
                            s,
                            "{d},{sc},npdc,{},{},{:.8}",
                            self.names[i],
                            self.names[j],
                            m.npdc[(i, j)]
                        );
                    }
                }
                let _ = writeln!(s, "{d},{sc},tci,,,{:.8}", m.tci);
            }
        }
        s
    }

    /// `date,time,<band labels>,burn_in`.
    pub fn tci_csv(&self) -> String {
        let mut s = String::from("date");
        for sc in self.scopes() {
            s.push(',');
            s.push_str(&sc);
        }
        s.push_str(",burn_in\n");
        for t in 0..self.len() {
            s.push_str(&self.dates[t].format("%Y-%m-%d").to_string());
            for si in 0..=self.bands.len() {
                let _ = write!(s, ",{:.8}", self.scope_measures(t, si).tci);
            }
            let _ = writeln!(s, ",{}", u8::from(self.burn_in[t]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvpvar::{kalman_tvp, TvpVarConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn panel(n: usize, len: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut y = vec![vec![0.0; len]; n];
        for t in 1..len {
            let common: f64 = StandardNormal.sample(&mut rng);
            for j in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                let prev = y[(j + 1) % n][t - 1];
                y[j][t] = 0.3 * y[j][t - 1] + 0.2 * prev + 0.5 * common + e;
            }
        }
        y
    }

    fn dates(len: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..len).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn path_reconciles_and_averages() {
        let y = panel(3, 400);
        let tvp = kalman_tvp(&y, &TvpVarConfig::default()).unwrap();
        let cfg = ConnectednessConfig {
            grid_size: 128,
            horizon: 50,
            ..Default::default()
        };
        let cp = connectedness_path(&tvp, &dates(400), &names(3), &cfg, false).unwrap();
        assert_eq!(cp.len(), tvp.len());
        assert!(cp.max_reconciliation_gap < 1e-10);
        assert_eq!(cp.time[0], cp.time[10]);
        let table = cp.average_table(0);
        assert_eq!(table.dates, tvp.len() - 200);
        let mean_tci: f64 = (0..cp.len())
            .filter(|&t| !cp.burn_in[t])
            .map(|t| cp.time[t].tci)
            .sum::<f64>()
            / table.dates as f64;
        assert!((table.tci - mean_tci).abs() < 1e-9);
        assert!((table.measures().tci - table.tci).abs() < 1e-9);
        for row in &table.theta {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("row,v0,v1,v2,FROM\n"));
        assert!(csv.lines().last().unwrap().starts_with("TCI,"));
    }

    #[test]
    fn burn_in_can_be_dropped() {
        let y = panel(2, 300);
        let tvp = kalman_tvp(&y, &TvpVarConfig::default()).unwrap();
        let cfg = ConnectednessConfig {
            grid_size: 64,
            horizon: 20,
            ..Default::default()
        };
        let cp = connectedness_path(&tvp, &dates(300), &names(2), &cfg, true).unwrap();
        assert_eq!(cp.len(), tvp.len() - 200);
        assert!(cp.burn_in.iter().all(|b| !b));
        assert_eq!(cp.dates[0], dates(300)[tvp.start + 200]);
        let tci = cp.tci_csv();
        assert_eq!(tci.lines().next().unwrap(), "date,time,long,medium,short,burn_in");
        assert_eq!(tci.lines().count(), cp.len() + 1);
        let long = cp.long_csv();
        // per date and scope: 3 x 2 directional rows, 1 pair, 1 TCI
        assert_eq!(long.lines().count(), 1 + cp.len() * 4 * 8);
    }

    #[test]
    fn names_must_match_dimension() {
        let y = panel(2, 300);
        let tvp = kalman_tvp(&y, &TvpVarConfig::default()).unwrap();
        let r = connectedness_path(&tvp, &dates(300), &names(3), &ConnectednessConfig::default(), false);
        assert!(r.is_err());
    }
}
