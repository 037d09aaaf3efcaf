//! Deterministic synthetic dataset: eight GJRSK-driven price series with
//! cross-market spillovers and ten driver series at mixed frequencies.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spillover::gjrsk::{simulate, GjrskParams};
use spillover::stats::mix_seed;

use crate::error::{CliError, CliResult};

pub const MARKETS: [&str; 8] = [
    "wti",
    "brent",
    "heating_oil",
    "natural_gas",
    "corn",
    "wheat",
    "soybean",
    "rice",
];

/// `(name, frequency, persistence, level, scale)`.
const FACTORS: [(&str, &str, f64, f64, f64); 10] = [
    ("vix", "daily", 0.98, 20.0, 1.5),
    ("usd_index", "daily", 0.995, 95.0, 0.4),
    ("treasury_10y", "daily", 0.995, 2.5, 0.04),
    ("gpr", "daily", 0.95, 100.0, 12.0),
    ("oil_inventory", "weekly", 0.9, 450.0, 6.0),
    ("epu", "monthly", 0.8, 150.0, 25.0),
    ("oil_production", "monthly", 0.9, 80.0, 0.8),
    ("industrial_production", "monthly", 0.85, 100.0, 1.2),
    ("temperature_anomaly", "monthly", 0.6, 0.8, 0.15),
    ("disaster_count", "annual", 0.5, 350.0, 40.0),
];

pub const FIXTURE_DAYS: usize = 3000;
pub const FIXTURE_SEED: u64 = 20240601;

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

fn market_params(i: usize) -> GjrskParams {
    let f = i as f64;
    GjrskParams {
        alpha1: 0.05 - 0.01 * f,
        beta: [1e-6 * (1.0 + 0.3 * f), 0.05, 0.85, 0.04],
        gamma: [0.0, 0.0, 0.0, 0.1],
        delta: [3.0, 0.0, 0.0, 0.05],
    }
}

/// Innovation draws for market `i`. A draw whose variance path bursts is
/// replaced by the next sub-seed so every fixture series stays usable.
fn innovations(i: usize, n: usize, seed: u64) -> CliResult<Vec<f64>> {
    let p = market_params(i);
    for attempt in 0..64u64 {
        let r = simulate(&p, n, mix_seed(mix_seed(seed, i as u64), attempt))
            .map_err(|e| CliError::Config(format!("fixture simulation: {e}")))?;
        if r.iter().all(|v| v.is_finite() && v.abs() < 0.15) {
            return Ok(r);
        }
    }
    Err(CliError::Config(format!("fixture market {i}: every draw burst")))
}

/// Writes `data/*.csv` and `config.toml` under `dir`.
pub fn generate(dir: &Path, seed: u64, n_days: usize) -> CliResult<()> {
    let data = dir.join("data");
    std::fs::create_dir_all(&data).map_err(|e| CliError::io(&data, e))?;
    let dates = business_days(NaiveDate::from_ymd_opt(2012, 1, 2).expect("valid"), n_days);
    let e: Vec<Vec<f64>> = (0..MARKETS.len())
        .map(|i| innovations(i, n_days, seed))
        .collect::<CliResult<_>>()?;

    // Contemporaneous loadings on crude (market 0) and corn (market 4), plus
    // lagged crude spillovers into gas and food.
    let lag = |v: &[f64], t: usize| if t == 0 { 0.0 } else { v[t - 1] };
    let returns: Vec<Vec<f64>> = (0..MARKETS.len())
        .map(|i| {
            (0..n_days)
                .map(|t| match i {
                    0 => e[0][t],
                    1 => 0.8 * e[0][t] + 0.6 * e[1][t],
                    2 => 0.6 * e[0][t] + 0.8 * e[2][t],
                    3 => 0.3 * lag(&e[0], t) + e[3][t],
                    4 => e[4][t] + 0.3 * lag(&e[0], t),
                    5 => 0.5 * e[4][t] + e[5][t],
                    6 => 0.4 * e[4][t] + e[6][t] + 0.2 * lag(&e[0], t),
                    _ => e[7][t],
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xDA7E));
    for (i, name) in MARKETS.iter().enumerate() {
        let mut s = String::from("date,close\n");
        let mut price = 60.0 + 10.0 * i as f64;
        for (t, d) in dates.iter().enumerate() {
            price *= returns[i][t].exp();
            // About one day in a hundred is a market holiday for this series.
            if t > 0 && rng.gen_bool(0.01) {
                continue;
            }
            let _ = writeln!(s, "{},{price:.6}", d.format("%Y-%m-%d"));
        }
        let p = data.join(format!("{name}.csv"));
        std::fs::write(&p, s).map_err(|e| CliError::io(&p, e))?;
    }

    for (fi, (name, freq, phi, level, scale)) in FACTORS.iter().enumerate() {
        let mut frng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1000 + fi as u64));
        let stamps: Vec<NaiveDate> = match *freq {
            "daily" => dates.clone(),
            "weekly" => dates.iter().copied().filter(|d| d.weekday() == Weekday::Fri).collect(),
            "monthly" => {
                let mut v: Vec<NaiveDate> = dates.iter().map(|d| d.with_day(1).expect("day 1")).collect();
                v.dedup();
                v
            }
            _ => {
                let mut v: Vec<NaiveDate> = dates
                    .iter()
                    .map(|d| NaiveDate::from_ymd_opt(d.year(), 1, 1).expect("Jan 1"))
                    .collect();
                v.dedup();
                v
            }
        };
        let mut x = 0.0f64;
        let mut s = String::from("date,value\n");
        for d in &stamps {
            let z: f64 = StandardNormal.sample(&mut frng);
            x = phi * x + (1.0 - phi * phi).sqrt() * z;
            let _ = writeln!(s, "{},{:.6}", d.format("%Y-%m-%d"), level + scale * x);
        }
        let p = data.join(format!("{name}.csv"));
        std::fs::write(&p, s).map_err(|e| CliError::io(&p, e))?;
    }

    let p = dir.join("config.toml");
    std::fs::write(&p, config_text(seed)).map_err(|e| CliError::io(&p, e))
}

fn config_text(seed: u64) -> String {
    let mut s = String::from(
        "# Synthetic fixture: simulated prices and drivers, not market data.\n\
         # Regenerate with `spillover fixture --dir <this directory>`.\n\n",
    );
    let _ = writeln!(s, "output = \"output\"\nseed = {seed}\ncalendar = \"intersection\"\n");
    for m in MARKETS {
        let _ = writeln!(s, "[[markets]]\nname = \"{m}\"\npath = \"data/{m}.csv\"\n");
    }
    for (name, freq, ..) in FACTORS {
        let _ = writeln!(
            s,
            "[[factors]]\nname = \"{name}\"\npath = \"data/{name}.csv\"\nfrequency = \"{freq}\"\n"
        );
    }
    s.push_str(
        "[gjrsk]\nstarts = 4\n\n\
         [tvpvar]\np = 1\nkappa1 = 0.99\nkappa2 = 0.96\nprior_obs = 200\n\n\
         [connectedness]\nhorizon = 100\nsweep = [50, 200]\ngrid_size = 512\n\n\
         [network]\nthreshold = 0.0\n\n\
         # A small grid keeps the fixture run short; the built-in default is the\n\
         # full 144-cell grid.\n\
         [forest]\nfolds = 5\nrepeats = 20\n\n\
         [forest.grid]\nn_trees = [50]\nmax_depth = [4, 8]\nmin_samples_leaf = [5]\nmin_samples_split = [10]\nmax_features = [\"third\"]\n",
    );
    s
}
