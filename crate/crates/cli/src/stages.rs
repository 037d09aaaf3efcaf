//! One function per pipeline stage. Each reads upstream caches from the
//! output directory and writes only under its own subdirectory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde_json::json;
use spillover::connectedness::{connectedness_path, dy_measures, gfevd, AverageTable};
use spillover::forest::{explain_target, Dataset, ImportanceReport, TargetReport};
use spillover::gjrsk::{estimate, PARAM_NAMES};
use spillover::marketdata::{
    align_factors, diagnostics, load_prices, load_series_csv, log_returns, read_wide_csv, standardize, write_wide_csv,
    RawFactor, ReturnPanel,
};
use spillover::netgraph::{build_network, ExportFormat};
use spillover::stats::{correlation, label_tag, mix_seed};
use spillover::tvpvar::{kalman_tvp, select_lag, vma, TvpVarPath};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, StageContext};

pub const MOMENTS: [&str; 4] = ["return", "volatility", "skewness", "kurtosis"];

/// Warnings raised by a stage, kept in the manifest.
pub type Warnings = Vec<String>;

pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: PathBuf,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn require(&self, stage: &'static str, rel: &str, run: &'static str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Prerequisite { stage, missing: p, run })
        }
    }

    /// Global seed xor a fixed per-stage tag.
    fn seed(&self, stage: &str) -> u64 {
        self.cfg.seed ^ label_tag(stage)
    }
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn mkdir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Clears a stage directory so stale files from earlier settings vanish.
fn fresh_dir(path: &Path) -> CliResult<()> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| CliError::io(path, e))?;
    }
    mkdir(path)
}

fn read_json<T: serde::de::DeserializeOwned>(stage: &'static str, path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| spillover::Error::Serialization(format!("{}: {e}", path.display())))
        .stage(stage)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn read_panel(stage: &'static str, path: &Path) -> CliResult<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    read_wide_csv(path).stage(stage)
}

pub fn ingest(ctx: &Ctx) -> CliResult<Warnings> {
    let cfg = ctx.cfg;
    let dir = ctx.path("ingest");
    fresh_dir(&dir)?;
    let prices = load_prices(&cfg.market_sources(), cfg.calendar).stage("ingest")?;
    let rets = log_returns(&prices).stage("ingest")?;
    write_wide_csv(&dir.join("prices.csv"), &prices.dates, &prices.names, &prices.series).stage("ingest")?;
    write_wide_csv(&dir.join("returns.csv"), &rets.dates, &rets.names, &rets.series).stage("ingest")?;
    let mut warnings = Vec::new();
    if cfg.factors.is_empty() {
        warnings.push("no factors configured; drivers stage will be skipped".into());
        return Ok(warnings);
    }
    let raw = cfg
        .factors
        .iter()
        .map(|f| {
            let obs = load_series_csv(&cfg.resolve(&f.path), f.date_format.as_deref()).stage_at("ingest", &f.name)?;
            Ok(RawFactor {
                name: f.name.clone(),
                frequency: f.frequency,
                observations: obs,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let aligned = align_factors(&raw, &rets.dates).stage("ingest")?;
    let z = standardize(&aligned).stage("ingest")?;
    write_wide_csv(
        &dir.join("factors_aligned.csv"),
        &aligned.dates,
        &aligned.names,
        &aligned.values,
    )
    .stage("ingest")?;
    write_wide_csv(&dir.join("factors.csv"), &z.dates, &z.names, &z.values).stage("ingest")?;
    Ok(warnings)
}

fn returns(ctx: &Ctx, stage: &'static str) -> CliResult<ReturnPanel> {
    let p = ctx.require(stage, "ingest/returns.csv", "ingest")?;
    let (dates, names, series) = read_panel(stage, &p)?;
    Ok(ReturnPanel { dates, names, series })
}

pub fn diagnose(ctx: &Ctx) -> CliResult<Warnings> {
    let r = returns(ctx, "diagnose")?;
    let dir = ctx.path("diagnose");
    fresh_dir(&dir)?;
    let rep = diagnostics(&r, ctx.cfg.diagnostics.lb_lags).stage("diagnose")?;
    write(
        &dir.join("diagnostics.json"),
        &(rep.to_json().stage("diagnose")? + "\n"),
    )?;
    write(&dir.join("diagnostics.csv"), &rep.to_csv())?;
    Ok(Vec::new())
}

pub fn gjrsk(ctx: &Ctx) -> CliResult<Warnings> {
    let r = returns(ctx, "gjrsk")?;
    let dir = ctx.path("gjrsk");
    fresh_dir(&dir)?;
    let stage_seed = ctx.seed("gjrsk");
    let fits = r
        .names
        .par_iter()
        .zip(&r.series)
        .enumerate()
        .map(|(i, (name, series))| {
            let mut opts = ctx.cfg.gjrsk;
            opts.seed = mix_seed(stage_seed, i as u64);
            estimate(series, &opts).stage_at("gjrsk", name)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    for (name, fit) in r.names.iter().zip(&fits) {
        if !fit.converged {
            warnings.push(format!("{name}: optimizer did not meet its tolerance"));
        }
        if fit.path.clamp_events > 0 {
            warnings.push(format!(
                "{name}: {} skewness/kurtosis clamp events",
                fit.path.clamp_events
            ));
        }
        let missing: Vec<&str> = PARAM_NAMES
            .iter()
            .zip(&fit.std_errors)
            .filter(|(_, se)| se.is_none())
            .map(|(n, _)| *n)
            .collect();
        if !missing.is_empty() {
            warnings.push(format!("{name}: no standard error for {}", missing.join(", ")));
        }
        let mut v = fit.to_json();
        v["series"] = json!(name);
        entries.push(v);
        write(&dir.join(format!("paths/{name}.csv")), &fit.path.to_csv(&r.dates))?;
    }
    write(&dir.join("fits.json"), &to_json(&entries))?;

    mkdir(&dir.join("panels"))?;
    let panels: [(&str, Vec<Vec<f64>>); 4] = [
        ("return", r.series.clone()),
        ("volatility", fits.iter().map(|f| f.path.h.clone()).collect()),
        ("skewness", fits.iter().map(|f| f.path.s.clone()).collect()),
        ("kurtosis", fits.iter().map(|f| f.path.k.clone()).collect()),
    ];
    for (moment, series) in &panels {
        write_wide_csv(&dir.join(format!("panels/{moment}.csv")), &r.dates, &r.names, series).stage("gjrsk")?;
    }
    Ok(warnings)
}

fn tvp_path(ctx: &Ctx, stage: &'static str, moment: &str, panel: &[Vec<f64>]) -> CliResult<TvpVarPath> {
    let mut tcfg = ctx.cfg.tvpvar;
    if let Some(pmax) = ctx.cfg.connectedness.lag_max {
        tcfg.p = select_lag(panel, pmax).stage_at(stage, moment)?.p;
    }
    kalman_tvp(panel, &tcfg).stage_at(stage, moment)
}

fn moment_panel(
    ctx: &Ctx,
    stage: &'static str,
    moment: &str,
) -> CliResult<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    let p = ctx.require(stage, &format!("gjrsk/panels/{moment}.csv"), "gjrsk")?;
    read_panel(stage, &p)
}

pub fn connect(ctx: &Ctx) -> CliResult<Warnings> {
    let c = &ctx.cfg.connectedness;
    let ccfg = c.core_config(c.horizon)?;
    let panels = MOMENTS
        .iter()
        .map(|m| moment_panel(ctx, "connect", m))
        .collect::<CliResult<Vec<_>>>()?;
    let dir = ctx.path("connect");
    fresh_dir(&dir)?;
    let mut warnings = Vec::new();
    for (moment, (dates, names, panel)) in MOMENTS.iter().zip(&panels) {
        let path = tvp_path(ctx, "connect", moment, panel)?;
        let cp = connectedness_path(&path, dates, names, &ccfg, c.drop_burnin).stage_at("connect", moment)?;
        warnings.extend(
            path.warnings
                .iter()
                .chain(&cp.warnings)
                .map(|w| format!("{moment}: {w}")),
        );
        if path.floor_events > 0 {
            warnings.push(format!("{moment}: {} covariance floor events", path.floor_events));
        }
        let tables: Vec<AverageTable> = (0..=cp.bands.len()).map(|s| cp.average_table(s)).collect();
        let mdir = dir.join(moment);
        write(&mdir.join("tci.csv"), &cp.tci_csv())?;
        write(&mdir.join("measures.csv"), &cp.long_csv())?;
        write(&mdir.join("averages.json"), &to_json(&tables))?;
        for t in &tables {
            write(&mdir.join(format!("table_{}.csv", t.scope)), &t.to_csv())?;
        }
        let summary = json!({
            "lag": path.p,
            "horizon": c.horizon,
            "grid_size": c.grid_size,
            "dates": cp.len(),
            "burn_in_dates": cp.burn_in.iter().filter(|b| **b).count(),
            "max_reconciliation_gap": cp.max_reconciliation_gap,
            "floor_events": path.floor_events,
        });
        write(&mdir.join("summary.json"), &to_json(&summary))?;
    }
    Ok(warnings)
}

fn averages(ctx: &Ctx, stage: &'static str, moment: &str) -> CliResult<Vec<AverageTable>> {
    let p = ctx.require(stage, &format!("connect/{moment}/averages.json"), "connect")?;
    read_json(stage, &p)
}

pub fn network(ctx: &Ctx) -> CliResult<Warnings> {
    let all = MOMENTS
        .iter()
        .map(|m| averages(ctx, "network", m))
        .collect::<CliResult<Vec<_>>>()?;
    let formats: Vec<ExportFormat> = ctx
        .cfg
        .network
        .formats
        .iter()
        .map(|f| f.parse().map_err(|e: spillover::Error| CliError::Config(e.to_string())))
        .collect::<CliResult<_>>()?;
    let dir = ctx.path("network");
    fresh_dir(&dir)?;
    for (moment, tables) in MOMENTS.iter().zip(&all) {
        for t in tables {
            let scope = format!("{moment}/{}", t.scope);
            let net = build_network(&t.measures(), &t.names, ctx.cfg.network.threshold, &scope);
            for f in &formats {
                write(
                    &dir.join(format!("{moment}/{}.{}", t.scope, f.extension())),
                    &net.export(*f),
                )?;
            }
        }
    }
    Ok(Vec::new())
}

/// `(dates, scope labels, columns)` of a TCI file, burn-in rows dropped.
fn tci_targets(ctx: &Ctx, moment: &str) -> CliResult<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    let p = ctx.require("drivers", &format!("connect/{moment}/tci.csv"), "connect")?;
    let (dates, mut names, mut cols) = read_panel("drivers", &p)?;
    let burn = cols.pop().unwrap_or_default();
    names.pop();
    let keep: Vec<usize> = (0..dates.len()).filter(|&t| burn[t] == 0.0).collect();
    let pick = |v: &[f64]| keep.iter().map(|&t| v[t]).collect::<Vec<f64>>();
    Ok((
        keep.iter().map(|&t| dates[t]).collect(),
        names,
        cols.iter().map(|c| pick(c)).collect(),
    ))
}

pub fn drivers(ctx: &Ctx) -> CliResult<Warnings> {
    if ctx.cfg.factors.is_empty() {
        return Err(CliError::Config("drivers needs [[factors]] in the config".into()));
    }
    let fpath = ctx.require("drivers", "ingest/factors.csv", "ingest")?;
    let (fdates, fnames, fvals) = read_panel("drivers", &fpath)?;
    let targets = MOMENTS
        .iter()
        .map(|m| tci_targets(ctx, m))
        .collect::<CliResult<Vec<_>>>()?;
    let grid = ctx.cfg.forest.grid.cells()?;
    let dir = ctx.path("drivers");
    fresh_dir(&dir)?;
    let row_of: BTreeMap<NaiveDate, usize> = fdates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let stage_seed = ctx.seed("drivers");

    let mut reports: Vec<TargetReport> = Vec::new();
    for (moment, (dates, scopes, cols)) in MOMENTS.iter().zip(&targets) {
        let rows = dates
            .iter()
            .map(|d| {
                row_of.get(d).copied().ok_or_else(|| CliError::Stage {
                    stage: "drivers",
                    context: Some(moment.to_string()),
                    source: spillover::Error::Alignment(format!("no factor row for {d}")),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let x: Vec<Vec<f64>> = fvals.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect();
        for (scope, y) in scopes.iter().zip(cols) {
            let target = format!("{moment}_{scope}");
            let data =
                Dataset::new(x.clone(), y.clone(), fnames.clone(), dates.clone()).stage_at("drivers", &target)?;
            let rep = explain_target(
                &target,
                &data,
                &grid,
                ctx.cfg.forest.folds,
                ctx.cfg.forest.repeats,
                mix_seed(stage_seed, label_tag(&target)),
            )
            .stage_at("drivers", &target)?;
            reports.push(rep);
        }
    }
    let mut metrics = format!("{}\n", TargetReport::CSV_HEADER);
    let mut importance = format!("{}\n", ImportanceReport::CSV_HEADER);
    for r in &reports {
        metrics.push_str(&r.metrics_csv_rows());
        importance.push_str(&r.importance.csv_rows());
    }
    write(&dir.join("metrics.csv"), &metrics)?;
    write(&dir.join("importance.csv"), &importance)?;
    write(&dir.join("reports.json"), &to_json(&reports))?;
    let chosen: Vec<_> = reports
        .iter()
        .map(|r| json!({"target": r.target, "params": r.chosen}))
        .collect();
    write(&dir.join("chosen.json"), &to_json(&chosen))?;
    Ok(Vec::new())
}

/// Sorted, deduplicated sweep horizons including the main one.
pub fn sweep_horizons(cfg: &PipelineConfig) -> Vec<usize> {
    let mut hs: Vec<usize> = cfg.connectedness.sweep.clone();
    hs.push(cfg.connectedness.horizon);
    hs.sort_unstable();
    hs.dedup();
    hs
}

pub fn sweep(ctx: &Ctx) -> CliResult<Warnings> {
    let panels = MOMENTS
        .iter()
        .map(|m| moment_panel(ctx, "sweep", m))
        .collect::<CliResult<Vec<_>>>()?;
    let dir = ctx.path("sweep");
    fresh_dir(&dir)?;
    let hs = sweep_horizons(ctx.cfg);
    let mut consistency = String::from("moment,h_a,h_b,correlation\n");
    let mut warnings = Vec::new();
    for (moment, (dates, _, panel)) in MOMENTS.iter().zip(&panels) {
        let path = tvp_path(ctx, "sweep", moment, panel)?;
        let series = hs
            .iter()
            .map(|&h| {
                (0..path.len())
                    .into_par_iter()
                    .map(|i| {
                        let g = gfevd(&vma(&path.phi[i], h), &path.sigma[i], h)
                            .stage_at("sweep", &format!("{moment} H={h} {}", dates[path.start + i]))?;
                        Ok(dy_measures(&g).tci)
                    })
                    .collect::<CliResult<Vec<f64>>>()
            })
            .collect::<CliResult<Vec<_>>>()?;
        let keep: Vec<usize> = (0..path.len())
            .filter(|&i| !(ctx.cfg.connectedness.drop_burnin && path.burn_in[i]))
            .collect();
        let mut csv = String::from("date");
        for h in &hs {
            let _ = write!(csv, ",H{h}");
        }
        csv.push_str(",burn_in\n");
        for &i in &keep {
            csv.push_str(&dates[path.start + i].format("%Y-%m-%d").to_string());
            for s in &series {
                let _ = write!(csv, ",{:.8}", s[i]);
            }
            let _ = writeln!(csv, ",{}", u8::from(path.burn_in[i]));
        }
        write(&dir.join(format!("{moment}.csv")), &csv)?;
        let live: Vec<usize> = (0..path.len()).filter(|&i| !path.burn_in[i]).collect();
        for a in 0..hs.len() {
            for b in (a + 1)..hs.len() {
                let sa: Vec<f64> = live.iter().map(|&i| series[a][i]).collect();
                let sb: Vec<f64> = live.iter().map(|&i| series[b][i]).collect();
                let rho = correlation(&sa, &sb);
                let _ = writeln!(consistency, "{moment},{},{},{rho:.8}", hs[a], hs[b]);
                if !(rho > 0.9) {
                    warnings.push(format!(
                        "{moment}: TCI at H={} and H={} correlate at {rho:.3}",
                        hs[a], hs[b]
                    ));
                }
            }
        }
    }
    write(&dir.join("consistency.csv"), &consistency)?;
    Ok(warnings)
}

fn markdown_table(t: &AverageTable) -> String {
    let m = t.measures();
    let mut s = String::from("|");
    for n in &t.names {
        let _ = write!(s, " | {n}");
    }
    s.push_str(" | FROM |\n|---");
    for _ in 0..=t.names.len() {
        s.push_str("|---:");
    }
    s.push_str("|\n");
    for (j, name) in t.names.iter().enumerate() {
        let _ = write!(s, "| {name}");
        for v in &t.theta[j] {
            let _ = write!(s, " | {v:.2}");
        }
        let _ = writeln!(s, " | {:.2} |", m.from[j]);
    }
    for (label, vals) in [("TO", &m.to), ("NET", &m.net)] {
        let _ = write!(s, "| {label}");
        for v in vals.iter() {
            let _ = write!(s, " | {v:.2}");
        }
        s.push_str(" | |\n");
    }
    let _ = writeln!(s, "| TCI | {:.2} |{}", m.tci, " |".repeat(t.names.len()));
    s
}

pub fn report(ctx: &Ctx) -> CliResult<Warnings> {
    let mut found = Vec::new();
    for m in MOMENTS {
        if ctx.path(&format!("connect/{m}/averages.json")).is_file() {
            found.push((m, averages(ctx, "report", m)?));
        }
    }
    if found.is_empty() {
        return Err(CliError::Prerequisite {
            stage: "report",
            missing: ctx.path("connect/<moment>/averages.json"),
            run: "connect",
        });
    }
    let dir = ctx.path("report");
    fresh_dir(&dir)?;
    let mut md = String::from("# Average connectedness\n\nPercentages; row j, column k is the share of j's forecast-error variance due to shocks in k.\n");
    let mut summary = String::from("moment,scope,tci,to_max,net_max,dates\n");
    for (moment, tables) in &found {
        for t in tables {
            let m = t.measures();
            let _ = write!(md, "\n## {moment}, {} ({} dates)\n\n", t.scope, t.dates);
            md.push_str(&markdown_table(t));
            let top = |v: &[f64]| {
                let i = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
                t.names[i].clone()
            };
            let _ = writeln!(
                summary,
                "{moment},{},{:.8},{},{},{}",
                t.scope,
                m.tci,
                top(&m.to),
                top(&m.net),
                t.dates
            );
        }
    }
    write(&dir.join("connectedness_tables.md"), &md)?;
    write(&dir.join("tci_summary.csv"), &summary)?;
    Ok(Vec::new())
}
