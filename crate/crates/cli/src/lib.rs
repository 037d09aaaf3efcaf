//! The `spillover` command: runs the analysis pipeline from a TOML config
//! and writes plot-ready CSV, JSON and graph files with a hashed manifest.

pub mod config;
pub mod error;
pub mod fixture;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, CliResult, EXIT_CONFIG, EXIT_OK};
use crate::manifest::{RunManifest, StageRecord};
use crate::stages::{Ctx, Warnings};

#[derive(Debug, Parser)]
#[command(name = "spillover", version, about = "Higher-moment spillover pipeline")]
pub struct Cli {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, env = "SPILLOVER_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, env = "SPILLOVER_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Forecast horizon H.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Bands as `label:min-max,...` in trading days, `inf` for no upper bound.
    #[arg(long, global = true)]
    pub bands: Option<String>,
    /// Leave the TVP-VAR burn-in dates out of the connectedness outputs.
    #[arg(long, global = true)]
    pub drop_burnin: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Every stage in order, then the horizon sweep and the report.
    Run,
    /// Load prices and factors, compute log returns, align and standardize factors.
    Ingest,
    /// Descriptive statistics and return diagnostics.
    Diagnose,
    /// Fit GJRSK to each return series and build the four moment panels.
    Gjrsk,
    /// TVP-VAR and time/frequency connectedness for each moment panel.
    Connect,
    /// Net-pairwise spillover networks from the average decompositions.
    Network,
    /// Random-forest driver analysis of every TCI series.
    Drivers,
    /// Time-domain TCI for each horizon in the sweep list.
    Sweep,
    /// Average-connectedness tables from cached measures.
    Report,
    /// Write the synthetic fixture dataset and its config.
    Fixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = fixture::FIXTURE_SEED)]
        fixture_seed: u64,
        #[arg(long, default_value_t = fixture::FIXTURE_DAYS)]
        days: usize,
    },
}

type StageFn = fn(&Ctx) -> CliResult<Warnings>;

pub const PIPELINE: [(&str, StageFn); 8] = [
    ("ingest", stages::ingest),
    ("diagnose", stages::diagnose),
    ("gjrsk", stages::gjrsk),
    ("connect", stages::connect),
    ("network", stages::network),
    ("drivers", stages::drivers),
    ("sweep", stages::sweep),
    ("report", stages::report),
];

fn run_stage(ctx: &Ctx, manifest: &mut RunManifest, name: &str, f: StageFn) -> CliResult<()> {
    let t0 = Instant::now();
    let result = f(ctx);
    let wall_seconds = t0.elapsed().as_secs_f64();
    let rec = match &result {
        Ok(w) => StageRecord {
            wall_seconds,
            status: "ok".into(),
            warnings: w.clone(),
        },
        Err(e) => StageRecord {
            wall_seconds,
            status: format!("failed: {e}"),
            warnings: Vec::new(),
        },
    };
    manifest.record(name, rec);
    let written = manifest.write(&ctx.out);
    result?;
    written
}

/// Runs one stage, or all of them for `Run`, and returns the manifest.
pub fn execute(cfg: &PipelineConfig, command: &Command) -> CliResult<RunManifest> {
    cfg.validate()?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let ctx = Ctx { cfg, out: out.clone() };
    let mut manifest = RunManifest::load_or_new(&out, &cfg.hash(), cfg.seed);
    let wanted: Vec<&str> = match command {
        Command::Run => PIPELINE
            .iter()
            .map(|(n, _)| *n)
            .filter(|n| match *n {
                "drivers" => !cfg.factors.is_empty(),
                "sweep" => !cfg.connectedness.sweep.is_empty(),
                _ => true,
            })
            .collect(),
        Command::Ingest => vec!["ingest"],
        Command::Diagnose => vec!["diagnose"],
        Command::Gjrsk => vec!["gjrsk"],
        Command::Connect => vec!["connect"],
        Command::Network => vec!["network"],
        Command::Drivers => vec!["drivers"],
        Command::Sweep => vec!["sweep"],
        Command::Report => vec!["report"],
        Command::Fixture { .. } => unreachable!("handled before config loading"),
    };
    for (name, f) in PIPELINE.iter().filter(|(n, _)| wanted.contains(n)) {
        run_stage(&ctx, &mut manifest, name, *f)?;
    }
    Ok(manifest)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(j) = cli.jobs {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    if let Command::Fixture {
        dir,
        fixture_seed,
        days,
    } = &cli.command
    {
        return fixture::generate(dir, *fixture_seed, *days);
    }
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(&path)?;
    cfg.apply(&Overrides {
        output: cli.output.clone(),
        seed: cli.seed,
        horizon: cli.horizon,
        bands: cli.bands.clone(),
        drop_burnin: cli.drop_burnin,
    })?;
    let manifest = execute(&cfg, &cli.command)?;
    for w in manifest.warnings() {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {} files to {}", manifest.files.len(), cfg.output_dir().display());
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
