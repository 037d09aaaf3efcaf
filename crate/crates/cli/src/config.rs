//! Pipeline configuration, read from TOML. Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spillover::connectedness::{validate_partition, ConnectednessConfig, FrequencyBand};
use spillover::forest::{ForestParams, MaxFeatures};
use spillover::gjrsk::EstimateOptions;
use spillover::marketdata::{CalendarPolicy, Frequency, SeriesSource};
use spillover::tvpvar::TvpVarConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub calendar: CalendarPolicy,
    pub markets: Vec<SeriesSource>,
    #[serde(default)]
    pub factors: Vec<FactorSource>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub gjrsk: EstimateOptions,
    #[serde(default)]
    pub tvpvar: TvpVarConfig,
    #[serde(default)]
    pub connectedness: ConnectSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub forest: ForestSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

/// A driver series at its native frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSource {
    pub name: String,
    pub path: PathBuf,
    pub frequency: Frequency,
    #[serde(default)]
    pub date_format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub lb_lags: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { lb_lags: 20 }
    }
}

/// Frequency band given by cycle length in observations (trading days);
/// `max_days` absent means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub label: String,
    pub min_days: f64,
    #[serde(default)]
    pub max_days: Option<f64>,
}

impl BandSpec {
    pub fn to_band(&self) -> spillover::Result<FrequencyBand> {
        FrequencyBand::from_periods(&self.label, self.min_days, self.max_days)
    }
}

pub fn default_band_specs() -> Vec<BandSpec> {
    vec![
        BandSpec {
            label: "short".into(),
            min_days: 1.0,
            max_days: Some(5.0),
        },
        BandSpec {
            label: "medium".into(),
            min_days: 5.0,
            max_days: Some(120.0),
        },
        BandSpec {
            label: "long".into(),
            min_days: 120.0,
            max_days: None,
        },
    ]
}

/// Parses `label:min-max,...`, with `inf` for an open upper end.
pub fn parse_bands(s: &str) -> CliResult<Vec<BandSpec>> {
    let bad = |part: &str| CliError::Config(format!("band `{part}` is not `label:min-max`"));
    s.split(',')
        .map(|part| {
            let (label, range) = part.trim().split_once(':').ok_or_else(|| bad(part))?;
            let (lo, hi) = range.split_once('-').ok_or_else(|| bad(part))?;
            let min_days: f64 = lo.trim().parse().map_err(|_| bad(part))?;
            let max_days = match hi.trim() {
                "inf" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad(part))?),
            };
            Ok(BandSpec {
                label: label.trim().to_string(),
                min_days,
                max_days,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectSection {
    pub horizon: usize,
    pub sweep: Vec<usize>,
    pub grid_size: usize,
    pub bands: Vec<BandSpec>,
    pub drop_burnin: bool,
    /// When set, the VAR lag is the AIC choice up to this order and
    /// `tvpvar.p` is ignored.
    pub lag_max: Option<usize>,
}

impl Default for ConnectSection {
    fn default() -> Self {
        Self {
            horizon: 100,
            sweep: vec![50, 200],
            grid_size: 512,
            bands: default_band_specs(),
            drop_burnin: false,
            lag_max: None,
        }
    }
}

impl ConnectSection {
    pub fn core_config(&self, horizon: usize) -> CliResult<ConnectednessConfig> {
        let bands = self
            .bands
            .iter()
            .map(BandSpec::to_band)
            .collect::<spillover::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(ConnectednessConfig {
            horizon,
            grid_size: self.grid_size,
            bands,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Edges need `|NPDC|` above this, in percentage points.
    pub threshold: f64,
    pub formats: Vec<String>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            formats: vec!["dot".into(), "json".into(), "graphml".into()],
        }
    }
}

/// Integer or the word `unlimited`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthSpec {
    Depth(usize),
    Word(String),
}

/// Integer count or `third` / `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeaturesSpec {
    Count(usize),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<DepthSpec>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub max_features: Vec<FeaturesSpec>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300, 500],
            max_depth: vec![
                DepthSpec::Depth(4),
                DepthSpec::Depth(8),
                DepthSpec::Depth(16),
                DepthSpec::Word("unlimited".into()),
            ],
            min_samples_leaf: vec![1, 5, 20],
            min_samples_split: vec![2, 10],
            max_features: vec![FeaturesSpec::Word("third".into()), FeaturesSpec::Word("all".into())],
        }
    }
}

impl GridSpec {
    /// Cartesian product in declaration order.
    pub fn cells(&self) -> CliResult<Vec<ForestParams>> {
        let depths = self
            .max_depth
            .iter()
            .map(|d| match d {
                DepthSpec::Depth(v) => Ok(Some(*v)),
                DepthSpec::Word(w) if w == "unlimited" => Ok(None),
                DepthSpec::Word(w) => Err(CliError::Config(format!("max_depth `{w}`"))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        let feats = self
            .max_features
            .iter()
            .map(|f| match f {
                FeaturesSpec::Count(0) => Err(CliError::Config("max_features 0".into())),
                FeaturesSpec::Count(v) => Ok(MaxFeatures::Count(*v)),
                FeaturesSpec::Word(w) if w == "third" => Ok(MaxFeatures::Third),
                FeaturesSpec::Word(w) if w == "all" => Ok(MaxFeatures::All),
                FeaturesSpec::Word(w) => Err(CliError::Config(format!("max_features `{w}`"))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &depths {
                for &min_samples_leaf in &self.min_samples_leaf {
                    for &min_samples_split in &self.min_samples_split {
                        for &max_features in &feats {
                            out.push(ForestParams {
                                n_trees,
                                max_depth,
                                min_samples_leaf,
                                min_samples_split,
                                max_features,
                                bootstrap: true,
                            });
                        }
                    }
                }
            }
        }
        if out.is_empty() || out.iter().any(|p| p.n_trees == 0) {
            return Err(CliError::Config("forest grid is empty or has zero trees".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub folds: usize,
    pub repeats: usize,
    pub grid: GridSpec,
}

impl Default for ForestSection {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 20,
            grid: GridSpec::default(),
        }
    }
}

/// Command-line and environment overrides, applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub bands: Option<String>,
    pub drop_burnin: bool,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    /// Flag paths are relative to the working directory, not the config.
    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(p) = &o.output {
            self.output = std::env::current_dir().map_err(|e| CliError::io(".", e))?.join(p);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(h) = o.horizon {
            self.connectedness.horizon = h;
        }
        if let Some(b) = &o.bands {
            self.connectedness.bands = parse_bands(b)?;
        }
        if o.drop_burnin {
            self.connectedness.drop_burnin = true;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn market_sources(&self) -> Vec<SeriesSource> {
        self.markets
            .iter()
            .map(|m| SeriesSource {
                path: self.resolve(&m.path),
                ..m.clone()
            })
            .collect()
    }

    /// Everything checkable before touching data.
    pub fn validate(&self) -> CliResult<()> {
        let err = |m: String| Err(CliError::Config(m));
        if self.markets.len() < 2 {
            return err("need at least two markets".into());
        }
        let mut names = BTreeSet::new();
        for name in self
            .markets
            .iter()
            .map(|m| &m.name)
            .chain(self.factors.iter().map(|f| &f.name))
        {
            if name.is_empty() || name.contains([',', '/', '\\', '"']) {
                return err(format!("series name `{name}` is empty or has a reserved character"));
            }
            if !names.insert(name.clone()) {
                return err(format!("duplicate series name `{name}`"));
            }
        }
        for p in self
            .markets
            .iter()
            .map(|m| &m.path)
            .chain(self.factors.iter().map(|f| &f.path))
        {
            let full = self.resolve(p);
            if !full.is_file() {
                return err(format!("input file {} does not exist", full.display()));
            }
        }
        let c = &self.connectedness;
        if c.horizon < 10 || c.sweep.iter().any(|&h| h < 10) {
            return err("forecast horizons must be at least 10".into());
        }
        validate_partition(&self.connectedness.core_config(c.horizon)?.bands)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if c.lag_max == Some(0) {
            return err("lag_max must be at least 1".into());
        }
        self.tvpvar.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.gjrsk.starts == 0 || self.gjrsk.max_evals == 0 {
            return err("gjrsk needs at least one start and evaluation".into());
        }
        for f in &self.network.formats {
            f.parse::<spillover::netgraph::ExportFormat>()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.network.threshold >= 0.0) {
            return err("network threshold must be nonnegative".into());
        }
        if self.forest.folds < 2 || self.forest.repeats == 0 {
            return err("forest needs folds >= 2 and repeats >= 1".into());
        }
        self.forest.grid.cells()?;
        Ok(())
    }

    /// SHA-256 of the effective settings, excluding where output goes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
