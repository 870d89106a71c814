//! Run specification: built-in defaults, then the TOML config file, then
//! command-line flags, each layer overriding the previous one.
//!
//! Config file keys (all optional):
//!
//! ```toml
//! data = "train.csv"          # CSV (ingested) or a bank cache written by `ingest`/`synth`
//! schema = "store-item"       # or "warehouse-product", or a table with
//!                             # date_col, vendor_cols, product_cols, value_col
//! min_length = 20
//! seeds = [0, 1, 2, 3, 4]
//! sim = "rmse"
//! lag = 15
//! holdout = 0.2
//! zscore = false
//! out = "runs/rmse"
//!
//! [synth]                     # used when no data path is given
//! clusters = 3
//! tasks = 60                  # total, split evenly across clusters
//! len = 60
//! noise = 2.0
//! seed = 0
//!
//! [train]                     # any TrainConfig field
//! pretrain_epochs = 100
//! ```
//!
//! Relative paths in a config file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use nmt_core::data::{CsvSchema, SynthConfig, DEFAULT_LAG};
use nmt_core::model::TrainConfig;
use nmt_core::similarity::SimilarityMetric;
use nmt_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub data: Option<PathBuf>,
    pub schema: Option<SchemaChoice>,
    pub min_length: Option<usize>,
    pub synth: Option<SynthSpec>,
    pub seeds: Option<Vec<u64>>,
    pub sim: Option<SimilarityMetric>,
    pub lag: Option<usize>,
    pub holdout: Option<f64>,
    pub zscore: Option<bool>,
    pub out: Option<PathBuf>,
    pub train: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaChoice {
    Named(String),
    Custom(CsvSchema),
}

impl SchemaChoice {
    pub fn resolve(&self) -> Result<CsvSchema> {
        match self {
            SchemaChoice::Custom(s) => Ok(s.clone()),
            SchemaChoice::Named(n) => match n.as_str() {
                "store-item" => Ok(CsvSchema::store_item()),
                "warehouse-product" => Ok(CsvSchema::warehouse_product()),
                other => Err(Error::config(
                    "schema",
                    format!("unknown schema `{other}`; expected store-item or warehouse-product"),
                )),
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub clusters: Option<usize>,
    pub tasks: Option<usize>,
    pub len: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
}

impl SynthSpec {
    /// Parses `key=value` items; each item may itself hold several
    /// comma-separated pairs.
    pub fn parse(items: &[String]) -> Result<Self> {
        let mut s = SynthSpec::default();
        for pair in items.iter().flat_map(|i| i.split(',')).filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config("synth", format!("expected key=value, got `{pair}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let field = format!("synth.{k}");
            let bad = || Error::config(&field, format!("cannot parse `{v}`"));
            match k {
                "clusters" => s.clusters = Some(v.parse().map_err(|_| bad())?),
                "tasks" => s.tasks = Some(v.parse().map_err(|_| bad())?),
                "len" => s.len = Some(v.parse().map_err(|_| bad())?),
                "noise" => s.noise = Some(v.parse().map_err(|_| bad())?),
                "seed" => s.seed = Some(v.parse().map_err(|_| bad())?),
                _ => {
                    return Err(Error::config(
                        field,
                        "unknown key; expected clusters, tasks, len, noise or seed",
                    ))
                }
            }
        }
        Ok(s)
    }

    fn overlay(self, top: SynthSpec) -> SynthSpec {
        SynthSpec {
            clusters: top.clusters.or(self.clusters),
            tasks: top.tasks.or(self.tasks),
            len: top.len.or(self.len),
            noise: top.noise.or(self.noise),
            seed: top.seed.or(self.seed),
        }
    }

    pub fn resolve(&self, lag: usize) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        let clusters = self.clusters.unwrap_or(d.n_clusters);
        let tasks = self.tasks.unwrap_or(d.n_clusters * d.tasks_per_cluster);
        if clusters == 0 || tasks == 0 || !tasks.is_multiple_of(clusters) {
            return Err(Error::config(
                "synth.tasks",
                format!("{tasks} tasks cannot be split evenly across {clusters} clusters"),
            ));
        }
        Ok(SynthConfig {
            n_clusters: clusters,
            tasks_per_cluster: tasks / clusters,
            series_len: self.len.unwrap_or(d.series_len),
            noise_sd: self.noise.unwrap_or(d.noise_sd),
            seed: self.seed.unwrap_or(d.seed),
            lag,
        })
    }
}

/// Parses `--seeds`: a bare count `n` means `0..n`, anything with a comma is
/// an explicit list (`7,` is the single seed 7).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("expected a count or a comma-separated list, got `{s}`"));
    if s.contains(',') {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| bad()))
            .collect()
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        Ok((0..n).collect())
    }
}

pub fn load_file(path: &Path) -> Result<FileSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    let mut spec: FileSpec = toml::from_str(&text).map_err(|e| {
        let field = e.message().split('`').nth(1).unwrap_or("config").to_string();
        Error::config(field, format!("{}: {}", path.display(), e.message()))
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut spec.data, &mut spec.out].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(spec)
}

/// Values given on the command line; `None` leaves the file or default value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub schema: Option<String>,
    pub min_length: Option<usize>,
    pub synth: Option<SynthSpec>,
    pub seeds: Option<Vec<u64>>,
    pub sim: Option<SimilarityMetric>,
    pub lag: Option<usize>,
    pub holdout: Option<f64>,
    pub zscore: bool,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        min_length: Option<usize>,
    },
    Bank(PathBuf),
    Synth(SynthConfig),
}

/// Fully resolved and validated inputs of a command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub source: Source,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub lag: usize,
    pub zscore: bool,
    pub out: PathBuf,
}

pub const DEFAULT_OUT: &str = "nmt-out";

impl RunSpec {
    pub fn build(file: FileSpec, flags: Overrides) -> Result<Self> {
        let mut train = file.train.unwrap_or_default();
        if let Some(sim) = flags.sim.or(file.sim) {
            train.similarity.metric = sim;
        }
        if let Some(h) = flags.holdout.or(file.holdout) {
            train.selection_holdout_fraction = h;
        }
        train.validate()?;
        let lag = flags.lag.or(file.lag).unwrap_or(DEFAULT_LAG);
        if lag == 0 {
            return Err(Error::config("lag", "must be at least 1"));
        }
        let seeds = flags.seeds.or(file.seeds).unwrap_or_else(|| vec![train.seed]);
        if seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        let data = flags.data.or(file.data);
        let source = match data {
            Some(_) if flags.synth.is_some() => {
                return Err(Error::config("synth", "cannot be combined with a data path"));
            }
            Some(path) => {
                let schema = match flags.schema {
                    Some(n) => SchemaChoice::Named(n).resolve()?,
                    None => file.schema.map_or(Ok(CsvSchema::default()), |s| s.resolve())?,
                };
                let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                if is_csv {
                    Source::Csv {
                        path,
                        schema,
                        min_length: flags.min_length.or(file.min_length),
                    }
                } else {
                    Source::Bank(path)
                }
            }
            None => {
                let s = file.synth.unwrap_or_default().overlay(flags.synth.unwrap_or_default());
                Source::Synth(s.resolve(lag)?)
            }
        };
        Ok(RunSpec {
            source,
            train,
            seeds,
            lag,
            zscore: flags.zscore || file.zscore.unwrap_or(false),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }

    /// The effective settings as a config file; loading it back reproduces
    /// this spec.
    pub fn to_toml(&self) -> String {
        let mut f = FileSpec {
            seeds: Some(self.seeds.clone()),
            sim: Some(self.train.similarity.metric),
            lag: Some(self.lag),
            holdout: Some(self.train.selection_holdout_fraction),
            zscore: Some(self.zscore),
            train: Some(self.train.clone()),
            ..FileSpec::default()
        };
        match &self.source {
            Source::Csv {
                path,
                schema,
                min_length,
            } => {
                f.data = Some(absolute(path));
                f.schema = Some(SchemaChoice::Custom(schema.clone()));
                f.min_length = *min_length;
            }
            Source::Bank(path) => f.data = Some(absolute(path)),
            Source::Synth(s) => {
                f.synth = Some(SynthSpec {
                    clusters: Some(s.n_clusters),
                    tasks: Some(s.n_clusters * s.tasks_per_cluster),
                    len: Some(s.series_len),
                    noise: Some(s.noise_sd),
                    seed: Some(s.seed),
                })
            }
        }
        toml::to_string(&f).expect("plain data serializes")
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}
