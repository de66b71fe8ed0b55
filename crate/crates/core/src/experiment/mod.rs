//! Experiment files: config parsing, per-seed runs, artifact directories,
//! sweeps and the synthetic verify suite.

mod run;
mod sweep;
mod verify;

pub use run::{run_experiment, run_seed, write_experiment, ExperimentOutcome, MethodRun, SeedRun, TableRow};
pub use sweep::{run_eps_sweep, run_q_sweep, write_eps_sweep, write_q_sweep, EpsSweep, QSweep};
pub use verify::{run_verify, Check, VerifyOptions, VerifyReport};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    load_table, split, split_table, synth_dataset, DatasetInfo, IngestOptions, PartitionSpec, RawTable, SplitSpec,
    TableSchema,
};
use crate::error::{Error, Result};
use crate::model::VerticalDataset;
use crate::optimizer::TrainConfig;

/// Environment variable that overrides every config's data directory.
pub const DATA_DIR_ENV: &str = "FAIRVFL_DATA_DIR";

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    /// Schema file; relative paths are taken from the config file's directory.
    pub schema: PathBuf,
    /// Directory holding the files the schema lists.
    pub data_dir: PathBuf,
    #[serde(default)]
    pub drop_group_feature: bool,
    #[serde(default)]
    pub intercept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub m: usize,
    pub parties: usize,
    #[serde(default)]
    pub bias: f64,
    /// Generator seed; the run seed only drives the split and the step draws.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_count: usize,
}

/// Default value lists for `sweep`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub q: Vec<usize>,
    /// Epsilon values used by the Q sweep; empty means `train.epsilon`.
    #[serde(default)]
    pub q_epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Also train the lambda-frozen baseline for every seed.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    pub split: SplitConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Parses the file and makes every relative path in it absolute with
    /// respect to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).map_err(|e| Error::io(&base, e))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.dataset {
            join(&mut d.schema);
            join(&mut d.data_dir);
        }
        if let Some(o) = &mut self.out {
            join(o);
        }
    }

    pub fn check(&self) -> Result<()> {
        match (&self.dataset, &self.synth, &self.partition) {
            (Some(_), None, Some(_)) | (None, Some(_), None) => {}
            (Some(_), None, None) => return Err(Error::Config("a dataset config needs a `partition`".into())),
            (None, Some(_), Some(_)) => {
                return Err(Error::Config("`synth` splits columns evenly; drop the `partition` table".into()))
            }
            _ => return Err(Error::Config("exactly one of `dataset` or `synth` must be given".into())),
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` is empty".into()));
        }
        self.train.check()
    }

    /// Applies the data directory override: the explicit argument wins,
    /// then `FAIRVFL_DATA_DIR`, then the file's own value.
    pub fn override_data_dir(&mut self, dir: Option<&Path>) {
        let env = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        if let (Some(d), Some(dir)) = (&mut self.dataset, dir.map(Path::to_path_buf).or(env)) {
            d.data_dir = dir;
        }
    }

    /// Training config for one seed: the seed also drives the step draws.
    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.async_schedule.seed = seed;
        t
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Loaded data, ready to be split once per seed.
pub enum Source {
    Table { schema: TableSchema, table: RawTable, partition: PartitionSpec, opts: IngestOptions },
    Synth { data: VerticalDataset, spec: SynthSpec },
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: VerticalDataset,
    pub test: VerticalDataset,
    pub info: DatasetInfo,
}

impl Source {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(d) = &cfg.dataset {
            let schema = TableSchema::from_path(&d.schema)?;
            let table = load_table(&d.data_dir, &schema)?;
            let partition = cfg.partition.clone().expect("checked: dataset configs carry a partition");
            let opts = IngestOptions { drop_group_feature: d.drop_group_feature, intercept: d.intercept };
            return Ok(Source::Table { schema, table, partition, opts });
        }
        let spec = cfg.synth.expect("checked: dataset or synth");
        Ok(Source::Synth { data: synth_dataset(spec.n, spec.m, spec.parties, spec.bias, spec.seed)?, spec })
    }

    pub fn prepare(&self, train_count: usize, seed: u64) -> Result<Prepared> {
        let split_spec = SplitSpec { train_count, seed };
        match self {
            Source::Table { schema, table, partition, opts } => {
                let s = split_table(table, schema, &split_spec, partition, *opts)?;
                Ok(Prepared { train: s.train, test: s.test, info: s.info })
            }
            Source::Synth { data, spec } => {
                let (train, test) = split(data, &split_spec)?;
                let info = DatasetInfo {
                    name: format!("synth(n={}, m={}, bias={})", spec.n, spec.m, spec.bias),
                    usable_rows: data.n(),
                    dropped_missing: 0,
                    filtered_out: 0,
                    train_rows: train.n(),
                    test_rows: test.n(),
                    widths: train.widths(),
                    feature_names: (1..=data.m()).map(|j| format!("x{j}")).collect(),
                    warnings: Vec::new(),
                };
                Ok(Prepared { train, test, info })
            }
        }
    }
}
