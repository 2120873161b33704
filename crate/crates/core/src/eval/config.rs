//! Benchmark grid file.
//!
//! ```toml
//! folds = 4
//! seed = 7
//! mode = "test-only"
//! methods = ["mv", "ds", "superla"]
//!
//! [train]
//! max_epochs = 50
//!
//! [[dataset]]
//! name = "rte"
//! answers = "rte/answer.csv"
//! truths = "rte/truth.csv"
//!
//! [[synthetic]]
//! name = "toy"
//! tasks = 2000
//! annotators = 50
//! choices = 2
//! redundancy = 5
//! accuracy = "uniform:0.55:0.95"
//! seed = 1
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{BaselineMode, BenchConfig, NamedDataset};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::synth::{generate, AccuracyLaw, SynthConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dataset: Vec<DatasetEntry>,
    #[serde(default)]
    pub synthetic: Vec<SyntheticEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub answers: PathBuf,
    pub truths: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEntry {
    pub name: String,
    pub tasks: usize,
    pub annotators: usize,
    #[serde(default = "default_choices")]
    pub choices: usize,
    pub redundancy: usize,
    pub accuracy: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    4
}

fn default_mode() -> String {
    "test-only".into()
}

fn default_methods() -> Vec<String> {
    super::Method::names().into_iter().map(String::from).collect()
}

fn default_choices() -> usize {
    2
}

impl GridFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn bench_config(&self) -> Result<BenchConfig> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        self.train.validate()?;
        Ok(BenchConfig {
            folds: self.folds,
            seed: self.seed,
            mode: self.mode.parse::<BaselineMode>()?,
            train: self.train.clone(),
            ..BenchConfig::default()
        })
    }

    /// Loads real datasets then generates synthetic ones, in file order.
    pub fn load_datasets(&self, base: &Path) -> Result<Vec<NamedDataset>> {
        let mut out = Vec::new();
        for d in &self.dataset {
            let data = Dataset::load_annotations(base.join(&d.answers))?
                .load_truths(base.join(&d.truths))?;
            out.push(NamedDataset {
                name: d.name.clone(),
                data,
            });
        }
        for s in &self.synthetic {
            out.push(NamedDataset {
                name: s.name.clone(),
                data: generate(&s.to_config()?)?.dataset,
            });
        }
        Ok(out)
    }
}

impl SyntheticEntry {
    pub fn to_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            num_tasks: self.tasks,
            num_annotators: self.annotators,
            num_choices: self.choices,
            redundancy: self.redundancy,
            accuracy: self.accuracy.parse::<AccuracyLaw>()?,
            seed: self.seed,
        })
    }
}
