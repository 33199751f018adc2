//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_greedy_file, read_trial_file};
use crate::pipeline::{AnalysisConfig, PairInput, PipelineInput};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPaths {
    pub v1: PathBuf,
    pub v2: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy_v1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy_v2: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pair: PairPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_pair: Option<PairPaths>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl RunConfig {
    pub fn new(v1: PathBuf, v2: PathBuf) -> Self {
        RunConfig {
            pair: PairPaths {
                v1,
                v2,
                greedy_v1: None,
                greedy_v2: None,
            },
            second_pair: None,
            k: DEFAULT_K,
            output_dir: None,
            analysis: AnalysisConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file. Relative data paths resolve against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for pair in std::iter::once(&mut self.pair).chain(self.second_pair.as_mut()) {
            fix(&mut pair.v1);
            fix(&mut pair.v2);
            pair.greedy_v1.as_mut().map(fix);
            pair.greedy_v2.as_mut().map(fix);
        }
        self.output_dir.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        for pair in std::iter::once(&self.pair).chain(self.second_pair.as_ref()) {
            if pair.greedy_v1.is_some() != pair.greedy_v2.is_some() {
                return Err(Error::Config("greedy files must be given for both versions or neither".into()));
            }
        }
        self.analysis.validate()
    }

    pub fn load_input(&self) -> Result<PipelineInput> {
        Ok(PipelineInput {
            pair: load_pair(&self.pair, self.k)?,
            second: self
                .second_pair
                .as_ref()
                .map(|p| load_pair(p, self.k))
                .transpose()?,
        })
    }
}

fn load_pair(paths: &PairPaths, k: usize) -> Result<PairInput> {
    let v1 = read_trial_file(&paths.v1, k)?;
    let v2 = read_trial_file(&paths.v2, k)?;
    let greedy = match (&paths.greedy_v1, &paths.greedy_v2) {
        (Some(a), Some(b)) => Some((read_greedy_file(a)?, read_greedy_file(b)?)),
        _ => None,
    };
    Ok(PairInput { v1, v2, greedy })
}
