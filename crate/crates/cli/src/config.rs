use std::path::{Path, PathBuf};

use ecv::baselines::{Metric, DEFAULT_FOLDS, DEFAULT_SPLIT_ALPHA};
use ecv::{EcvConfig, EcvError, EnsembleSize, PredictorSpec, Result, SyntheticModel};
use serde::{Deserialize, Serialize};

/// Everything a command may read, as loaded from `--config` and overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; falls back to `ECV_SEED`, then 0.
    pub seed: Option<u64>,
    pub synthetic: SyntheticSection,
    pub predictor: PredictorSpec,
    pub ecv: EcvConfig,
    pub baseline: BaselineSection,
    pub io: IoSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            synthetic: SyntheticSection::default(),
            predictor: PredictorSpec::ridge(),
            ecv: EcvConfig::default(),
            baseline: BaselineSection::default(),
            io: IoSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub model: SyntheticModel,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma: f64,
    pub n_test: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            model: SyntheticModel::Quad,
            n: 1000,
            p: 100,
            rho: 0.5,
            sigma: 0.5,
            n_test: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub alpha: f64,
    pub folds: usize,
    pub m_max: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_SPLIT_ALPHA,
            folds: DEFAULT_FOLDS,
            m_max: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Directories holding `train.csv` and `test.csv`, one report each.
    pub datasets: Vec<PathBuf>,
    /// Column name, zero-based index, or `last`.
    pub response: String,
    pub header: bool,
    pub out: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            datasets: Vec::new(),
            response: "last".into(),
            header: true,
            out: PathBuf::from("."),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Ensemble sizes in surface tables; `inf` allowed.
    pub m_list: Vec<String>,
    /// Explicit `k` values instead of the default grid.
    pub grid: Option<Vec<usize>>,
    pub with_test: bool,
    pub metric: Metric,
    /// Candidate tree feature fractions tuned before `(k, M)`.
    pub feature_fractions: Vec<f64>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            m_list: ["1", "2", "5", "10", "20", "50", "inf"].map(String::from).to_vec(),
            grid: None,
            with_test: false,
            metric: Metric::Nmse,
            feature_fractions: Vec::new(),
        }
    }
}

impl ReportSection {
    pub fn sizes(&self) -> Result<Vec<EnsembleSize>> {
        if self.m_list.is_empty() {
            return Err(EcvError::invalid("m_list is empty"));
        }
        self.m_list.iter().map(|s| s.parse()).collect()
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| EcvError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write(cfg: &RunConfig, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EcvError::io(path, e))
}
