//! Config files and their merge with command-line flags.
//!
//! Every command reads an optional JSON file whose keys mirror its flags.
//! Flags win over the file, the file wins over built-in defaults, and
//! `AEPS_SEED` is the last resort for seeds. Unknown keys are errors.

use std::path::{Path, PathBuf};

use aeps::benchmark::{BenchmarkConfig, EvalConfig};
use aeps::planner::Mode;
use aeps::plant::PlantSpec;
use aeps::powermodel::{DemandParams, DemandPreset};
use aeps::predictor::dataset::Sampler;
use aeps::world::mission::MissionConfig;
use aeps::world::scenario::GenParams;
use aeps::world::Complexity;
use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA: u32 = 1;
pub const SEED_ENV: &str = "AEPS_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Anything that failed while running: exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Published coefficients and plant ratings, n = 1100.
    Paper,
    /// Curvature coefficients ×10⁴ (default).
    Scaled,
}

impl Preset {
    pub fn demand(self) -> DemandParams<f64> {
        DemandParams::from_preset(match self {
            Preset::Paper => DemandPreset::Paper,
            Preset::Scaled => DemandPreset::Scaled,
        })
    }

    /// Pins the preset's values into a mission config.
    pub fn apply(self, m: &mut MissionConfig) {
        m.demand = self.demand();
        if self == Preset::Paper {
            m.plant = PlantSpec::paper_defaults();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Normal,
    #[value(alias = "agility_enhanced")]
    #[serde(alias = "agility_enhanced")]
    Enhanced,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Normal => Mode::Normal,
            ModeArg::Enhanced => Mode::AgilityEnhanced,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityArg {
    #[value(alias = "low_dynamic")]
    #[serde(alias = "low_dynamic")]
    Low,
    #[value(alias = "high_dynamic")]
    #[serde(alias = "high_dynamic")]
    High,
}

impl From<ComplexityArg> for Complexity {
    fn from(c: ComplexityArg) -> Complexity {
        match c {
            ComplexityArg::Low => Complexity::LowDynamic,
            ComplexityArg::High => Complexity::HighDynamic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendArg {
    Mlp,
    Ensemble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerArg {
    Mixed,
    FreeSpace,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Sampler {
        match s {
            SamplerArg::Mixed => Sampler::Mixed,
            SamplerArg::FreeSpace => Sampler::FreeSpace,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateFile {
    pub schema: Option<u32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub count: Option<usize>,
    pub sampler: Option<SamplerArg>,
    pub mission: Option<MissionConfig>,
    pub generator: Option<GenParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub schema: Option<u32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub split: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub backend: Option<BackendArg>,
    pub members: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub schema: Option<u32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub mode: Option<ModeArg>,
    pub scenario: Option<PathBuf>,
    pub complexity: Option<ComplexityArg>,
    pub model: Option<PathBuf>,
    pub uc_capacity: Option<f64>,
    pub mission: Option<MissionConfig>,
    pub generator: Option<GenParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkFile {
    pub schema: Option<u32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub seeds: Option<Vec<u64>>,
    pub model: Option<PathBuf>,
    pub uc_capacity: Option<f64>,
    pub benchmark: Option<BenchmarkConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateFile {
    pub schema: Option<u32>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub count: Option<usize>,
    pub test_count: Option<usize>,
    pub noise: Option<f64>,
    pub members: Option<usize>,
    pub evaluate: Option<EvalConfig>,
}

pub trait Versioned {
    fn schema(&self) -> Option<u32>;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn schema(&self) -> Option<u32> {
                self.schema
            }
        }
    )*};
}

versioned!(GenerateFile, TrainFile, SimulateFile, BenchmarkFile, EvaluateFile);

/// Parses `path`, or returns the empty default when no file is given.
pub fn load<T: DeserializeOwned + Default + Versioned>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let file: T = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    match file.schema() {
        None | Some(SCHEMA) => Ok(file),
        Some(v) => Err(usage(format!("{}: unsupported schema {v} (expected {SCHEMA})", path.display()))),
    }
}

/// Flag, then file, then `AEPS_SEED`.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Err(usage(format!("a seed is required: pass --seed, set \"seed\" in the config, or set {SEED_ENV}"))),
    }
}

pub const DEFAULT_OUT: &str = "aeps-out";

pub fn resolve_out(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}
