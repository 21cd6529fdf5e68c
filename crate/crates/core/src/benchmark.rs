//! Paired-mode benchmark over seeded scenarios, and the predictor backend
//! comparison.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, Comparison, MaeReport, MetricsError, NormRefs, RunSummary};
use crate::planner::Mode;
use crate::predictor::dataset::{generate_dataset, DatasetConfig};
use crate::predictor::train::{train, TrainConfig};
use crate::predictor::{Backend, LabeledDataset, PredictorError, PredictorModel, Row};
use crate::world::mission::{run_mission, MissionConfig, MissionError, SimulationTrace};
use crate::world::scenario::GenParams;
use crate::world::{Complexity, ScenarioConfig, WorldError};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("{scenario} seed {seed} ({mode}): {source}")]
    Mission {
        scenario: &'static str,
        seed: u64,
        mode: &'static str,
        source: MissionError,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchmarkError + '_ {
    move |source| BenchmarkError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchmarkError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub scenarios: Vec<Complexity>,
    /// Shared by both modes; `mode` is overridden per run.
    pub mission: MissionConfig,
    pub generator: GenParams,
    /// Rows planned to train the mission predictor when none is given.
    pub dataset_count: usize,
    pub dataset_seed: u64,
    pub dataset: DatasetSettings,
    pub train: TrainConfig,
    /// Held-out rows for the predictor error report.
    pub test_count: usize,
    pub test_seed: u64,
    pub norm: NormRefs<f64>,
}

/// Serializable part of [`DatasetConfig`]; the rest follows the mission config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub sampler: crate::predictor::dataset::Sampler,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            scenarios: vec![Complexity::LowDynamic, Complexity::HighDynamic],
            mission: MissionConfig::default(),
            generator: GenParams::default(),
            dataset_count: 1100,
            dataset_seed: 7,
            dataset: DatasetSettings::default(),
            train: TrainConfig {
                seed: 7,
                ..TrainConfig::default()
            },
            test_count: 200,
            test_seed: 8,
            norm: NormRefs::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let bad = |m: &str| Err(BenchmarkError::Config(m.into()));
        if self.seeds.is_empty() || self.scenarios.is_empty() {
            return bad("need at least one seed and one scenario");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("duplicate seeds");
        }
        let mut c: Vec<u8> = self.scenarios.iter().map(|&c| c as u8).collect();
        c.sort_unstable();
        c.dedup();
        if c.len() != self.scenarios.len() {
            return bad("duplicate scenarios");
        }
        if self.dataset_count == 0 || self.test_count == 0 {
            return bad("dataset_count and test_count must be >= 1");
        }
        self.mission.validate().map_err(|e| BenchmarkError::Config(e.to_string()))?;
        self.train.validate()?;
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            sampler: self.dataset.sampler,
            baseline: self.mission.baseline,
            demand: self.mission.demand,
            planner: self.mission.planner.clone(),
            generator: self.generator.clone(),
        }
    }
}

/// Predictor quality as seen by the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub backend: String,
    /// True when the model was trained by this run.
    pub trained_here: bool,
    pub test: MaeReport,
    /// Mean |predicted − flown| mission-mean demand over enhanced runs, W.
    pub mission_mean_demand_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: u32,
    /// `paper`, `scaled` or `custom` demand coefficients.
    pub demand_preset: String,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<Complexity>,
    pub comparison: Comparison,
    pub prediction: PredictionSummary,
    /// One per mission, scenario-major, then seed, normal before enhanced.
    pub runs: Vec<RunSummary>,
}

pub struct BenchmarkOutput {
    pub report: BenchmarkReport,
    /// Same order as `report.runs`.
    pub traces: Vec<(Complexity, SimulationTrace)>,
    pub model: PredictorModel<f64>,
    pub test: LabeledDataset<f64>,
}

/// Trains the mission predictor from `cfg` alone.
pub fn train_mission_model(cfg: &BenchmarkConfig) -> Result<PredictorModel<f64>, BenchmarkError> {
    let data = generate_dataset(cfg.dataset_count, cfg.dataset_seed, &cfg.dataset_config())?;
    Ok(train(&data, &cfg.train)?.model)
}

fn mission_jobs(cfg: &BenchmarkConfig) -> Vec<(Complexity, u64, Mode)> {
    let mut jobs = Vec::new();
    for &c in &cfg.scenarios {
        for &s in &cfg.seeds {
            for m in [Mode::Normal, Mode::AgilityEnhanced] {
                jobs.push((c, s, m));
            }
        }
    }
    jobs
}

/// Every (scenario, seed) in both modes. Missions run in parallel; results
/// keep job order, so the report does not depend on scheduling.
pub fn run_benchmark(cfg: &BenchmarkConfig, model: Option<PredictorModel<f64>>) -> Result<BenchmarkOutput, BenchmarkError> {
    cfg.validate()?;
    let trained_here = model.is_none();
    let model = match model {
        Some(m) => m,
        None => train_mission_model(cfg)?,
    };
    let jobs = mission_jobs(cfg);
    let traces = jobs
        .par_iter()
        .map(|&(complexity, seed, mode)| {
            let scenario = ScenarioConfig::generate(complexity, seed, &cfg.generator)?;
            let mc = MissionConfig {
                mode,
                ..cfg.mission.clone()
            };
            let trace = run_mission(&scenario, &mc, Some(&model)).map_err(|source| BenchmarkError::Mission {
                scenario: complexity.label(),
                seed,
                mode: mode.label(),
                source,
            })?;
            log::info!(
                "{} seed {seed} {}: {} in {:.1} s",
                complexity.label(),
                mode.label(),
                trace.outcome.label(),
                trace.flight_duration()
            );
            Ok((complexity, trace))
        })
        .collect::<Result<Vec<_>, BenchmarkError>>()?;

    let runs = traces
        .iter()
        .map(|(c, t)| RunSummary::from_trace(*c, t, &cfg.norm))
        .collect::<Result<Vec<_>, _>>()?;
    let (normal, enhanced): (Vec<RunSummary>, Vec<RunSummary>) =
        runs.iter().cloned().partition(|r| r.mode == Mode::Normal);
    let comparison = metrics::compare(&normal, &enhanced)?;

    let test = generate_dataset(cfg.test_count, cfg.test_seed, &cfg.dataset_config())?;
    let demand_errors: Vec<f64> = enhanced
        .iter()
        .filter_map(|r| r.predicted_power.map(|p| (p - r.mean_demand).abs()))
        .collect();
    let prediction = PredictionSummary {
        backend: model.backend.label().to_string(),
        trained_here,
        test: metrics::mae_report(&[(model.backend.label(), &model)], &test)?,
        mission_mean_demand_error: metrics::mean(&demand_errors).ok(),
    };
    Ok(BenchmarkOutput {
        report: BenchmarkReport {
            schema: REPORT_SCHEMA,
            demand_preset: cfg.mission.demand.preset_name().to_string(),
            seeds: cfg.seeds.clone(),
            scenarios: cfg.scenarios.clone(),
            comparison,
            prediction,
            runs,
        },
        traces,
        model,
        test,
    })
}

pub fn trace_file_name(scenario: Complexity, trace: &SimulationTrace) -> String {
    format!("{}_seed{}_{}.csv", scenario.label(), trace.seed, trace.mode.label())
}

impl BenchmarkOutput {
    pub fn report_json(&self) -> Result<String, BenchmarkError> {
        Ok(serde_json::to_string_pretty(&self.report)? + "\n")
    }

    /// `report.json`, `traces/*.csv`, `fig5_mae.csv`, `fig7_power.csv`
    /// and `durations.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), BenchmarkError> {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).map_err(io_err(&traces))?;
        for (c, t) in &self.traces {
            let path = traces.join(trace_file_name(*c, t));
            t.write_csv(create(&path)?).map_err(|e| BenchmarkError::Config(e.to_string()))?;
        }
        let label = self.model.backend.label();
        metrics::write_mae_csv(&[(label, &self.model)], &self.test, create(&dir.join("fig5_mae.csv"))?)?;
        metrics::write_power_csv(self.traces.iter().map(|(c, t)| (*c, t)), create(&dir.join("fig7_power.csv"))?)?;
        metrics::write_durations_csv(&self.report.runs, create(&dir.join("durations.csv"))?)?;
        let path = dir.join("report.json");
        fs::write(&path, self.report_json()?).map_err(io_err(&path))?;
        Ok(())
    }
}

/// Backend comparison on noisy labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to every label, W.
    pub noise_std: f64,
    pub members: usize,
    pub train: TrainConfig,
    pub dataset: DatasetSettings,
    pub mission: MissionConfig,
    pub generator: GenParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset_count: 1100,
            test_count: 300,
            seed: 7,
            noise_std: 1.0,
            members: 10,
            train: TrainConfig::default(),
            dataset: DatasetSettings::default(),
            mission: MissionConfig::default(),
            generator: GenParams::default(),
        }
    }
}

impl EvalConfig {
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            sampler: self.dataset.sampler,
            baseline: self.mission.baseline,
            demand: self.mission.demand,
            planner: self.mission.planner.clone(),
            generator: self.generator.clone(),
        }
    }
}

/// `data` with N(0, σ²) added to each label, floored at 0 W; σ = 0 returns
/// it unchanged.
pub fn inject_noise(data: &LabeledDataset<f64>, std: f64, seed: u64) -> Result<LabeledDataset<f64>, BenchmarkError> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(BenchmarkError::Config(format!("noise_std must be finite and >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(data.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| BenchmarkError::Config(format!("noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = data
        .rows
        .iter()
        .map(|r| Row {
            features: r.features,
            // Power is never negative.
            label: (r.label + normal.sample(&mut rng)).max(0.0),
        })
        .collect();
    Ok(LabeledDataset::new(rows)?)
}

pub struct EvalOutput {
    pub report: MaeReport,
    pub ensemble: PredictorModel<f64>,
    pub single: PredictorModel<f64>,
    pub test: LabeledDataset<f64>,
}

/// Trains an ensemble and a single MLP on the same noisy data and reports
/// their errors on a noisy held-out set, ensemble first.
pub fn evaluate_backends(cfg: &EvalConfig) -> Result<EvalOutput, BenchmarkError> {
    if cfg.members == 0 || cfg.dataset_count == 0 || cfg.test_count == 0 {
        return Err(BenchmarkError::Config("members, dataset_count and test_count must be >= 1".into()));
    }
    let dc = cfg.dataset_config();
    let data = inject_noise(&generate_dataset(cfg.dataset_count, cfg.seed, &dc)?, cfg.noise_std, cfg.seed ^ 0x5EED)?;
    let test_seed = cfg.seed.wrapping_add(1);
    let test = inject_noise(&generate_dataset(cfg.test_count, test_seed, &dc)?, cfg.noise_std, test_seed ^ 0x5EED)?;
    let fit = |backend: Backend| -> Result<PredictorModel<f64>, BenchmarkError> {
        let tc = TrainConfig {
            backend,
            seed: cfg.seed,
            ..cfg.train.clone()
        };
        Ok(train(&data, &tc)?.model)
    };
    let ensemble = fit(Backend::BayesianEnsemble { members: cfg.members })?;
    let single = fit(Backend::Deterministic)?;
    let report = metrics::mae_report(&[("ensemble", &ensemble), ("mlp", &single)], &test)?;
    Ok(EvalOutput {
        report,
        ensemble,
        single,
        test,
    })
}

impl EvalOutput {
    pub fn write(&self, dir: &Path) -> Result<(), BenchmarkError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        metrics::write_mae_csv(
            &[("ensemble", &self.ensemble), ("mlp", &self.single)],
            &self.test,
            create(&dir.join("fig5_mae.csv"))?,
        )?;
        let path = dir.join("mae_report.json");
        fs::write(&path, serde_json::to_string_pretty(&self.report)? + "\n").map_err(io_err(&path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_are_scenario_major() {
        let cfg = BenchmarkConfig {
            seeds: vec![3, 1],
            ..BenchmarkConfig::default()
        };
        let j = mission_jobs(&cfg);
        assert_eq!(j.len(), 8);
        assert_eq!(j[0], (Complexity::LowDynamic, 3, Mode::Normal));
        assert_eq!(j[1], (Complexity::LowDynamic, 3, Mode::AgilityEnhanced));
        assert_eq!(j[7], (Complexity::HighDynamic, 1, Mode::AgilityEnhanced));
    }

    #[test]
    fn config_rejects_duplicates_and_unknown_keys() {
        let cfg = BenchmarkConfig {
            seeds: vec![1, 1],
            ..BenchmarkConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"seedz": [1]}"#).is_err());
        let c: BenchmarkConfig = serde_json::from_str(r#"{"seeds": [4]}"#).unwrap();
        assert_eq!(c.seeds, vec![4]);
        assert_eq!(c.test_count, 200);
    }

    #[test]
    fn noise_is_seeded_and_zero_is_identity() {
        let data = generate_dataset(8, 2, &DatasetConfig::default()).unwrap();
        assert_eq!(inject_noise(&data, 0.0, 1).unwrap(), data);
        let a = inject_noise(&data, 1.0, 1).unwrap();
        assert_eq!(a, inject_noise(&data, 1.0, 1).unwrap());
        assert_ne!(a, data);
        assert!(inject_noise(&data, -1.0, 1).is_err());
    }
}
