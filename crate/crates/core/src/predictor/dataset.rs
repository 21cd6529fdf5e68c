//! Labeled datasets from planned missions.
//!
//! Each sample is a seeded layout planned at a random aggressiveness. The
//! label is the demand model evaluated on the trajectory's mission-mean
//! features: baseline power at the mean speed plus both curvature terms at
//! the mean curvature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::member_seed;
use super::{FeatureVector, LabeledDataset, PredictorError, Row};
use crate::geom::Vec3;
use crate::planner::{plan_initial, Mode, PlanParams, PlannerConfig};
use crate::powermodel::{baseline_power, instant_demand, BaselineParams, DemandParams};
use crate::trajectory::Trajectory;
use crate::world::scenario::GenParams;
use crate::world::{Complexity, ScenarioConfig, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Alternating low- and high-complexity layouts.
    #[default]
    Mixed,
    /// No obstacles: every plan is a straight line.
    FreeSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub sampler: Sampler,
    pub baseline: BaselineParams<f64>,
    pub demand: DemandParams<f64>,
    pub planner: PlannerConfig,
    pub generator: GenParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sampler: Sampler::Mixed,
            baseline: BaselineParams::default(),
            demand: DemandParams::scaled(),
            planner: PlannerConfig::default(),
            generator: GenParams::default(),
        }
    }
}

/// Mean speed, length and mean |κ| of a trajectory.
pub fn features(traj: &Trajectory<f64>) -> FeatureVector<f64> {
    let f = traj.features().expect("planned trajectories have at least two samples");
    FeatureVector {
        velocity: f.mean_speed(),
        length_d: f.length_d,
        mean_abs_curvature: f.mean_abs_curvature,
    }
}

/// Demand model on mission-mean features.
pub fn label(x: &FeatureVector<f64>, baseline: &BaselineParams<f64>, demand: &DemandParams<f64>) -> f64 {
    let base = baseline_power(x.velocity, baseline).expect("speeds are non-negative");
    instant_demand(base, x.mean_abs_curvature, x.length_d, x.mean_abs_curvature, demand)
}

fn sample(i: usize, seed: u64, cfg: &DatasetConfig) -> Option<Row<f64>> {
    let s = member_seed(seed, i + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let lambda: f64 = rng.random_range(0.0..=1.0);
    let scenario = match cfg.sampler {
        Sampler::Mixed => {
            let complexity = if i % 2 == 0 {
                Complexity::LowDynamic
            } else {
                Complexity::HighDynamic
            };
            match ScenarioConfig::generate(complexity, s, &cfg.generator) {
                Ok(sc) => sc,
                Err(e) => {
                    log::warn!("sample {i}: layout failed: {e}");
                    return None;
                }
            }
        }
        Sampler::FreeSpace => {
            let g = &cfg.generator;
            let start = Vec3::new(rng.random_range(60.0..240.0), rng.random_range(60.0..240.0), g.cruise_altitude);
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(g.distance.0..g.distance.1);
            let goal = start + Vec3::new(heading.cos(), heading.sin(), 0.0) * dist;
            ScenarioConfig::free_space(start, goal, s)
        }
    };
    let world = World::spawn(&scenario).ok()?;
    let params = PlanParams::new(Mode::AgilityEnhanced, lambda, &cfg.planner);
    match plan_initial(&world, scenario.start, scenario.goal, &params, &cfg.planner) {
        Ok(plan) => {
            let x = features(&plan.trajectory);
            Some(Row {
                features: x,
                label: label(&x, &cfg.baseline, &cfg.demand),
            })
        }
        Err(e) => {
            log::warn!("sample {i}: planning failed: {e}");
            None
        }
    }
}

/// `count` planned samples; failed samples are skipped. Fails when fewer
/// than half succeed. Identical for a fixed seed regardless of threading.
pub fn generate_dataset(count: usize, seed: u64, cfg: &DatasetConfig) -> Result<LabeledDataset<f64>, PredictorError> {
    if count == 0 {
        return Err(PredictorError::Dataset("count must be >= 1".into()));
    }
    let rows: Vec<Row<f64>> = (0..count)
        .into_par_iter()
        .map(|i| sample(i, seed, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if 2 * rows.len() < count {
        return Err(PredictorError::TooManyFailures {
            ok: rows.len(),
            requested: count,
        });
    }
    if rows.len() < count {
        log::warn!("{} of {count} samples skipped", count - rows.len());
    }
    LabeledDataset::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_repeatable() {
        let cfg = DatasetConfig::default();
        let a = generate_dataset(12, 5, &cfg).unwrap();
        let b = generate_dataset(12, 5, &cfg).unwrap();
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        a.write_csv(&mut wa).unwrap();
        b.write_csv(&mut wb).unwrap();
        assert_eq!(wa, wb);
        assert_eq!(a.len(), 12);
    }

    #[test]
    fn straight_lines_label_to_baseline() {
        let cfg = DatasetConfig {
            sampler: Sampler::FreeSpace,
            ..DatasetConfig::default()
        };
        let data = generate_dataset(10, 3, &cfg).unwrap();
        for r in &data.rows {
            assert_eq!(r.features.mean_abs_curvature, 0.0);
            assert_eq!(r.label, baseline_power(r.features.velocity, &cfg.baseline).unwrap());
        }
    }

    #[test]
    fn labels_never_below_hover() {
        let cfg = DatasetConfig::default();
        let data = generate_dataset(16, 9, &cfg).unwrap();
        assert!(data.rows.iter().all(|r| r.label >= cfg.baseline.p0));
        assert!(data.rows.iter().any(|r| r.features.mean_abs_curvature > 0.0));
    }

    #[test]
    fn zero_count_rejected() {
        assert!(generate_dataset(0, 1, &DatasetConfig::default()).is_err());
    }
}
