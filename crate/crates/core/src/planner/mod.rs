//! Global planning, reactive avoidance and the action-mode envelope.
//!
//! Normal mode always plans at λ = 0. Agility-enhanced mode derives λ from
//! the surge power the ultracapacitor can currently deliver.

mod avoid;
mod envelope;
mod grid;
mod path;
mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Shape, Vec3};
use crate::plant::{available_surge, PlantState};
use crate::scalar::Real;
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::world::scenario::Area;
use crate::world::World;

pub use avoid::{conflict, replan_avoid, Amendment, AmendmentKind, AvoidInput, Conflict};
pub use envelope::{enforce_envelope, EnvelopeReport, TRANSITION_TIME};
pub use path::{Path, Piece};
pub use reference::Reference;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("no path at clearance {clearance} m")]
    Infeasible { clearance: f64 },
    #[error("invalid planner input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    AgilityEnhanced,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::AgilityEnhanced => "agility_enhanced",
        }
    }
}

/// Action-mode limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    /// m
    pub clearance: [f64; 2],
    /// 1/m
    pub curvature_cap: f64,
    /// m/s
    pub speed: [f64; 2],
    /// m
    pub mission_distance: [f64; 2],
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            clearance: [1.0, 3.0],
            curvature_cap: 1.0,
            speed: [3.0, 8.0],
            mission_distance: [30.0, 45.0],
        }
    }
}

/// Tunables shared by planning and avoidance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub envelope: Envelope,
    /// Grid spacing, m.
    pub resolution: f64,
    /// Grid margin around the start/goal box, m.
    pub margin: f64,
    /// Flight altitude band searched by the grid, m.
    pub altitude: [f64; 2],
    /// Grid cells may sit this much inside the requested clearance.
    pub clearance_tolerance: f64,
    /// Clearance of the retry after the requested one failed, m.
    pub fallback_clearance: f64,
    /// Acceleration limit at λ = 0 and λ = 1, m/s².
    pub accel_limit: [f64; 2],
    /// Evasive acceleration at λ = 1, m/s².
    pub evade_accel: f64,
    /// Fractions of the acceleration limit used for cornering and for
    /// speeding up or slowing down along the path.
    pub lateral_fraction: f64,
    pub longitudinal_fraction: f64,
    /// Fillet radius is at least `fillet_margin / curvature_cap`.
    pub fillet_margin: f64,
    /// Output sample interval, s.
    pub sample_dt: f64,
    /// Conflict prediction horizon, s.
    pub horizon: f64,
    /// Speed boost during avoidance at λ = 1 (fraction of cruise).
    pub boost: f64,
    /// Amendments rejoin the reference within this time, s.
    pub max_amendment: f64,
    /// Replan the rest of the route after every amendment instead of
    /// rejoining the old one.
    pub full_replan: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            envelope: Envelope::default(),
            resolution: 1.0,
            margin: 25.0,
            altitude: [1.0, 6.0],
            clearance_tolerance: 0.1,
            fallback_clearance: 1.0,
            accel_limit: [4.0, 12.0],
            evade_accel: 6.0,
            lateral_fraction: 0.75,
            longitudinal_fraction: 0.75,
            fillet_margin: 1.02,
            sample_dt: 0.1,
            horizon: 3.0,
            boost: 0.25,
            max_amendment: 15.0,
            full_replan: false,
        }
    }
}

/// Planner settings for one aggressiveness level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub mode: Mode,
    pub lambda: f64,
    /// m
    pub target_clearance: f64,
    /// m/s
    pub cruise_speed: f64,
    /// Evasive acceleration at this λ, m/s².
    pub evade_accel: f64,
    /// m/s²
    pub accel_limit: f64,
    /// 1/m
    pub curvature_cap: f64,
}

impl PlanParams {
    /// Linear interpolation across the envelope; normal mode pins λ to 0.
    pub fn new(mode: Mode, lambda: f64, cfg: &PlannerConfig) -> Self {
        let lambda = match mode {
            Mode::Normal => 0.0,
            Mode::AgilityEnhanced => lambda.clamp(0.0, 1.0),
        };
        let env = &cfg.envelope;
        let lerp = |r: [f64; 2]| r[0] + (r[1] - r[0]) * lambda;
        Self {
            mode,
            lambda,
            target_clearance: lerp(env.clearance),
            cruise_speed: lerp(env.speed),
            evade_accel: cfg.evade_accel * (0.5 + 0.5 * lambda),
            accel_limit: lerp(cfg.accel_limit),
            curvature_cap: env.curvature_cap,
        }
    }

    /// Curvature allowed for avoidance arcs.
    pub fn avoid_curvature(&self) -> f64 {
        self.curvature_cap * (0.5 + 0.5 * self.lambda)
    }

    /// Cruise speed during avoidance, capped at the envelope top.
    pub fn avoid_speed(&self, cfg: &PlannerConfig) -> f64 {
        (self.cruise_speed * (1.0 + cfg.boost * self.lambda)).min(cfg.envelope.speed[1])
    }
}

/// λ = min(1, available surge / UC output rating); 0 in normal mode or
/// without an ultracapacitor.
pub fn aggressiveness<T: Real>(state: &PlantState<T>, mode: Mode) -> f64 {
    let reference = state.spec.ultracap.max_output.to_f64_lossy();
    if mode == Mode::Normal || reference <= 0.0 {
        return 0.0;
    }
    (available_surge(state).to_f64_lossy() / reference).clamp(0.0, 1.0)
}

/// Result of global planning.
#[derive(Clone, Debug)]
pub struct Plan {
    pub trajectory: Trajectory<f64>,
    pub path: Path,
    /// Clearance the grid search succeeded with, m.
    pub clearance_used: f64,
    /// Smallest static-obstacle distance along the path, m.
    pub min_clearance: f64,
    pub length: f64,
    pub within_mission_distance: bool,
}

/// Plans start → goal around the world's static obstacles.
pub fn plan_initial(
    world: &World,
    start: Vec3<f64>,
    goal: Vec3<f64>,
    params: &PlanParams,
    cfg: &PlannerConfig,
) -> Result<Plan, PlannerError> {
    plan_path(&world.static_shapes(), &world.config.area, start, goal, 0.0, 0.0, params, cfg)
}

/// Planning core: grid search, shortcut, fillets, then time
/// parameterization from `v_start` beginning at `t0`.
#[allow(clippy::too_many_arguments)]
pub fn plan_path(
    statics: &[Shape<f64>],
    area: &Area,
    start: Vec3<f64>,
    goal: Vec3<f64>,
    t0: f64,
    v_start: f64,
    params: &PlanParams,
    cfg: &PlannerConfig,
) -> Result<Plan, PlannerError> {
    if !start.is_finite() || !goal.is_finite() {
        return Err(PlannerError::Invalid("non-finite endpoint".into()));
    }
    let mut clearance = params.target_clearance;
    let vertices = match grid::search(statics, area, start, goal, clearance, cfg) {
        Some(v) => v,
        None => {
            log::warn!(
                "no path at clearance {clearance:.2} m, retrying at {:.2} m",
                cfg.fallback_clearance
            );
            clearance = cfg.fallback_clearance;
            grid::search(statics, area, start, goal, clearance, cfg)
                .ok_or(PlannerError::Infeasible { clearance })?
        }
    };
    let vertices = path::shortcut(&vertices, statics, clearance);
    let path = path::fillet(&vertices, statics, clearance, params, cfg);
    let trajectory = path::time_parameterize(&path, t0, v_start, params, cfg)?;
    let min_clearance = path::min_clearance(&path, statics);
    let length = path.length();
    let [lo, hi] = cfg.envelope.mission_distance;
    let within = (lo..=hi).contains(&length);
    if !within {
        log::info!("planned length {length:.1} m outside [{lo}, {hi}] m");
    }
    Ok(Plan {
        trajectory,
        path,
        clearance_used: clearance,
        min_clearance,
        length,
        within_mission_distance: within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::plant::PlantSpec;
    use crate::world::{ObstacleSpec, ScenarioConfig};

    fn params(lambda: f64) -> PlanParams {
        PlanParams::new(Mode::AgilityEnhanced, lambda, &PlannerConfig::default())
    }

    fn world(obstacles: Vec<ObstacleSpec>) -> World {
        let mut cfg = ScenarioConfig::free_space(Vec3::new(50.0, 50.0, 1.5), Vec3::new(85.0, 50.0, 1.5), 1);
        cfg.obstacles = obstacles;
        World::spawn(&cfg).unwrap()
    }

    fn block(x0: f64, y0: f64, x1: f64, y1: f64) -> ObstacleSpec {
        ObstacleSpec::static_box(Shape::Box(Aabb::new(
            Vec3::new(x0, y0, 0.0),
            Vec3::new(x1, y1, 20.0),
        )))
    }

    #[test]
    fn lambda_mapping_spans_envelope() {
        let cfg = PlannerConfig::default();
        let p0 = PlanParams::new(Mode::AgilityEnhanced, 0.0, &cfg);
        let p1 = PlanParams::new(Mode::AgilityEnhanced, 1.0, &cfg);
        assert_eq!((p0.target_clearance, p0.cruise_speed), (1.0, 3.0));
        assert_eq!((p1.target_clearance, p1.cruise_speed), (3.0, 8.0));
        assert_eq!(PlanParams::new(Mode::Normal, 1.0, &cfg).lambda, 0.0);
        assert_eq!(p1.evade_accel, 6.0);
        assert_eq!(p0.evade_accel, 3.0);
    }

    #[test]
    fn aggressiveness_from_surge() {
        let spec = PlantSpec::<f64>::paper_defaults();
        let full = PlantState::new(spec, 1.0, 1.0, 1.0).unwrap();
        let empty = PlantState::new(spec, 1.0, 1.0, 0.0).unwrap();
        let e = spec.ultracap.energy_capacity;
        let twelve = PlantState::new(spec, 1.0, 1.0, 12.0 / e).unwrap();
        assert_eq!(aggressiveness(&full, Mode::AgilityEnhanced), 1.0);
        assert_eq!(aggressiveness(&empty, Mode::AgilityEnhanced), 0.0);
        assert!((aggressiveness(&twelve, Mode::AgilityEnhanced) - 0.4).abs() < 1e-12);
        assert_eq!(aggressiveness(&full, Mode::Normal), 0.0);
    }

    #[test]
    fn empty_world_gives_straight_line_at_cruise() {
        let w = world(vec![]);
        let p = params(1.0);
        let plan = plan_initial(&w, w.config.start, w.config.goal, &p, &PlannerConfig::default()).unwrap();
        assert!((plan.length - 35.0).abs() < 1e-9);
        let traj = &plan.trajectory;
        for q in traj.positions() {
            assert!((q.y - 50.0).abs() < 1e-9 && (q.z - 1.5).abs() < 1e-9);
        }
        let peak = traj.speed_series().into_iter().fold(0.0, f64::max);
        assert!((peak - 8.0).abs() < 0.05, "peak speed {peak}");
        assert!(traj.first().distance(w.config.start) < 1e-12);
        assert!(traj.last().distance(w.config.goal) < 1e-9);
        assert!(plan.within_mission_distance);
    }

    #[test]
    fn wall_with_gap() {
        // Wall across x = 66..68 with a 7.2 m gap centred on y = 58.
        let w = world(vec![block(66.0, 0.0, 68.0, 54.4), block(66.0, 61.6, 68.0, 120.0)]);
        let p = params(1.0);
        let plan = plan_initial(&w, w.config.start, w.config.goal, &p, &PlannerConfig::default()).unwrap();
        assert_eq!(plan.clearance_used, 3.0);
        let statics = w.static_shapes();
        let closest = plan
            .trajectory
            .positions()
            .map(|q| statics.iter().map(|s| s.distance(q)).fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min);
        assert!(closest >= 3.0 - 0.1, "closest {closest}");
        let through = plan.trajectory.positions().any(|q| (66.0..=68.0).contains(&q.x));
        assert!(through);
    }

    #[test]
    fn higher_lambda_keeps_farther_from_obstacle() {
        let w = world(vec![block(65.0, 48.0, 70.0, 53.0)]);
        let cfg = PlannerConfig::default();
        let clearance = |lambda| {
            let plan = plan_initial(&w, w.config.start, w.config.goal, &params(lambda), &cfg).unwrap();
            let statics = w.static_shapes();
            plan.trajectory
                .positions()
                .map(|q| statics[0].distance(q))
                .fold(f64::INFINITY, f64::min)
        };
        let (c0, c1) = (clearance(0.0), clearance(1.0));
        assert!(c1 > c0, "λ=1 {c1} vs λ=0 {c0}");
        assert!(c0 >= 0.9, "λ=0 {c0}");
    }

    #[test]
    fn fully_blocked_is_infeasible() {
        let w = world(vec![block(66.0, 0.0, 68.0, 300.0)]);
        let err = plan_initial(&w, w.config.start, w.config.goal, &params(1.0), &PlannerConfig::default());
        assert_eq!(err.unwrap_err(), PlannerError::Infeasible { clearance: 1.0 });
    }

    #[test]
    fn narrow_gap_falls_back_to_one_metre() {
        // 3.2 m gap: too narrow for 3 m clearance, fine for 1 m.
        let w = world(vec![block(66.0, 0.0, 68.0, 48.4), block(66.0, 51.6, 68.0, 120.0)]);
        let plan = plan_initial(&w, w.config.start, w.config.goal, &params(1.0), &PlannerConfig::default()).unwrap();
        assert_eq!(plan.clearance_used, 1.0);
        assert!(plan.min_clearance >= 0.9);
    }
}
