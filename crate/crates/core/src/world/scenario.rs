//! Scenario files and the seeded community-layout generator.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::obstacle::{Activation, Aim, Motion, ObstacleKind, ObstacleSpec, GRAVITY};
use super::WorldError;
use crate::geom::{Aabb, Shape, Sphere, Vec3};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    LowDynamic,
    HighDynamic,
}

impl Complexity {
    pub fn label(self) -> &'static str {
        match self {
            Complexity::LowDynamic => "low_dynamic",
            Complexity::HighDynamic => "high_dynamic",
        }
    }
}

/// Horizontal mission area plus altitude ceiling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub ceiling: f64,
}

impl Default for Area {
    fn default() -> Self {
        Self {
            min: [0.0, 0.0],
            max: [300.0, 300.0],
            ceiling: 60.0,
        }
    }
}

impl Area {
    pub fn contains(&self, p: Vec3<f64>) -> bool {
        p.x >= self.min[0]
            && p.x <= self.max[0]
            && p.y >= self.min[1]
            && p.y <= self.max[1]
            && p.z >= 0.0
            && p.z <= self.ceiling
    }

    pub fn clamp(&self, p: Vec3<f64>) -> Vec3<f64> {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(0.0, self.ceiling),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldParams {
    /// Lidar range, m.
    pub sensing_range: f64,
    /// Collision when the UAV point is this close to a surface, m.
    pub collision_radius: f64,
    /// Success when this close to the goal, m.
    pub goal_tolerance: f64,
    /// s.
    pub timeout: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            sensing_range: 20.0,
            collision_radius: 0.25,
            goal_tolerance: 1.0,
            timeout: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub area: Area,
    pub complexity: Complexity,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    pub start: Vec3<f64>,
    pub goal: Vec3<f64>,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub params: WorldParams,
}

fn default_dt() -> f64 {
    0.1
}

/// Layout generator settings. Counts, sizes and speeds are simulation
/// choices; only the area and the mission-distance band come from the
/// experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub cruise_altitude: f64,
    /// Straight-line start-goal distance range, m.
    pub distance: (f64, f64),
    /// Half-width of the free corridor every layout must keep, m.
    pub corridor_half_width: f64,
    pub vehicle_speed: (f64, f64),
    pub falling_radius: (f64, f64),
    pub drop_height: (f64, f64),
    pub uav_speed: (f64, f64),
    pub max_attempts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            cruise_altitude: 1.5,
            distance: (32.0, 38.0),
            corridor_half_width: 3.5,
            vehicle_speed: (5.0, 10.0),
            falling_radius: (0.4, 0.5),
            drop_height: (10.0, 13.0),
            uav_speed: (3.0, 6.0),
            max_attempts: 500,
        }
    }
}

impl ScenarioConfig {
    pub fn free_space(start: Vec3<f64>, goal: Vec3<f64>, seed: u64) -> Self {
        Self {
            schema: SCHEMA,
            area: Area::default(),
            complexity: Complexity::LowDynamic,
            obstacles: Vec::new(),
            start,
            goal,
            seed,
            dt: default_dt(),
            params: WorldParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidScenario(m));
        if self.schema != SCHEMA {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0".into());
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !p.is_finite() || !self.area.contains(p) {
                return bad(format!("{name} outside the area"));
            }
            for (i, o) in self.obstacles.iter().enumerate() {
                if o.activation == Activation::Always
                    && o.shape.distance(p) <= self.params.collision_radius
                {
                    return bad(format!("{name} inside obstacle {i}"));
                }
            }
        }
        let p = &self.params;
        if !(p.sensing_range > 0.0 && p.collision_radius >= 0.0 && p.goal_tolerance > 0.0 && p.timeout > 0.0) {
            return bad("world params out of range".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| WorldError::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seeded random layout. Static boxes straddle the start-goal line and are
    /// rejection-sampled until a corridor of `corridor_half_width` exists;
    /// dynamic obstacles are triggered by flown distance and aimed at the UAV.
    pub fn generate(complexity: Complexity, seed: u64, gen: &GenParams) -> Result<Self, WorldError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA3E5_0000 ^ complexity as u64);
        let area = Area::default();
        for _ in 0..gen.max_attempts {
            let start = Vec3::new(
                rng.random_range(60.0..240.0),
                rng.random_range(60.0..240.0),
                gen.cruise_altitude,
            );
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(gen.distance.0..gen.distance.1);
            let dir = Vec3::new(heading.cos(), heading.sin(), 0.0);
            let goal = start + dir * dist;
            let n_static = match complexity {
                Complexity::LowDynamic => 2,
                Complexity::HighDynamic => 4,
            };
            let statics = static_boxes(&mut rng, start, goal, n_static);
            if statics
                .iter()
                .any(|s| s.distance(start) < 5.0 || s.distance(goal) < 5.0)
            {
                continue;
            }
            if !corridor_exists(&statics, start, goal, gen.corridor_half_width, 20.0, 0.5) {
                continue;
            }
            let mut obstacles: Vec<ObstacleSpec> =
                statics.into_iter().map(ObstacleSpec::static_box).collect();
            obstacles.extend(dynamic_obstacles(&mut rng, complexity, gen));
            let cfg = Self {
                schema: SCHEMA,
                area,
                complexity,
                obstacles,
                start,
                goal,
                seed,
                dt: default_dt(),
                params: WorldParams::default(),
            };
            cfg.validate()?;
            return Ok(cfg);
        }
        Err(WorldError::InvalidScenario(format!(
            "no feasible layout after {} attempts",
            gen.max_attempts
        )))
    }
}

fn static_boxes(rng: &mut ChaCha8Rng, start: Vec3<f64>, goal: Vec3<f64>, n: usize) -> Vec<Shape<f64>> {
    let dir = (goal - start).normalized(1e-9).unwrap();
    let normal = Vec3::new(-dir.y, dir.x, 0.0);
    let len = start.distance(goal);
    let mut fractions: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..0.75)).collect();
    fractions.sort_by(f64::total_cmp);
    fractions
        .into_iter()
        .map(|f| {
            let lateral = rng.random_range(-4.0..4.0);
            let c = start + dir * (f * len) + normal * lateral;
            let hx = rng.random_range(1.5..4.0);
            let hy = rng.random_range(1.5..4.0);
            let h = rng.random_range(6.0..14.0);
            Shape::Box(Aabb::new(Vec3::new(c.x - hx, c.y - hy, 0.0), Vec3::new(c.x + hx, c.y + hy, h)))
        })
        .collect()
}

fn dynamic_obstacles(rng: &mut ChaCha8Rng, complexity: Complexity, gen: &GenParams) -> Vec<ObstacleSpec> {
    use ObstacleKind::*;
    let plan: &[(ObstacleKind, f64)] = match complexity {
        Complexity::LowDynamic => &[(MovingVehicle, 10.0), (FallingObject, 21.0)],
        Complexity::HighDynamic => &[
            (OtherUav, 4.5),
            (MovingVehicle, 9.5),
            (FallingObject, 14.5),
            (OtherUav, 19.5),
            (MovingVehicle, 24.5),
            (FallingObject, 29.0),
        ],
    };
    plan.iter()
        .map(|&(kind, at)| {
            let distance = at + rng.random_range(-1.5..1.5);
            let activation = Activation::Progress { distance };
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            match kind {
                MovingVehicle => ObstacleSpec {
                    kind,
                    shape: Shape::Box(Aabb::new(Vec3::new(-1.5, -1.5, 0.0), Vec3::new(1.5, 1.5, 1.8))),
                    motion: Motion::Static,
                    activation,
                    aim: Some(Aim {
                        lead_time: rng.random_range(1.6..2.2),
                        approach_deg: side * rng.random_range(60.0..120.0),
                        speed: rng.random_range(gen.vehicle_speed.0..gen.vehicle_speed.1),
                        offset: [0.0, 0.0],
                    }),
                },
                FallingObject => {
                    let r = rng.random_range(gen.falling_radius.0..gen.falling_radius.1);
                    let h = rng.random_range(gen.drop_height.0..gen.drop_height.1);
                    let jitter = rng.random_range(0.0..0.4);
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    ObstacleSpec {
                        kind,
                        shape: Shape::Sphere(Sphere {
                            center: Vec3::new(0.0, 0.0, h),
                            radius: r,
                        }),
                        motion: Motion::Ballistic { gravity: GRAVITY },
                        activation,
                        aim: Some(Aim {
                            lead_time: 0.0,
                            approach_deg: 0.0,
                            speed: 0.0,
                            offset: [jitter * angle.cos(), jitter * angle.sin()],
                        }),
                    }
                }
                OtherUav => ObstacleSpec {
                    kind,
                    shape: Shape::Sphere(Sphere {
                        center: Vec3::new(0.0, 0.0, gen.cruise_altitude),
                        radius: 0.3,
                    }),
                    motion: Motion::Static,
                    activation,
                    aim: Some(Aim {
                        lead_time: rng.random_range(2.0..2.6),
                        approach_deg: side * rng.random_range(0.0..30.0),
                        speed: rng.random_range(gen.uav_speed.0..gen.uav_speed.1),
                        offset: [0.0, 0.0],
                    }),
                },
                StaticBox => unreachable!(),
            }
        })
        .collect()
}

/// Whether a horizontal path from `start` to `goal` exists at `start.z` whose
/// points all keep `half_width` from every shape, searched on a `cell` grid
/// over the start-goal box grown by `margin`.
pub fn corridor_exists(
    shapes: &[Shape<f64>],
    start: Vec3<f64>,
    goal: Vec3<f64>,
    half_width: f64,
    margin: f64,
    cell: f64,
) -> bool {
    let x0 = start.x.min(goal.x) - margin;
    let y0 = start.y.min(goal.y) - margin;
    let nx = ((start.x.max(goal.x) + margin - x0) / cell).ceil() as usize + 1;
    let ny = ((start.y.max(goal.y) + margin - y0) / cell).ceil() as usize + 1;
    let z = start.z;
    let free = |i: usize, j: usize| {
        let p = Vec3::new(x0 + i as f64 * cell, y0 + j as f64 * cell, z);
        shapes.iter().all(|s| s.distance(p) >= half_width)
    };
    let idx = |p: Vec3<f64>| {
        (
            ((p.x - x0) / cell).round() as usize,
            ((p.y - y0) / cell).round() as usize,
        )
    };
    let (si, sj) = idx(start);
    let (gi, gj) = idx(goal);
    if !free(si, sj) || !free(gi, gj) {
        return false;
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([(si, sj)]);
    seen[sj * nx + si] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == (gi, gj) {
            return true;
        }
        for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= nx as i64 || nj >= ny as i64 {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if !seen[nj * nx + ni] && free(ni, nj) {
                seen[nj * nx + ni] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    false
}
