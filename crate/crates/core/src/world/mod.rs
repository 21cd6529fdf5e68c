//! The mission area: obstacles, their motion, range-limited sensing and
//! distance/collision queries against a point UAV.

pub mod mission;
pub mod obstacle;
pub mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Shape, Vec3};
pub use obstacle::{motion_state, Activation, Aim, Motion, ObstacleKind, ObstacleSpec, GRAVITY};
pub use scenario::{Complexity, ScenarioConfig, WorldParams};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario file: {0}")]
    Format(String),
}

/// Point-mass UAV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3<f64>,
    pub velocity: Vec3<f64>,
    /// kg.
    pub mass: f64,
    /// kg, at most 0.6.
    pub payload: f64,
    /// m/s², power-gated by the planner.
    pub accel_limit: f64,
}

impl UavState {
    pub fn at_rest(position: Vec3<f64>) -> Self {
        Self {
            position,
            velocity: Vec3::zero(),
            mass: 0.9,
            payload: 0.0,
            accel_limit: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Active,
    Gone,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleState {
    pub id: usize,
    pub spec: ObstacleSpec,
    pub status: Status,
    /// Shape at activation.
    pub origin: Shape<f64>,
    pub motion: Motion,
    pub activated_at: f64,
}

impl ObstacleState {
    pub fn shape_at(&self, t: f64) -> Shape<f64> {
        let (d, _) = motion_state(&self.motion, self.origin.center(), t - self.activated_at);
        self.origin.translated(d)
    }

    pub fn velocity_at(&self, t: f64) -> Vec3<f64> {
        motion_state(&self.motion, self.origin.center(), t - self.activated_at).1
    }

    /// Whether a falling object has reached the ground by time `t`.
    fn landed(&self, t: f64) -> bool {
        if self.spec.kind != ObstacleKind::FallingObject {
            return false;
        }
        let shape = self.shape_at(t);
        let bottom = match shape {
            Shape::Sphere(s) => s.center.z - s.radius,
            Shape::Box(b) => b.min.z,
        };
        bottom <= 0.0
    }

    fn present_at(&self, t: f64) -> bool {
        self.status == Status::Active && t >= self.activated_at && !self.landed(t)
    }
}

/// What the UAV's sensor reports about one obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSnapshot {
    pub id: usize,
    pub kind: ObstacleKind,
    pub shape: Shape<f64>,
    pub velocity: Vec3<f64>,
    /// Constant acceleration assumed for extrapolation (gravity for falling objects).
    pub acceleration: Vec3<f64>,
    /// Surface distance from the UAV at sensing time, m.
    pub distance: f64,
}

impl ObstacleSnapshot {
    /// Extrapolated shape `dt` seconds ahead, or `None` once a falling
    /// object would have hit the ground.
    pub fn predict(&self, dt: f64) -> Option<Shape<f64>> {
        let d = self.velocity * dt + self.acceleration * (0.5 * dt * dt);
        let shape = self.shape.translated(d);
        if self.kind == ObstacleKind::FallingObject {
            let bottom = match shape {
                Shape::Sphere(s) => s.center.z - s.radius,
                Shape::Box(b) => b.min.z,
            };
            if bottom <= 0.0 {
                return None;
            }
        }
        Some(shape)
    }
}

/// Obstacle field plus its clock.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: ScenarioConfig,
    pub obstacles: Vec<ObstacleState>,
    pub time: f64,
}

impl World {
    /// Builds the world for a validated config.
    pub fn spawn(config: &ScenarioConfig) -> Result<Self, WorldError> {
        config.validate()?;
        let obstacles = config
            .obstacles
            .iter()
            .enumerate()
            .map(|(id, spec)| {
                let active = spec.activation == Activation::Always;
                ObstacleState {
                    id,
                    spec: spec.clone(),
                    status: if active { Status::Active } else { Status::Pending },
                    origin: spec.shape,
                    motion: spec.motion.clone(),
                    activated_at: 0.0,
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            obstacles,
            time: 0.0,
        })
    }

    /// Activates pending obstacles whose trigger fired; returns their ids.
    pub fn update_triggers(&mut self, uav: &UavState, flown_distance: f64) -> Vec<usize> {
        let t = self.time;
        let mut spawned = Vec::new();
        for ob in &mut self.obstacles {
            if ob.status != Status::Pending {
                continue;
            }
            let fire = match &ob.spec.activation {
                Activation::Always => true,
                Activation::Time { t: at } => t + 1e-9 >= *at,
                Activation::Progress { distance } => flown_distance >= *distance,
                Activation::Proximity { center, radius } => uav.position.distance(*center) <= *radius,
            };
            if fire {
                let (shape, motion) = ob.spec.resolve(uav.position, uav.velocity);
                ob.origin = shape;
                ob.motion = motion;
                ob.activated_at = t;
                ob.status = Status::Active;
                spawned.push(ob.id);
            }
        }
        spawned
    }

    /// Advances the clock; falling objects that touched the ground despawn.
    pub fn step(&mut self, dt: f64) {
        self.time += dt;
        let t = self.time;
        for ob in &mut self.obstacles {
            if ob.status == Status::Active && ob.landed(t) {
                ob.status = Status::Gone;
            }
        }
    }

    /// Obstacles present at time `t` with their shapes.
    pub fn present_at(&self, t: f64) -> impl Iterator<Item = (&ObstacleState, Shape<f64>)> + '_ {
        self.obstacles
            .iter()
            .filter(move |o| o.present_at(t))
            .map(move |o| (o, o.shape_at(t)))
    }

    pub fn static_shapes(&self) -> Vec<Shape<f64>> {
        self.obstacles
            .iter()
            .filter(|o| o.spec.kind == ObstacleKind::StaticBox)
            .map(|o| o.origin)
            .collect()
    }

    /// Active obstacles within `range` of `p` (surface distance).
    pub fn sense(&self, p: Vec3<f64>, range: f64) -> Vec<ObstacleSnapshot> {
        let t = self.time;
        self.present_at(t)
            .filter_map(|(o, shape)| {
                let distance = shape.distance(p);
                (distance <= range).then(|| ObstacleSnapshot {
                    id: o.id,
                    kind: o.spec.kind,
                    shape,
                    velocity: o.velocity_at(t),
                    acceleration: match o.motion {
                        Motion::Ballistic { gravity } => Vec3::new(0.0, 0.0, -gravity),
                        _ => Vec3::zero(),
                    },
                    distance,
                })
            })
            .collect()
    }

    /// Surface distance to the nearest present obstacle; infinite if none.
    pub fn min_distance(&self, p: Vec3<f64>) -> f64 {
        self.min_distance_at(p, self.time)
    }

    pub fn min_distance_at(&self, p: Vec3<f64>, t: f64) -> f64 {
        self.present_at(t)
            .map(|(_, s)| s.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum distance while the UAV moves linearly from `p0` to `p1` over
    /// `[t0, t0 + dt]`, sampled at `substeps` intervals so fast falling
    /// objects cannot pass between steps unnoticed.
    pub fn min_distance_swept(&self, p0: Vec3<f64>, p1: Vec3<f64>, t0: f64, dt: f64, substeps: usize) -> f64 {
        let n = substeps.max(1);
        (0..=n)
            .map(|i| {
                let u = i as f64 / n as f64;
                self.min_distance_at(p0.lerp(p1, u), t0 + u * dt)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_collision(&self, p: Vec3<f64>) -> bool {
        self.min_distance(p) <= self.config.params.collision_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Aabb, Sphere};

    fn world_with(obstacles: Vec<ObstacleSpec>) -> World {
        let mut cfg = ScenarioConfig::free_space(Vec3::new(10.0, 10.0, 10.0), Vec3::new(40.0, 10.0, 10.0), 1);
        cfg.obstacles = obstacles;
        World::spawn(&cfg).unwrap()
    }

    fn sphere_at(c: Vec3<f64>, r: f64) -> Shape<f64> {
        Shape::Sphere(Sphere { center: c, radius: r })
    }

    #[test]
    fn sphere_distance_example() {
        let w = world_with(vec![ObstacleSpec::static_box(sphere_at(Vec3::new(0.0, 0.0, 13.0), 1.0))]);
        assert_eq!(w.min_distance(Vec3::new(0.0, 0.0, 10.0)), 2.0);
    }

    #[test]
    fn inside_box_collides() {
        let b = Shape::Box(Aabb::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(4.0, 4.0, 4.0)));
        let w = world_with(vec![ObstacleSpec::static_box(b)]);
        assert_eq!(w.min_distance(Vec3::new(1.0, 1.0, 1.0)), 0.0);
        assert!(w.check_collision(Vec3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn nearest_of_two() {
        let w = world_with(vec![
            ObstacleSpec::static_box(sphere_at(Vec3::new(4.0, 0.0, 0.0), 1.0)),
            ObstacleSpec::static_box(sphere_at(Vec3::new(0.0, 6.0, 0.0), 1.0)),
        ]);
        assert_eq!(w.min_distance(Vec3::zero()), 3.0);
    }

    #[test]
    fn empty_world_is_infinitely_far() {
        let w = world_with(vec![]);
        assert_eq!(w.min_distance(Vec3::zero()), f64::INFINITY);
    }

    #[test]
    fn sensing_range() {
        let w = world_with(vec![
            ObstacleSpec::static_box(sphere_at(Vec3::new(26.0, 0.0, 0.0), 1.0)),
            ObstacleSpec::static_box(sphere_at(Vec3::new(0.0, 11.0, 0.0), 1.0)),
        ]);
        let seen = w.sense(Vec3::zero(), 20.0);
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].id, 1);
        assert_eq!(seen[0].distance, 10.0);
    }

    fn falling(at: f64) -> ObstacleSpec {
        ObstacleSpec {
            kind: ObstacleKind::FallingObject,
            shape: sphere_at(Vec3::new(0.0, 0.0, 20.0), 0.5),
            motion: Motion::Ballistic { gravity: GRAVITY },
            activation: Activation::Time { t: at },
            aim: None,
        }
    }

    #[test]
    fn pending_fall_is_invisible_then_drops() {
        let mut w = world_with(vec![falling(1.0)]);
        let uav = UavState::at_rest(Vec3::new(0.0, 0.0, 10.0));
        w.update_triggers(&uav, 0.0);
        assert!(w.sense(uav.position, 20.0).is_empty());
        for _ in 0..10 {
            w.step(0.1);
        }
        assert_eq!(w.update_triggers(&uav, 0.0), vec![0]);
        for _ in 0..10 {
            w.step(0.1);
        }
        let seen = w.sense(uav.position, 20.0);
        assert_eq!(seen.len(), 1);
        assert!((seen[0].shape.center().z - (20.0 - 4.905)).abs() < 1e-9);
        assert!((seen[0].velocity.z + 9.81).abs() < 1e-9);
    }

    #[test]
    fn fallen_object_despawns() {
        let mut w = world_with(vec![falling(0.0)]);
        w.update_triggers(&UavState::at_rest(Vec3::zero()), 0.0);
        for _ in 0..30 {
            w.step(0.1);
        }
        assert_eq!(w.obstacles[0].status, Status::Gone);
        assert_eq!(w.min_distance(Vec3::zero()), f64::INFINITY);
    }

    #[test]
    fn vehicle_steps() {
        let mut w = world_with(vec![ObstacleSpec {
            kind: ObstacleKind::MovingVehicle,
            shape: sphere_at(Vec3::zero(), 0.5),
            motion: Motion::Linear {
                velocity: Vec3::new(5.0, 0.0, 0.0),
            },
            activation: Activation::Always,
            aim: None,
        }]);
        w.step(0.1);
        let c = w.obstacles[0].shape_at(w.time).center();
        assert!((c - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn swept_distance_catches_fast_fall() {
        let w = world_with(vec![ObstacleSpec::static_box(sphere_at(Vec3::new(5.0, 0.0, 0.0), 0.5))]);
        let d = w.min_distance_swept(Vec3::zero(), Vec3::new(10.0, 0.0, 0.0), 0.0, 0.1, 10);
        assert_eq!(d, 0.0);
    }
}
