//! Obstacle specs and their analytic motion.

use serde::{Deserialize, Serialize};

use crate::geom::{Shape, Vec3};

pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    StaticBox,
    MovingVehicle,
    FallingObject,
    OtherUav,
}

impl ObstacleKind {
    pub fn is_dynamic(self) -> bool {
        self != ObstacleKind::StaticBox
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    /// Constant velocity; vehicles keep `velocity.z == 0`.
    Linear { velocity: Vec3<f64> },
    /// Released from rest, accelerating downward at `gravity`.
    Ballistic { gravity: f64 },
    /// Piecewise-linear path at constant speed, starting at the shape center;
    /// holds the last waypoint.
    Scripted { waypoints: Vec<Vec3<f64>>, speed: f64 },
}

/// When a pending obstacle appears.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Always,
    /// Mission time, s.
    Time { t: f64 },
    /// Distance flown by the UAV, m.
    Progress { distance: f64 },
    /// UAV within `radius` of `center`.
    Proximity { center: Vec3<f64>, radius: f64 },
}

/// Re-derives spawn position and motion from the UAV state at activation so
/// the obstacle meets the UAV's extrapolated position `lead_time` later.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aim {
    /// s; for falling objects it is derived from the drop height instead.
    pub lead_time: f64,
    /// Degrees between the obstacle's travel direction and head-on
    /// (0 = straight at the UAV, ±90 = crossing).
    pub approach_deg: f64,
    /// m/s for vehicles and other UAVs.
    pub speed: f64,
    /// Horizontal offset of the release point from the aim point, m.
    pub offset: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub kind: ObstacleKind,
    /// Geometry at spawn.
    pub shape: Shape<f64>,
    pub motion: Motion,
    #[serde(default = "always")]
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aim: Option<Aim>,
}

fn always() -> Activation {
    Activation::Always
}

impl ObstacleSpec {
    pub fn static_box(shape: Shape<f64>) -> Self {
        Self {
            kind: ObstacleKind::StaticBox,
            shape,
            motion: Motion::Static,
            activation: Activation::Always,
            aim: None,
        }
    }

    /// Resolves aim against the UAV state; returns the spawn shape and motion.
    pub fn resolve(&self, uav_pos: Vec3<f64>, uav_vel: Vec3<f64>) -> (Shape<f64>, Motion) {
        let Some(aim) = self.aim else {
            return (self.shape.clone(), self.motion.clone());
        };
        let heading = uav_vel
            .horizontal()
            .normalized(1e-6)
            .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let offset = Vec3::new(aim.offset[0], aim.offset[1], 0.0);
        let center = self.shape.center();
        match self.kind {
            ObstacleKind::FallingObject => {
                let drop = (center.z - uav_pos.z).max(0.1);
                let g = match self.motion {
                    Motion::Ballistic { gravity } => gravity,
                    _ => GRAVITY,
                };
                let tau = (2.0 * drop / g).sqrt();
                let target = uav_pos + uav_vel.horizontal() * tau + offset;
                let spawn = Vec3::new(target.x, target.y, center.z);
                (self.shape.translated(spawn - center), self.motion.clone())
            }
            ObstacleKind::MovingVehicle | ObstacleKind::OtherUav => {
                let target = uav_pos + uav_vel.horizontal() * aim.lead_time + offset;
                let dir = rotate_z(heading * -1.0, aim.approach_deg.to_radians());
                let travel = dir * (aim.speed * aim.lead_time);
                let z = if self.kind == ObstacleKind::MovingVehicle {
                    center.z
                } else {
                    uav_pos.z
                };
                let spawn = Vec3::new(target.x - travel.x, target.y - travel.y, z);
                let shape = self.shape.translated(spawn - center);
                let motion = if self.kind == ObstacleKind::MovingVehicle {
                    Motion::Linear {
                        velocity: dir * aim.speed,
                    }
                } else {
                    let end = Vec3::new(target.x, target.y, z) + dir * (aim.speed * 30.0);
                    Motion::Scripted {
                        waypoints: vec![end],
                        speed: aim.speed,
                    }
                };
                (shape, motion)
            }
            ObstacleKind::StaticBox => (self.shape.clone(), self.motion.clone()),
        }
    }
}

pub(crate) fn rotate_z(v: Vec3<f64>, angle: f64) -> Vec3<f64> {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Displacement and velocity `tau` seconds after spawn.
pub fn motion_state(motion: &Motion, origin: Vec3<f64>, tau: f64) -> (Vec3<f64>, Vec3<f64>) {
    let tau = tau.max(0.0);
    match motion {
        Motion::Static => (Vec3::zero(), Vec3::zero()),
        Motion::Linear { velocity } => (*velocity * tau, *velocity),
        Motion::Ballistic { gravity } => (
            Vec3::new(0.0, 0.0, -0.5 * gravity * tau * tau),
            Vec3::new(0.0, 0.0, -gravity * tau),
        ),
        Motion::Scripted { waypoints, speed } => {
            let mut remaining = speed * tau;
            let mut from = origin;
            for &wp in waypoints {
                let leg = wp - from;
                let len = leg.norm();
                if remaining <= len && len > 0.0 {
                    let dir = leg / len;
                    return (from + dir * remaining - origin, dir * *speed);
                }
                remaining -= len;
                from = wp;
            }
            (from - origin, Vec3::zero())
        }
    }
}
