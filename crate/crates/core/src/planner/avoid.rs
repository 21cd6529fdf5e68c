//! Reactive avoidance: conflict prediction against sensed obstacles and
//! local amendments that rejoin the current reference.
//!
//! Vehicles and other UAVs get a smooth sideways (or, for ground vehicles,
//! upward) offset of the reference, optionally flown faster. Falling objects
//! get a lateral escape away from the predicted impact point. Candidates are
//! checked by predicting every sensed obstacle forward; the smallest feasible
//! offset wins.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{enforce_envelope, EnvelopeReport, PlanParams, PlannerConfig, Reference};
use crate::geom::{Shape, Vec3};
use crate::trajectory::Trajectory;
use crate::world::obstacle::rotate_z;
use crate::world::{ObstacleKind, ObstacleSnapshot, UavState};

/// Prediction step for conflict checks, s.
const PREDICT_STEP: f64 = 0.05;
/// Tracking error at amendment start fades out over this time, s.
const FADE_TIME: f64 = 1.0;
/// Reference time checked after an amendment rejoins, s.
const TAIL_TIME: f64 = 2.0;
/// Escape keeps pushing this long after predicted impact, s.
const ESCAPE_MARGIN: f64 = 0.3;

/// Predicted closest approach below the required clearance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub obstacle: usize,
    /// Time after the snapshot, s.
    pub time: f64,
    /// Predicted surface distance, m.
    pub distance: f64,
}

/// Closest approach between the reference (from `t_now`) and the
/// extrapolated obstacle within `horizon`; `Some` when below `clearance`.
pub fn conflict(reference: &Reference, t_now: f64, snap: &ObstacleSnapshot, horizon: f64, clearance: f64) -> Option<Conflict> {
    let (time, distance) = closest_approach(reference, t_now, snap, horizon);
    (distance < clearance).then_some(Conflict {
        obstacle: snap.id,
        time,
        distance,
    })
}

fn closest_approach(reference: &Reference, t_now: f64, snap: &ObstacleSnapshot, horizon: f64) -> (f64, f64) {
    let n = (horizon / PREDICT_STEP).round() as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=n {
        let tau = k as f64 * PREDICT_STEP;
        let Some(shape) = snap.predict(tau) else {
            break;
        };
        let d = shape.distance(reference.position_at(t_now + tau));
        if d < best.1 {
            best = (tau, d);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmendmentKind {
    Lateral,
    Vertical,
    Escape,
    Hover,
}

/// A local replacement for part of the reference.
#[derive(Clone, Debug)]
pub struct Amendment {
    pub kind: AmendmentKind,
    /// Starts at the current time.
    pub trajectory: Trajectory<f64>,
    /// Reference time at which the old reference resumes.
    pub resume_at: f64,
    /// Smallest predicted distance to any sensed dynamic obstacle, m.
    pub predicted_clearance: f64,
    /// All clearances met.
    pub feasible: bool,
    pub envelope: EnvelopeReport,
}

/// Everything the avoidance planner sees at one instant.
#[derive(Clone, Copy, Debug)]
pub struct AvoidInput<'a> {
    pub reference: &'a Reference,
    pub t_now: f64,
    pub uav: &'a UavState,
    /// Sensed dynamic obstacles, the threat included.
    pub obstacles: &'a [ObstacleSnapshot],
    pub statics: &'a [Shape<f64>],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Score {
    /// Static clearance requirement met and altitude kept.
    static_ok: bool,
    /// At least the fallback clearance from static obstacles.
    static_safe: bool,
    /// Smallest static distance, m.
    stat: f64,
    /// Smallest predicted distance to sensed dynamic obstacles, m.
    dynamic: f64,
}

impl Score {
    fn feasible(&self, clearance: f64) -> bool {
        self.static_ok && self.dynamic >= clearance
    }

    /// Nearest thing the candidate could hit; static distance only counts
    /// while it is below the requirement.
    fn margin(&self) -> f64 {
        if self.static_ok {
            self.dynamic
        } else {
            self.dynamic.min(self.stat)
        }
    }

    fn better_than(&self, o: &Score) -> bool {
        (self.static_safe, self.margin()) > (o.static_safe, o.margin())
    }
}

struct Candidate {
    kind: AmendmentKind,
    trajectory: Trajectory<f64>,
    resume_at: f64,
    envelope: EnvelopeReport,
}

/// Amendment for `threat`, or `None` when its closest approach within the
/// horizon already respects the target clearance.
pub fn replan_avoid(input: &AvoidInput, threat: &ObstacleSnapshot, params: &PlanParams, cfg: &PlannerConfig) -> Option<Amendment> {
    let clearance = params.target_clearance;
    let hit = conflict(input.reference, input.t_now, threat, cfg.horizon, clearance)?;
    let base_static = reference_static_clearance(input, cfg.max_amendment);
    let mut best: Option<(Candidate, Score)> = None;
    let mut consider = |c: Candidate| -> bool {
        let score = evaluate(input, &c, params, cfg, base_static);
        let ok = score.feasible(clearance);
        if best.as_ref().is_none_or(|(_, s)| score.better_than(s)) {
            best = Some((c, score));
        }
        ok
    };
    let found = match threat.kind {
        ObstacleKind::FallingObject => escapes(input, threat, &hit, params, cfg).any(&mut consider),
        _ => offsets(input, threat, &hit, params, cfg).any(&mut consider),
    };
    let (mut chosen, mut score) = best?;
    if !found && params.lambda <= 1e-9 {
        if let Some(h) = hover(input, &hit, params, cfg) {
            let s = evaluate(input, &h, params, cfg, base_static);
            if s.better_than(&score) {
                log::warn!("t={:.1}: no feasible avoidance, stopping to hover", input.t_now);
                chosen = h;
                score = s;
            }
        }
    }
    if !found && chosen.kind != AmendmentKind::Hover {
        log::debug!(
            "t={:.1}: best-effort avoidance of obstacle {} ({:.2} m predicted)",
            input.t_now,
            threat.id,
            score.dynamic
        );
    }
    Some(Amendment {
        kind: chosen.kind,
        trajectory: chosen.trajectory,
        resume_at: chosen.resume_at,
        predicted_clearance: score.dynamic,
        feasible: score.feasible(clearance),
        envelope: chosen.envelope,
    })
}

fn static_distance(statics: &[Shape<f64>], p: Vec3<f64>) -> f64 {
    statics.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
}

fn reference_static_clearance(input: &AvoidInput, window: f64) -> f64 {
    let n = (window / PREDICT_STEP).round() as usize;
    (0..=n)
        .map(|k| static_distance(input.statics, input.reference.position_at(input.t_now + k as f64 * PREDICT_STEP)))
        .fold(f64::INFINITY, f64::min)
}

fn evaluate(input: &AvoidInput, c: &Candidate, params: &PlanParams, cfg: &PlannerConfig, base_static: f64) -> Score {
    let t0 = input.t_now;
    let end = c.trajectory.end_time();
    let tail = (TAIL_TIME / cfg.sample_dt).round() as usize;
    let samples = c
        .trajectory
        .waypoints()
        .iter()
        .map(|w| (w.time - t0, w.position))
        .chain((1..=tail).map(|k| {
            let s = k as f64 * cfg.sample_dt;
            (end - t0 + s, input.reference.position_at(c.resume_at + s))
        }));
    let mut dynamic = f64::INFINITY;
    let mut stat = f64::INFINITY;
    let mut low = false;
    for (tau, p) in samples {
        for o in input.obstacles {
            if let Some(shape) = o.predict(tau) {
                dynamic = dynamic.min(shape.distance(p));
            }
        }
        stat = stat.min(static_distance(input.statics, p));
        low |= p.z < 0.5;
    }
    let needed = params.target_clearance.min(base_static) - cfg.clearance_tolerance;
    let safe = cfg.fallback_clearance.min(base_static) - cfg.clearance_tolerance;
    Score {
        static_ok: stat >= needed && !low,
        static_safe: stat >= safe && !low,
        stat,
        dynamic,
    }
}

/// Cosine blend from 1 at `x = 0` to 0 at `x = len`.
fn fall(x: f64, len: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= len {
        0.0
    } else {
        0.5 * (1.0 + (PI * x / len).cos())
    }
}

fn tracking_error(input: &AvoidInput) -> Vec3<f64> {
    input.uav.position - input.reference.position_at(input.t_now)
}

const REJOIN_TOLERANCE: f64 = 0.5;

fn finish(kind: AmendmentKind, points: &[Vec3<f64>], input: &AvoidInput, resume_at: f64, cfg: &PlannerConfig) -> Option<Candidate> {
    let raw = Trajectory::from_uniform(points, input.t_now, cfg.sample_dt).ok()?;
    let (trajectory, envelope) = enforce_envelope(&raw, &cfg.envelope);
    // Smoothing can pull the end off the reference; splicing that would leave a jump.
    let end = trajectory.last();
    if end.distance(input.reference.position_at(resume_at)) > REJOIN_TOLERANCE {
        return None;
    }
    Some(Candidate {
        kind,
        trajectory,
        resume_at,
        envelope,
    })
}

#[derive(Clone, Copy, Debug)]
enum Direction {
    Side(f64),
    Up,
}

/// Offset candidates in order of preference: smallest offset first, the
/// side away from the threat first, boosted speed first.
fn offsets<'a>(
    input: &'a AvoidInput<'a>,
    threat: &ObstacleSnapshot,
    hit: &Conflict,
    params: &'a PlanParams,
    cfg: &'a PlannerConfig,
) -> impl Iterator<Item = Candidate> + 'a {
    let t0 = input.t_now;
    let here = input.reference.position_at(t0 + hit.time);
    let ahead = input.reference.position_at(t0 + hit.time + 0.1);
    let behind = input.reference.position_at(t0 + hit.time - 0.1);
    let tangent = (ahead - behind).horizontal().normalized(1e-9).unwrap_or(Vec3::new(1.0, 0.0, 0.0));
    let left = Vec3::new(-tangent.y, tangent.x, 0.0);
    let threat_at = threat.predict(hit.time).map(|s| s.center()).unwrap_or(threat.shape.center());
    let preferred = if (threat_at - here).dot(left) > 0.0 { -1.0 } else { 1.0 };
    let mut dirs = vec![Direction::Side(preferred), Direction::Side(-preferred)];
    if threat.kind == ObstacleKind::MovingVehicle {
        dirs.push(Direction::Up);
    }
    let boost = params.avoid_speed(cfg) / params.cruise_speed;
    let speeds: Vec<f64> = if boost > 1.0 + 1e-9 { vec![boost, 1.0] } else { vec![1.0] };
    let holds = [0.5, 1.5, 3.0];
    let deltas = (1..=20).map(|i| 0.5 * i as f64);
    let tau_ca = hit.time;
    deltas.flat_map(move |delta| {
        let dirs = dirs.clone();
        let speeds = speeds.clone();
        dirs.into_iter().flat_map(move |dir| {
            let speeds = speeds.clone();
            speeds.into_iter().flat_map(move |f| {
                holds
                    .into_iter()
                    .filter_map(move |h| offset_candidate(input, delta, dir, f, tau_ca, tau_ca + h, params, cfg))
            })
        })
    })
}

#[allow(clippy::too_many_arguments)]
fn offset_candidate(
    input: &AvoidInput,
    delta: f64,
    dir: Direction,
    f: f64,
    tau_ca: f64,
    tau_hold: f64,
    params: &PlanParams,
    cfg: &PlannerConfig,
) -> Option<Candidate> {
    if let Direction::Up = dir {
        if input.uav.position.z + delta > cfg.altitude[1] {
            return None;
        }
    }
    let dt = cfg.sample_dt;
    let max_k = (cfg.max_amendment / dt).floor() as usize;
    let reference = input.reference;
    let t0 = input.t_now;
    let end_t = reference.end_time();
    let base: Vec<Vec3<f64>> = (0..=max_k + 1).map(|k| reference.position_at(t0 + f * k as f64 * dt)).collect();
    let mut s = vec![0.0; base.len()];
    for k in 1..base.len() {
        s[k] = s[k - 1] + base[k].distance(base[k - 1]);
    }
    let at_time = |tau: f64| s[((tau / dt).round() as usize).min(s.len() - 1)];
    let speed = (1..base.len()).map(|k| (s[k] - s[k - 1]) / dt).fold(0.0, f64::max).max(1.0);
    let a_lat = cfg.lateral_fraction * params.accel_limit;
    let kappa = params.avoid_curvature().min(a_lat / (speed * speed));
    let ramp = (PI * (delta / (2.0 * kappa)).sqrt()).min(at_time(tau_ca).max(1.0));
    let hold_end = at_time(tau_hold).max(ramp);
    // Near the goal the return ramp is shortened to fit the remaining path.
    let remaining = s[s.len() - 1];
    let ramp_out = ramp.min(remaining - hold_end - 0.5);
    if ramp_out < 0.5 * ramp {
        return if f == 1.0 {
            terminal_candidate(input, delta, dir, tau_ca + tau_hold, a_lat, cfg)
        } else {
            None
        };
    }
    let done = hold_end + ramp_out + 0.5;
    let k_end = s.iter().position(|&x| x >= done - 1e-9)?;
    if k_end > max_k {
        return None;
    }
    let err = tracking_error(input);
    let mut normal = Vec3::new(0.0, 1.0, 0.0);
    let mut points = Vec::with_capacity(k_end + 1);
    for k in 0..=k_end {
        let tangent = base[k + 1] - base[k.saturating_sub(1)];
        if let Some(t) = tangent.horizontal().normalized(1e-9) {
            normal = Vec3::new(-t.y, t.x, 0.0);
        }
        let sk = s[k];
        let profile = if sk < ramp {
            1.0 - fall(sk, ramp)
        } else {
            fall(sk - hold_end, ramp_out)
        };
        let offset = match dir {
            Direction::Side(side) => normal * (side * delta * profile),
            Direction::Up => Vec3::new(0.0, 0.0, delta * profile),
        };
        points.push(base[k] + offset + err * fall(k as f64 * dt, FADE_TIME));
    }
    let kind = match dir {
        Direction::Side(_) => AmendmentKind::Lateral,
        Direction::Up => AmendmentKind::Vertical,
    };
    finish(kind, &points, input, (t0 + f * k_end as f64 * dt).min(end_t), cfg)
}

/// Offset that does not fit before the end of the reference: step aside in
/// time rather than along the path, wait at the end until `hold_until`,
/// then come back.
fn terminal_candidate(
    input: &AvoidInput,
    delta: f64,
    dir: Direction,
    hold_until: f64,
    a_lat: f64,
    cfg: &PlannerConfig,
) -> Option<Candidate> {
    let dt = cfg.sample_dt;
    let reference = input.reference;
    let t0 = input.t_now;
    let end_t = reference.end_time();
    // Cosine step of height δ over T peaks at δπ²/(2T²) lateral acceleration.
    let ramp_t = PI * (delta / (2.0 * a_lat)).sqrt();
    let hold_end = hold_until.max(ramp_t).max(end_t - t0);
    let total = hold_end + ramp_t;
    if total > cfg.max_amendment {
        return None;
    }
    let n = (total / dt).ceil() as usize;
    let err = tracking_error(input);
    let mut normal = Vec3::new(0.0, 1.0, 0.0);
    let mut points = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tau = k as f64 * dt;
        let here = reference.position_at(t0 + tau);
        let tangent = reference.position_at(t0 + tau + 0.1) - reference.position_at(t0 + tau - 0.1);
        if let Some(t) = tangent.horizontal().normalized(1e-6) {
            normal = Vec3::new(-t.y, t.x, 0.0);
        }
        let profile = if tau < ramp_t {
            1.0 - fall(tau, ramp_t)
        } else {
            fall(tau - hold_end, ramp_t)
        };
        let offset = match dir {
            Direction::Side(side) => normal * (side * delta * profile),
            Direction::Up => Vec3::new(0.0, 0.0, delta * profile),
        };
        points.push(here + offset + err * fall(tau, FADE_TIME));
    }
    let kind = match dir {
        Direction::Side(_) => AmendmentKind::Lateral,
        Direction::Up => AmendmentKind::Vertical,
    };
    finish(kind, &points, input, end_t, cfg)
}

/// Largest forward time-warp factor in [0, 1] keeping `‖f·v + lateral‖ ≤ vmax`.
fn warp_limit(v: Vec3<f64>, lateral: Vec3<f64>, vmax: f64) -> f64 {
    let a = v.norm_squared();
    if a < 1e-12 {
        return 1.0;
    }
    let b = v.dot(lateral);
    let c = lateral.norm_squared() - vmax * vmax;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return 0.0;
    }
    ((-b + disc.sqrt()) / a).clamp(0.0, 1.0)
}

/// Escape directions: straight away from the predicted impact point, then
/// rotated alternatives.
fn escapes<'a>(
    input: &'a AvoidInput<'a>,
    threat: &ObstacleSnapshot,
    hit: &Conflict,
    params: &'a PlanParams,
    cfg: &'a PlannerConfig,
) -> impl Iterator<Item = Candidate> + 'a {
    let t0 = input.t_now;
    let here = input.reference.position_at(t0 + hit.time);
    let impact = threat.predict(hit.time).map(|s| s.center()).unwrap_or(threat.shape.center());
    let heading = input
        .reference
        .velocity_at(t0 + hit.time)
        .horizontal()
        .normalized(1e-6)
        .or_else(|| input.uav.velocity.horizontal().normalized(1e-6))
        .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
    let away = (here - impact)
        .horizontal()
        .normalized(0.05)
        .unwrap_or(Vec3::new(-heading.y, heading.x, 0.0));
    // Full-strength escapes first; weaker ones fit between static obstacles.
    let tau = hit.time;
    [1.0, 0.75, 0.5, 0.25].into_iter().flat_map(move |scale| {
        [0.0f64, 45.0, -45.0, 90.0, -90.0, 135.0, -135.0]
            .into_iter()
            .filter_map(move |deg| escape_candidate(input, rotate_z(away, deg.to_radians()), scale, tau, params, cfg))
    })
}

/// Lateral speed `w` and displacement `e` along the escape direction at
/// `tau`: accelerate until `t1` (capped at `w_max`), brake to a stop, then a
/// cosine return to the reference over `back` seconds.
fn escape_profile(tau: f64, a: f64, w_max: f64, t1: f64, back: f64) -> (f64, f64) {
    let t_cap = (w_max / a).min(t1);
    let w1 = a * t_cap;
    let e1 = 0.5 * a * t_cap * t_cap + w1 * (t1 - t_cap);
    let t2 = t1 + w1 / a;
    let e2 = e1 + 0.5 * w1 * w1 / a;
    if tau <= t_cap {
        (a * tau, 0.5 * a * tau * tau)
    } else if tau <= t1 {
        (w1, 0.5 * a * t_cap * t_cap + w1 * (tau - t_cap))
    } else if tau <= t2 {
        let x = tau - t1;
        (w1 - a * x, e1 + w1 * x - 0.5 * a * x * x)
    } else if tau <= t2 + back {
        let x = (tau - t2) / back;
        (-e2 * 0.5 * PI / back * (PI * x).sin(), e2 * 0.5 * (1.0 + (PI * x).cos()))
    } else {
        (0.0, 0.0)
    }
}

/// Duration of the escape before the return phase, and its displacement.
fn escape_extent(a: f64, w_max: f64, t1: f64) -> (f64, f64) {
    let t_cap = (w_max / a).min(t1);
    let w1 = a * t_cap;
    let t2 = t1 + w1 / a;
    let e2 = 0.5 * a * t_cap * t_cap + w1 * (t1 - t_cap) + 0.5 * w1 * w1 / a;
    (t2, e2)
}

fn escape_candidate(
    input: &AvoidInput,
    dir: Vec3<f64>,
    scale: f64,
    tau_impact: f64,
    params: &PlanParams,
    cfg: &PlannerConfig,
) -> Option<Candidate> {
    let dt = cfg.sample_dt;
    let vmax = cfg.envelope.speed[1];
    let a = params.evade_accel;
    let w_max = 0.9 * scale * params.avoid_speed(cfg);
    let t1 = tau_impact + ESCAPE_MARGIN;
    let (t2, e2) = escape_extent(a, w_max, t1);
    let v = params.cruise_speed;
    let a_ret = (cfg.lateral_fraction * params.accel_limit).min(params.avoid_curvature() * v * v).max(0.5);
    let back = (PI * (e2 / (2.0 * a_ret)).sqrt()).max(0.5);
    let total = t2 + back + 0.3;
    if total > cfg.max_amendment {
        return None;
    }
    let steps = (total / dt).ceil() as usize;
    let err = tracking_error(input);
    let reference = input.reference;
    let mut u = input.t_now;
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let tau = k as f64 * dt;
        let (w, e) = escape_profile(tau, a, w_max, t1, back);
        points.push(reference.position_at(u) + dir * e + err * fall(tau, FADE_TIME));
        if k < steps {
            let f = warp_limit(reference.velocity_at(u), dir * w, vmax);
            u = (u + f * dt).min(reference.end_time());
        }
    }
    finish(AmendmentKind::Escape, &points, input, u, cfg)
}

/// Brake to a stop along the reference, wait for the threat to pass, then
/// speed back up to the reference.
fn hover(input: &AvoidInput, hit: &Conflict, params: &PlanParams, cfg: &PlannerConfig) -> Option<Candidate> {
    let dt = cfg.sample_dt;
    let a = cfg.longitudinal_fraction * params.accel_limit;
    let reference = input.reference;
    let resume = hit.time + 1.0;
    let mut u = input.t_now;
    let mut f = 1.0f64;
    let mut points = Vec::new();
    let mut tau = 0.0;
    let mut stopped_at = None;
    let mut last_u = u;
    let err = tracking_error(input);
    while tau <= cfg.max_amendment {
        points.push(reference.position_at(u) + err * fall(tau, FADE_TIME));
        last_u = u;
        let v = reference.velocity_at(u).norm().max(0.5);
        if stopped_at.is_none() {
            f = (f - a * dt / v).max(0.0);
            if f == 0.0 {
                stopped_at = Some(tau);
            }
        } else if tau >= resume {
            f = (f + a * dt / v).min(1.0);
            if f >= 1.0 {
                break;
            }
        }
        u += f * dt;
        tau += dt;
    }
    finish(AmendmentKind::Hover, &points, input, last_u, cfg)
}
