//! Clamping trajectories into the action-mode envelope.

use serde::{Deserialize, Serialize};

use super::Envelope;
use crate::geom::Vec3;
use crate::trajectory::{Trajectory, Waypoint, STATIONARY_SPEED};

/// Samples this close (s) to the start, the end or a hover are take-off or
/// landing transitions and may fly below the speed floor.
pub const TRANSITION_TIME: f64 = 1.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Segments whose speed was clamped.
    pub speed_violations: usize,
    /// Samples above the curvature cap before re-smoothing.
    pub curvature_violations: usize,
    /// The geometry was regenerated to honor the cap.
    pub regenerated: bool,
    pub max_speed: f64,
    pub max_curvature: f64,
}

impl EnvelopeReport {
    pub fn is_clean(&self) -> bool {
        self.speed_violations == 0 && self.curvature_violations == 0
    }
}

/// Clamps segment speeds into the envelope by re-timing along the same
/// geometry, then, if any sample still exceeds the curvature cap,
/// regenerates the geometry with a heading-rate-limited pursuit of the
/// original. Returns the input unchanged when nothing is violated.
pub fn enforce_envelope(traj: &Trajectory<f64>, env: &Envelope) -> (Trajectory<f64>, EnvelopeReport) {
    let mut report = EnvelopeReport::default();
    let mut out = clamp_speed(traj, env, &mut report);
    if out.len() >= 3 {
        let kappa = out.curvature_series().expect("three samples");
        report.curvature_violations = kappa.iter().filter(|&&k| k > env.curvature_cap * (1.0 + 1e-9)).count();
        if report.curvature_violations > 0 {
            out = pursue(&out, env.curvature_cap);
            report.regenerated = true;
        }
        report.max_curvature = out.curvature_series().expect("three samples").into_iter().fold(0.0, f64::max);
    }
    report.max_speed = out.speed_series().into_iter().fold(0.0, f64::max);
    if !report.is_clean() {
        log::debug!(
            "envelope: {} speed and {} curvature violations{}",
            report.speed_violations,
            report.curvature_violations,
            if report.regenerated { ", geometry regenerated" } else { "" }
        );
    }
    (out, report)
}

fn clamp_speed(traj: &Trajectory<f64>, env: &Envelope, report: &mut EnvelopeReport) -> Trajectory<f64> {
    let w = traj.waypoints();
    let n = w.len();
    let (t_start, t_end) = (traj.start_time(), traj.end_time());
    let seg: Vec<(f64, f64)> = w.windows(2).map(|p| (p[0].position.distance(p[1].position), p[1].time - p[0].time)).collect();
    let hovers: Vec<f64> = seg
        .iter()
        .zip(w)
        .filter(|((l, dt), _)| l / dt < STATIONARY_SPEED)
        .map(|((_, dt), a)| a.time + dt / 2.0)
        .collect();
    let mut speeds = Vec::with_capacity(n - 1);
    for (i, &(l, dt)) in seg.iter().enumerate() {
        let v = l / dt;
        let mid = w[i].time + dt / 2.0;
        let transition = mid - t_start < TRANSITION_TIME
            || t_end - mid < TRANSITION_TIME
            || hovers.iter().any(|&h| (h - mid).abs() < TRANSITION_TIME);
        let mut target = v.min(env.speed[1]);
        if !transition {
            target = target.max(env.speed[0]);
        }
        if (target - v).abs() > 1e-9 * v.max(1.0) {
            report.speed_violations += 1;
        }
        speeds.push(target);
    }
    if report.speed_violations == 0 {
        return traj.clone();
    }
    let interval = traj.uniform_interval(1e-6).unwrap_or(traj.duration() / (n - 1) as f64);
    let mut t = t_start;
    let mut retimed = Vec::with_capacity(n);
    retimed.push(w[0]);
    for (i, (&(l, dt), &v)) in seg.iter().zip(&speeds).enumerate() {
        t += if v > 0.0 && l > 0.0 { l / v } else { dt };
        retimed.push(Waypoint::new(w[i + 1].position, t));
    }
    Trajectory::new(retimed)
        .and_then(|r| r.resample(interval))
        .expect("re-timing keeps times increasing")
}

/// Re-flies the trajectory with the same step lengths and times, steering
/// toward a look-ahead point on the original while limiting the heading
/// change per sample to `cap · min(adjacent steps)`. That bound keeps the
/// three-point curvature at every sample at or below `cap`.
fn pursue(traj: &Trajectory<f64>, cap: f64) -> Trajectory<f64> {
    let w = traj.waypoints();
    let n = w.len();
    let pts: Vec<Vec3<f64>> = w.iter().map(|p| p.position).collect();
    let steps: Vec<f64> = pts.windows(2).map(|p| p[0].distance(p[1])).collect();
    let moving: Vec<bool> = steps
        .iter()
        .zip(w.windows(2))
        .map(|(l, p)| l / (p[1].time - p[0].time) >= STATIONARY_SPEED)
        .collect();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + steps[i - 1];
    }
    let lookahead = 2.0 / cap;
    let mut out = Vec::with_capacity(n);
    out.push(pts[0]);
    let mut dir = Vec3::new(1.0, 0.0, 0.0);
    let mut prog = 0;
    let mut free = true;
    for i in 0..n - 1 {
        let q = out[i];
        if !moving[i] {
            out.push(q + (pts[i + 1] - pts[i]));
            free = true;
            continue;
        }
        while prog + 1 < n && q.distance(pts[prog + 1]) <= q.distance(pts[prog]) {
            prog += 1;
        }
        let target = (prog + 1..n).find(|&j| cum[j] - cum[prog] >= lookahead).unwrap_or(n - 1);
        let goal = (pts[target] - q).normalized(1e-9).unwrap_or(dir);
        let limit = if free {
            std::f64::consts::PI
        } else {
            cap * steps[i - 1].min(steps[i]) * (1.0 - 1e-6)
        };
        dir = rotate_toward(dir, goal, limit);
        out.push(q + dir * steps[i]);
        free = false;
    }
    let waypoints = out.into_iter().zip(w).map(|(p, o)| Waypoint::new(p, o.time)).collect();
    Trajectory::new(waypoints).expect("same timestamps")
}

/// Turns unit vector `d` toward unit vector `g` by at most `limit` radians.
fn rotate_toward(d: Vec3<f64>, g: Vec3<f64>, limit: f64) -> Vec3<f64> {
    let angle = d.dot(g).clamp(-1.0, 1.0).acos();
    if angle <= limit {
        return g;
    }
    let perp = (g - d * d.dot(g))
        .normalized(1e-12)
        .or_else(|| Vec3::new(-d.y, d.x, 0.0).normalized(1e-12))
        .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    (d * limit.cos() + perp * limit.sin()).normalized(1e-12).unwrap_or(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(radius: f64, speed: f64, n: usize) -> Trajectory<f64> {
        let dt = 0.1;
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let th = speed * dt * i as f64 / radius;
                Vec3::new(radius * th.cos(), radius * th.sin(), 2.0)
            })
            .collect();
        Trajectory::from_uniform(&pts, 0.0, dt).unwrap()
    }

    #[test]
    fn fast_line_slowed_to_cap() {
        let pts: Vec<_> = (0..60).map(|i| Vec3::new(i as f64, 0.0, 1.5)).collect();
        let traj = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        let (out, report) = enforce_envelope(&traj, &Envelope::default());
        assert!(report.speed_violations > 0);
        assert!(out.speed_series().iter().all(|&v| (v - 8.0).abs() < 1e-6));
        assert!(out.positions().all(|p| p.y == 0.0 && p.z == 1.5));
        assert!((out.arc_length() - traj.arc_length()).abs() < 1e-9);
        assert!((out.duration() - 59.0 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn gentle_circle_untouched() {
        let traj = circle(2.0, 5.0, 80);
        let (out, report) = enforce_envelope(&traj, &Envelope::default());
        assert!(report.is_clean());
        assert_eq!(out, traj);
    }

    #[test]
    fn hairpin_resmoothed_below_cap() {
        let traj = circle(0.5, 4.0, 30);
        assert!((traj.curvature_series().unwrap()[5] - 2.0).abs() < 1e-9);
        let (out, report) = enforce_envelope(&traj, &Envelope::default());
        assert!(report.regenerated && report.curvature_violations > 0);
        let peak = out.curvature_series().unwrap().into_iter().fold(0.0, f64::max);
        assert!(peak <= 1.0 + 1e-6, "peak {peak}");
    }

    #[test]
    fn slow_cruise_raised_but_takeoff_kept() {
        // 1 m/s for 5 s: the middle is raised to 3 m/s, the first and last
        // 1.5 s are take-off/landing.
        let pts: Vec<_> = (0..51).map(|i| Vec3::new(0.1 * i as f64, 0.0, 1.5)).collect();
        let traj = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        let (out, report) = enforce_envelope(&traj, &Envelope::default());
        assert!(report.speed_violations > 0);
        assert!(out.duration() < traj.duration());
        assert!((out.arc_length() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn rotate_toward_limits_angle() {
        let d = Vec3::new(1.0, 0.0, 0.0);
        let g = Vec3::new(0.0, 1.0, 0.0);
        let r = rotate_toward(d, g, 0.1);
        assert!((r.dot(d).acos() - 0.1).abs() < 1e-12);
        assert_eq!(rotate_toward(d, g, PI), g);
    }
}
