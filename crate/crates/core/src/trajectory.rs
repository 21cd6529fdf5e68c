//! Timestamped 3-D paths: resampling, speed, discrete curvature, arc length.
//!
//! Curvature is evaluated per interior sample with the three-point form of
//! `‖r′ × r″‖ / ‖r′‖³`: the cubed speed is split into the backward, forward
//! and central difference speeds, which makes the estimate exact for samples
//! lying on a circle regardless of step size. Endpoints copy their nearest
//! interior value.

use std::io::{Read, Write};

use thiserror::Error;

use crate::geom::Vec3;
use crate::scalar::Real;

/// Speeds below this (m/s) are treated as hover; curvature there is 0.
pub const STATIONARY_SPEED: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory needs at least {needed} waypoints, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("waypoint times must be strictly increasing (index {index})")]
    NonMonotoneTime { index: usize },
    #[error("non-finite coordinate at waypoint {index}")]
    NonFinite { index: usize },
    #[error("sample interval must be positive")]
    BadInterval,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint<T> {
    pub position: Vec3<T>,
    pub time: T,
}

impl<T: Real> Waypoint<T> {
    pub fn new(position: Vec3<T>, time: T) -> Self {
        Self { position, time }
    }
}

/// Ordered waypoints with strictly increasing time; at least two.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    waypoints: Vec<Waypoint<T>>,
}

/// Aggregate geometry fed to the power model and the predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFeatures<T> {
    /// Polyline arc length, meters.
    pub length_d: T,
    /// Mean of `curvature_series`, 1/m.
    pub mean_abs_curvature: T,
    /// Per-sample |κ|, 1/m.
    pub curvature_series: Vec<T>,
    /// Per-sample speed, m/s.
    pub speed_series: Vec<T>,
}

impl<T: Real> TrajectoryFeatures<T> {
    pub fn mean_speed(&self) -> T {
        mean(&self.speed_series)
    }
}

impl<T: Real> Trajectory<T> {
    pub fn new(waypoints: Vec<Waypoint<T>>) -> Result<Self, TrajectoryError> {
        if waypoints.len() < 2 {
            return Err(TrajectoryError::TooFewPoints {
                needed: 2,
                got: waypoints.len(),
            });
        }
        for (i, w) in waypoints.iter().enumerate() {
            if !w.position.is_finite() || !w.time.is_finite() {
                return Err(TrajectoryError::NonFinite { index: i });
            }
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            if pair[1].time <= pair[0].time {
                return Err(TrajectoryError::NonMonotoneTime { index: i + 1 });
            }
        }
        Ok(Self { waypoints })
    }

    /// Positions sampled at `t0, t0 + dt, ...`.
    pub fn from_uniform(positions: &[Vec3<T>], t0: T, dt: T) -> Result<Self, TrajectoryError> {
        if !(dt > T::zero()) {
            return Err(TrajectoryError::BadInterval);
        }
        let waypoints = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| Waypoint::new(p, t0 + dt * T::from_usize(i).unwrap()))
            .collect();
        Self::new(waypoints)
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = Vec3<T>> + '_ {
        self.waypoints.iter().map(|w| w.position)
    }

    pub fn start_time(&self) -> T {
        self.waypoints[0].time
    }

    pub fn end_time(&self) -> T {
        self.waypoints[self.waypoints.len() - 1].time
    }

    pub fn duration(&self) -> T {
        self.end_time() - self.start_time()
    }

    pub fn first(&self) -> Vec3<T> {
        self.waypoints[0].position
    }

    pub fn last(&self) -> Vec3<T> {
        self.waypoints[self.waypoints.len() - 1].position
    }

    /// Common step if every interval matches the first within `rel_tol`.
    pub fn uniform_interval(&self, rel_tol: T) -> Option<T> {
        let dt0 = self.waypoints[1].time - self.waypoints[0].time;
        self.waypoints
            .windows(2)
            .all(|w| ((w[1].time - w[0].time) - dt0).abs() <= rel_tol * dt0)
            .then_some(dt0)
    }

    /// Index `i` with `time[i] <= t < time[i+1]`, clamped to valid segments.
    fn segment_index(&self, t: T) -> usize {
        let n = self.waypoints.len();
        match self
            .waypoints
            .binary_search_by(|w| w.time.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Linear interpolation in time, clamped to the endpoints.
    pub fn position_at(&self, t: T) -> Vec3<T> {
        if t <= self.start_time() {
            return self.first();
        }
        if t >= self.end_time() {
            return self.last();
        }
        let i = self.segment_index(t);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let u = (t - a.time) / (b.time - a.time);
        a.position.lerp(b.position, u)
    }

    /// Central-difference velocity at time `t` over a `h` second stencil.
    pub fn velocity_at(&self, t: T, h: T) -> Vec3<T> {
        (self.position_at(t + h) - self.position_at(t - h)) / (h + h)
    }

    /// Second-difference acceleration at time `t`.
    pub fn acceleration_at(&self, t: T, h: T) -> Vec3<T> {
        let two = T::lit(2.0);
        (self.position_at(t + h) - self.position_at(t) * two + self.position_at(t - h)) / (h * h)
    }

    pub fn arc_length(&self) -> T {
        self.waypoints
            .windows(2)
            .map(|w| w[1].position.distance(w[0].position))
            .sum()
    }

    /// Linear re-interpolation at a uniform step. The step is shrunk so the
    /// duration divides evenly, keeping both endpoints.
    pub fn resample(&self, interval: T) -> Result<Self, TrajectoryError> {
        if !(interval > T::zero()) || !interval.is_finite() {
            return Err(TrajectoryError::BadInterval);
        }
        let duration = self.duration();
        let steps = (duration / interval - T::lit(1e-9)).ceil().max(T::one());
        let n = steps.to_usize().ok_or(TrajectoryError::BadInterval)?;
        let step = duration / steps;
        let t0 = self.start_time();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let t = if i == n {
                self.end_time()
            } else {
                t0 + step * T::from_usize(i).unwrap()
            };
            out.push(Waypoint::new(self.position_at(t), t));
        }
        Self::new(out)
    }

    /// Per-sample speed: central differences inside, one-sided at the ends.
    pub fn speed_series(&self) -> Vec<T> {
        let w = &self.waypoints;
        let n = w.len();
        (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    i if i == n - 1 => (n - 2, n - 1),
                    i => (i - 1, i + 1),
                };
                w[b].position.distance(w[a].position) / (w[b].time - w[a].time)
            })
            .collect()
    }

    /// Per-sample |κ| in 1/m. Needs at least three samples.
    pub fn curvature_series(&self) -> Result<Vec<T>, TrajectoryError> {
        let w = &self.waypoints;
        let n = w.len();
        if n < 3 {
            return Err(TrajectoryError::TooFewPoints { needed: 3, got: n });
        }
        let eps = T::lit(STATIONARY_SPEED);
        let mut out = vec![T::zero(); n];
        for i in 1..n - 1 {
            out[i] = three_point_curvature(w[i - 1], w[i], w[i + 1], eps);
        }
        out[0] = out[1];
        out[n - 1] = out[n - 2];
        Ok(out)
    }

    /// Arc length, curvature and speed series. Two-point trajectories are
    /// straight and get zero curvature.
    pub fn features(&self) -> Result<TrajectoryFeatures<T>, TrajectoryError> {
        let speed_series = self.speed_series();
        let curvature_series = if self.len() < 3 {
            vec![T::zero(); self.len()]
        } else {
            self.curvature_series()?
        };
        Ok(TrajectoryFeatures {
            length_d: self.arc_length(),
            mean_abs_curvature: mean(&curvature_series),
            curvature_series,
            speed_series,
        })
    }

    /// Writes `t,x,y,z` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrajectoryError> {
        let mut wtr = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| TrajectoryError::Csv(e.to_string());
        wtr.write_record(["t", "x", "y", "z"]).map_err(csv_err)?;
        for w in &self.waypoints {
            wtr.write_record([
                w.time.to_string(),
                w.position.x.to_string(),
                w.position.y.to_string(),
                w.position.z.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| TrajectoryError::Csv(e.to_string()))
    }

    /// Reads the `t,x,y,z` format written by [`Trajectory::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TrajectoryError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| TrajectoryError::Csv(e.to_string()))?
            .clone();
        if headers.iter().take(4).collect::<Vec<_>>() != ["t", "x", "y", "z"] {
            return Err(TrajectoryError::Csv(format!("unexpected header {headers:?}")));
        }
        let mut waypoints = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| TrajectoryError::Csv(e.to_string()))?;
            let field = |i: usize| -> Result<T, TrajectoryError> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .map(T::lit)
                    .ok_or_else(|| TrajectoryError::Csv(format!("bad field {i} in {rec:?}")))
            };
            waypoints.push(Waypoint::new(
                Vec3::new(field(1)?, field(2)?, field(3)?),
                field(0)?,
            ));
        }
        Self::new(waypoints)
    }
}

/// Curvature at `b` of the circle through three timestamped samples.
pub(crate) fn three_point_curvature<T: Real>(
    a: Waypoint<T>,
    b: Waypoint<T>,
    c: Waypoint<T>,
    stationary: T,
) -> T {
    let back = b.position - a.position;
    let fwd = c.position - b.position;
    let chord = c.position - a.position;
    let (lb, lf, lc) = (back.norm(), fwd.norm(), chord.norm());
    let slow = lb / (b.time - a.time) < stationary
        || lf / (c.time - b.time) < stationary
        || lc / (c.time - a.time) < stationary;
    let cross = back.cross(fwd).norm();
    // Collinear up to rounding: sin of the turn angle below 1e-10.
    if slow || cross <= T::lit(1e-10) * lb * lf {
        return T::zero();
    }
    T::lit(2.0) * cross / (lb * lf * lc)
}

/// Curvature of an untimed polyline at each vertex (endpoints copied).
pub fn polyline_curvature<T: Real>(points: &[Vec3<T>]) -> Vec<T> {
    let n = points.len();
    if n < 3 {
        return vec![T::zero(); n];
    }
    let tiny = T::lit(1e-12);
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        let back = points[i] - points[i - 1];
        let fwd = points[i + 1] - points[i];
        let chord = points[i + 1] - points[i - 1];
        let denom = back.norm() * fwd.norm() * chord.norm();
        out[i] = if denom > tiny {
            T::lit(2.0) * back.cross(fwd).norm() / denom
        } else {
            T::zero()
        };
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

/// Averages consecutive blocks of `1 / interval` samples (one block per second).
pub fn per_second_mean<T: Real>(series: &[T], interval: T) -> Vec<T> {
    let per = (T::one() / interval).round().to_usize().unwrap_or(1).max(1);
    series.chunks(per).map(mean).collect()
}

pub(crate) fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        T::zero()
    } else {
        xs.iter().copied().sum::<T>() / T::from_usize(xs.len()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize, dt: f64, v: f64) -> Trajectory<f64> {
        let pts: Vec<_> = (0..n)
            .map(|i| Vec3::new(v * dt * i as f64, 0.0, 2.0))
            .collect();
        Trajectory::from_uniform(&pts, 0.0, dt).unwrap()
    }

    fn circle(radius: f64, speed: f64, dt: f64, duration: f64) -> Trajectory<f64> {
        let n = (duration / dt).round() as usize + 1;
        let w = speed / radius;
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let th = w * dt * i as f64;
                Vec3::new(radius * th.cos(), radius * th.sin(), 5.0)
            })
            .collect();
        Trajectory::from_uniform(&pts, 0.0, dt).unwrap()
    }

    #[test]
    fn rejects_non_monotone_time() {
        let w = vec![
            Waypoint::new(Vec3::zero(), 0.0),
            Waypoint::new(Vec3::new(1.0, 0.0, 0.0), 1.0),
            Waypoint::new(Vec3::new(2.0, 0.0, 0.0), 1.0),
        ];
        assert_eq!(
            Trajectory::new(w),
            Err(TrajectoryError::NonMonotoneTime { index: 2 })
        );
    }

    #[test]
    fn rejects_single_point() {
        let w = vec![Waypoint::new(Vec3::<f64>::zero(), 0.0)];
        assert!(matches!(
            Trajectory::new(w),
            Err(TrajectoryError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn resample_identity_on_matching_interval() {
        let t = Trajectory::new(vec![
            Waypoint::new(Vec3::zero(), 0.0),
            Waypoint::new(Vec3::new(10.0, 0.0, 0.0), 10.0),
        ])
        .unwrap();
        assert_eq!(t.resample(10.0).unwrap(), t);
    }

    #[test]
    fn resample_straight_segment() {
        let t = Trajectory::new(vec![
            Waypoint::new(Vec3::zero(), 0.0),
            Waypoint::new(Vec3::new(10.0, 0.0, 0.0), 10.0),
        ])
        .unwrap();
        let r = t.resample(1.0).unwrap();
        assert_eq!(r.len(), 11);
        for (i, w) in r.waypoints().iter().enumerate() {
            assert!((w.position.x - i as f64).abs() < 1e-12);
            assert_eq!(w.position.y, 0.0);
            assert!((w.time - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_rejects_bad_interval() {
        assert_eq!(line(5, 1.0, 1.0).resample(0.0), Err(TrajectoryError::BadInterval));
    }

    #[test]
    fn resampled_arc_keeps_length() {
        // Quarter arc of radius 6 given as 7 coarse waypoints.
        let r = 6.0;
        let pts: Vec<_> = (0..=90)
            .map(|d| {
                let th = (d as f64).to_radians();
                Vec3::new(r * th.cos(), r * th.sin(), 0.0)
            })
            .collect();
        let fine = Trajectory::from_uniform(&pts, 0.0, 0.05).unwrap();
        let resampled = fine.resample(0.1).unwrap();
        let analytic = 2.0 * PI * r * 0.25;
        assert!((resampled.arc_length() - analytic).abs() / analytic < 0.01);
    }

    #[test]
    fn straight_line_has_zero_curvature() {
        let k = line(40, 0.1, 5.0).curvature_series().unwrap();
        assert!(k.iter().all(|&x| x.abs() < 1e-9));
    }

    #[test]
    fn circle_radius_four() {
        let k = circle(4.0, 5.0, 0.1, 8.0).curvature_series().unwrap();
        for x in k {
            assert!((x - 0.25).abs() < 1e-3, "{x}");
        }
    }

    #[test]
    fn helix_curvature_matches_analytic() {
        // r(θ) = (R cos θ, R sin θ, bθ); κ = R / (R² + b²).
        let (radius, b) = (3.0, 1.5);
        let omega = 1.2;
        let dt = 0.1;
        let pts: Vec<_> = (0..80)
            .map(|i| {
                let th = omega * dt * i as f64;
                Vec3::new(radius * th.cos(), radius * th.sin(), b * th)
            })
            .collect();
        let traj = Trajectory::from_uniform(&pts, 0.0, dt).unwrap();
        let expected = radius / (radius * radius + b * b);
        for k in traj.curvature_series().unwrap() {
            assert!((k - expected).abs() < 1e-3, "{k} vs {expected}");
        }
    }

    #[test]
    fn hover_samples_have_zero_curvature() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 5];
        let t = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        assert!(t.curvature_series().unwrap().iter().all(|&k| k == 0.0));
    }

    #[test]
    fn features_straight_forty_meters() {
        let f = line(101, 0.1, 4.0).features().unwrap();
        assert!((f.length_d - 40.0).abs() < 1e-9);
        assert_eq!(f.mean_abs_curvature, 0.0);
        assert!((f.mean_speed() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn features_full_circle() {
        let radius = 5.0;
        let speed = 2.0;
        let t = circle(radius, speed, 0.05, 2.0 * PI * radius / speed);
        let f = t.features().unwrap();
        assert!((f.length_d - 2.0 * PI * radius).abs() / (2.0 * PI * radius) < 1e-3);
        assert!((f.mean_abs_curvature - 0.2).abs() < 1e-3);
    }

    #[test]
    fn features_right_angle_with_arc_between_bounds() {
        // (0,0) -> (10,0) -> arc radius 2 -> (10+2, 10)... built from segments.
        let mut pts = Vec::new();
        let r = 2.0;
        for i in 0..=80 {
            pts.push(Vec3::new(i as f64 * 0.1, 0.0, 0.0));
        }
        for d in 1..=90 {
            let th = (d as f64).to_radians();
            pts.push(Vec3::new(8.0 + r * th.sin(), r - r * th.cos(), 0.0));
        }
        for i in 1..=80 {
            pts.push(Vec3::new(10.0, 2.0 + i as f64 * 0.1, 0.0));
        }
        let t = Trajectory::from_uniform(&pts, 0.0, 0.05).unwrap();
        let f = t.features().unwrap();
        let (end, start) = (t.last(), t.first());
        let manhattan = (end.x - start.x).abs() + (end.y - start.y).abs();
        let euclid = end.distance(start);
        assert!(f.length_d < manhattan && f.length_d > euclid);
        assert!((f.mean_abs_curvature - f.curvature_series.iter().sum::<f64>() / f.curvature_series.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn curvature_needs_three_points() {
        assert!(line(2, 1.0, 1.0).curvature_series().is_err());
    }

    #[test]
    fn per_second_mean_blocks() {
        let s: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 3.0 }).collect();
        assert_eq!(per_second_mean(&s, 0.1), vec![1.0, 3.0]);
    }

    #[test]
    fn csv_round_trip() {
        let t = circle(4.0, 4.0, 0.1, 1.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,x,y,z\n"));
        let back = Trajectory::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn f32_circle_curvature() {
        let pts: Vec<Vec3<f32>> = (0..30)
            .map(|i| {
                let th = 0.1f32 * i as f32;
                Vec3::new(4.0 * th.cos(), 4.0 * th.sin(), 0.0)
            })
            .collect();
        let t = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        for k in t.curvature_series().unwrap() {
            assert!((k - 0.25).abs() < 1e-3);
        }
    }
}
