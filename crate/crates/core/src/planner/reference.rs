//! The trajectory a UAV is currently tracking, with amended samples marked.

use std::io::Write;

use crate::geom::Vec3;
use crate::trajectory::{Trajectory, TrajectoryError, Waypoint};

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    traj: Trajectory<f64>,
    amended: Vec<bool>,
}

impl Reference {
    pub fn new(traj: Trajectory<f64>) -> Self {
        let amended = vec![false; traj.len()];
        Self { traj, amended }
    }

    pub fn trajectory(&self) -> &Trajectory<f64> {
        &self.traj
    }

    pub fn amended(&self) -> &[bool] {
        &self.amended
    }

    pub fn position_at(&self, t: f64) -> Vec3<f64> {
        self.traj.position_at(t)
    }

    /// Zero after the end, like the UAV holding the goal.
    pub fn velocity_at(&self, t: f64) -> Vec3<f64> {
        let (t0, t1) = (self.traj.start_time(), self.traj.end_time());
        if t >= t1 || t < t0 {
            return Vec3::zero();
        }
        let h = 0.05;
        let (a, b) = ((t - h).max(t0), (t + h).min(t1));
        (self.traj.position_at(b) - self.traj.position_at(a)) / (b - a)
    }

    pub fn end_time(&self) -> f64 {
        self.traj.end_time()
    }

    /// Inserts `amendment` from its start time; the old reference resumes at
    /// its own time `resume_at`, shifted to follow the amendment's end.
    pub fn splice(&self, amendment: &Trajectory<f64>, resume_at: f64) -> Self {
        let t_in = amendment.start_time();
        let shift = amendment.end_time() - resume_at;
        let mut wps = Vec::new();
        let mut flags = Vec::new();
        for (w, &f) in self.traj.waypoints().iter().zip(&self.amended) {
            if w.time < t_in - 1e-9 {
                wps.push(*w);
                flags.push(f);
            }
        }
        for w in amendment.waypoints() {
            wps.push(*w);
            flags.push(true);
        }
        for (w, &f) in self.traj.waypoints().iter().zip(&self.amended) {
            if w.time > resume_at + 1e-9 {
                wps.push(Waypoint::new(w.position, w.time + shift));
                flags.push(f);
            }
        }
        Self {
            traj: Trajectory::new(wps).expect("splice keeps times increasing"),
            amended: flags,
        }
    }

    /// Keeps the history before `tail` and replaces everything after it.
    pub fn replace_tail(&self, tail: &Trajectory<f64>) -> Self {
        let t_in = tail.start_time();
        let mut wps = Vec::new();
        let mut flags = Vec::new();
        for (w, &f) in self.traj.waypoints().iter().zip(&self.amended) {
            if w.time < t_in - 1e-9 {
                wps.push(*w);
                flags.push(f);
            }
        }
        wps.extend_from_slice(tail.waypoints());
        flags.extend(std::iter::repeat_n(false, tail.len()));
        Self {
            traj: Trajectory::new(wps).expect("tail starts after history"),
            amended: flags,
        }
    }

    /// `t,x,y,z,amended` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrajectoryError> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| TrajectoryError::Csv(e.to_string());
        wtr.write_record(["t", "x", "y", "z", "amended"]).map_err(err)?;
        for (w, a) in self.traj.waypoints().iter().zip(&self.amended) {
            wtr.write_record([
                w.time.to_string(),
                w.position.x.to_string(),
                w.position.y.to_string(),
                w.position.z.to_string(),
                a.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| TrajectoryError::Csv(e.to_string()))
    }
}
