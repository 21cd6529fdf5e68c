//! Power demand from trajectory geometry.
//!
//! Demand is a speed-dependent baseline plus two curvature terms:
//!
//! ```text
//! P = P̃(v) + k_curv·|C| + k_dist_curv·D·mean|C|
//! ```
//!
//! where `|C|` is the curvature magnitude at the current sample, `D` the
//! trajectory length and `mean|C|` the mean curvature magnitude over the
//! trajectory. The closed-form functions are generic over [`Scalar`] so they
//! can be evaluated exactly with rationals.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Scalar};
use crate::trajectory::{Trajectory, TrajectoryError};

#[derive(Debug, Error, PartialEq)]
pub enum PowerModelError {
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Hover-plus-drag quadratic `p0 + p1·v + p2·v²`.
///
/// The defaults are simulation parameters, not measured values: hover sits
/// well under the 16 W cell limit and 8 m/s cruise needs the ultracapacitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams<T> {
    /// Hover power, W.
    pub p0: T,
    /// W per (m/s).
    pub p1: T,
    /// W per (m/s)².
    pub p2: T,
}

impl<T: Real> Default for BaselineParams<T> {
    fn default() -> Self {
        Self {
            p0: T::lit(6.0),
            p1: T::lit(0.5),
            p2: T::lit(0.3),
        }
    }
}

/// Curvature coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandParams<T> {
    /// Coefficient of the per-sample |C|, W·m.
    pub k_curv: T,
    /// Coefficient of D·mean|C|, W (per unit of the dimensionless product).
    pub k_dist_curv: T,
}

/// Named coefficient sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemandPreset {
    /// 1e-4 and 2e-5: the published coefficients.
    Paper,
    /// Both coefficients ×10⁴, so curvature visibly moves demand.
    #[default]
    Scaled,
}

impl<T: Real> DemandParams<T> {
    pub fn paper() -> Self {
        Self {
            k_curv: T::lit(1e-4),
            k_dist_curv: T::lit(2e-5),
        }
    }

    pub fn scaled() -> Self {
        Self {
            k_curv: T::lit(1.0),
            k_dist_curv: T::lit(0.2),
        }
    }

    pub fn from_preset(preset: DemandPreset) -> Self {
        match preset {
            DemandPreset::Paper => Self::paper(),
            DemandPreset::Scaled => Self::scaled(),
        }
    }

    /// Which named set these coefficients are, if any.
    pub fn preset_name(&self) -> &'static str {
        if *self == Self::paper() {
            "paper"
        } else if *self == Self::scaled() {
            "scaled"
        } else {
            "custom"
        }
    }

    pub fn zero() -> Self {
        Self {
            k_curv: T::zero(),
            k_dist_curv: T::zero(),
        }
    }
}

impl<T: Real> Default for DemandParams<T> {
    fn default() -> Self {
        Self::paper()
    }
}

/// `p0 + p1·speed + p2·speed²`.
pub fn baseline_power<T: Scalar>(speed: T, params: &BaselineParams<T>) -> Result<T, PowerModelError> {
    if speed < T::zero() {
        return Err(PowerModelError::NegativeSpeed(format!("{speed:?}")));
    }
    Ok(params.p0 + params.p1 * speed + params.p2 * speed * speed)
}

/// Baseline plus the two curvature terms. Inputs are expected non-negative.
pub fn instant_demand<T: Scalar>(
    baseline: T,
    abs_curvature: T,
    length_d: T,
    mean_abs_curvature: T,
    params: &DemandParams<T>,
) -> T {
    debug_assert!(abs_curvature >= T::zero() && length_d >= T::zero());
    baseline + params.k_curv * abs_curvature + params.k_dist_curv * length_d * mean_abs_curvature
}

/// Per-sample demand and its integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile<T> {
    pub start_time: T,
    pub interval: T,
    /// W per sample.
    pub samples: Vec<T>,
    /// J, left-rectangle rule.
    pub total_energy: T,
}

impl<T: Real> DemandProfile<T> {
    /// Constant demand over `duration` seconds at `interval`.
    pub fn constant(power: T, duration: T, interval: T) -> Self {
        let n = (duration / interval).round().to_usize().unwrap_or(0) + 1;
        Self::from_samples(T::zero(), interval, vec![power; n.max(2)])
    }

    pub fn from_samples(start_time: T, interval: T, samples: Vec<T>) -> Self {
        let total_energy = left_rectangle(&samples, interval);
        Self {
            start_time,
            interval,
            samples,
            total_energy,
        }
    }

    pub fn peak(&self) -> T {
        self.samples.iter().copied().fold(T::zero(), T::max)
    }

    pub fn mean(&self) -> T {
        crate::trajectory::mean(&self.samples)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PowerModelError> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| PowerModelError::Csv(e.to_string());
        wtr.write_record(["t", "demand_w"]).map_err(err)?;
        for (i, d) in self.samples.iter().enumerate() {
            let t = self.start_time + self.interval * T::from_usize(i).unwrap();
            wtr.write_record([t.to_string(), d.to_string()]).map_err(err)?;
        }
        wtr.flush().map_err(|e| PowerModelError::Csv(e.to_string()))
    }
}

/// `Σ_{i<n-1} samples[i]·dt`.
fn left_rectangle<T: Real>(samples: &[T], dt: T) -> T {
    if samples.len() < 2 {
        return T::zero();
    }
    samples[..samples.len() - 1].iter().map(|&p| p * dt).sum()
}

/// Demand at every sample of a uniformly sampled trajectory.
pub fn demand_profile<T: Real>(
    trajectory: &Trajectory<T>,
    base: &BaselineParams<T>,
    dem: &DemandParams<T>,
) -> Result<DemandProfile<T>, PowerModelError> {
    let features = trajectory.features()?;
    let interval = trajectory.duration() / T::from_usize(trajectory.len() - 1).unwrap();
    let samples = features
        .speed_series
        .iter()
        .zip(&features.curvature_series)
        .map(|(&v, &k)| {
            let b = baseline_power(v, base)?;
            Ok(instant_demand(
                b,
                k,
                features.length_d,
                features.mean_abs_curvature,
                dem,
            ))
        })
        .collect::<Result<Vec<_>, PowerModelError>>()?;
    Ok(DemandProfile::from_samples(trajectory.start_time(), interval, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn spec_base() -> BaselineParams<f64> {
        BaselineParams {
            p0: 60.0,
            p1: 2.0,
            p2: 0.5,
        }
    }

    #[test]
    fn baseline_examples() {
        let p = spec_base();
        assert_eq!(baseline_power(0.0, &p).unwrap(), 60.0);
        assert_eq!(baseline_power(4.0, &p).unwrap(), 76.0);
        assert_eq!(baseline_power(8.0, &p).unwrap(), 108.0);
    }

    #[test]
    fn baseline_rejects_negative_speed() {
        assert!(matches!(
            baseline_power(-1.0, &spec_base()),
            Err(PowerModelError::NegativeSpeed(_))
        ));
    }

    #[test]
    fn instant_demand_identity_without_curvature() {
        assert_eq!(instant_demand(50.0, 0.0, 0.0, 0.3, &DemandParams::paper()), 50.0);
    }

    #[test]
    fn instant_demand_scaled_coefficients() {
        let d: f64 = instant_demand(50.0, 0.5, 40.0, 0.3, &DemandParams::scaled());
        assert!((d - 52.9).abs() < 1e-12);
    }

    #[test]
    fn hover_profile() {
        let pts = vec![Vec3::new(0.0, 0.0, 5.0); 101];
        let t = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        let prof = demand_profile(&t, &spec_base(), &DemandParams::paper()).unwrap();
        assert!(prof.samples.iter().all(|&d| d == 60.0));
        assert!((prof.total_energy - 600.0).abs() < 1e-9);
    }

    #[test]
    fn straight_cruise_profile() {
        let pts: Vec<_> = (0..=100).map(|i| Vec3::new(0.4 * i as f64, 0.0, 2.0)).collect();
        let t = Trajectory::from_uniform(&pts, 0.0, 0.1).unwrap();
        let prof = demand_profile(&t, &spec_base(), &DemandParams::paper()).unwrap();
        for d in &prof.samples {
            assert!((d - 76.0).abs() < 1e-9);
        }
        assert!((prof.total_energy - 760.0).abs() < 1e-6);
    }

    #[test]
    fn profile_csv_header() {
        let prof = DemandProfile::constant(10.0, 1.0, 0.5);
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,demand_w\n0,10\n0.5,10\n1,10\n");
    }
}
