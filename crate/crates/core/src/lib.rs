//! Hybrid fuel-cell/battery/ultracapacitor power supply for agile UAV
//! missions: demand model, power plant, learned predictor, world, planner
//! and evaluation metrics.
//!
//! The numeric core is generic over the scalar type; the aliases at the crate
//! root fix it to `f64` (and `f32` where that is useful).

pub mod benchmark;
pub mod geom;
pub mod metrics;
pub mod planner;
pub mod plant;
pub mod powermodel;
pub mod predictor;
pub mod scalar;
pub mod trajectory;
pub mod world;

pub use scalar::{Real, Scalar};

pub type Vec3 = geom::Vec3<f64>;
pub type Trajectory = trajectory::Trajectory<f64>;
pub type TrajectoryF32 = trajectory::Trajectory<f32>;
pub type Waypoint = trajectory::Waypoint<f64>;
pub type BaselineParams = powermodel::BaselineParams<f64>;
pub type DemandParams = powermodel::DemandParams<f64>;
pub type DemandProfile = powermodel::DemandProfile<f64>;
pub type PlantSpec = plant::PlantSpec<f64>;
pub type PlantState = plant::PlantState<f64>;
pub type AllocationDecision = plant::AllocationDecision<f64>;
pub type AgilityReport = metrics::AgilityReport<f64>;
pub type NormRefs = metrics::NormRefs<f64>;
pub type PredictorModel = predictor::PredictorModel<f64>;
pub type LabeledDataset = predictor::LabeledDataset<f64>;
