//! Local hidden-variable models of Bell tests and entanglement swapping
//! with lossy detectors: trial generators, analytic references, counting
//! estimators and a deterministic quadrature oracle.
//!
//! The geometry, models and oracle are generic over the float type; the
//! aliases below fix it to `f64` (and `f32` where useful).

pub mod analytic;
pub mod error;
pub mod estimators;
pub mod models;
pub mod oracle;
pub mod runner;
pub mod scalar;
pub mod settings;
pub mod sphere;

pub use error::{Error, Result};
pub use models::{BellOutcome, DetectorOutcome, Model, TrialRecord};
pub use oracle::SphereGrid;
pub use scalar::Real;
pub use settings::{AnglePair, BobSweep, SweepPlane};
pub use sphere::{AxisRotation, RandomStream, UnitVec3};

pub type UnitVec3F64 = sphere::UnitVec3<f64>;
pub type UnitVec3F32 = sphere::UnitVec3<f32>;
pub type ModelF64 = models::Model<f64>;
pub type ModelF32 = models::Model<f32>;
pub type SettingPairF64 = models::SettingPair<f64>;
pub type SinusoidFitF64 = estimators::SinusoidFit<f64>;
pub type PartialSwapOracleF64 = oracle::PartialSwapOracle<f64>;
pub type FidelityOracleF64 = oracle::FidelityOracle<f64>;
