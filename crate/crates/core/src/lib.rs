//! Monte Carlo estimation of light fluence from an optical fiber in a
//! scattering medium, plus recovery of optical coefficients from sparse
//! fluence measurements.

pub mod error;
pub mod geometry;
pub mod inverse;
pub mod grid;
pub mod mc;
pub mod mh;
pub mod optics;
pub mod quad;
pub mod ray;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Direction, Mat3, Vec3};
pub use grid::{FieldTable, FluenceField, VoxelGrid, VoxelIndex, PROBES};
pub use optics::{HenyeyGreenstein, OpticalParams, SourceSpec};
pub use ray::{Ray, WalkPoints, Walker};
pub use rng::{Purpose, SimRng, StreamFamily};
pub use scalar::Real;
pub use mc::{direct_term_oracle, estimate_mc, estimate_mc_some, Scenario, SomeSizes};
pub use mh::{run_chain, ChainState, MhParams, Move};
pub use inverse::{hybrid_descent, sensitivity_scan, DescentOpts, DescentTrace, Measurements, ScanGrid};

/// Double-precision aliases; the estimators also run in `f32`.
pub type Params = OpticalParams<f64>;
pub type Source = SourceSpec<f64>;
pub type Grid = VoxelGrid<f64>;
pub type Field = FluenceField<f64>;
pub type Setup = Scenario<f64>;
pub type Point = Vec3<f64>;

pub type Params32 = OpticalParams<f32>;
pub type Field32 = FluenceField<f32>;
pub type Setup32 = Scenario<f32>;
