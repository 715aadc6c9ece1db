//! Reflected Brownian motion in the orthant: model validation, convergence
//! bounds, reflection schemes and Monte Carlo experiments.

pub mod bounds;
pub mod catalog;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod reflect;
pub mod rng;

pub use error::{RbmError, Result};
pub use linalg::Mat;
pub use model::{admissible, derive, validate_params, DerivedModel, ModelParams, ValidationReport};
pub use bounds::{BoundReport, CascadeConstants, ThetaFunctionals};
pub use catalog::{RankBasedSpec, StationaryLaw};
pub use experiments::McEstimate;
pub use reflect::{CoupledRun, SimConfig, Trajectory};
