//! Continuous piecewise-linear (CPWL) fitting of scattered data through a
//! difference-of-convex mixed-integer formulation, with the tightening
//! machinery that makes it tractable: tight big-M values and variable bounds
//! from an enumeration of extreme affine interpolants, symmetry-breaking
//! constraints, point-count constraints and optional geometric cuts.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads, generates and rescales point sets;
//! * [`cpwl`] evaluates and verifies DC functions;
//! * [`preprocess`] enumerates extreme affine functions and derives big-M values and bounds;
//! * [`model`] builds the solver-agnostic MILP;
//! * [`solver`] writes MPS/LP files and drives an external MILP solver;
//! * [`wellbehave`] tilts under-determined pieces of a fit;
//! * [`pipeline`] ties the above into fit and benchmark runs.

pub mod combin;
pub mod cpwl;
pub mod dataset;
mod error;
pub mod linalg;
pub mod model;
#[cfg(feature = "solver")]
pub mod pipeline;
pub mod preprocess;
pub mod solver;
pub mod wellbehave;

pub use cpwl::{ActivityMap, AffinePiece, ConvexPwl, DcFunction, FitReport};
pub use dataset::{DataSet, ScalingInfo, SyntheticFunction, SyntheticSpec};
pub use error::{Error, Result};
pub use model::{BigMMode, CombinationPreset, FitParams, ModelIr, Objective, TighteningConfig};
pub use preprocess::{BoundsBundle, ExtremeAffineSet};
