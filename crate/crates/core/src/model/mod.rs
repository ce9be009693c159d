//! The fitting MILP: variables, base constraints, objectives, the tightening
//! options and the presets combining them, plus solution extraction.

mod build;
pub mod cuts;
mod extract;
pub mod ir;
pub mod presets;

pub use build::{build, default_big_m, BuildOptions, Built};
pub use cuts::CutReport;
pub use extract::{extract_solution, natural_assignment, normalize, polish, values_by_index, Extracted, CONSISTENCY_TOL};
pub use ir::{Catalog, Constraint, Indicator, ModelIr, ModelStats, Sense, VarKind, Variable};
pub use presets::{
    preset, BigMMode, CombinationPreset, ErrorMeasure, FitParams, Objective, PieceCount, PointsPerPiece, SimplexCuts,
    TighteningConfig,
};
