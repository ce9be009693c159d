//! MILP exchange formats and external solver backends.
//!
//! Models are written to MPS or CPLEX-LP files and handed to a solver
//! executable; the solution file and log are parsed back into a
//! [`SolveOutcome`].

mod backends;
mod lp;
mod mps;
pub mod reader;
#[cfg(feature = "solver")]
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::ModelIr;
use crate::{Error, Result};

pub use backends::{backend_capabilities, parse_solution, Capabilities, FlagMapping};
pub use lp::write_lp;
pub use mps::write_mps;
#[cfg(feature = "solver")]
pub use run::{resolve_executable, solve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Cbc,
    Highs,
    Scip,
    Gurobi,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Cbc, Backend::Highs, Backend::Scip, Backend::Gurobi];

    pub fn id(self) -> &'static str {
        match self {
            Backend::Cbc => "cbc",
            Backend::Highs => "highs",
            Backend::Scip => "scip",
            Backend::Gurobi => "gurobi",
        }
    }

    /// Environment variable overriding the executable path, e.g. `DCFIT_CBC_PATH`.
    pub fn env_var(self) -> String {
        format!("DCFIT_{}_PATH", self.id().to_uppercase())
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown solver backend `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Mps,
    Lp,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Mps => "mps",
            Format::Lp => "lp",
        }
    }

    pub fn supports_indicators(self) -> bool {
        self == Format::Lp
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mps" => Ok(Format::Mps),
            "lp" => Ok(Format::Lp),
            _ => Err(Error::Validation(format!("unknown model format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    pub backend: Backend,
    /// Executable; when unset, the backend's environment variable and then `PATH` are searched.
    pub executable: Option<PathBuf>,
    pub time_limit: f64,
    pub mip_gap: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub threads: Option<usize>,
    /// Directory for model, solution and log files; a fresh kept temporary directory when unset.
    pub work_dir: Option<PathBuf>,
    /// Seconds past the time limit before the process is killed.
    pub grace: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            backend: Backend::Cbc,
            executable: None,
            time_limit: 7200.0,
            mip_gap: 1e-6,
            feasibility_tol: 1e-9,
            integrality_tol: 1e-9,
            threads: None,
            work_dir: None,
            grace: 30.0,
        }
    }
}

impl SolverSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mip_gap >= 0.0) {
            return Err(Error::Validation(format!("mip gap must be >= 0, got {}", self.mip_gap)));
        }
        if !(self.feasibility_tol > 0.0) || !(self.integrality_tol > 0.0) {
            return Err(Error::Validation("solver tolerances must be > 0".into()));
        }
        if !(self.time_limit > 0.0) || !(self.grace >= 0.0) {
            return Err(Error::Validation("time limit must be > 0 and grace >= 0".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("thread count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::FeasibleTimeLimit => "Feasible-TimeLimit",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::Unbounded => "Unbounded",
            SolveStatus::Error => "Error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    /// Seconds spent in the solver process.
    pub wall_time: f64,
    pub values: BTreeMap<String, f64>,
    pub log_path: Option<PathBuf>,
}

/// Relative gap `|obj - bound| / max(|obj|, 1e-10)`.
pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    (objective - bound).abs() / objective.abs().max(1e-10)
}

/// Formats with 17 significant digits.
pub(crate) fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.16e}")
}

pub fn render_model(ir: &ModelIr, format: Format) -> Result<String> {
    match format {
        Format::Mps => write_mps(ir),
        Format::Lp => write_lp(ir),
    }
}

pub fn write_model(ir: &ModelIr, format: Format, path: &Path) -> Result<()> {
    let text = render_model(ir, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_literals_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, -0.0] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn backend_and_format_names() {
        for b in Backend::ALL {
            assert_eq!(b.id().parse::<Backend>().unwrap(), b);
        }
        assert!("glpk".parse::<Backend>().is_err());
        assert_eq!(Backend::Highs.env_var(), "DCFIT_HIGHS_PATH");
        assert_eq!("LP".parse::<Format>().unwrap(), Format::Lp);
    }

    #[test]
    fn spec_defaults_and_validation() {
        let s = SolverSpec::default();
        assert_eq!((s.mip_gap, s.feasibility_tol, s.integrality_tol, s.time_limit), (1e-6, 1e-9, 1e-9, 7200.0));
        s.validate().unwrap();
        let bad = SolverSpec { mip_gap: -1.0, ..s.clone() };
        assert!(bad.validate().is_err());
        let bad = SolverSpec { integrality_tol: 0.0, ..s };
        assert!(bad.validate().is_err());
    }
}
