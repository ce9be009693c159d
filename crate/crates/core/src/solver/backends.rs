use std::collections::BTreeMap;
#[cfg(feature = "solver")]
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, Format, SolveStatus};
#[cfg(feature = "solver")]
use super::{num, SolverSpec};
use crate::{Error, Result};

/// How one [`SolverSpec`] field is passed to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagMapping {
    pub field: String,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub backend: Backend,
    pub indicators: bool,
    pub format: Format,
    /// Executable names searched on `PATH`.
    pub executables: Vec<String>,
    pub flags: Vec<FlagMapping>,
}

fn map(pairs: &[(&str, &str)]) -> Vec<FlagMapping> {
    pairs
        .iter()
        .map(|(f, g)| FlagMapping {
            field: f.to_string(),
            flag: g.to_string(),
        })
        .collect()
}

impl Backend {
    pub fn capabilities(self) -> Capabilities {
        let (indicators, format, exe, flags): (bool, Format, &[&str], _) = match self {
            Backend::Cbc => (
                false,
                Format::Mps,
                &["cbc"],
                map(&[
                    ("time_limit", "-sec"),
                    ("mip_gap", "-ratioGap"),
                    ("feasibility_tol", "-primalTolerance"),
                    ("integrality_tol", "-integerTolerance"),
                    ("threads", "-threads"),
                ]),
            ),
            Backend::Highs => (
                false,
                Format::Mps,
                &["highs"],
                map(&[
                    ("time_limit", "time_limit"),
                    ("mip_gap", "mip_rel_gap"),
                    ("feasibility_tol", "primal_feasibility_tolerance"),
                    ("integrality_tol", "mip_feasibility_tolerance"),
                    ("threads", "threads"),
                ]),
            ),
            Backend::Scip => (
                true,
                Format::Lp,
                &["scip"],
                map(&[
                    ("time_limit", "limits/time"),
                    ("mip_gap", "limits/gap"),
                    ("feasibility_tol", "numerics/feastol"),
                    ("integrality_tol", "numerics/feastol"),
                    ("threads", "parallel/maxnthreads"),
                ]),
            ),
            Backend::Gurobi => (
                true,
                Format::Lp,
                &["gurobi_cl"],
                map(&[
                    ("time_limit", "TimeLimit"),
                    ("mip_gap", "MIPGap"),
                    ("feasibility_tol", "FeasibilityTol"),
                    ("integrality_tol", "IntFeasTol"),
                    ("threads", "Threads"),
                ]),
            ),
        };
        Capabilities {
            backend: self,
            indicators,
            format,
            executables: exe.iter().map(|s| s.to_string()).collect(),
            flags,
        }
    }
}

pub fn backend_capabilities(id: &str) -> Result<Capabilities> {
    Ok(id.parse::<Backend>()?.capabilities())
}

/// Files a backend reads and writes in its working directory.
#[cfg(feature = "solver")]
pub(crate) struct Files<'a> {
    pub model: &'a Path,
    pub solution: &'a Path,
    pub log: &'a Path,
    /// Option or command file, for backends that take one.
    pub aux: &'a Path,
}

/// Command-line arguments, plus the content of the auxiliary file if one is used.
#[cfg(feature = "solver")]
pub(crate) fn command(spec: &SolverSpec, files: &Files<'_>) -> (Vec<String>, Option<String>) {
    let p = |p: &Path| p.display().to_string();
    let (tl, gap, feas, int) = (num(spec.time_limit), num(spec.mip_gap), num(spec.feasibility_tol), num(spec.integrality_tol));
    match spec.backend {
        Backend::Cbc => {
            let mut a = vec![
                p(files.model),
                // -sec counts CPU seconds unless told otherwise
                "-timeMode".into(),
                "elapsed".into(),
                "-sec".into(),
                tl,
                "-ratioGap".into(),
                gap,
                "-allowableGap".into(),
                "0".into(),
                "-primalTolerance".into(),
                feas,
                "-integerTolerance".into(),
                int,
            ];
            if let Some(t) = spec.threads {
                a.extend(["-threads".into(), t.to_string()]);
            }
            a.extend(["-solve".into(), "-solution".into(), p(files.solution)]);
            (a, None)
        }
        Backend::Highs => {
            let mut opts = format!(
                "time_limit = {tl}\nmip_rel_gap = {gap}\nmip_abs_gap = 0\nprimal_feasibility_tolerance = {feas}\nmip_feasibility_tolerance = {int}\nlog_file = {}\n",
                p(files.log)
            );
            if let Some(t) = spec.threads {
                opts.push_str(&format!("threads = {t}\n"));
            }
            let a = vec![
                "--model_file".into(),
                p(files.model),
                "--options_file".into(),
                p(files.aux),
                "--solution_file".into(),
                p(files.solution),
            ];
            (a, Some(opts))
        }
        Backend::Scip => {
            let mut cmds = format!(
                "set limits time {tl}\nset limits gap {gap}\nset numerics feastol {}\n",
                num(spec.feasibility_tol.min(spec.integrality_tol))
            );
            if let Some(t) = spec.threads {
                cmds.push_str(&format!("set parallel maxnthreads {t}\n"));
            }
            cmds.push_str(&format!(
                "read {}\noptimize\nwrite solution {}\nquit\n",
                p(files.model),
                p(files.solution)
            ));
            (vec!["-b".into(), p(files.aux)], Some(cmds))
        }
        Backend::Gurobi => {
            let mut a = vec![
                format!("TimeLimit={tl}"),
                format!("MIPGap={gap}"),
                "MIPGapAbs=0".into(),
                format!("FeasibilityTol={feas}"),
                format!("IntFeasTol={int}"),
                format!("ResultFile={}", p(files.solution)),
                format!("LogFile={}", p(files.log)),
            ];
            if let Some(t) = spec.threads {
                a.push(format!("Threads={t}"));
            }
            a.push(p(files.model));
            (a, None)
        }
    }
}

/// What a backend's solution file and log say.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedSolution {
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub values: BTreeMap<String, f64>,
}

fn bad(backend: Backend, what: &str) -> Error {
    Error::Solver {
        message: format!("malformed {backend} output: {what}"),
        log: None,
    }
}

fn float(tok: &str, backend: Backend) -> Result<f64> {
    tok.parse().map_err(|_| bad(backend, &format!("bad number `{tok}`")))
}

/// Parses a solution file (may be empty when none was written) and the log.
pub fn parse_solution(backend: Backend, solution: &str, log: &str) -> Result<ParsedSolution> {
    let mut out = ParsedSolution::default();
    match backend {
        Backend::Cbc => {
            let mut lines = solution.lines();
            if let Some(head) = lines.next() {
                let time = head.starts_with("Stopped on time") || head.starts_with("Stopped on iterations");
                out.status = Some(if head.starts_with("Optimal") {
                    SolveStatus::Optimal
                } else if head.starts_with("Infeasible") || head.starts_with("Integer infeasible") {
                    SolveStatus::Infeasible
                } else if head.starts_with("Unbounded") {
                    SolveStatus::Unbounded
                } else if time && !head.contains("no integer solution") {
                    SolveStatus::FeasibleTimeLimit
                } else {
                    SolveStatus::Error
                });
                if let Some(v) = head.split("objective value").nth(1) {
                    out.objective = v.split_whitespace().next().map(|t| float(t, backend)).transpose()?;
                }
                if out.status.is_some_and(|s| s.has_solution()) {
                    for line in lines {
                        let toks: Vec<&str> = line.split_whitespace().filter(|t| *t != "**").collect();
                        if toks.len() < 3 {
                            continue;
                        }
                        out.values.insert(toks[1].to_string(), float(toks[2], backend)?);
                    }
                }
            }
            for line in log.lines() {
                let t = line.trim();
                if let Some(v) = t.strip_prefix("Lower bound:") {
                    out.bound = v.trim().parse().ok();
                }
                // the solution file header is unreliable after a time limit
                if let Some(v) = t.strip_prefix("Cbc0005I Partial search - best objective") {
                    if out.status == Some(SolveStatus::FeasibleTimeLimit) {
                        out.objective = v.split_whitespace().next().and_then(|t| t.parse().ok());
                    }
                }
            }
        }
        Backend::Highs => {
            let lines: Vec<&str> = solution.lines().collect();
            let mut i = 0;
            while i < lines.len() {
                let l = lines[i].trim();
                if l == "Model status" {
                    out.status = lines.get(i + 1).map(|s| highs_status(s.trim()));
                    i += 1;
                } else if let Some(v) = l.strip_prefix("Objective ") {
                    out.objective = Some(float(v.trim(), backend)?);
                } else if let Some(n) = l.strip_prefix("# Columns ") {
                    let n: usize = n.trim().parse().map_err(|_| bad(backend, "column count"))?;
                    for row in lines.iter().skip(i + 1).take(n) {
                        let toks: Vec<&str> = row.split_whitespace().collect();
                        if toks.len() < 2 {
                            return Err(bad(backend, "column line"));
                        }
                        out.values.insert(toks[0].to_string(), float(toks[1], backend)?);
                    }
                    break;
                }
                i += 1;
            }
            for line in log.lines() {
                if let Some(v) = line.trim().strip_prefix("Dual bound") {
                    out.bound = v.trim().parse().ok();
                }
            }
        }
        Backend::Scip => {
            for line in solution.lines() {
                let t = line.trim();
                if let Some(s) = t.strip_prefix("solution status:") {
                    out.status = Some(scip_status(s.trim()));
                } else if let Some(v) = t.strip_prefix("objective value:") {
                    out.objective = Some(float(v.trim(), backend)?);
                } else if !t.is_empty() && !t.starts_with("no solution") {
                    let toks: Vec<&str> = t.split_whitespace().collect();
                    if toks.len() >= 2 {
                        out.values.insert(toks[0].to_string(), float(toks[1], backend)?);
                    }
                }
            }
            for line in log.lines() {
                let t = line.trim();
                if let Some(v) = t.strip_prefix("Dual Bound") {
                    out.bound = v.trim().trim_start_matches(':').trim().parse().ok();
                }
                if out.status.is_none() && t.starts_with("SCIP Status") {
                    out.status = Some(scip_status(t));
                }
            }
        }
        Backend::Gurobi => {
            for line in solution.lines() {
                let t = line.trim();
                if let Some(v) = t.strip_prefix("# Objective value =") {
                    out.objective = Some(float(v.trim(), backend)?);
                } else if !t.is_empty() && !t.starts_with('#') {
                    let toks: Vec<&str> = t.split_whitespace().collect();
                    if toks.len() >= 2 {
                        out.values.insert(toks[0].to_string(), float(toks[1], backend)?);
                    }
                }
            }
            for line in log.lines() {
                let t = line.trim();
                if t.starts_with("Optimal solution found") {
                    out.status = Some(SolveStatus::Optimal);
                } else if t.starts_with("Model is infeasible") || t.starts_with("Infeasible model") {
                    out.status = Some(SolveStatus::Infeasible);
                } else if t.starts_with("Model is unbounded") || t.starts_with("Unbounded model") {
                    out.status = Some(SolveStatus::Unbounded);
                } else if t.starts_with("Time limit reached") {
                    out.status = Some(SolveStatus::FeasibleTimeLimit);
                } else if let Some(rest) = t.strip_prefix("Best objective") {
                    // "Best objective 1.0e+00, best bound 1.0e+00, gap 0.0000%"
                    if let Some(b) = rest.split("best bound").nth(1) {
                        out.bound = b.trim().split(',').next().and_then(|v| v.trim().parse().ok());
                    }
                }
            }
            if out.status == Some(SolveStatus::FeasibleTimeLimit) && out.values.is_empty() {
                out.status = Some(SolveStatus::Error);
            }
        }
    }
    Ok(out)
}

fn highs_status(s: &str) -> SolveStatus {
    match s {
        "Optimal" => SolveStatus::Optimal,
        "Infeasible" => SolveStatus::Infeasible,
        "Unbounded" | "Primal unbounded" => SolveStatus::Unbounded,
        "Time limit reached" => SolveStatus::FeasibleTimeLimit,
        _ => SolveStatus::Error,
    }
}

fn scip_status(s: &str) -> SolveStatus {
    let s = s.to_ascii_lowercase();
    if s.contains("optimal") {
        SolveStatus::Optimal
    } else if s.contains("infeasible") {
        SolveStatus::Infeasible
    } else if s.contains("unbounded") {
        SolveStatus::Unbounded
    } else if s.contains("time limit") {
        SolveStatus::FeasibleTimeLimit
    } else {
        SolveStatus::Error
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capability_gate() {
        assert!(!backend_capabilities("cbc").unwrap().indicators);
        assert!(backend_capabilities("gurobi").unwrap().indicators);
        assert!(backend_capabilities("scip").unwrap().indicators);
        assert!(backend_capabilities("cplex").is_err());
    }

    #[test]
    fn capabilities_serialize() {
        for b in Backend::ALL {
            let c = b.capabilities();
            let back: Capabilities = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn cbc_solution_file() {
        let sol = "Optimal - objective value 2.00000000\n      0 del_p_1_1      1     -2\n      1 Q      0.5      0\n**    2 Q2     -3    1\n";
        let log = "Result - Optimal solution found\n\nObjective value:                2.00000000\n";
        let p = parse_solution(Backend::Cbc, sol, log).unwrap();
        assert_eq!(p.status, Some(SolveStatus::Optimal));
        assert_eq!(p.objective, Some(2.0));
        assert_eq!(p.values["Q"], 0.5);
        assert_eq!(p.values["Q2"], -3.0);
        let p = parse_solution(Backend::Cbc, "Infeasible - objective value 0.00000000\n      0 x  0  -1\n", "").unwrap();
        assert_eq!(p.status, Some(SolveStatus::Infeasible));
        assert!(p.values.is_empty());
        let log = "Result - Stopped on time limit\n\nObjective value:                1.5\nLower bound:                    1.2\nGap:                            0.25\n";
        let p = parse_solution(Backend::Cbc, "Stopped on time - objective value 1.5\n 0 x 1.5 0\n", log).unwrap();
        assert_eq!(p.status, Some(SolveStatus::FeasibleTimeLimit));
        assert_eq!(p.bound, Some(1.2));
        let log = format!("Cbc0005I Partial search - best objective 0.0085018923 (best possible 0), took 3 iterations\n{log}");
        let p = parse_solution(Backend::Cbc, "Stopped on time - objective value 0.00000000\n 0 x 1.5 0\n", &log).unwrap();
        assert_eq!(p.objective, Some(0.0085018923));
    }

    #[test]
    fn highs_solution_file() {
        let sol = "Model status\nOptimal\n\n# Primal solution values\nFeasible\nObjective 1.5\n# Columns 2\nx 1\ny 0.5\n# Rows 1\nr1 1.5\n";
        let p = parse_solution(Backend::Highs, sol, "").unwrap();
        assert_eq!(p.status, Some(SolveStatus::Optimal));
        assert_eq!(p.objective, Some(1.5));
        assert_eq!(p.values.len(), 2);
        assert_eq!(p.values["y"], 0.5);
    }

    #[test]
    fn scip_solution_file() {
        let sol = "solution status: optimal solution found\nobjective value:                                    2\nx                                                   1 \t(obj:2)\n";
        let p = parse_solution(Backend::Scip, sol, "").unwrap();
        assert_eq!(p.status, Some(SolveStatus::Optimal));
        assert_eq!(p.values["x"], 1.0);
        let p = parse_solution(Backend::Scip, "solution status: infeasible\nno solution available\n", "").unwrap();
        assert_eq!(p.status, Some(SolveStatus::Infeasible));
    }

    #[test]
    fn gurobi_solution_file() {
        let sol = "# Solution for model toy\n# Objective value = 2\nx 1\ny 0\n";
        let log = "Explored 0 nodes\n\nOptimal solution found (tolerance 1.00e-06)\nBest objective 2.000000000000e+00, best bound 2.000000000000e+00, gap 0.0000%\n";
        let p = parse_solution(Backend::Gurobi, sol, log).unwrap();
        assert_eq!(p.status, Some(SolveStatus::Optimal));
        assert_eq!(p.objective, Some(2.0));
        assert_eq!(p.bound, Some(2.0));
        assert_eq!(p.values["x"], 1.0);
    }

    #[cfg(feature = "solver")]
    #[test]
    fn cbc_command_maps_every_field() {
        let spec = SolverSpec {
            threads: Some(2),
            ..SolverSpec::default()
        };
        let files = Files {
            model: Path::new("m.mps"),
            solution: Path::new("s.txt"),
            log: Path::new("l.txt"),
            aux: Path::new("a.txt"),
        };
        let (args, aux) = command(&spec, &files);
        assert!(aux.is_none());
        for f in &Backend::Cbc.capabilities().flags {
            assert!(args.contains(&f.flag), "{}", f.flag);
        }
        let (_, aux) = command(&SolverSpec { backend: Backend::Highs, ..spec }, &files);
        let aux = aux.unwrap();
        for f in &Backend::Highs.capabilities().flags {
            assert!(aux.contains(&f.flag), "{}", f.flag);
        }
    }
}
