use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::{debug, warn};
use wait_timeout::ChildExt;

use super::backends::{command, parse_solution, Files};
use super::{relative_gap, write_model, Backend, SolveOutcome, SolveStatus, SolverSpec};
use crate::model::ModelIr;
use crate::{Error, Result};

/// Largest violation accepted in values written after a time limit.
const TIME_LIMIT_VIOLATION: f64 = 1e-4;

/// CBC bundled with the PuLP Python package, used when nothing else is configured.
const PULP_CBC: &str = "/usr/local/lib/python3.10/dist-packages/pulp/solverdir/cbc/linux/i64/cbc";

fn on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

/// Executable for `spec`: the explicit path, the backend's environment
/// variable, `PATH`, then known install locations.
pub fn resolve_executable(spec: &SolverSpec) -> Result<PathBuf> {
    let missing = |what: String| Error::Solver {
        message: what,
        log: None,
    };
    if let Some(p) = &spec.executable {
        return if p.is_file() {
            Ok(p.clone())
        } else {
            Err(missing(format!("solver executable {} not found", p.display())))
        };
    }
    let var = spec.backend.env_var();
    if let Some(p) = std::env::var_os(&var) {
        let p = PathBuf::from(p);
        return if p.is_file() {
            Ok(p)
        } else {
            Err(missing(format!("{var} points to {}, which does not exist", p.display())))
        };
    }
    let caps = spec.backend.capabilities();
    if let Some(p) = caps.executables.iter().find_map(|n| on_path(n)) {
        return Ok(p);
    }
    if spec.backend == Backend::Cbc && Path::new(PULP_CBC).is_file() {
        return Ok(PULP_CBC.into());
    }
    Err(missing(format!(
        "no {} executable found; set {var} or put one of {:?} on PATH",
        spec.backend, caps.executables
    )))
}

fn work_dir(spec: &SolverSpec) -> Result<PathBuf> {
    match &spec.work_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            // the solver runs inside the directory, so relative paths would not resolve
            fs::canonicalize(d).map_err(|e| Error::io(d, e))
        }
        None => {
            let dir = tempfile::Builder::new()
                .prefix("dcfit-solve-")
                .tempdir()
                .map_err(|e| Error::io(std::env::temp_dir(), e))?;
            Ok(dir.keep())
        }
    }
}

/// Writes `ir`, runs the backend on it and reads the result back.
pub fn solve(ir: &ModelIr, spec: &SolverSpec) -> Result<SolveOutcome> {
    spec.validate()?;
    let caps = spec.backend.capabilities();
    if !ir.indicators.is_empty() && !caps.indicators {
        return Err(Error::Unsupported(format!(
            "backend {} does not support the indicator constraints in this model",
            spec.backend
        )));
    }
    let exe = resolve_executable(spec)?;
    let dir = work_dir(spec)?;
    let model = dir.join(format!("model.{}", caps.format.extension()));
    let solution = dir.join("solution.txt");
    let log_path = dir.join("solver.log");
    let aux = dir.join("options.txt");
    let _ = fs::remove_file(&solution);
    write_model(ir, caps.format, &model)?;
    let files = Files {
        model: &model,
        solution: &solution,
        log: &log_path,
        aux: &aux,
    };
    let (args, aux_text) = command(spec, &files);
    if let Some(text) = aux_text {
        fs::write(&aux, text).map_err(|e| Error::io(&aux, e))?;
    }
    // backends that write their own log file get stdout in a separate capture
    let stdout_path = if matches!(spec.backend, Backend::Highs | Backend::Gurobi) {
        dir.join("stdout.txt")
    } else {
        log_path.clone()
    };
    let out = File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
    let err = out.try_clone().map_err(|e| Error::io(&stdout_path, e))?;
    debug!("running {} {}", exe.display(), args.join(" "));

    let started = Instant::now();
    let mut child = Command::new(&exe)
        .args(&args)
        .current_dir(&dir)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .spawn()
        .map_err(|e| Error::Solver {
            message: format!("could not start {}: {e}", exe.display()),
            log: None,
        })?;
    let limit = Duration::from_secs_f64(spec.time_limit + spec.grace);
    let (exit, killed) = match child.wait_timeout(limit).map_err(|e| Error::io(&exe, e))? {
        Some(status) => (Some(status), false),
        None => {
            warn!("{} exceeded the time limit plus grace; killing it", spec.backend);
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let wall_time = started.elapsed().as_secs_f64();

    let read = |p: &Path| fs::read_to_string(p).unwrap_or_default();
    let mut log = read(&log_path);
    if stdout_path != log_path {
        log.push_str(&read(&stdout_path));
    }
    let sol_text = read(&solution);
    let fail = |message: String| Error::Solver {
        message,
        log: Some(log_path.clone()),
    };
    if let Some(status) = exit {
        if !status.success() && sol_text.is_empty() {
            return Err(fail(format!("{} exited with {status} and wrote no solution", spec.backend)));
        }
    }
    let parsed = parse_solution(spec.backend, &sol_text, &log).map_err(|e| match e {
        Error::Solver { message, .. } => fail(message),
        e => e,
    })?;
    let mut status = match parsed.status {
        Some(s) => s,
        None if killed => SolveStatus::Error,
        None => return Err(fail(format!("{} reported no status", spec.backend))),
    };
    if killed && status == SolveStatus::Optimal {
        status = SolveStatus::FeasibleTimeLimit;
    }
    if killed && !status.has_solution() {
        status = SolveStatus::Error;
    }

    let mut values = parsed.values;
    if status.has_solution() {
        let mut missing = 0;
        for v in &ir.variables {
            values.entry(v.name.clone()).or_insert_with(|| {
                missing += 1;
                0.0
            });
        }
        if missing > 0 {
            warn!("{missing} variables absent from the {} solution were set to 0", spec.backend);
        }
    }
    if status == SolveStatus::FeasibleTimeLimit {
        let x: Vec<f64> = ir.variables.iter().map(|v| values[&v.name]).collect();
        let (viol, row) = ir.max_violation(&x);
        if viol > TIME_LIMIT_VIOLATION {
            warn!(
                "{} reported an incumbent but wrote values violating {row} by {viol:e}; keeping only its objective",
                spec.backend
            );
            values.clear();
        }
    }
    let recomputed = (status.has_solution() && !values.is_empty()).then(|| {
        ir.objective
            .iter()
            .map(|&(v, c)| c * values[&ir.variables[v].name])
            .sum::<f64>()
    });
    let objective = recomputed.or(parsed.objective);
    let bound = match status {
        SolveStatus::Optimal => parsed.bound.or(objective),
        _ => parsed.bound,
    };
    let gap = match (objective, bound) {
        (Some(o), Some(b)) if status.has_solution() => Some(relative_gap(o, b)),
        _ => None,
    };
    Ok(SolveOutcome {
        status,
        objective,
        bound,
        gap,
        wall_time,
        values,
        log_path: Some(log_path),
    })
}
