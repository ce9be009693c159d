//! End-to-end runs: load or generate data, rescale, preprocess, build,
//! solve, extract and verify; and the multi-combination benchmark.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpwl::{verify_eps_approx, DcFunction, FitReport};
use crate::dataset::{generate, load_csv, rescale, DataSet, ScalingInfo, SyntheticSpec};
use crate::model::{
    build, extract_solution, polish, preset, values_by_index, BuildOptions, CutReport, FitParams, ModelStats, Objective,
    TighteningConfig,
};
use crate::preprocess::{cache_key, preprocess, BoundsBundle, Extrema};
use crate::solver::{render_model, solve, SolveStatus, SolverSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
    #[serde(skip)]
    Inline(DataSet),
}

impl DataSource {
    pub fn load(&self) -> Result<DataSet> {
        match self {
            DataSource::Csv(p) => load_csv(p),
            DataSource::Synthetic(spec) => generate(spec),
            DataSource::Inline(ds) => Ok(ds.clone()),
        }
    }
}

fn yes() -> bool {
    true
}

fn default_objective() -> Objective {
    Objective::MaxError
}

/// One fit or benchmark run, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(flatten)]
    pub params: FitParams,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    /// Combination id such as `C9`; ignored when `tightening` is set.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub tightening: Option<TighteningConfig>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Reuse preprocessing results stored under `<output>/cache`.
    #[serde(default = "yes")]
    pub cache: bool,
    /// Map every coordinate and `z` onto `[0, 1]` before fitting.
    #[serde(default = "yes")]
    pub rescale: bool,
    /// Combinations run by `bench`.
    #[serde(default)]
    pub combinations: Vec<String>,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub build: BuildOptions,
}

impl RunConfig {
    pub fn new(data: DataSource, params: FitParams) -> Self {
        Self {
            data,
            params,
            objective: Objective::MaxError,
            preset: None,
            tightening: None,
            solver: SolverSpec::default(),
            output: None,
            cache: true,
            rescale: true,
            combinations: Vec::new(),
            parallel: false,
            build: BuildOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn tightening(&self) -> Result<TighteningConfig> {
        match (&self.tightening, &self.preset) {
            (Some(t), _) => Ok(*t),
            (None, Some(id)) => preset(id),
            (None, None) => preset("C1"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.solver.validate()?;
        self.tightening()?;
        for c in &self.combinations {
            preset(c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess: f64,
    pub build: f64,
    pub solve: f64,
}

/// Problem as the solver saw it: rescaled data and tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub original: DataSet,
    pub data: DataSet,
    pub scaling: ScalingInfo,
    pub params: FitParams,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.params.validate()?;
    let original = cfg.data.load()?;
    let (data, scaling) = if cfg.rescale {
        rescale(&original)
    } else {
        (original.clone(), ScalingInfo::identity(original.dim()))
    };
    if scaling.has_warning() {
        warn!("constant coordinates left unscaled: {:?}", scaling.degenerate);
    }
    let params = FitParams {
        eps: cfg.params.eps / scaling.z_scale,
        ..cfg.params
    };
    Ok(Prepared {
        original,
        data,
        scaling,
        params,
    })
}

fn to_extrema(b: &BoundsBundle) -> Extrema {
    Extrema {
        eps: b.eps,
        gmin: b.gmin.clone(),
        gmax: b.gmax.clone(),
        a_lo: b.a_lo.clone(),
        a_hi: b.a_hi.clone(),
        b_lo: b.b_lo,
        b_hi: b.b_hi,
        raw_count: b.raw_count,
    }
}

/// Bounds for `prep`, read from or stored in `cache_dir` when given.
/// Returns the bundle and the seconds spent computing it (0 on a cache hit).
pub fn bounds_for(prep: &Prepared, cache_dir: Option<&Path>) -> Result<(BoundsBundle, f64)> {
    let FitParams { eps, pp, pm } = prep.params;
    let path = cache_dir.map(|d| d.join(format!("bounds-{}.json", cache_key(&prep.data, eps))));
    if let Some(p) = path.as_ref().filter(|p| p.is_file()) {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        match BoundsBundle::from_json(&text) {
            Ok(b) if b.len() == prep.data.len() && b.dim() == prep.data.dim() => {
                info!("bounds cache hit: {}", p.display());
                return Ok((BoundsBundle::new(&to_extrema(&b), pp, pm), 0.0));
            }
            _ => warn!("ignoring unusable bounds cache {}", p.display()),
        }
    }
    let pre = preprocess(&prep.data, eps)?;
    let bundle = BoundsBundle::new(&pre.extrema, pp, pm);
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(p, bundle.to_json()).map_err(|e| Error::io(p, e))?;
    }
    Ok((bundle, pre.seconds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub status: SolveStatus,
    /// Fitted function in original units.
    pub function: Option<DcFunction>,
    /// Fitted function on the rescaled data.
    pub scaled_function: Option<DcFunction>,
    /// Objective in original units.
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    /// Verification against the original data.
    pub fit: Option<FitReport>,
    pub timings: Timings,
    pub stats: ModelStats,
    pub cuts: CutReport,
    pub scaling: ScalingInfo,
    /// Per-point big-M values used by the model, `[plus, minus]`.
    pub big_m: [Vec<f64>; 2],
    /// SHA-256 of the model as written for the solver.
    pub model_sha256: String,
    pub log_path: Option<PathBuf>,
}

/// Objective value in original units.
fn unscale_objective(obj: Objective, v: f64, z_scale: f64) -> f64 {
    match obj {
        Objective::MaxError | Objective::MeanError => v * z_scale,
        _ => v,
    }
}

/// Builds and solves one combination on prepared data.
pub fn fit_prepared(
    prep: &Prepared,
    objective: Objective,
    cfg: &TighteningConfig,
    bounds: Option<&BoundsBundle>,
    solver: &SolverSpec,
    opts: &BuildOptions,
    preprocess_seconds: f64,
) -> Result<FitOutcome> {
    let caps = solver.backend.capabilities();
    let opts = BuildOptions {
        indicator_support: caps.indicators,
        ..opts.clone()
    };
    let t = Instant::now();
    let built = build(&prep.data, &prep.params, objective, cfg, bounds, &opts)?;
    let build_seconds = t.elapsed().as_secs_f64();
    let text = render_model(&built.ir, caps.format)?;
    let model_sha256 = hex::encode(Sha256::digest(text.as_bytes()));

    let out = solve(&built.ir, solver)?;
    let timings = Timings {
        preprocess: preprocess_seconds,
        build: build_seconds,
        solve: out.wall_time,
    };
    let z_scale = prep.scaling.z_scale;
    let mut result = FitOutcome {
        status: out.status,
        function: None,
        scaled_function: None,
        objective: out.objective.map(|v| unscale_objective(objective, v, z_scale)),
        bound: out.bound.map(|v| unscale_objective(objective, v, z_scale)),
        gap: out.gap,
        fit: None,
        timings,
        stats: built.ir.stats(),
        cuts: built.cuts.clone(),
        scaling: prep.scaling.clone(),
        big_m: built.big_m.clone(),
        model_sha256,
        log_path: out.log_path.clone(),
    };
    if !out.status.has_solution() || out.values.is_empty() {
        return Ok(result);
    }
    let values: HashMap<String, f64> = out.values.into_iter().collect();
    let (raw, _) = values_by_index(&built.ir, &values);
    let x = match polish(&built.ir, &raw) {
        Ok(x) => x,
        Err(e) => {
            warn!("keeping the solver's continuous values: {e}");
            raw
        }
    };
    let ex = extract_solution(&built.ir, &prep.data, &x)?;
    let function = ex.function.unscale(&prep.scaling);
    let report = verify_eps_approx(&function, &prep.original, prep.params.eps * z_scale);
    if out.status == SolveStatus::Optimal && !report.feasible {
        return Err(Error::Inconsistent {
            message: format!(
                "optimal solution fails verification at points {:?}",
                report.violations.iter().map(|i| i + 1).collect::<Vec<_>>()
            ),
            violation: report.max_error - report.eps,
        });
    }
    result.objective = Some(unscale_objective(objective, ex.objective, z_scale));
    result.scaled_function = Some(ex.function);
    result.function = Some(function);
    result.fit = Some(report);
    Ok(result)
}

fn cache_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.cache.then(|| cfg.output.as_ref().map(|o| o.join("cache"))).flatten()
}

/// `fit`: the full pipeline for one configuration.
pub fn fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let tight = cfg.tightening()?;
    let (bounds, pre_seconds) = if tight.needs_bounds() {
        let (b, s) = bounds_for(&prep, cache_dir(cfg).as_deref())?;
        (Some(b), s)
    } else {
        (None, 0.0)
    };
    let mut solver = cfg.solver.clone();
    if solver.work_dir.is_none() {
        solver.work_dir = cfg.output.as_ref().map(|o| o.join("solver"));
    }
    let opts = BuildOptions {
        name: prep.original.name.clone(),
        ..cfg.build.clone()
    };
    fit_prepared(&prep, cfg.objective, &tight, bounds.as_ref(), &solver, &opts, pre_seconds)
}

/// Writes `fit.json` (when a function was found), `report.json` and a copy of the solver log.
pub fn write_fit_artifacts(out: &FitOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(f) = &out.function {
        let p = dir.join("fit.json");
        fs::write(&p, f.to_json()).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join("report.json");
    fs::write(&p, serde_json::to_string_pretty(out)?).map_err(|e| Error::io(&p, e))?;
    if let Some(log) = out.log_path.as_ref().filter(|l| l.is_file()) {
        let dst = dir.join("solver.log");
        if log != &dst {
            fs::copy(log, &dst).map_err(|e| Error::io(&dst, e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub combination: String,
    pub preprocess_seconds: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    pub stats: Option<ModelStats>,
    pub model_sha256: Option<String>,
    /// Verified max error in original units.
    pub max_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub points: usize,
    pub dim: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub backend: String,
    pub executable: Option<PathBuf>,
    pub version: String,
}

impl Environment {
    fn capture(spec: &SolverSpec) -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            backend: spec.backend.to_string(),
            executable: crate::solver::resolve_executable(spec).ok(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: DatasetMeta,
    pub params: FitParams,
    pub objective: Objective,
    pub mip_gap: f64,
    pub time_limit: f64,
    /// Shared preprocessing time.
    pub preprocess_seconds: f64,
    pub rows: Vec<BenchRow>,
    /// Whether all Optimal rows agree within `10 * mip_gap * |obj|`.
    pub agreement: bool,
    /// Pairs of combinations whose optimal objectives disagree.
    pub disagreements: Vec<(String, String)>,
    pub environment: Environment,
}

/// Absolute slack added to the agreement tolerance so that zero objectives compare equal.
pub const AGREEMENT_FLOOR: f64 = 1e-9;

pub fn objectives_agree(a: f64, b: f64, mip_gap: f64) -> bool {
    (a - b).abs() <= 10.0 * mip_gap * a.abs().max(b.abs()) + AGREEMENT_FLOOR
}

fn disagreements(rows: &[BenchRow], mip_gap: f64) -> Vec<(String, String)> {
    let opt: Vec<(&str, f64)> = rows
        .iter()
        .filter(|r| r.status == SolveStatus::Optimal)
        .filter_map(|r| Some((r.combination.as_str(), r.objective?)))
        .collect();
    let mut out = Vec::new();
    for (i, &(a, va)) in opt.iter().enumerate() {
        for &(b, vb) in &opt[i + 1..] {
            if !objectives_agree(va, vb, mip_gap) {
                out.push((a.to_string(), b.to_string()));
            }
        }
    }
    out
}

fn bench_row(
    prep: &Prepared,
    cfg: &RunConfig,
    combo: &str,
    bounds: Option<&BoundsBundle>,
    pre_seconds: f64,
) -> BenchRow {
    let mut row = BenchRow {
        combination: combo.to_string(),
        preprocess_seconds: 0.0,
        build_seconds: 0.0,
        solve_seconds: 0.0,
        status: SolveStatus::Error,
        objective: None,
        gap: None,
        stats: None,
        model_sha256: None,
        max_error: None,
        error: None,
    };
    let run = || -> Result<FitOutcome> {
        let tight = preset(combo)?;
        let b = if tight.needs_bounds() { bounds } else { None };
        let mut solver = cfg.solver.clone();
        solver.work_dir = match (&cfg.output, &cfg.solver.work_dir) {
            (Some(o), _) => Some(o.join(combo)),
            (None, Some(w)) => Some(w.join(combo)),
            (None, None) => None,
        };
        let opts = BuildOptions {
            name: format!("{}_{combo}", prep.original.name),
            ..cfg.build.clone()
        };
        let pre = if b.is_some() { pre_seconds } else { 0.0 };
        fit_prepared(prep, cfg.objective, &tight, b, &solver, &opts, pre)
    };
    match run() {
        Ok(out) => {
            row.preprocess_seconds = out.timings.preprocess;
            row.build_seconds = out.timings.build;
            row.solve_seconds = out.timings.solve;
            row.status = out.status;
            row.objective = out.objective;
            row.gap = out.gap;
            row.stats = Some(out.stats);
            row.model_sha256 = Some(out.model_sha256);
            row.max_error = out.fit.map(|f| f.max_error);
        }
        Err(e) => {
            warn!("combination {combo} failed: {e}");
            row.error = Some(e.to_string());
        }
    }
    row
}

/// `bench`: every combination in `cfg.combinations` on one instance, sharing
/// the preprocessing result.
pub fn bench(cfg: &RunConfig) -> Result<BenchReport> {
    if cfg.combinations.is_empty() {
        return Err(Error::Validation("bench needs at least one combination".into()));
    }
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let needs = cfg
        .combinations
        .iter()
        .map(|c| preset(c).map(|t| t.needs_bounds()))
        .collect::<Result<Vec<_>>>()?;
    let (bounds, pre_seconds) = if needs.iter().any(|&b| b) {
        let (b, s) = bounds_for(&prep, cache_dir(cfg).as_deref())?;
        (Some(b), s)
    } else {
        (None, 0.0)
    };
    let rows: Vec<BenchRow> = if cfg.parallel {
        run_rows_parallel(&prep, cfg, bounds.as_ref(), pre_seconds)
    } else {
        cfg.combinations
            .iter()
            .map(|c| bench_row(&prep, cfg, c, bounds.as_ref(), pre_seconds))
            .collect()
    };
    let disagreements = disagreements(&rows, cfg.solver.mip_gap);
    Ok(BenchReport {
        dataset: DatasetMeta {
            name: prep.original.name.clone(),
            points: prep.original.len(),
            dim: prep.original.dim(),
            sha256: hex::encode(Sha256::digest(prep.original.canonical_bytes())),
        },
        params: cfg.params,
        objective: cfg.objective,
        mip_gap: cfg.solver.mip_gap,
        time_limit: cfg.solver.time_limit,
        preprocess_seconds: pre_seconds,
        agreement: disagreements.is_empty(),
        disagreements,
        rows,
        environment: Environment::capture(&cfg.solver),
    })
}

#[cfg(feature = "parallel")]
fn run_rows_parallel(prep: &Prepared, cfg: &RunConfig, bounds: Option<&BoundsBundle>, pre: f64) -> Vec<BenchRow> {
    use rayon::prelude::*;
    cfg.combinations
        .par_iter()
        .map(|c| bench_row(prep, cfg, c, bounds, pre))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_rows_parallel(prep: &Prepared, cfg: &RunConfig, bounds: Option<&BoundsBundle>, pre: f64) -> Vec<BenchRow> {
    warn!("built without the parallel feature; running combinations sequentially");
    cfg.combinations
        .iter()
        .map(|c| bench_row(prep, cfg, c, bounds, pre))
        .collect()
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

impl BenchReport {
    /// Markdown table; `*` marks rows stopped by the time limit.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} (N = {}, d = {}, eps = {}, P+ = {}, P- = {})\n",
            self.dataset.name, self.dataset.points, self.dataset.dim, self.params.eps, self.params.pp, self.params.pm
        );
        let _ = writeln!(s, "Preprocessing: {:.3} s\n", self.preprocess_seconds);
        s.push_str("| combination | build (s) | solve (s) | status | objective | gap |\n");
        s.push_str("|---|---:|---:|---|---:|---:|\n");
        for r in &self.rows {
            let mark = if r.status == SolveStatus::FeasibleTimeLimit { "*" } else { "" };
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3}{mark} | {} | {} | {} |",
                r.combination,
                r.build_seconds,
                r.solve_seconds,
                r.status,
                fmt_opt(r.objective, 8),
                fmt_opt(r.gap, 2),
            );
        }
        let _ = writeln!(
            s,
            "\nObjective agreement: {}",
            if self.agreement { "yes" } else { "NO" }
        );
        for (a, b) in &self.disagreements {
            let _ = writeln!(s, "- {a} vs {b}");
        }
        if self.rows.iter().any(|r| r.status == SolveStatus::FeasibleTimeLimit) {
            s.push_str("\n`*` time limit reached\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_tolerance() {
        assert!(objectives_agree(1.0, 1.0 + 5e-6, 1e-6));
        assert!(!objectives_agree(1.0, 1.0 + 2e-5, 1e-6));
        assert!(objectives_agree(0.0, 1e-12, 1e-6));
    }

    #[test]
    fn config_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"data": {"csv": "points.csv"}, "eps": 0.1, "pp": 2, "pm": 2, "preset": "C9"}"#,
        )
        .unwrap();
        assert_eq!(cfg.objective, Objective::MaxError);
        assert!(cfg.cache && cfg.rescale);
        assert_eq!(cfg.tightening().unwrap(), preset("C9").unwrap());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn empty_bench_is_rejected() {
        let ds = DataSet::from_rows(1, &[(vec![0.0], 0.0), (vec![1.0], 1.0)], "t").unwrap();
        let cfg = RunConfig::new(DataSource::Inline(ds), FitParams::new(0.1, 1, 1).unwrap());
        assert!(matches!(bench(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn markdown_marks_time_limit() {
        let row = BenchRow {
            combination: "C1".into(),
            preprocess_seconds: 0.0,
            build_seconds: 0.1,
            solve_seconds: 10.0,
            status: SolveStatus::FeasibleTimeLimit,
            objective: Some(0.5),
            gap: Some(0.2),
            stats: None,
            model_sha256: None,
            max_error: None,
            error: None,
        };
        let rep = BenchReport {
            dataset: DatasetMeta {
                name: "t".into(),
                points: 2,
                dim: 1,
                sha256: String::new(),
            },
            params: FitParams::new(0.1, 1, 1).unwrap(),
            objective: Objective::MaxError,
            mip_gap: 1e-6,
            time_limit: 10.0,
            preprocess_seconds: 0.0,
            rows: vec![row],
            agreement: true,
            disagreements: vec![],
            environment: Environment::capture(&SolverSpec::default()),
        };
        let md = rep.to_markdown();
        assert!(md.contains("10.000*"));
        assert!(md.contains("time limit reached"));
    }
}
