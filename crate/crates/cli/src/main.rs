use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::{fmt::Write as _, fs};

use clap::{Args, Parser, Subcommand};
use dcfit::cpwl::{verify_eps_approx_tol, ACTIVITY_TOL, REPORT_TOL};
use dcfit::dataset::{generate, load_csv, Sampling, SyntheticFunction};
use dcfit::pipeline::{self, DataSource, RunConfig};
use dcfit::solver::{Backend, SolveStatus};
use dcfit::{wellbehave, DataSet, DcFunction, Error, FitParams};
use serde_json::json;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "dcfit", version, about = "Piecewise-linear fitting through tightened DC MILP models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one instance and write fit.json, report.json and the solver log.
    Fit(RunArgs),
    /// Run several combinations on one instance and write bench.json and bench.md.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated combination ids, e.g. C2,C3,C9.
        #[arg(long, value_delimiter = ',')]
        combinations: Vec<String>,
        #[arg(long)]
        parallel: bool,
    },
    /// Compute big-M values and variable bounds and write bounds.json.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        pp: usize,
        #[arg(long, default_value_t = 1)]
        pm: usize,
        /// Work on the raw data instead of the data mapped onto [0, 1].
        #[arg(long)]
        no_rescale: bool,
        #[arg(long, short, default_value = "bounds.json")]
        out: PathBuf,
    },
    /// Check that a fit is an eps-approximation of a data set.
    Verify {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = REPORT_TOL)]
        tol: f64,
    },
    /// Tilt pieces of a fit until every piece interpolates d+1 points.
    Wellbehave {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = ACTIVITY_TOL)]
        tol: f64,
        #[arg(long, short, default_value = "fit-wellbehaved.json")]
        out: PathBuf,
    },
    /// Write synthetic data sets as CSV.
    GenData {
        /// Function id, or `all`.
        #[arg(long, default_value = "all")]
        function: String,
        /// Number of points; the reference count of each function when omitted.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "uniform")]
        sampling: String,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate a fit on a lattice over the data's bounding box.
    ExportPlot {
        #[arg(long)]
        fit: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Lattice points per axis.
        #[arg(long, default_value_t = 41)]
        resolution: usize,
        /// Write JSON instead of CSV.
        #[arg(long)]
        json: bool,
        #[arg(long, short, default_value = "lattice.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with columns x1..xd, z.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic function id instead of a CSV file.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sampling: Option<String>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    pp: Option<usize>,
    #[arg(long)]
    pm: Option<usize>,
    /// max-error, mean-error, pieces-f, pieces-fplus, pieces-fminus or hier:<count>:<error>.
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    solver: Option<Backend>,
    #[arg(long)]
    solver_path: Option<PathBuf>,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    mip_gap: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    no_rescale: bool,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Solver { .. } => (EXIT_SOLVER, "solver"),
            Error::Inconsistent { .. } => (EXIT_SOLVER, "inconsistent"),
            Error::Io { .. } => (EXIT_VALIDATION, "io"),
            Error::Parse { .. } => (EXIT_VALIDATION, "parse"),
            Error::Json(_) => (EXIT_VALIDATION, "json"),
            Error::Transform(_) => (EXIT_VALIDATION, "transform"),
            _ => (EXIT_VALIDATION, "validation"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        kind: "usage",
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    }.into())
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

fn sampling(s: &str) -> CliResult<Sampling> {
    match s {
        "grid" => Ok(Sampling::Grid),
        "uniform" => Ok(Sampling::Uniform),
        _ => Err(usage(format!("unknown sampling `{s}` (grid or uniform)"))),
    }
}

fn function(id: &str) -> CliResult<SyntheticFunction> {
    SyntheticFunction::from_id(id).ok_or_else(|| {
        let ids: Vec<_> = SyntheticFunction::ALL.iter().map(|f| f.id()).collect();
        usage(format!("unknown function `{id}`; known: {}", ids.join(", ")))
    })
}

impl DataArgs {
    fn source(&self) -> CliResult<Option<DataSource>> {
        if let Some(p) = &self.data {
            return Ok(Some(DataSource::Csv(p.clone())));
        }
        let Some(id) = &self.synthetic else {
            return Ok(None);
        };
        let mut spec = function(id)?.reference_spec(self.seed.unwrap_or(0));
        if let Some(n) = self.count {
            spec.count = n;
        }
        if let Some(s) = &self.sampling {
            spec.sampling = sampling(s)?;
        }
        Ok(Some(DataSource::Synthetic(spec)))
    }

    fn load(&self) -> CliResult<DataSet> {
        match self.source()? {
            Some(DataSource::Csv(p)) => Ok(load_csv(p)?),
            Some(src) => Ok(src.load()?),
            None => Err(usage("pass --data <csv> or --synthetic <function>")),
        }
    }
}

impl RunArgs {
    fn config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => {
                let src = self.data.source()?.ok_or_else(|| usage("pass --config, --data or --synthetic"))?;
                let eps = self.eps.ok_or_else(|| usage("--eps is required without --config"))?;
                RunConfig::new(src, FitParams::new(eps, self.pp.unwrap_or(1), self.pm.unwrap_or(1))?)
            }
        };
        if let Some(src) = self.data.source()? {
            cfg.data = src;
        }
        if let Some(v) = self.eps {
            cfg.params.eps = v;
        }
        if let Some(v) = self.pp {
            cfg.params.pp = v;
        }
        if let Some(v) = self.pm {
            cfg.params.pm = v;
        }
        if let Some(v) = &self.objective {
            cfg.objective = v.parse()?;
        }
        if let Some(v) = &self.preset {
            cfg.preset = Some(v.clone());
            cfg.tightening = None;
        }
        if let Some(v) = self.solver {
            cfg.solver.backend = v;
        }
        if let Some(v) = &self.solver_path {
            cfg.solver.executable = Some(v.clone());
        }
        if let Some(v) = self.time_limit {
            cfg.solver.time_limit = v;
        }
        if let Some(v) = self.mip_gap {
            cfg.solver.mip_gap = v;
        }
        if let Some(v) = self.threads {
            cfg.solver.threads = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.output = Some(v.clone());
        }
        if cfg.output.is_none() {
            cfg.output = Some(PathBuf::from("dcfit-out"));
        }
        cfg.cache &= !self.no_cache;
        cfg.rescale &= !self.no_rescale;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::Unbounded | SolveStatus::Error => EXIT_SOLVER,
    }
}

fn cmd_fit(args: &RunArgs) -> CliResult<u8> {
    let cfg = args.config()?;
    let out_dir = cfg.output.clone().expect("output set by config()");
    let out = pipeline::fit(&cfg)?;
    pipeline::write_fit_artifacts(&out, &out_dir)?;
    println!(
        "{}",
        json!({
            "status": out.status.to_string(),
            "objective": out.objective,
            "gap": out.gap,
            "max_error": out.fit.as_ref().map(|f| f.max_error),
            "solve_seconds": out.timings.solve,
            "output": out_dir,
        })
    );
    Ok(status_code(out.status))
}

fn cmd_bench(args: &RunArgs, combinations: &[String], parallel: bool) -> CliResult<u8> {
    let mut cfg = args.config()?;
    if !combinations.is_empty() {
        cfg.combinations = combinations.to_vec();
    }
    cfg.parallel |= parallel;
    if cfg.combinations.is_empty() {
        return Err(usage("bench needs at least one combination (--combinations C1,C2,...)"));
    }
    let out_dir = cfg.output.clone().expect("output set by config()");
    let rep = pipeline::bench(&cfg)?;
    write(&out_dir.join("bench.json"), &serde_json::to_string_pretty(&rep).map_err(Error::from)?)?;
    let md = rep.to_markdown();
    write(&out_dir.join("bench.md"), &md)?;
    print!("{md}");
    Ok(0)
}

fn cmd_preprocess(data: &DataArgs, eps: f64, pp: usize, pm: usize, no_rescale: bool, out: &Path) -> CliResult<u8> {
    let src = data.source()?.ok_or_else(|| usage("pass --data <csv> or --synthetic <function>"))?;
    let mut cfg = RunConfig::new(src, FitParams::new(eps, pp, pm)?);
    cfg.rescale = !no_rescale;
    let prep = pipeline::prepare(&cfg)?;
    let (bundle, seconds) = pipeline::bounds_for(&prep, None)?;
    write(out, &bundle.to_json())?;
    println!(
        "{}",
        json!({
            "points": prep.data.len(),
            "dim": prep.data.dim(),
            "eps": prep.params.eps,
            "raw_count": bundle.raw_count.to_string(),
            "max_big_m": bundle.max_big_m(),
            "seconds": seconds,
            "output": out,
        })
    );
    Ok(0)
}

fn load_fit(path: &Path, ds: &DataSet) -> CliResult<DcFunction> {
    let f = DcFunction::from_json(&read(path)?)?;
    if f.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: f.dim(),
        }
        .into());
    }
    Ok(f)
}

fn cmd_verify(data: &DataArgs, fit: &Path, eps: f64, tol: f64) -> CliResult<u8> {
    let ds = data.load()?;
    let f = load_fit(fit, &ds)?;
    let rep = verify_eps_approx_tol(&f, &ds, eps, tol);
    let worst = rep
        .errors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i + 1);
    println!(
        "{}",
        json!({
            "feasible": rep.feasible,
            "max_error": rep.max_error,
            "mean_error": rep.mean_error,
            "eps": rep.eps,
            "tol": rep.tol,
            "worst_point": worst,
            "violations": rep.violations.iter().map(|i| json!({"point": i + 1, "error": rep.errors[*i]})).collect::<Vec<_>>(),
        })
    );
    Ok(if rep.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_wellbehave(data: &DataArgs, fit: &Path, eps: f64, tol: f64, out: &Path) -> CliResult<u8> {
    let ds = data.load()?;
    let f = load_fit(fit, &ds)?;
    let res = wellbehave::transform(&f, &ds, eps, tol)?;
    write(out, &res.function.to_json())?;
    let failing: Vec<_> = res.report.failing().map(|p| json!({"j": p.j + 1, "k": p.k + 1, "points": p.points.len()})).collect();
    println!(
        "{}",
        json!({
            "well_behaved": res.report.pass,
            "steps": res.steps,
            "max_deviation": res.max_deviation,
            "failing_pairs": failing,
            "output": out,
        })
    );
    Ok(if res.report.pass { 0 } else { EXIT_VALIDATION })
}

fn cmd_gen_data(which: &str, count: Option<usize>, seed: u64, samp: &str, out: &Path) -> CliResult<u8> {
    let funcs = if which == "all" {
        SyntheticFunction::ALL.to_vec()
    } else {
        vec![function(which)?]
    };
    let samp = sampling(samp)?;
    let mut written = Vec::new();
    for f in funcs {
        let mut spec = f.reference_spec(seed);
        spec.sampling = samp;
        if let Some(n) = count {
            spec.count = n;
        }
        let ds = generate(&spec)?;
        let path = out.join(format!("{}.csv", f.id()));
        write(&path, &ds.to_csv())?;
        written.push(json!({"function": f.id(), "points": ds.len(), "path": path}));
    }
    println!("{}", json!({ "written": written }));
    Ok(0)
}

fn lattice(ds: &DataSet, res: usize) -> Vec<Vec<f64>> {
    let d = ds.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|r| {
            let (lo, hi) = ds
                .points()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x[r]), hi.max(p.x[r])));
            if res == 1 || hi == lo {
                vec![lo]
            } else {
                (0..res).map(|t| lo + (hi - lo) * t as f64 / (res - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn cmd_export_plot(fit: &Path, data: &DataArgs, res: usize, as_json: bool, out: &Path) -> CliResult<u8> {
    if res == 0 {
        return Err(usage("--resolution must be at least 1"));
    }
    let ds = data.load()?;
    let f = load_fit(fit, &ds)?;
    let grid = lattice(&ds, res);
    let text = if as_json {
        let rows: Vec<_> = grid.iter().map(|x| json!({"x": x, "f": f.eval(x)})).collect();
        serde_json::to_string_pretty(&json!({"dim": ds.dim(), "resolution": res, "points": rows})).map_err(Error::from)?
    } else {
        let mut s = String::new();
        for r in 1..=ds.dim() {
            let _ = write!(s, "x{r},");
        }
        s.push_str("f\n");
        for x in &grid {
            for v in x {
                let _ = write!(s, "{v:?},");
            }
            let _ = writeln!(s, "{:?}", f.eval(x));
        }
        s
    };
    write(out, &text)?;
    println!("{}", json!({"points": grid.len(), "output": out}));
    Ok(0)
}

fn run(cli: Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Bench { run, combinations, parallel } => cmd_bench(run, combinations, *parallel),
        Command::Preprocess { data, eps, pp, pm, no_rescale, out } => cmd_preprocess(data, *eps, *pp, *pm, *no_rescale, out),
        Command::Verify { data, fit, eps, tol } => cmd_verify(data, fit, *eps, *tol),
        Command::Wellbehave { data, fit, eps, tol, out } => cmd_wellbehave(data, fit, *eps, *tol, out),
        Command::GenData { function, count, seed, sampling, out } => cmd_gen_data(function, *count, *seed, sampling, out),
        Command::ExportPlot { fit, data, resolution, json, out } => cmd_export_plot(fit, data, *resolution, *json, out),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code}));
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        // clap's own exit code 2 would read as "infeasible"
        Err(e) => return report(usage(e.to_string().trim_end())),
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => report(f),
    }
}
