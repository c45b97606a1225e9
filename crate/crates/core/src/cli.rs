//! Command-line front end: `solve`, `converge` and `oracle`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{error_linf, preset, run_study, ConvergenceReport, LinfErrors, StudyAxis, StudySpec};
use crate::interp::{ExtrapolationPolicy, PiecewiseLagrangeInterpolant};
use crate::oracle::{mc_expectation, McEstimate, WeightKind};
use crate::problem::{exact_layer, registry_get, ProblemParams, SpatialMesh, TimePartition};
use crate::quadrature::AtomGridBuilder;
use crate::solver::{computational_mesh, solve, BoundaryPolicy, Diagnostics, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "jumpfbsde", version, about = "Probabilistic solver for FBSDEs with jumps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and report the level-0 layer.
    Solve(SolveArgs),
    /// Run a convergence study in Δt or Δx.
    Converge(ConvergeArgs),
    /// Compare one quadrature expectation with a Monte Carlo estimate.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundaryArg {
    Extrapolate,
    Analytic,
    Flat,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, default_value = "example1")]
    pub problem: String,
    /// Half-width of the jump-size support.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
}

impl ProblemArgs {
    fn params(&self) -> ProblemParams {
        ProblemParams { delta: self.delta, horizon: self.horizon, ..ProblemParams::default() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub my: Option<usize>,
    #[arg(long)]
    pub mf: Option<usize>,
    #[arg(long)]
    pub gh: Option<usize>,
    #[arg(long)]
    pub gl: Option<usize>,
    #[arg(long)]
    pub pad: Option<f64>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl SchemeArgs {
    fn apply(&self, mut c: SolverConfig) -> SolverConfig {
        if let Some(v) = self.degree {
            c.degree = v;
        }
        if let Some(v) = self.my {
            c.my = v;
        }
        if let Some(v) = self.mf {
            c.mf = v;
        }
        if let Some(v) = self.gh {
            c.n_gh = v;
        }
        if let Some(v) = self.gl {
            c.n_gl = v;
        }
        if let Some(v) = self.pad {
            c.padding = Some(v);
        }
        if let Some(b) = self.boundary {
            c.boundary = match b {
                BoundaryArg::Extrapolate => BoundaryPolicy::Extrapolate,
                BoundaryArg::Analytic => BoundaryPolicy::Analytic,
                BoundaryArg::Flat => BoundaryPolicy::Flat,
            };
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "N", default_value_t = 16)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// JSON output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Pin the configuration of a published table.
    #[arg(long)]
    pub preset: Option<String>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub axis: Option<StudyAxis>,
    /// Comma-separated step sizes, e.g. `0.0625,0.03125`.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Time steps for a `dx` study.
    #[arg(long = "N")]
    pub n_steps: Option<usize>,
    /// Mesh spacing for a `dt` study.
    #[arg(long)]
    pub dx: Option<f64>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV table. With several studies a `-k` suffix is added per study.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrandArg {
    /// `V = 1`
    One,
    /// `V(x') = x'`
    Identity,
    /// `V(x') = sin x'`
    Sin,
    /// Cubic interpolant of the exact `Y` at `t + Δt`.
    Exact,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "plain")]
    pub weight: WeightArg,
    #[arg(long, value_enum, default_value = "sin")]
    pub integrand: IntegrandArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 0.5)]
    pub x: f64,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub dt: f64,
    /// Jump branches kept by the quadrature.
    #[arg(long = "M", default_value_t = 3)]
    pub max_jumps: usize,
    #[arg(long, default_value_t = 8)]
    pub gh: usize,
    #[arg(long, default_value_t = 8)]
    pub gl: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Plain,
    Brownian,
    Jump,
}

impl From<WeightArg> for WeightKind {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Plain => WeightKind::Plain,
            WeightArg::Brownian => WeightKind::Brownian,
            WeightArg::Jump => WeightKind::Jump,
        }
    }
}

/// Output of `solve`. Arrays cover the interest interval only.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub params: ProblemParams,
    pub n_steps: usize,
    pub dx: f64,
    pub config: SolverConfig,
    pub diagnostics: Diagnostics,
    pub errors: Option<LinfErrors>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct OracleReport {
    pub problem: String,
    pub weight: WeightKind,
    pub t: f64,
    pub x: f64,
    pub dt: f64,
    pub max_jumps: usize,
    pub quadrature: f64,
    pub monte_carlo: McEstimate,
    /// `(quadrature − estimate) / stderr`; zero when both agree exactly.
    pub z_score: f64,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    run(cli, stdout)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Solve(a) => run_solve(a, stdout),
        Command::Converge(a) => run_converge(a, stdout),
        Command::Oracle(a) => run_oracle(a, stdout),
    }
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))
}

pub fn solve_report(
    problem_name: &str,
    params: ProblemParams,
    n_steps: usize,
    dx: f64,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let problem = registry_get(problem_name, &params)?;
    let partition = TimePartition::new(params.horizon, n_steps)?;
    let mesh = computational_mesh(&problem, &partition, config, dx)?;
    let sol = solve(&problem, &mesh, &partition, config)?;
    let errors = match exact_layer(&problem, &mesh, 0.0) {
        Ok(exact) => Some(error_linf(&sol.layer, &exact, &mesh, problem.domain())?),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let idx = mesh.interest_indices();
    Ok(SolveReport {
        problem: problem_name.to_string(),
        params,
        n_steps,
        dx,
        config: config.clone(),
        diagnostics: sol.diagnostics,
        errors,
        x: mesh.points()[idx.clone()].to_vec(),
        y: sol.layer.y[idx.clone()].to_vec(),
        z: sol.layer.z[idx.clone()].to_vec(),
        gamma: sol.layer.gamma[idx].to_vec(),
    })
}

fn run_solve(a: SolveArgs, stdout: &mut dyn Write) -> Result<i32> {
    let config = a.scheme.apply(SolverConfig::default());
    let report = solve_report(&a.problem.problem, a.problem.params(), a.n_steps, a.dx, &config)?;
    emit(a.out.as_deref(), &to_json(&report)?, stdout)?;
    Ok(0)
}

fn study_specs(a: &ConvergeArgs) -> Result<Vec<StudySpec>> {
    let mut specs = match &a.preset {
        Some(name) => preset(name)?,
        None => {
            let axis = a.axis.ok_or_else(|| Error::Usage("--axis is required without --preset".into()))?;
            let values =
                a.values.clone().ok_or_else(|| Error::Usage("--values is required without --preset".into()))?;
            vec![StudySpec {
                label: format!("{} {:?}", a.problem.problem, axis).to_lowercase(),
                problem: a.problem.problem.clone(),
                params: a.problem.params(),
                axis,
                values,
                n_steps: 1024,
                dx: 0.01,
                solver: SolverConfig::default(),
            }]
        }
    };
    for s in &mut specs {
        if a.preset.is_some() {
            if let Some(v) = &a.values {
                s.values = v.clone();
            }
        }
        if let Some(n) = a.n_steps {
            s.n_steps = n;
        }
        if let Some(dx) = a.dx {
            s.dx = dx;
        }
        s.solver = a.scheme.apply(s.solver.clone());
    }
    Ok(specs)
}

fn numbered(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{k}.{ext}"),
        None => format!("{stem}-{k}"),
    };
    path.with_file_name(name)
}

fn run_converge(a: ConvergeArgs, stdout: &mut dyn Write) -> Result<i32> {
    let specs = study_specs(&a)?;
    let reports: Vec<ConvergenceReport> = specs.iter().map(run_study).collect::<Result<_>>()?;
    let json = if reports.len() == 1 { to_json(&reports[0])? } else { to_json(&reports)? };
    emit(a.out.as_deref(), &json, stdout)?;
    if let Some(path) = &a.csv {
        for (k, r) in reports.iter().enumerate() {
            let p = if reports.len() == 1 { path.clone() } else { numbered(path, k + 1) };
            std::fs::write(p, r.to_csv()?)?;
        }
    }
    if a.out.is_some() {
        for r in &reports {
            match r.rates {
                Some(c) => writeln!(
                    stdout,
                    "{}: CR_y {:.3}  CR_z {:.3}  CR_gamma {:.3}",
                    r.spec.label, c.y, c.z, c.gamma
                )?,
                None => writeln!(stdout, "{}: no rate", r.spec.label)?,
            }
        }
    }
    Ok(if reports.iter().any(|r| r.failed()) { 1 } else { 0 })
}

/// Quadrature and Monte Carlo values of one weighted expectation.
pub fn oracle_report(a: &OracleArgs) -> Result<OracleReport> {
    let params = a.problem.params();
    let problem = registry_get(&a.problem.problem, &params)?;
    let weight: WeightKind = a.weight.into();
    let next = a.t + a.dt;
    let mesh;
    let values;
    let interp = match a.integrand {
        IntegrandArg::Exact => {
            let partition = TimePartition::new(params.horizon, 1)?;
            let pad = crate::solver::default_padding(&problem, problem.domain(), &partition, a.max_jumps);
            mesh = SpatialMesh::padded(problem.domain(), 0.01, pad)?;
            values = exact_layer(&problem, &mesh, next)?.y;
            Some(PiecewiseLagrangeInterpolant::new(&mesh, &values, 3, ExtrapolationPolicy::NearestStencil)?)
        }
        _ => None,
    };
    let v = |x: f64| match a.integrand {
        IntegrandArg::One => 1.0,
        IntegrandArg::Identity => x,
        IntegrandArg::Sin => x.sin(),
        IntegrandArg::Exact => interp.as_ref().map_or(f64::NAN, |i| i.eval_unchecked(x)),
    };
    let grid = AtomGridBuilder::new(problem.measure(), a.max_jumps, a.gh, a.gl)?.build(&problem, a.t, a.dt, a.x)?;
    let sums = grid.view().expect_all(v)?;
    let quadrature = match weight {
        WeightKind::Plain => sums.plain,
        WeightKind::Brownian => sums.brownian,
        WeightKind::Jump => sums.jump,
    };
    let mc = || mc_expectation(&problem, a.t, a.x, a.dt, weight, v, a.paths, a.seed);
    let monte_carlo = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(mc)?,
        None => mc()?,
    };
    let diff = quadrature - monte_carlo.estimate;
    let z_score = if monte_carlo.stderr > 0.0 { diff / monte_carlo.stderr } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(OracleReport {
        problem: a.problem.problem.clone(),
        weight,
        t: a.t,
        x: a.x,
        dt: a.dt,
        max_jumps: a.max_jumps,
        quadrature,
        monte_carlo,
        z_score,
    })
}

fn run_oracle(a: OracleArgs, stdout: &mut dyn Write) -> Result<i32> {
    let report = oracle_report(&a)?;
    emit(a.out.as_deref(), &to_json(&report)?, stdout)?;
    Ok(0)
}
