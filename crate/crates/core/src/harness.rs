//! Convergence studies, error norms and report serialization.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{exact_layer, registry_get, ProblemParams, SolutionLayer, SpatialMesh, TimePartition};
use crate::solver::{computational_mesh, solve, Diagnostics, SolverConfig};

/// Max-norm errors of the three fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfErrors {
    pub y: f64,
    pub z: f64,
    pub gamma: f64,
}

/// Component-wise max absolute difference over the mesh points in `[a, b]`.
pub fn error_linf(
    layer: &SolutionLayer,
    exact: &SolutionLayer,
    mesh: &SpatialMesh,
    interval: (f64, f64),
) -> Result<LinfErrors> {
    if layer.len() != mesh.len() || exact.len() != mesh.len() {
        return Err(Error::Usage(format!(
            "layers of length {} and {} do not match a mesh of {} points",
            layer.len(),
            exact.len(),
            mesh.len()
        )));
    }
    let mut e = LinfErrors { y: 0.0, z: 0.0, gamma: 0.0 };
    for i in mesh.indices_within(interval.0, interval.1) {
        e.y = e.y.max((layer.y[i] - exact.y[i]).abs());
        e.z = e.z.max((layer.z[i] - exact.z[i]).abs());
        e.gamma = e.gamma.max((layer.gamma[i] - exact.gamma[i]).abs());
    }
    Ok(e)
}

/// Least-squares slope of `log2(error)` against `log2(step)`.
pub fn fit_rate(steps: &[f64], errors: &[f64]) -> Result<f64> {
    if steps.len() != errors.len() {
        return Err(Error::Usage(format!(
            "{} step sizes but {} errors",
            steps.len(),
            errors.len()
        )));
    }
    if steps.len() < 2 {
        return Err(Error::Usage("a rate needs at least two runs".into()));
    }
    if steps.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Usage("step sizes and errors must be positive and finite".into()));
    }
    let xs: Vec<f64> = steps.iter().map(|h| h.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("step sizes must not all be equal".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyAxis {
    Dt,
    Dx,
}

impl std::str::FromStr for StudyAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(Self::Dt),
            "dx" => Ok(Self::Dx),
            other => Err(Error::Usage(format!("axis must be `dt` or `dx`, got `{other}`"))),
        }
    }
}

/// Everything needed to repeat a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub label: String,
    pub problem: String,
    pub params: ProblemParams,
    pub axis: StudyAxis,
    /// Step sizes along the axis. For `dt` each must divide the horizon.
    pub values: Vec<f64>,
    /// Time steps when the axis is `dx`.
    pub n_steps: usize,
    /// Mesh spacing when the axis is `dt`.
    pub dx: f64,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: f64,
    pub n_steps: usize,
    pub dx: f64,
    pub errors: Option<LinfErrors>,
    pub wall_time_s: f64,
    pub diagnostics: Option<Diagnostics>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub y: f64,
    pub z: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub spec: StudySpec,
    /// Sorted by decreasing step size.
    pub records: Vec<RunRecord>,
    pub rates: Option<Rates>,
}

impl ConvergenceReport {
    pub fn failed(&self) -> bool {
        self.records.iter().any(|r| r.failure.is_some())
    }

    /// Fits rates over the successful records.
    pub fn fit(&self) -> Option<Rates> {
        let ok: Vec<(&RunRecord, LinfErrors)> =
            self.records.iter().filter_map(|r| r.errors.map(|e| (r, e))).collect();
        let steps: Vec<f64> = ok.iter().map(|(r, _)| r.step).collect();
        let field = |f: fn(&LinfErrors) -> f64| -> Option<f64> {
            let errs: Vec<f64> = ok.iter().map(|(_, e)| f(e)).collect();
            fit_rate(&steps, &errs).ok()
        };
        Some(Rates { y: field(|e| e.y)?, z: field(|e| e.z)?, gamma: field(|e| e.gamma)? })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Usage(format!("bad report: {e}")))
    }

    /// Table with the error columns and the rate between consecutive runs.
    /// Failed runs have empty error cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "e_y", "e_z", "e_gamma", "cr_y", "cr_z", "cr_gamma"])
            .map_err(csv_err)?;
        let mut prev: Option<(f64, LinfErrors)> = None;
        for r in &self.records {
            let mut row = vec![fmt_f64(r.step)];
            match r.errors {
                Some(e) => {
                    row.extend([fmt_f64(e.y), fmt_f64(e.z), fmt_f64(e.gamma)]);
                    match prev {
                        Some((h, p)) => {
                            let ratio = (h / r.step).log2();
                            for (a, b) in [(p.y, e.y), (p.z, e.z), (p.gamma, e.gamma)] {
                                row.push(fmt_f64((a / b).log2() / ratio));
                            }
                        }
                        None => row.extend([String::new(), String::new(), String::new()]),
                    }
                    prev = Some((r.step, e));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// One parsed CSV row; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub step: f64,
    pub errors: Option<LinfErrors>,
    pub partial_rates: Option<Rates>,
}

pub fn parse_csv(s: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let cell = |i: usize| -> Result<Option<f64>> {
            let v = rec.get(i).unwrap_or("");
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse::<f64>().map(Some).map_err(|e| Error::Usage(format!("bad cell `{v}`: {e}")))
            }
        };
        let step = cell(0)?.ok_or_else(|| Error::Usage("missing step".into()))?;
        let errors = match (cell(1)?, cell(2)?, cell(3)?) {
            (Some(y), Some(z), Some(gamma)) => Some(LinfErrors { y, z, gamma }),
            _ => None,
        };
        let partial_rates = match (cell(4)?, cell(5)?, cell(6)?) {
            (Some(y), Some(z), Some(gamma)) => Some(Rates { y, z, gamma }),
            _ => None,
        };
        out.push(CsvRow { step, errors, partial_rates });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

// Shortest representation that parses back to the same bits.
fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:?}").expect("writing to a String");
    s
}

fn run_one(spec: &StudySpec, step: f64) -> Result<RunRecord> {
    let problem = registry_get(&spec.problem, &spec.params)?;
    let horizon = spec.params.horizon;
    let (n_steps, dx) = match spec.axis {
        StudyAxis::Dt => {
            let n = (horizon / step).round();
            if n < 1.0 || ((horizon / n) - step).abs() > 1e-12 * step {
                return Err(Error::Config(format!("Δt = {step} does not divide T = {horizon}")));
            }
            (n as usize, spec.dx)
        }
        StudyAxis::Dx => (spec.n_steps, step),
    };
    let partition = TimePartition::new(horizon, n_steps)?;
    let mesh = computational_mesh(&problem, &partition, &spec.solver, dx)?;
    let started = Instant::now();
    let sol = solve(&problem, &mesh, &partition, &spec.solver)?;
    let exact = exact_layer(&problem, &mesh, 0.0)?;
    let errors = error_linf(&sol.layer, &exact, &mesh, problem.domain())?;
    Ok(RunRecord {
        step,
        n_steps,
        dx,
        errors: Some(errors),
        wall_time_s: started.elapsed().as_secs_f64(),
        diagnostics: Some(sol.diagnostics),
        failure: None,
    })
}

/// Solves once per step size and fits rates. A failing run is recorded and
/// the study continues.
pub fn run_study(spec: &StudySpec) -> Result<ConvergenceReport> {
    registry_get(&spec.problem, &spec.params)?;
    spec.solver.validate()?;
    if spec.values.is_empty() {
        return Err(Error::Usage("a study needs at least one step size".into()));
    }
    if spec.values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Usage("step sizes must be positive".into()));
    }
    let mut values = spec.values.clone();
    values.sort_by(|a, b| b.total_cmp(a));
    let records = values
        .iter()
        .map(|&h| {
            run_one(spec, h).unwrap_or_else(|e| RunRecord {
                step: h,
                n_steps: 0,
                dx: 0.0,
                errors: None,
                wall_time_s: 0.0,
                diagnostics: None,
                failure: Some(e.to_string()),
            })
        })
        .collect();
    let mut report = ConvergenceReport { spec: StudySpec { values, ..spec.clone() }, records, rates: None };
    report.rates = report.fit();
    Ok(report)
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 4] = ["table1", "table2", "table3", "table4"];

fn pow2(exps: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    exps.map(|k| 2f64.powi(-k)).collect()
}

fn with_branches(my: usize, mf: usize, degree: usize) -> SolverConfig {
    SolverConfig { my, mf, degree, ..SolverConfig::default() }
}

/// Study configurations behind the published error tables, one per row block.
pub fn preset(name: &str) -> Result<Vec<StudySpec>> {
    let params = ProblemParams::default();
    let dt_study = |problem: &str, label: String, values: Vec<f64>, my, mf| StudySpec {
        label,
        problem: problem.into(),
        params,
        axis: StudyAxis::Dt,
        values,
        n_steps: 0,
        dx: 0.01,
        solver: with_branches(my, mf, 3),
    };
    let dx_study = |problem: &str, label: String, values: Vec<f64>, my, mf, degree| StudySpec {
        label,
        problem: problem.into(),
        params,
        axis: StudyAxis::Dx,
        values,
        n_steps: 1024,
        dx: 0.0,
        solver: with_branches(my, mf, degree),
    };
    match name {
        "table1" => Ok([(0, 0), (1, 0), (2, 1), (3, 2)]
            .into_iter()
            .map(|(my, mf)| dt_study("example1", format!("table1 My={my} Mf={mf}"), pow2(4..=8), my, mf))
            .collect()),
        "table2" => Ok(vec![
            dx_study("example1", "table2 linear".into(), pow2(2..=6), 3, 2, 1),
            dx_study("example1", "table2 quadratic".into(), pow2(2..=6), 3, 2, 2),
        ]),
        "table3" => Ok([(0, 0), (1, 0), (2, 1)]
            .into_iter()
            .map(|(my, mf)| dt_study("example2", format!("table3 My={my} Mf={mf}"), pow2(5..=9), my, mf))
            .collect()),
        "table4" => Ok(vec![
            dx_study("example2", "table4 linear".into(), pow2(5..=9), 2, 1, 1),
            dx_study("example2", "table4 quadratic".into(), pow2(2..=6), 2, 1, 2),
        ]),
        other => Err(Error::Usage(format!(
            "unknown preset `{other}` (expected one of: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linf_examples() {
        let mesh = SpatialMesh::padded((0.0, 1.0), 0.25, 0.5).unwrap();
        let n = mesh.len();
        let exact = SolutionLayer::new(None, 0.0, vec![1.0; n], vec![2.0; n], vec![3.0; n]).unwrap();
        let e = error_linf(&exact, &exact, &mesh, (0.0, 1.0)).unwrap();
        assert_eq!((e.y, e.z, e.gamma), (0.0, 0.0, 0.0));

        let mut off = exact.clone();
        off.y.iter_mut().for_each(|y| *y += 1e-3);
        // outside the interval only
        off.z[0] += 5.0;
        let e = error_linf(&off, &exact, &mesh, (0.0, 1.0)).unwrap();
        assert!((e.y - 1e-3).abs() < 1e-15);
        assert_eq!((e.z, e.gamma), (0.0, 0.0));

        let short = SolutionLayer::new(None, 0.0, vec![0.0], vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(error_linf(&short, &exact, &mesh, (0.0, 1.0)), Err(Error::Usage(_))));
    }

    #[test]
    fn rate_examples() {
        let h = [0.5, 0.25, 0.125];
        assert!((fit_rate(&h, &[4.0, 2.0, 1.0]).unwrap() - 1.0).abs() < 1e-14);

        let dt = pow2(4..=8);
        let y = [4.539e-3, 9.878e-4, 2.211e-4, 5.065e-5, 1.144e-5];
        assert!((fit_rate(&dt, &y).unwrap() - 2.155).abs() < 5e-4);
        let scaled: Vec<f64> = y.iter().map(|e| e * 1e3).collect();
        assert!((fit_rate(&dt, &scaled).unwrap() - fit_rate(&dt, &y).unwrap()).abs() < 1e-12);

        let dx = pow2(2..=6);
        let q = [6.183e-2, 8.004e-3, 9.941e-4, 1.266e-4, 1.438e-5];
        assert!((fit_rate(&dx, &q).unwrap() - 3.012).abs() < 5e-4);

        assert!(fit_rate(&[1.0], &[1.0]).is_err());
        assert!(fit_rate(&[1.0, 0.5], &[0.0, 1.0]).is_err());
        assert!(fit_rate(&[1.0, -0.5], &[1.0, 1.0]).is_err());
    }

    fn small_spec() -> StudySpec {
        StudySpec {
            label: "small".into(),
            problem: "example1".into(),
            params: ProblemParams::default(),
            axis: StudyAxis::Dt,
            values: vec![1.0 / 32.0, 1.0 / 16.0],
            n_steps: 0,
            dx: 0.1,
            solver: SolverConfig { padding: Some(6.0), ..SolverConfig::default() },
        }
    }

    #[test]
    fn study_sorts_and_round_trips() {
        let report = run_study(&small_spec()).unwrap();
        assert_eq!(report.spec.values, vec![1.0 / 16.0, 1.0 / 32.0]);
        assert!(!report.failed(), "{:?}", report.records);
        assert!(report.rates.is_some());

        let back = ConvergenceReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);

        let rows = parse_csv(&report.to_csv().unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, rec) in rows.iter().zip(&report.records) {
            assert_eq!(row.step.to_bits(), rec.step.to_bits());
            let (a, b) = (row.errors.unwrap(), rec.errors.unwrap());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
            assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
        }
        assert!(rows[0].partial_rates.is_none());
        assert!(rows[1].partial_rates.is_some());
    }

    #[test]
    fn failed_run_is_recorded() {
        let spec = StudySpec { values: vec![0.3, 1.0 / 16.0], ..small_spec() };
        let report = run_study(&spec).unwrap();
        assert!(report.failed());
        assert!(report.records[0].failure.is_some());
        assert!(report.rates.is_none());
        let rows = parse_csv(&report.to_csv().unwrap()).unwrap();
        assert!(rows[0].errors.is_none());
        assert!(rows[1].errors.is_some());
    }

    #[test]
    fn presets() {
        for name in PRESET_NAMES {
            let specs = preset(name).unwrap();
            assert!(!specs.is_empty());
            for s in specs {
                assert!(s.solver.validate().is_ok());
                assert_eq!(s.values.len(), 5);
            }
        }
        let t2 = preset("table2").unwrap();
        assert_eq!((t2[1].solver.my, t2[1].solver.mf, t2[1].solver.degree), (3, 2, 2));
        assert_eq!(t2[1].n_steps, 1024);
        assert!(preset("table9").is_err());
    }
}
