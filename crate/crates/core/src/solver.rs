//! Backward time marching of the fully discrete scheme.
//!
//! At every grid point `x_i` of level `n` the solver builds one atom grid with
//! `M_y` jump branches and evaluates
//!
//! ```text
//! Z_i = (2/Δt)·(Ê_{M_y}[Ŷ·ΔW̃] + Δt·Ê_{M_f}[f̂·ΔW̃])
//! Γ_i = (2/Δt)·(Ê_{M_y}[Ŷ·Δμ̃*] + Δt·Ê_{M_f}[f̂·Δμ̃*])
//! Y_i = Ê_{M_y}[Ŷ] + (Δt/2)·f(t_n, x_i, Y_i, Z_i, Γ_i) + (Δt/2)·Ê_{M_f}[f̂]
//! ```
//!
//! where `Ŷ`, `Ẑ`, `Γ̂` interpolate level `n + 1` and
//! `f̂ = f(t_{n+1}, x', Ŷ(x'), Ẑ(x'), Γ̂(x'))`. `Z` and `Γ` are explicit; `Y` is
//! found by Picard iteration. Grid points are independent within a step.
//!
//! Inside the two weighted expectations the integrands are centred at their
//! grid value, `Ŷ − Y^{n+1}_i` and `f̂ − f^{n+1}_i`. The weights have zero
//! mean, so this is the same scheme before truncation, but a truncated
//! `Ê[Δμ̃*]` no longer leaks a `−λ·Y` bias into `Γ`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{ExtrapolationPolicy, PiecewiseLagrangeInterpolant};
use crate::problem::{FbsdeProblem, SolutionLayer, SpatialMesh, TimePartition};
use crate::quadrature::{gauss_legendre, AtomGridBuilder};

/// Treatment of atoms landing outside the computational mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Polynomial extrapolation from the outermost stencil.
    #[default]
    Extrapolate,
    /// Exact solution at `t_{n+1}` outside the mesh.
    Analytic,
    /// End values held constant outside the mesh.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Jump branches kept in expectations of `Ŷ`.
    pub my: usize,
    /// Jump branches kept in expectations of `f̂`.
    pub mf: usize,
    pub n_gh: usize,
    pub n_gl: usize,
    /// Interpolation degree `p ∈ {1, 2, 3}`.
    pub degree: usize,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub boundary: BoundaryPolicy,
    /// Padding added on both sides of the interest interval; `None` picks
    /// [`default_padding`].
    pub padding: Option<f64>,
    /// Worker count; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            my: 2,
            mf: 1,
            n_gh: 8,
            n_gl: 8,
            degree: 3,
            picard_tol: 1e-12,
            picard_max_iters: 50,
            boundary: BoundaryPolicy::Extrapolate,
            padding: None,
            threads: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mf > self.my {
            return Err(Error::Config(format!(
                "M_f ({}) must not exceed M_y ({})",
                self.mf, self.my
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Config("Picard tolerance must be positive".into()));
        }
        if self.picard_max_iters == 0 {
            return Err(Error::Config("Picard iteration limit must be at least one".into()));
        }
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Config(format!(
                "interpolation degree must be 1, 2 or 3, got {}",
                self.degree
            )));
        }
        if let Some(p) = self.padding {
            if !(p >= 0.0) {
                return Err(Error::Config(format!("padding must be non-negative, got {p}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        Ok(())
    }
}

/// Padding `T·sup|b| + 6·sup|σ|·√T + M_y·max|c|·⌈λT + 3√(λT)⌉`, with the
/// coefficient bounds sampled over the interest interval, the time nodes and
/// the jump support.
pub fn default_padding(
    problem: &FbsdeProblem,
    interest: (f64, f64),
    partition: &TimePartition,
    my: usize,
) -> f64 {
    let (a, b) = interest;
    let t_max = partition.terminal_time();
    let samples = 33;
    let xs: Vec<f64> = (0..samples).map(|k| a + (b - a) * k as f64 / (samples - 1) as f64).collect();
    let ts: Vec<f64> = (0..samples).map(|k| t_max * k as f64 / (samples - 1) as f64).collect();
    let (lo, hi) = problem.measure().support();
    let es: Vec<f64> = (0..samples).map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64).collect();
    let mut sup_b: f64 = 0.0;
    let mut sup_sigma: f64 = 0.0;
    let mut sup_c: f64 = 0.0;
    for &t in &ts {
        for &x in &xs {
            sup_b = sup_b.max(problem.drift(t, x).abs());
            sup_sigma = sup_sigma.max(problem.diffusion(t, x).abs());
            for &e in &es {
                sup_c = sup_c.max(problem.jump(t, x, e).abs());
            }
        }
    }
    let lt = problem.measure().intensity() * t_max;
    let jumps = (lt + 3.0 * lt.sqrt()).ceil();
    t_max * sup_b + 6.0 * sup_sigma * t_max.sqrt() + my as f64 * sup_c * jumps
}

/// Mesh on the problem's domain with spacing `dx` and the configured padding.
pub fn computational_mesh(
    problem: &FbsdeProblem,
    partition: &TimePartition,
    config: &SolverConfig,
    dx: f64,
) -> Result<SpatialMesh> {
    let domain = problem.domain();
    let pad = config
        .padding
        .unwrap_or_else(|| default_padding(problem, domain, partition, config.my));
    SpatialMesh::padded(domain, dx, pad)
}

/// `(Y^N, Z^N, Γ^N)` from the terminal condition.
///
/// `Z^N = σ(T,x)φ'(x)` uses the supplied gradient or a central difference
/// with step `dx`; `Γ^N = ∫[φ(x + c(T,x,e)) − φ(x)]η(e)λ(de)` uses an
/// `n_gl`-point Gauss–Legendre rule on the jump support.
pub fn terminal_layer(
    problem: &FbsdeProblem,
    mesh: &SpatialMesh,
    n_gl: usize,
) -> Result<SolutionLayer> {
    let t = problem.horizon();
    let measure = problem.measure();
    let (lo, hi) = measure.support();
    let rule = gauss_legendre(n_gl, lo, hi)?;
    let lambda = measure.intensity();
    let h = mesh.dx();
    let pts = mesh.points();
    let mut y = Vec::with_capacity(pts.len());
    let mut z = Vec::with_capacity(pts.len());
    let mut gamma = Vec::with_capacity(pts.len());
    for &x in pts {
        let phi = problem.terminal(x);
        let grad = match problem.terminal_gradient() {
            Some(g) => g(x),
            None => (problem.terminal(x + h) - problem.terminal(x - h)) / (2.0 * h),
        };
        let g: f64 = rule
            .iter()
            .map(|(e, v)| {
                v * measure.density(e)
                    * (problem.terminal(x + problem.jump(t, x, e)) - phi)
                    * measure.eta(e)
            })
            .sum::<f64>()
            * lambda;
        y.push(phi);
        z.push(problem.diffusion(t, x) * grad);
        gamma.push(g);
    }
    SolutionLayer::new(None, t, y, z, gamma)
}

/// Fixed point of `y = rhs_fixed + (Δt/2)·f_partial(y)`, starting at `rhs_fixed`.
///
/// Stops when `|y_{k+1} − y_k| ≤ tol·max(1, |y_{k+1}|)`; returns the fixed
/// point and the number of evaluations of `f_partial`.
pub fn picard_solve_y<F: Fn(f64) -> f64>(
    rhs_fixed: f64,
    f_partial: F,
    dt: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, usize)> {
    let half_dt = 0.5 * dt;
    let mut y = rhs_fixed;
    let mut residual = f64::INFINITY;
    for k in 1..=max_iters {
        let next = rhs_fixed + half_dt * f_partial(y);
        residual = (next - y).abs();
        if !next.is_finite() {
            return Err(Error::PicardDiverged { iterations: k, residual });
        }
        y = next;
        if residual <= tol * y.abs().max(1.0) {
            return Ok((y, k));
        }
    }
    Err(Error::PicardDiverged { iterations: max_iters, residual })
}

/// Per-run statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub steps: usize,
    pub mesh_points: usize,
    pub atoms_y: usize,
    pub atoms_f: usize,
    pub max_picard_iters: usize,
    pub wall_time_s: f64,
}

struct PointResult {
    y: f64,
    z: f64,
    gamma: f64,
    iters: usize,
}

struct StepContext<'a> {
    problem: &'a FbsdeProblem,
    config: &'a SolverConfig,
    builder: &'a AtomGridBuilder,
    y_hat: PiecewiseLagrangeInterpolant<'a>,
    z_hat: PiecewiseLagrangeInterpolant<'a>,
    g_hat: PiecewiseLagrangeInterpolant<'a>,
    next: &'a SolutionLayer,
    t_n: f64,
    dt: f64,
}

impl StepContext<'_> {
    fn point(&self, i: usize, x: f64) -> Result<PointResult> {
        let (problem, config) = (self.problem, self.config);
        let (t_n, dt) = (self.t_n, self.dt);
        let t_next = t_n + dt;
        let grid = self.builder.build(problem, t_n, dt, x)?;

        let y_view = grid.view();
        let y_values = y_view.evaluate(|xp| self.y_hat.eval(xp))?;
        let ey = y_view.weighted_sums_centered(&y_values, self.next.y[i]);

        let f_view = grid.truncated(config.mf)?;
        let f_values = f_view.evaluate(|xp| {
            let yy = self.y_hat.eval(xp)?;
            let zz = self.z_hat.eval(xp)?;
            let gg = self.g_hat.eval(xp)?;
            Ok(problem.generator(t_next, xp, yy, zz, gg))
        })?;
        let f_here = problem.generator(t_next, x, self.next.y[i], self.next.z[i], self.next.gamma[i]);
        let ef = f_view.weighted_sums_centered(&f_values, f_here);

        let z = 2.0 / dt * (ey.brownian + dt * ef.brownian);
        let gamma = 2.0 / dt * (ey.jump + dt * ef.jump);
        let rhs = ey.plain + 0.5 * dt * ef.plain;
        let (y, iters) = picard_solve_y(
            rhs,
            |y| problem.generator(t_n, x, y, z, gamma),
            dt,
            config.picard_tol,
            config.picard_max_iters,
        )?;
        Ok(PointResult { y, z, gamma, iters })
    }
}

fn interpolant_policy(
    problem: &FbsdeProblem,
    boundary: BoundaryPolicy,
    t: f64,
) -> Result<[ExtrapolationPolicy; 3]> {
    match boundary {
        BoundaryPolicy::Extrapolate => Ok(Default::default()),
        BoundaryPolicy::Flat => Ok([
            ExtrapolationPolicy::Flat,
            ExtrapolationPolicy::Flat,
            ExtrapolationPolicy::Flat,
        ]),
        BoundaryPolicy::Analytic => {
            let exact = problem.exact().ok_or_else(|| {
                Error::Unsupported(format!(
                    "analytic boundary needs an exact solution for `{}`",
                    problem.name()
                ))
            })?;
            let (fy, fz, fg) = (exact.y.clone(), exact.z.clone(), exact.gamma.clone());
            Ok([
                ExtrapolationPolicy::Analytic(std::sync::Arc::new(move |x| fy(t, x))),
                ExtrapolationPolicy::Analytic(std::sync::Arc::new(move |x| fz(t, x))),
                ExtrapolationPolicy::Analytic(std::sync::Arc::new(move |x| fg(t, x))),
            ])
        }
    }
}

fn step_with(
    problem: &FbsdeProblem,
    mesh: &SpatialMesh,
    config: &SolverConfig,
    builder: &AtomGridBuilder,
    next: &SolutionLayer,
    level: usize,
    t_n: f64,
    dt: f64,
) -> Result<(SolutionLayer, usize)> {
    if next.len() != mesh.len() {
        return Err(Error::Usage(format!(
            "layer has {} values but the mesh has {} points",
            next.len(),
            mesh.len()
        )));
    }
    let [py, pz, pg] = interpolant_policy(problem, config.boundary, t_n + dt)?;
    let ctx = StepContext {
        problem,
        config,
        builder,
        y_hat: PiecewiseLagrangeInterpolant::new(mesh, &next.y, config.degree, py)?,
        z_hat: PiecewiseLagrangeInterpolant::new(mesh, &next.z, config.degree, pz)?,
        g_hat: PiecewiseLagrangeInterpolant::new(mesh, &next.gamma, config.degree, pg)?,
        next,
        t_n,
        dt,
    };
    let results: Vec<Result<PointResult>> = mesh
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            ctx.point(i, x).map_err(|e| Error::Step { level, index: i, source: Box::new(e) })
        })
        .collect();
    let mut y = Vec::with_capacity(results.len());
    let mut z = Vec::with_capacity(results.len());
    let mut gamma = Vec::with_capacity(results.len());
    let mut max_iters = 0;
    for r in results {
        let p = r?;
        y.push(p.y);
        z.push(p.z);
        gamma.push(p.gamma);
        max_iters = max_iters.max(p.iters);
    }
    let layer = SolutionLayer { level: Some(level), time: t_n, y, z, gamma };
    Ok((layer, max_iters))
}

/// One step from level `n + 1` (`next`) to level `n` at time `t_n`.
pub fn backward_step(
    problem: &FbsdeProblem,
    mesh: &SpatialMesh,
    config: &SolverConfig,
    next: &SolutionLayer,
    level: usize,
    t_n: f64,
    dt: f64,
) -> Result<SolutionLayer> {
    config.validate()?;
    let builder = AtomGridBuilder::new(problem.measure(), config.my, config.n_gh, config.n_gl)?;
    run_in_pool(config.threads, || {
        step_with(problem, mesh, config, &builder, next, level, t_n, dt).map(|(l, _)| l)
    })
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(f),
    }
}

/// Output of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Level-0 layer; `Y^0` approximates `u(0, ·)`.
    pub layer: SolutionLayer,
    pub diagnostics: Diagnostics,
}

/// Marches from `t_N = T` back to `t_0 = 0`.
pub fn solve(
    problem: &FbsdeProblem,
    mesh: &SpatialMesh,
    partition: &TimePartition,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    if (partition.terminal_time() - problem.horizon()).abs() > 1e-12 * problem.horizon().max(1.0) {
        return Err(Error::Config(format!(
            "partition ends at {} but the problem horizon is {}",
            partition.terminal_time(),
            problem.horizon()
        )));
    }
    let started = Instant::now();
    let builder = AtomGridBuilder::new(problem.measure(), config.my, config.n_gh, config.n_gl)?;
    let atoms_y = builder.atom_count();
    let atoms_f = config.n_gh
        * (0..=config.mf)
            .map(|m| config.n_gl.pow(m as u32))
            .sum::<usize>();
    let dt = partition.dt();
    let n_steps = partition.num_steps();

    run_in_pool(config.threads, || {
        let mut layer = terminal_layer(problem, mesh, config.n_gl)?;
        layer.level = Some(n_steps);
        let mut max_picard = 0;
        for n in (0..n_steps).rev() {
            let (next, iters) =
                step_with(problem, mesh, config, &builder, &layer, n, partition.node(n), dt)?;
            max_picard = max_picard.max(iters);
            layer = next;
        }
        Ok(Solution {
            layer,
            diagnostics: Diagnostics {
                steps: n_steps,
                mesh_points: mesh.len(),
                atoms_y,
                atoms_f,
                max_picard_iters: max_picard,
                wall_time_s: started.elapsed().as_secs_f64(),
            },
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{example1, exact_layer, FiniteActivityLevyMeasure, ProblemParams};
    use crate::quadrature::{poisson_cdf, poisson_pmf};

    #[test]
    fn picard_examples() {
        let (y, k) = picard_solve_y(3.0, |_| 0.0, 0.1, 1e-12, 50).unwrap();
        assert_eq!((y, k), (3.0, 1));

        let (y, _) = picard_solve_y(2.0, |y| -y, 0.1, 1e-14, 100).unwrap();
        assert!((y - 2.0 / 1.05).abs() < 1e-13);

        let err = picard_solve_y(1.0, |y| -10.0 * y, 0.5, 1e-12, 50).unwrap_err();
        assert!(matches!(err, Error::PicardDiverged { iterations: 50, .. }));
    }

    #[test]
    fn terminal_layer_example1() {
        let p = example1(&ProblemParams::default()).unwrap();
        let mesh = SpatialMesh::uniform((0.0, 1.0), 0.5).unwrap();
        let l = terminal_layer(&p, &mesh, 8).unwrap();
        assert!((l.z[0] - 1f64.cos()).abs() < 1e-15);
        let expected = 1.0 - 2f64.cos() - 2.0 * 1f64.sin();
        assert!((l.gamma[0] - expected).abs() < 1e-13);
        let exact = exact_layer(&p, &mesh, 1.0).unwrap();
        for i in 0..mesh.len() {
            assert_eq!(l.y[i], exact.y[i]);
            assert!((l.gamma[i] - exact.gamma[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn terminal_layer_flat_data_and_fd_gradient() {
        let m = FiniteActivityLevyMeasure::symmetric_indicator(1.0).unwrap();
        let p = FbsdeProblem::new(m.clone(), 1.0)
            .with_diffusion(|_, _| 1.0)
            .with_jump(|_, _, e| e)
            .with_terminal(|_| 4.0);
        let mesh = SpatialMesh::uniform((0.0, 1.0), 0.25).unwrap();
        let l = terminal_layer(&p, &mesh, 8).unwrap();
        assert!(l.z.iter().all(|&z| z == 0.0));
        assert!(l.gamma.iter().all(|&g| g == 0.0));

        let p = FbsdeProblem::new(m, 1.0)
            .with_diffusion(|_, _| 2.0)
            .with_terminal(|x| x * x);
        let mesh = SpatialMesh::uniform((0.0, 1.0), 0.01).unwrap();
        let l = terminal_layer(&p, &mesh, 8).unwrap();
        for (i, &x) in mesh.points().iter().enumerate() {
            assert!((l.z[i] - 4.0 * x).abs() < 1e-10);
        }
    }

    fn zero_generator_problem(k: f64) -> FbsdeProblem {
        let m = FiniteActivityLevyMeasure::symmetric_indicator(1.0).unwrap();
        FbsdeProblem::new(m, 1.0)
            .with_diffusion(|_, _| 1.0)
            .with_jump(|_, _, e| e)
            .with_terminal(move |_| k)
    }

    #[test]
    fn constant_layer_one_step() {
        let k = 1.5;
        let p = zero_generator_problem(k);
        let mesh = SpatialMesh::padded((0.0, 1.0), 0.1, 1.0).unwrap();
        let next = terminal_layer(&p, &mesh, 8).unwrap();
        let dt = 1.0 / 16.0;
        let lam_dt = 2.0 * dt;
        for (my, mf) in [(0, 0), (1, 0), (2, 1), (3, 2)] {
            let cfg = SolverConfig { my, mf, ..Default::default() };
            let l = backward_step(&p, &mesh, &cfg, &next, 15, 1.0 - dt, dt).unwrap();
            let py = poisson_cdf(lam_dt, my as i64);
            let bound = 2.0 * k * poisson_pmf(lam_dt, my);
            for i in 0..mesh.len() {
                assert!((l.y[i] - k * py).abs() < 1e-13);
                assert!(l.z[i].abs() < 1e-12);
                // centring removes the truncated compensator exactly
                assert!(l.gamma[i].abs() < 1e-13);
                assert!(l.gamma[i].abs() <= bound);
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig { my: 1, mf: 2, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { picard_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { picard_max_iters: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { degree: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn default_padding_example1() {
        let p = example1(&ProblemParams::default()).unwrap();
        let tp = TimePartition::new(1.0, 16).unwrap();
        let pad = default_padding(&p, (0.0, 1.0), &tp, 2);
        // 0 + 6·1·1 + 2·1·⌈2 + 3√2⌉ = 6 + 14
        assert!((pad - 20.0).abs() < 1e-12, "{pad}");
    }
}
