//! Domain types: time partition, spatial mesh, jump measure, problem
//! definition, solution layers, and the registry of test problems.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Uniform partition `0 = t_0 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    terminal_time: f64,
    num_steps: usize,
}

impl TimePartition {
    pub fn new(terminal_time: f64, num_steps: usize) -> Result<Self> {
        if !(terminal_time > 0.0) || !terminal_time.is_finite() {
            return Err(Error::Config(format!(
                "terminal time must be positive, got {terminal_time}"
            )));
        }
        if num_steps == 0 {
            return Err(Error::Config("number of time steps must be positive".into()));
        }
        Ok(Self { terminal_time, num_steps })
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn dt(&self) -> f64 {
        self.terminal_time / self.num_steps as f64
    }

    /// `t_n`, with `t_N` pinned to `T` exactly.
    pub fn node(&self, n: usize) -> f64 {
        if n >= self.num_steps {
            self.terminal_time
        } else {
            self.terminal_time * n as f64 / self.num_steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.num_steps).map(|n| self.node(n)).collect()
    }
}

/// Uniform 1D mesh anchored at the left end of the interest interval and
/// padded on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMesh {
    points: Vec<f64>,
    dx: f64,
    interest: (f64, f64),
}

impl SpatialMesh {
    /// Mesh `a + k·dx` covering `[a - pad, b + pad]`.
    pub fn padded(interest: (f64, f64), dx: f64, pad: f64) -> Result<Self> {
        let (a, b) = interest;
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("invalid interest interval [{a}, {b}]")));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::Config(format!("mesh spacing must be positive, got {dx}")));
        }
        if !(pad >= 0.0) || !pad.is_finite() {
            return Err(Error::Config(format!("padding must be non-negative, got {pad}")));
        }
        let slack = 1e-9;
        let lo = -((pad / dx - slack).ceil() as i64).max(0);
        let hi = (((b - a) + pad) / dx - slack).ceil().max(0.0) as i64;
        let points: Vec<f64> = (lo..=hi).map(|k| a + k as f64 * dx).collect();
        if points.len() < 2 {
            return Err(Error::Config("mesh must contain at least two points".into()));
        }
        Ok(Self { points, dx, interest })
    }

    /// Mesh on exactly `[a, b]`.
    pub fn uniform(interest: (f64, f64), dx: f64) -> Result<Self> {
        Self::padded(interest, dx, 0.0)
    }

    /// Validates an explicit point set; non-uniform spacing is rejected.
    pub fn from_points(points: Vec<f64>, interest: (f64, f64)) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("mesh must contain at least two points".into()));
        }
        let dx = points[1] - points[0];
        if !(dx > 0.0) {
            return Err(Error::Config("mesh points must be strictly increasing".into()));
        }
        for w in points.windows(2) {
            let h = w[1] - w[0];
            if !(h > 0.0) {
                return Err(Error::Config("mesh points must be strictly increasing".into()));
            }
            if (h - dx).abs() > 1e-9 * dx {
                return Err(Error::Config(format!(
                    "mesh must be uniform: spacing {h} differs from {dx}"
                )));
            }
        }
        let (a, b) = interest;
        if !(a <= b) || a < points[0] || b > points[points.len() - 1] {
            return Err(Error::Config(format!(
                "interest interval [{a}, {b}] must lie inside the mesh"
            )));
        }
        Ok(Self { points, dx, interest })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn interest_interval(&self) -> (f64, f64) {
        self.interest
    }

    pub fn padded_extent(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// Indices of mesh points inside `[lo, hi]` (with a relative slack of
    /// `1e-9·dx` so nodes sitting on the boundary are included).
    pub fn indices_within(&self, lo: f64, hi: f64) -> RangeInclusive<usize> {
        let slack = 1e-9 * self.dx;
        let first = self.points.iter().position(|&x| x >= lo - slack).unwrap_or(self.len());
        let last = self
            .points
            .iter()
            .rposition(|&x| x <= hi + slack)
            .unwrap_or(0);
        if first > last {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        first..=last
    }

    pub fn interest_indices(&self) -> RangeInclusive<usize> {
        let (a, b) = self.interest;
        self.indices_within(a, b)
    }
}

/// Weighted integrals of the jump-size density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureMoments {
    /// `∫ρ de`
    pub mass: f64,
    /// `∫ηρ de`
    pub eta_mean: f64,
    /// `∫η²ρ de`
    pub eta_square_mean: f64,
}

/// `λ(de) = λ ρ(e) de` with compact support.
#[derive(Clone)]
pub struct FiniteActivityLevyMeasure {
    intensity: f64,
    support: (f64, f64),
    density: ScalarFn,
    eta: ScalarFn,
    quantile: ScalarFn,
    moments: MeasureMoments,
    eta_bound: f64,
}

impl fmt::Debug for FiniteActivityLevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteActivityLevyMeasure")
            .field("intensity", &self.intensity)
            .field("support", &self.support)
            .field("moments", &self.moments)
            .finish_non_exhaustive()
    }
}

const MOMENT_PANELS: usize = 64;
const MOMENT_NODES: usize = 16;
const MASS_TOLERANCE: f64 = 1e-12;

impl FiniteActivityLevyMeasure {
    /// `quantile` maps `u ∈ (0, 1)` to a jump size distributed as `ρ`.
    pub fn new(
        intensity: f64,
        support: (f64, f64),
        density: ScalarFn,
        eta: ScalarFn,
        quantile: ScalarFn,
    ) -> Result<Self> {
        if !(intensity > 0.0) || !intensity.is_finite() {
            return Err(Error::Config(format!(
                "jump intensity must be finite and positive, got {intensity}"
            )));
        }
        let (lo, hi) = support;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("invalid jump support [{lo}, {hi}]")));
        }
        let panel = gauss_legendre(MOMENT_NODES, 0.0, 1.0)?;
        let width = (hi - lo) / MOMENT_PANELS as f64;
        let mut mass = 0.0;
        let mut eta_mean = 0.0;
        let mut eta_square_mean = 0.0;
        let mut eta_bound: f64 = 0.0;
        for k in 0..MOMENT_PANELS {
            let left = lo + k as f64 * width;
            for (s, w) in panel.iter() {
                let e = left + s * width;
                let r = density(e) * w * width;
                let h = eta(e);
                eta_bound = eta_bound.max(h.abs());
                mass += r;
                eta_mean += h * r;
                eta_square_mean += h * h * r;
            }
        }
        if !eta_bound.is_finite() {
            return Err(Error::Config("η must be bounded on the jump support".into()));
        }
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Config(format!(
                "jump-size density must integrate to one, got {mass}"
            )));
        }
        Ok(Self {
            intensity,
            support,
            density,
            eta,
            quantile,
            moments: MeasureMoments { mass, eta_mean, eta_square_mean },
            eta_bound,
        })
    }

    /// Uniform jump sizes on `[lo, hi]` with the given intensity and `η ≡ 1`.
    pub fn uniform(lo: f64, hi: f64, intensity: f64) -> Result<Self> {
        let width = hi - lo;
        Self::new(
            intensity,
            (lo, hi),
            Arc::new(move |e| if (lo..=hi).contains(&e) { 1.0 / width } else { 0.0 }),
            Arc::new(|_| 1.0),
            Arc::new(move |u| lo + width * u),
        )
    }

    /// `λ(de) = 1_{[-δ, δ]}(e) de`: intensity `2δ`, uniform jump sizes.
    pub fn symmetric_indicator(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config(format!("δ must be positive, got {delta}")));
        }
        Self::uniform(-delta, delta, 2.0 * delta)
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn density(&self, e: f64) -> f64 {
        (self.density)(e)
    }

    pub fn eta(&self, e: f64) -> f64 {
        (self.eta)(e)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        (self.quantile)(u)
    }

    pub fn moments(&self) -> MeasureMoments {
        self.moments
    }

    /// Largest `|η|` seen on the moment quadrature nodes.
    pub fn eta_bound(&self) -> f64 {
        self.eta_bound
    }
}

/// Exact `(Y, Z, Γ)` as functions of `(t, x)`.
#[derive(Clone)]
pub struct ExactSolution {
    pub y: CoefficientFn,
    pub z: CoefficientFn,
    pub gamma: CoefficientFn,
}

/// A decoupled FBSDE with jumps in one space dimension.
///
/// Coefficients are stored as shared closures. Unset coefficients default to
/// zero, so `FbsdeProblem::new(measure, T)` is the pure-jump, zero-generator
/// problem with vanishing terminal data.
#[derive(Clone)]
pub struct FbsdeProblem {
    name: String,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    jump: JumpFn,
    generator: GeneratorFn,
    terminal: ScalarFn,
    terminal_gradient: Option<ScalarFn>,
    measure: FiniteActivityLevyMeasure,
    horizon: f64,
    domain: (f64, f64),
    exact: Option<ExactSolution>,
}

impl fmt::Debug for FbsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbsdeProblem")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("measure", &self.measure)
            .field("has_exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

impl FbsdeProblem {
    pub fn new(measure: FiniteActivityLevyMeasure, horizon: f64) -> Self {
        Self {
            name: "custom".into(),
            drift: Arc::new(|_, _| 0.0),
            diffusion: Arc::new(|_, _| 0.0),
            jump: Arc::new(|_, _, _| 0.0),
            generator: Arc::new(|_, _, _, _, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            terminal_gradient: None,
            measure,
            horizon,
            domain: (0.0, 1.0),
            exact: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_drift(mut self, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(b);
        self
    }

    pub fn with_diffusion(
        mut self,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Arc::new(sigma);
        self
    }

    pub fn with_jump(
        mut self,
        c: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.jump = Arc::new(c);
        self
    }

    pub fn with_generator(
        mut self,
        f: impl Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.generator = Arc::new(f);
        self
    }

    pub fn with_terminal(mut self, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(phi);
        self
    }

    pub fn with_terminal_gradient(
        mut self,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal_gradient = Some(Arc::new(dphi));
        self
    }

    pub fn with_domain(mut self, domain: (f64, f64)) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    #[inline]
    pub fn jump(&self, t: f64, x: f64, e: f64) -> f64 {
        (self.jump)(t, x, e)
    }

    #[inline]
    pub fn generator(&self, t: f64, x: f64, y: f64, z: f64, gamma: f64) -> f64 {
        (self.generator)(t, x, y, z, gamma)
    }

    #[inline]
    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    pub fn terminal_gradient(&self) -> Option<&ScalarFn> {
        self.terminal_gradient.as_ref()
    }

    pub fn measure(&self) -> &FiniteActivityLevyMeasure {
        &self.measure
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Interval on which errors are reported.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn exact(&self) -> Option<&ExactSolution> {
        self.exact.as_ref()
    }
}

/// Values of `(Y, Z, Γ)` on every mesh point at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionLayer {
    /// Time level `n`, when the layer came out of a time march.
    pub level: Option<usize>,
    pub time: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SolutionLayer {
    pub fn new(
        level: Option<usize>,
        time: f64,
        y: Vec<f64>,
        z: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        if y.len() != z.len() || y.len() != gamma.len() {
            return Err(Error::Usage(format!(
                "layer arrays differ in length: {} / {} / {}",
                y.len(),
                z.len(),
                gamma.len()
            )));
        }
        let layer = Self { level, time, y, z, gamma };
        if let Some(i) = layer.first_non_finite() {
            return Err(Error::Usage(format!("layer has a non-finite entry at index {i}")));
        }
        Ok(layer)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn first_non_finite(&self) -> Option<usize> {
        (0..self.y.len())
            .find(|&i| !(self.y[i].is_finite() && self.z[i].is_finite() && self.gamma[i].is_finite()))
    }
}

/// Evaluates the attached exact solution on every mesh point at time `t`.
pub fn exact_layer(problem: &FbsdeProblem, mesh: &SpatialMesh, t: f64) -> Result<SolutionLayer> {
    let exact = problem.exact().ok_or_else(|| {
        Error::Unsupported(format!("problem `{}` has no exact solution", problem.name()))
    })?;
    let pts = mesh.points();
    Ok(SolutionLayer {
        level: None,
        time: t,
        y: pts.iter().map(|&x| (exact.y)(t, x)).collect(),
        z: pts.iter().map(|&x| (exact.z)(t, x)).collect(),
        gamma: pts.iter().map(|&x| (exact.gamma)(t, x)).collect(),
    })
}

/// Parameters shared by the registry problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Half-width of the jump-size support.
    pub delta: f64,
    pub horizon: f64,
    pub domain: (f64, f64),
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self { delta: 1.0, horizon: 1.0, domain: (0.0, 1.0) }
    }
}

/// Stable identifiers accepted by [`registry_get`].
pub const PROBLEM_NAMES: [&str; 2] = ["example1", "example2"];

pub fn registry_get(name: &str, params: &ProblemParams) -> Result<FbsdeProblem> {
    match name {
        "example1" => example1(params),
        "example2" => example2(params),
        other => Err(Error::NotFound(other.to_string())),
    }
}

/// Brownian motion plus uniform jumps, nonlinear generator, bounded solution
/// `Y = sin(x + t) + 2`.
pub fn example1(params: &ProblemParams) -> Result<FbsdeProblem> {
    let delta = params.delta;
    let horizon = params.horizon;
    let measure = FiniteActivityLevyMeasure::symmetric_indicator(delta)?;
    let exact = ExactSolution {
        y: Arc::new(|t, x| (x + t).sin() + 2.0),
        z: Arc::new(|t, x| (x + t).cos()),
        gamma: Arc::new(move |t, x| {
            (x + t - delta).cos() - (x + t + delta).cos() - 2.0 * delta * (x + t).sin()
        }),
    };
    Ok(FbsdeProblem::new(measure, horizon)
        .with_name("example1")
        .with_domain(params.domain)
        .with_drift(|_, _| 0.0)
        .with_diffusion(|_, _| 1.0)
        .with_jump(|_, _, e| e)
        .with_generator(|t, x, y, z, gamma| {
            let s = (x + t).sin() + 2.0;
            (y - 2.0) * y.exp() / (2.0 * s.exp()) - z * y / s - gamma
        })
        .with_terminal(move |x| (x + horizon).sin() + 2.0)
        .with_terminal_gradient(move |x| (x + horizon).cos())
        .with_exact(exact))
}

/// State-dependent drift and diffusion, exponential solution
/// `Y = (sin t + 2) e^{-x}`.
///
/// The generator carries the source term `−cos(t)·e^{-x}`; without it the
/// stated closed form would not satisfy the backward equation.
pub fn example2(params: &ProblemParams) -> Result<FbsdeProblem> {
    let delta = params.delta;
    let horizon = params.horizon;
    let measure = FiniteActivityLevyMeasure::symmetric_indicator(delta)?;
    let sigma = |t: f64, x: f64| x.cos() + t + 2.0;
    let exact = ExactSolution {
        y: Arc::new(|t, x| (t.sin() + 2.0) * (-x).exp()),
        z: Arc::new(move |t, x| -sigma(t, x) * (t.sin() + 2.0) * (-x).exp()),
        gamma: Arc::new(move |t, x| {
            (t.sin() + 2.0)
                * ((-x + delta).exp() - (-x - delta).exp() - 2.0 * delta * (-x).exp())
        }),
    };
    Ok(FbsdeProblem::new(measure, horizon)
        .with_name("example2")
        .with_domain(params.domain)
        .with_drift(|t, x| (2.0 * x + t).sin())
        .with_diffusion(sigma)
        .with_jump(|_, _, e| e)
        .with_generator(move |t, x, y, z, gamma| {
            let s = sigma(t, x);
            -(2.0 * x + t).sin() * y * z / (s * (t.sin() + 2.0) * (-x).exp())
                - 0.5 * s * s * y
                - gamma
                - t.cos() * (-x).exp()
        })
        .with_terminal(move |x| (horizon.sin() + 2.0) * (-x).exp())
        .with_terminal_gradient(move |x| -(horizon.sin() + 2.0) * (-x).exp())
        .with_exact(exact))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_exact_values() {
        let p = ProblemParams::default();
        let e1 = registry_get("example1", &p).unwrap();
        let ex = e1.exact().unwrap();
        assert_eq!((ex.y)(0.0, 0.0), 2.0);
        assert!((ex.gamma)(0.0, 0.0).abs() < 1e-15);

        let e2 = registry_get("example2", &p).unwrap();
        let ex = e2.exact().unwrap();
        assert!(((ex.z)(0.0, 0.0) + 6.0).abs() < 1e-14);

        assert!(matches!(registry_get("example3", &p), Err(Error::NotFound(_))));
    }

    #[test]
    fn exact_layer_values() {
        let p = ProblemParams::default();
        let mesh = SpatialMesh::padded((0.0, 1.0), 0.125, 0.5).unwrap();
        let e1 = example1(&p).unwrap();
        let layer = exact_layer(&e1, &mesh, 0.0).unwrap();
        for (i, &x) in mesh.points().iter().enumerate() {
            assert_eq!(layer.y[i], x.sin() + 2.0);
        }
        let at_t = exact_layer(&e1, &mesh, 1.0).unwrap();
        for (i, &x) in mesh.points().iter().enumerate() {
            assert_eq!(at_t.y[i], e1.terminal(x));
        }

        let e2 = example2(&p).unwrap();
        let mesh0 = SpatialMesh::uniform((0.0, 1.0), 0.5).unwrap();
        let layer = exact_layer(&e2, &mesh0, 0.0).unwrap();
        let expected = 2.0 * (1f64.exp() - (-1f64).exp() - 2.0);
        assert!((layer.gamma[0] - expected).abs() < 1e-14);
        assert!((layer.gamma[0] - 0.700_805).abs() < 1e-6);

        let custom = FbsdeProblem::new(FiniteActivityLevyMeasure::symmetric_indicator(1.0).unwrap(), 1.0);
        assert!(matches!(exact_layer(&custom, &mesh0, 0.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn measure_moments() {
        for delta in [0.5, 1.0, 2.0] {
            let m = FiniteActivityLevyMeasure::symmetric_indicator(delta).unwrap();
            let mo = m.moments();
            assert!((mo.mass - 1.0).abs() < 1e-12);
            assert!((mo.eta_mean - 1.0).abs() < 1e-12);
            assert!((mo.eta_square_mean - 1.0).abs() < 1e-12);
            assert_eq!(m.intensity(), 2.0 * delta);
        }
        let bad = FiniteActivityLevyMeasure::new(
            1.0,
            (0.0, 1.0),
            Arc::new(|_| 2.0),
            Arc::new(|_| 1.0),
            Arc::new(|u| u),
        );
        assert!(bad.is_err());
        assert!(FiniteActivityLevyMeasure::uniform(0.0, 1.0, 0.0).is_err());
        assert!(FiniteActivityLevyMeasure::uniform(0.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn mesh_construction() {
        let mesh = SpatialMesh::padded((0.0, 1.0), 0.25, 0.5).unwrap();
        assert_eq!(mesh.points(), &[-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]);
        assert_eq!(mesh.interest_indices(), 2..=6);
        assert_eq!(mesh.padded_extent(), (-0.5, 1.5));

        let mesh = SpatialMesh::padded((0.0, 1.0), 0.01, 14.0).unwrap();
        assert_eq!(mesh.interest_indices().count(), 101);
        let (lo, hi) = mesh.padded_extent();
        assert!(lo <= -14.0 + 1e-12 && hi >= 15.0 - 1e-12);

        assert!(SpatialMesh::from_points(vec![0.0, 0.1, 0.3], (0.0, 0.3)).is_err());
        assert!(SpatialMesh::from_points(vec![0.0, 0.1, 0.05], (0.0, 0.1)).is_err());
        assert!(SpatialMesh::from_points(vec![0.0, 0.5, 1.0], (0.0, 1.0)).is_ok());
        assert!(SpatialMesh::uniform((0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn time_partition() {
        let tp = TimePartition::new(1.0, 16).unwrap();
        let nodes = tp.nodes();
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[16], 1.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tp.dt(), 0.0625);
        assert!(TimePartition::new(1.0, 0).is_err());
        assert!(TimePartition::new(-1.0, 4).is_err());
    }

    #[test]
    fn layer_validation() {
        assert!(SolutionLayer::new(Some(0), 0.0, vec![1.0], vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(SolutionLayer::new(Some(0), 0.0, vec![f64::NAN], vec![1.0], vec![0.0]).is_err());
        assert!(SolutionLayer::new(Some(0), 0.0, vec![1.0], vec![1.0], vec![0.0]).is_ok());
    }

    /// `u_t + b u_x + ½σ² u_xx + ∫[u(x+c) − u]λ(de) + f(u, σu_x, Γ)` by finite
    /// differences and midpoint quadrature.
    fn pide_residual(p: &FbsdeProblem, t: f64, x: f64) -> f64 {
        let ex = p.exact().unwrap();
        let u = |t: f64, x: f64| (ex.y)(t, x);
        let h = 1e-4;
        let ut = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
        let ux = (u(t, x + h) - u(t, x - h)) / (2.0 * h);
        let uxx = (u(t, x + h) - 2.0 * u(t, x) + u(t, x - h)) / (h * h);
        let m = p.measure();
        let (lo, hi) = m.support();
        let n = 4000;
        let w = (hi - lo) / n as f64;
        let jumps: f64 = (0..n)
            .map(|k| {
                let e = lo + (k as f64 + 0.5) * w;
                w * m.intensity() * m.density(e) * (u(t, x + p.jump(t, x, e)) - u(t, x))
            })
            .sum();
        let (b, s) = (p.drift(t, x), p.diffusion(t, x));
        ut + b * ux + 0.5 * s * s * uxx + jumps + p.generator(t, x, u(t, x), s * ux, (ex.gamma)(t, x))
    }

    #[test]
    fn exact_solutions_satisfy_the_pide() {
        let params = ProblemParams::default();
        for name in ["example1", "example2"] {
            let p = registry_get(name, &params).unwrap();
            for &(t, x) in &[(0.0, 0.0), (0.3, 0.7), (0.9, -0.4)] {
                let r = pide_residual(&p, t, x);
                assert!(r.abs() < 1e-5, "{name} at ({t}, {x}): residual {r}");
            }
        }
    }
}
