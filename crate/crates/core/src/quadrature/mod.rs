//! Gaussian rules and the one-step Poisson-mixture expectation operators.
//!
//! Conditioned on `X^n = x`, the Euler image after one step is
//!
//! ```text
//! x' = x + b·Δt + σ·√Δt·ξ + Σ_{k≤m} c(e_k) − Δt·λ∫c ρ de
//! ```
//!
//! with `ξ ~ N(0,1)`, `m ~ Poisson(λΔt)` and `e_k ~ ρ`. An [`AtomGrid`] is the
//! finite weighted point set obtained by truncating the Poisson sum at `M`
//! jumps, integrating `ξ` with a Gauss–Hermite rule, and integrating every jump
//! size with a Gauss–Legendre rule against `ρ`.
//!
//! The Brownian weight `ΔW̃ = (√Δt/2)(ξ + √3 ξ̃)` and the jump weight
//! `Δμ̃* = Σ(2 − 3u_k)η(e_k) − (λΔt/2)∫ηρ` are integrated in closed form over
//! the auxiliary variables `ξ̃` and `u_k`, because the Euler image depends on
//! neither: `E[ξ̃] = 0` and `E[2 − 3u] = 1/2`. The [`reference`] module keeps
//! the fully expanded quadrature for cross-checking.

mod rules;
pub mod reference;

use std::sync::Arc;

pub use rules::{gauss_hermite_normal, gauss_legendre, MeasureKind, QuadratureRule1D, MAX_RULE_SIZE};

use crate::error::{Error, Result};
use crate::problem::{FbsdeProblem, FiniteActivityLevyMeasure};

/// `P(N = m)` for `N ~ Poisson(mean)`.
pub fn poisson_pmf(mean: f64, m: usize) -> f64 {
    let mut p = (-mean).exp();
    for k in 1..=m {
        p *= mean / k as f64;
    }
    p
}

/// `P(N ≤ m)` for `N ~ Poisson(mean)`; zero for negative `m`.
pub fn poisson_cdf(mean: f64, m: i64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    (0..=m as usize).map(|k| poisson_pmf(mean, k)).sum()
}

/// Jump-size tensor products shared by every grid point with the same
/// measure, truncation and rule sizes.
#[derive(Debug, Clone)]
pub struct JumpTable {
    nodes: Vec<f64>,
    /// `v_j · ρ(q_j)`
    node_weights: Vec<f64>,
    node_eta: Vec<f64>,
    branches: Vec<BranchTable>,
}

#[derive(Debug, Clone)]
struct BranchTable {
    jumps: usize,
    /// Flattened node indices, `jumps` per tuple.
    tuples: Vec<u16>,
    weights: Vec<f64>,
    eta_sums: Vec<f64>,
}

impl BranchTable {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn tuple(&self, j: usize) -> &[u16] {
        &self.tuples[j * self.jumps..(j + 1) * self.jumps]
    }
}

impl JumpTable {
    pub fn new(measure: &FiniteActivityLevyMeasure, max_jumps: usize, n_gl: usize) -> Result<Self> {
        let (lo, hi) = measure.support();
        let rule = gauss_legendre(n_gl, lo, hi)?;
        let nodes = rule.nodes().to_vec();
        let node_weights: Vec<f64> = rule.iter().map(|(q, v)| v * measure.density(q)).collect();
        let node_eta: Vec<f64> = nodes.iter().map(|&q| measure.eta(q)).collect();
        let count_limit = 50_000_000usize;
        let mut branches = Vec::with_capacity(max_jumps + 1);
        for m in 0..=max_jumps {
            let count = n_gl
                .checked_pow(m as u32)
                .filter(|&c| c <= count_limit)
                .ok_or_else(|| {
                    Error::Config(format!("{n_gl}^{m} jump tuples exceed the supported size"))
                })?;
            let mut tuples = Vec::with_capacity(count * m);
            let mut weights = Vec::with_capacity(count);
            let mut eta_sums = Vec::with_capacity(count);
            let mut digits = vec![0usize; m];
            for _ in 0..count {
                let mut w = 1.0;
                let mut s = 0.0;
                for &d in &digits {
                    tuples.push(d as u16);
                    w *= node_weights[d];
                    s += node_eta[d];
                }
                weights.push(w);
                eta_sums.push(s);
                // odometer increment, last digit fastest
                for pos in (0..m).rev() {
                    digits[pos] += 1;
                    if digits[pos] < n_gl {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
            branches.push(BranchTable { jumps: m, tuples, weights, eta_sums });
        }
        Ok(Self { nodes, node_weights, node_eta, branches })
    }

    pub fn max_jumps(&self) -> usize {
        self.branches.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn node_eta(&self) -> &[f64] {
        &self.node_eta
    }

    /// Number of jump tuples in branch `m`.
    pub fn tuples_in_branch(&self, m: usize) -> usize {
        self.branches[m].len()
    }
}

/// One weighted point of the one-step expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    /// Euler image `x'`.
    pub location: f64,
    /// `P_m · w_GH · Π v_k ρ(q_k)`
    pub weight: f64,
    /// Gauss–Hermite node `ξ`.
    pub xi: f64,
    /// `Σ_k η(e_k)` over the jumps of this atom.
    pub eta_sum: f64,
    /// Number of jumps `m`.
    pub jumps: usize,
    tuple: usize,
}

/// Reusable factory for atom grids at many points of one time level.
#[derive(Debug, Clone)]
pub struct AtomGridBuilder {
    hermite: QuadratureRule1D,
    table: Arc<JumpTable>,
    intensity: f64,
    eta_mean: f64,
}

impl AtomGridBuilder {
    pub fn new(
        measure: &FiniteActivityLevyMeasure,
        max_jumps: usize,
        n_gh: usize,
        n_gl: usize,
    ) -> Result<Self> {
        Ok(Self {
            hermite: gauss_hermite_normal(n_gh)?,
            table: Arc::new(JumpTable::new(measure, max_jumps, n_gl)?),
            intensity: measure.intensity(),
            eta_mean: measure.moments().eta_mean,
        })
    }

    pub fn max_jumps(&self) -> usize {
        self.table.max_jumps()
    }

    /// Atom count `n_gh · Σ_{m≤M} n_gl^m`.
    pub fn atom_count(&self) -> usize {
        self.hermite.len()
            * (0..=self.max_jumps())
                .map(|m| self.table.tuples_in_branch(m))
                .sum::<usize>()
    }

    pub fn build(&self, problem: &FbsdeProblem, t_n: f64, dt: f64, x: f64) -> Result<AtomGrid> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let table = &self.table;
        let lambda_dt = self.intensity * dt;
        let b = problem.drift(t_n, x);
        let sigma = problem.diffusion(t_n, x);
        let jump_sizes: Vec<f64> = table.nodes.iter().map(|&q| problem.jump(t_n, x, q)).collect();
        let compensator: f64 = jump_sizes
            .iter()
            .zip(&table.node_weights)
            .map(|(c, w)| c * w)
            .sum::<f64>()
            * lambda_dt;
        let base = x + b * dt - compensator;
        let scale = sigma * dt.sqrt();

        let mut atoms = Vec::with_capacity(self.atom_count());
        let mut branch_ends = Vec::with_capacity(table.branches.len());
        let mut poisson = Vec::with_capacity(table.branches.len());
        for branch in &table.branches {
            let p_m = poisson_pmf(lambda_dt, branch.jumps);
            poisson.push(p_m);
            for j in 0..branch.len() {
                let shift: f64 = branch.tuple(j).iter().map(|&d| jump_sizes[d as usize]).sum();
                let w_jump = p_m * branch.weights[j];
                let eta_sum = branch.eta_sums[j];
                for (s, w) in self.hermite.iter() {
                    atoms.push(Atom {
                        location: base + scale * s + shift,
                        weight: w_jump * w,
                        xi: s,
                        eta_sum,
                        jumps: branch.jumps,
                        tuple: j,
                    });
                }
            }
            branch_ends.push(atoms.len());
        }
        Ok(AtomGrid {
            origin: (t_n, x),
            dt,
            intensity: self.intensity,
            eta_mean: self.eta_mean,
            atoms,
            branch_ends,
            poisson,
            table: Arc::clone(&self.table),
        })
    }
}

/// Builds a one-off grid; use [`AtomGridBuilder`] when many grid points share
/// the same rules.
pub fn build_atom_grid(
    problem: &FbsdeProblem,
    t_n: f64,
    dt: f64,
    x: f64,
    max_jumps: usize,
    n_gh: usize,
    n_gl: usize,
) -> Result<AtomGrid> {
    AtomGridBuilder::new(problem.measure(), max_jumps, n_gh, n_gl)?.build(problem, t_n, dt, x)
}

/// Weighted point set realizing the truncated one-step expectation at `(t_n, x)`.
#[derive(Debug, Clone)]
pub struct AtomGrid {
    origin: (f64, f64),
    dt: f64,
    intensity: f64,
    eta_mean: f64,
    atoms: Vec<Atom>,
    branch_ends: Vec<usize>,
    poisson: Vec<f64>,
    table: Arc<JumpTable>,
}

impl AtomGrid {
    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// `∫ηρ de`
    pub fn eta_mean(&self) -> f64 {
        self.eta_mean
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn max_jumps(&self) -> usize {
        self.branch_ends.len() - 1
    }

    /// `P_m` for `m = 0..=M`.
    pub fn poisson_weights(&self) -> &[f64] {
        &self.poisson
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Jump sizes `(e_1, …, e_m)` of an atom.
    pub fn jump_sizes(&self, atom: &Atom) -> Vec<f64> {
        self.table.branches[atom.jumps]
            .tuple(atom.tuple)
            .iter()
            .map(|&d| self.table.nodes[d as usize])
            .collect()
    }

    /// Every retained branch.
    pub fn view(&self) -> AtomView<'_> {
        AtomView { grid: self, end: self.atoms.len(), max_jumps: self.max_jumps() }
    }

    /// Branches `m ≤ max_jumps` only.
    pub fn truncated(&self, max_jumps: usize) -> Result<AtomView<'_>> {
        if max_jumps > self.max_jumps() {
            return Err(Error::Config(format!(
                "cannot truncate a grid built with {} jumps to {max_jumps}",
                self.max_jumps()
            )));
        }
        Ok(AtomView { grid: self, end: self.branch_ends[max_jumps], max_jumps })
    }
}

/// The three weighted expectations of one integrand.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightedExpectations {
    /// `Ê[V]`
    pub plain: f64,
    /// `Ê[V·ΔW̃]`
    pub brownian: f64,
    /// `Ê[V·Δμ̃*]`
    pub jump: f64,
}

/// A prefix of an [`AtomGrid`] holding the branches `m ≤ max_jumps`.
#[derive(Debug, Clone, Copy)]
pub struct AtomView<'a> {
    grid: &'a AtomGrid,
    end: usize,
    max_jumps: usize,
}

impl<'a> AtomView<'a> {
    pub fn grid(&self) -> &'a AtomGrid {
        self.grid
    }

    pub fn atoms(&self) -> &'a [Atom] {
        &self.grid.atoms[..self.end]
    }

    pub fn max_jumps(&self) -> usize {
        self.max_jumps
    }

    pub fn len(&self) -> usize {
        self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end == 0
    }

    /// Evaluates `V` on every atom, failing on the first non-finite value.
    pub fn evaluate<F>(&self, mut v: F) -> Result<Vec<f64>>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        self.atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let value = v(a.location)?;
                if !value.is_finite() {
                    return Err(Error::NonFiniteAtom { atom: i, location: a.location, value });
                }
                Ok(value)
            })
            .collect()
    }

    /// Combines precomputed atom values into the three expectations.
    pub fn weighted_sums(&self, values: &[f64]) -> WeightedExpectations {
        assert_eq!(values.len(), self.end, "one value per atom");
        let mut s_plain = 0.0;
        let mut s_xi = 0.0;
        let mut s_eta = 0.0;
        for (a, &v) in self.atoms().iter().zip(values) {
            let wv = a.weight * v;
            s_plain += wv;
            s_xi += wv * a.xi;
            s_eta += wv * a.eta_sum;
        }
        let dt = self.grid.dt;
        WeightedExpectations {
            plain: s_plain,
            brownian: 0.5 * dt.sqrt() * s_xi,
            jump: 0.5 * s_eta - 0.5 * self.grid.intensity * dt * self.grid.eta_mean * s_plain,
        }
    }

    /// Like [`weighted_sums`](Self::weighted_sums) with `center` subtracted
    /// from the values inside the two weighted terms. Both weights have zero
    /// mean, so only the truncation error changes; constants are annihilated
    /// exactly.
    pub fn weighted_sums_centered(&self, values: &[f64], center: f64) -> WeightedExpectations {
        assert_eq!(values.len(), self.end, "one value per atom");
        let mut s_plain = 0.0;
        let mut s_xi = 0.0;
        let mut s_eta = 0.0;
        let mut s_dev = 0.0;
        for (a, &v) in self.atoms().iter().zip(values) {
            let wv = a.weight * v;
            let wd = a.weight * (v - center);
            s_plain += wv;
            s_dev += wd;
            s_xi += wd * a.xi;
            s_eta += wd * a.eta_sum;
        }
        let dt = self.grid.dt;
        WeightedExpectations {
            plain: s_plain,
            brownian: 0.5 * dt.sqrt() * s_xi,
            jump: 0.5 * s_eta - 0.5 * self.grid.intensity * dt * self.grid.eta_mean * s_dev,
        }
    }

    pub fn expect_all<F: Fn(f64) -> f64>(&self, v: F) -> Result<WeightedExpectations> {
        let values = self.evaluate(|x| Ok(v(x)))?;
        Ok(self.weighted_sums(&values))
    }

    /// `Σ w·V(x')`
    pub fn expect_plain<F: Fn(f64) -> f64>(&self, v: F) -> Result<f64> {
        Ok(self.expect_all(v)?.plain)
    }

    /// `(√Δt/2)·Σ w·V(x')·ξ`
    pub fn expect_brownian_weighted<F: Fn(f64) -> f64>(&self, v: F) -> Result<f64> {
        Ok(self.expect_all(v)?.brownian)
    }

    /// `½Σ w·V(x')·S_η − (λΔt/2)(∫ηρ)·Σ w·V(x')`
    pub fn expect_jump_weighted<F: Fn(f64) -> f64>(&self, v: F) -> Result<f64> {
        Ok(self.expect_all(v)?.jump)
    }
}

pub fn expect_plain<F: Fn(f64) -> f64>(grid: &AtomGrid, v: F) -> Result<f64> {
    grid.view().expect_plain(v)
}

pub fn expect_brownian_weighted<F: Fn(f64) -> f64>(grid: &AtomGrid, v: F) -> Result<f64> {
    grid.view().expect_brownian_weighted(v)
}

/// The measure argument must be the one the grid was built from; its `∫ηρ`
/// enters the compensator term.
pub fn expect_jump_weighted<F: Fn(f64) -> f64>(
    grid: &AtomGrid,
    v: F,
    measure: &FiniteActivityLevyMeasure,
) -> Result<f64> {
    let values = grid.view().evaluate(|x| Ok(v(x)))?;
    let mut s_plain = 0.0;
    let mut s_eta = 0.0;
    for (a, &val) in grid.atoms.iter().zip(&values) {
        s_plain += a.weight * val;
        s_eta += a.weight * val * a.eta_sum;
    }
    Ok(0.5 * s_eta
        - 0.5 * measure.intensity() * grid.dt * measure.moments().eta_mean * s_plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{example1, ProblemParams};

    fn ex1() -> FbsdeProblem {
        example1(&ProblemParams::default()).unwrap()
    }

    #[test]
    fn atom_count_matches_tensor_size() {
        let p = ex1();
        let g = build_atom_grid(&p, 0.0, 1.0 / 16.0, 0.3, 2, 8, 8).unwrap();
        assert_eq!(g.atoms().len(), 584);
        assert_eq!(g.truncated(1).unwrap().len(), 72);
        assert_eq!(g.truncated(0).unwrap().len(), 8);
        assert!(g.truncated(3).is_err());
    }

    #[test]
    fn total_weight_is_poisson_partial_sum() {
        let p = ex1();
        // λ = 2, Δt = 1/16  =>  λΔt = 1/8
        let g = build_atom_grid(&p, 0.0, 1.0 / 16.0, 0.0, 2, 8, 8).unwrap();
        let closed = (-0.125f64).exp() * (1.0 + 0.125 + 0.125 * 0.125 / 2.0);
        assert!((g.total_weight() - closed).abs() < 1e-14);
        assert!((closed - 0.999_703).abs() < 1e-6);
        let one = expect_plain(&g, |_| 1.0).unwrap();
        assert!((one - closed).abs() < 1e-14);

        // branch-normalized weights sum to one
        let atoms = g.atoms();
        let mut start = 0;
        for (m, &end) in g.branch_ends.iter().enumerate() {
            let s: f64 = atoms[start..end].iter().map(|a| a.weight).sum();
            assert!((s / g.poisson_weights()[m] - 1.0).abs() < 1e-12);
            start = end;
        }
    }

    #[test]
    fn degenerate_diffusion_collapses_atoms() {
        let measure = FiniteActivityLevyMeasure::symmetric_indicator(1.0).unwrap();
        let p = FbsdeProblem::new(measure, 1.0).with_jump(|_, _, e| e);
        let g = build_atom_grid(&p, 0.0, 0.1, 0.25, 2, 4, 3).unwrap();
        for a in g.atoms() {
            let jumps: f64 = g.jump_sizes(a).iter().sum();
            assert!((a.location - (0.25 + jumps)).abs() < 1e-15);
        }
    }

    #[test]
    fn brownian_weight_of_constant_vanishes() {
        let p = ex1();
        let g = build_atom_grid(&p, 0.0, 1.0 / 16.0, 0.7, 2, 8, 8).unwrap();
        assert!(expect_brownian_weighted(&g, |_| 1.0).unwrap().abs() < 1e-16);
        // E[X' ΔW̃] = Δt/2 for σ = 1 (up to the Poisson tail)
        let dt = 1.0 / 16.0;
        let v = expect_brownian_weighted(&g, |x| x).unwrap();
        assert!((v - 0.5 * dt * g.total_weight()).abs() < 1e-14);
    }

    #[test]
    fn identity_has_no_jump_drift_for_symmetric_sizes() {
        let p = ex1();
        let x = 0.4;
        let g = build_atom_grid(&p, 0.0, 1.0 / 16.0, x, 2, 8, 8).unwrap();
        let v = expect_plain(&g, |y| y).unwrap();
        assert!((v - x * g.total_weight()).abs() < 1e-14);
    }

    #[test]
    fn jump_weight_of_constant_is_truncated_compensation() {
        let p = ex1();
        let dt = 1.0 / 16.0;
        let g = build_atom_grid(&p, 0.0, dt, 0.0, 2, 8, 8).unwrap();
        let lam_dt = 0.125;
        let expected = -0.5 * lam_dt * poisson_pmf(lam_dt, 2);
        let got = expect_jump_weighted(&g, |_| 1.0, p.measure()).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!((expected + 4.31e-4).abs() < 1e-6);
        assert!((g.view().expect_jump_weighted(|_| 1.0).unwrap() - got).abs() < 1e-18);

        // untruncated limit
        let g = build_atom_grid(&p, 0.0, dt, 0.0, 12, 2, 2).unwrap();
        let v = g.view().expect_jump_weighted(|_| 1.0).unwrap();
        assert!(v.abs() < 1e-13, "{v}");
    }

    #[test]
    fn non_finite_integrand_names_atom() {
        let p = ex1();
        let g = build_atom_grid(&p, 0.0, 0.1, 0.0, 1, 4, 4).unwrap();
        let err = g.view().expect_plain(|x| if x > 0.0 { f64::NAN } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::NonFiniteAtom { .. }));
    }

    #[test]
    fn zero_jump_branch_is_exact_for_polynomials() {
        let measure = FiniteActivityLevyMeasure::symmetric_indicator(1.0).unwrap();
        let (b, s) = (0.3, 1.7);
        let p = FbsdeProblem::new(measure, 1.0)
            .with_drift(move |_, _| b)
            .with_diffusion(move |_, _| s)
            .with_jump(|_, _, e| e);
        let dt = 0.05;
        let x = 0.2;
        let g = build_atom_grid(&p, 0.0, dt, x, 0, 4, 4).unwrap();
        // V(x') = x'^7 with x' = μ + sd·ξ: E = Σ C(7,k) μ^{7-k} sd^k E[ξ^k]
        let mu = x + b * dt;
        let sd = s * dt.sqrt();
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0];
        let binom = [1.0, 7.0, 21.0, 35.0, 35.0, 21.0, 7.0, 1.0];
        let exact: f64 = (0..8)
            .map(|k| binom[k] * mu.powi(7 - k as i32) * sd.powi(k as i32) * moments[k])
            .sum::<f64>()
            * (-2.0 * dt).exp();
        let q = g.view().expect_plain(|y| y.powi(7)).unwrap();
        assert!((q - exact).abs() < 1e-12, "{q} vs {exact}");
    }
}
