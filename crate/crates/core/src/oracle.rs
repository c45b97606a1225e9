//! Monte Carlo estimates of the one-step conditional expectations.
//!
//! Every path samples `ξ`, `ξ̃`, the jump count, the jump sizes and the jump
//! times explicitly and never uses the closed-form reductions of the
//! quadrature module, so the two can check each other.
//!
//! Jump times are drawn as i.i.d. uniform fractions `u_k` of the step rather
//! than as order statistics; every functional estimated here is symmetric in
//! the jump times, so both give the same law.
//!
//! Path `j` is generated from a ChaCha stream selected by `(seed, j)`, and
//! paths are summed in fixed-size batches combined pairwise. The estimate is
//! therefore the same bits for any worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::FbsdeProblem;
use crate::quadrature::gauss_legendre;

const BATCH: usize = 4096;
const MIN_PATHS: usize = 1000;

/// Which auxiliary weight multiplies the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Plain,
    Brownian,
    Jump,
}

/// One draw of the single-step randomness and the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepSample {
    pub xi: f64,
    pub xi_tilde: f64,
    pub jump_sizes: Vec<f64>,
    /// Jump times as fractions of the step, `τ_k = t_n + u_k Δt`.
    pub jump_fractions: Vec<f64>,
    /// Euler image `x'`.
    pub location: f64,
    /// `ΔW̃ = (√Δt/2)(ξ + √3 ξ̃)`
    pub dw_tilde: f64,
    /// `Δμ̃* = Σ(2 − 3u_k)η(e_k) − (λΔt/2)∫ηρ`
    pub dmu_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
}

/// Fixed per-step quantities shared by all paths.
struct StepLaw {
    base: f64,
    scale: f64,
    sqrt_dt: f64,
    poisson: Option<Poisson<f64>>,
    eta_compensator: f64,
    t_n: f64,
    x: f64,
}

impl StepLaw {
    fn new(problem: &FbsdeProblem, t_n: f64, x: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let measure = problem.measure();
        let lambda_dt = measure.intensity() * dt;
        // ∫c(t,x,e)ρ(e)de by composite Gauss–Legendre, 32 panels × 12 nodes.
        let (lo, hi) = measure.support();
        let panel = gauss_legendre(12, 0.0, 1.0)?;
        let panels = 32;
        let width = (hi - lo) / panels as f64;
        let mut mean_jump = 0.0;
        for k in 0..panels {
            let left = lo + k as f64 * width;
            for (s, w) in panel.iter() {
                let e = left + s * width;
                mean_jump += w * width * measure.density(e) * problem.jump(t_n, x, e);
            }
        }
        let poisson = if lambda_dt > 0.0 {
            Some(Poisson::new(lambda_dt).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            base: x + problem.drift(t_n, x) * dt - lambda_dt * mean_jump,
            scale: problem.diffusion(t_n, x) * dt.sqrt(),
            sqrt_dt: dt.sqrt(),
            poisson,
            eta_compensator: 0.5 * lambda_dt * measure.moments().eta_mean,
            t_n,
            x,
        })
    }

    fn sample<R: Rng>(&self, problem: &FbsdeProblem, rng: &mut R) -> OneStepSample {
        let measure = problem.measure();
        let xi: f64 = StandardNormal.sample(rng);
        let xi_tilde: f64 = StandardNormal.sample(rng);
        let m = match &self.poisson {
            Some(p) => p.sample(rng) as usize,
            None => 0,
        };
        let mut jump_sizes = Vec::with_capacity(m);
        let mut jump_fractions = Vec::with_capacity(m);
        let mut shift = 0.0;
        let mut weighted = 0.0;
        for _ in 0..m {
            let e = measure.quantile(rng.random::<f64>());
            let u = rng.random::<f64>();
            shift += problem.jump(self.t_n, self.x, e);
            weighted += (2.0 - 3.0 * u) * measure.eta(e);
            jump_sizes.push(e);
            jump_fractions.push(u);
        }
        OneStepSample {
            xi,
            xi_tilde,
            jump_sizes,
            jump_fractions,
            location: self.base + self.scale * xi + shift,
            dw_tilde: 0.5 * self.sqrt_dt * (xi + 3.0_f64.sqrt() * xi_tilde),
            dmu_star: weighted - self.eta_compensator,
        }
    }
}

/// Draws the sample for path `index` of stream `seed`.
pub fn sample_path(
    problem: &FbsdeProblem,
    t_n: f64,
    x: f64,
    dt: f64,
    seed: u64,
    index: u64,
) -> Result<OneStepSample> {
    let law = StepLaw::new(problem, t_n, x, dt)?;
    let mut rng = path_rng(&ChaCha8Rng::seed_from_u64(seed), index);
    Ok(law.sample(problem, &mut rng))
}

fn path_rng(base: &ChaCha8Rng, index: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(index);
    rng.set_word_pos(0);
    rng
}

fn pairwise_sum(v: &[(f64, f64)]) -> (f64, f64) {
    match v.len() {
        0 => (0.0, 0.0),
        1 => v[0],
        n => {
            let (a, b) = v.split_at(n / 2);
            let (sa, qa) = pairwise_sum(a);
            let (sb, qb) = pairwise_sum(b);
            (sa + sb, qa + qb)
        }
    }
}

/// Sample mean of `g(sample)` over `n_paths` untruncated one-step draws.
pub fn mc_functional<G>(
    problem: &FbsdeProblem,
    t_n: f64,
    x: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    g: G,
) -> Result<McEstimate>
where
    G: Fn(&OneStepSample) -> f64 + Sync,
{
    if n_paths < MIN_PATHS {
        return Err(Error::Config(format!(
            "at least {MIN_PATHS} paths are required, got {n_paths}"
        )));
    }
    let law = StepLaw::new(problem, t_n, x, dt)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let batches = n_paths.div_ceil(BATCH);
    let sums: Vec<Result<(f64, f64)>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let end = (start + BATCH).min(n_paths);
            let mut s = 0.0;
            let mut q = 0.0;
            for j in start..end {
                let mut rng = path_rng(&base, j as u64);
                let sample = law.sample(problem, &mut rng);
                let v = g(&sample);
                if !v.is_finite() {
                    return Err(Error::Usage(format!(
                        "non-finite integrand {v} on path {j} (x' = {})",
                        sample.location
                    )));
                }
                s += v;
                q += v * v;
            }
            Ok((s, q))
        })
        .collect();
    let sums: Vec<(f64, f64)> = sums.into_iter().collect::<Result<_>>()?;
    let (s, q) = pairwise_sum(&sums);
    let n = n_paths as f64;
    let mean = s / n;
    let var = ((q - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { estimate: mean, stderr: (var / n).sqrt(), paths: n_paths })
}

/// Monte Carlo estimate of `E[V(x')·w]` with `w` chosen by `weight`.
#[allow(clippy::too_many_arguments)]
pub fn mc_expectation<V>(
    problem: &FbsdeProblem,
    t_n: f64,
    x: f64,
    dt: f64,
    weight: WeightKind,
    v: V,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate>
where
    V: Fn(f64) -> f64 + Sync,
{
    mc_functional(problem, t_n, x, dt, n_paths, seed, |s| {
        let w = match weight {
            WeightKind::Plain => 1.0,
            WeightKind::Brownian => s.dw_tilde,
            WeightKind::Jump => s.dmu_star,
        };
        v(s.location) * w
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{example1, ProblemParams};

    fn ex1() -> FbsdeProblem {
        example1(&ProblemParams::default()).unwrap()
    }

    #[test]
    fn constant_plain_is_exact() {
        let p = ex1();
        let e = mc_expectation(&p, 0.0, 0.3, 0.05, WeightKind::Plain, |_| 1.0, 5000, 7).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn brownian_weight_has_zero_mean() {
        let p = ex1();
        let e =
            mc_expectation(&p, 0.0, 0.3, 0.05, WeightKind::Brownian, |_| 1.0, 200_000, 11).unwrap();
        assert!(e.estimate.abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn jump_weight_second_moment() {
        let p = ex1();
        let dt = 0.1;
        let e = mc_functional(&p, 0.0, 0.0, dt, 400_000, 3, |s| s.dmu_star * s.dmu_star).unwrap();
        // Δt·∫η²λ(de) = 2δ·Δt
        let exact = 2.0 * dt;
        assert!((e.estimate - exact).abs() < 3.0 * e.stderr, "{e:?} vs {exact}");
    }

    #[test]
    fn same_seed_same_bits() {
        let p = ex1();
        let run = || {
            mc_expectation(&p, 0.0, 0.5, 0.05, WeightKind::Jump, |x| x.sin(), 20_000, 42).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let c = mc_expectation(&p, 0.0, 0.5, 0.05, WeightKind::Jump, |x| x.sin(), 20_000, 43).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn sample_identities() {
        let p = ex1();
        let dt = 0.2;
        for j in 0..200 {
            let s = sample_path(&p, 0.0, 0.1, dt, 5, j).unwrap();
            let shift: f64 = s.jump_sizes.iter().sum();
            assert!((s.location - (0.1 + dt.sqrt() * s.xi + shift)).abs() < 1e-12);
            let w: f64 = s.jump_fractions.iter().map(|u| 2.0 - 3.0 * u).sum();
            assert!((s.dmu_star - (w - 0.5 * 2.0 * dt)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_paths() {
        assert!(mc_expectation(&ex1(), 0.0, 0.0, 0.1, WeightKind::Plain, |_| 1.0, 10, 0).is_err());
    }
}
