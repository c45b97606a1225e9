//! One-dimensional Gaussian rules.
//!
//! Gauss–Legendre nodes are found by Newton iteration on the three-term
//! recurrence for `P_n`; Gauss–Hermite nodes come from the orthonormal
//! Hermite recurrence and are rescaled to the standard normal density, so the
//! weights of a Hermite rule sum to one. Reference tables are computed once
//! per size and shared through a process-wide cache.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest rule size accepted by the constructors.
pub const MAX_RULE_SIZE: usize = 64;

/// Which measure a rule integrates against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureKind {
    /// `N(0, 1)`; weights sum to one.
    StandardNormal,
    /// Lebesgue measure on `[a, b]`; weights sum to `b - a`.
    Interval { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: MeasureKind,
}

impl QuadratureRule1D {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i g(x_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_RULE_SIZE {
        return Err(Error::Config(format!(
            "quadrature size must lie in 1..={MAX_RULE_SIZE}, got {n}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Family {
    Legendre,
    Hermite,
}

type Table = Arc<(Vec<f64>, Vec<f64>)>;

fn cached(family: Family, n: usize) -> Table {
    static CACHE: OnceLock<Mutex<HashMap<(Family, usize), Table>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
    guard
        .entry((family, n))
        .or_insert_with(|| {
            Arc::new(match family {
                Family::Legendre => legendre_reference(n),
                Family::Hermite => hermite_normal_reference(n),
            })
        })
        .clone()
}

/// Gauss–Hermite rule for the standard normal density.
///
/// Exact for polynomials of degree `≤ 2n - 1` under `N(0, 1)`.
pub fn gauss_hermite_normal(n: usize) -> Result<QuadratureRule1D> {
    check_size(n)?;
    let table = cached(Family::Hermite, n);
    Ok(QuadratureRule1D {
        nodes: table.0.clone(),
        weights: table.1.clone(),
        kind: MeasureKind::StandardNormal,
    })
}

/// Gauss–Legendre rule on `[a, b]` with Lebesgue weight.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule1D> {
    check_size(n)?;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Config(format!(
            "Gauss-Legendre interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    let table = cached(Family::Legendre, n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadratureRule1D {
        nodes: table.0.iter().map(|&s| mid + half * s).collect(),
        weights: table.1.iter().map(|&w| half * w).collect(),
        kind: MeasureKind::Interval { a, b },
    })
}

/// Nodes ascending on `[-1, 1]`, mirrored so the rule is exactly symmetric.
fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Physicists' Gauss–Hermite roots via Newton on orthonormal polynomials,
/// then `x -> √2 x`, `w -> w / √π`.
fn hermite_normal_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z: f64 = 0.0;
    // Roots are generated from the largest downwards.
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - 1 - (i - 2)],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (p, d) = hermite_orthonormal(n, z, pim4);
            pp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_orthonormal(n, z, pim4);
        if d != 0.0 {
            pp = d;
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        let w = 2.0 / (pp * pp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let sqrt2 = 2.0_f64.sqrt();
    let sqrt_pi = PI.sqrt();
    for x in nodes.iter_mut() {
        *x *= sqrt2;
    }
    for w in weights.iter_mut() {
        *w /= sqrt_pi;
    }
    // Pin Σw = 1 against accumulated rounding in the recurrence.
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    (nodes, weights)
}

/// Orthonormal Hermite polynomial `h_n(z)` and its derivative.
fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Moments of N(0,1): E[x^k] = (k-1)!! for even k.
    fn normal_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (1..k).step_by(2).map(|j| j as f64).product()
    }

    #[test]
    fn hermite_small_rules() {
        let r1 = gauss_hermite_normal(1).unwrap();
        assert_eq!(r1.nodes(), &[0.0]);
        assert!((r1.weights()[0] - 1.0).abs() < 1e-15);

        let r2 = gauss_hermite_normal(2).unwrap();
        assert!((r2.nodes()[0] + 1.0).abs() < 1e-14);
        assert!((r2.nodes()[1] - 1.0).abs() < 1e-14);
        assert!((r2.weights()[0] - 0.5).abs() < 1e-14);

        let r3 = gauss_hermite_normal(3).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert!((r3.nodes()[0] + s3).abs() < 1e-13);
        assert_eq!(r3.nodes()[1], 0.0);
        assert!((r3.weights()[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((r3.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((r3.integrate(|x| x.powi(4)) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_exactness_and_symmetry() {
        for n in [4, 8, 16, 32, 64] {
            let r = gauss_hermite_normal(n).unwrap();
            let total: f64 = r.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "n={n}");
            for i in 0..n {
                assert_eq!(r.nodes()[i], -r.nodes()[n - 1 - i]);
            }
            let top = (2 * n - 1).min(12) as u32;
            for k in 0..=top {
                let q = r.integrate(|x| x.powi(k as i32));
                let exact = normal_moment(k);
                assert!(
                    (q - exact).abs() <= 1e-11 * exact.max(1.0),
                    "n={n} k={k}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn legendre_small_rules() {
        let r = gauss_legendre(1, 0.0, 1.0).unwrap();
        assert_eq!(r.nodes(), &[0.5]);
        assert_eq!(r.weights(), &[1.0]);

        let r = gauss_legendre(2, -1.0, 1.0).unwrap();
        let s = 1.0 / 3.0_f64.sqrt();
        assert!((r.nodes()[0] + s).abs() < 1e-15);
        assert!((r.nodes()[1] - s).abs() < 1e-15);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15);

        let r = gauss_legendre(8, -1.0, 1.0).unwrap();
        assert!((r.integrate(|x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_weights_sum_to_length() {
        for n in [1, 3, 8, 17, 64] {
            let r = gauss_legendre(n, -0.5, 2.0).unwrap();
            let total: f64 = r.weights().iter().sum();
            assert!((total - 2.5).abs() < 1e-13, "n={n}");
            let q = r.integrate(|x| x.powi((2 * n - 1).min(20) as i32));
            let k = (2 * n - 1).min(20) as i32;
            let exact = (2.0_f64.powi(k + 1) - (-0.5_f64).powi(k + 1)) / (k + 1) as f64;
            assert!((q - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(gauss_hermite_normal(0).is_err());
        assert!(gauss_hermite_normal(65).is_err());
        assert!(gauss_legendre(4, 1.0, 1.0).is_err());
        assert!(gauss_legendre(4, 2.0, 1.0).is_err());
    }
}
