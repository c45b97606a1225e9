//! Piecewise Lagrange interpolation on a uniform mesh.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::problem::{ScalarFn, SpatialMesh};

/// What to do with points outside the mesh extent.
#[derive(Clone, Default)]
pub enum ExtrapolationPolicy {
    /// Evaluate the polynomial of the outermost stencil.
    #[default]
    NearestStencil,
    /// Evaluate a supplied function outside the mesh.
    Analytic(ScalarFn),
    /// Hold the end value constant outside the mesh.
    Flat,
}

impl fmt::Debug for ExtrapolationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NearestStencil => f.write_str("NearestStencil"),
            Self::Analytic(_) => f.write_str("Analytic(..)"),
            Self::Flat => f.write_str("Flat"),
        }
    }
}

/// The `p + 1` contiguous mesh indices closest to `x`.
///
/// Among windows `[s, s + p]` the one whose centre is nearest to `x` wins;
/// ties go to the lower window. Windows are clamped to the mesh.
pub fn stencil(mesh: &SpatialMesh, x: f64, degree: usize) -> Range<usize> {
    let n = mesh.len();
    debug_assert!(n > degree, "mesh too small for degree {degree}");
    let u = (x - mesh.points()[0]) / mesh.dx();
    let start = (u - 0.5 * (degree as f64 + 1.0)).ceil();
    let max_start = (n - 1 - degree) as f64;
    let s = if start.is_nan() { 0.0 } else { start.clamp(0.0, max_start) } as usize;
    s..s + degree + 1
}

/// Degree-`p` piecewise Lagrange interpolant of values on a mesh.
#[derive(Clone)]
pub struct PiecewiseLagrangeInterpolant<'a> {
    mesh: &'a SpatialMesh,
    values: &'a [f64],
    degree: usize,
    policy: ExtrapolationPolicy,
}

impl fmt::Debug for PiecewiseLagrangeInterpolant<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseLagrangeInterpolant")
            .field("points", &self.mesh.len())
            .field("degree", &self.degree)
            .field("policy", &self.policy)
            .finish()
    }
}

impl<'a> PiecewiseLagrangeInterpolant<'a> {
    pub fn new(
        mesh: &'a SpatialMesh,
        values: &'a [f64],
        degree: usize,
        policy: ExtrapolationPolicy,
    ) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::Config(format!("interpolation degree must be 1, 2 or 3, got {degree}")));
        }
        if values.len() != mesh.len() {
            return Err(Error::Usage(format!(
                "{} values for a mesh of {} points",
                values.len(),
                mesh.len()
            )));
        }
        if mesh.len() <= degree {
            return Err(Error::Config(format!(
                "degree {degree} needs at least {} mesh points",
                degree + 1
            )));
        }
        Ok(Self { mesh, values, degree, policy })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let value = self.eval_unchecked(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteInterpolant { x, value })
        }
    }

    /// Like [`eval`](Self::eval) without the finiteness check.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        let (lo, hi) = self.mesh.padded_extent();
        let x = match &self.policy {
            ExtrapolationPolicy::Analytic(f) if x < lo || x > hi => return f(x),
            ExtrapolationPolicy::Flat => x.clamp(lo, hi),
            _ => x,
        };
        let idx = stencil(self.mesh, x, self.degree);
        let pts = &self.mesh.points()[idx.clone()];
        let vals = &self.values[idx];
        lagrange(pts, vals, x)
    }
}

#[inline]
fn lagrange(pts: &[f64], vals: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..pts.len() {
        let mut basis = 1.0;
        for k in 0..pts.len() {
            if k != j {
                basis *= (x - pts[k]) / (pts[j] - pts[k]);
            }
        }
        acc += basis * vals[j];
    }
    acc
}
