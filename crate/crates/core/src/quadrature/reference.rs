//! Fully expanded quadrature of the auxiliary variables.
//!
//! These routines integrate `ξ̃` with an explicit Gauss–Hermite rule and the
//! jump times with an explicit tensor Gauss–Legendre rule on `[0, 1]^m`
//! instead of using the closed-form reductions. They exist to cross-check
//! [`AtomView::weighted_sums`](super::AtomView::weighted_sums) and are far too
//! slow for the solver.

use super::{gauss_hermite_normal, gauss_legendre, AtomView};
use crate::error::{Error, Result};
use crate::problem::FiniteActivityLevyMeasure;

fn finite(i: usize, location: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteAtom { atom: i, location, value })
    }
}

/// `Ê[V·ΔW̃]` with `ΔW̃ = (√Δt/2)(ξ + √3 ξ̃)` and `ξ̃` on an `n_tilde`-point rule.
pub fn expect_brownian_weighted_full<F: Fn(f64) -> f64>(
    view: &AtomView<'_>,
    v: F,
    n_tilde: usize,
) -> Result<f64> {
    let tilde = gauss_hermite_normal(n_tilde)?;
    let half_sqrt_dt = 0.5 * view.grid().dt().sqrt();
    let sqrt3 = 3.0_f64.sqrt();
    let mut total = 0.0;
    for (i, a) in view.atoms().iter().enumerate() {
        let value = finite(i, a.location, v(a.location))?;
        for (s, w) in tilde.iter() {
            total += a.weight * w * value * half_sqrt_dt * (a.xi + sqrt3 * s);
        }
    }
    Ok(total)
}

/// `Ê[V·Δμ̃*]` with the `m` jump fractions `u_k` integrated on an
/// `n_time`-point Gauss–Legendre tensor rule over `[0, 1]^m`.
pub fn expect_jump_weighted_full<F: Fn(f64) -> f64>(
    view: &AtomView<'_>,
    v: F,
    measure: &FiniteActivityLevyMeasure,
    n_time: usize,
) -> Result<f64> {
    let times = gauss_legendre(n_time, 0.0, 1.0)?;
    let grid = view.grid();
    let compensator = 0.5 * measure.intensity() * grid.dt() * measure.moments().eta_mean;
    let mut total = 0.0;
    for (i, a) in view.atoms().iter().enumerate() {
        let value = finite(i, a.location, v(a.location))?;
        let etas: Vec<f64> = grid.jump_sizes(a).iter().map(|&e| measure.eta(e)).collect();
        let m = etas.len();
        let count = n_time.pow(m as u32);
        let mut digits = vec![0usize; m];
        let mut weight_sum = 0.0;
        for _ in 0..count {
            let mut w = 1.0;
            let mut jump_part = 0.0;
            for (k, &d) in digits.iter().enumerate() {
                let u = times.nodes()[d];
                w *= times.weights()[d];
                jump_part += (2.0 - 3.0 * u) * etas[k];
            }
            weight_sum += w * (jump_part - compensator);
            for pos in (0..m).rev() {
                digits[pos] += 1;
                if digits[pos] < n_time {
                    break;
                }
                digits[pos] = 0;
            }
        }
        total += a.weight * value * weight_sum;
    }
    Ok(total)
}
