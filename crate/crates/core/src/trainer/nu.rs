//! Degrees-of-freedom update.

use crate::error::{Error, Result};
use crate::linalg::exact_sum;
use crate::scalar::Real;
use crate::special::psi;

use super::config::TrainerConfig;
use super::estep::ExpectationCache;
use super::penalty::regularization_penalty;

/// Left end of the search interval.
pub const NU_FLOOR: f64 = 2.0 + 1e-6;
/// Residual bound met by every interior root.
pub const NU_RESIDUAL_TOL: f64 = 1e-10;

/// Which end of the interval, if any, the update was pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuBound {
    /// No root below `nu_max`; the left side stays positive.
    Capped,
    /// The left side is already negative at the floor.
    Floored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuUpdate<T: Real> {
    pub nu: T,
    pub bound: Option<NuBound>,
    /// Stationarity residual at `nu`.
    pub residual: f64,
    pub evaluations: usize,
}

/// `ln(ν/2) − ψ(ν/2) + 1 − data_term − β`.
pub fn nu_equation(nu: f64, data_term: f64, beta: f64) -> f64 {
    let x = 0.5 * nu;
    x.ln() - psi(x) + 1.0 - data_term - beta
}

/// `Σⱼ zᵢⱼ (e₂ᵢⱼ − e₁ᵢⱼ) / Σⱼ zᵢⱼ` for kernel `i`.
pub fn nu_data_term<T: Real>(cache: &ExpectationCache<T>, i: usize) -> T {
    let n = cache.z.ncols();
    let mass = exact_sum((0..n).map(|j| cache.z[(i, j)]));
    let s = exact_sum((0..n).map(|j| cache.z[(i, j)] * (cache.e2[(i, j)] - cache.e1[(i, j)])));
    s / mass
}

/// Solves the stationarity equation for kernel `i`.
pub fn update_nu<T: Real>(
    kernel_index: usize,
    cache: &ExpectationCache<T>,
    nu: &[T],
    config: &TrainerConfig<T>,
) -> Result<NuUpdate<T>> {
    if kernel_index >= nu.len() || kernel_index >= cache.z.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "kernel index {kernel_index} out of range"
        )));
    }
    let (_, grad) = regularization_penalty(nu, &config.beta)?;
    let data = nu_data_term(cache, kernel_index);
    solve_nu(data, grad[kernel_index], config.nu_max)
}

/// Root of [`nu_equation`] on `(2 + 1e-6, nu_max]` by regula falsi in `ln ν`
/// with the Illinois correction, falling back to bisection when the bracket
/// does not halve.
pub fn solve_nu<T: Real>(data_term: T, beta: T, nu_max: T) -> Result<NuUpdate<T>> {
    let (d, b, hi) = (data_term.to_f64_lossy(), beta.to_f64_lossy(), nu_max.to_f64_lossy());
    if !d.is_finite() || !b.is_finite() || !(hi > NU_FLOOR) {
        return Err(Error::domain(
            "solve_nu",
            format!("data term {d}, beta {b}, nu_max {hi}"),
        ));
    }
    let f = |nu: f64| nu_equation(nu, d, b);
    let (f_lo, f_hi) = (f(NU_FLOOR), f(hi));
    let pinned = |nu: f64, r: f64, bound| NuUpdate {
        nu: T::lit(nu),
        bound: Some(bound),
        residual: r,
        evaluations: 2,
    };
    if f_hi > 0.0 {
        return Ok(pinned(hi, f_hi, NuBound::Capped));
    }
    if f_lo < 0.0 {
        return Ok(pinned(NU_FLOOR, f_lo, NuBound::Floored));
    }
    let (mut a, mut b) = (NU_FLOOR.ln(), hi.ln());
    let (mut fa, mut fb) = (f_lo, f_hi);
    let mut evaluations = 2;
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..400 {
        if best.1.abs() <= 0.01 * NU_RESIDUAL_TOL || (b - a) <= 4.0 * f64::EPSILON * b.abs() {
            break;
        }
        let width = b - a;
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x.exp());
        evaluations += 1;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            break;
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let fm = f(m.exp());
            evaluations += 1;
            if fm.abs() < best.1.abs() {
                best = (m, fm);
            }
            if fm > 0.0 {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            side = 0;
        }
    }
    let nu = best.0.exp().clamp(NU_FLOOR, hi);
    let residual = f(nu);
    Ok(NuUpdate {
        nu: T::lit(nu),
        bound: None,
        residual,
        evaluations: evaluations + 1,
    })
}
