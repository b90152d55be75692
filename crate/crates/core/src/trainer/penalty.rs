//! Linear penalty on the degrees of freedom.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Non-negative per-kernel coefficients `β`. A single entry applies to every
/// kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec<T: Real> {
    pub beta: Vec<T>,
}

impl<T: Real> PenaltySpec<T> {
    pub fn new(beta: Vec<T>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter("beta must not be empty".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b >= T::zero()) || !b.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be finite and non-negative, got {b}")));
        }
        Ok(PenaltySpec { beta })
    }

    pub fn uniform(beta: T) -> Self {
        PenaltySpec { beta: vec![beta] }
    }

    pub fn zero() -> Self {
        Self::uniform(T::zero())
    }

    /// Per-kernel coefficients for `g` kernels.
    pub fn resolve(&self, g: usize) -> Result<Vec<T>> {
        let spec = Self::new(self.beta.clone())?;
        match spec.beta.len() {
            1 => Ok(vec![spec.beta[0]; g]),
            n if n == g => Ok(spec.beta),
            n => Err(Error::InvalidParameter(format!("beta has {n} entries for {g} kernels"))),
        }
    }
}

/// `(Σᵢ βᵢ νᵢ, β)`: the penalty value and its gradient in `ν`.
pub fn regularization_penalty<T: Real>(nu: &[T], beta: &PenaltySpec<T>) -> Result<(T, Vec<T>)> {
    let b = beta.resolve(nu.len())?;
    let value = nu.iter().zip(&b).fold(T::zero(), |acc, (&n, &bi)| acc + bi * n);
    Ok((value, b))
}
