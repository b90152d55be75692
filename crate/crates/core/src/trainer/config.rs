//! Trainer configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::NU_MAX_DEFAULT;
use crate::scalar::Real;

use super::penalty::PenaltySpec;

pub const DEFAULT_DELTA_NU: f64 = 1e-3;
/// Relative log-likelihood threshold; the absolute one is this times `|ll₀|`.
pub const DEFAULT_DELTA_L_REL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_NU_INIT: f64 = 40.0;
pub const DEFAULT_BETA: f64 = 1e-5;
pub const DEFAULT_SEED: u64 = 0;

/// Structural constraint on the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintMode {
    /// Full skewness matrix.
    Full,
    /// Diagonal skewness matrix.
    DiagonalSkew,
    /// Symmetric t kernels.
    ZeroSkew,
    /// Gaussian kernels.
    Gaussian,
}

impl ConstraintMode {
    pub fn has_skew(self) -> bool {
        matches!(self, ConstraintMode::Full | ConstraintMode::DiagonalSkew)
    }

    pub fn has_nu(self) -> bool {
        self != ConstraintMode::Gaussian
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintMode::Full => "full",
            ConstraintMode::DiagonalSkew => "diagonal-skew",
            ConstraintMode::ZeroSkew => "zero-skew",
            ConstraintMode::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ConstraintMode::Full),
            "diagonal-skew" => Ok(ConstraintMode::DiagonalSkew),
            "zero-skew" => Ok(ConstraintMode::ZeroSkew),
            "gaussian" => Ok(ConstraintMode::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown constraint mode {other:?}"))),
        }
    }
}

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StopRule {
    /// Stop once both the ν change and the log-likelihood change are below
    /// their thresholds.
    #[default]
    Both,
    /// Stop as soon as either change is below its threshold.
    Either,
}

impl StopRule {
    pub fn as_str(self) -> &'static str {
        match self {
            StopRule::Both => "both",
            StopRule::Either => "either",
        }
    }

    /// Whether iteration stops given which thresholds are met.
    pub fn should_stop(self, nu_met: bool, loglik_met: bool) -> bool {
        match self {
            StopRule::Both => nu_met && loglik_met,
            StopRule::Either => nu_met || loglik_met,
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(StopRule::Both),
            "either" => Ok(StopRule::Either),
            other => Err(Error::InvalidParameter(format!("unknown stop rule {other:?}"))),
        }
    }
}

/// Initial degrees of freedom, shared or per kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum NuInit<T: Real> {
    Scalar(T),
    PerKernel(Vec<T>),
}

impl<T: Real> NuInit<T> {
    pub fn resolve(&self, g: usize) -> Result<Vec<T>> {
        let v = match self {
            NuInit::Scalar(nu) => vec![*nu; g],
            NuInit::PerKernel(v) if v.len() == g => v.clone(),
            NuInit::PerKernel(v) => {
                return Err(Error::InvalidParameter(format!(
                    "nu_init has {} entries for {g} kernels",
                    v.len()
                )))
            }
        };
        if let Some(bad) = v.iter().find(|nu| !(**nu > T::lit(2.0))) {
            return Err(Error::InvalidParameter(format!("nu_init must exceed 2, got {bad}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig<T: Real> {
    pub beta: PenaltySpec<T>,
    pub delta_nu: T,
    /// Absolute log-likelihood threshold; `None` means `1e-5 · |ll₀|`.
    pub delta_l: Option<T>,
    pub max_iter: usize,
    pub constraint_mode: ConstraintMode,
    pub nu_init: NuInit<T>,
    pub nu_max: T,
    pub seed: u64,
    pub stop_rule: StopRule,
}

impl<T: Real> Default for TrainerConfig<T> {
    fn default() -> Self {
        TrainerConfig {
            beta: PenaltySpec::uniform(T::lit(DEFAULT_BETA)),
            delta_nu: T::lit(DEFAULT_DELTA_NU),
            delta_l: None,
            max_iter: DEFAULT_MAX_ITER,
            constraint_mode: ConstraintMode::Full,
            nu_init: NuInit::Scalar(T::lit(DEFAULT_NU_INIT)),
            nu_max: T::lit(NU_MAX_DEFAULT),
            seed: DEFAULT_SEED,
            stop_rule: StopRule::Both,
        }
    }
}

impl<T: Real> TrainerConfig<T> {
    pub fn with_mode(mode: ConstraintMode) -> Self {
        TrainerConfig {
            constraint_mode: mode,
            ..Self::default()
        }
    }

    pub fn validate(&self, g: usize) -> Result<()> {
        if g < 1 {
            return Err(Error::InvalidParameter("at least one kernel is required".into()));
        }
        if !(self.delta_nu > T::zero()) {
            return Err(Error::InvalidParameter(format!("delta_nu must be positive, got {}", self.delta_nu)));
        }
        if let Some(dl) = self.delta_l {
            if !(dl > T::zero()) {
                return Err(Error::InvalidParameter(format!("delta_l must be positive, got {dl}")));
            }
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        let nu_init = self.nu_init.resolve(g)?;
        if !(self.nu_max > T::lit(2.0)) || self.nu_max.is_nan() {
            return Err(Error::InvalidParameter(format!("nu_max must exceed 2, got {}", self.nu_max)));
        }
        if let Some(nu) = nu_init.iter().find(|nu| **nu > self.nu_max) {
            return Err(Error::InvalidParameter(format!("nu_init {nu} exceeds nu_max {}", self.nu_max)));
        }
        self.beta.resolve(g)?;
        Ok(())
    }
}
