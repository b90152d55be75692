//! Per-iteration training record.

use std::fmt;

use crate::scalar::Real;

/// Event attached to an iteration. Kernel numbers are zero-based in memory
/// and printed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceFlag {
    NuCapped(usize),
    NuFloored(usize),
    /// The `Σ zᵢⱼ e₄ᵢⱼ` aggregate was singular.
    PseudoInverse(usize),
    /// The skewness step was shortened to keep `Λ` positive definite.
    SkewBacktracked(usize),
    /// The scale update needed a diagonal repair.
    ScaleRepaired(usize),
    /// Number of cells that fell back to symmetric expectations.
    CdfFallback(usize),
}

impl fmt::Display for TraceFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TraceFlag::NuCapped(k) => write!(f, "nu-capped:{}", k + 1),
            TraceFlag::NuFloored(k) => write!(f, "nu-floored:{}", k + 1),
            TraceFlag::PseudoInverse(k) => write!(f, "pseudo-inverse:{}", k + 1),
            TraceFlag::SkewBacktracked(k) => write!(f, "skew-backtracked:{}", k + 1),
            TraceFlag::ScaleRepaired(k) => write!(f, "scale-repaired:{}", k + 1),
            TraceFlag::CdfFallback(n) => write!(f, "cdf-fallback:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T: Real> {
    /// One-based iteration index.
    pub iter: usize,
    pub loglik: T,
    /// `None` for Gaussian fits.
    pub nu: Option<Vec<T>>,
    pub omega: Vec<T>,
    pub flags: Vec<TraceFlag>,
}

impl<T: Real> TraceRecord<T> {
    pub fn flags_string(&self) -> String {
        self.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";")
    }

    pub fn has_cap(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, TraceFlag::NuCapped(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    Error(String),
}

impl Termination {
    pub fn as_str(&self) -> &str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max-iter",
            Termination::Error(_) => "error",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Error(msg) => write!(f, "error: {msg}"),
            other => f.write_str(other.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<T: Real> {
    /// Log-likelihood at the initial parameters.
    pub initial_loglik: Option<T>,
    pub records: Vec<TraceRecord<T>>,
    pub status: Termination,
}

impl<T: Real> TrainingTrace<T> {
    pub fn new() -> Self {
        TrainingTrace {
            initial_loglik: None,
            records: Vec::new(),
            status: Termination::MaxIter,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    /// Log-likelihood of the last completed iteration, or the initial one.
    pub fn final_loglik(&self) -> Option<T> {
        self.last().map(|r| r.loglik).or(self.initial_loglik)
    }

    pub fn any_capped(&self) -> bool {
        self.records.iter().any(|r| r.has_cap())
    }

    /// Largest `ν` seen at any iteration.
    pub fn max_nu(&self) -> Option<T> {
        self.records
            .iter()
            .filter_map(|r| r.nu.as_ref())
            .flatten()
            .copied()
            .fold(None, |m, v| Some(m.map_or(v, |m: T| m.max(v))))
    }

    pub(crate) fn push(&mut self, record: TraceRecord<T>) {
        debug_assert_eq!(record.iter, self.records.len() + 1);
        self.records.push(record);
    }
}

impl<T: Real> Default for TrainingTrace<T> {
    fn default() -> Self {
        Self::new()
    }
}
