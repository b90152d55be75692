//! Penalized EM training of skew-t mixtures.

mod config;
mod estep;
mod init;
mod mstep;
mod nu;
mod penalty;
mod trace;

pub use config::{
    ConstraintMode, NuInit, StopRule, TrainerConfig, DEFAULT_BETA, DEFAULT_DELTA_L_REL, DEFAULT_DELTA_NU,
    DEFAULT_MAX_ITER, DEFAULT_NU_INIT, DEFAULT_SEED,
};
pub use estep::{cell_expectations, e_step, e_step_with, CellExpectations, ExpectationCache};
pub use init::{initialize, kmeans, Clustering, LLOYD_ITERATIONS, RESEED_ATTEMPTS};
pub use mstep::{m_step, m_step_detailed, MStepReport, MAX_BACKTRACK, MIN_MASS};
pub use nu::{nu_data_term, nu_equation, solve_nu, update_nu, NuBound, NuUpdate, NU_FLOOR, NU_RESIDUAL_TOL};
pub use penalty::{regularization_penalty, PenaltySpec};
pub use trace::{Termination, TraceFlag, TraceRecord, TrainingTrace};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::scalar::Real;
use crate::seed::derive_seed;

/// Fitted model and its iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome<T: Real> {
    pub model: MixtureModel<T>,
    pub trace: TrainingTrace<T>,
}

impl<T: Real> FitOutcome<T> {
    pub fn loglik(&self) -> T {
        self.trace.final_loglik().unwrap_or_else(T::nan)
    }
}

/// A failed fit with the iterations completed before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {} iterations)", trace.len())]
pub struct FitFailure<T: Real> {
    #[source]
    pub error: Error,
    pub trace: TrainingTrace<T>,
    /// Last model that completed an iteration, if any.
    pub model: Option<MixtureModel<T>>,
}

/// Initializes with k-means and runs [`fit_from`].
pub fn fit<T: Real>(data: &DataMatrix<T>, g: usize, config: &TrainerConfig<T>) -> Result<FitOutcome<T>, FitFailure<T>> {
    let fail = |error| FitFailure {
        error,
        trace: TrainingTrace::new(),
        model: None,
    };
    config.validate(g).map_err(fail)?;
    let model = initialize(data, g, config).map_err(fail)?;
    fit_from(data, model, config)
}

/// Iterates E-step, M-step and the penalized `ν` update from `start` until
/// the stop rule holds or `max_iter` iterations complete.
pub fn fit_from<T: Real>(
    data: &DataMatrix<T>,
    start: MixtureModel<T>,
    config: &TrainerConfig<T>,
) -> Result<FitOutcome<T>, FitFailure<T>> {
    let mut trace = TrainingTrace::new();
    let mut model = start;
    let g = model.g();
    let mode = config.constraint_mode;
    macro_rules! bail {
        ($e:expr, $model:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => {
                    log::error!("training stopped: {error}");
                    trace.status = Termination::Error(error.to_string());
                    return Err(FitFailure { error, trace, model: $model });
                }
            }
        };
    }
    bail!(config.validate(g), None);
    bail!(coerce_mode(&mut model, mode), None);
    let mut cache = bail!(e_step_with(data, &model, mode, derive_seed(config.seed, &[0])), None);
    let ll0 = cache.loglik;
    trace.initial_loglik = Some(ll0);
    let delta_l = config
        .delta_l
        .unwrap_or_else(|| (T::lit(DEFAULT_DELTA_L_REL) * ll0.abs()).max(T::min_positive_value()));
    let mut prev_ll = ll0;
    for k in 1..=config.max_iter {
        let report = bail!(m_step_detailed(data, &cache, &model, config), Some(model.clone()));
        let mut next = report.model;
        let mut flags = report.flags;
        let mut nu_change = T::zero();
        if mode.has_nu() {
            let nus: Vec<T> = model.kernels.iter().map(|k| k.nu).collect();
            for i in 0..g {
                let u = bail!(update_nu(i, &cache, &nus, config), Some(model.clone()));
                match u.bound {
                    Some(NuBound::Capped) => flags.push(TraceFlag::NuCapped(i)),
                    Some(NuBound::Floored) => flags.push(TraceFlag::NuFloored(i)),
                    None => {}
                }
                nu_change = nu_change.max((u.nu - nus[i]).abs());
                next.kernels[i].nu = u.nu;
            }
        }
        cache = bail!(
            e_step_with(data, &next, mode, derive_seed(config.seed, &[k as u64])),
            Some(model.clone())
        );
        if cache.fallbacks > 0 {
            flags.push(TraceFlag::CdfFallback(cache.fallbacks));
        }
        let ll = cache.loglik;
        trace.push(TraceRecord {
            iter: k,
            loglik: ll,
            nu: mode.has_nu().then(|| next.kernels.iter().map(|k| k.nu).collect()),
            omega: next.weights.clone(),
            flags,
        });
        model = next;
        let ll_change = (ll - prev_ll).abs();
        prev_ll = ll;
        let nu_met = !mode.has_nu() || nu_change <= config.delta_nu;
        if config.stop_rule.should_stop(nu_met, ll_change <= delta_l) {
            trace.status = Termination::Converged;
            return Ok(FitOutcome { model, trace });
        }
    }
    trace.status = Termination::MaxIter;
    Ok(FitOutcome { model, trace })
}

/// Forces the structural constraint of `mode` on a starting model.
fn coerce_mode<T: Real>(model: &mut MixtureModel<T>, mode: ConstraintMode) -> Result<()> {
    for k in &mut model.kernels {
        let p = k.dim();
        match mode {
            ConstraintMode::Full => {}
            ConstraintMode::DiagonalSkew => {
                k.delta = nalgebra::DMatrix::from_diagonal(&k.delta.diagonal());
            }
            ConstraintMode::ZeroSkew => k.delta = nalgebra::DMatrix::zeros(p, p),
            ConstraintMode::Gaussian => {
                k.delta = nalgebra::DMatrix::zeros(p, p);
                k.nu = T::infinity();
            }
        }
        if mode != ConstraintMode::Gaussian && k.nu.is_infinite() {
            return Err(Error::InvalidParameter(format!(
                "mode {mode} needs finite degrees of freedom"
            )));
        }
    }
    model.validate()
}
