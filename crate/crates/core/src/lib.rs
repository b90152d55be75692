//! Finite mixtures of multivariate skew-t distributions fitted by penalized
//! expectation maximization, with the supporting t-CDF, truncated-t moment
//! and special-function machinery.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common double-precision instantiations.

pub mod error;
pub mod linalg;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;
pub mod data;
pub mod kernel;
pub mod mixture;
pub mod mvt;
pub mod seed;
pub mod truncated;
pub mod trainer;
pub mod io;

pub type DataMatrix64 = data::DataMatrix<f64>;
pub type KernelParams64 = kernel::KernelParams<f64>;
pub type MixtureModel64 = mixture::MixtureModel<f64>;
pub type TrainerConfig64 = trainer::TrainerConfig<f64>;
pub type TrainingTrace64 = trainer::TrainingTrace<f64>;

pub type DataMatrix32 = data::DataMatrix<f32>;
pub type KernelParams32 = kernel::KernelParams<f32>;
pub type MixtureModel32 = mixture::MixtureModel<f32>;
pub type TrainerConfig32 = trainer::TrainerConfig<f32>;
