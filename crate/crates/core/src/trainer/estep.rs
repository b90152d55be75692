//! Expectation step.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernel::{KernelGeometry, PointQuantities};
use crate::mixture::{log_likelihood_from, responsibilities_from, MixtureModel};
use crate::mvt::{mvt_cdf_pair_with, ratio_of, CdfOptions};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::special::psi;
use crate::truncated::{trunc_t_mean_given, trunc_t_second_given, TruncatedTSpec};

use super::config::ConstraintMode;

/// Conditional expectations of the latent variables, one cell per
/// `(kernel i, observation j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationCache<T: Real> {
    /// Responsibilities, `g × n`.
    pub z: DMatrix<T>,
    /// `E[ln W | y]`.
    pub e1: DMatrix<T>,
    /// `E[W | y]`.
    pub e2: DMatrix<T>,
    /// `E[W U | y]`, indexed `[i][j]`.
    pub e3: Vec<Vec<DVector<T>>>,
    /// `E[W U Uᵀ | y]`, indexed `[i][j]`.
    pub e4: Vec<Vec<DMatrix<T>>>,
    /// `ln ωᵢ + ln fᵢ(yⱼ)`.
    pub weighted: DMatrix<T>,
    /// Log-likelihood of the parameters the cache was computed at.
    pub loglik: T,
    /// Cells that fell back to the symmetric closed forms.
    pub fallbacks: usize,
}

impl<T: Real> ExpectationCache<T> {
    pub fn g(&self) -> usize {
        self.z.nrows()
    }

    pub fn n(&self) -> usize {
        self.z.ncols()
    }
}

/// Expectations for a single cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellExpectations<T: Real> {
    pub ln_density: T,
    pub e1: T,
    pub e2: T,
    pub e3: DVector<T>,
    pub e4: DMatrix<T>,
    pub fallback: bool,
}

/// E-step for unconstrained skew-t kernels.
pub fn e_step<T: Real>(data: &DataMatrix<T>, model: &MixtureModel<T>, seed: u64) -> Result<ExpectationCache<T>> {
    e_step_with(data, model, ConstraintMode::Full, seed)
}

/// E-step under a constraint mode. Cells run in parallel; cell `(i, j)` uses
/// the seed `derive_seed(seed, [i, j])`.
pub fn e_step_with<T: Real>(
    data: &DataMatrix<T>,
    model: &MixtureModel<T>,
    mode: ConstraintMode,
    seed: u64,
) -> Result<ExpectationCache<T>> {
    model.check_data(data)?;
    let geoms = model.geometries()?;
    let (g, n, p) = (model.g(), data.n(), data.p());
    let cells: Vec<Vec<CellExpectations<T>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..g)
                .map(|i| {
                    let cell = derive_seed(seed, &[i as u64, j as u64]);
                    cell_expectations(&geoms[i], data.row(j), mode, cell)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let weighted = DMatrix::from_fn(g, n, |i, j| model.weights[i].ln() + cells[j][i].ln_density);
    let z = responsibilities_from(&weighted)?;
    let loglik = log_likelihood_from(&weighted)?;
    let e1 = DMatrix::from_fn(g, n, |i, j| cells[j][i].e1);
    let e2 = DMatrix::from_fn(g, n, |i, j| cells[j][i].e2);
    let mut e3 = vec![Vec::with_capacity(n); g];
    let mut e4 = vec![Vec::with_capacity(n); g];
    let mut fallbacks = 0;
    for col in cells {
        for (i, c) in col.into_iter().enumerate() {
            fallbacks += usize::from(c.fallback);
            e3[i].push(c.e3);
            e4[i].push(c.e4);
        }
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} cells used symmetric fallback expectations");
    }
    debug_assert!(e3.iter().all(|r| r.iter().all(|v| v.len() == p)));
    Ok(ExpectationCache {
        z,
        e1,
        e2,
        e3,
        e4,
        weighted,
        loglik,
        fallbacks,
    })
}

/// Log-density and conditional expectations of one observation under one
/// kernel.
pub fn cell_expectations<T: Real>(
    geom: &KernelGeometry<T>,
    y: &DVector<T>,
    mode: ConstraintMode,
    seed: u64,
) -> Result<CellExpectations<T>> {
    let q = geom.at(y);
    let p = geom.dim();
    if geom.nu().is_infinite() {
        return Ok(CellExpectations {
            ln_density: q.ln_t,
            e1: T::zero(),
            e2: T::one(),
            e3: DVector::zeros(p),
            e4: DMatrix::zeros(p, p),
            fallback: false,
        });
    }
    if !mode.has_skew() {
        return Ok(symmetric_cell(geom, &q, q.ln_t, false));
    }
    geom.require_lambda_pd()?;
    skewed_cell(geom, &q, seed)
}

/// Closed forms for `Δ = 0`: `W | y ~ Gamma((ν+p)/2, (ν+d)/2)`.
fn symmetric_cell<T: Real>(
    geom: &KernelGeometry<T>,
    q: &PointQuantities<T>,
    ln_density: T,
    fallback: bool,
) -> CellExpectations<T> {
    let p = geom.dim();
    let nu = geom.nu();
    let half = T::lit(0.5);
    let nu_p = nu + T::from_usize_lossy(p);
    let e2 = nu_p / (nu + q.d);
    let e1 = psi(half * nu_p) - (half * (nu + q.d)).ln();
    CellExpectations {
        ln_density,
        e1,
        e2,
        e3: DVector::zeros(p),
        e4: DMatrix::zeros(p, p),
        fallback,
    }
}

fn skewed_cell<T: Real>(geom: &KernelGeometry<T>, q: &PointQuantities<T>, seed: u64) -> Result<CellExpectations<T>> {
    let p = geom.dim();
    let pf = T::from_usize_lossy(p);
    let nu = geom.nu();
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let nu_p = nu + pf;
    let nu_p2 = nu_p + two;
    let nu_d = nu + q.d;
    let lambda = geom.lambda();
    let y1 = &q.y_star;
    let y2 = &q.c * (nu_p2 / nu_d).sqrt();
    let (num, den) = mvt_cdf_pair_with(
        (&y2, nu_p2),
        (y1, nu_p),
        lambda,
        derive_seed(seed, &[0]),
        &CdfOptions::default(),
    )?;
    let ln_density = if geom.zero_skew() {
        q.ln_t
    } else {
        pf * T::LN_2() + q.ln_t + den.ln_value
    };
    let ratio = match ratio_of(&num, &den) {
        Ok(r) => r,
        Err(Error::Underflow { .. }) => return Ok(symmetric_cell(geom, q, ln_density, true)),
        Err(e) => return Err(e),
    };
    let e2 = nu_p / nu_d * ratio;
    let e1 = e2 - (half * nu_d).ln() - nu_p / nu_d + psi(half * nu_p);
    // U | y is t with location c, scale (ν+d)/(ν+p+2)·Λ and ν+p+2 degrees of
    // freedom, truncated below at 0; its c1 and c2 are the two orthant
    // probabilities above.
    let spec = TruncatedTSpec {
        mu: q.c.clone(),
        sigma: lambda * (nu_d / nu_p2),
        nu: nu_p2,
        a: DVector::zeros(p),
    };
    let moments = trunc_t_mean_given(&spec, num.value, derive_seed(seed, &[1]))
        .and_then(|m| trunc_t_second_given(&spec, &m, den.value, derive_seed(seed, &[1])).map(|s| (m, s)));
    let (mean, second) = match moments {
        Ok(ms) => ms,
        Err(Error::DegenerateTruncation { .. }) => return Ok(symmetric_cell(geom, q, ln_density, true)),
        Err(e) => return Err(e),
    };
    Ok(CellExpectations {
        ln_density,
        e1,
        e2,
        e3: mean.mean * e2,
        e4: second.second * e2,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{sample_mst, KernelParams};
    use crate::linalg::{asymmetry, min_eigenvalue};
    use crate::mixture::log_likelihood;
    use nalgebra::{dmatrix, dvector};

    fn skewed() -> KernelParams<f64> {
        KernelParams::new(
            dvector![0.5, -1.0],
            dmatrix![1.5, 0.4; 0.4, 0.8],
            dmatrix![1.0, 0.3; -0.2, 0.7],
            6.0,
        )
        .unwrap()
    }

    #[test]
    fn single_kernel_responsibilities_are_one() {
        let k = skewed();
        let data = sample_mst(&k, 20, 3).unwrap();
        let m = MixtureModel::new(vec![k], vec![1.0]).unwrap();
        let c = e_step(&data, &m, 1).unwrap();
        assert!(c.z.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gamma_posterior_when_symmetric() {
        let k = KernelParams::new(dvector![0.2], dmatrix![2.0], dmatrix![0.0], 7.0).unwrap();
        let geom = KernelGeometry::new(&k).unwrap();
        for &y in &[-3.0, -0.4, 0.0, 1.1, 6.0] {
            let c = cell_expectations(&geom, &dvector![y], ConstraintMode::Full, 5).unwrap();
            let d = (y - 0.2f64).powi(2) / 2.0;
            let shape = (7.0 + 1.0) / 2.0;
            let rate = (7.0 + d) / 2.0;
            assert!((c.e2 - shape / rate).abs() < 1e-9);
            assert!((c.e1 - (psi(shape) - f64::ln(rate))).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_limit_weight_is_one() {
        let k = KernelParams::<f64>::new(dvector![0.0], dmatrix![1.0], dmatrix![0.0], 1e6).unwrap();
        let geom = KernelGeometry::new(&k).unwrap();
        for &y in &[-1.9, -0.5, 0.0, 1.0, 1.99] {
            let c = cell_expectations(&geom, &dvector![y], ConstraintMode::Full, 0).unwrap();
            assert!((c.e2 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn invariants_on_a_two_kernel_model() {
        let a = skewed();
        let b = KernelParams::new(
            dvector![3.0, 2.0],
            dmatrix![1.0, -0.2; -0.2, 1.0],
            dmatrix![-0.5, 0.0; 0.0, 0.9],
            4.0,
        )
        .unwrap();
        let data = sample_mst(&a, 30, 1).unwrap().concat(&sample_mst(&b, 30, 2).unwrap()).unwrap();
        let m = MixtureModel::new(vec![a, b], vec![0.4, 0.6]).unwrap();
        let c = e_step(&data, &m, 9).unwrap();
        for j in 0..data.n() {
            assert!((c.z.column(j).sum() - 1.0).abs() < 1e-12);
        }
        assert!(c.e2.iter().all(|&v| v > 0.0));
        for row in &c.e4 {
            for e4 in row {
                assert!(asymmetry(e4) <= 1e-8);
                assert!(min_eigenvalue(e4) >= -1e-8);
            }
        }
        let ll = log_likelihood(&data, &m).unwrap();
        assert!((c.loglik - ll).abs() < 1e-9 * ll.abs());
    }

    #[test]
    fn deterministic() {
        let k = skewed();
        let data = sample_mst(&k, 15, 4).unwrap();
        let m = MixtureModel::new(vec![k], vec![1.0]).unwrap();
        assert_eq!(e_step(&data, &m, 3).unwrap(), e_step(&data, &m, 3).unwrap());
    }

    #[test]
    fn zero_skew_mode_uses_closed_forms() {
        let k = KernelParams::symmetric(dvector![0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 1.0], 5.0).unwrap();
        let geom = KernelGeometry::new(&k).unwrap();
        let c = cell_expectations(&geom, &dvector![1.0, 1.0], ConstraintMode::ZeroSkew, 0).unwrap();
        assert_eq!(c.e2, 7.0 / 7.0);
        assert_eq!(c.e3, DVector::zeros(2));
    }
}
