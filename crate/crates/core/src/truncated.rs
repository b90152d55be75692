//! First and second moments of the multivariate t distribution truncated to
//! the region `X > a` (every coordinate above its bound).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{DerivedKernelQuantities, KernelParams};
use crate::linalg::{cross_block, drop_entries, drop_rows_cols, symmetrize, Cholesky};
use crate::mvt::{mvt_cdf_with, CdfOptions};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::special::lgamma;

/// Below this normalizing probability the truncation is rejected.
pub const DEGENERATE_C1: f64 = 1e-300;
/// Below this normalizing probability a conditioning warning is logged.
pub const WARN_C1: f64 = 1e-12;

/// `X ~ t_{p,ν}(mu, sigma)` restricted to `X > a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTSpec<T: Real> {
    pub mu: DVector<T>,
    pub sigma: DMatrix<T>,
    pub nu: T,
    pub a: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMean<T: Real> {
    pub mean: DVector<T>,
    /// `P(X > a) = T_{p,ν}(μ − a | 0, Σ)`.
    pub c1: T,
    pub xi: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSecond<T: Real> {
    pub second: DMatrix<T>,
    /// `T_{p,ν−2}(μ − a | 0, ν/(ν−2) · Σ)`.
    pub c2: T,
    pub h: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTMoments<T: Real> {
    pub mean: DVector<T>,
    pub second: DMatrix<T>,
    pub c1: T,
    pub c2: T,
    pub xi: DVector<T>,
    pub h: DMatrix<T>,
}

impl<T: Real> TruncatedTSpec<T> {
    pub fn new(mu: DVector<T>, sigma: DMatrix<T>, nu: T, a: DVector<T>) -> Result<Self> {
        let spec = TruncatedTSpec { mu, sigma, nu, a };
        spec.check_shape()?;
        if !(spec.nu > T::lit(2.0)) {
            return Err(Error::MomentUndefined {
                nu: spec.nu.to_f64_lossy(),
            });
        }
        Cholesky::with_jitter(&spec.sigma, "truncated t scale")?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_shape(&self) -> Result<()> {
        let p = self.mu.len();
        if p == 0 || self.sigma.shape() != (p, p) || self.a.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "truncated t: mu {p}, sigma {:?}, a {}",
                self.sigma.shape(),
                self.a.len()
            )));
        }
        Ok(())
    }

    /// `b = μ − a`.
    fn offset(&self) -> DVector<T> {
        &self.mu - &self.a
    }
}

/// `E[X]`, the normalizing probability `c1`, and `ξ`.
pub fn trunc_t_mean<T: Real>(spec: &TruncatedTSpec<T>, seed: u64) -> Result<TruncatedMean<T>> {
    spec.check_shape()?;
    if !(spec.nu > T::one()) {
        return Err(Error::MomentUndefined {
            nu: spec.nu.to_f64_lossy(),
        });
    }
    let b = spec.offset();
    let p = spec.dim();
    let c1 = mvt_cdf_with(
        &b,
        &DVector::zeros(p),
        &spec.sigma,
        spec.nu,
        derive_seed(seed, &[0]),
        &CdfOptions::default(),
    )?
    .value;
    trunc_t_mean_given(spec, c1, seed)
}

/// [`trunc_t_mean`] with `c1` already known.
pub(crate) fn trunc_t_mean_given<T: Real>(
    spec: &TruncatedTSpec<T>,
    c1: T,
    seed: u64,
) -> Result<TruncatedMean<T>> {
    check_c1(c1)?;
    let b = spec.offset();
    let xi = xi_vector(&spec.sigma, &b, spec.nu, seed)?;
    let mean = &spec.mu + &spec.sigma * &xi / c1;
    Ok(TruncatedMean { mean, c1, xi })
}

fn check_c1<T: Real>(c1: T) -> Result<()> {
    let v = c1.to_f64_lossy();
    if !(v >= DEGENERATE_C1) {
        return Err(Error::DegenerateTruncation { c1: v });
    }
    if v < WARN_C1 {
        log::warn!("truncation probability {v:e} is nearly degenerate; moments are ill-conditioned");
    }
    Ok(())
}

fn xi_vector<T: Real>(sigma: &DMatrix<T>, b: &DVector<T>, nu: T, seed: u64) -> Result<DVector<T>> {
    let p = b.len();
    let half = T::lit(0.5);
    let one = T::one();
    let ln_const = half * (nu * half).ln() + lgamma((nu - one) * half) - lgamma(nu * half);
    let mut xi = DVector::zeros(p);
    for i in 0..p {
        let s_ii = sigma[(i, i)];
        let q = b[i] * b[i] / s_ii;
        let mut ln_xi = ln_const - half * (T::TAU() * s_ii).ln()
            + (nu - one) * half * (nu / (nu + q)).ln();
        if p > 1 {
            let col = cross_block(sigma, &[i]).column(0).into_owned();
            let a_star = drop_entries(b, &[i]) - &col * (b[i] / s_ii);
            let cond = drop_rows_cols(sigma, &[i]) - &col * col.transpose() / s_ii;
            let s_star = symmetrize(&cond) * ((nu + q) / (nu - one));
            ln_xi += mvt_cdf_with(
                &a_star,
                &DVector::zeros(p - 1),
                &s_star,
                nu - one,
                derive_seed(seed, &[1, i as u64]),
                &CdfOptions::default(),
            )?
            .ln_value;
        }
        xi[i] = ln_xi.exp();
    }
    Ok(xi)
}

/// `E[XXᵀ]`, `c2`, and `H`, reusing the output of [`trunc_t_mean`].
pub fn trunc_t_second_moment<T: Real>(
    spec: &TruncatedTSpec<T>,
    mean: &TruncatedMean<T>,
    seed: u64,
) -> Result<TruncatedSecond<T>> {
    spec.check_shape()?;
    let nu = spec.nu;
    let two = T::lit(2.0);
    if !(nu > two) {
        return Err(Error::MomentUndefined {
            nu: nu.to_f64_lossy(),
        });
    }
    let p = spec.dim();
    let b = spec.offset();
    let c2 = mvt_cdf_with(
        &b,
        &DVector::zeros(p),
        &(&spec.sigma * (nu / (nu - two))),
        nu - two,
        derive_seed(seed, &[2]),
        &CdfOptions::default(),
    )?
    .value;
    trunc_t_second_given(spec, mean, c2, seed)
}

/// [`trunc_t_second_moment`] with `c2` already known.
pub(crate) fn trunc_t_second_given<T: Real>(
    spec: &TruncatedTSpec<T>,
    mean: &TruncatedMean<T>,
    c2: T,
    seed: u64,
) -> Result<TruncatedSecond<T>> {
    let nu = spec.nu;
    let two = T::lit(2.0);
    if !(nu > two) {
        return Err(Error::MomentUndefined {
            nu: nu.to_f64_lossy(),
        });
    }
    let b = spec.offset();
    let h = h_matrix(&spec.sigma, &b, &mean.xi, nu, seed)?;
    let c1 = mean.c1;
    let sigma = &spec.sigma;
    let mu = &spec.mu;
    let eps = sigma * &mean.xi / c1;
    let second = mu * mu.transpose() + mu * eps.transpose() + &eps * mu.transpose()
        - sigma * &h * sigma / c1
        + sigma * (c2 / c1 * nu / (nu - two));
    Ok(TruncatedSecond {
        second: symmetrize(&second),
        c2,
        h,
    })
}

fn h_matrix<T: Real>(
    sigma: &DMatrix<T>,
    b: &DVector<T>,
    xi: &DVector<T>,
    nu: T,
    seed: u64,
) -> Result<DMatrix<T>> {
    let p = b.len();
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut h = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let (s_ii, s_jj, s_ij) = (sigma[(i, i)], sigma[(j, j)], sigma[(i, j)]);
            let det = s_ii * s_jj - s_ij * s_ij;
            // Σ_ij⁻¹ b_ij for the 2×2 block
            let w = [(s_jj * b[i] - s_ij * b[j]) / det, (s_ii * b[j] - s_ij * b[i]) / det];
            let nu_star = nu + b[i] * w[0] + b[j] * w[1];
            let mut ln_h = -(T::TAU()).ln() - half * det.ln() + (nu / (nu - two)).ln()
                + (nu - two) * half * (nu / nu_star).ln();
            if p > 2 {
                let skip = [i, j];
                let cross = cross_block(sigma, &skip);
                let block_inv = DMatrix::from_row_slice(2, 2, &[s_jj, -s_ij, -s_ij, s_ii]) / det;
                let a_star = drop_entries(b, &skip) - &cross * DVector::from_column_slice(&w);
                let cond = drop_rows_cols(sigma, &skip) - &cross * block_inv * cross.transpose();
                let s_star = symmetrize(&cond) * (nu_star / (nu - two));
                ln_h += mvt_cdf_with(
                    &a_star,
                    &DVector::zeros(p - 2),
                    &s_star,
                    nu - two,
                    derive_seed(seed, &[3, i as u64, j as u64]),
                    &CdfOptions::default(),
                )?
                .ln_value;
            }
            // boundary terms enter with a negative sign
            let v = -ln_h.exp();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    for i in 0..p {
        let mut acc = b[i] * xi[i];
        for j in 0..p {
            if j != i {
                acc -= sigma[(i, j)] * h[(i, j)];
            }
        }
        h[(i, i)] = acc / sigma[(i, i)];
    }
    Ok(symmetrize(&h))
}

/// Both moments at once.
pub fn trunc_t_moments<T: Real>(spec: &TruncatedTSpec<T>, seed: u64) -> Result<TruncatedTMoments<T>> {
    let m = trunc_t_mean(spec, seed)?;
    let s = trunc_t_second_moment(spec, &m, seed)?;
    Ok(TruncatedTMoments {
        mean: m.mean,
        second: s.second,
        c1: m.c1,
        c2: s.c2,
        xi: m.xi,
        h: s.h,
    })
}

/// Law of the latent skewing vector given an observation: location `c`,
/// scale `(ν + d)/(ν + p + 2) · Λ`, `ν + p + 2` degrees of freedom, truncated
/// to the positive orthant.
pub fn u_posterior_spec<T: Real>(
    kernel: &KernelParams<T>,
    derived: &DerivedKernelQuantities<T>,
) -> Result<TruncatedTSpec<T>> {
    let p = kernel.dim();
    if derived.c.len() != p || derived.lambda_mat.shape() != (p, p) {
        return Err(Error::DimensionMismatch(
            "derived quantities do not match the kernel".into(),
        ));
    }
    let pf = T::from_usize_lossy(p);
    let dof = kernel.nu + pf + T::lit(2.0);
    let scale = (kernel.nu + derived.d) / dof;
    Ok(TruncatedTSpec {
        mu: derived.c.clone(),
        sigma: &derived.lambda_mat * scale,
        nu: dof,
        a: DVector::zeros(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::derive_quantities;
    use crate::linalg::min_eigenvalue;
    use nalgebra::{dmatrix, dvector};

    fn spec(mu: DVector<f64>, sigma: DMatrix<f64>, nu: f64, a: DVector<f64>) -> TruncatedTSpec<f64> {
        TruncatedTSpec::new(mu, sigma, nu, a).unwrap()
    }

    #[test]
    fn half_t_mean_closed_form() {
        let s = spec(dvector![0.0], dmatrix![1.0], 3.0, dvector![0.0]);
        let m = trunc_t_mean(&s, 0).unwrap();
        let want = (3.0 / std::f64::consts::PI).sqrt() * 1.0 / (0.5 * std::f64::consts::PI.sqrt());
        assert!((m.mean[0] - want).abs() < 1e-12);
        assert!((m.mean[0] - 1.10266).abs() < 1e-5);
        assert!((m.c1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn half_t_second_moment_is_untouched() {
        for nu in [3.0, 5.0, 12.5] {
            let s = spec(dvector![0.0], dmatrix![1.0], nu, dvector![0.0]);
            let m = trunc_t_moments(&s, 0).unwrap();
            assert!((m.second[(0, 0)] - nu / (nu - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_equivariance() {
        let sigma = dmatrix![1.0, 0.5; 0.5, 1.0];
        let base = spec(dvector![0.2, -0.1], sigma.clone(), 5.0, dvector![0.0, 0.0]);
        let c = dvector![2.0, -1.0];
        let moved = spec(&base.mu + &c, sigma, 5.0, &base.a + &c);
        let m0 = trunc_t_moments(&base, 1).unwrap();
        let m1 = trunc_t_moments(&moved, 1).unwrap();
        assert!((&m1.mean - (&m0.mean + &c)).amax() < 1e-10);
        let want = &m0.second + &m0.mean * c.transpose() + &c * m0.mean.transpose() + &c * c.transpose();
        assert!((&m1.second - want).amax() < 1e-9);
    }

    #[test]
    fn scaling_equivariance() {
        let sigma = dmatrix![1.0, 0.3, 0.1; 0.3, 2.0, -0.4; 0.1, -0.4, 1.5];
        let base = spec(dvector![0.4, -0.2, 0.1], sigma.clone(), 6.0, dvector![0.0, -0.5, 0.2]);
        let k = 2.5;
        let scaled = spec(&base.mu * k, sigma * (k * k), 6.0, &base.a * k);
        let m0 = trunc_t_moments(&base, 2).unwrap();
        let m1 = trunc_t_moments(&scaled, 2).unwrap();
        assert!((&m1.mean - &m0.mean * k).amax() < 1e-8);
        assert!((&m1.second - &m0.second * (k * k)).amax() < 1e-7);
    }

    #[test]
    fn untruncated_limit() {
        let sigma = dmatrix![1.0f64, 0.4; 0.4, 2.0];
        let mu = dvector![0.5f64, -1.0];
        let a = DVector::from_fn(2, |i, _| mu[i] - 40.0 * sigma[(i, i)].sqrt());
        let m = trunc_t_moments(&spec(mu.clone(), sigma.clone(), 10.0, a), 0).unwrap();
        assert!((&m.mean - &mu).amax() < 1e-3);
        let want = &mu * mu.transpose() + &sigma * (10.0 / 8.0);
        assert!((&m.second - &want).amax() < 1e-3 * want.amax());
    }

    #[test]
    fn covariance_is_psd_and_h_symmetric() {
        let sigma = dmatrix![1.0, 0.6, -0.2; 0.6, 1.5, 0.3; -0.2, 0.3, 0.8];
        for (mu, nu) in [(dvector![0.0, 0.0, 0.0], 3.0), (dvector![-1.0, 0.5, 2.0], 7.0)] {
            let m = trunc_t_moments(&spec(mu, sigma.clone(), nu, DVector::zeros(3)), 5).unwrap();
            let cov = &m.second - &m.mean * m.mean.transpose();
            assert!(min_eigenvalue(&cov) >= -1e-8);
            assert!((&m.h - m.h.transpose()).amax() < 1e-10);
            assert!(m.c1 > 0.0 && m.c1 <= 1.0 && m.c2 > 0.0 && m.c2 <= 1.0);
        }
    }

    #[test]
    fn moment_errors() {
        let mut s = spec(dvector![0.0], dmatrix![1.0], 3.0, dvector![0.0]);
        s.nu = 2.0;
        let m = trunc_t_mean(&s, 0).unwrap();
        assert!(matches!(
            trunc_t_second_moment(&s, &m, 0),
            Err(Error::MomentUndefined { .. })
        ));
        let far = TruncatedTSpec {
            mu: dvector![0.0],
            sigma: dmatrix![1.0],
            nu: 30.0,
            a: dvector![1e30],
        };
        assert!(matches!(trunc_t_mean(&far, 0), Err(Error::DegenerateTruncation { .. })));
        assert!(TruncatedTSpec::new(dvector![0.0], dmatrix![1.0], 1.5, dvector![0.0]).is_err());
    }

    #[test]
    fn posterior_spec_reductions() {
        let k = KernelParams::new(dvector![0.0f64], dmatrix![1.0], dmatrix![1.0], 3.0).unwrap();
        let d = derive_quantities(&k, &dvector![1.0]).unwrap();
        let s = u_posterior_spec(&k, &d).unwrap();
        assert!((s.mu[0] - 0.5).abs() < 1e-15);
        assert!((s.sigma[(0, 0)] - 3.5 / 6.0 * 0.5).abs() < 1e-15);
        assert_eq!(s.nu, 6.0);
        assert_eq!(s.a[0], 0.0);

        let sym = KernelParams::symmetric(dvector![1.0, 1.0], dmatrix![2.0, 0.1; 0.1, 1.0], 4.0).unwrap();
        let y = dvector![3.0, 0.0];
        let d = derive_quantities(&sym, &y).unwrap();
        let s = u_posterior_spec(&sym, &d).unwrap();
        assert_eq!(s.mu, DVector::zeros(2));
        assert!((&s.sigma - DMatrix::identity(2, 2) * ((4.0 + d.d) / 8.0)).amax() < 1e-15);

        let center = derive_quantities(&k, &dvector![0.0]).unwrap();
        let s = u_posterior_spec(&k, &center).unwrap();
        assert_eq!(s.mu[0], 0.0);
        assert!((s.sigma[(0, 0)] - 3.0 / 6.0 * center.lambda_mat[(0, 0)]).abs() < 1e-15);
    }
}
