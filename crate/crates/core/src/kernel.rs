//! Multivariate t and skew-t densities, the quantities derived from a skew-t
//! kernel at an observation, and the hierarchical sampler.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, Cholesky};
use crate::mvt::{mvt_cdf_with, CdfOptions};
use crate::scalar::Real;
use crate::special::lgamma;

/// Default upper bound on the degrees of freedom.
pub const NU_MAX_DEFAULT: f64 = 1e4;

/// Seed used by the unseeded density entry points.
pub const DEFAULT_DENSITY_SEED: u64 = 0x5eed;

/// One skew-t component: location `mu`, scale `sigma`, skewness `delta`, and
/// degrees of freedom `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams<T: Real> {
    pub mu: DVector<T>,
    pub sigma: DMatrix<T>,
    pub delta: DMatrix<T>,
    pub nu: T,
}

impl<T: Real> KernelParams<T> {
    /// Validated constructor; `sigma` must be symmetric and positive definite
    /// (jitter allowed) and `nu > 2`.
    pub fn new(mu: DVector<T>, sigma: DMatrix<T>, delta: DMatrix<T>, nu: T) -> Result<Self> {
        let k = KernelParams { mu, sigma, delta, nu };
        k.validate()?;
        Ok(k)
    }

    /// Gaussian kernel, encoded as `ν = ∞` with zero skewness.
    pub fn gaussian(mu: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        Self::symmetric(mu, sigma, T::infinity())
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }

    pub fn has_zero_skew(&self) -> bool {
        self.delta.iter().all(|v| *v == T::zero())
    }

    /// Kernel with zero skewness.
    pub fn symmetric(mu: DVector<T>, sigma: DMatrix<T>, nu: T) -> Result<Self> {
        let p = mu.len();
        Self::new(mu, sigma, DMatrix::zeros(p, p), nu)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mu.len();
        if p == 0 {
            return Err(Error::DimensionMismatch("kernel with zero dimensions".into()));
        }
        if self.sigma.shape() != (p, p) || self.delta.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "kernel: mu {p}, sigma {:?}, delta {:?}",
                self.sigma.shape(),
                self.delta.shape()
            )));
        }
        let finite = |m: &DMatrix<T>| m.iter().all(|v| v.is_finite());
        if !self.mu.iter().all(|v| v.is_finite()) || !finite(&self.sigma) || !finite(&self.delta) {
            return Err(Error::InvalidParameter("kernel has non-finite entries".into()));
        }
        if !(self.nu > T::lit(2.0)) || self.nu.is_nan() {
            return Err(Error::InvalidParameter(format!("nu = {} must exceed 2", self.nu)));
        }
        if self.is_gaussian() && !self.has_zero_skew() {
            return Err(Error::InvalidParameter("a Gaussian kernel cannot carry skewness".into()));
        }
        let tol = if T::epsilon() < T::lit(1e-10) { 1e-12 } else { 1e-6 };
        if asymmetry(&self.sigma) > T::lit(tol) {
            return Err(Error::InvalidParameter("sigma is not symmetric".into()));
        }
        Cholesky::with_jitter(&self.sigma, "sigma")?;
        Ok(())
    }

    /// `Ω = Σ + ΔΔᵀ`.
    pub fn omega(&self) -> DMatrix<T> {
        &self.sigma + &self.delta * self.delta.transpose()
    }
}

/// Quantities of a kernel evaluated at one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedKernelQuantities<T: Real> {
    pub omega_mat: DMatrix<T>,
    /// `(y − μ)ᵀ Ω⁻¹ (y − μ)`.
    pub d: T,
    /// `Δᵀ Ω⁻¹ (y − μ)`.
    pub c: DVector<T>,
    /// `I − Δᵀ Ω⁻¹ Δ`.
    pub lambda_mat: DMatrix<T>,
    /// `c √((ν + p) / (ν + d))`.
    pub y_star: DVector<T>,
    /// `ν + p`.
    pub nu_prime: T,
}

/// Per-kernel factorizations shared by every observation.
#[derive(Debug, Clone)]
pub struct KernelGeometry<T: Real> {
    p: usize,
    nu: T,
    mu: DVector<T>,
    omega: DMatrix<T>,
    omega_chol: Cholesky<T>,
    /// `Δᵀ Ω⁻¹`.
    skew_proj: DMatrix<T>,
    lambda: DMatrix<T>,
    lambda_pd: bool,
    zero_skew: bool,
    ln_t_const: T,
}

/// Observation-level quantities computed from a [`KernelGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointQuantities<T: Real> {
    pub d: T,
    pub c: DVector<T>,
    pub y_star: DVector<T>,
    /// `ln t_p(y | μ, Ω, ν)`.
    pub ln_t: T,
}

impl<T: Real> KernelGeometry<T> {
    pub fn new(kernel: &KernelParams<T>) -> Result<Self> {
        let p = kernel.dim();
        let omega = kernel.omega();
        let omega_chol = Cholesky::with_jitter(&omega, "omega")?;
        let skew_proj = omega_chol.solve_matrix(&kernel.delta).transpose();
        let mut lambda = DMatrix::identity(p, p) - &skew_proj * &kernel.delta;
        lambda = crate::linalg::symmetrize(&lambda);
        let lambda_pd = Cholesky::new(&lambda).is_some();
        let ln_t_const = ln_t_normalizer(p, kernel.nu, omega_chol.log_det());
        let zero_skew = kernel.has_zero_skew();
        if kernel.is_gaussian() && !zero_skew {
            return Err(Error::InvalidParameter("a Gaussian kernel cannot carry skewness".into()));
        }
        Ok(KernelGeometry {
            p,
            nu: kernel.nu,
            mu: kernel.mu.clone(),
            omega,
            omega_chol,
            skew_proj,
            lambda,
            lambda_pd,
            zero_skew,
            ln_t_const,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn omega(&self) -> &DMatrix<T> {
        &self.omega
    }

    pub fn lambda(&self) -> &DMatrix<T> {
        &self.lambda
    }

    pub fn lambda_is_pd(&self) -> bool {
        self.lambda_pd
    }

    /// True when `Δ = 0`; the skewing factor is then exactly `2⁻ᵖ`.
    pub fn zero_skew(&self) -> bool {
        self.zero_skew
    }

    pub fn at(&self, y: &DVector<T>) -> PointQuantities<T> {
        let r = y - &self.mu;
        let d = self.omega_chol.quad_form(&r).max(T::zero());
        let c = &self.skew_proj * &r;
        let p = T::from_usize_lossy(self.p);
        let half = T::lit(0.5);
        let (y_star, ln_t) = if self.nu.is_infinite() {
            (c.clone(), self.ln_t_const - half * d)
        } else {
            (
                &c * ((self.nu + p) / (self.nu + d)).sqrt(),
                self.ln_t_const - (self.nu + p) * half * (d / self.nu).ln_1p(),
            )
        };
        PointQuantities { d, c, y_star, ln_t }
    }

    pub fn derived(&self, y: &DVector<T>) -> DerivedKernelQuantities<T> {
        let q = self.at(y);
        DerivedKernelQuantities {
            omega_mat: self.omega.clone(),
            d: q.d,
            c: q.c,
            lambda_mat: self.lambda.clone(),
            y_star: q.y_star,
            nu_prime: self.nu + T::from_usize_lossy(self.p),
        }
    }

    /// `ln` of the skew-t density, from precomputed point quantities.
    pub fn ln_density_at(&self, q: &PointQuantities<T>, seed: u64) -> Result<T> {
        if self.zero_skew {
            return Ok(q.ln_t);
        }
        self.require_lambda_pd()?;
        let p = self.p;
        let nu_prime = self.nu + T::from_usize_lossy(p);
        let ln_cdf = mvt_cdf_with(
            &q.y_star,
            &DVector::zeros(p),
            &self.lambda,
            nu_prime,
            seed,
            &CdfOptions::default(),
        )?
        .ln_value;
        Ok(T::from_usize_lossy(p) * T::LN_2() + q.ln_t + ln_cdf)
    }

    pub fn ln_density(&self, y: &DVector<T>, seed: u64) -> Result<T> {
        self.ln_density_at(&self.at(y), seed)
    }

    pub(crate) fn require_lambda_pd(&self) -> Result<()> {
        if self.lambda_pd {
            Ok(())
        } else {
            Err(Error::InvalidSkewness {
                context: "lambda = I - delta' omega^-1 delta is not positive definite".into(),
            })
        }
    }
}

fn ln_t_normalizer<T: Real>(p: usize, nu: T, ln_det: T) -> T {
    let pf = T::from_usize_lossy(p);
    let half = T::lit(0.5);
    if nu.is_infinite() {
        return -half * pf * T::TAU().ln() - half * ln_det;
    }
    lgamma((nu + pf) * half) - lgamma(nu * half) - pf * half * (nu * T::PI()).ln() - half * ln_det
}

/// `ln t_p(y | μ, Ω, ν)`.
pub fn ln_t_pdf<T: Real>(y: &DVector<T>, mu: &DVector<T>, omega: &DMatrix<T>, nu: T) -> Result<T> {
    let p = mu.len();
    if y.len() != p || omega.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "t_pdf: y {}, mu {p}, omega {:?}",
            y.len(),
            omega.shape()
        )));
    }
    if !(nu > T::zero()) {
        return Err(Error::InvalidParameter(format!("t_pdf: nu = {nu}")));
    }
    let chol = Cholesky::with_jitter(omega, "t_pdf scale")?;
    let d = chol.quad_form(&(y - mu)).max(T::zero());
    let pf = T::from_usize_lossy(p);
    let half = T::lit(0.5);
    if nu.is_infinite() {
        return Ok(ln_t_normalizer(p, nu, chol.log_det()) - half * d);
    }
    Ok(ln_t_normalizer(p, nu, chol.log_det()) - (nu + pf) * half * (d / nu).ln_1p())
}

/// Multivariate t density `t_p(y | μ, Ω, ν)`.
pub fn t_pdf<T: Real>(y: &DVector<T>, mu: &DVector<T>, omega: &DMatrix<T>, nu: T) -> Result<T> {
    ln_t_pdf(y, mu, omega, nu).map(|v| v.exp())
}

/// Derived quantities of `kernel` at `y` from one factorization of `Ω`.
pub fn derive_quantities<T: Real>(
    kernel: &KernelParams<T>,
    y: &DVector<T>,
) -> Result<DerivedKernelQuantities<T>> {
    check_point(kernel, y)?;
    Ok(KernelGeometry::new(kernel)?.derived(y))
}

/// `ln` of the skew-t density `2ᵖ t_p(y | μ, Ω, ν) T_{p,ν+p}(y★ | 0, Λ)`.
pub fn ln_mst_pdf<T: Real>(y: &DVector<T>, kernel: &KernelParams<T>) -> Result<T> {
    ln_mst_pdf_seeded(y, kernel, DEFAULT_DENSITY_SEED)
}

/// [`ln_mst_pdf`] with an explicit seed for the lattice rule (`p ≥ 3`).
pub fn ln_mst_pdf_seeded<T: Real>(y: &DVector<T>, kernel: &KernelParams<T>, seed: u64) -> Result<T> {
    check_point(kernel, y)?;
    KernelGeometry::new(kernel)?.ln_density(y, seed)
}

pub fn mst_pdf<T: Real>(y: &DVector<T>, kernel: &KernelParams<T>) -> Result<T> {
    ln_mst_pdf(y, kernel).map(|v| v.exp())
}

fn check_point<T: Real>(kernel: &KernelParams<T>, y: &DVector<T>) -> Result<()> {
    if y.len() != kernel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation has {} entries, kernel has {}",
            y.len(),
            kernel.dim()
        )));
    }
    Ok(())
}

/// `n` draws from the skew-t kernel through its hierarchy
/// `W ~ Gamma(ν/2, ν/2)`, `U | W ~ |N(0, I/W)|`, `Y | U, W ~ N(μ + ΔU, Σ/W)`.
pub fn sample_mst<T: Real>(kernel: &KernelParams<T>, n: usize, seed: u64) -> Result<DataMatrix<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_mst_with_rng(kernel, n, &mut rng)
}

/// [`sample_mst`] drawing from a caller-owned generator.
pub fn sample_mst_with_rng<T: Real, R: rand::Rng + ?Sized>(
    kernel: &KernelParams<T>,
    n: usize,
    rng: &mut R,
) -> Result<DataMatrix<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    kernel.validate()?;
    let p = kernel.dim();
    let chol = Cholesky::with_jitter(&kernel.sigma, "sigma")?;
    let l = chol.l().map(|v| v.to_f64_lossy());
    let delta = kernel.delta.map(|v| v.to_f64_lossy());
    let mu = kernel.mu.map(|v| v.to_f64_lossy());
    let nu = kernel.nu.to_f64_lossy();
    let gamma = if nu.is_infinite() {
        None
    } else {
        Some(
            Gamma::new(nu / 2.0, 2.0 / nu)
                .map_err(|e| Error::InvalidParameter(format!("gamma mixing law: {e}")))?,
        )
    };
    let mut rows = Vec::with_capacity(n);
    let mut u = DVector::<f64>::zeros(p);
    let mut z = DVector::<f64>::zeros(p);
    for _ in 0..n {
        let w: f64 = gamma.map_or(1.0, |g| g.sample(rng));
        let inv_sd = 1.0 / w.sqrt();
        for k in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            u[k] = e.abs() * inv_sd;
        }
        for k in 0..p {
            z[k] = StandardNormal.sample(rng);
        }
        let y = &mu + &delta * &u + (&l * &z) * inv_sd;
        rows.push(y.map(T::lit));
    }
    DataMatrix::from_rows(rows)
}
