//! Maximization step for `ω`, `μ`, `Δ` and `Σ`.

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernel::{KernelGeometry, KernelParams};
use crate::linalg::{exact_sum, pseudo_inverse_sym, symmetrize, Cholesky};
use crate::mixture::MixtureModel;
use crate::scalar::Real;

use super::config::{ConstraintMode, TrainerConfig};
use super::estep::ExpectationCache;
use super::trace::TraceFlag;

/// Responsibility mass below `MIN_MASS · n` collapses a kernel.
pub const MIN_MASS: f64 = 1e-8;
/// Maximum number of skewness step halvings.
pub const MAX_BACKTRACK: usize = 20;

/// Updated model plus the events raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepReport<T: Real> {
    pub model: MixtureModel<T>,
    pub flags: Vec<TraceFlag>,
}

/// Sufficient statistics of one kernel at a fixed `μ`.
struct KernelSums<T: Real> {
    mass: T,
    /// `Σ z e₂ r rᵀ`.
    srr: DMatrix<T>,
    /// `Σ z r e₃ᵀ`.
    sre3: DMatrix<T>,
    /// `Σ z e₄`.
    se4: DMatrix<T>,
}

impl<T: Real> KernelSums<T> {
    /// `Σ` as a function of `Δ`.
    fn sigma(&self, delta: &DMatrix<T>) -> DMatrix<T> {
        let cross = delta * self.sre3.transpose();
        let s = &self.srr - &cross - cross.transpose() + delta * &self.se4 * delta.transpose();
        symmetrize(&(s / self.mass))
    }
}

/// M-step; `ν` is carried over unchanged.
pub fn m_step<T: Real>(
    data: &DataMatrix<T>,
    cache: &ExpectationCache<T>,
    model: &MixtureModel<T>,
    config: &TrainerConfig<T>,
) -> Result<MixtureModel<T>> {
    m_step_detailed(data, cache, model, config).map(|r| r.model)
}

pub fn m_step_detailed<T: Real>(
    data: &DataMatrix<T>,
    cache: &ExpectationCache<T>,
    model: &MixtureModel<T>,
    config: &TrainerConfig<T>,
) -> Result<MStepReport<T>> {
    let (g, n, p) = (model.g(), data.n(), data.p());
    if cache.g() != g || cache.n() != n || data.p() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "cache is {}×{}, model has {g} kernels, data has {n} rows",
            cache.g(),
            cache.n()
        )));
    }
    let nf = T::from_usize_lossy(n);
    let mut flags = Vec::new();
    let mut masses = Vec::with_capacity(g);
    for i in 0..g {
        let mass = exact_sum((0..n).map(|j| cache.z[(i, j)]));
        if !(mass >= T::lit(MIN_MASS) * nf) {
            return Err(Error::DegenerateCluster {
                kernel: i,
                mass: mass.to_f64_lossy(),
            });
        }
        masses.push(mass);
    }
    let total = exact_sum(masses.iter().copied());
    let weights: Vec<T> = masses.iter().map(|&m| m / total).collect();
    let mut kernels = Vec::with_capacity(g);
    for (i, old) in model.kernels.iter().enumerate() {
        kernels.push(update_kernel(i, data, cache, old, masses[i], config.constraint_mode, &mut flags)?);
    }
    debug_assert!(kernels.iter().all(|k| k.dim() == p));
    Ok(MStepReport {
        model: MixtureModel::new(kernels, weights)?,
        flags,
    })
}

fn update_kernel<T: Real>(
    i: usize,
    data: &DataMatrix<T>,
    cache: &ExpectationCache<T>,
    old: &KernelParams<T>,
    mass: T,
    mode: ConstraintMode,
    flags: &mut Vec<TraceFlag>,
) -> Result<KernelParams<T>> {
    let (n, p) = (data.n(), data.p());
    let z = |j: usize| cache.z[(i, j)];
    let e2 = |j: usize| cache.e2[(i, j)];
    let skew = mode.has_skew();

    let sze2 = exact_sum((0..n).map(|j| z(j) * e2(j)));
    let mut sy = DVector::zeros(p);
    let mut se3 = DVector::zeros(p);
    for j in 0..n {
        sy += data.row(j) * (z(j) * e2(j));
        if skew {
            se3 += &cache.e3[i][j] * z(j);
        }
    }
    let old_delta = if skew { old.delta.clone() } else { DMatrix::zeros(p, p) };
    let mu = (sy - &old_delta * se3) / sze2;

    let mut sums = KernelSums {
        mass,
        srr: DMatrix::zeros(p, p),
        sre3: DMatrix::zeros(p, p),
        se4: DMatrix::zeros(p, p),
    };
    for j in 0..n {
        let r = data.row(j) - &mu;
        sums.srr += &r * r.transpose() * (z(j) * e2(j));
        if skew {
            sums.sre3 += &r * cache.e3[i][j].transpose() * z(j);
            sums.se4 += &cache.e4[i][j] * z(j);
        }
    }
    sums.se4 = symmetrize(&sums.se4);

    let target = match mode {
        ConstraintMode::Full => full_delta(i, &sums, flags),
        ConstraintMode::DiagonalSkew => diagonal_delta(i, &sums, &old.sigma, flags)?,
        ConstraintMode::ZeroSkew | ConstraintMode::Gaussian => DMatrix::zeros(p, p),
    };

    let mut delta = target;
    let mut accepted = None;
    for step in 0..=MAX_BACKTRACK {
        let sigma = repaired_sigma(i, sums.sigma(&delta), flags)?;
        let kernel = KernelParams {
            mu: mu.clone(),
            sigma,
            delta: delta.clone(),
            nu: old.nu,
        };
        if !skew || KernelGeometry::new(&kernel).map(|g| g.lambda_is_pd()).unwrap_or(false) {
            if step > 0 {
                flags.push(TraceFlag::SkewBacktracked(i));
            }
            accepted = Some(kernel);
            break;
        }
        delta = (&delta + &old_delta) * T::lit(0.5);
    }
    let kernel = match accepted {
        Some(k) => k,
        None => {
            flags.push(TraceFlag::SkewBacktracked(i));
            let sigma = repaired_sigma(i, sums.sigma(&old_delta), flags)?;
            KernelParams {
                mu,
                sigma,
                delta: old_delta,
                nu: old.nu,
            }
        }
    };
    kernel.validate()?;
    Ok(kernel)
}

/// `Δ = (Σ z r e₃ᵀ)(Σ z e₄)⁻¹`.
fn full_delta<T: Real>(i: usize, sums: &KernelSums<T>, flags: &mut Vec<TraceFlag>) -> DMatrix<T> {
    match Cholesky::new(&sums.se4) {
        Some(chol) => chol.solve_matrix(&sums.sre3.transpose()).transpose(),
        None => {
            log::warn!("kernel {i}: singular skewness system, using a pseudo-inverse");
            flags.push(TraceFlag::PseudoInverse(i));
            &sums.sre3 * pseudo_inverse_sym(&sums.se4, T::lit(1e-12))
        }
    }
}

/// Maximizer over diagonal `Δ = diag(δ)` at the current `Σ`:
/// `(Σ⁻¹ ∘ E) δ = diag(Σ⁻¹ C)` with `E = Σ z e₄` and `C = Σ z r e₃ᵀ`.
fn diagonal_delta<T: Real>(
    i: usize,
    sums: &KernelSums<T>,
    sigma: &DMatrix<T>,
    flags: &mut Vec<TraceFlag>,
) -> Result<DMatrix<T>> {
    let p = sigma.nrows();
    let prec = Cholesky::with_jitter(sigma, "sigma")?.inverse();
    let lhs = symmetrize(&prec.component_mul(&sums.se4));
    let pc = &prec * &sums.sre3;
    let rhs = DVector::from_fn(p, |k, _| pc[(k, k)]);
    let d = match Cholesky::new(&lhs) {
        Some(chol) => chol.solve(&rhs),
        None => {
            log::warn!("kernel {i}: singular diagonal skewness system, using a pseudo-inverse");
            flags.push(TraceFlag::PseudoInverse(i));
            pseudo_inverse_sym(&lhs, T::lit(1e-12)) * rhs
        }
    };
    Ok(DMatrix::from_diagonal(&d))
}

fn repaired_sigma<T: Real>(i: usize, sigma: DMatrix<T>, flags: &mut Vec<TraceFlag>) -> Result<DMatrix<T>> {
    let chol = Cholesky::with_jitter(&sigma, "updated sigma")?;
    if chol.jitter() == T::zero() {
        return Ok(sigma);
    }
    flags.push(TraceFlag::ScaleRepaired(i));
    let mut s = sigma;
    for k in 0..s.nrows() {
        s[(k, k)] += chol.jitter();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::estep::e_step_with;
    use nalgebra::{dmatrix, dvector};

    fn cache_with(z: DMatrix<f64>, e2: DMatrix<f64>, e3: Vec<Vec<DVector<f64>>>, e4: Vec<Vec<DMatrix<f64>>>) -> ExpectationCache<f64> {
        let (g, n) = z.shape();
        ExpectationCache {
            e1: DMatrix::zeros(g, n),
            weighted: DMatrix::zeros(g, n),
            z,
            e2,
            e3,
            e4,
            loglik: 0.0,
            fallbacks: 0,
        }
    }

    #[test]
    fn gaussian_reduction_gives_sample_moments() {
        let data = DataMatrix::from_vecs(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5], vec![2.0, 4.0]]).unwrap();
        let n = 4;
        let cache = cache_with(
            DMatrix::from_element(1, n, 1.0),
            DMatrix::from_element(1, n, 1.0),
            vec![vec![DVector::zeros(2); n]],
            vec![vec![DMatrix::zeros(2, 2); n]],
        );
        let k = KernelParams::symmetric(dvector![0.0, 0.0], DMatrix::identity(2, 2), 10.0).unwrap();
        let model = MixtureModel::new(vec![k], vec![1.0]).unwrap();
        let cfg = TrainerConfig::with_mode(ConstraintMode::ZeroSkew);
        let out = m_step(&data, &cache, &model, &cfg).unwrap();
        let m = data.to_matrix();
        let mean = m.row_mean().transpose();
        let mut scatter = DMatrix::zeros(2, 2);
        for r in data.rows() {
            scatter += (r - &mean) * (r - &mean).transpose();
        }
        scatter /= n as f64;
        assert!((&out.kernels[0].mu - &mean).amax() < 1e-14);
        assert!((&out.kernels[0].sigma - &scatter).amax() < 1e-13);
        assert_eq!(out.weights, vec![1.0]);
    }

    #[test]
    fn scalar_delta_is_a_ratio() {
        let ys = [1.0, 2.5, -0.5, 4.0];
        let zs = [1.0, 1.0, 1.0, 1.0];
        let e2s = [1.2, 0.8, 1.1, 0.6];
        let e3s = [0.9, 1.4, 0.2, 2.0];
        let e4s = [1.3, 2.5, 0.4, 4.5];
        let data = DataMatrix::from_vecs(&ys.iter().map(|&y| vec![y]).collect::<Vec<_>>()).unwrap();
        let cache = cache_with(
            DMatrix::from_row_slice(1, 4, &zs),
            DMatrix::from_row_slice(1, 4, &e2s),
            vec![e3s.iter().map(|&v| dvector![v]).collect()],
            vec![e4s.iter().map(|&v| dmatrix![v]).collect()],
        );
        let old_delta = 0.7;
        let k = KernelParams::new(dvector![0.3], dmatrix![1.0], dmatrix![old_delta], 8.0).unwrap();
        let model = MixtureModel::new(vec![k], vec![1.0]).unwrap();
        let out = m_step(&data, &cache, &model, &TrainerConfig::default()).unwrap();
        let sze2: f64 = (0..4).map(|j| zs[j] * e2s[j]).sum();
        let mu = ((0..4).map(|j| zs[j] * e2s[j] * ys[j]).sum::<f64>()
            - old_delta * (0..4).map(|j| zs[j] * e3s[j]).sum::<f64>())
            / sze2;
        let delta = (0..4).map(|j| zs[j] * (ys[j] - mu) * e3s[j]).sum::<f64>()
            / (0..4).map(|j| zs[j] * e4s[j]).sum::<f64>();
        assert!((out.kernels[0].mu[0] - mu).abs() < 1e-14);
        assert!((out.kernels[0].delta[(0, 0)] - delta).abs() < 1e-13);
    }

    #[test]
    fn empty_cluster_is_reported() {
        let data = DataMatrix::from_vecs(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let z = dmatrix![1.0, 1.0, 1.0; 0.0, 0.0, 0.0];
        let cache = cache_with(
            z,
            DMatrix::from_element(2, 3, 1.0),
            vec![vec![dvector![0.0]; 3]; 2],
            vec![vec![dmatrix![0.0]; 3]; 2],
        );
        let k = KernelParams::symmetric(dvector![0.0], dmatrix![1.0], 5.0).unwrap();
        let model = MixtureModel::new(vec![k.clone(), k], vec![0.5, 0.5]).unwrap();
        let cfg = TrainerConfig::with_mode(ConstraintMode::ZeroSkew);
        match m_step(&data, &cache, &model, &cfg) {
            Err(Error::DegenerateCluster { kernel: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_sum_to_one_and_lambda_stays_pd() {
        let k1 = KernelParams::new(dvector![0.0, 0.0], dmatrix![1.0, 0.2; 0.2, 1.0], dmatrix![0.8, 0.0; 0.3, 0.5], 6.0)
            .unwrap();
        let k2 = KernelParams::new(dvector![3.0, 1.0], dmatrix![0.7, 0.0; 0.0, 1.3], dmatrix![-0.4, 0.1; 0.0, 0.9], 9.0)
            .unwrap();
        let data = crate::kernel::sample_mst(&k1, 40, 1)
            .unwrap()
            .concat(&crate::kernel::sample_mst(&k2, 40, 2).unwrap())
            .unwrap();
        let model = MixtureModel::new(vec![k1, k2], vec![0.3, 0.7]).unwrap();
        for mode in [ConstraintMode::Full, ConstraintMode::DiagonalSkew] {
            let cache = e_step_with(&data, &model, mode, 4).unwrap();
            let cfg = TrainerConfig::with_mode(mode);
            let out = m_step(&data, &cache, &model, &cfg).unwrap();
            assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in &out.kernels {
                assert!(KernelGeometry::new(k).unwrap().lambda_is_pd());
                if mode == ConstraintMode::DiagonalSkew {
                    assert_eq!(k.delta[(0, 1)], 0.0);
                    assert_eq!(k.delta[(1, 0)], 0.0);
                }
            }
        }
    }
}
