//! Finite mixtures of skew-t kernels: density, log-likelihood,
//! responsibilities and hard labels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::exact_sum;
use crate::kernel::{sample_mst_with_rng, KernelGeometry, KernelParams, DEFAULT_DENSITY_SEED};
use crate::scalar::Real;
use crate::seed::derive_seed;

/// `g` kernels with mixing weights on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<T: Real> {
    pub kernels: Vec<KernelParams<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> MixtureModel<T> {
    pub fn new(kernels: Vec<KernelParams<T>>, weights: Vec<T>) -> Result<Self> {
        let m = MixtureModel { kernels, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn g(&self) -> usize {
        self.kernels.len()
    }

    pub fn p(&self) -> usize {
        self.kernels.first().map_or(0, |k| k.dim())
    }

    /// True when every kernel is Gaussian.
    pub fn is_gaussian(&self) -> bool {
        self.kernels.iter().all(|k| k.is_gaussian())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.kernels.len() != self.weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} kernels with {} weights",
                self.kernels.len(),
                self.weights.len()
            )));
        }
        let p = self.p();
        for (i, k) in self.kernels.iter().enumerate() {
            if k.dim() != p {
                return Err(Error::DimensionMismatch(format!(
                    "kernel {i} has dimension {}, expected {p}",
                    k.dim()
                )));
            }
            k.validate()?;
        }
        if self.weights.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::InvalidParameter("mixing weights must be positive".into()));
        }
        let sum = self.weights.iter().fold(T::zero(), |a, &w| a + w);
        let tol = if T::epsilon() < T::lit(1e-10) { 1e-12 } else { 1e-5 };
        if (sum - T::one()).abs() > T::lit(tol) {
            return Err(Error::InvalidParameter(format!("mixing weights sum to {sum}")));
        }
        Ok(())
    }

    pub fn geometries(&self) -> Result<Vec<KernelGeometry<T>>> {
        self.kernels.iter().map(KernelGeometry::new).collect()
    }

    pub(crate) fn check_data(&self, data: &DataMatrix<T>) -> Result<()> {
        if data.p() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, model has {}",
                data.p(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// `ln Σ exp(v)` with the usual max shift; `-∞` for an all `-∞` input.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let m = v.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if m.is_infinite() {
        return m;
    }
    let s = v.iter().fold(T::zero(), |a, &b| a + (b - m).exp());
    m + s.ln()
}

/// `g × n` matrix of `ln ωᵢ + ln fᵢ(yⱼ)`. Rows are evaluated in parallel;
/// every cell gets its own derived seed.
pub fn weighted_log_densities<T: Real>(
    data: &DataMatrix<T>,
    model: &MixtureModel<T>,
    seed: u64,
) -> Result<DMatrix<T>> {
    model.check_data(data)?;
    let geoms = model.geometries()?;
    let g = model.g();
    let cols: Vec<Vec<T>> = (0..data.n())
        .into_par_iter()
        .map(|j| {
            (0..g)
                .map(|i| {
                    let cell = derive_seed(seed, &[i as u64, j as u64]);
                    Ok(model.weights[i].ln() + geoms[i].ln_density(data.row(j), cell)?)
                })
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(g, data.n(), |i, j| cols[j][i]))
}

/// `ln Σᵢ ωᵢ fᵢ(y)`.
pub fn ln_mixture_pdf<T: Real>(y: &DVector<T>, model: &MixtureModel<T>) -> Result<T> {
    let data = DataMatrix::from_rows(vec![y.clone()])?;
    let w = weighted_log_densities(&data, model, DEFAULT_DENSITY_SEED)?;
    Ok(log_sum_exp(w.column(0).as_slice()))
}

pub fn mixture_pdf<T: Real>(y: &DVector<T>, model: &MixtureModel<T>) -> Result<T> {
    ln_mixture_pdf(y, model).map(|v| v.exp())
}

/// `Σⱼ ln Σᵢ ωᵢ fᵢ(yⱼ)`.
pub fn log_likelihood<T: Real>(data: &DataMatrix<T>, model: &MixtureModel<T>) -> Result<T> {
    log_likelihood_from(&weighted_log_densities(data, model, DEFAULT_DENSITY_SEED)?)
}

/// Log-likelihood from a weighted log-density matrix. The row terms are
/// summed with correct rounding, so the result is independent of row order.
pub fn log_likelihood_from<T: Real>(weighted: &DMatrix<T>) -> Result<T> {
    let mut terms = Vec::with_capacity(weighted.ncols());
    for (j, col) in weighted.column_iter().enumerate() {
        let v = log_sum_exp(col.as_slice());
        if !v.is_finite() {
            return Err(Error::ZeroDensity { row: j });
        }
        terms.push(v);
    }
    Ok(exact_sum(terms))
}

/// `g × n` posterior membership probabilities.
pub fn responsibilities<T: Real>(data: &DataMatrix<T>, model: &MixtureModel<T>) -> Result<DMatrix<T>> {
    responsibilities_from(&weighted_log_densities(data, model, DEFAULT_DENSITY_SEED)?)
}

pub fn responsibilities_from<T: Real>(weighted: &DMatrix<T>) -> Result<DMatrix<T>> {
    let mut z = weighted.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let norm = log_sum_exp(col.as_slice());
        if !norm.is_finite() {
            return Err(Error::ZeroDensity { row: j });
        }
        for v in col.iter_mut() {
            *v = (*v - norm).exp();
        }
    }
    Ok(z)
}

/// Per-row argmax of the responsibilities; ties go to the lower index.
pub fn classify<T: Real>(data: &DataMatrix<T>, model: &MixtureModel<T>) -> Result<Vec<usize>> {
    Ok(classify_from(&responsibilities(data, model)?))
}

pub fn classify_from<T: Real>(z: &DMatrix<T>) -> Vec<usize> {
    z.column_iter()
        .map(|col| {
            let mut best = 0;
            for i in 1..col.len() {
                if col[i] > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// `n` draws from the mixture with their component indices.
pub fn sample_mixture<T: Real>(model: &MixtureModel<T>, n: usize, seed: u64) -> Result<(DataMatrix<T>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = model
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w.to_f64_lossy();
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap_or(&1.0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen::<f64>() * total;
        let i = cumulative.iter().position(|&c| u < c).unwrap_or(model.g() - 1);
        let draw = sample_mst_with_rng(&model.kernels[i], 1, &mut rng)?;
        rows.push(draw.row(0).clone());
        labels.push(i);
    }
    Ok((DataMatrix::from_rows(rows)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{mst_pdf, sample_mst};
    use nalgebra::{dmatrix, dvector};

    fn skew_kernel(mu: DVector<f64>, nu: f64) -> KernelParams<f64> {
        KernelParams::new(
            mu,
            dmatrix![1.0, 0.2; 0.2, 0.7],
            dmatrix![0.8, 0.0; -0.3, 0.5],
            nu,
        )
        .unwrap()
    }

    #[test]
    fn single_component_and_duplicates() {
        let k = skew_kernel(dvector![0.0, 0.0], 5.0);
        let y = dvector![0.4, -0.2];
        let one = MixtureModel::new(vec![k.clone()], vec![1.0]).unwrap();
        let two = MixtureModel::new(vec![k.clone(), k.clone()], vec![0.5, 0.5]).unwrap();
        let direct = mst_pdf(&y, &k).unwrap();
        assert_eq!(mixture_pdf(&y, &one).unwrap(), direct);
        assert!((mixture_pdf(&y, &two).unwrap() - direct).abs() < 1e-15 * direct);
    }

    #[test]
    fn two_components_match_direct_sum() {
        let a = skew_kernel(dvector![0.0, 0.0], 5.0);
        let b = skew_kernel(dvector![2.0, -1.0], 9.0);
        let m = MixtureModel::new(vec![a.clone(), b.clone()], vec![0.3, 0.7]).unwrap();
        for y in [dvector![0.1, 0.1], dvector![1.5, -2.0], dvector![-3.0, 4.0]] {
            let want = 0.3 * mst_pdf(&y, &a).unwrap() + 0.7 * mst_pdf(&y, &b).unwrap();
            let got = mixture_pdf(&y, &m).unwrap();
            assert!(((got - want) / want).abs() < 1e-14);
        }
    }

    #[test]
    fn likelihood_is_additive() {
        let m = MixtureModel::new(
            vec![skew_kernel(dvector![0.0, 0.0], 5.0), skew_kernel(dvector![3.0, 1.0], 7.0)],
            vec![0.4, 0.6],
        )
        .unwrap();
        let data = sample_mst(&m.kernels[0], 30, 4).unwrap();
        let ll = log_likelihood(&data, &m).unwrap();
        let doubled = data.concat(&data).unwrap();
        assert_eq!(log_likelihood(&doubled, &m).unwrap(), 2.0 * ll);
        let first = data.select(&[0]);
        let single = log_likelihood(&first, &m).unwrap();
        let mut order: Vec<usize> = (0..30).rev().collect();
        order.swap(3, 17);
        assert_eq!(log_likelihood(&data.select(&order), &m).unwrap(), ll);
        assert_eq!(single, ln_mixture_pdf(first.row(0), &m).unwrap());
    }

    #[test]
    fn responsibilities_normalize_and_break_ties_low() {
        let k = KernelParams::symmetric(dvector![-1.0f64, 0.0], DMatrix::identity(2, 2), 6.0).unwrap();
        let mut mirror = k.clone();
        mirror.mu = dvector![1.0, 0.0];
        let m = MixtureModel::new(vec![k, mirror], vec![0.5, 0.5]).unwrap();
        let data = DataMatrix::from_vecs(&[vec![0.0, 2.0], vec![-2.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let z = responsibilities(&data, &m).unwrap();
        assert!((z[(0, 0)] - 0.5).abs() < 1e-10 && (z[(1, 0)] - 0.5).abs() < 1e-10);
        for col in z.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(classify_from(&z), vec![0, 0, 0]);
        let z = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.5, 0.8]);
        assert_eq!(classify_from(&z), vec![0, 1]);
    }

    #[test]
    fn responsibilities_are_shift_invariant() {
        let w = DMatrix::from_row_slice(3, 2, &[-1.0, -700.0, -2.0, -701.5, -0.5, -699.0]);
        let base = responsibilities_from(&w).unwrap();
        for shift in [-500.0, 500.0] {
            let moved = responsibilities_from(&w.add_scalar(shift)).unwrap();
            assert!((moved - &base).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_density_is_reported_with_row() {
        let w = DMatrix::from_row_slice(2, 3, &[0.0, f64::NEG_INFINITY, -1.0, 0.0, f64::NEG_INFINITY, -1.0]);
        assert!(matches!(log_likelihood_from(&w), Err(Error::ZeroDensity { row: 1 })));
        assert!(matches!(responsibilities_from(&w), Err(Error::ZeroDensity { row: 1 })));
    }

    #[test]
    fn weights_are_validated() {
        let k = skew_kernel(dvector![0.0, 0.0], 5.0);
        assert!(MixtureModel::new(vec![k.clone(), k.clone()], vec![0.5, 0.4]).is_err());
        assert!(MixtureModel::new(vec![k.clone(), k.clone()], vec![1.0, 0.0]).is_err());
        assert!(MixtureModel::new(vec![k], vec![]).is_err());
    }

    #[test]
    fn mixture_sampling_follows_weights() {
        let a = KernelParams::symmetric(dvector![0.0], dmatrix![1.0], 5.0).unwrap();
        let b = KernelParams::symmetric(dvector![10.0], dmatrix![1.0], 5.0).unwrap();
        let m = MixtureModel::new(vec![a, b], vec![0.2, 0.8]).unwrap();
        let (d, labels) = sample_mixture(&m, 2000, 3).unwrap();
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64 / 2000.0;
        assert!((ones - 0.8).abs() < 0.03);
        assert_eq!(sample_mixture(&m, 2000, 3).unwrap().0, d);
    }
}
