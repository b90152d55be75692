//! k-means based starting values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::{symmetrize, Cholesky};
use crate::mixture::MixtureModel;
use crate::scalar::Real;
use crate::seed::derive_seed;

use super::config::{ConstraintMode, TrainerConfig};

pub const RESEED_ATTEMPTS: usize = 10;
pub const LLOYD_ITERATIONS: usize = 100;

/// Hard assignment produced by k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T: Real> {
    pub centroids: Vec<DVector<T>>,
    pub labels: Vec<usize>,
}

/// k-means++ seeding followed by Lloyd iterations. Deterministic given
/// `seed`.
pub fn kmeans<T: Real>(data: &DataMatrix<T>, g: usize, seed: u64) -> Result<Clustering<T>> {
    let n = data.n();
    if g < 1 || n < g {
        return Err(Error::Initialization(format!("cannot form {g} clusters from {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |a: &DVector<T>, b: &DVector<T>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).to_f64_lossy().powi(2)).sum()
    };
    let mut centroids = vec![data.row(rng.gen_range(0..n)).clone()];
    let mut nearest: Vec<f64> = data.rows().iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < g {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut k = n - 1;
            for (j, &d) in nearest.iter().enumerate() {
                if u < d {
                    k = j;
                    break;
                }
                u -= d;
            }
            k
        } else {
            rng.gen_range(0..n)
        };
        let c = data.row(pick).clone();
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(data.row(j), &c));
        }
        centroids.push(c);
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (j, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let d = dist2(data.row(j), c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&DVector<T>> = (0..n).filter(|&j| labels[j] == k).map(|j| data.row(j)).collect();
            if !members.is_empty() {
                let sum = members.iter().fold(DVector::zeros(data.p()), |acc, r| acc + *r);
                *c = sum / T::from_usize_lossy(members.len());
            }
        }
    }
    Ok(Clustering { centroids, labels })
}

/// Starting model: centroids as locations, within-cluster scatter as scales,
/// diagonal skewness signed by the per-feature cluster skewness with
/// magnitude `√(0.5 · scatter_kk)`, `ν = nu_init`, and cluster proportions
/// floored at `1/(10g)`.
pub fn initialize<T: Real>(data: &DataMatrix<T>, g: usize, config: &TrainerConfig<T>) -> Result<MixtureModel<T>> {
    config.validate(g)?;
    let (n, p) = (data.n(), data.p());
    if n < g * (p + 1) {
        return Err(Error::Initialization(format!(
            "{n} rows are too few for {g} kernels in {p} dimensions"
        )));
    }
    let nu = config.nu_init.resolve(g)?;
    let mut last = String::new();
    for attempt in 0..RESEED_ATTEMPTS {
        let clustering = kmeans(data, g, derive_seed(config.seed, &[0x1a17, attempt as u64]))?;
        let counts: Vec<usize> = (0..g).map(|k| clustering.labels.iter().filter(|&&l| l == k).count()).collect();
        if let Some(k) = counts.iter().position(|&c| c < p + 1) {
            last = format!("cluster {k} has {} points", counts[k]);
            continue;
        }
        return build_model(data, &clustering, &counts, &nu, config.constraint_mode);
    }
    Err(Error::Initialization(format!(
        "no usable clustering after {RESEED_ATTEMPTS} attempts ({last})"
    )))
}

fn build_model<T: Real>(
    data: &DataMatrix<T>,
    clustering: &Clustering<T>,
    counts: &[usize],
    nu: &[T],
    mode: ConstraintMode,
) -> Result<MixtureModel<T>> {
    let (g, p, n) = (counts.len(), data.p(), data.n());
    let mut kernels = Vec::with_capacity(g);
    for k in 0..g {
        let members: Vec<&DVector<T>> = (0..n).filter(|&j| clustering.labels[j] == k).map(|j| data.row(j)).collect();
        let m = T::from_usize_lossy(members.len());
        let mu = members.iter().fold(DVector::zeros(p), |acc, r| acc + *r) / m;
        let mut scatter = DMatrix::zeros(p, p);
        let mut third = DVector::zeros(p);
        for r in &members {
            let d = *r - &mu;
            scatter += &d * d.transpose();
            third += d.map(|v| v * v * v);
        }
        let mut sigma = symmetrize(&(scatter / m));
        let chol = Cholesky::with_jitter(&sigma, "initial scatter")?;
        for i in 0..p {
            sigma[(i, i)] += chol.jitter();
        }
        let kernel = match mode {
            ConstraintMode::Gaussian => KernelParams::gaussian(mu, sigma)?,
            ConstraintMode::ZeroSkew => KernelParams::symmetric(mu, sigma, nu[k])?,
            ConstraintMode::Full | ConstraintMode::DiagonalSkew => {
                let diag = DVector::from_fn(p, |i, _| {
                    let sign = if third[i] < T::zero() { -T::one() } else { T::one() };
                    sign * (T::lit(0.5) * sigma[(i, i)]).sqrt()
                });
                KernelParams::new(mu, sigma, DMatrix::from_diagonal(&diag), nu[k])?
            }
        };
        kernels.push(kernel);
    }
    let floor = T::one() / T::from_usize_lossy(10 * g);
    let raw: Vec<T> = counts.iter().map(|&c| (T::from_usize_lossy(c) / T::from_usize_lossy(n)).max(floor)).collect();
    let total = raw.iter().fold(T::zero(), |a, &b| a + b);
    let weights = raw.iter().map(|&w| w / total).collect();
    MixtureModel::new(kernels, weights)
}
