//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Moments of a left-truncated multivariate t estimated by rejection sampling,
/// with per-entry standard errors.
pub struct SampledMoments {
    pub mean: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub second: DMatrix<f64>,
    pub second_se: DMatrix<f64>,
    pub proposals: usize,
}

/// Draws `X = μ + L Z √(ν / χ²_ν)` and keeps draws with `X > a` until
/// `accepted` draws are collected.
pub fn truncated_t_by_rejection(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    a: &DVector<f64>,
    accepted: usize,
    seed: u64,
) -> SampledMoments {
    let p = mu.len();
    let l = sigma.clone().cholesky().expect("SPD scale").l();
    let chi = ChiSquared::new(nu).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sum = DVector::<f64>::zeros(p);
    let mut sum_sq = DVector::<f64>::zeros(p);
    let mut outer = DMatrix::<f64>::zeros(p, p);
    let mut outer_sq = DMatrix::<f64>::zeros(p, p);
    let mut z = DVector::<f64>::zeros(p);
    let mut kept = 0usize;
    let mut proposals = 0usize;
    while kept < accepted {
        proposals += 1;
        for k in 0..p {
            z[k] = rng.sample(StandardNormal);
        }
        let w: f64 = chi.sample(&mut rng);
        let x = mu + (&l * &z) * (nu / w).sqrt();
        if (0..p).any(|k| x[k] <= a[k]) {
            continue;
        }
        kept += 1;
        for i in 0..p {
            sum[i] += x[i];
            sum_sq[i] += x[i] * x[i];
            for j in 0..p {
                let v = x[i] * x[j];
                outer[(i, j)] += v;
                outer_sq[(i, j)] += v * v;
            }
        }
    }
    let n = kept as f64;
    let mean = &sum / n;
    let second = &outer / n;
    let mean_se = DVector::from_fn(p, |i, _| ((sum_sq[i] / n - mean[i] * mean[i]) / n).max(0.0).sqrt());
    let second_se = DMatrix::from_fn(p, p, |i, j| {
        ((outer_sq[(i, j)] / n - second[(i, j)].powi(2)) / n).max(0.0).sqrt()
    });
    SampledMoments {
        mean,
        mean_se,
        second,
        second_se,
        proposals,
    }
}

/// Random SPD matrix `A Aᵀ + p·0.3 I` with entries of `A` in (−1, 1).
pub fn random_spd<R: Rng>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * (0.3 * p as f64)
}

/// Root of a continuous function with a sign change on `[lo, hi]` by plain
/// bisection to interval width `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm <= 0.0) == (flo <= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ψ(x)` by the series `−γ + Σ_{k≥0} (1/(k+1) − 1/(k+x))` with an
/// Euler–Maclaurin tail after `terms` terms.
pub fn digamma_series(x: f64, terms: usize) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    let mut s = -EULER;
    for k in 0..terms {
        let k = k as f64;
        s += 1.0 / (k + 1.0) - 1.0 / (k + x);
    }
    // tail Σ_{k≥N} (1/(k+1) − 1/(k+x)) ≈ (x−1)/N asymptotically; refine with
    // the integral plus half-term correction
    let n = terms as f64;
    s += ((n + x - 0.5) / (n + 0.5)).ln();
    s
}
