//! Lower-orthant probabilities of the multivariate Student-t distribution.
//!
//! `P(X ≤ upper)` for `X ~ t_{p,ν}(μ, Σ)`. One dimension uses the regularized
//! incomplete beta function; two dimensions reduce to a one-dimensional
//! integral evaluated by adaptive Gauss–Kronrod, and three dimensions nest
//! that integral inside one more; four or more dimensions use
//! the separation-of-variables transform onto the unit cube with a randomly
//! shifted rank-1 lattice rule, refined until the shift-to-shift error
//! estimate meets the tolerance. All integration runs in double precision.

mod lattice;
pub(crate) mod quadrature;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::Real;
use crate::special::StudentT;

/// Denominators below this are treated as underflow in ratios.
pub const RATIO_UNDERFLOW: f64 = 1e-300;

/// Relative tolerance of the two-dimensional quadrature.
const BIVARIATE_TOL: f64 = 1e-11;

/// Confidence multiplier applied to the shift standard error.
const ERROR_FACTOR: f64 = 3.0;

/// Integration controls for the lattice rule (dimension four and up).
#[derive(Debug, Clone, PartialEq)]
pub struct CdfOptions {
    /// Absolute error target; `None` selects 1e-6 for `p ≤ 3`, 1e-5 beyond.
    pub abs_tol: Option<f64>,
    /// Relative error target used when two probabilities are estimated together.
    pub rel_tol: f64,
    /// Number of independent random shifts.
    pub shifts: usize,
    /// Starting lattice size per shift.
    pub min_points: usize,
    /// Cap on total integrand evaluations (all shifts).
    pub max_points: usize,
}

impl Default for CdfOptions {
    fn default() -> Self {
        CdfOptions {
            abs_tol: None,
            rel_tol: 1e-5,
            shifts: 8,
            min_points: 128,
            max_points: 1 << 20,
        }
    }
}

impl CdfOptions {
    pub fn abs_tol_for(&self, p: usize) -> f64 {
        self.abs_tol
            .unwrap_or(if p <= 3 { 1e-6 } else { 1e-5 })
    }
}

/// A probability with its integration error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfEstimate<T: Real> {
    pub value: T,
    /// Natural log of `value`; finite even when `value` underflows in the
    /// closed-form one-dimensional case.
    pub ln_value: T,
    /// Error estimate (zero for the closed form).
    pub error: T,
    /// Integrand evaluations spent.
    pub evaluations: usize,
    /// False if the lattice hit the point cap before meeting tolerance.
    pub converged: bool,
}

/// `P(X ≤ upper)` for `X ~ t_{p,ν}(mu, sigma)` with default options.
pub fn mvt_cdf<T: Real>(
    upper: &DVector<T>,
    mu: &DVector<T>,
    sigma: &DMatrix<T>,
    nu: T,
    seed: u64,
) -> Result<T> {
    Ok(mvt_cdf_with(upper, mu, sigma, nu, seed, &CdfOptions::default())?.value)
}

/// [`mvt_cdf`] returning the full estimate and honoring `opts`.
pub fn mvt_cdf_with<T: Real>(
    upper: &DVector<T>,
    mu: &DVector<T>,
    sigma: &DMatrix<T>,
    nu: T,
    seed: u64,
    opts: &CdfOptions,
) -> Result<CdfEstimate<T>> {
    let problem = OrthantProblem::new(upper, mu, sigma, nu)?;
    let tol = opts.abs_tol_for(problem.dim());
    let est = match problem.reduce() {
        Reduced::Zero => Raw::exact_ln(f64::NEG_INFINITY),
        Reduced::One => Raw::exact_ln(0.0),
        Reduced::Uni(b, nu) => Raw::exact_ln(StudentT::new_unchecked(nu).ln_cdf(b)),
        Reduced::Bi(b, rho, nu) => Raw::exact(bivariate(b, rho, nu, BIVARIATE_TOL)),
        Reduced::Tri(b, r, nu) => Raw::exact(trivariate(b, &r, nu)),
        Reduced::Multi(sov) => {
            let mut out = lattice_integrate(&[&sov], seed, opts, |est| est[0].1 <= tol);
            out.pop().expect("one integrand")
        }
    };
    Ok(est.into_estimate())
}

/// Estimates two orthant probabilities sharing the scale matrix with common
/// random numbers (the same lattice and shifts). Used for ratios.
pub fn mvt_cdf_pair_with<T: Real>(
    first: (&DVector<T>, T),
    second: (&DVector<T>, T),
    scale: &DMatrix<T>,
    seed: u64,
    opts: &CdfOptions,
) -> Result<(CdfEstimate<T>, CdfEstimate<T>)> {
    let p = scale.nrows();
    let zero = DVector::zeros(p);
    let a = OrthantProblem::new(first.0, &zero, scale, first.1)?.reduce();
    let b = OrthantProblem::new(second.0, &zero, scale, second.1)?.reduce();
    let abs_tol = opts.abs_tol_for(p);
    let rel_tol = opts.rel_tol;
    let done = |est: &[(f64, f64)]| {
        est.iter()
            .all(|&(v, e)| e <= abs_tol.min(rel_tol * v.abs()).max(1e-15))
    };
    let (ra, rb) = match (a, b) {
        (Reduced::Multi(sa), Reduced::Multi(sb)) => {
            let mut out = lattice_integrate(&[&sa, &sb], seed, opts, done);
            let rb = out.pop().expect("two integrands");
            let ra = out.pop().expect("two integrands");
            (ra, rb)
        }
        (a, b) => (
            a.evaluate_alone(seed, opts, abs_tol),
            b.evaluate_alone(seed, opts, abs_tol),
        ),
    };
    Ok((ra.into_estimate(), rb.into_estimate()))
}

/// `T_{p,num_nu}(num_point | 0, Λ) / T_{p,den_nu}(den_point | 0, Λ)` with
/// common random numbers for numerator and denominator.
pub fn mvt_cdf_ratio<T: Real>(
    num_point: &DVector<T>,
    num_nu: T,
    den_point: &DVector<T>,
    den_nu: T,
    lambda: &DMatrix<T>,
    seed: u64,
) -> Result<T> {
    let (num, den) = mvt_cdf_pair_with(
        (num_point, num_nu),
        (den_point, den_nu),
        lambda,
        seed,
        &CdfOptions::default(),
    )?;
    ratio_of(&num, &den)
}

/// Ratio of two estimates, computed in log space.
pub fn ratio_of<T: Real>(num: &CdfEstimate<T>, den: &CdfEstimate<T>) -> Result<T> {
    let den_ln = den.ln_value.to_f64_lossy();
    if !(den_ln > RATIO_UNDERFLOW.ln()) {
        return Err(Error::Underflow {
            value: den.value.to_f64_lossy(),
            context: "denominator orthant probability; observation is an extreme outlier for this kernel"
                .into(),
        });
    }
    Ok((num.ln_value - den.ln_value).exp())
}

/// Result of one integration in f64.
struct Raw {
    value: f64,
    ln_value: f64,
    error: f64,
    evaluations: usize,
    converged: bool,
}

impl Raw {
    fn exact(value: f64) -> Self {
        let value = value.clamp(0.0, 1.0);
        Raw {
            value,
            ln_value: value.ln(),
            error: 0.0,
            evaluations: 0,
            converged: true,
        }
    }

    fn exact_ln(ln_value: f64) -> Self {
        let ln_value = ln_value.min(0.0);
        Raw {
            value: ln_value.exp(),
            ln_value,
            error: 0.0,
            evaluations: 0,
            converged: true,
        }
    }

    fn into_estimate<T: Real>(self) -> CdfEstimate<T> {
        CdfEstimate {
            value: T::lit(self.value),
            ln_value: T::lit(self.ln_value),
            error: T::lit(self.error),
            evaluations: self.evaluations,
            converged: self.converged,
        }
    }
}

/// Standardized orthant problem: bounds `b` in correlation units.
struct OrthantProblem {
    b: Vec<f64>,
    corr: DMatrix<f64>,
    nu: f64,
}

enum Reduced {
    /// Some bound is −∞.
    Zero,
    /// All bounds are +∞.
    One,
    Uni(f64, f64),
    Bi([f64; 2], f64, f64),
    Tri([f64; 3], DMatrix<f64>, f64),
    Multi(Sov),
}

impl OrthantProblem {
    fn new<T: Real>(
        upper: &DVector<T>,
        mu: &DVector<T>,
        sigma: &DMatrix<T>,
        nu: T,
    ) -> Result<Self> {
        let p = sigma.nrows();
        if p == 0 || sigma.ncols() != p || upper.len() != p || mu.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "mvt_cdf: upper {}, mu {}, sigma {}x{}",
                upper.len(),
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let nu = nu.to_f64_lossy();
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("mvt_cdf: nu = {nu}")));
        }
        let s = sigma.map(|v| v.to_f64_lossy());
        let chol = Cholesky::with_jitter(&s, "mvt_cdf scale")?;
        let jitter = chol.jitter();
        let sd: Vec<f64> = (0..p).map(|i| (s[(i, i)] + jitter).sqrt()).collect();
        let corr = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                s[(i, j)] / (sd[i] * sd[j])
            }
        });
        let b = (0..p)
            .map(|i| (upper[i].to_f64_lossy() - mu[i].to_f64_lossy()) / sd[i])
            .collect::<Vec<_>>();
        if b.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("mvt_cdf: NaN bound".into()));
        }
        Ok(OrthantProblem { b, corr, nu })
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn reduce(self) -> Reduced {
        if self.b.iter().any(|&v| v == f64::NEG_INFINITY) {
            return Reduced::Zero;
        }
        // +∞ bounds marginalize out
        let keep: Vec<usize> = (0..self.b.len()).filter(|&i| self.b[i].is_finite()).collect();
        match keep.len() {
            0 => Reduced::One,
            1 => Reduced::Uni(self.b[keep[0]], self.nu),
            2 => Reduced::Bi(
                [self.b[keep[0]], self.b[keep[1]]],
                self.corr[(keep[0], keep[1])],
                self.nu,
            ),
            3 => Reduced::Tri(
                [self.b[keep[0]], self.b[keep[1]], self.b[keep[2]]],
                DMatrix::from_fn(3, 3, |i, j| self.corr[(keep[i], keep[j])]),
                self.nu,
            ),
            _ => {
                let b: Vec<f64> = keep.iter().map(|&i| self.b[i]).collect();
                let corr = DMatrix::from_fn(keep.len(), keep.len(), |i, j| {
                    self.corr[(keep[i], keep[j])]
                });
                Reduced::Multi(Sov::new(b, &corr, self.nu))
            }
        }
    }
}

impl Reduced {
    fn evaluate_alone(self, seed: u64, opts: &CdfOptions, tol: f64) -> Raw {
        match self {
            Reduced::Zero => Raw::exact_ln(f64::NEG_INFINITY),
            Reduced::One => Raw::exact_ln(0.0),
            Reduced::Uni(b, nu) => Raw::exact_ln(StudentT::new_unchecked(nu).ln_cdf(b)),
            Reduced::Bi(b, rho, nu) => Raw::exact(bivariate(b, rho, nu, BIVARIATE_TOL)),
            Reduced::Tri(b, r, nu) => Raw::exact(trivariate(b, &r, nu)),
            Reduced::Multi(sov) => lattice_integrate(&[&sov], seed, opts, |e| e[0].1 <= tol)
                .pop()
                .expect("one integrand"),
        }
    }
}

/// Bivariate standardized t orthant probability from the correlation
/// derivative `∂P/∂r = (2π√(1−r²))⁻¹ (1 + q(r)/ν)^{−ν/2}`, integrated up from
/// `r = −1` (where `P = max(0, T(h) + T(k) − 1)`) with `r = sin θ`.
fn bivariate(b: [f64; 2], rho: f64, nu: f64, rel_tol: f64) -> f64 {
    let (h, k) = (b[0], b[1]);
    let t = StudentT::new_unchecked(nu);
    if rho >= 1.0 {
        return t.cdf(h.min(k));
    }
    let (lo, hi) = if h <= k { (h, k) } else { (k, h) };
    // T(lo) − S(hi), each from its accurate side
    let floor = (t.cdf(lo) - t.ln_cdf_pair(hi).1.exp()).max(0.0);
    if rho <= -1.0 {
        return floor;
    }
    // θ = 2φ − π/2 turns 1 ± sin θ into 2cos²φ, 2sin²φ and keeps the
    // quadratic form free of cancellation.
    let (sum2, diff2) = (0.25 * (h + k) * (h + k), 0.25 * (h - k) * (h - k));
    let integrand = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let (s2, c2) = (s * s, c * c);
        if s2 <= 0.0 || c2 <= 0.0 {
            return 0.0;
        }
        let q = sum2 / s2 + diff2 / c2;
        (-0.5 * nu * (q / nu).ln_1p()).exp()
    };
    let span = quadrature::integrate(integrand, 0.0, 0.5 * (-rho).acos(), 0.0, rel_tol) / std::f64::consts::PI;
    (floor + span).clamp(0.0, 1.0)
}

/// Conditional-integral form of [`bivariate`]:
/// `∫_{-∞}^{b₁} t_ν(y) T_{ν+1}((b₂ − ρy)/√(1−ρ²) · √((ν+1)/(ν+y²))) dy`.
#[cfg(test)]
fn bivariate_conditional(b: [f64; 2], rho: f64, nu: f64, abs_tol: f64) -> f64 {
    // integrate over the more restrictive coordinate
    let (b1, b2) = if b[0] <= b[1] { (b[0], b[1]) } else { (b[1], b[0]) };
    let outer = StudentT::new_unchecked(nu);
    let inner = StudentT::new_unchecked(nu + 1.0);
    let s = (1.0 - rho * rho).max(1e-300).sqrt();
    let integrand = |y: f64| {
        let arg = (b2 - rho * y) / s * ((nu + 1.0) / (nu + y * y)).sqrt();
        outer.pdf(y) * inner.cdf(arg)
    };
    half_line_integral(integrand, b1, abs_tol, 1e-12)
}

/// `∫_{-∞}^{upper} f`, splitting at zero and mapping the tail onto `(0, 1]`.
fn half_line_integral(integrand: impl Fn(f64) -> f64, upper: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let b1 = upper;
    let split = b1.min(0.0);
    let scale = b1.abs().max(1.0);
    // (-∞, split] through y = split − scale (1 − u) / u
    let tail = quadrature::integrate(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let y = split - scale * (1.0 - u) / u;
            integrand(y) * scale / (u * u)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    );
    let body = if b1 > 0.0 {
        quadrature::integrate(integrand, 0.0, b1, abs_tol, rel_tol)
    } else {
        0.0
    };
    (tail + body).clamp(0.0, 1.0)
}

/// Trivariate orthant probability: integrate the most restrictive coordinate
/// against the conditional bivariate t with `ν + 1` degrees of freedom.
fn trivariate(b: [f64; 3], corr: &DMatrix<f64>, nu: f64) -> f64 {
    let first = (0..3)
        .min_by(|&i, &j| b[i].partial_cmp(&b[j]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let rest: Vec<usize> = (0..3).filter(|&i| i != first).collect();
    let r: Vec<f64> = rest.iter().map(|&i| corr[(i, first)]).collect();
    let sd: Vec<f64> = r.iter().map(|ri| (1.0 - ri * ri).max(1e-300).sqrt()).collect();
    let rho = (corr[(rest[0], rest[1])] - r[0] * r[1]) / (sd[0] * sd[1]);
    let rho = rho.clamp(-1.0, 1.0);
    let outer = StudentT::new_unchecked(nu);
    let integrand = |y: f64| {
        let k = ((nu + 1.0) / (nu + y * y)).sqrt();
        let u = [(b[rest[0]] - r[0] * y) / sd[0] * k, (b[rest[1]] - r[1] * y) / sd[1] * k];
        outer.pdf(y) * bivariate(u, rho, nu + 1.0, 1e-11)
    };
    half_line_integral(integrand, b[first], 0.0, 1e-10)
}

/// Separation-of-variables integrand for dimension ≥ 3 with the variables
/// reordered so the most restrictive conditional bounds come first.
struct Sov {
    b: Vec<f64>,
    l: DMatrix<f64>,
    nu: f64,
    /// `dists[k]` is the standard t with `ν + k` degrees of freedom.
    dists: Vec<StudentT<f64>>,
    first: f64,
}

impl Sov {
    fn new(b: Vec<f64>, corr: &DMatrix<f64>, nu: f64) -> Self {
        let p = b.len();
        let mut b = b;
        let mut r = corr.clone();
        let mut l = DMatrix::<f64>::zeros(p, p);
        let mut y = vec![0.0; p];
        let rank_dist = StudentT::new_unchecked(nu.max(2.0));
        let rank_nu = nu.max(2.0);
        for k in 0..p {
            let mut best = (f64::INFINITY, k, 1.0, 0.0);
            for i in k..p {
                let mut s2 = r[(i, i)];
                let mut shift = 0.0;
                for m in 0..k {
                    s2 -= l[(i, m)] * l[(i, m)];
                    shift += l[(i, m)] * y[m];
                }
                let s = s2.max(1e-300).sqrt();
                let a = (b[i] - shift) / s;
                let prob = rank_dist.cdf(a);
                if prob < best.0 {
                    best = (prob, i, s, a);
                }
            }
            let (prob, piv, _, _) = best;
            if piv != k {
                b.swap(k, piv);
                r.swap_rows(k, piv);
                r.swap_columns(k, piv);
                l.swap_rows(k, piv);
            }
            let mut s2 = r[(k, k)];
            for m in 0..k {
                s2 -= l[(k, m)] * l[(k, m)];
            }
            let lkk = s2.max(1e-300).sqrt();
            l[(k, k)] = lkk;
            for i in (k + 1)..p {
                let mut v = r[(i, k)];
                for m in 0..k {
                    v -= l[(i, m)] * l[(k, m)];
                }
                l[(i, k)] = v / lkk;
            }
            // conditional mean of the truncated coordinate, for later ranks
            let mut shift = 0.0;
            for m in 0..k {
                shift += l[(k, m)] * y[m];
            }
            let a = (b[k] - shift) / lkk;
            y[k] = if prob > 1e-300 {
                -(rank_nu + a * a) / (rank_nu - 1.0) * rank_dist.pdf(a) / prob
            } else {
                a
            };
        }
        let dists = (0..p).map(|k| StudentT::new_unchecked(nu + k as f64)).collect::<Vec<_>>();
        let first = dists[0].cdf(b[0] / l[(0, 0)]);
        Sov {
            b,
            l,
            nu,
            dists,
            first,
        }
    }

    fn dim(&self) -> usize {
        self.b.len() - 1
    }

    /// Integrand value at the unit-cube point `w` (length `p − 1`).
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let p = self.b.len();
        let mut e = self.first;
        let mut f = e;
        let mut ss = 0.0;
        for k in 1..p {
            if e <= 0.0 {
                return 0.0;
            }
            let dof = self.nu + (k - 1) as f64;
            let u = (w[k - 1] * e).max(f64::MIN_POSITIVE);
            let yk = self.dists[k - 1].quantile(u) * ((self.nu + ss) / dof).sqrt();
            y[k - 1] = yk;
            ss += yk * yk;
            let mut shift = 0.0;
            for m in 0..k {
                shift += self.l[(k, m)] * y[m];
            }
            let arg = (self.b[k] - shift) / self.l[(k, k)] * ((self.nu + k as f64) / (self.nu + ss)).sqrt();
            e = self.dists[k].cdf(arg);
            f *= e;
        }
        f
    }
}

/// Runs the randomized lattice on all integrands together, doubling the
/// lattice until `done` accepts the `(estimate, error)` list or the point cap.
fn lattice_integrate(
    integrands: &[&Sov],
    seed: u64,
    opts: &CdfOptions,
    done: impl Fn(&[(f64, f64)]) -> bool,
) -> Vec<Raw> {
    let dim = integrands[0].dim();
    let shifts = opts.shifts.max(2);
    let mut n = opts.min_points.max(16).next_power_of_two();
    let mut y = vec![0.0; dim + 1];
    let mut w = vec![0.0; dim];
    let mut spent = 0usize;
    loop {
        let lat = lattice::ShiftedLattice::new(n, dim, shifts, seed);
        let mut means = vec![vec![0.0; shifts]; integrands.len()];
        for m in 0..shifts {
            let mut sums = vec![0.0; integrands.len()];
            for k in 0..n {
                lat.point(m, k, &mut w);
                for (s, integrand) in sums.iter_mut().zip(integrands) {
                    *s += integrand.eval(&w, &mut y);
                }
            }
            for (j, s) in sums.into_iter().enumerate() {
                means[j][m] = s / n as f64;
            }
        }
        spent += n * shifts;
        let est: Vec<(f64, f64)> = means
            .iter()
            .map(|ms| {
                let mean = ms.iter().sum::<f64>() / shifts as f64;
                let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / ((shifts - 1) * shifts) as f64;
                (mean, ERROR_FACTOR * var.sqrt())
            })
            .collect();
        let ok = done(&est);
        if ok || 2 * n * shifts > opts.max_points {
            return est
                .into_iter()
                .map(|(value, error)| {
                    let value = value.clamp(0.0, 1.0);
                    Raw {
                        value,
                        ln_value: value.ln(),
                        error,
                        evaluations: spent * integrands.len(),
                        converged: ok,
                    }
                })
                .collect();
        }
        n *= 2;
    }
}
