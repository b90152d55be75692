//! Small dense linear-algebra helpers on top of `nalgebra` storage.
//!
//! Factorizations are written against [`Real`] so that every model type stays
//! generic over the scalar.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maximum number of jittered retries after a failed factorization.
pub const JITTER_RETRIES: usize = 3;
/// Relative size of the first diagonal jitter (times `trace / p`).
pub const JITTER_SCALE: f64 = 1e-9;

/// Lower Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Real> {
    l: DMatrix<T>,
    jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Plain factorization, `None` if `a` is not (numerically) positive definite.
    pub fn new(a: &DMatrix<T>) -> Option<Self> {
        factor_lower(a).map(|l| Cholesky { l, jitter: T::zero() })
    }

    /// Factorization with the bounded diagonal repair: on failure add
    /// `λ I` with `λ = 1e-9 · trace / p`, growing tenfold per retry, at most
    /// [`JITTER_RETRIES`] times.
    pub fn with_jitter(a: &DMatrix<T>, context: &str) -> Result<Self> {
        if let Some(chol) = Self::new(a) {
            return Ok(chol);
        }
        let p = a.nrows();
        let trace = (0..p).fold(T::zero(), |acc, i| acc + a[(i, i)]);
        if !(trace > T::zero()) || !trace.is_finite() {
            return Err(Error::IllConditionedScale {
                context: format!("{context}: trace {trace}"),
            });
        }
        let mut lambda = T::lit(JITTER_SCALE) * trace / T::from_usize_lossy(p);
        for _ in 0..JITTER_RETRIES {
            let mut shifted = a.clone();
            for i in 0..p {
                shifted[(i, i)] += lambda;
            }
            if let Some(l) = factor_lower(&shifted) {
                return Ok(Cholesky { l, jitter: lambda });
            }
            lambda *= T::lit(10.0);
        }
        Err(Error::IllConditionedScale {
            context: context.to_string(),
        })
    }

    pub fn l(&self) -> &DMatrix<T> {
        &self.l
    }

    /// Diagonal jitter that was needed (zero if none).
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).fold(T::zero(), |acc, i| acc + two * self.l[(i, i)].ln())
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DVector<T>) -> DVector<T> {
        let p = self.dim();
        let mut x = b.clone();
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &DVector<T>) -> DVector<T> {
        let p = self.dim();
        let mut x = b.clone();
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in (i + 1)..p {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }

    /// `rᵀ A⁻¹ r`.
    pub fn quad_form(&self, r: &DVector<T>) -> T {
        let z = self.solve_lower(r);
        z.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn inverse(&self) -> DMatrix<T> {
        self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }
}

fn factor_lower<T: Real>(a: &DMatrix<T>) -> Option<DMatrix<T>> {
    let p = a.nrows();
    if p == 0 || a.ncols() != p {
        return None;
    }
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Correctly rounded floating-point sum (Shewchuk partials). The result does
/// not depend on the order of the terms.
pub fn exact_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut partials: Vec<T> = Vec::new();
    let mut special = T::zero();
    for mut x in values {
        if !x.is_finite() {
            special += x;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if special != T::zero() || special.is_nan() {
        return special;
    }
    let mut n = partials.len();
    if n == 0 {
        return T::zero();
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = T::zero();
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != T::zero() {
            break;
        }
    }
    // round half to even across the remaining partials
    if n > 0 && ((lo < T::zero() && partials[n - 1] < T::zero()) || (lo > T::zero() && partials[n - 1] > T::zero())) {
        let y = lo + lo;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    let mut out = a.clone();
    for i in 0..a.nrows() {
        for j in 0..i {
            let v = half * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
pub fn asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn dot<T: Real>(a: &DVector<T>, b: &DVector<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn outer<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

/// Vector with the entries at `skip` removed (indices must be sorted ascending).
pub fn drop_entries<T: Real>(v: &DVector<T>, skip: &[usize]) -> DVector<T> {
    DVector::from_iterator(
        v.len() - skip.len(),
        v.iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, &x)| x),
    )
}

/// Matrix with rows and columns in `skip` removed.
pub fn drop_rows_cols<T: Real>(m: &DMatrix<T>, skip: &[usize]) -> DMatrix<T> {
    let keep: Vec<usize> = (0..m.nrows()).filter(|i| !skip.contains(i)).collect();
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])])
}

/// Columns `cols` of `m` with the rows in `cols` removed: `p - k` by `k`.
pub fn cross_block<T: Real>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    let keep: Vec<usize> = (0..m.nrows()).filter(|i| !cols.contains(i)).collect();
    DMatrix::from_fn(keep.len(), cols.len(), |i, j| m[(keep[i], cols[j])])
}

/// Smallest eigenvalue of a symmetric matrix (Jacobi sweeps; for tests and
/// diagnostics on small matrices).
pub fn min_eigenvalue<T: Real>(a: &DMatrix<T>) -> T {
    symmetric_eigenvalues(a)
        .into_iter()
        .fold(T::infinity(), |m, v| m.min(v))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues<T: Real>(a: &DMatrix<T>) -> Vec<T> {
    symmetric_eigen_decomposition(a).0
}

/// Moore-Penrose style inverse of a symmetric PSD matrix: eigenvalues below
/// `rel_tol · λ_max` are treated as zero.
pub fn pseudo_inverse_sym<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let n = a.nrows();
    let (vals, vecs) = symmetric_eigen_decomposition(a);
    let lmax = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= rel_tol * lmax || lam == T::zero() {
            continue;
        }
        let inv = T::one() / lam;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += inv * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    out
}

fn symmetric_eigen_decomposition<T: Real>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = a.nrows();
    let mut m = symmetrize(a);
    let mut v = DMatrix::identity(n, n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= T::epsilon() * T::epsilon() * T::lit(1e-4) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}
