//! Gamma-family special functions and the univariate Student-t distribution.

use crate::error::{Error, Result};
use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain("ln_gamma", format!("x = {x}")));
    }
    Ok(lgamma(x))
}

/// Unchecked `ln Γ(x)`; caller guarantees `x > 0`.
pub(crate) fn lgamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x) Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - lgamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain("digamma", format!("x = {x}")));
    }
    Ok(psi(x))
}

/// Unchecked digamma: upward recurrence to `x ≥ 6`, then the asymptotic series.
pub(crate) fn psi<T: Real>(mut x: T) -> T {
    let mut shift = T::zero();
    let six = T::lit(6.0);
    while x < six {
        shift -= x.recip();
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k x^2k), k = 1..7
    let series = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2
                        * (T::lit(1.0 / 252.0)
                            - inv2
                                * (T::lit(1.0 / 240.0)
                                    - inv2
                                        * (T::lit(1.0 / 132.0)
                                            - inv2
                                                * (T::lit(691.0 / 32_760.0)
                                                    - inv2 * T::lit(1.0 / 12.0)))))));
    shift + x.ln() - T::lit(0.5) * inv - series
}

/// `ln B(a, b)`.
pub(crate) fn ln_beta<T: Real>(a: T, b: T) -> T {
    lgamma(a) + lgamma(b) - lgamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg<T: Real>(a: T, b: T, x: T) -> Result<T> {
    if !(a > T::zero()) || !(b > T::zero()) {
        return Err(Error::domain("beta_reg", format!("a = {a}, b = {b}")));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain("beta_reg", format!("x = {x}")));
    }
    Ok(ln_beta_reg_split(a, b, x, T::one() - x).0.exp())
}

/// Returns `(ln I_x(a,b), ln (1 - I_x(a,b)))` given `x` and `y = 1 - x`
/// computed independently by the caller (avoids cancellation in `1 - x`).
pub(crate) fn ln_beta_reg_split<T: Real>(a: T, b: T, x: T, y: T) -> (T, T) {
    ln_beta_reg_split_with(a, b, x, y, ln_beta(a, b))
}

/// [`ln_beta_reg_split`] with `ln B(a, b)` supplied.
fn ln_beta_reg_split_with<T: Real>(a: T, b: T, x: T, y: T, ln_b: T) -> (T, T) {
    if x <= T::zero() {
        return (T::neg_infinity(), T::zero());
    }
    if y <= T::zero() {
        return (T::zero(), T::neg_infinity());
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_b;
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        let ln_i = ln_front + beta_cf(a, b, x).ln() - a.ln();
        (ln_i, ln_1m_exp(ln_i))
    } else {
        let ln_c = ln_front + beta_cf(b, a, y).ln() - b.ln();
        (ln_1m_exp(ln_c), ln_c)
    }
}

/// `ln(1 - e^v)` for `v ≤ 0`.
pub(crate) fn ln_1m_exp<T: Real>(v: T) -> T {
    if v > T::lit(-std::f64::consts::LN_2) {
        (-v.exp_m1()).ln()
    } else {
        (-v.exp()).ln_1p()
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..=20_000usize {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h *= del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Standard univariate Student-t distribution with `nu` degrees of freedom,
/// with the normalizing constant cached.
#[derive(Debug, Clone, Copy)]
pub struct StudentT<T: Real> {
    nu: T,
    ln_norm: T,
    ln_beta: T,
}

impl<T: Real> StudentT<T> {
    pub fn new(nu: T) -> Result<Self> {
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(Error::domain("StudentT", format!("nu = {nu}")));
        }
        Ok(Self::new_unchecked(nu))
    }

    pub(crate) fn new_unchecked(nu: T) -> Self {
        let half = T::lit(0.5);
        let ln_norm =
            lgamma(half * (nu + T::one())) - lgamma(half * nu) - half * (nu * T::PI()).ln();
        let ln_beta = ln_beta(half * nu, half);
        StudentT {
            nu,
            ln_norm,
            ln_beta,
        }
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn ln_pdf(&self, x: T) -> T {
        let half = T::lit(0.5);
        self.ln_norm - half * (self.nu + T::one()) * (x * x / self.nu).ln_1p()
    }

    pub fn pdf(&self, x: T) -> T {
        self.ln_pdf(x).exp()
    }

    /// `(ln P(T ≤ x), ln P(T > x))`.
    pub fn ln_cdf_pair(&self, x: T) -> (T, T) {
        let ln_half = T::lit(-std::f64::consts::LN_2);
        if x == T::zero() {
            return (ln_half, ln_half);
        }
        if x.is_infinite() {
            return if x > T::zero() {
                (T::zero(), T::neg_infinity())
            } else {
                (T::neg_infinity(), T::zero())
            };
        }
        let half = T::lit(0.5);
        let x2 = x * x;
        let denom = self.nu + x2;
        // P(|T| > |x|) = I_{ν/(ν+x²)}(ν/2, 1/2)
        let (ln_two_tail, ln_center) =
            ln_beta_reg_split_with(half * self.nu, half, self.nu / denom, x2 / denom, self.ln_beta);
        let ln_tail = ln_half + ln_two_tail;
        // P(T ≤ |x|) = 1/2 + 1/2 · P(|T| ≤ |x|)
        let ln_body = ln_half + (T::one() + ln_center.exp()).ln();
        if x < T::zero() {
            (ln_tail, ln_body)
        } else {
            (ln_body, ln_tail)
        }
    }

    pub fn cdf(&self, x: T) -> T {
        self.ln_cdf_pair(x).0.exp()
    }

    pub fn ln_cdf(&self, x: T) -> T {
        self.ln_cdf_pair(x).0
    }

    /// Inverse CDF by safeguarded Newton iteration on the log tail probability.
    pub fn quantile(&self, u: T) -> T {
        let half = T::lit(0.5);
        if !(u > T::zero()) {
            return T::neg_infinity();
        }
        if !(u < T::one()) {
            return T::infinity();
        }
        if u == half {
            return T::zero();
        }
        let (q, sign) = if u < half {
            (u, -T::one())
        } else {
            (T::one() - u, T::one())
        };
        sign * self.upper_quantile(q)
    }

    /// Solves `P(T > x) = q` for `x ≥ 0`, `0 < q < 1/2`.
    fn upper_quantile(&self, q: T) -> T {
        let nu = self.nu;
        let ln_q = q.ln();
        let z = -normal_quantile_approx(q.to_f64_lossy());
        let z = T::lit(z);
        let z3 = z * z * z;
        let cf = z
            + (z3 + z) / (T::lit(4.0) * nu)
            + (T::lit(5.0) * z3 * z * z + T::lit(16.0) * z3 + T::lit(3.0) * z)
                / (T::lit(96.0) * nu * nu);
        // tail asymptote P(T > x) ≈ e^{ln_norm} ν^{(ν+1)/2} x^{-ν} / ν
        let ln_k = self.ln_norm + T::lit(0.5) * (nu - T::one()) * nu.ln();
        let asym = ((ln_k - ln_q) / nu).exp();
        let mut x = if q < T::lit(1e-3) { cf.max(asym) } else { cf };
        if !(x > T::zero()) || !x.is_finite() {
            x = T::one();
        }

        let mut lo = T::zero();
        let mut hi = T::infinity();
        let tol = T::lit(4.0) * T::epsilon();
        for _ in 0..200 {
            let (_, ln_tail) = self.ln_cdf_pair(x);
            let g = ln_tail - ln_q;
            if g == T::zero() {
                break;
            }
            if g > T::zero() {
                lo = x;
            } else {
                hi = x;
            }
            // d/dx ln tail = -pdf / tail
            let slope = -(self.ln_pdf(x) - ln_tail).exp();
            let mut next = x - g / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = if hi.is_finite() {
                    half_point(lo, hi)
                } else {
                    T::lit(2.0) * x.max(T::one())
                };
            }
            let step = (next - x).abs();
            x = next;
            if step <= tol * (T::one() + x) {
                break;
            }
        }
        x
    }
}

fn half_point<T: Real>(a: T, b: T) -> T {
    a + T::lit(0.5) * (b - a)
}

/// Acklam's rational approximation of the standard normal quantile (relative
/// error about 1e-9); used only to seed iterative solvers.
pub(crate) fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    let lower = 0.024_25;
    if p < lower {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lower {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
