//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;
/// Cap on the number of interval bisections per call.
const MAX_SPLITS: usize = 4096;

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol · |I|)`.
pub(crate) fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let (whole, err) = gk15(&mut f, a, b);
    if err <= abs_tol.max(rel_tol * whole.abs()) {
        return whole;
    }
    let tol = abs_tol.max(rel_tol * whole.abs());
    let mut budget = MAX_SPLITS;
    recurse(&mut f, a, b, whole, tol, 0, &mut budget)
}

fn recurse<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> f64 {
    if *budget == 0 {
        return whole;
    }
    *budget -= 1;
    let mid = 0.5 * (a + b);
    let (left, el) = gk15(f, a, mid);
    let (right, er) = gk15(f, mid, b);
    let sum = left + right;
    if el + er <= tol || depth >= MAX_DEPTH || (sum - whole).abs() <= 1e-15 * sum.abs() {
        return sum;
    }
    let half = 0.5 * tol;
    let l = if el <= half {
        left
    } else {
        recurse(f, a, mid, left, half, depth + 1, budget)
    };
    let r = if er <= half {
        right
    } else {
        recurse(f, mid, b, right, half, depth + 1, budget)
    };
    l + r
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut values = [(0.0, 0.0); 7];
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let (lo, hi) = (f(c - dx), f(c + dx));
        values[j] = (lo, hi);
        kronrod += WGK[j] * (lo + hi);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    // QUADPACK error scaling
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((values[j].0 - mean).abs() + (values[j].1 - mean).abs());
    }
    let asc = asc * h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let resabs = h.abs() * (WGK[7] * fc.abs() + (0..7).map(|j| WGK[j] * (values[j].0.abs() + values[j].1.abs())).sum::<f64>());
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (kronrod * h, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14, 0.0);
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-13);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn noisy_integrand_terminates() {
        let mut state = 1u64;
        let v = integrate(
            |x| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                x + (state >> 11) as f64 * 1e-12 / (1u64 << 53) as f64
            },
            0.0,
            1.0,
            0.0,
            1e-16,
        );
        assert!((v - 0.5).abs() < 1e-9);
    }
}
