//! Randomly shifted rank-1 (Korobov) lattice rules with the baker's transform.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of Korobov multipliers tried when building a generating vector.
const KOROBOV_CANDIDATES: usize = 48;

type VectorCache = Mutex<HashMap<(usize, usize), Arc<Vec<u64>>>>;

fn cache() -> &'static VectorCache {
    static CACHE: OnceLock<VectorCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Korobov generating vector `(1, a, a², …) mod n` for an `n`-point rule in
/// `dim` dimensions. The multiplier minimizes the weighted `P₂` criterion over
/// a fixed, deterministic candidate list; results are memoized.
pub(crate) fn generating_vector(n: usize, dim: usize) -> Arc<Vec<u64>> {
    let key = (n, dim);
    if let Some(v) = cache().lock().expect("lattice cache poisoned").get(&key) {
        return Arc::clone(v);
    }
    let v = Arc::new(search_korobov(n, dim));
    cache()
        .lock()
        .expect("lattice cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&v));
    v
}

fn korobov(a: u64, n: u64, dim: usize) -> Vec<u64> {
    let mut z = Vec::with_capacity(dim);
    let mut cur = 1u64 % n;
    for _ in 0..dim {
        z.push(cur);
        cur = ((cur as u128 * a as u128) % n as u128) as u64;
    }
    z
}

fn search_korobov(n: usize, dim: usize) -> Vec<u64> {
    let n64 = n as u64;
    if dim <= 1 || n <= 2 {
        return vec![1; dim];
    }
    // odd multipliers spread by the golden ratio
    let golden = 0.618_033_988_749_894_9_f64;
    let mut best: Option<(f64, u64)> = None;
    for c in 1..=KOROBOV_CANDIDATES {
        let frac = (c as f64 * golden).fract();
        let mut a = ((frac * n as f64) as u64) | 1;
        if a >= n64 {
            a = n64 - 1;
        }
        if a <= 1 {
            continue;
        }
        let z = korobov(a, n64, dim);
        let score = p2_criterion(&z, n);
        if best.map_or(true, |(s, _)| score < s) {
            best = Some((score, a));
        }
    }
    let a = best.map(|(_, a)| a).unwrap_or(1);
    korobov(a, n64, dim)
}

/// Weighted `P₂` worst-case error proxy with product weights `γ_j = 1/j²`.
fn p2_criterion(z: &[u64], n: usize) -> f64 {
    let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut total = 0.0;
    for k in 0..n {
        let mut prod = 1.0;
        for (j, &zj) in z.iter().enumerate() {
            let x = ((k as u128 * zj as u128) % n as u128) as f64 / n as f64;
            let b2 = x * x - x + 1.0 / 6.0;
            let gamma = 1.0 / ((j + 1) as f64).powi(2);
            prod *= 1.0 + gamma * two_pi2 * b2;
        }
        total += prod;
    }
    total / n as f64 - 1.0
}

/// A randomized lattice rule: `shifts` independent uniform shifts of one
/// `n`-point rank-1 lattice in `dim` dimensions.
pub(crate) struct ShiftedLattice {
    n: usize,
    dim: usize,
    z: Arc<Vec<u64>>,
    shifts: Vec<Vec<f64>>,
}

impl ShiftedLattice {
    pub(crate) fn new(n: usize, dim: usize, shifts: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..shifts)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
            .collect();
        ShiftedLattice {
            n,
            dim,
            z: generating_vector(n, dim),
            shifts,
        }
    }

    #[cfg(test)]
    pub(crate) fn points_per_shift(&self) -> usize {
        self.n
    }

    #[cfg(test)]
    pub(crate) fn shift_count(&self) -> usize {
        self.shifts.len()
    }

    /// Writes point `k` of shift `m`, after the baker's (tent) transform, into `out`.
    pub(crate) fn point(&self, m: usize, k: usize, out: &mut [f64]) {
        let inv_n = 1.0 / self.n as f64;
        for j in 0..self.dim {
            let base = ((k as u128 * self.z[j] as u128) % self.n as u128) as f64 * inv_n;
            let x = (base + self.shifts[m][j]).fract();
            out[j] = (2.0 * x - 1.0).abs();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn korobov_vector_is_deterministic() {
        let a = generating_vector(1024, 3);
        let b = search_korobov(1024, 3);
        assert_eq!(*a, b);
        assert_eq!(a[0], 1);
        assert!(a.iter().all(|&z| z < 1024));
    }

    #[test]
    fn lattice_integrates_smooth_function() {
        // ∫ Π (1 + (x_j − 1/2)) over [0,1]^3 = 1, and ∫ x² = 1/3 per coordinate
        let lat = ShiftedLattice::new(4096, 3, 8, 7);
        let mut buf = [0.0; 3];
        let mut acc = 0.0;
        for m in 0..lat.shift_count() {
            for k in 0..lat.points_per_shift() {
                lat.point(m, k, &mut buf);
                acc += buf[0] * buf[0] + buf[1] * buf[2];
            }
        }
        let est = acc / (lat.shift_count() * lat.points_per_shift()) as f64;
        assert!((est - (1.0 / 3.0 + 0.25)).abs() < 1e-5, "{est}");
    }
}
