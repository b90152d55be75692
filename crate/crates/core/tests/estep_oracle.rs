//! Skewed E-step against direct integration over the latent `(W, U)` in one
//! dimension: `W ~ Gamma(ν/2, ν/2)`, `U | W ~ N⁺(0, 1/W)`,
//! `Y | U, W ~ N(μ + δU, σ²/W)`.

use mstmix::kernel::{KernelGeometry, KernelParams};
use mstmix::special::ln_gamma;
use mstmix::trainer::{cell_expectations, ConstraintMode};
use nalgebra::{dmatrix, dvector};

struct Posterior {
    e1: f64,
    e2: f64,
    e3: f64,
    e4: f64,
}

fn simpson_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 })
        .collect()
}

fn posterior(y: f64, mu: f64, sigma2: f64, delta: f64, nu: f64) -> Posterior {
    let (ns, nt) = (1600, 1600);
    let (s_lo, s_hi) = (-12.0f64, 4.0f64);
    let (t_lo, t_hi) = (-14.0f64, 4.0f64);
    let (hs, ht) = ((s_hi - s_lo) / ns as f64, (t_hi - t_lo) / nt as f64);
    let (ws, wt) = (simpson_weights(ns), simpson_weights(nt));
    let ln_gamma_norm = 0.5 * nu * (0.5 * nu).ln() - ln_gamma(0.5 * nu).unwrap();
    let mut acc = [0.0f64; 5];
    for (a, &wa) in ws.iter().enumerate() {
        // w = e^s
        let s = s_lo + a as f64 * hs;
        let w = s.exp();
        let ln_pw = ln_gamma_norm + (0.5 * nu - 1.0) * s - 0.5 * nu * w + s;
        for (b, &wb) in wt.iter().enumerate() {
            // u = e^t
            let t = t_lo + b as f64 * ht;
            let u = t.exp();
            let ln_pu = (2.0 * w / std::f64::consts::PI).ln() * 0.5 - 0.5 * w * u * u + t;
            let r = y - mu - delta * u;
            let ln_py = 0.5 * (w / (std::f64::consts::TAU * sigma2)).ln() - 0.5 * w * r * r / sigma2;
            let dens = (ln_pw + ln_pu + ln_py).exp() * wa * wb;
            acc[0] += dens;
            acc[1] += dens * s;
            acc[2] += dens * w;
            acc[3] += dens * w * u;
            acc[4] += dens * w * u * u;
        }
    }
    Posterior {
        e1: acc[1] / acc[0],
        e2: acc[2] / acc[0],
        e3: acc[3] / acc[0],
        e4: acc[4] / acc[0],
    }
}

#[test]
fn skewed_cell_matches_latent_integration() {
    let cases = [
        (0.3, 0.0, 1.0, 1.2, 5.0),
        (-1.0, 0.5, 2.0, -0.8, 8.0),
        (2.5, 0.0, 1.0, 2.0, 4.0),
        (-0.7, 0.2, 0.5, 0.6, 12.0),
    ];
    for &(y, mu, s2, d, nu) in &cases {
        let k = KernelParams::<f64>::new(dvector![mu], dmatrix![s2], dmatrix![d], nu).unwrap();
        let geom = KernelGeometry::new(&k).unwrap();
        let c = cell_expectations(&geom, &dvector![y], ConstraintMode::Full, 7).unwrap();
        let o = posterior(y, mu, s2, d, nu);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs().max(1.0);
        assert!(close(c.e2, o.e2), "e2 {} vs {} at {y}", c.e2, o.e2);
        // e1 is the one-step-late approximation: close to the exact value,
        // far from the variant with the digamma sign flipped
        assert!((c.e1 - o.e1).abs() < 0.02, "e1 {} vs {} at {y}", c.e1, o.e1);
        let psi = mstmix::special::digamma(0.5 * (nu + 1.0)).unwrap();
        assert!((c.e1 - 2.0 * psi - o.e1).abs() > 1.0);
        assert!(close(c.e3[0], o.e3), "e3 {} vs {} at {y}", c.e3[0], o.e3);
        assert!(close(c.e4[(0, 0)], o.e4), "e4 {} vs {} at {y}", c.e4[(0, 0)], o.e4);
    }
}
