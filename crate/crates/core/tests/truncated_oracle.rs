mod common;

use common::{random_spd, truncated_t_by_rejection};
use mstmix::truncated::{trunc_t_moments, TruncatedTSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn check(spec: &TruncatedTSpec<f64>, draws: usize, seed: u64) -> Result<(), String> {
    let got = trunc_t_moments(spec, seed).map_err(|e| e.to_string())?;
    let oracle = truncated_t_by_rejection(&spec.mu, &spec.sigma, spec.nu, &spec.a, draws, seed);
    let p = spec.mu.len();
    for i in 0..p {
        let z = (got.mean[i] - oracle.mean[i]) / oracle.mean_se[i];
        if z.abs() > 3.0 {
            return Err(format!("mean[{i}] {} vs {} (z = {z:.2})", got.mean[i], oracle.mean[i]));
        }
        for j in 0..p {
            let z = (got.second[(i, j)] - oracle.second[(i, j)]) / oracle.second_se[(i, j)];
            if z.abs() > 3.0 {
                return Err(format!(
                    "second[{i},{j}] {} vs {} (z = {z:.2})",
                    got.second[(i, j)],
                    oracle.second[(i, j)]
                ));
            }
        }
    }
    Ok(())
}

#[test]
fn shifted_scalar_truncation_matches_sampling() {
    let spec = TruncatedTSpec::new(
        DVector::from_element(1, -0.7),
        DMatrix::from_element(1, 1, 2.0),
        5.0,
        DVector::from_element(1, 0.0),
    )
    .unwrap();
    check(&spec, 400_000, 1).unwrap();
}

#[test]
fn correlated_pair_matches_sampling() {
    let spec = TruncatedTSpec::new(
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        5.0,
        DVector::zeros(2),
    )
    .unwrap();
    check(&spec, 400_000, 2).unwrap();
}

#[test]
fn randomized_specs_match_sampling() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for case in 0..6 {
        let p = 1 + case % 3;
        let nu = [3.0, 5.0, 10.0][case / 2 % 3];
        let sigma = random_spd(p, &mut rng);
        let mu = DVector::from_fn(p, |_, _| rng.gen_range(-0.5..1.0));
        let spec = TruncatedTSpec::new(mu, sigma, nu, DVector::zeros(p)).unwrap();
        if let Err(e) = check(&spec, 200_000, 100 + case as u64) {
            failures.push(format!("case {case} (p={p}, nu={nu}): {e}"));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
