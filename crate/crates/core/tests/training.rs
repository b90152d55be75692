mod common;

use mstmix::data::DataMatrix;
use mstmix::kernel::KernelParams;
use mstmix::mixture::{log_likelihood, sample_mixture, MixtureModel};
use mstmix::trainer::{fit, ConstraintMode, PenaltySpec, Termination, TrainerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const SLACK: f64 = 1e-3;

fn random_truth(seed: u64, g: usize) -> MixtureModel<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let kernels = (0..g)
        .map(|i| {
            let mu = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0) + 8.0 * i as f64);
            let sigma = common::random_spd(2, &mut rng);
            let delta = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.5..1.5));
            KernelParams::new(mu, sigma, delta, rng.gen_range(3.0..12.0)).unwrap()
        })
        .collect();
    MixtureModel::new(kernels, vec![1.0 / g as f64; g]).unwrap()
}

#[test]
fn randomized_fits_ascend() {
    let mut failures = Vec::new();
    for case in 0..20u64 {
        let g = 1 + (case % 2) as usize;
        let (data, _) = sample_mixture(&random_truth(case, g), 150 * g, case).unwrap();
        let mut cfg = TrainerConfig::with_mode(ConstraintMode::Full);
        cfg.seed = case;
        cfg.max_iter = 25;
        let out = fit(&data, g, &cfg).unwrap_or_else(|e| panic!("case {case}: {}", e.error));
        let initial = out.trace.initial_loglik.unwrap();
        if out.loglik() < initial {
            failures.push(format!("case {case}: final {} < initial {initial}", out.loglik()));
        }
        let mut prev = initial;
        for r in &out.trace.records {
            if prev - r.loglik > SLACK {
                failures.push(format!("case {case} iter {}: drop {:e}", r.iter, prev - r.loglik));
            }
            prev = r.loglik;
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn final_trace_loglik_matches_model() {
    let (data, _) = sample_mixture(&random_truth(3, 2), 200, 3).unwrap();
    let mut cfg = TrainerConfig::with_mode(ConstraintMode::DiagonalSkew);
    cfg.max_iter = 10;
    let out = fit(&data, 2, &cfg).unwrap();
    let direct = log_likelihood(&data, &out.model).unwrap();
    assert!((direct - out.loglik()).abs() <= 1e-9 * direct.abs());
}

#[test]
fn gaussian_mode_converges_quickly() {
    let (data, _) = sample_mixture(&random_truth(5, 2), 300, 5).unwrap();
    let out = fit(&data, 2, &TrainerConfig::with_mode(ConstraintMode::Gaussian)).unwrap();
    assert_eq!(out.trace.status, Termination::Converged);
    assert!(out.model.is_gaussian());
    assert!(out.trace.records.iter().all(|r| r.nu.is_none()));
}

#[test]
fn penalty_lowers_degrees_of_freedom() {
    let (data, _) = sample_mixture(&random_truth(9, 1), 400, 9).unwrap();
    let run = |beta: f64| {
        let mut cfg = TrainerConfig::with_mode(ConstraintMode::ZeroSkew);
        cfg.beta = PenaltySpec::uniform(beta);
        cfg.max_iter = 30;
        fit(&data, 1, &cfg).unwrap().model.kernels[0].nu
    };
    assert!(run(1e-2) < run(0.0));
}

#[test]
fn single_precision_fit() {
    let (data, _) = sample_mixture(&random_truth(11, 1), 200, 11).unwrap();
    let rows: Vec<Vec<f32>> = data.rows().iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
    let data32 = DataMatrix::<f32>::from_vecs(&rows).unwrap();
    let mut cfg = TrainerConfig::<f32>::with_mode(ConstraintMode::Full);
    cfg.max_iter = 8;
    let out = fit(&data32, 1, &cfg).unwrap_or_else(|e| panic!("{}", e.error));
    assert!(out.loglik().is_finite());
    assert!(out.model.kernels[0].nu > 2.0);
}
