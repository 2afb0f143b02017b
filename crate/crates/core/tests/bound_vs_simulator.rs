//! Seed-averaged SGD residuals on the isotropic noisy quadratic against the
//! exact expected recursion and the theoretical bound.

use sgdtime::sgd_lab::{trajectory, InitPolicy, Problem, SgdConfig};
use sgdtime::theory::{bound_params_from_primitives, residual_bound};

const DIM: usize = 10;

fn mean_and_se(runs: &[Vec<f64>], k: usize) -> (f64, f64) {
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r[k]).sum::<f64>() / n;
    let var = runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn runs(eta: f64, l: f64, phi: f64, m: usize, seeds: u64, steps: u64) -> Vec<Vec<f64>> {
    let p = Problem::<f64>::noisy_quadratic(DIM, l, phi).unwrap();
    (0..seeds)
        .map(|s| {
            let cfg =
                SgdConfig::new(eta, 1e-9).with_minibatch(m).with_seed(s).with_init(InitPolicy::Sphere { radius: 1.0 });
            trajectory(&p, &cfg, steps).unwrap()
        })
        .collect()
}

#[test]
fn mean_residual_follows_the_expected_recursion() {
    // E[D_{k+1}] = (1 - eta L)^2 E[D_k] + eta^2 L d phi^2 / (2 M)
    let (eta, l, phi) = (0.1, 1.0, 0.2);
    for m in [1usize, 8] {
        let rs = runs(eta, l, phi, m, 400, 60);
        let mut expected = 0.5 * l;
        for k in 0..=60 {
            let (mean, se) = mean_and_se(&rs, k);
            assert!((mean - expected).abs() <= 4.0 * se + 1e-12, "M={m} k={k}: {mean} vs {expected} (se {se})");
            expected = (1.0 - eta * l).powi(2) * expected + eta * eta * l * DIM as f64 * phi * phi / (2.0 * m as f64);
        }
    }
}

#[test]
fn mean_residual_stays_under_the_bound() {
    let (eta, l, phi_sim) = (0.1, 1.0, 0.3);
    for m in [1usize, 2, 32] {
        let phi = (DIM as f64 * phi_sim * phi_sim / m as f64).sqrt();
        let bp = bound_params_from_primitives(eta, l, phi, 0.5, 1.0).unwrap();
        let rs = runs(eta, l, phi_sim, m, 200, 300);
        for k in 0..=300 {
            let (mean, se) = mean_and_se(&rs, k);
            let b = residual_bound(k as u64, &bp).unwrap();
            assert!(mean <= b + 3.0 * se, "M={m} k={k}: {mean} > {b} + 3*{se}");
        }
    }
}
