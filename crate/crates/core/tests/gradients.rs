//! Finite-difference verification of every analytic gradient, across
//! the full tuning-parameter grid.

use oneshot_dpd::model::{
    failure_probability, full_gradient_failure, Dataset, ParamVector, TestGroup,
};
use oneshot_dpd::objectives::{dpd_gradient, dpd_objective};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn central_difference(f: impl Fn(&ParamVector) -> f64, theta: &ParamVector) -> Vec<f64> {
    let flat = theta.flatten();
    (0..flat.len())
        .map(|k| {
            let h = 1e-6 * (1.0 + flat[k].abs());
            let mut plus = flat.clone();
            plus[k] += h;
            let mut minus = flat.clone();
            minus[k] -= h;
            (f(&ParamVector::from_flat(&plus).unwrap())
                - f(&ParamVector::from_flat(&minus).unwrap()))
                / (2.0 * h)
        })
        .collect()
}

fn random_dataset(rng: &mut StdRng) -> Dataset {
    let groups = (0..4)
        .map(|i| {
            let tau = 1.5 + 3.0 * i as f64 + rng.gen_range(0.0..1.0);
            let k = rng.gen_range(20..60);
            let n = rng.gen_range(1..k);
            TestGroup::new(tau, k, n as f64, &[1.0 + i as f64]).unwrap()
        })
        .collect();
    Dataset::new(groups).unwrap()
}

/// Draw parameters keeping every cell probability interior, where the
/// analytic gradient and the raw objective coincide (no clamping).
fn interior_theta(rng: &mut StdRng, data: &Dataset) -> ParamVector {
    loop {
        let theta = ParamVector::new(
            vec![rng.gen_range(0.0..2.5), rng.gen_range(-0.3..0.3)],
            vec![rng.gen_range(-0.6..0.6), rng.gen_range(-0.15..0.15)],
        )
        .unwrap();
        let interior = data.groups().iter().all(|g| {
            let f = failure_probability(&theta, g.covariates(), g.tau()).unwrap();
            (1e-5..=1.0 - 1e-5).contains(&f)
        });
        if interior {
            return theta;
        }
    }
}

#[test]
fn failure_gradient_matches_finite_differences_on_100_draws() {
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..100 {
        let data = random_dataset(&mut rng);
        let theta = interior_theta(&mut rng, &data);
        for g in data.groups() {
            let grad = full_gradient_failure(&theta, g.covariates(), g.log_tau()).unwrap();
            let fd = central_difference(
                |t| failure_probability(t, g.covariates(), g.tau()).unwrap(),
                &theta,
            );
            let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in grad.iter().zip(&fd) {
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs().max(1e-3 * scale).max(1e-9),
                    "dF mismatch: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn dpd_gradient_matches_finite_differences_on_200_draws() {
    let betas = [0.0, 0.2, 0.4, 0.6, 1.0];
    let mut rng = StdRng::seed_from_u64(777);
    for round in 0..200 {
        let beta = betas[round % betas.len()];
        let data = random_dataset(&mut rng);
        let theta = interior_theta(&mut rng, &data);
        let grad = dpd_gradient(&theta, &data, beta).unwrap();
        let fd = central_difference(|t| dpd_objective(t, &data, beta).unwrap(), &theta);
        let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in grad.iter().zip(&fd) {
            assert!(
                (a - b).abs() <= 1e-5 * b.abs().max(1e-3 * scale).max(1e-9),
                "beta {beta}: {a} vs {b} (scale {scale})"
            );
        }
    }
}
