//! Divergence objectives and their analytic gradients.
//!
//! The estimator minimizes a device-count weighted sum of per-condition
//! density power divergences between the empirical failure/survival
//! proportions and the model probabilities. At tuning parameter beta = 0
//! the objective reduces (up to a data-only constant) to 1/K times the
//! negative log-likelihood, so a single code path serves the whole beta
//! grid.

use crate::error::{Error, Result};
use crate::model::{delta_vector, failure_probability, Dataset, ParamVector};
use crate::numerics::{std_normal_cdf, std_normal_pdf};

/// Probabilities are clamped to this range inside x^(beta-1) powers so
/// that saturated cells (empirical 0 or 1) stay finite for beta < 1.
pub const PROB_CLAMP: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Empirical and model probability pair for one test condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbPair {
    /// (n/K, 1 - n/K)
    pub empirical: (f64, f64),
    /// (F, R) under the model.
    pub model: (f64, f64),
}

impl ProbPair {
    pub fn new(theta: &ParamVector, data: &Dataset, group: usize) -> Result<Self> {
        let g = data
            .groups()
            .get(group)
            .ok_or_else(|| Error::Domain(format!("group index {group} out of range")))?;
        let p1 = g.empirical_failure();
        let f = failure_probability(theta, g.covariates(), g.tau())?;
        Ok(ProbPair { empirical: (p1, 1.0 - p1), model: (f, 1.0 - f) })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Domain(format!("tuning parameter beta must be >= 0, got {beta}")));
    }
    Ok(())
}

/// Negative log-likelihood -sum_i [n_i log F_i + (K_i - n_i) log R_i].
///
/// Terms with a zero count contribute nothing (0 log 0 = 0). A model
/// probability that underflows to zero against a nonzero count makes the
/// result +infinity rather than an error, so optimizer line searches can
/// step back from the boundary.
pub fn neg_log_likelihood(theta: &ParamVector, data: &Dataset) -> Result<f64> {
    let mut nll = 0.0;
    for g in data.groups() {
        let f = failure_probability(theta, g.covariates(), g.tau())?;
        let r = 1.0 - f;
        let n = g.failures();
        let s = g.devices() as f64 - n;
        if n > 0.0 {
            if f <= 0.0 {
                return Ok(f64::INFINITY);
            }
            nll -= n * f.ln();
        }
        if s > 0.0 {
            if r <= 0.0 {
                return Ok(f64::INFINITY);
            }
            nll -= s * r.ln();
        }
    }
    Ok(nll)
}

/// Weighted Kullback-Leibler divergence sum_i (K_i/K) d_KL(p_i, pi_i).
pub fn kl_objective(theta: &ParamVector, data: &Dataset) -> Result<f64> {
    let total = data.total_devices();
    let mut kl = 0.0;
    for (i, g) in data.groups().iter().enumerate() {
        let pair = ProbPair::new(theta, data, i)?;
        let weight = g.devices() as f64 / total;
        for (p_hat, p_model) in [
            (pair.empirical.0, pair.model.0),
            (pair.empirical.1, pair.model.1),
        ] {
            if p_hat > 0.0 {
                if p_model <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                kl += weight * p_hat * (p_hat / p_model).ln();
            }
        }
    }
    Ok(kl)
}

/// Weighted density power divergence objective.
///
/// For beta > 0 this is sum_i (K_i/K) d*_beta(p_i, pi_i) with
/// d*_beta = (F^(b+1) + R^(b+1)) - ((b+1)/b)(p1 F^b + p2 R^b); the
/// data-only 1/b (p1^(b+1) + p2^(b+1)) term of the full divergence is
/// dropped as it does not move the minimizer. For beta = 0 it returns
/// (1/K) times the negative log-likelihood, the same minimizer as the
/// KL objective.
pub fn dpd_objective(theta: &ParamVector, data: &Dataset, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let total = data.total_devices();
    if beta == 0.0 {
        return Ok(neg_log_likelihood(theta, data)? / total);
    }
    let mut obj = 0.0;
    for (i, g) in data.groups().iter().enumerate() {
        let pair = ProbPair::new(theta, data, i)?;
        let (p1, p2) = pair.empirical;
        let (f, r) = pair.model;
        let weight = g.devices() as f64 / total;
        let power_sum = f.powf(beta + 1.0) + r.powf(beta + 1.0);
        let cross = p1 * f.powf(beta) + p2 * r.powf(beta);
        obj += weight * (power_sum - (beta + 1.0) / beta * cross);
    }
    Ok(obj)
}

/// Exact gradient of [`dpd_objective`] with respect to the flattened
/// parameter vector.
///
/// Per condition the chain rule gives
/// (beta+1)/K (K_i F_i - n_i)(F_i^(beta-1) + R_i^(beta-1)) dF_i/dtheta,
/// with the probabilities clamped inside the negative powers. At beta = 0
/// this is the score of the likelihood scaled by 1/K.
pub fn dpd_gradient(theta: &ParamVector, data: &Dataset, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let total = data.total_devices();
    let p = theta.a().len();
    let mut grad = vec![0.0; 2 * p];
    for g in data.groups() {
        let x = g.covariates();
        let mu: f64 = theta.a().iter().zip(x).map(|(v, xj)| v * xj).sum();
        let log_sigma: f64 = theta.b().iter().zip(x).map(|(v, xj)| v * xj).sum();
        if log_sigma > 700.0 {
            return Err(Error::Domain(format!("scale link overflow: exp({log_sigma})")));
        }
        let sigma = log_sigma.exp();
        let z = (g.log_tau() - mu) / sigma;
        let f = std_normal_cdf(z)?;
        let fc = clamp_prob(f);
        let rc = clamp_prob(1.0 - f);
        let pdf = std_normal_pdf(z)?;
        let residual = g.devices() as f64 * f - g.failures();
        let weight = (beta + 1.0) / total
            * residual
            * (fc.powf(beta - 1.0) + rc.powf(beta - 1.0));
        // dF/da_j = -(pdf/sigma) x_j, dF/db_j = -z pdf x_j.
        let ga = -weight * pdf / sigma;
        let gb = -weight * z * pdf;
        for (j, &xj) in x.iter().enumerate() {
            grad[j] += ga * xj;
            grad[p + j] += gb * xj;
        }
    }
    Ok(grad)
}

/// The estimating-equation vector in its published display form,
/// sum_i delta_i (K_i F_i - n_i)(F_i^(beta-1) + R_i^(beta-1)) x_i,
/// assembled from [`delta_vector`] as an independent code path.
///
/// Its root coincides with the minimizer; relative to [`dpd_gradient`]
/// it differs by the factor -(beta+1)/K.
pub fn estimating_equation(theta: &ParamVector, data: &Dataset, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let p = theta.a().len();
    let mut eq = vec![0.0; 2 * p];
    for g in data.groups() {
        let x = g.covariates();
        let (d_mu, d_sigma) = delta_vector(theta, x, g.log_tau())?;
        let f = failure_probability(theta, x, g.tau())?;
        let fc = clamp_prob(f);
        let rc = clamp_prob(1.0 - f);
        let factor = (g.devices() as f64 * f - g.failures())
            * (fc.powf(beta - 1.0) + rc.powf(beta - 1.0));
        for (j, &xj) in x.iter().enumerate() {
            eq[j] += factor * d_mu * xj;
            eq[p + j] += factor * d_sigma * xj;
        }
    }
    Ok(eq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TestGroup;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn single_group_data(devices: u32, failures: f64) -> Dataset {
        let g = TestGroup::new(1.0, devices, failures, &[]).unwrap();
        Dataset::new(vec![g]).unwrap()
    }

    /// theta with a single intercept pair chosen so that F(tau=1) = f.
    fn theta_with_failure_probability(f: f64) -> ParamVector {
        // F = Phi((0 - mu)/1) = f  =>  mu = -qnorm(f)
        let mu = -crate::numerics::std_normal_quantile(f).unwrap();
        ParamVector::new(vec![mu], vec![0.0]).unwrap()
    }

    #[test]
    fn nll_closed_form_balanced_group() {
        let data = single_group_data(10, 5.0);
        let theta = theta_with_failure_probability(0.5);
        let nll = neg_log_likelihood(&theta, &data).unwrap();
        assert!((nll - (-10.0 * 0.5_f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn nll_one_sided_group() {
        let data = single_group_data(10, 0.0);
        let theta = theta_with_failure_probability(0.3);
        let nll = neg_log_likelihood(&theta, &data).unwrap();
        assert!((nll - (-10.0 * 0.7_f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn nll_underflow_returns_infinity() {
        // F underflows to 0 at z ~ -45 while a failure was observed.
        let theta = ParamVector::new(vec![45.0], vec![0.0]).unwrap();
        let data = single_group_data(10, 1.0);
        assert_eq!(neg_log_likelihood(&theta, &data).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_zero_iff_probabilities_match() {
        let data = single_group_data(10, 4.0);
        let theta = theta_with_failure_probability(0.4);
        assert!(kl_objective(&theta, &data).unwrap().abs() < 1e-12);
        let off = theta_with_failure_probability(0.5);
        assert!(kl_objective(&off, &data).unwrap() > 1e-3);
    }

    #[test]
    fn kl_single_group_value() {
        let data = single_group_data(10, 3.0);
        let theta = theta_with_failure_probability(0.5);
        let kl = kl_objective(&theta, &data).unwrap();
        assert!((kl - 0.082282879).abs() < 1e-8, "kl = {kl}");
    }

    #[test]
    fn kl_equals_scaled_likelihood_plus_constant() {
        let data = Dataset::new(vec![
            TestGroup::new(2.0, 12, 5.0, &[30.0]).unwrap(),
            TestGroup::new(5.0, 8, 3.0, &[40.0]).unwrap(),
        ])
        .unwrap();
        let total = data.total_devices();
        let c: f64 = data
            .groups()
            .iter()
            .map(|g| {
                let p1 = g.empirical_failure();
                let w = g.devices() as f64 / total;
                let mut term = 0.0;
                if p1 > 0.0 {
                    term += p1 * p1.ln();
                }
                if p1 < 1.0 {
                    term += (1.0 - p1) * (1.0 - p1).ln();
                }
                w * term
            })
            .sum();
        let theta = ParamVector::new(vec![1.0, 0.01], vec![0.1, -0.01]).unwrap();
        let kl = kl_objective(&theta, &data).unwrap();
        let nll = neg_log_likelihood(&theta, &data).unwrap();
        assert!((kl - (c + nll / total)).abs() < 1e-12);
    }

    #[test]
    fn dpd_beta_one_saturated_value() {
        let data = single_group_data(10, 5.0);
        let theta = theta_with_failure_probability(0.5);
        let v = dpd_objective(&theta, &data, 1.0).unwrap();
        assert!((v - (-0.5)).abs() < 1e-12, "dpd = {v}");
    }

    #[test]
    fn dpd_rejects_negative_beta() {
        let data = single_group_data(10, 5.0);
        let theta = theta_with_failure_probability(0.5);
        assert!(dpd_objective(&theta, &data, -0.1).is_err());
        assert!(dpd_gradient(&theta, &data, -0.1).is_err());
    }

    #[test]
    fn dpd_approaches_kl_branch_as_beta_vanishes() {
        // dpd(beta) - dpd(0) = -1/beta + O(beta); the divergent part is
        // theta-free because the weights K_i/K sum to one.
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let data = Dataset::new(vec![
                TestGroup::new(2.0, 15, rng.gen_range(1..14) as f64, &[1.2]).unwrap(),
                TestGroup::new(4.0, 25, rng.gen_range(1..24) as f64, &[2.1]).unwrap(),
            ])
            .unwrap();
            let theta = ParamVector::new(
                vec![rng.gen_range(-1.0..1.5), rng.gen_range(-0.4..0.4)],
                vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2)],
            )
            .unwrap();
            let beta = 1e-6;
            let diff = dpd_objective(&theta, &data, beta).unwrap()
                - dpd_objective(&theta, &data, 0.0).unwrap();
            assert!((diff + 1.0 / beta).abs() < 1e-5, "limit residual {}", diff + 1.0 / beta);
        }
    }

    #[test]
    fn saturated_fit_has_zero_gradient() {
        let data = single_group_data(20, 7.0);
        let theta = theta_with_failure_probability(0.35);
        for &beta in &[0.0, 0.2, 0.5, 1.0] {
            let g = dpd_gradient(&theta, &data, beta).unwrap();
            for v in g {
                assert!(v.abs() < 1e-9, "gradient component {v} at beta {beta}");
            }
        }
    }

    fn fd_dpd_gradient(theta: &ParamVector, data: &Dataset, beta: f64) -> Vec<f64> {
        let flat = theta.flatten();
        (0..flat.len())
            .map(|k| {
                let h = 1e-6 * (1.0 + flat[k].abs());
                let mut plus = flat.clone();
                plus[k] += h;
                let mut minus = flat.clone();
                minus[k] -= h;
                let fp =
                    dpd_objective(&ParamVector::from_flat(&plus).unwrap(), data, beta).unwrap();
                let fm =
                    dpd_objective(&ParamVector::from_flat(&minus).unwrap(), data, beta).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Draw until every cell probability is comfortably interior: in
    /// the clamped tail the analytic gradient intentionally differs
    /// from the raw objective, so the finite-difference oracle only
    /// applies away from it.
    fn interior_theta(rng: &mut StdRng, data: &Dataset) -> ParamVector {
        loop {
            let theta = ParamVector::new(
                vec![rng.gen_range(0.0..2.0), rng.gen_range(-0.4..0.4)],
                vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2)],
            )
            .unwrap();
            let ok = data.groups().iter().all(|g| {
                let f = failure_probability(&theta, g.covariates(), g.tau()).unwrap();
                (1e-5..=1.0 - 1e-5).contains(&f)
            });
            if ok {
                return theta;
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        for &beta in &[0.0, 0.2, 0.4, 0.6, 1.0] {
            for _ in 0..10 {
                let data = Dataset::new(vec![
                    TestGroup::new(2.0, 30, rng.gen_range(2..28) as f64, &[1.0]).unwrap(),
                    TestGroup::new(6.0, 30, rng.gen_range(2..28) as f64, &[2.0]).unwrap(),
                    TestGroup::new(12.0, 30, rng.gen_range(2..28) as f64, &[3.0]).unwrap(),
                ])
                .unwrap();
                let theta = interior_theta(&mut rng, &data);
                let grad = dpd_gradient(&theta, &data, beta).unwrap();
                let fd = fd_dpd_gradient(&theta, &data, beta);
                let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                for (g, f) in grad.iter().zip(&fd) {
                    let tol = 1e-5 * f.abs().max(1e-3 * scale).max(1e-9);
                    assert!(
                        (g - f).abs() <= tol,
                        "beta {beta}: analytic {g} vs fd {f} (tol {tol})"
                    );
                }
            }
        }
    }

    #[test]
    fn estimating_equation_is_scaled_gradient() {
        // Two independent assembly paths: K * dpd_gradient must equal
        // -(beta+1) times the display-form estimating equation.
        let data = Dataset::new(vec![
            TestGroup::new(2.0, 12, 5.0, &[30.0]).unwrap(),
            TestGroup::new(5.0, 18, 12.0, &[40.0]).unwrap(),
            TestGroup::new(9.0, 10, 2.0, &[50.0]).unwrap(),
        ])
        .unwrap();
        let theta = ParamVector::new(vec![2.0, -0.02], vec![-0.1, 0.004]).unwrap();
        let total = data.total_devices();
        for &beta in &[0.0, 0.3, 0.7] {
            let grad = dpd_gradient(&theta, &data, beta).unwrap();
            let eq = estimating_equation(&theta, &data, beta).unwrap();
            for (g, e) in grad.iter().zip(&eq) {
                assert!(
                    (total * g + (beta + 1.0) * e).abs() < 1e-10 * (1.0 + e.abs()),
                    "paths disagree: K*grad {} vs eq {e} at beta {beta}",
                    total * g
                );
            }
        }
    }

    #[test]
    fn beta_zero_gradient_is_scaled_score() {
        // At beta = 0 the per-group weight reduces to the MLE score
        // factor (K_i F - n)(F^-1 + R^-1).
        let data = single_group_data(10, 3.0);
        let theta = theta_with_failure_probability(0.45);
        let grad = dpd_gradient(&theta, &data, 0.0).unwrap();
        let f = 0.45;
        let (d_mu, d_sigma) = delta_vector(&theta, &[1.0], 0.0).unwrap();
        let w = (10.0 * f - 3.0) * (1.0 / f + 1.0 / (1.0 - f)) / 10.0;
        assert!((grad[0] + w * d_mu).abs() < 1e-10);
        assert!((grad[1] + w * d_sigma).abs() < 1e-10);
    }

    #[test]
    fn prob_pair_entries_sum_to_one() {
        let data = single_group_data(16, 9.0);
        let theta = theta_with_failure_probability(0.3);
        let pair = ProbPair::new(&theta, &data, 0).unwrap();
        assert!((pair.empirical.0 + pair.empirical.1 - 1.0).abs() < 1e-12);
        assert!((pair.model.0 + pair.model.1 - 1.0).abs() < 1e-12);
        assert!(ProbPair::new(&theta, &data, 1).is_err());
    }
}
