//! Influence-function diagnostics.
//!
//! First-order influence functions of the weighted minimum DPD
//! estimator with respect to a single contaminated observation or to one
//! contaminated observation per group, the h1/h2 factor curves that
//! summarize their boundedness, and the second-order influence of the
//! Wald-type test functional.
//!
//! Unlike the fitting path, nothing here clamps the F^(beta-1) powers:
//! the whole point of these diagnostics is to expose the divergence of
//! the beta = 0 case.

use crate::error::{Error, Result};
use crate::estimation::sigma_beta;
use crate::inference::WaldSpec;
use crate::model::{delta_vector, link, Dataset, ParamVector};
use crate::numerics::{invert_spd, std_normal_cdf, std_normal_pdf};

/// An influence vector together with the pseudo-inverse flag of the
/// J_beta solve.
#[derive(Debug, Clone)]
pub struct Influence {
    pub values: Vec<f64>,
    pub near_singular: bool,
}

impl Influence {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

fn group_term(
    theta: &ParamVector,
    data: &Dataset,
    group: usize,
    outcome: bool,
    beta: f64,
) -> Result<Vec<f64>> {
    let g = data
        .groups()
        .get(group)
        .ok_or_else(|| Error::Domain(format!("group index {group} out of range")))?;
    let x = g.covariates();
    let (d_mu, d_sigma) = delta_vector(theta, x, g.log_tau())?;
    let lv = link(theta, x)?;
    let z = (g.log_tau() - lv.mu) / lv.sigma;
    // Evaluate both tails directly so the negative powers keep their
    // relative precision far out.
    let f = std_normal_cdf(z)?;
    let r = std_normal_cdf(-z)?;
    let weight = g.devices() as f64 / data.total_devices();
    let y = if outcome { 1.0 } else { 0.0 };
    let factor = weight * (f.powf(beta - 1.0) + r.powf(beta - 1.0)) * (f - y);
    let p = x.len();
    let mut v = Vec::with_capacity(2 * p);
    for &xj in x {
        v.push(factor * d_mu * xj);
    }
    for &xj in x {
        v.push(factor * d_sigma * xj);
    }
    Ok(v)
}

fn solve_j_beta(theta: &ParamVector, data: &Dataset, beta: f64, rhs: &[f64]) -> Result<Influence> {
    let j = crate::estimation::j_beta_matrix(theta, data, beta)?;
    let inv = invert_spd(&j)?;
    Ok(Influence { values: inv.matrix.matvec(rhs), near_singular: inv.near_singular })
}

/// Influence of one contaminated observation in the given group, with
/// the contamination realized as the binary outcome `failed` at the
/// inspection time.
pub fn if_single(
    theta0: &ParamVector,
    data: &Dataset,
    group: usize,
    failed: bool,
    beta: f64,
) -> Result<Influence> {
    check_beta(beta)?;
    let term = group_term(theta0, data, group, failed, beta)?;
    solve_j_beta(theta0, data, beta, &term)
}

/// Influence of one contaminated observation per group; `failed[i]` is
/// the outcome contaminating group i.
///
/// The influence is linear in each outcome residual (F_i - y_i), so
/// contamination of several observations per group follows by scaling:
/// a contaminating count c_i out of K_i behaves as the convex mix of
/// the two binary influences with weight c_i/K_i.
pub fn if_all(
    theta0: &ParamVector,
    data: &Dataset,
    failed: &[bool],
    beta: f64,
) -> Result<Influence> {
    check_beta(beta)?;
    if failed.len() != data.groups().len() {
        return Err(Error::Domain(format!(
            "outcome vector length {} does not match group count {}",
            failed.len(),
            data.groups().len()
        )));
    }
    let dim = theta0.dim();
    let mut rhs = vec![0.0; dim];
    for (i, &y) in failed.iter().enumerate() {
        let term = group_term(theta0, data, i, y, beta)?;
        for (acc, v) in rhs.iter_mut().zip(term) {
            *acc += v;
        }
    }
    solve_j_beta(theta0, data, beta, &rhs)
}

/// The influence-function factor pair
/// h1 = (1/sigma) phi(z) [Phi(z)^(b-1) + (1-Phi(z))^(b-1)] x and
/// h2 = z phi(z) [...] x with z = (omega - mu)/sigma, where (mu, sigma)
/// come from the scalar-stress link at covariates (1, x).
pub fn h_factors(omega: f64, x: f64, theta: &ParamVector, beta: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    if !omega.is_finite() || !x.is_finite() {
        return Err(Error::Domain("omega and x must be finite".into()));
    }
    let cov = [1.0, x];
    let lv = link(theta, &cov)?;
    let z = (omega - lv.mu) / lv.sigma;
    let pdf = std_normal_pdf(z)?;
    let cdf = std_normal_cdf(z)?;
    let surv = std_normal_cdf(-z)?;
    let bracket = cdf.powf(beta - 1.0) + surv.powf(beta - 1.0);
    Ok((pdf / lv.sigma * bracket * x, z * pdf * bracket * x))
}

/// A point on an influence-factor curve.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct HFactorPoint {
    /// The varying quantity: omega for omega-curves, x for stress-curves.
    pub at: f64,
    pub beta: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Evaluate the h factors over an omega grid for each beta.
pub fn omega_curve(
    theta: &ParamVector,
    x: f64,
    omegas: &[f64],
    betas: &[f64],
) -> Result<Vec<HFactorPoint>> {
    let mut out = Vec::with_capacity(omegas.len() * betas.len());
    for &beta in betas {
        for &omega in omegas {
            let (h1, h2) = h_factors(omega, x, theta, beta)?;
            out.push(HFactorPoint { at: omega, beta, h1, h2 });
        }
    }
    Ok(out)
}

/// Evaluate the h factors over a stress grid at fixed omega.
pub fn stress_curve(
    theta: &ParamVector,
    omega: f64,
    xs: &[f64],
    betas: &[f64],
) -> Result<Vec<HFactorPoint>> {
    let mut out = Vec::with_capacity(xs.len() * betas.len());
    for &beta in betas {
        for &x in xs {
            let (h1, h2) = h_factors(omega, x, theta, beta)?;
            out.push(HFactorPoint { at: x, beta, h1, h2 });
        }
    }
    Ok(out)
}

/// Preset for the omega-sweep curves: mu = 1, sigma = 1, x = 1.
pub fn omega_preset() -> (ParamVector, f64, Vec<f64>) {
    let theta = ParamVector::new(vec![1.0, 0.0], vec![0.0, 0.0]).expect("static preset");
    let omegas = grid(-9.0, 11.0, 0.05);
    (theta, 1.0, omegas)
}

/// Preset for the stress-sweep curves: omega = 1 and
/// theta = (0, -1, 0, +/-1) over x >= 0.
pub fn stress_preset(positive_scale_slope: bool) -> (ParamVector, f64, Vec<f64>) {
    let b1 = if positive_scale_slope { 1.0 } else { -1.0 };
    let theta = ParamVector::new(vec![0.0, -1.0], vec![0.0, b1]).expect("static preset");
    let xs = grid(0.0, 6.0, 0.02);
    (theta, 1.0, xs)
}

fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

/// Second-order influence of the Wald-type test functional:
/// 2 ||IF||^2 (A theta0 - c)' (A Sigma_beta(theta0) A')^-1 (A theta0 - c).
///
/// The first-order influence of the test is identically zero, and this
/// quadratic form vanishes whenever theta0 satisfies the null exactly;
/// nonzero diagnostics therefore require theta0 off the null manifold.
pub fn if2_wald(
    influence: &Influence,
    theta0: &ParamVector,
    data: &Dataset,
    beta: f64,
    spec: &WaldSpec,
) -> Result<f64> {
    check_beta(beta)?;
    if influence.values.len() != theta0.dim() {
        return Err(Error::Domain(format!(
            "influence vector length {} does not match parameter dimension {}",
            influence.values.len(),
            theta0.dim()
        )));
    }
    let m = spec.residual(&theta0.flatten())?;
    let (sigma, _) = sigma_beta(theta0, data, beta)?;
    let projected = spec.project_covariance(&sigma)?;
    let solved = crate::numerics::solve_spd(&projected, &m)
        .map_err(|e| Error::Singular(format!("constraint covariance: {e}")))?;
    if solved.near_singular {
        return Err(Error::Singular("constraint covariance singular".into()));
    }
    let quad: f64 = m.iter().zip(&solved.solution).map(|(x, y)| x * y).sum();
    let norm2: f64 = influence.values.iter().map(|v| v * v).sum();
    Ok(2.0 * quad * norm2)
}
