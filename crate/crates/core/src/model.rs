//! Lognormal one-shot device model: test-group data, log-linear links,
//! failure/reliability probabilities, mean lifetime, hazard, and the
//! gradient of the failure probability.
//!
//! Lifetimes under test condition `i` are lognormal with log-scale
//! location `mu_i = a' x_i` and scale `sigma_i = exp(b' x_i)`, where
//! `x_i` is the covariate vector with an implicit leading intercept 1.
//! Only the binary device status at the inspection time is observed, so
//! all inference flows through `F(tau) = Phi((log tau - mu)/sigma)`.

use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, std_normal_pdf};
use serde::{Deserialize, Serialize};
use std::io::Read;

/// One test condition: inspection time, device count, failure count and
/// stress covariates (including the leading intercept 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestGroup {
    tau: f64,
    log_tau: f64,
    devices: u32,
    failures: f64,
    covariates: Vec<f64>,
}

impl TestGroup {
    /// Build a group from the inspection time, device count, failure
    /// count and the stress values (without the intercept).
    ///
    /// Failure counts are `f64` so that exact-probability datasets
    /// (`n = K * F`) can be fitted; CSV ingestion restricts them to
    /// integers.
    pub fn new(tau: f64, devices: u32, failures: f64, stress: &[f64]) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Data(format!("inspection time must be > 0, got {tau}")));
        }
        if devices == 0 {
            return Err(Error::Data("device count must be positive".into()));
        }
        if !failures.is_finite() || failures < 0.0 || failures > devices as f64 {
            return Err(Error::Data(format!(
                "failure count {failures} outside [0, {devices}]"
            )));
        }
        if stress.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("stress covariates must be finite".into()));
        }
        let mut covariates = Vec::with_capacity(stress.len() + 1);
        covariates.push(1.0);
        covariates.extend_from_slice(stress);
        Ok(TestGroup { tau, log_tau: tau.ln(), devices, failures, covariates })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Log inspection time.
    pub fn log_tau(&self) -> f64 {
        self.log_tau
    }

    pub fn devices(&self) -> u32 {
        self.devices
    }

    pub fn failures(&self) -> f64 {
        self.failures
    }

    /// Covariate vector including the leading intercept 1.
    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    /// Empirical failure proportion n/K.
    pub fn empirical_failure(&self) -> f64 {
        self.failures / self.devices as f64
    }
}

/// An ordered collection of test groups sharing the same covariate
/// layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    groups: Vec<TestGroup>,
    num_factors: usize,
}

impl Dataset {
    pub fn new(groups: Vec<TestGroup>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::Data("dataset needs at least one test group".into()))?;
        let width = first.covariates.len();
        for (i, g) in groups.iter().enumerate() {
            if g.covariates.len() != width {
                return Err(Error::Data(format!(
                    "group {i} has {} covariates, expected {}",
                    g.covariates.len() - 1,
                    width - 1
                )));
            }
        }
        Ok(Dataset { groups, num_factors: width - 1 })
    }

    pub fn groups(&self) -> &[TestGroup] {
        &self.groups
    }

    /// Number of stress factors J (covariate length is J+1).
    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    /// Total number of devices K across all groups.
    pub fn total_devices(&self) -> f64 {
        self.groups.iter().map(|g| g.devices as f64).sum()
    }

    /// Parse the `tau,K,n,x1,...,xJ` CSV schema.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
            .clone();
        if headers.len() < 3 || &headers[0] != "tau" || &headers[1] != "K" || &headers[2] != "n" {
            return Err(Error::Data(format!(
                "CSV header must start with tau,K,n (got {:?})",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        for (j, name) in headers.iter().skip(3).enumerate() {
            let expected = format!("x{}", j + 1);
            if name != expected {
                return Err(Error::Data(format!(
                    "CSV header column {} must be {expected}, got {name}",
                    j + 4
                )));
            }
        }
        let num_factors = headers.len() - 3;
        let mut groups = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 2; // 1-based, counting the header line
            let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row {row}: expected {} fields, got {}",
                    headers.len(),
                    record.len()
                )));
            }
            let parse = |col: usize, name: &str| -> Result<f64> {
                record[col].parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "row {row}, column {name}: cannot parse {:?} as a number",
                        &record[col]
                    ))
                })
            };
            let tau = parse(0, "tau")?;
            let devices = parse(1, "K")?;
            if devices.fract() != 0.0 || !(devices >= 1.0 && devices <= u32::MAX as f64) {
                return Err(Error::Data(format!(
                    "row {row}, column K: expected a positive integer, got {devices}"
                )));
            }
            let failures = parse(2, "n")?;
            if failures.fract() != 0.0 {
                return Err(Error::Data(format!(
                    "row {row}, column n: expected an integer count, got {failures}"
                )));
            }
            let stress: Vec<f64> = (0..num_factors)
                .map(|j| parse(3 + j, &format!("x{}", j + 1)))
                .collect::<Result<_>>()?;
            groups.push(
                TestGroup::new(tau, devices as u32, failures, &stress)
                    .map_err(|e| Error::Data(format!("row {row}: {e}")))?,
            );
        }
        if groups.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        Dataset::new(groups)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }
}

/// Model parameters theta = (a_0..a_J, b_0..b_J).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ParamVector {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::Domain(format!(
                "parameter blocks must have equal positive length (got {} and {})",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        Ok(ParamVector { a, b })
    }

    /// Rebuild from the flattened layout (a_0..a_J, b_0..b_J).
    pub fn from_flat(theta: &[f64]) -> Result<Self> {
        if !theta.len().is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "flattened parameter length must be even, got {}",
                theta.len()
            )));
        }
        let half = theta.len() / 2;
        Self::new(theta[..half].to_vec(), theta[half..].to_vec())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.a.iter().chain(self.b.iter()).copied().collect()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Total dimension 2(J+1).
    pub fn dim(&self) -> usize {
        2 * self.a.len()
    }

    /// Number of stress factors J.
    pub fn num_factors(&self) -> usize {
        self.a.len() - 1
    }
}

/// Location and scale of the log-lifetime under one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkValues {
    pub mu: f64,
    pub sigma: f64,
}

fn check_covariates(theta: &ParamVector, x: &[f64]) -> Result<()> {
    if x.len() != theta.a.len() {
        return Err(Error::Domain(format!(
            "covariate length {} does not match parameter block length {}",
            x.len(),
            theta.a.len()
        )));
    }
    if x[0] != 1.0 {
        return Err(Error::Domain(format!("covariate vector must start with 1, got {}", x[0])));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// mu = a'x, sigma = exp(b'x).
pub fn link(theta: &ParamVector, x: &[f64]) -> Result<LinkValues> {
    check_covariates(theta, x)?;
    let mu = dot(&theta.a, x);
    let log_sigma = dot(&theta.b, x);
    if log_sigma > 700.0 {
        return Err(Error::Domain(format!(
            "scale link overflow: exp({log_sigma}) for covariates {x:?}"
        )));
    }
    Ok(LinkValues { mu, sigma: log_sigma.exp() })
}

/// F(tau; x, theta) = Phi((log tau - mu)/sigma).
pub fn failure_probability(theta: &ParamVector, x: &[f64], tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("inspection time must be > 0, got {tau}")));
    }
    let lv = link(theta, x)?;
    std_normal_cdf((tau.ln() - lv.mu) / lv.sigma)
}

/// R = 1 - F, exactly.
pub fn reliability(theta: &ParamVector, x: &[f64], tau: f64) -> Result<f64> {
    Ok(1.0 - failure_probability(theta, x, tau)?)
}

/// E(x, theta) = exp(mu + sigma^2/2).
pub fn mean_lifetime(theta: &ParamVector, x: &[f64]) -> Result<f64> {
    let lv = link(theta, x)?;
    let arg = lv.mu + 0.5 * lv.sigma * lv.sigma;
    if arg > 700.0 {
        return Err(Error::Domain(format!("mean lifetime overflow: exp({arg})")));
    }
    Ok(arg.exp())
}

/// Lognormal hazard f(t)/R(t); rises then falls in t.
pub fn hazard(theta: &ParamVector, x: &[f64], t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("hazard time must be > 0, got {t}")));
    }
    let lv = link(theta, x)?;
    let z = (t.ln() - lv.mu) / lv.sigma;
    let density = std_normal_pdf(z)? / (lv.sigma * t);
    let surv = 1.0 - std_normal_cdf(z)?;
    if surv <= 0.0 {
        return Err(Error::Domain(format!(
            "reliability underflow at t = {t}; hazard is not representable"
        )));
    }
    Ok(density / surv)
}

/// The per-group factor pair (phi(z)/sigma, z phi(z)) with
/// z = (W - mu)/sigma.
///
/// These are the magnitudes that enter the estimating equations and the
/// information matrices. The gradient of the failure probability itself
/// carries the opposite sign; see [`full_gradient_failure`].
pub fn delta_vector(theta: &ParamVector, x: &[f64], log_time: f64) -> Result<(f64, f64)> {
    if !log_time.is_finite() {
        return Err(Error::Domain(format!("log inspection time must be finite, got {log_time}")));
    }
    let lv = link(theta, x)?;
    let z = (log_time - lv.mu) / lv.sigma;
    let pdf = std_normal_pdf(z)?;
    Ok((pdf / lv.sigma, z * pdf))
}

/// Gradient of F(W; x, theta) with respect to the flattened theta.
///
/// Chain rule through mu = a'x and sigma = exp(b'x) gives
/// dF/da_j = -(phi(z)/sigma) x_j and dF/db_j = -z phi(z) x_j, i.e. the
/// negative of [`delta_vector`] spread over the covariates.
pub fn full_gradient_failure(theta: &ParamVector, x: &[f64], log_time: f64) -> Result<Vec<f64>> {
    let (d_mu, d_sigma) = delta_vector(theta, x, log_time)?;
    let p = theta.a.len();
    let mut grad = Vec::with_capacity(2 * p);
    for &xj in x {
        grad.push(-d_mu * xj);
    }
    for &xj in x {
        grad.push(-d_sigma * xj);
    }
    Ok(grad)
}
