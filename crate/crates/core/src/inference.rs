//! Confidence intervals and Wald-type tests.
//!
//! Reliability intervals come in three flavors: plain asymptotic
//! (untruncated, can escape the unit interval), logit, and arsech;
//! the latter two are variance-stabilizing transforms that keep the
//! bounds inside (0,1). Mean-lifetime intervals are asymptotic or
//! log-transformed.
//! Wald-type tests cover linear hypotheses A theta = c against the
//! sandwich covariance of any weighted minimum DPD fit.

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::numerics::{chisq_sf, solve_spd, std_normal_quantile, SquareMatrix};
use serde::Serialize;
use std::collections::BTreeMap;

/// Which construction produced a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Asy,
    Logit,
    Arsech,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    /// Point interval returned for a boundary estimate.
    pub degenerate: bool,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    std_normal_quantile(1.0 - alpha / 2.0)
}

fn check_se(se: f64) -> Result<()> {
    if !(se.is_finite() && se >= 0.0) {
        return Err(Error::Domain(format!("standard error must be >= 0, got {se}")));
    }
    Ok(())
}

/// Plain asymptotic interval estimate +/- z_(1-alpha/2) se. Not
/// truncated: bounds may leave the natural range of the parameter.
pub fn ci_asymptotic(estimate: f64, se: f64, alpha: f64) -> Result<ConfidenceInterval> {
    let z = check_alpha(alpha)?;
    check_se(se)?;
    Ok(ConfidenceInterval {
        lower: estimate - z * se,
        upper: estimate + z * se,
        level: 1.0 - alpha,
        method: CiMethod::Asy,
        degenerate: false,
    })
}

/// Logit-transformed reliability interval; bounds stay inside (0,1).
pub fn ci_logit_reliability(r_hat: f64, se_r: f64, alpha: f64) -> Result<ConfidenceInterval> {
    let z = check_alpha(alpha)?;
    check_se(se_r)?;
    if !(0.0..=1.0).contains(&r_hat) {
        return Err(Error::Domain(format!("reliability must be in [0,1], got {r_hat}")));
    }
    if r_hat == 0.0 || r_hat == 1.0 {
        return Ok(ConfidenceInterval {
            lower: r_hat,
            upper: r_hat,
            level: 1.0 - alpha,
            method: CiMethod::Logit,
            degenerate: true,
        });
    }
    let s = (z * se_r / (r_hat * (1.0 - r_hat))).exp();
    // The algebra keeps both bounds strictly inside (0,1); only exp
    // overflow can push a computed bound onto the boundary, so nudge it
    // back to the nearest interior float.
    Ok(ConfidenceInterval {
        lower: (r_hat / (r_hat + (1.0 - r_hat) * s)).max(f64::MIN_POSITIVE),
        upper: (r_hat / (r_hat + (1.0 - r_hat) / s)).min(1.0_f64.next_down()),
        level: 1.0 - alpha,
        method: CiMethod::Logit,
        degenerate: false,
    })
}

/// Arsech-transformed reliability interval; bounds stay inside (0,1).
///
/// f = log((1 + sqrt(1 - R^2))/R) is the inverse hyperbolic secant of R;
/// the interval maps f +/- z se(f) back through sech, exactly as
/// published. The bounds are always ordered (|f - z se| < f + z se for
/// f > 0), but when z se(f) > 2 f the even sech folds the lower
/// endpoint past the estimate and the interval no longer contains
/// R-hat; that regime is also where its empirical coverage drops.
pub fn ci_arsech_reliability(r_hat: f64, se_r: f64, alpha: f64) -> Result<ConfidenceInterval> {
    let z = check_alpha(alpha)?;
    check_se(se_r)?;
    if !(0.0..=1.0).contains(&r_hat) {
        return Err(Error::Domain(format!("reliability must be in [0,1], got {r_hat}")));
    }
    if r_hat == 0.0 || r_hat == 1.0 {
        return Ok(ConfidenceInterval {
            lower: r_hat,
            upper: r_hat,
            level: 1.0 - alpha,
            method: CiMethod::Arsech,
            degenerate: true,
        });
    }
    let root = (1.0 - r_hat * r_hat).sqrt();
    let f_hat = ((1.0 + root) / r_hat).ln();
    let se_f = se_r / (r_hat * root);
    let upper_f = f_hat + z * se_f;
    let lower_f = f_hat - z * se_f;
    let sech = |u: f64| 2.0 / ((-u).exp() + u.exp());
    // sech is decreasing in |u|, so the endpoint with the larger
    // magnitude gives the lower bound; only exp overflow can reach a
    // boundary, nudge back to the interior.
    let lower = sech(upper_f).max(f64::MIN_POSITIVE);
    let upper = sech(lower_f).max(lower);
    Ok(ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        method: CiMethod::Arsech,
        degenerate: false,
    })
}

/// Log-transformed interval for a positive mean lifetime.
pub fn ci_log_mean(t_hat: f64, se_t: f64, alpha: f64) -> Result<ConfidenceInterval> {
    let z = check_alpha(alpha)?;
    check_se(se_t)?;
    if !(t_hat.is_finite() && t_hat > 0.0) {
        return Err(Error::Domain(format!("mean lifetime must be > 0, got {t_hat}")));
    }
    let factor = (z * se_t / t_hat).exp();
    // Positive by construction; only exp overflow can underflow the
    // lower bound to zero, nudge it back to the interior.
    Ok(ConfidenceInterval {
        lower: (t_hat / factor).max(f64::MIN_POSITIVE),
        upper: t_hat * factor,
        level: 1.0 - alpha,
        method: CiMethod::Log,
        degenerate: false,
    })
}

/// Linear hypothesis A theta = c with full row rank A.
#[derive(Debug, Clone, Serialize)]
pub struct WaldSpec {
    a: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl WaldSpec {
    pub fn new(a: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self> {
        let r = a.len();
        if r == 0 || c.len() != r {
            return Err(Error::Domain(format!(
                "constraint matrix has {r} rows but {} targets",
                c.len()
            )));
        }
        let dim = a[0].len();
        if dim == 0 || a.iter().any(|row| row.len() != dim) {
            return Err(Error::Domain("constraint rows must share a positive length".into()));
        }
        if r > dim {
            return Err(Error::Domain(format!(
                "cannot test {r} constraints on {dim} parameters"
            )));
        }
        if !rows_have_full_rank(&a) {
            return Err(Error::Domain("constraint matrix is rank deficient".into()));
        }
        Ok(WaldSpec { a, c })
    }

    /// Constraint fixing a single flattened coordinate to a value.
    pub fn fix_coordinate(dim: usize, index: usize, value: f64) -> Result<Self> {
        if index >= dim {
            return Err(Error::Domain(format!("coordinate {index} out of range for {dim}")));
        }
        let mut row = vec![0.0; dim];
        row[index] = 1.0;
        WaldSpec::new(vec![row], vec![value])
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.a[0].len()
    }

    /// m(theta) = A theta - c.
    pub fn residual(&self, theta_flat: &[f64]) -> Result<Vec<f64>> {
        if theta_flat.len() != self.dim() {
            return Err(Error::Domain(format!(
                "constraint dimension {} does not match parameter dimension {}",
                self.dim(),
                theta_flat.len()
            )));
        }
        Ok(self
            .a
            .iter()
            .zip(&self.c)
            .map(|(row, c)| row.iter().zip(theta_flat).map(|(x, y)| x * y).sum::<f64>() - c)
            .collect())
    }

    /// A V A^T for a symmetric V.
    pub fn project_covariance(&self, v: &SquareMatrix) -> Result<SquareMatrix> {
        if v.order() != self.dim() {
            return Err(Error::Domain(format!(
                "covariance order {} does not match constraint dimension {}",
                v.order(),
                self.dim()
            )));
        }
        let r = self.rows();
        let mut out = SquareMatrix::zeros(r);
        for i in 0..r {
            let vai = v.matvec(&self.a[i]);
            for j in 0..r {
                out.set(i, j, self.a[j].iter().zip(&vai).map(|(x, y)| x * y).sum());
            }
        }
        // Symmetrize against accumulation order.
        for i in 0..r {
            for j in (i + 1)..r {
                let avg = 0.5 * (out.get(i, j) + out.get(j, i));
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        Ok(out)
    }
}

/// Full-row-rank check by modified Gram-Schmidt with
/// reorthogonalization: each row must keep at least 1e-10 of its norm
/// after projecting out the previous rows.
fn rows_have_full_rank(a: &[Vec<f64>]) -> bool {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(a.len());
    for row in a {
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        let mut v = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let residual = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if residual <= 1e-10 * norm0 {
            return false;
        }
        for x in &mut v {
            *x /= residual;
        }
        basis.push(v);
    }
    true
}

/// Wald-type test outcome.
#[derive(Debug, Clone, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    /// Rejection decisions keyed by printed significance level.
    pub reject_at: BTreeMap<String, bool>,
}

/// Wald-type statistic m' (A V A^T)^-1 m with m = A theta_hat - c and V
/// the fitted covariance of theta_hat (equivalently
/// K m' (A Sigma A^T)^-1 m with the sandwich Sigma = K V).
pub fn wald_type_test(fit: &FitResult, spec: &WaldSpec) -> Result<WaldResult> {
    if !fit.converged {
        return Err(Error::Domain("Wald test requires a converged fit".into()));
    }
    let theta = fit.theta_hat.flatten();
    let m = spec.residual(&theta)?;
    let projected = spec.project_covariance(&fit.covariance)?;
    let solved = solve_spd(&projected, &m)
        .map_err(|e| Error::Singular(format!("constraint covariance: {e}")))?;
    if solved.near_singular {
        return Err(Error::Singular("constraint covariance singular".into()));
    }
    let statistic = m
        .iter()
        .zip(&solved.solution)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .max(0.0);
    let dof = spec.rows() as u32;
    let p_value = chisq_sf(statistic, dof)?;
    let mut reject_at = BTreeMap::new();
    for (label, level) in [("0.01", 0.01), ("0.05", 0.05), ("0.10", 0.10)] {
        reject_at.insert(label.to_string(), p_value < level);
    }
    Ok(WaldResult { statistic, dof, p_value, reject_at })
}

/// Example-style test of the j-th stress factor: a_j = b_j = 0, two
/// degrees of freedom.
pub fn stress_factor_test(fit: &FitResult, factor: usize) -> Result<WaldResult> {
    let p = fit.theta_hat.a().len();
    let j = factor;
    if j == 0 || j >= p {
        return Err(Error::Domain(format!(
            "stress factor index must be in 1..={}, got {j}",
            p - 1
        )));
    }
    let dim = fit.theta_hat.dim();
    let mut row_a = vec![0.0; dim];
    row_a[j] = 1.0;
    let mut row_b = vec![0.0; dim];
    row_b[p + j] = 1.0;
    let spec = WaldSpec::new(vec![row_a, row_b], vec![0.0, 0.0])?;
    wald_type_test(fit, &spec)
}
