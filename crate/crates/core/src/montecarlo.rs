//! Monte Carlo machinery: contaminated data generation, SMAE and
//! coverage/width aggregation, empirical level/power studies, and the
//! MaxAE/RMSE tuning-parameter selector.
//!
//! Replications are independent; each derives its own RNG stream from
//! (seed, replication index) so the same datasets are reused across the
//! beta grid (paired comparisons) and reports are byte-identical for a
//! given seed regardless of thread count.

use crate::error::{Error, Result};
use crate::estimation::{delta_method_se, fit, DeltaTarget, FitConfig, FitResult};
use crate::inference::{
    ci_arsech_reliability, ci_asymptotic, ci_log_mean, ci_logit_reliability, wald_type_test,
    WaldSpec,
};
use crate::model::{failure_probability, mean_lifetime, reliability, Dataset, ParamVector, TestGroup};
use crate::parallel::map_indexed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// A factorial simulation design: every stress level crossed with every
/// inspection time, all cells balanced at `k_per_cell` devices.
#[derive(Debug, Clone, Serialize)]
pub struct Design {
    /// Stress vectors without the implicit intercept.
    pub stress_levels: Vec<Vec<f64>>,
    pub inspection_times: Vec<f64>,
    pub k_per_cell: u32,
    pub theta0: ParamVector,
}

impl Design {
    /// Cell order is stress-major: all inspection times of the first
    /// stress level come first.
    pub fn cells(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(self.stress_levels.len() * self.inspection_times.len());
        for stress in &self.stress_levels {
            for &tau in &self.inspection_times {
                out.push((stress.clone(), tau));
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        self.stress_levels.len() * self.inspection_times.len()
    }
}

/// Cells generated from an alternative parameter vector.
#[derive(Debug, Clone, Serialize)]
pub struct Contamination {
    pub cells: BTreeSet<usize>,
    pub theta_tilde: ParamVector,
}

impl Contamination {
    /// Default single-cell policy: the first stress level at the first
    /// inspection time.
    pub fn first_cell(theta_tilde: ParamVector) -> Self {
        Contamination { cells: BTreeSet::from([0]), theta_tilde }
    }
}

/// Draw one dataset from the design: per cell, failures are binomial
/// with the model failure probability. This matches sampling K
/// lognormal lifetimes and counting those at or below tau, because the
/// likelihood sees only the count.
pub fn generate<R: Rng + ?Sized>(
    design: &Design,
    contamination: Option<&Contamination>,
    rng: &mut R,
) -> Result<Dataset> {
    if let Some(c) = contamination {
        if let Some(&bad) = c.cells.iter().find(|&&i| i >= design.cell_count()) {
            return Err(Error::Domain(format!(
                "contaminated cell {bad} out of range for {} cells",
                design.cell_count()
            )));
        }
    }
    let mut groups = Vec::with_capacity(design.cell_count());
    for (idx, (stress, tau)) in design.cells().into_iter().enumerate() {
        let theta = match contamination {
            Some(c) if c.cells.contains(&idx) => &c.theta_tilde,
            _ => &design.theta0,
        };
        let mut x = Vec::with_capacity(stress.len() + 1);
        x.push(1.0);
        x.extend_from_slice(&stress);
        let f = failure_probability(theta, &x, tau)?;
        let n = Binomial::new(design.k_per_cell as u64, f.clamp(0.0, 1.0))
            .map_err(|e| Error::Domain(format!("binomial draw: {e}")))?
            .sample(rng);
        groups.push(TestGroup::new(tau, design.k_per_cell, n as f64, &stress)?);
    }
    Dataset::new(groups)
}

/// Standardized mean absolute error of scalar estimates.
pub fn smae(estimates: &[f64], true_value: f64) -> Result<f64> {
    if true_value == 0.0 {
        return Err(Error::Domain("SMAE is undefined for a zero true value".into()));
    }
    if estimates.is_empty() {
        return Err(Error::Domain("SMAE needs at least one estimate".into()));
    }
    Ok(estimates.iter().map(|e| ((e - true_value) / true_value).abs()).sum::<f64>()
        / estimates.len() as f64)
}

/// SMAE of a parameter vector: the mean of the componentwise SMAEs.
pub fn smae_theta(estimates: &[ParamVector], truth: &ParamVector) -> Result<f64> {
    let truth_flat = truth.flatten();
    let mut acc = 0.0;
    for (k, &t) in truth_flat.iter().enumerate() {
        let comps: Vec<f64> = estimates.iter().map(|e| e.flatten()[k]).collect();
        acc += smae(&comps, t)?;
    }
    Ok(acc / truth_flat.len() as f64)
}

/// The three reliability levels of the standard single-stress scenario:
/// stresses {30, 40, 50}, theta = (a0, -0.1, -0.6, 0.02), four
/// inspection times chosen to avoid all-zero cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityPreset {
    Low,
    Moderate,
    High,
}

/// Normal operating stress for the scenario presets.
pub const NORMAL_USE_STRESS: f64 = 15.0;
/// Evaluation time for reliability under normal operating conditions.
pub const NORMAL_USE_TIME: f64 = 60.0;

impl ReliabilityPreset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "low" => Some(Self::Low),
            "moderate" => Some(Self::Moderate),
            "high" => Some(Self::High),
            _ => None,
        }
    }

    pub fn intercept(self) -> f64 {
        match self {
            Self::Low => 5.8,
            Self::Moderate => 6.0,
            Self::High => 6.2,
        }
    }

    pub fn inspection_times(self) -> Vec<f64> {
        match self {
            Self::Low => vec![5.0, 10.0, 15.0, 20.0],
            Self::Moderate => vec![8.0, 16.0, 24.0, 36.0],
            Self::High => vec![12.0, 24.0, 36.0, 48.0],
        }
    }

    pub fn theta(self) -> ParamVector {
        ParamVector::new(vec![self.intercept(), -0.1], vec![-0.6, 0.02]).expect("static preset")
    }

    /// Parameters with the scale intercept b0 zeroed, the standard
    /// contamination of the scenario.
    pub fn theta_contaminated(self) -> ParamVector {
        ParamVector::new(vec![self.intercept(), -0.1], vec![0.0, 0.02]).expect("static preset")
    }

    pub fn design(self, k_per_cell: u32) -> Design {
        Design {
            stress_levels: vec![vec![30.0], vec![40.0], vec![50.0]],
            inspection_times: self.inspection_times(),
            k_per_cell,
            theta0: self.theta(),
        }
    }
}

/// Settings for [`run_estimator_study`].
#[derive(Debug, Clone, Serialize)]
pub struct StudyOptions {
    pub betas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// CI miss probability; 0.10 gives the 90% intervals.
    pub ci_alpha: f64,
    pub fit_starts: usize,
    pub fit_max_iter: usize,
    pub fit_grad_tol: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            betas: vec![0.0, 0.2, 0.4, 0.6],
            replications: 1000,
            seed: 0,
            ci_alpha: 0.10,
            fit_starts: 3,
            fit_max_iter: 200,
            fit_grad_tol: 1e-5,
        }
    }
}

/// Per-beta aggregates of an estimator study.
#[derive(Debug, Clone, Serialize)]
pub struct BetaReport {
    pub beta: f64,
    /// Replications whose fit converged and entered the aggregates.
    pub used: usize,
    /// SMAE keyed by parameter name, plus "theta", "reliability" and
    /// "mean_lifetime".
    pub smae: BTreeMap<String, f64>,
    /// Coverage of the true reliability / mean lifetime per CI method.
    pub coverage: BTreeMap<String, f64>,
    /// Average CI widths per method.
    pub avg_width: BTreeMap<String, f64>,
}

/// Full estimator-study report.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub replications: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub contaminated: bool,
    /// True values the aggregates are measured against.
    pub true_reliability: f64,
    pub true_mean_lifetime: f64,
    pub per_beta: Vec<BetaReport>,
    pub failed_fits: usize,
    /// More than 2% failed fits marks the report degraded.
    pub degraded: bool,
}

struct RepMetrics {
    theta: ParamVector,
    reliability: f64,
    mean_lifetime: f64,
    ci_r_asy: (f64, f64),
    ci_r_logit: (f64, f64),
    ci_r_arsech: (f64, f64),
    ci_e_asy: (f64, f64),
    ci_e_log: (f64, f64),
}

fn replication_metrics(
    data: &Dataset,
    beta: f64,
    opts: &StudyOptions,
    x0: &[f64],
    t0: f64,
) -> Result<Option<RepMetrics>> {
    let cfg = FitConfig {
        beta,
        max_iter: opts.fit_max_iter,
        grad_tol: opts.fit_grad_tol,
        n_starts: opts.fit_starts,
        seed: opts.seed,
    };
    let fitted = match fit(data, &cfg) {
        Ok(f) if f.converged => f,
        _ => return Ok(None),
    };
    let r_hat = reliability(&fitted.theta_hat, x0, t0)?;
    let e_hat = mean_lifetime(&fitted.theta_hat, x0)?;
    let se_r = delta_method_se(&fitted, &DeltaTarget::Reliability { x: x0, t: t0 })?.value;
    let se_e = delta_method_se(&fitted, &DeltaTarget::MeanLifetime { x: x0 })?.value;
    let alpha = opts.ci_alpha;
    let asy_r = ci_asymptotic(r_hat, se_r, alpha)?;
    let logit_r = ci_logit_reliability(r_hat.clamp(0.0, 1.0), se_r, alpha)?;
    let arsech_r = ci_arsech_reliability(r_hat.clamp(0.0, 1.0), se_r, alpha)?;
    let asy_e = ci_asymptotic(e_hat, se_e, alpha)?;
    let log_e = ci_log_mean(e_hat, se_e, alpha)?;
    Ok(Some(RepMetrics {
        theta: fitted.theta_hat,
        reliability: r_hat,
        mean_lifetime: e_hat,
        ci_r_asy: (asy_r.lower, asy_r.upper),
        ci_r_logit: (logit_r.lower, logit_r.upper),
        ci_r_arsech: (arsech_r.lower, arsech_r.upper),
        ci_e_asy: (asy_e.lower, asy_e.upper),
        ci_e_log: (log_e.lower, log_e.upper),
    }))
}

/// Run the full estimator study: generate, fit every beta on the same
/// replication dataset, and aggregate SMAE / coverage / width.
pub fn run_estimator_study(
    design: &Design,
    contamination: Option<&Contamination>,
    opts: &StudyOptions,
) -> Result<SimReport> {
    if !(opts.ci_alpha > 0.0 && opts.ci_alpha < 1.0) {
        return Err(Error::Domain(format!("ci_alpha must be in (0,1), got {}", opts.ci_alpha)));
    }
    for &beta in &opts.betas {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
    }
    let x0: Vec<f64> = {
        // Normal operating condition: first-factor stress at the preset
        // use level; multi-factor designs evaluate at the first level.
        let mut v = vec![1.0];
        if design.stress_levels[0].len() == 1 {
            v.push(NORMAL_USE_STRESS);
        } else {
            v.extend_from_slice(&design.stress_levels[0]);
        }
        v
    };
    let t0 = NORMAL_USE_TIME;
    let r_true = reliability(&design.theta0, &x0, t0)?;
    let e_true = mean_lifetime(&design.theta0, &x0)?;

    let per_rep: Vec<Vec<Option<RepMetrics>>> = map_indexed(opts.replications, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(rep as u64);
        let data = match generate(design, contamination, &mut rng) {
            Ok(d) => d,
            Err(_) => return opts.betas.iter().map(|_| None).collect(),
        };
        opts.betas
            .iter()
            .map(|&beta| replication_metrics(&data, beta, opts, &x0, t0).unwrap_or(None))
            .collect()
    });

    let theta_true = &design.theta0;
    let p = theta_true.a().len();
    let mut per_beta = Vec::with_capacity(opts.betas.len());
    let mut failed_fits = 0usize;
    for (bi, &beta) in opts.betas.iter().enumerate() {
        let metrics: Vec<&RepMetrics> =
            per_rep.iter().filter_map(|reps| reps[bi].as_ref()).collect();
        failed_fits += opts.replications - metrics.len();
        let mut smae_map = BTreeMap::new();
        let mut coverage = BTreeMap::new();
        let mut avg_width = BTreeMap::new();
        if !metrics.is_empty() {
            let thetas: Vec<ParamVector> = metrics.iter().map(|m| m.theta.clone()).collect();
            let flat_true = theta_true.flatten();
            for (k, &truth) in flat_true.iter().enumerate() {
                let name = if k < p { format!("a{k}") } else { format!("b{}", k - p) };
                let comps: Vec<f64> = thetas.iter().map(|t| t.flatten()[k]).collect();
                smae_map.insert(name, smae(&comps, truth)?);
            }
            smae_map.insert("theta".into(), smae_theta(&thetas, theta_true)?);
            let rs: Vec<f64> = metrics.iter().map(|m| m.reliability).collect();
            smae_map.insert("reliability".into(), smae(&rs, r_true)?);
            let es: Vec<f64> = metrics.iter().map(|m| m.mean_lifetime).collect();
            smae_map.insert("mean_lifetime".into(), smae(&es, e_true)?);

            let n = metrics.len() as f64;
            let mut tally = |name: &str, pick: &dyn Fn(&RepMetrics) -> (f64, f64), truth: f64| {
                let mut covered = 0usize;
                let mut width = 0.0;
                for m in &metrics {
                    let (lo, hi) = pick(m);
                    if lo <= truth && truth <= hi {
                        covered += 1;
                    }
                    width += hi - lo;
                }
                coverage.insert(name.to_string(), covered as f64 / n);
                avg_width.insert(name.to_string(), width / n);
            };
            tally("r_asy", &|m| m.ci_r_asy, r_true);
            tally("r_logit", &|m| m.ci_r_logit, r_true);
            tally("r_arsech", &|m| m.ci_r_arsech, r_true);
            tally("e_asy", &|m| m.ci_e_asy, e_true);
            tally("e_log", &|m| m.ci_e_log, e_true);
        }
        per_beta.push(BetaReport { beta, used: metrics.len(), smae: smae_map, coverage, avg_width });
    }

    let attempts = opts.replications * opts.betas.len();
    let degraded = attempts > 0 && (failed_fits as f64) > 0.02 * attempts as f64;
    Ok(SimReport {
        replications: opts.replications,
        seed: opts.seed,
        ci_level: 1.0 - opts.ci_alpha,
        contaminated: contamination.is_some(),
        true_reliability: r_true,
        true_mean_lifetime: e_true,
        per_beta,
        failed_fits,
        degraded,
    })
}

/// One rejection-rate measurement of the Wald-type test study.
#[derive(Debug, Clone, Serialize)]
pub struct TestStudyRow {
    pub k_per_cell: u32,
    pub beta: f64,
    /// "level" rows generate at the null intercept, "power" rows at the
    /// alternative; the "-contaminated" variants contaminate the default
    /// cell with the shifted intercept.
    pub setting: String,
    pub rejection_rate: f64,
    pub used: usize,
}

/// Wald-test level/power study report.
#[derive(Debug, Clone, Serialize)]
pub struct TestStudyReport {
    pub alpha: f64,
    pub null_intercept: f64,
    pub alt_intercept: f64,
    pub contaminated_intercept: f64,
    pub rows: Vec<TestStudyRow>,
}

/// Empirical level and power of the Wald-type test of a0 = null against
/// two-sided alternatives, for pure and contaminated generation.
#[allow(clippy::too_many_arguments)]
pub fn run_test_study(
    preset: ReliabilityPreset,
    k_values: &[u32],
    betas: &[f64],
    replications: usize,
    seed: u64,
    alpha: f64,
    null_intercept: f64,
    alt_intercept: f64,
    contaminated_intercept: f64,
) -> Result<TestStudyReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    let mut rows = Vec::new();
    let base = preset.theta();
    let theta_at = |a0: f64| {
        ParamVector::new(vec![a0, base.a()[1]], base.b().to_vec()).expect("preset shape")
    };
    // (setting name, generating intercept, contaminate?)
    let settings: [(&str, f64, bool); 4] = [
        ("level-pure", null_intercept, false),
        ("level-contaminated", null_intercept, true),
        ("power-pure", alt_intercept, false),
        ("power-contaminated", alt_intercept, true),
    ];
    for &k in k_values {
        let mut design = preset.design(k);
        for (si, &(name, gen_a0, contaminate)) in settings.iter().enumerate() {
            design.theta0 = theta_at(gen_a0);
            let contamination = contaminate
                .then(|| Contamination::first_cell(theta_at(contaminated_intercept)));
            let rejects: Vec<Vec<Option<bool>>> = map_indexed(replications, |rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((si as u64) << 32) | rep as u64);
                let data = match generate(&design, contamination.as_ref(), &mut rng) {
                    Ok(d) => d,
                    Err(_) => return betas.iter().map(|_| None).collect(),
                };
                betas
                    .iter()
                    .map(|&beta| {
                        let cfg = FitConfig { beta, n_starts: 3, seed, ..Default::default() };
                        let fitted = match fit(&data, &cfg) {
                            Ok(f) if f.converged => f,
                            _ => return None,
                        };
                        let spec =
                            WaldSpec::fix_coordinate(fitted.theta_hat.dim(), 0, null_intercept)
                                .ok()?;
                        let test = wald_type_test(&fitted, &spec).ok()?;
                        Some(test.p_value < alpha)
                    })
                    .collect()
            });
            for (bi, &beta) in betas.iter().enumerate() {
                let outcomes: Vec<bool> =
                    rejects.iter().filter_map(|reps| reps[bi]).collect();
                let used = outcomes.len();
                let rate = if used == 0 {
                    0.0
                } else {
                    outcomes.iter().filter(|&&r| r).count() as f64 / used as f64
                };
                rows.push(TestStudyRow {
                    k_per_cell: k,
                    beta,
                    setting: name.to_string(),
                    rejection_rate: rate,
                    used,
                });
            }
        }
    }
    Ok(TestStudyReport {
        alpha,
        null_intercept,
        alt_intercept,
        contaminated_intercept,
        rows,
    })
}

/// Fit quality of one tuning-parameter candidate.
#[derive(Debug, Clone, Serialize)]
pub struct TuneEntry {
    pub beta: f64,
    /// max_i |F_i(theta_hat) - n_i/K_i|
    pub max_ae: f64,
    /// sqrt(mean_i (F_i(theta_hat) - n_i/K_i)^2)
    pub rmse: f64,
    pub converged: bool,
}

/// Outcome of the data-driven tuning-parameter selection.
#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub beta_star: f64,
    pub entries: Vec<TuneEntry>,
}

/// Fitted-versus-empirical probability errors for one fit.
pub fn probability_errors(fitted: &FitResult, data: &Dataset) -> Result<(f64, f64)> {
    let mut max_ae = 0.0_f64;
    let mut sq = 0.0;
    for g in data.groups() {
        let f = failure_probability(&fitted.theta_hat, g.covariates(), g.tau())?;
        let err = (f - g.empirical_failure()).abs();
        max_ae = max_ae.max(err);
        sq += err * err;
    }
    Ok((max_ae, (sq / data.groups().len() as f64).sqrt()))
}

/// Fit every beta in the grid and pick the one minimizing MaxAE, ties
/// resolved toward the smallest beta.
pub fn tune_beta(data: &Dataset, beta_grid: &[f64], base: &FitConfig) -> Result<TuneReport> {
    if beta_grid.is_empty() {
        return Err(Error::Domain("tuning grid must not be empty".into()));
    }
    let mut grid: Vec<f64> = beta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite betas"));
    grid.dedup();
    let mut entries = Vec::with_capacity(grid.len());
    for &beta in &grid {
        let cfg = FitConfig { beta, ..base.clone() };
        match fit(data, &cfg) {
            Ok(fitted) => {
                let (max_ae, rmse) = probability_errors(&fitted, data)?;
                entries.push(TuneEntry { beta, max_ae, rmse, converged: fitted.converged });
            }
            Err(_) => entries.push(TuneEntry {
                beta,
                max_ae: f64::INFINITY,
                rmse: f64::INFINITY,
                converged: false,
            }),
        }
    }
    let best_max = entries
        .iter()
        .filter(|e| e.converged)
        .map(|e| e.max_ae)
        .min_by(|a, b| a.partial_cmp(b).expect("finite MaxAE"))
        .ok_or_else(|| Error::Domain("no tuning candidate produced a converged fit".into()))?;
    // Ties resolve to the smallest beta; a machine-level slack keeps
    // exactly-fitting candidates tied.
    let beta_star = entries
        .iter()
        .find(|e| e.converged && e.max_ae <= best_max + 1e-12 * (1.0 + best_max))
        .expect("a minimizing entry exists")
        .beta;
    Ok(TuneReport { beta_star, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_targets_match_closed_forms() {
        // R(60; 15) and E(15) from the preset parameter vectors.
        let cases = [
            (ReliabilityPreset::Low, 0.6093, 96.9704),
            (ReliabilityPreset::Moderate, 0.7080, 118.4399),
            (ReliabilityPreset::High, 0.7932, 144.6628),
        ];
        for (preset, r_want, e_want) in cases {
            let theta = preset.theta();
            let x0 = [1.0, NORMAL_USE_STRESS];
            let r = reliability(&theta, &x0, NORMAL_USE_TIME).unwrap();
            let e = mean_lifetime(&theta, &x0).unwrap();
            assert!((r - r_want).abs() < 1e-3, "{preset:?}: R = {r}");
            assert!((e - e_want).abs() / e_want < 1e-3, "{preset:?}: E = {e}");
        }
    }

    #[test]
    fn generate_is_deterministic_and_respects_zero_probability() {
        let design = ReliabilityPreset::Moderate.design(50);
        let mut rng1 = ChaCha8Rng::seed_from_u64(5);
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let d1 = generate(&design, None, &mut rng1).unwrap();
        let d2 = generate(&design, None, &mut rng2).unwrap();
        assert_eq!(d1, d2);

        // A cell with F = 0 never fails: push the location far up.
        let zero = Design {
            stress_levels: vec![vec![30.0]],
            inspection_times: vec![1e-6],
            k_per_cell: 200,
            theta0: ParamVector::new(vec![50.0, 0.0], vec![0.0, 0.0]).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = generate(&zero, None, &mut rng).unwrap();
        assert_eq!(d.groups()[0].failures(), 0.0);
    }

    #[test]
    fn generate_concentrates_near_model_probability() {
        let design = Design { k_per_cell: 100_000, ..ReliabilityPreset::Moderate.design(1) };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = generate(&design, None, &mut rng).unwrap();
        for g in data.groups() {
            let f = failure_probability(&design.theta0, g.covariates(), g.tau()).unwrap();
            let bound = 4.0 * (f * (1.0 - f) / design.k_per_cell as f64).sqrt();
            assert!(
                (g.empirical_failure() - f).abs() < bound,
                "cell off by more than 4 sigma: {} vs {f}",
                g.empirical_failure()
            );
        }
    }

    #[test]
    fn contamination_only_touches_selected_cells() {
        let design = Design { k_per_cell: 200_000, ..ReliabilityPreset::Moderate.design(1) };
        let contam = Contamination::first_cell(ReliabilityPreset::Moderate.theta_contaminated());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = generate(&design, Some(&contam), &mut rng).unwrap();
        let g0 = &data.groups()[0];
        let f_pure = failure_probability(&design.theta0, g0.covariates(), g0.tau()).unwrap();
        let f_tilde =
            failure_probability(&contam.theta_tilde, g0.covariates(), g0.tau()).unwrap();
        let p0 = g0.empirical_failure();
        assert!((p0 - f_tilde).abs() < 0.01, "contaminated cell follows theta_tilde");
        assert!((p0 - f_pure).abs() > 0.05, "contaminated cell departs from theta0");
        // Out-of-range contaminated cell is rejected.
        let bad = Contamination {
            cells: BTreeSet::from([99]),
            theta_tilde: design.theta0.clone(),
        };
        assert!(generate(&design, Some(&bad), &mut rng).is_err());
    }

    #[test]
    fn smae_basics() {
        assert_eq!(smae(&[1.0, 1.0], 1.0).unwrap(), 0.0);
        assert!((smae(&[1.1], 1.0).unwrap() - 0.1).abs() < 1e-12);
        assert!(smae(&[1.0], 0.0).is_err());
        assert!(smae(&[], 1.0).is_err());
        let t = ParamVector::new(vec![2.0], vec![1.0]).unwrap();
        let e = ParamVector::new(vec![2.2], vec![0.9]).unwrap();
        // mean of 0.1 and 0.1
        assert!((smae_theta(&[e], &t).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn estimator_study_smoke_and_determinism() {
        let design = ReliabilityPreset::Moderate.design(50);
        let opts = StudyOptions {
            betas: vec![0.0, 0.4],
            replications: 8,
            seed: 42,
            ..Default::default()
        };
        let r1 = run_estimator_study(&design, None, &opts).unwrap();
        let r2 = run_estimator_study(&design, None, &opts).unwrap();
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
        assert_eq!(r1.per_beta.len(), 2);
        assert!(r1.per_beta[0].used > 0);
        for rep in &r1.per_beta {
            for v in rep.coverage.values() {
                assert!((0.0..=1.0).contains(v));
            }
            for w in rep.avg_width.values() {
                assert!(*w >= 0.0);
            }
            assert!(rep.avg_width["r_logit"] <= 1.0);
            assert!(rep.avg_width["r_arsech"] <= 1.0);
        }
    }

    #[test]
    fn single_replication_smae_is_plain_relative_error() {
        let design = ReliabilityPreset::Moderate.design(100);
        let opts = StudyOptions {
            betas: vec![0.0],
            replications: 1,
            seed: 7,
            ..Default::default()
        };
        let report = run_estimator_study(&design, None, &opts).unwrap();
        let rep = &report.per_beta[0];
        assert_eq!(rep.used, 1);
        // Re-run the single replication by hand and compare a0.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(0);
        let data = generate(&design, None, &mut rng).unwrap();
        let cfg = FitConfig { beta: 0.0, n_starts: 3, seed: 7, ..Default::default() };
        let fitted = fit(&data, &cfg).unwrap();
        let expect = (fitted.theta_hat.a()[0] - 6.0).abs() / 6.0;
        assert!((rep.smae["a0"] - expect).abs() < 1e-12);
    }

    #[test]
    fn test_study_handles_zero_replications() {
        let report = run_test_study(
            ReliabilityPreset::Moderate,
            &[30],
            &[0.0],
            0,
            1,
            0.05,
            6.0,
            5.0,
            5.6,
        )
        .unwrap();
        assert!(report.rows.iter().all(|r| r.used == 0 && r.rejection_rate == 0.0));
    }

    #[test]
    fn tune_beta_saturated_data_is_exact_everywhere() {
        // One free parameter pair per cell count: a saturated single
        // group is matched exactly at every beta.
        let data = Dataset::new(vec![TestGroup::new(2.0, 40, 10.0, &[]).unwrap()]).unwrap();
        let report =
            tune_beta(&data, &[0.0, 0.4, 0.2, 0.4], &FitConfig { n_starts: 2, ..Default::default() })
                .unwrap();
        // Grid is deduplicated and sorted.
        assert_eq!(
            report.entries.iter().map(|e| e.beta).collect::<Vec<_>>(),
            vec![0.0, 0.2, 0.4]
        );
        for e in &report.entries {
            assert!(e.max_ae < 1e-6, "beta {}: MaxAE {}", e.beta, e.max_ae);
        }
        assert_eq!(report.beta_star, 0.0, "ties resolve to the smallest beta");
    }

    #[test]
    fn tune_beta_max_ae_dominates_scaled_rmse() {
        let design = ReliabilityPreset::Moderate.design(40);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = generate(&design, None, &mut rng).unwrap();
        let report = tune_beta(
            &data,
            &[0.0, 0.3],
            &FitConfig { n_starts: 2, ..Default::default() },
        )
        .unwrap();
        let cells = data.groups().len() as f64;
        for e in &report.entries {
            assert!(e.max_ae >= e.rmse / cells.sqrt() - 1e-12);
            assert!(e.max_ae >= e.rmse - 1e-12 || e.rmse <= e.max_ae * cells.sqrt());
        }
    }

    #[test]
    fn tune_beta_rejects_empty_grid() {
        let data = Dataset::new(vec![TestGroup::new(2.0, 10, 5.0, &[]).unwrap()]).unwrap();
        assert!(tune_beta(&data, &[], &FitConfig::default()).is_err());
    }
}
