//! TOML schema for the `simulate` subcommand.

use anyhow::{bail, Context, Result};
use oneshot_dpd::model::ParamVector;
use oneshot_dpd::montecarlo::{Contamination, Design, ReliabilityPreset, StudyOptions};
use serde::Deserialize;
use std::collections::BTreeSet;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// low | moderate | high | custom
    pub scenario: String,
    pub replications: usize,
    pub k_per_cell: u32,
    pub betas: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_ci_alpha")]
    pub ci_alpha: f64,
    #[serde(default = "default_fit_starts")]
    pub fit_starts: usize,
    #[serde(default = "default_fit_max_iter")]
    pub fit_max_iter: usize,
    #[serde(default = "default_fit_grad_tol")]
    pub fit_grad_tol: f64,
    pub contamination: Option<ContaminationConfig>,
    pub custom: Option<CustomScenario>,
    pub test_study: Option<TestStudyConfig>,
}

fn default_ci_alpha() -> f64 {
    0.10
}
fn default_fit_starts() -> usize {
    3
}
fn default_fit_max_iter() -> usize {
    200
}
fn default_fit_grad_tol() -> f64 {
    1e-5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    /// Contaminated cell indices in stress-major order; defaults to the
    /// first cell.
    pub cells: Option<Vec<usize>>,
    /// Full flattened contaminating parameter vector, or...
    pub theta_tilde: Option<Vec<f64>>,
    /// ...single-coefficient overrides of the scenario parameters.
    pub a0: Option<f64>,
    pub b0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub stress_levels: Vec<Vec<f64>>,
    pub inspection_times: Vec<f64>,
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestStudyConfig {
    pub null_a0: f64,
    pub alt_a0: f64,
    pub contaminated_a0: f64,
    #[serde(default = "default_test_alpha")]
    pub alpha: f64,
    /// Cell sizes to sweep; defaults to the study's k_per_cell.
    pub k_values: Option<Vec<u32>>,
}

fn default_test_alpha() -> f64 {
    0.05
}

pub struct ResolvedStudy {
    pub design: Design,
    pub contamination: Option<Contamination>,
    pub options: StudyOptions,
    pub preset: Option<ReliabilityPreset>,
}

pub fn parse(text: &str) -> Result<SimulateConfig> {
    toml::from_str(text).context("invalid simulate config")
}

pub fn resolve(cfg: &SimulateConfig) -> Result<ResolvedStudy> {
    let (design, preset) = match cfg.scenario.as_str() {
        "custom" => {
            let custom = cfg
                .custom
                .as_ref()
                .context("scenario = \"custom\" needs a [custom] section")?;
            let theta0 = ParamVector::new(custom.theta_a.clone(), custom.theta_b.clone())
                .map_err(|e| anyhow::anyhow!("custom theta: {e}"))?;
            (
                Design {
                    stress_levels: custom.stress_levels.clone(),
                    inspection_times: custom.inspection_times.clone(),
                    k_per_cell: cfg.k_per_cell,
                    theta0,
                },
                None,
            )
        }
        name => {
            let preset = ReliabilityPreset::from_name(name)
                .with_context(|| format!("unknown scenario {name:?} (low|moderate|high|custom)"))?;
            (preset.design(cfg.k_per_cell), Some(preset))
        }
    };

    let contamination = match &cfg.contamination {
        None => None,
        Some(c) => {
            let theta_tilde = if let Some(flat) = &c.theta_tilde {
                if c.a0.is_some() || c.b0.is_some() {
                    bail!("contamination: give either theta_tilde or a0/b0 overrides, not both");
                }
                ParamVector::from_flat(flat).map_err(|e| anyhow::anyhow!("theta_tilde: {e}"))?
            } else {
                let mut a = design.theta0.a().to_vec();
                let mut b = design.theta0.b().to_vec();
                if let Some(a0) = c.a0 {
                    a[0] = a0;
                }
                if let Some(b0) = c.b0 {
                    b[0] = b0;
                }
                if c.a0.is_none() && c.b0.is_none() {
                    bail!("contamination block needs theta_tilde or at least one override");
                }
                ParamVector::new(a, b).map_err(|e| anyhow::anyhow!("contamination theta: {e}"))?
            };
            let cells: BTreeSet<usize> =
                c.cells.clone().unwrap_or_else(|| vec![0]).into_iter().collect();
            Some(Contamination { cells, theta_tilde })
        }
    };

    Ok(ResolvedStudy {
        options: StudyOptions {
            betas: cfg.betas.clone(),
            replications: cfg.replications,
            seed: cfg.seed,
            ci_alpha: cfg.ci_alpha,
            fit_starts: cfg.fit_starts,
            fit_max_iter: cfg.fit_max_iter,
            fit_grad_tol: cfg.fit_grad_tol,
        },
        design,
        contamination,
        preset,
    })
}
