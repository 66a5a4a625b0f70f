use crate::config;
use crate::manifest::ManifestTimer;
use crate::FitFlags;
use anyhow::{anyhow, bail, Context, Result};
use oneshot_dpd::estimation::{delta_method_se, fit, DeltaTarget, FitConfig, FitResult};
use oneshot_dpd::inference::{
    ci_asymptotic, ci_log_mean, ci_logit_reliability, stress_factor_test, wald_type_test,
    WaldSpec,
};
use oneshot_dpd::model::{mean_lifetime, reliability, Dataset};
use oneshot_dpd::montecarlo::{run_estimator_study, run_test_study, tune_beta};
use oneshot_dpd::robustness::{omega_curve, omega_preset, stress_curve, stress_preset};
use serde_json::{json, Value};
use std::path::Path;

fn fit_config(flags: &FitFlags) -> FitConfig {
    FitConfig {
        beta: flags.beta,
        max_iter: flags.max_iter,
        grad_tol: flags.grad_tol,
        n_starts: flags.starts,
        seed: flags.seed,
    }
}

fn load_dataset(flags: &FitFlags) -> Result<Dataset> {
    Dataset::from_csv_path(&flags.csv).map_err(|e| anyhow!("{e}"))
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_fit(flags: &FitFlags) -> Result<(Dataset, FitResult)> {
    let data = load_dataset(flags)?;
    let fitted = fit(&data, &fit_config(flags)).map_err(|e| anyhow!("{e}"))?;
    Ok((data, fitted))
}

fn fit_json(fitted: &FitResult) -> Value {
    json!({
        "fit": fitted,
        "standard_errors": fitted.standard_errors(),
    })
}

pub fn cmd_fit(flags: &FitFlags, out: Option<&Path>) -> Result<u8> {
    let timer = ManifestTimer::start(
        "fit",
        vec![flags.csv.display().to_string()],
        serde_json::to_value(fit_config(flags))?,
        Some(flags.seed),
    );
    let (_, fitted) = run_fit(flags)?;
    let converged = fitted.converged;
    let mut value = fit_json(&fitted);
    value["manifest"] = serde_json::to_value(timer.finish())?;
    emit(&value, out)?;
    Ok(if converged { 0 } else { 2 })
}

pub fn cmd_report(
    flags: &FitFlags,
    x0: &[f64],
    t0: f64,
    alpha: f64,
    out: Option<&Path>,
) -> Result<u8> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must be in (0,1), got {alpha}");
    }
    let timer = ManifestTimer::start(
        "report",
        vec![flags.csv.display().to_string()],
        json!({ "fit": fit_config(flags), "x0": x0, "t0": t0, "alpha": alpha }),
        Some(flags.seed),
    );
    let (data, fitted) = run_fit(flags)?;
    if x0.len() != data.num_factors() {
        bail!(
            "x0 has {} stress values but the dataset has {} factors",
            x0.len(),
            data.num_factors()
        );
    }
    let mut x = vec![1.0];
    x.extend_from_slice(x0);

    // Coefficient intervals are plain asymptotic.
    let names: Vec<String> = (0..=data.num_factors())
        .map(|j| format!("a{j}"))
        .chain((0..=data.num_factors()).map(|j| format!("b{j}")))
        .collect();
    let ses = fitted.standard_errors();
    let flat = fitted.theta_hat.flatten();
    let coefficients: Vec<Value> = names
        .iter()
        .zip(flat.iter().zip(&ses))
        .map(|(name, (est, se))| {
            let ci = ci_asymptotic(*est, *se, alpha).map_err(|e| anyhow!("{e}"))?;
            Ok(json!({ "name": name, "estimate": est, "se": se, "ci": ci }))
        })
        .collect::<Result<_>>()?;

    // Reliability uses the logit interval, mean lifetime the log one.
    let r_hat = reliability(&fitted.theta_hat, &x, t0).map_err(|e| anyhow!("{e}"))?;
    let se_r = delta_method_se(&fitted, &DeltaTarget::Reliability { x: &x, t: t0 })
        .map_err(|e| anyhow!("{e}"))?;
    let r_ci = ci_logit_reliability(r_hat.clamp(0.0, 1.0), se_r.value, alpha)
        .map_err(|e| anyhow!("{e}"))?;
    let e_hat = mean_lifetime(&fitted.theta_hat, &x).map_err(|e| anyhow!("{e}"))?;
    let se_e = delta_method_se(&fitted, &DeltaTarget::MeanLifetime { x: &x })
        .map_err(|e| anyhow!("{e}"))?;
    let e_ci = ci_log_mean(e_hat, se_e.value, alpha).map_err(|e| anyhow!("{e}"))?;

    let stress_tests: Vec<Value> = (1..=data.num_factors())
        .map(|j| {
            let res = stress_factor_test(&fitted, j).map_err(|e| anyhow!("{e}"))?;
            Ok(json!({ "factor": j, "result": res }))
        })
        .collect::<Result<_>>()?;

    let converged = fitted.converged;
    let mut value = fit_json(&fitted);
    value["coefficients"] = Value::Array(coefficients);
    value["reliability"] = json!({
        "x0": x0, "t0": t0, "estimate": r_hat, "se": se_r.value, "ci": r_ci,
    });
    value["mean_lifetime"] = json!({
        "x0": x0, "estimate": e_hat, "se": se_e.value, "ci": e_ci,
    });
    value["stress_factor_tests"] = Value::Array(stress_tests);
    value["manifest"] = serde_json::to_value(timer.finish())?;
    emit(&value, out)?;
    Ok(if converged { 0 } else { 2 })
}

/// Parse "a0=6.0" style coordinate constraints.
fn parse_nulls(nulls: &[String], num_factors: usize) -> Result<WaldSpec> {
    let p = num_factors + 1;
    let dim = 2 * p;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for entry in nulls {
        let (name, value) = entry
            .split_once('=')
            .with_context(|| format!("constraint {entry:?} is not name=value"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("constraint {entry:?}: bad number"))?;
        let name = name.trim();
        let (block, idx_str) = name.split_at(1);
        let j: usize = idx_str
            .parse()
            .with_context(|| format!("constraint {entry:?}: bad coefficient name"))?;
        let index = match block {
            "a" if j < p => j,
            "b" if j < p => p + j,
            _ => bail!("constraint {entry:?}: coefficient must be a0..a{} or b0..b{}", p - 1, p - 1),
        };
        let mut row = vec![0.0; dim];
        row[index] = 1.0;
        rows.push(row);
        targets.push(value);
    }
    WaldSpec::new(rows, targets).map_err(|e| anyhow!("{e}"))
}

pub fn cmd_test(
    flags: &FitFlags,
    factor: Option<usize>,
    nulls: &[String],
    alpha: f64,
    out: Option<&Path>,
) -> Result<u8> {
    if factor.is_none() && nulls.is_empty() {
        bail!("give --factor J or at least one --null name=value");
    }
    let timer = ManifestTimer::start(
        "test",
        vec![flags.csv.display().to_string()],
        json!({ "fit": fit_config(flags), "factor": factor, "null": nulls, "alpha": alpha }),
        Some(flags.seed),
    );
    let (data, fitted) = run_fit(flags)?;
    if !fitted.converged {
        eprintln!("error: fit did not converge; cannot test");
        return Ok(2);
    }
    let result = match factor {
        Some(j) => stress_factor_test(&fitted, j).map_err(|e| anyhow!("{e}"))?,
        None => {
            let spec = parse_nulls(nulls, data.num_factors())?;
            wald_type_test(&fitted, &spec).map_err(|e| anyhow!("{e}"))?
        }
    };
    let value = json!({
        "manifest": timer.finish(),
        "fit": fitted,
        "alpha": alpha,
        "wald": result,
    });
    emit(&value, out)?;
    Ok(0)
}

pub fn cmd_simulate(
    config_path: &Path,
    out_json: Option<&Path>,
    out_csv: Option<&Path>,
) -> Result<u8> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = config::parse(&text)?;
    let resolved = config::resolve(&cfg)?;
    let timer = ManifestTimer::start(
        "simulate",
        vec![config_path.display().to_string()],
        serde_json::to_value(&text)?,
        Some(cfg.seed),
    );

    let report = run_estimator_study(
        &resolved.design,
        resolved.contamination.as_ref(),
        &resolved.options,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let test_study = match (&cfg.test_study, resolved.preset) {
        (Some(ts), Some(preset)) => Some(
            run_test_study(
                preset,
                &ts.k_values.clone().unwrap_or_else(|| vec![cfg.k_per_cell]),
                &cfg.betas,
                cfg.replications,
                cfg.seed,
                ts.alpha,
                ts.null_a0,
                ts.alt_a0,
                ts.contaminated_a0,
            )
            .map_err(|e| anyhow!("{e}"))?,
        ),
        (Some(_), None) => bail!("test_study needs a named scenario (low|moderate|high)"),
        _ => None,
    };

    // Plot-ready long format.
    let mut csv = String::from("beta,metric,value\n");
    for rep in &report.per_beta {
        for (key, v) in &rep.smae {
            csv.push_str(&format!("{},smae_{key},{v}\n", rep.beta));
        }
        for (key, v) in &rep.coverage {
            csv.push_str(&format!("{},cp_{key},{v}\n", rep.beta));
        }
        for (key, v) in &rep.avg_width {
            csv.push_str(&format!("{},aw_{key},{v}\n", rep.beta));
        }
    }
    if let Some(ts) = &test_study {
        for row in &ts.rows {
            csv.push_str(&format!(
                "{},{}_k{},{}\n",
                row.beta, row.setting, row.k_per_cell, row.rejection_rate
            ));
        }
    }

    let degraded = report.degraded;
    let value = json!({
        "manifest": timer.finish(),
        "report": report,
        "test_study": test_study,
    });
    emit(&value, out_json)?;
    if let Some(path) = out_csv {
        std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if degraded { 2 } else { 0 })
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be from:to:step, got {spec:?}");
    }
    let from: f64 = parts[0].parse().context("grid from")?;
    let to: f64 = parts[1].parse().context("grid to")?;
    let step: f64 = parts[2].parse().context("grid step")?;
    if !(step > 0.0 && to > from) {
        bail!("grid needs to > from and step > 0");
    }
    let n = ((to - from) / step).round() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

pub fn cmd_influence(
    preset: &str,
    betas: &[f64],
    grid: Option<&str>,
    out: Option<&Path>,
) -> Result<u8> {
    let points = match preset {
        "fig1-omega" => {
            let (theta, x, default_grid) = omega_preset();
            let omegas = match grid {
                Some(g) => parse_grid(g)?,
                None => default_grid,
            };
            omega_curve(&theta, x, &omegas, betas).map_err(|e| anyhow!("{e}"))?
        }
        "fig1-x-pos" | "fig1-x-neg" => {
            let (theta, omega, default_grid) = stress_preset(preset == "fig1-x-pos");
            let xs = match grid {
                Some(g) => parse_grid(g)?,
                None => default_grid,
            };
            stress_curve(&theta, omega, &xs, betas).map_err(|e| anyhow!("{e}"))?
        }
        other => bail!("unknown preset {other:?} (fig1-omega | fig1-x-pos | fig1-x-neg)"),
    };
    let mut csv = String::from("omega_or_x,beta,h1,h2\n");
    for p in points {
        csv.push_str(&format!("{},{},{},{}\n", p.at, p.beta, p.h1, p.h2));
    }
    write_or_print(&csv, out)?;
    Ok(0)
}

pub fn cmd_tune(flags: &FitFlags, betas: &[f64], out: Option<&Path>) -> Result<u8> {
    let timer = ManifestTimer::start(
        "tune",
        vec![flags.csv.display().to_string()],
        json!({ "fit": fit_config(flags), "betas": betas }),
        Some(flags.seed),
    );
    let data = load_dataset(flags)?;
    let report = tune_beta(&data, betas, &fit_config(flags)).map_err(|e| anyhow!("{e}"))?;
    let value = json!({
        "manifest": timer.finish(),
        "tune": report,
    });
    emit(&value, out)?;
    Ok(0)
}
