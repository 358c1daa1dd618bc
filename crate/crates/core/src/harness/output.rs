//! CSV emission. Every file starts with `#` metadata lines followed by a
//! header row; numbers use Rust's shortest round-trip formatting.

use super::config::ExperimentConfig;
use super::experiments::{BackgroundRow, CompareRow, SweepRow, TraceRow};
use super::verify::CheckRow;
use crate::error::Result;
use crate::theory::{CurvatureConstants, ProbeReport};

pub const NRMSE_NOTE: &str = "nrmse = min over unit phases u of ||z u - x|| / ||x||";
pub const POISSON_NOTE: &str = "poisson noise: y_j = |a_j^* x|^2 + b_j + eta * Poisson(|a_j^* x|^2 + b_j)";
pub const GAUSSIAN_NOTE: &str =
    "gaussian noise: y_j = |a_j^* x|^2 + b_j + N(0, sigma^2) i.i.d., sigma = eta * mean_j(|a_j^* x|^2 + b_j)";

fn num(v: f64) -> String {
    format!("{v}")
}

fn metadata(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        format!("command = {}", cfg.kind.name()),
        format!(
            "n = {}, m_over_n = {:?}, eta = {}, trials = {}, iters = {}, rule = {}, seed = {}",
            cfg.n,
            cfg.m_over_n_grid,
            cfg.eta,
            cfg.trials,
            cfg.max_iters,
            cfg.rule.name(),
            cfg.master_seed
        ),
        format!(
            "signal scaled to ||x||^2 = {t}; rows calibrated to mean |a_j^* x|^2 = {t}; start z0 = x + rho ||x|| u, rho = {r}",
            t = cfg.target_intensity,
            r = cfg.rho
        ),
        NRMSE_NOTE.to_string(),
    ]
}

fn render(meta: &[String], header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut out = String::new();
    for line in meta {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| crate::Error::Io(e.to_string()))?);
    Ok(out)
}

pub fn trace_csv(cfg: &ExperimentConfig, rows: &[TraceRow]) -> Result<String> {
    let mut meta = metadata(cfg);
    meta.push(POISSON_NOTE.into());
    render(
        &meta,
        &["rule", "iter", "mean_nrmse", "mean_objective", "mean_step"],
        rows.iter()
            .map(|r| vec![r.rule.clone(), r.iter.to_string(), num(r.mean_nrmse), num(r.mean_objective), num(r.mean_step)])
            .collect(),
    )
}

pub fn sweep_csv(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Result<String> {
    let mut meta = metadata(cfg);
    meta.push(POISSON_NOTE.into());
    meta.push(format!("success: final nrmse < {}", cfg.success_threshold()?));
    render(
        &meta,
        &["m_over_n", "eta", "rule", "success_rate", "trials", "mean_final_nrmse"],
        rows.iter()
            .map(|r| {
                vec![
                    num(r.m_over_n),
                    num(r.eta),
                    r.rule.clone(),
                    num(r.success_rate),
                    r.trials.to_string(),
                    num(r.mean_final_nrmse),
                ]
            })
            .collect(),
    )
}

pub fn background_csv(cfg: &ExperimentConfig, rows: &[BackgroundRow]) -> Result<String> {
    let mut meta = metadata(cfg);
    meta.push(POISSON_NOTE.into());
    meta.push("background: b_j = s_j |a_j^* x|^2, log s_j uniform on [log alpha1, log alpha2]".into());
    render(
        &meta,
        &["alpha1", "alpha2", "iter", "mean_nrmse"],
        rows.iter()
            .map(|r| vec![num(r.alpha1), num(r.alpha2), r.iter.to_string(), num(r.mean_nrmse)])
            .collect(),
    )
}

pub fn compare_csv(cfg: &ExperimentConfig, rows: &[CompareRow]) -> Result<String> {
    let mut meta = metadata(cfg);
    meta.push(POISSON_NOTE.into());
    meta.push(GAUSSIAN_NOTE.into());
    meta.push("gaussian model: least squares on y - b with step mu / ||z0||^2".into());
    render(
        &meta,
        &["noise_type", "model", "m_over_n", "eta", "mean_final_nrmse", "trials"],
        rows.iter()
            .map(|r| {
                vec![
                    r.noise_type.to_string(),
                    r.model.to_string(),
                    num(r.m_over_n),
                    num(r.eta),
                    num(r.mean_final_nrmse),
                    r.trials.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn theory_csv(rows: &[CurvatureConstants]) -> Result<String> {
    let meta = vec![
        "command = theory".to_string(),
        "lcur_hat evaluated at s = rho; delta enters phi1, phi2 as -delta/4".to_string(),
    ];
    render(
        &meta,
        &["alpha1", "alpha2", "rho", "delta", "U", "L1", "L2", "phi1", "phi2", "psi", "varphi", "lcur_hat", "u_smo", "in_region"],
        rows.iter()
            .map(|c| {
                let mut v: Vec<String> = [c.alpha1, c.alpha2, c.rho, c.delta, c.u, c.l1, c.l2, c.phi1, c.phi2, c.psi, c.varphi, c.lcur_hat, c.u_smo]
                    .iter()
                    .map(|&x| num(x))
                    .collect();
                v.push(c.in_region.to_string());
                v
            })
            .collect(),
    )
}

pub fn probes_csv(rows: &[(CurvatureConstants, usize, usize, ProbeReport)]) -> Result<String> {
    render(
        &["probe reports on noiseless unit-scale instances".to_string()],
        &["alpha1", "alpha2", "rho", "n", "m", "probes", "max_smoothness_ratio", "min_curvature_ratio", "min_normalized_intensity"],
        rows.iter()
            .map(|(c, n, m, p)| {
                vec![
                    num(c.alpha1),
                    num(c.alpha2),
                    num(c.rho),
                    n.to_string(),
                    m.to_string(),
                    p.probes.to_string(),
                    num(p.max_smoothness_ratio),
                    num(p.min_curvature_ratio),
                    num(p.min_normalized_intensity),
                ]
            })
            .collect(),
    )
}

pub fn verify_csv(cfg: &ExperimentConfig, rows: &[CheckRow]) -> Result<String> {
    render(
        &[format!("command = verify, seed = {}", cfg.master_seed)],
        &["check_name", "param_summary", "measured", "bound", "pass"],
        rows.iter()
            .map(|r| vec![r.check_name.clone(), r.param_summary.clone(), num(r.measured), num(r.bound), r.pass.to_string()])
            .collect(),
    )
}
