//! The experiment drivers. Trials run in parallel and are collected in trial
//! order, so results do not depend on scheduling.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::data::{trial_data, TrialSpec};
use crate::error::Result;
use crate::measurement::NoiseModel;
use crate::objective::{ModelKind, StepSizeRule};
use crate::solvers::{wf_solve, IterRecord, SolverConfig};
use crate::theory::{curvature_constants, CurvatureConstants};

pub const BACKGROUND_ALPHAS: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];

fn spec(cfg: &ExperimentConfig, m: usize, alpha1: f64, alpha2: f64, noise: NoiseModel) -> TrialSpec {
    TrialSpec {
        n: cfg.n,
        m,
        alpha1,
        alpha2,
        eta: cfg.eta,
        noise,
        rho: cfg.rho,
        target_intensity: cfg.target_intensity,
    }
}

fn default_alphas(cfg: &ExperimentConfig) -> (f64, f64) {
    let a1 = cfg.alpha1.unwrap_or(1.0);
    (a1, cfg.alpha2.unwrap_or(a1).max(a1))
}

fn solver(cfg: &ExperimentConfig, model: ModelKind, rule: StepSizeRule) -> SolverConfig {
    SolverConfig {
        model,
        rule,
        max_iters: cfg.max_iters,
        nrmse_tol: 0.0,
        record_every: 1,
        ..SolverConfig::default()
    }
}

/// Runs `f` for every trial in parallel, preserving trial order.
fn per_trial<T: Send>(trials: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..trials as u64).into_par_iter().map(&f).collect()
}

/// Pads each run to `len` records by holding its last record, then averages.
fn mean_records(runs: &[Vec<IterRecord>], len: usize) -> Vec<(f64, f64, f64)> {
    let count = runs.len() as f64;
    (0..len)
        .map(|k| {
            let mut acc = (0.0, 0.0, 0.0);
            for run in runs {
                let r = &run[k.min(run.len() - 1)];
                acc.0 += r.nrmse.unwrap_or(f64::NAN);
                acc.1 += r.objective;
                acc.2 += r.step;
            }
            (acc.0 / count, acc.1 / count, acc.2 / count)
        })
        .collect()
}

fn final_nrmse(records: &[IterRecord]) -> f64 {
    records.last().and_then(|r| r.nrmse).unwrap_or(f64::NAN)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub rule: String,
    pub iter: usize,
    pub mean_nrmse: f64,
    pub mean_objective: f64,
    pub mean_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceResult {
    pub rows: Vec<TraceRow>,
    /// Final NRMSE of every trial, per rule.
    pub final_nrmse: Vec<(String, Vec<f64>)>,
    pub m_over_n: f64,
}

/// The three step-size rules compared by the trace command; the constant rule
/// takes its step from the configured rule when that is constant.
pub fn trace_rules(cfg: &ExperimentConfig) -> Vec<StepSizeRule> {
    let constant = match cfg.rule {
        StepSizeRule::Constant { .. } => cfg.rule,
        _ => StepSizeRule::default(),
    };
    vec![StepSizeRule::heuristic(), constant, StepSizeRule::FisherInfo]
}

pub fn run_convergence_trace(cfg: &ExperimentConfig) -> Result<TraceResult> {
    let ratio = cfg.m_over_n_grid[0];
    let (a1, a2) = default_alphas(cfg);
    let s = spec(cfg, cfg.m_for(ratio), a1, a2, NoiseModel::ScaledPoisson);
    let rules = trace_rules(cfg);
    // runs[trial][rule]
    let runs = per_trial(cfg.trials, |t| {
        let d = trial_data(cfg.master_seed, t, &s)?;
        rules
            .iter()
            .map(|&rule| Ok(wf_solve(Some(&d.x), &d.a, &d.obs, &d.z0, &solver(cfg, ModelKind::PoissonMle, rule))?.iterations))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    for (i, rule) in rules.iter().enumerate() {
        let per_rule: Vec<Vec<IterRecord>> = runs.iter().map(|r| r[i].clone()).collect();
        let name = rule.name();
        for (k, (nrmse, obj, step)) in mean_records(&per_rule, cfg.max_iters + 1).into_iter().enumerate() {
            rows.push(TraceRow {
                rule: name.clone(),
                iter: k,
                mean_nrmse: nrmse,
                mean_objective: obj,
                mean_step: step,
            });
        }
        finals.push((name, per_rule.iter().map(|r| final_nrmse(r)).collect()));
    }
    Ok(TraceResult {
        rows,
        final_nrmse: finals,
        m_over_n: ratio,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub m_over_n: f64,
    pub eta: f64,
    pub rule: String,
    pub success_rate: f64,
    pub trials: usize,
    pub mean_final_nrmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Per grid point, the per-trial success indicators.
    pub successes: Vec<Vec<bool>>,
}

/// A trial succeeds when its NRMSE after `max_iters` iterations is below the threshold.
pub fn run_success_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let threshold = cfg.success_threshold()?;
    let (a1, a2) = default_alphas(cfg);
    let solver_cfg = solver(cfg, ModelKind::PoissonMle, cfg.rule);
    let mut rows = Vec::new();
    let mut successes = Vec::new();
    for &ratio in &cfg.m_over_n_grid {
        let s = spec(cfg, cfg.m_for(ratio), a1, a2, NoiseModel::ScaledPoisson);
        let finals = per_trial(cfg.trials, |t| {
            let d = trial_data(cfg.master_seed, t, &s)?;
            Ok(final_nrmse(&wf_solve(Some(&d.x), &d.a, &d.obs, &d.z0, &solver_cfg)?.iterations))
        })?;
        let ok: Vec<bool> = finals.iter().map(|&e| e < threshold).collect();
        rows.push(SweepRow {
            m_over_n: ratio,
            eta: cfg.eta,
            rule: cfg.rule.name(),
            success_rate: ok.iter().filter(|&&b| b).count() as f64 / cfg.trials as f64,
            trials: cfg.trials,
            mean_final_nrmse: mean(&finals),
        });
        successes.push(ok);
    }
    Ok(SweepResult { rows, successes })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub iter: usize,
    pub mean_nrmse: f64,
}

/// `(alpha1, alpha2)` settings: the configured pair, or the built-in list with `alpha2 = 1/alpha1`.
pub fn background_settings(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    match cfg.alpha1 {
        Some(a1) => {
            let a2 = cfg.alpha2.unwrap_or(1.0 / a1);
            vec![(a1.min(a2), a1.max(a2))]
        }
        None => BACKGROUND_ALPHAS.iter().map(|&a| (a, 1.0 / a)).collect(),
    }
}

pub fn run_background_influence(cfg: &ExperimentConfig) -> Result<Vec<BackgroundRow>> {
    let ratio = cfg.m_over_n_grid[0];
    let solver_cfg = solver(cfg, ModelKind::PoissonMle, cfg.rule);
    let mut rows = Vec::new();
    for (a1, a2) in background_settings(cfg) {
        let s = spec(cfg, cfg.m_for(ratio), a1, a2, NoiseModel::ScaledPoisson);
        let runs = per_trial(cfg.trials, |t| {
            let d = trial_data(cfg.master_seed, t, &s)?;
            Ok(wf_solve(Some(&d.x), &d.a, &d.obs, &d.z0, &solver_cfg)?.iterations)
        })?;
        for (k, (nrmse, _, _)) in mean_records(&runs, cfg.max_iters + 1).into_iter().enumerate() {
            rows.push(BackgroundRow {
                alpha1: a1,
                alpha2: a2,
                iter: k,
                mean_nrmse: nrmse,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub noise_type: &'static str,
    pub model: &'static str,
    pub m_over_n: f64,
    pub eta: f64,
    pub mean_final_nrmse: f64,
    pub trials: usize,
}

pub fn noise_name(noise: NoiseModel) -> &'static str {
    match noise {
        NoiseModel::ScaledPoisson => "poisson",
        NoiseModel::Gaussian => "gaussian",
    }
}

/// Both models on identical data under both noise types. The Gaussian
/// least-squares solver uses the configured constant step divided by `||z0||^2`.
pub fn run_model_comparison(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    let (a1, a2) = default_alphas(cfg);
    let rule = match cfg.rule {
        StepSizeRule::Constant { .. } => cfg.rule,
        _ => StepSizeRule::default(),
    };
    let models = [ModelKind::PoissonMle, ModelKind::GaussianLs];
    let mut rows = Vec::new();
    for noise in [NoiseModel::ScaledPoisson, NoiseModel::Gaussian] {
        for &ratio in &cfg.m_over_n_grid {
            let s = spec(cfg, cfg.m_for(ratio), a1, a2, noise);
            let finals = per_trial(cfg.trials, |t| {
                let d = trial_data(cfg.master_seed, t, &s)?;
                models
                    .iter()
                    .map(|&model| Ok(final_nrmse(&wf_solve(Some(&d.x), &d.a, &d.obs, &d.z0, &solver(cfg, model, rule))?.iterations)))
                    .collect::<Result<Vec<f64>>>()
            })?;
            for (i, model) in models.iter().enumerate() {
                let v: Vec<f64> = finals.iter().map(|f| f[i]).collect();
                rows.push(CompareRow {
                    noise_type: noise_name(noise),
                    model: model.name(),
                    m_over_n: ratio,
                    eta: cfg.eta,
                    mean_final_nrmse: mean(&v),
                    trials: cfg.trials,
                });
            }
        }
    }
    Ok(rows)
}

pub const THEORY_ALPHA1: [f64; 3] = [0.8, 0.9, 1.0];
pub const THEORY_ALPHA2: [f64; 4] = [0.8, 1.0, 1.1, 1.2];
pub const THEORY_RHO: [f64; 6] = [0.02, 0.05, 1.0 / 15.0, 0.1, 0.12, 0.15];

/// `(alpha1, alpha2, rho)` triples: the configured point if any of the three
/// was given, otherwise the built-in grid (pairs with `alpha2 < alpha1` skipped).
pub fn theory_grid(cfg: &ExperimentConfig, rho_given: bool) -> Vec<(f64, f64, f64)> {
    if cfg.alpha1.is_some() || cfg.alpha2.is_some() || rho_given {
        let (a1, a2) = match (cfg.alpha1, cfg.alpha2) {
            (Some(a1), Some(a2)) => (a1, a2),
            (Some(a1), None) => (a1, a1.max(1.2)),
            (None, Some(a2)) => (0.8f64.min(a2), a2),
            (None, None) => (0.8, 1.2),
        };
        return vec![(a1, a2, cfg.rho)];
    }
    let mut grid = Vec::new();
    for &a1 in &THEORY_ALPHA1 {
        for &a2 in THEORY_ALPHA2.iter().filter(|&&a2| a2 >= a1) {
            for &rho in &THEORY_RHO {
                grid.push((a1, a2, rho));
            }
        }
    }
    grid
}

pub fn run_theory_report(cfg: &ExperimentConfig, rho_given: bool) -> Result<Vec<CurvatureConstants>> {
    theory_grid(cfg, rho_given)
        .into_iter()
        .map(|(a1, a2, rho)| curvature_constants(a1, a2, rho, cfg.delta))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::harness::config::ExperimentKind;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            trials: 3,
            max_iters: 30,
            m_over_n_grid: vec![4.0, 6.0],
            ..ExperimentConfig::defaults(kind)
        }
    }

    #[test]
    fn trace_shapes() {
        let cfg = small(ExperimentKind::Trace);
        let r = run_convergence_trace(&cfg).unwrap();
        assert_eq!(r.rows.len(), 3 * 31);
        assert_eq!(r.final_nrmse.len(), 3);
        let first = &r.rows[0];
        assert_eq!((first.rule.as_str(), first.iter), ("heuristic", 0));
        assert!(first.mean_nrmse > 0.04 && first.mean_nrmse <= 1.0 / 15.0);
    }

    #[test]
    fn sweep_rows_cover_grid() {
        let cfg = small(ExperimentKind::Sweep);
        let r = run_success_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        for (row, ok) in r.rows.iter().zip(&r.successes) {
            assert_eq!(row.trials, 3);
            assert_eq!(row.success_rate, ok.iter().filter(|&&b| b).count() as f64 / 3.0);
        }
    }

    #[test]
    fn sweep_needs_threshold_for_unusual_eta() {
        let mut cfg = small(ExperimentKind::Sweep);
        cfg.eta = 0.05;
        assert_eq!(run_success_sweep(&cfg).unwrap_err(), Error::ThresholdRequired { eta: 0.05 });
    }

    #[test]
    fn background_pairs() {
        let mut cfg = small(ExperimentKind::Background);
        assert_eq!(background_settings(&cfg).len(), 5);
        cfg.alpha1 = Some(0.5);
        assert_eq!(background_settings(&cfg), vec![(0.5, 2.0)]);
        let rows = run_background_influence(&cfg).unwrap();
        assert_eq!(rows.len(), 31);
    }

    #[test]
    fn compare_rows() {
        let mut cfg = small(ExperimentKind::Compare);
        cfg.trials = 2;
        let rows = run_model_comparison(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.mean_final_nrmse.is_finite()));
    }

    #[test]
    fn theory_grid_and_point() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Theory);
        let rows = run_theory_report(&cfg, false).unwrap();
        assert_eq!(rows.len(), (4 + 3 + 3) * 6);
        let mut cfg = cfg;
        cfg.rho = 0.17;
        assert!(matches!(run_theory_report(&cfg, true), Err(Error::OutOfTheoryRange { .. })));
    }
}
