//! Experiment drivers behind the `poisson-wf` command-line tool.

pub mod config;
pub mod data;
pub mod experiments;
pub mod output;
pub mod svg;
pub mod verify;

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::theory::empirical_curvature;
use config::{ExperimentConfig, ExperimentKind};
use svg::{line_chart, Series};

pub use config::Overrides;
pub use data::{trial_data, TrialData, TrialSpec};
pub use experiments::{
    run_background_influence, run_convergence_trace, run_model_comparison, run_success_sweep, run_theory_report,
};
pub use verify::run_verify;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    /// False only when a `verify` check failed.
    pub all_passed: bool,
}

fn write(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    written.push(path.to_path_buf());
    Ok(())
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// Runs one command and writes its CSV (and SVG when enabled).
/// `rho_given` marks an explicit basin radius, which narrows `theory` to one point.
pub fn run(cfg: &ExperimentConfig, rho_given: bool) -> Result<RunOutcome> {
    let mut written = Vec::new();
    let mut all_passed = true;
    let out = &cfg.out_path;
    let plot = |s: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        if cfg.svg {
            write(&sibling(out, "", "svg"), s, written)?;
        }
        Ok(())
    };
    match cfg.kind {
        ExperimentKind::Trace => {
            let r = run_convergence_trace(cfg)?;
            write(out, &output::trace_csv(cfg, &r.rows)?, &mut written)?;
            let series = group(&r.rows, |row| row.rule.clone(), |row| (row.iter as f64, row.mean_nrmse));
            plot(&line_chart("mean NRMSE per iteration", "iteration", "NRMSE", &series, true), &mut written)?;
        }
        ExperimentKind::Sweep => {
            let r = run_success_sweep(cfg)?;
            write(out, &output::sweep_csv(cfg, &r.rows)?, &mut written)?;
            let series = vec![Series {
                label: cfg.rule.name(),
                points: r.rows.iter().map(|row| (row.m_over_n, row.success_rate)).collect(),
            }];
            plot(&line_chart("success rate", "m/n", "success rate", &series, false), &mut written)?;
        }
        ExperimentKind::Background => {
            let rows = run_background_influence(cfg)?;
            write(out, &output::background_csv(cfg, &rows)?, &mut written)?;
            let series = group(&rows, |row| format!("alpha1={}", row.alpha1), |row| (row.iter as f64, row.mean_nrmse));
            plot(&line_chart("mean NRMSE by background spread", "iteration", "NRMSE", &series, true), &mut written)?;
        }
        ExperimentKind::Compare => {
            let rows = run_model_comparison(cfg)?;
            write(out, &output::compare_csv(cfg, &rows)?, &mut written)?;
            let series = group(&rows, |row| format!("{} noise, {} model", row.noise_type, row.model), |row| (row.m_over_n, row.mean_final_nrmse));
            plot(&line_chart("final NRMSE by model and noise", "m/n", "NRMSE", &series, true), &mut written)?;
        }
        ExperimentKind::Theory => {
            let rows = run_theory_report(cfg, rho_given)?;
            write(out, &output::theory_csv(&rows)?, &mut written)?;
            if cfg.probes > 0 {
                let n = cfg.n;
                let m = cfg.m_for(cfg.m_over_n_grid[0]);
                let mut reports = Vec::new();
                for (i, c) in rows.iter().enumerate() {
                    let stream = crate::rng::RngStream::new(cfg.master_seed, i as u64).named("theory");
                    let (x, a, obs) = verify::unit_instance(n, m, c.alpha1, c.alpha2, stream.named("instance"))?;
                    let p = empirical_curvature(&x, &a, &obs, c.rho, cfg.probes, stream.named("probes"))?;
                    reports.push((*c, n, m, p));
                }
                write(&sibling(out, "_probes", "csv"), &output::probes_csv(&reports)?, &mut written)?;
            }
            let series = group(
                &rows,
                |c| format!("alpha1={} alpha2={}", c.alpha1, c.alpha2),
                |c| (c.rho, c.lcur_hat),
            );
            plot(&line_chart("curvature constant", "rho", "lcur_hat", &series, false), &mut written)?;
        }
        ExperimentKind::Verify => {
            let rows = run_verify(cfg)?;
            all_passed = rows.iter().all(|r| r.pass);
            write(out, &output::verify_csv(cfg, &rows)?, &mut written)?;
        }
    }
    Ok(RunOutcome { written, all_passed })
}

/// Groups rows into series by key, keeping first-seen order.
fn group<T>(rows: &[T], key: impl Fn(&T) -> String, point: impl Fn(&T) -> (f64, f64)) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for row in rows {
        let k = key(row);
        match series.iter_mut().find(|s| s.label == k) {
            Some(s) => s.points.push(point(row)),
            None => series.push(Series {
                label: k,
                points: vec![point(row)],
            }),
        }
    }
    series
}
