//! Full-batch and incremental Wirtinger flow.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::measurement::{norm_sqr, ComplexSignal, MeasurementEnsemble, ObservationSet};
use crate::objective::{self, nrmse, single_weight, step_size, ModelKind, StepSizeRule};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub model: ModelKind,
    pub rule: StepSizeRule,
    pub max_iters: usize,
    /// Stop once `nrmse <= nrmse_tol`; needs a reference signal.
    pub nrmse_tol: f64,
    pub record_every: usize,
    /// IWF step is `iwf_mu_scale / n`.
    pub iwf_mu_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::PoissonMle,
            rule: StepSizeRule::default(),
            max_iters: 500,
            nrmse_tol: 0.0,
            record_every: 1,
            iwf_mu_scale: 0.2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        if !(self.nrmse_tol >= 0.0) {
            return Err(Error::InvalidParameter("nrmse_tol must be nonnegative".into()));
        }
        if !(self.iwf_mu_scale > 0.0 && self.iwf_mu_scale.is_finite()) {
            return Err(Error::InvalidParameter("iwf_mu_scale must be positive".into()));
        }
        self.rule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `None` when no reference signal was supplied.
    pub nrmse: Option<f64>,
    pub objective: f64,
    /// Step applied to this iterate to produce the next one (0 if the gradient vanished).
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub iterations: Vec<IterRecord>,
    pub final_z: ComplexSignal,
    pub converged: bool,
    pub total_iters: usize,
}

impl SolverTrace {
    pub fn final_nrmse(&self) -> Option<f64> {
        self.iterations.last().and_then(|r| r.nrmse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Initializer {
    /// `z0 = x + rho ||x|| u` with `u` uniform on the complex unit sphere.
    OraclePerturbation { rho: f64 },
    /// Power iteration on `(1/m) Σ (y_j - b_j) a_j a_j^*`.
    PowerSpectral { iters: usize },
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let norm = norm_sqr(&v).sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

pub(crate) fn random_unit_vector(n: usize, stream: RngStream) -> Vec<Complex64> {
    random_unit(n, &mut stream.rng())
}

pub fn initialize(
    x: &ComplexSignal,
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
    init: Initializer,
    stream: RngStream,
) -> Result<ComplexSignal> {
    a.check_signal(x)?;
    let x_norm = x.norm();
    if x_norm == 0.0 {
        return Err(Error::InvalidParameter("reference signal must be nonzero".into()));
    }
    match init {
        Initializer::OraclePerturbation { rho } => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")));
            }
            let u = random_unit_vector(x.len(), stream);
            let r = rho * x_norm;
            Ok(ComplexSignal::from_vec_unchecked(
                x.as_slice().iter().zip(&u).map(|(xi, ui)| xi + ui * r).collect(),
            ))
        }
        Initializer::PowerSpectral { iters } => {
            if iters == 0 {
                return Err(Error::InvalidParameter("power iteration needs at least one step".into()));
            }
            if obs.m() != a.m() {
                return Err(Error::Shape {
                    expected: a.m(),
                    found: obs.m(),
                });
            }
            let centered: Vec<f64> = obs.observed.iter().zip(&obs.background).map(|(y, b)| y - b).collect();
            let mut v = random_unit_vector(x.len(), stream);
            for _ in 0..iters {
                let av = a.forward(&v);
                let weighted: Vec<Complex64> = av.iter().zip(&centered).map(|(u, w)| u * *w).collect();
                let next = a.adjoint(&weighted);
                let norm = norm_sqr(&next).sqrt();
                if norm == 0.0 {
                    break;
                }
                v = next.into_iter().map(|c| c / norm).collect();
            }
            let scale = (centered.iter().map(|w| w.max(0.0)).sum::<f64>() / a.m() as f64).sqrt();
            Ok(ComplexSignal::from_vec_unchecked(v.into_iter().map(|c| c * scale).collect()))
        }
    }
}

fn check_problem(a: &MeasurementEnsemble, z0: &ComplexSignal, reference: Option<&ComplexSignal>) -> Result<()> {
    a.check_signal(z0)?;
    if let Some(x) = reference {
        a.check_signal(x)?;
    }
    Ok(())
}

/// `z_{k+1} = z_k - mu_k grad f(z_k)`. The reference signal is only used to
/// record NRMSE and to stop early; it never enters the update.
pub fn wf_solve(
    reference: Option<&ComplexSignal>,
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
    z0: &ComplexSignal,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    cfg.validate()?;
    check_problem(a, z0, reference)?;
    let normalizer = match cfg.model {
        ModelKind::PoissonMle => 1.0,
        ModelKind::GaussianLs => {
            let z0n = z0.norm_sqr();
            if z0n == 0.0 {
                return Err(Error::InvalidParameter("GaussianLs needs a nonzero start".into()));
            }
            1.0 / z0n
        }
    };

    let mut z = z0.clone();
    let mut records = Vec::new();
    let mut k = 0;
    loop {
        let eval = objective::evaluate(&z, a, obs, cfg.model)?;
        let f = eval.objective(obs, cfg.model);
        let grad = eval.gradient(a, obs, cfg.model);
        let err = reference.map(|x| nrmse(x, &z)).transpose()?;
        let step = step_size(cfg.rule, k + 1, &z, &grad, a, obs)?.map(|s| s * normalizer);
        let reached = err.is_some_and(|e| e <= cfg.nrmse_tol);
        let stalled = step.is_none() || norm_sqr(&grad) == 0.0;
        let last = reached || stalled || k == cfg.max_iters;
        if last || k % cfg.record_every == 0 {
            records.push(IterRecord {
                iter: k,
                nrmse: err,
                objective: f,
                step: if stalled { 0.0 } else { step.unwrap_or(0.0) },
            });
        }
        if last {
            break;
        }
        let mu = step.unwrap_or(0.0);
        for (zi, gi) in z.as_mut_slice().iter_mut().zip(&grad) {
            *zi -= gi * mu;
        }
        k += 1;
    }
    Ok(finish(records, z, k, cfg.nrmse_tol))
}

fn finish(records: Vec<IterRecord>, z: ComplexSignal, total_iters: usize, tol: f64) -> SolverTrace {
    let converged = records.last().and_then(|r| r.nrmse).is_some_and(|e| e <= tol);
    SolverTrace {
        iterations: records,
        final_z: z,
        converged,
        total_iters,
    }
}

/// Incremental WF: one uniformly drawn measurement per step, step `iwf_mu_scale / n`.
/// `max_iters` counts single-measurement steps.
pub fn iwf_solve(
    reference: Option<&ComplexSignal>,
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
    z0: &ComplexSignal,
    cfg: &SolverConfig,
    stream: RngStream,
) -> Result<SolverTrace> {
    iwf_solve_with(reference, a, obs, z0, cfg, stream, |_, _| Ok(()))
}

/// As [`iwf_solve`], calling `inspect(step, z)` at every recorded step.
pub fn iwf_solve_with<F>(
    reference: Option<&ComplexSignal>,
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
    z0: &ComplexSignal,
    cfg: &SolverConfig,
    stream: RngStream,
    mut inspect: F,
) -> Result<SolverTrace>
where
    F: FnMut(usize, &ComplexSignal) -> Result<()>,
{
    cfg.validate()?;
    check_problem(a, z0, reference)?;
    if obs.m() != a.m() {
        return Err(Error::Shape {
            expected: a.m(),
            found: obs.m(),
        });
    }
    let mu = cfg.iwf_mu_scale / a.n() as f64;
    let mut rng = stream.rng();
    let mut z = z0.clone();
    let mut records = Vec::new();
    let mut s = 0;
    loop {
        let record = s % cfg.record_every == 0 || s == cfg.max_iters;
        if record {
            inspect(s, &z)?;
            let err = reference.map(|x| nrmse(x, &z)).transpose()?;
            let f = objective::objective(&z, a, obs, ModelKind::PoissonMle)?;
            records.push(IterRecord {
                iter: s,
                nrmse: err,
                objective: f,
                step: mu,
            });
            if s == cfg.max_iters || err.is_some_and(|e| e <= cfg.nrmse_tol) {
                break;
            }
        }
        let j = rng.random_range(0..a.m());
        let row = a.row(j);
        let (w, v) = single_weight(row, z.as_slice(), obs.background[j], obs.observed[j], j)?;
        let coef = v * (w * mu);
        for (zi, r) in z.as_mut_slice().iter_mut().zip(row) {
            *zi -= r.conj() * coef;
        }
        s += 1;
    }
    Ok(finish(records, z, s, cfg.nrmse_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_observations, generate_measurements, generate_signal, sample_background};
    use crate::objective::{align_and_distance, gradient, gradient_single};

    fn instance(n: usize, m: usize, alpha: (f64, f64), eta: f64, seed: u64) -> (ComplexSignal, MeasurementEnsemble, ObservationSet) {
        let s = RngStream::new(seed, 0);
        let x = generate_signal(n, s.named("x")).unwrap();
        let x = x.with_norm(2f64.sqrt()).unwrap();
        let a = generate_measurements(&x, m, 2.0, s.named("a")).unwrap();
        let clean = a.intensities(x.as_slice());
        let b = sample_background(&clean, alpha.0, alpha.1, s.named("b")).unwrap();
        let obs = build_observations(&x, &a, &b, eta, s.named("y")).unwrap();
        (x, a, obs)
    }

    #[test]
    fn stationary_start_converges_immediately() {
        let (x, a, obs) = instance(10, 50, (1.0, 1.0), 0.0, 1);
        let trace = wf_solve(Some(&x), &a, &obs, &x, &SolverConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.total_iters, 0);
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.iterations[0].nrmse, Some(0.0));

        let iwf = iwf_solve(Some(&x), &a, &obs, &x, &SolverConfig { max_iters: 50, ..Default::default() }, RngStream::new(1, 1)).unwrap();
        assert_eq!(iwf.final_z, x);
    }

    #[test]
    fn iwf_fixed_point_without_stopping() {
        let (x, a, obs) = instance(10, 50, (1.0, 1.0), 0.0, 2);
        let cfg = SolverConfig { max_iters: 200, ..Default::default() };
        let trace = iwf_solve(None, &a, &obs, &x, &cfg, RngStream::new(2, 1)).unwrap();
        assert_eq!(trace.final_z, x);
        assert_eq!(trace.total_iters, 200);
    }

    #[test]
    fn oracle_perturbation_radius() {
        let (x, a, obs) = instance(20, 100, (1.0, 1.0), 0.0, 3);
        for i in 0..20 {
            let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 1.0 / 15.0 }, RngStream::new(3, i)).unwrap();
            let d = align_and_distance(&x, &z0).unwrap().distance / x.norm();
            assert!(d <= 1.0 / 15.0 + 1e-15);
        }
        let tiny = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 1e-12 }, RngStream::new(3, 99)).unwrap();
        assert!(nrmse(&x, &tiny).unwrap() < 1e-11);
        assert!(initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 1.0 }, RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn power_spectral_lands_near_signal() {
        let mut good = 0;
        for t in 0..20 {
            let (x, a, obs) = instance(16, 800, (1.0, 1.0), 0.0, 100 + t);
            let z0 = initialize(&x, &a, &obs, Initializer::PowerSpectral { iters: 50 }, RngStream::new(4, t)).unwrap();
            if nrmse(&x, &z0).unwrap() < 0.5 {
                good += 1;
            }
        }
        assert!(good >= 18, "{good}/20 spectral starts within 0.5");
    }

    #[test]
    fn small_step_noiseless_monotone() {
        let (x, a, obs) = instance(16, 160, (1.0, 1.0), 0.0, 5);
        let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 1.0 / 15.0 }, RngStream::new(5, 1)).unwrap();
        let cfg = SolverConfig {
            rule: StepSizeRule::Constant { mu: 0.01 },
            max_iters: 200,
            ..Default::default()
        };
        let trace = wf_solve(Some(&x), &a, &obs, &z0, &cfg).unwrap();
        for w in trace.iterations.windows(2) {
            assert!(w[1].nrmse.unwrap() < w[0].nrmse.unwrap());
        }
    }

    #[test]
    fn reference_does_not_change_iterates() {
        let (x, a, obs) = instance(12, 60, (0.8, 1.2), 1e-3, 6);
        let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 0.05 }, RngStream::new(6, 1)).unwrap();
        for rule in [StepSizeRule::heuristic(), StepSizeRule::FisherInfo, StepSizeRule::Constant { mu: 0.2 }] {
            let cfg = SolverConfig { rule, max_iters: 60, ..Default::default() };
            let with = wf_solve(Some(&x), &a, &obs, &z0, &cfg).unwrap();
            let without = wf_solve(None, &a, &obs, &z0, &cfg).unwrap();
            assert_eq!(with.final_z, without.final_z);
            assert!(without.iterations.iter().all(|r| r.nrmse.is_none()));
            assert!(!without.converged);
        }
    }

    #[test]
    fn record_grid_includes_final() {
        let (x, a, obs) = instance(8, 40, (1.0, 1.0), 1e-3, 7);
        let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 0.05 }, RngStream::new(7, 1)).unwrap();
        let cfg = SolverConfig { max_iters: 23, record_every: 5, ..Default::default() };
        let trace = wf_solve(Some(&x), &a, &obs, &z0, &cfg).unwrap();
        let iters: Vec<usize> = trace.iterations.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 5, 10, 15, 20, 23]);
        assert!(trace.iterations.iter().all(|r| r.step > 0.0));
    }

    #[test]
    fn gaussian_model_recovers_noiseless() {
        let (x, a, obs) = instance(10, 60, (1.0, 1.0), 0.0, 8);
        let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 0.1 }, RngStream::new(8, 1)).unwrap();
        let cfg = SolverConfig { model: ModelKind::GaussianLs, max_iters: 2000, ..Default::default() };
        let trace = wf_solve(Some(&x), &a, &obs, &z0, &cfg).unwrap();
        assert!(trace.final_nrmse().unwrap() < 1e-8, "{:?}", trace.final_nrmse());
        let step = trace.iterations[0].step;
        assert!((step - 0.2 / z0.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn iwf_unbiased_along_path() {
        let (x, a, obs) = instance(6, 36, (0.8, 1.2), 1e-2, 9);
        let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: 0.1 }, RngStream::new(9, 1)).unwrap();
        let cfg = SolverConfig { max_iters: 1000, record_every: 100, ..Default::default() };
        let mut checks = 0;
        iwf_solve_with(Some(&x), &a, &obs, &z0, &cfg, RngStream::new(9, 2), |_, z| {
            let full = gradient(z, &a, &obs, ModelKind::PoissonMle)?;
            let mut avg = [Complex64::new(0.0, 0.0); 6];
            for j in 0..36 {
                for (s, g) in avg.iter_mut().zip(gradient_single(z, &a, &obs, j)?) {
                    *s += g / 36.0;
                }
            }
            let err = avg.iter().zip(&full).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * norm_sqr(&full).sqrt().max(1e-300));
            checks += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(checks, 11);
    }
}
