//! C interface to `poisson-wf`.
//!
//! Complex vectors cross the boundary as interleaved `double` arrays
//! (`re0, im0, re1, im1, ...`), so a length-`n` vector takes `2n` doubles.
//! Problems and traces are opaque handles released with their `_free`
//! function. Every fallible call returns a [`PwfStatus`]; the message for the
//! most recent failure on the calling thread is available from
//! [`pwf_last_error_message`].
//!
//! # Safety
//!
//! The contract is shared by every `unsafe` function here: each pointer is
//! either null (reported as `PWF_STATUS_NULL_POINTER`) or valid for the stated
//! number of elements, and handles come from this library and are not used
//! after being freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use poisson_wf::harness::{trial_data, TrialSpec};
use poisson_wf::{
    curvature_constants, gradient, iwf_solve, nrmse, objective, smoothness_constant, wf_solve, ComplexSignal, Error,
    MeasurementEnsemble, ModelKind, NoiseModel, ObservationSet, RngStream, SolverConfig, SolverTrace, StepSizeRule,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PwfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    /// Degenerate data, e.g. a nonpositive Poisson rate or an all-zero ensemble.
    Degenerate = 4,
    OutOfRange = 5,
    /// No reference signal is attached to the problem.
    Unavailable = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PwfModel {
    Poisson = 0,
    GaussianLeastSquares = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PwfRule {
    /// Fixed step `mu`.
    Constant = 0,
    /// `min(1 - exp(-t / 330), 0.2)`
    Heuristic = 1,
    FisherInformation = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PwfSolverOptions {
    pub model: PwfModel,
    pub rule: PwfRule,
    /// Step for [`PwfRule::Constant`].
    pub mu: f64,
    pub max_iters: usize,
    /// Stop once the NRMSE reaches this value (needs a reference signal).
    pub nrmse_tol: f64,
    pub record_every: usize,
    /// The incremental solver uses step `iwf_mu_scale / n`.
    pub iwf_mu_scale: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PwfIterRecord {
    pub iter: usize,
    /// NaN when the problem has no reference signal.
    pub nrmse: f64,
    pub objective: f64,
    pub step: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PwfCurvatureConstants {
    pub u: f64,
    pub l1: f64,
    pub l2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub psi: f64,
    pub varphi: f64,
    pub lcur_hat: f64,
    pub u_smo: f64,
    pub in_region: bool,
}

/// Measurements, backgrounds and observations, plus the true signal and a
/// starting point when the problem was generated.
pub struct PwfProblem {
    x: Option<ComplexSignal>,
    a: MeasurementEnsemble,
    obs: ObservationSet,
    z0: Option<ComplexSignal>,
}

pub struct PwfTrace(SolverTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PwfStatus {
    match e {
        Error::Shape { .. } | Error::InvalidDimension(_) => PwfStatus::ShapeMismatch,
        Error::DegenerateEnsemble | Error::DegenerateIntensity { .. } | Error::SingularEvaluation { .. } | Error::ExcludedDirection => {
            PwfStatus::Degenerate
        }
        Error::OutOfTheoryRange { .. } | Error::IndexOutOfRange { .. } => PwfStatus::OutOfRange,
        _ => PwfStatus::InvalidArgument,
    }
}

/// Internal failure carrying a status and a message.
struct Fail(PwfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: PwfStatus, msg: &str) -> Result<T, Fail> {
    Err(Fail(status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PwfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PwfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PwfStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(PwfStatus::NullPointer, &format!("{what} is null")),
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    match p.as_mut() {
        Some(r) => Ok(r),
        None => fail(PwfStatus::NullPointer, &format!("{what} is null")),
    }
}

unsafe fn doubles<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(PwfStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn doubles_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(PwfStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn complex_from(values: &[f64]) -> Vec<Complex64> {
    values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn signal_from(values: &[f64], n: usize) -> Result<ComplexSignal, Fail> {
    if values.len() != 2 * n {
        return fail(PwfStatus::ShapeMismatch, &format!("expected {} doubles, got {}", 2 * n, values.len()));
    }
    Ok(ComplexSignal::new(complex_from(values))?)
}

fn write_complex(src: &[Complex64], dst: &mut [f64]) -> Result<(), Fail> {
    if dst.len() != 2 * src.len() {
        return fail(PwfStatus::ShapeMismatch, &format!("output needs {} doubles, got {}", 2 * src.len(), dst.len()));
    }
    for (c, d) in src.iter().zip(dst.chunks_exact_mut(2)) {
        d[0] = c.re;
        d[1] = c.im;
    }
    Ok(())
}

fn model_of(m: PwfModel) -> ModelKind {
    match m {
        PwfModel::Poisson => ModelKind::PoissonMle,
        PwfModel::GaussianLeastSquares => ModelKind::GaussianLs,
    }
}

fn solver_config(o: &PwfSolverOptions) -> SolverConfig {
    let rule = match o.rule {
        PwfRule::Constant => StepSizeRule::Constant { mu: o.mu },
        PwfRule::Heuristic => StepSizeRule::heuristic(),
        PwfRule::FisherInformation => StepSizeRule::FisherInfo,
    };
    SolverConfig {
        model: model_of(o.model),
        rule,
        max_iters: o.max_iters,
        nrmse_tol: o.nrmse_tol,
        record_every: o.record_every,
        iwf_mu_scale: o.iwf_mu_scale,
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = out_ref(out, "output handle")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pwf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn pwf_status_name(status: PwfStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        PwfStatus::Ok => b"ok\0",
        PwfStatus::NullPointer => b"null pointer\0",
        PwfStatus::InvalidArgument => b"invalid argument\0",
        PwfStatus::ShapeMismatch => b"shape mismatch\0",
        PwfStatus::Degenerate => b"degenerate data\0",
        PwfStatus::OutOfRange => b"out of range\0",
        PwfStatus::Unavailable => b"unavailable\0",
        PwfStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pwf_solver_options_default() -> PwfSolverOptions {
    let d = SolverConfig::default();
    PwfSolverOptions {
        model: PwfModel::Poisson,
        rule: PwfRule::Constant,
        mu: 0.2,
        max_iters: d.max_iters,
        nrmse_tol: d.nrmse_tol,
        record_every: d.record_every,
        iwf_mu_scale: d.iwf_mu_scale,
    }
}

/// Synthetic instance with `||x||^2 = 2`, calibrated Gaussian rows,
/// log-uniform backgrounds in `[alpha1, alpha2]` times the clean intensity,
/// scaled Poisson noise of level `eta` and a start at relative distance `rho`.
/// Equal `(seed, trial)` give the same instance as the command-line tool.
#[no_mangle]
pub unsafe extern "C" fn pwf_problem_generate(
    n: usize,
    m: usize,
    alpha1: f64,
    alpha2: f64,
    eta: f64,
    rho: f64,
    seed: u64,
    trial: u64,
    out: *mut *mut PwfProblem,
) -> PwfStatus {
    guard(|| {
        let spec = TrialSpec {
            n,
            m,
            alpha1,
            alpha2,
            eta,
            noise: NoiseModel::ScaledPoisson,
            rho,
            target_intensity: 2.0,
        };
        let d = trial_data(seed, trial, &spec)?;
        emit(
            out,
            PwfProblem {
                x: Some(d.x),
                a: d.a,
                obs: d.obs,
                z0: Some(d.z0),
            },
        )
    })
}

/// Problem from caller data: `rows` holds the `m` conjugated measurement
/// vectors row by row (`2mn` doubles), `background` and `observed` hold `m`
/// values each. No reference signal or start is attached.
#[no_mangle]
pub unsafe extern "C" fn pwf_problem_from_data(
    n: usize,
    m: usize,
    rows: *const f64,
    background: *const f64,
    observed: *const f64,
    out: *mut *mut PwfProblem,
) -> PwfStatus {
    guard(|| {
        let len = m.checked_mul(n).and_then(|k| k.checked_mul(2));
        let Some(len) = len else {
            return fail(PwfStatus::InvalidArgument, "m * n overflows");
        };
        let rows = doubles(rows, len, "rows")?;
        let b = doubles(background, m, "background")?.to_vec();
        let y = doubles(observed, m, "observed")?.to_vec();
        let a = MeasurementEnsemble::from_rows(complex_from(rows), m, n)?;
        // the clean intensities are unknown here; only the realized background ratios use them
        let clean: Vec<f64> = y.iter().zip(&b).map(|(y, b)| (y - b).max(0.0)).collect();
        let obs = ObservationSet::from_parts(clean, b, y)?;
        emit(out, PwfProblem { x: None, a, obs, z0: None })
    })
}

/// Releases a problem; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pwf_problem_free(problem: *mut PwfProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

#[no_mangle]
pub unsafe extern "C" fn pwf_problem_dims(problem: *const PwfProblem, n: *mut usize, m: *mut usize) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        *out_ref(n, "n")? = p.a.n();
        *out_ref(m, "m")? = p.a.m();
        Ok(())
    })
}

/// Copies the true signal (`2n` doubles). `Unavailable` for caller data.
#[no_mangle]
pub unsafe extern "C" fn pwf_problem_signal(problem: *const PwfProblem, out: *mut f64, len: usize) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let Some(x) = &p.x else {
            return fail(PwfStatus::Unavailable, "problem has no reference signal");
        };
        write_complex(x.as_slice(), doubles_mut(out, len, "out")?)
    })
}

/// Copies the generated starting point (`2n` doubles).
#[no_mangle]
pub unsafe extern "C" fn pwf_problem_start(problem: *const PwfProblem, out: *mut f64, len: usize) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let Some(z0) = &p.z0 else {
            return fail(PwfStatus::Unavailable, "problem has no starting point");
        };
        write_complex(z0.as_slice(), doubles_mut(out, len, "out")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn pwf_objective(
    problem: *const PwfProblem,
    model: PwfModel,
    z: *const f64,
    len: usize,
    value: *mut f64,
) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let z = signal_from(doubles(z, len, "z")?, p.a.n())?;
        *out_ref(value, "value")? = objective(&z, &p.a, &p.obs, model_of(model))?;
        Ok(())
    })
}

/// Wirtinger gradient at `z`, written to `grad` (`2n` doubles each).
#[no_mangle]
pub unsafe extern "C" fn pwf_gradient(
    problem: *const PwfProblem,
    model: PwfModel,
    z: *const f64,
    len: usize,
    grad: *mut f64,
    grad_len: usize,
) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let z = signal_from(doubles(z, len, "z")?, p.a.n())?;
        let g = gradient(&z, &p.a, &p.obs, model_of(model))?;
        write_complex(&g, doubles_mut(grad, grad_len, "grad")?)
    })
}

/// `min over unit phases u of ||z u - x|| / ||x||` for two length-`n` vectors.
#[no_mangle]
pub unsafe extern "C" fn pwf_nrmse(x: *const f64, z: *const f64, n: usize, value: *mut f64) -> PwfStatus {
    guard(|| {
        let x = signal_from(doubles(x, 2 * n, "x")?, n)?;
        let z = signal_from(doubles(z, 2 * n, "z")?, n)?;
        if x.norm_sqr() == 0.0 {
            return fail(PwfStatus::InvalidArgument, "x must be nonzero");
        }
        *out_ref(value, "value")? = nrmse(&x, &z)?;
        Ok(())
    })
}

unsafe fn start_point(p: &PwfProblem, z0: *const f64, len: usize) -> Result<ComplexSignal, Fail> {
    if z0.is_null() {
        match &p.z0 {
            Some(z) => Ok(z.clone()),
            None => fail(PwfStatus::Unavailable, "no start given and the problem has none"),
        }
    } else {
        signal_from(doubles(z0, len, "z0")?, p.a.n())
    }
}

/// Full-batch Wirtinger flow. A null `z0` uses the problem's own start.
#[no_mangle]
pub unsafe extern "C" fn pwf_wf_solve(
    problem: *const PwfProblem,
    options: *const PwfSolverOptions,
    z0: *const f64,
    len: usize,
    out: *mut *mut PwfTrace,
) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let cfg = solver_config(non_null(options, "options")?);
        let z = start_point(p, z0, len)?;
        let trace = wf_solve(p.x.as_ref(), &p.a, &p.obs, &z, &cfg)?;
        emit(out, PwfTrace(trace))
    })
}

/// Incremental Wirtinger flow on the Poisson objective; `max_iters` counts
/// single-measurement steps and `seed` drives the index sampling.
#[no_mangle]
pub unsafe extern "C" fn pwf_iwf_solve(
    problem: *const PwfProblem,
    options: *const PwfSolverOptions,
    z0: *const f64,
    len: usize,
    seed: u64,
    out: *mut *mut PwfTrace,
) -> PwfStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let cfg = solver_config(non_null(options, "options")?);
        let z = start_point(p, z0, len)?;
        let trace = iwf_solve(p.x.as_ref(), &p.a, &p.obs, &z, &cfg, RngStream::new(seed, 0))?;
        emit(out, PwfTrace(trace))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pwf_trace_free(trace: *mut PwfTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded iterations; 0 for a null trace.
#[no_mangle]
pub unsafe extern "C" fn pwf_trace_len(trace: *const PwfTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.iterations.len())
}

#[no_mangle]
pub unsafe extern "C" fn pwf_trace_record(trace: *const PwfTrace, index: usize, record: *mut PwfIterRecord) -> PwfStatus {
    guard(|| {
        let t = non_null(trace, "trace")?;
        let Some(r) = t.0.iterations.get(index) else {
            return fail(PwfStatus::OutOfRange, &format!("record {index} of {}", t.0.iterations.len()));
        };
        *out_ref(record, "record")? = PwfIterRecord {
            iter: r.iter,
            nrmse: r.nrmse.unwrap_or(f64::NAN),
            objective: r.objective,
            step: r.step,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pwf_trace_final_z(trace: *const PwfTrace, out: *mut f64, len: usize) -> PwfStatus {
    guard(|| {
        let t = non_null(trace, "trace")?;
        write_complex(t.0.final_z.as_slice(), doubles_mut(out, len, "out")?)
    })
}

/// Whether the NRMSE tolerance was reached.
#[no_mangle]
pub unsafe extern "C" fn pwf_trace_converged(trace: *const PwfTrace) -> bool {
    trace.as_ref().is_some_and(|t| t.0.converged)
}

#[no_mangle]
pub unsafe extern "C" fn pwf_smoothness_constant(alpha1: f64, delta: f64, value: *mut f64) -> PwfStatus {
    guard(|| {
        let v = smoothness_constant(alpha1, delta)?;
        *out_ref(value, "value")? = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pwf_curvature_constants(
    alpha1: f64,
    alpha2: f64,
    rho: f64,
    delta: f64,
    out: *mut PwfCurvatureConstants,
) -> PwfStatus {
    guard(|| {
        let c = curvature_constants(alpha1, alpha2, rho, delta)?;
        *out_ref(out, "out")? = PwfCurvatureConstants {
            u: c.u,
            l1: c.l1,
            l2: c.l2,
            phi1: c.phi1,
            phi2: c.phi2,
            psi: c.psi,
            varphi: c.varphi,
            lcur_hat: c.lcur_hat,
            u_smo: c.u_smo,
            in_region: c.in_region,
        };
        Ok(())
    })
}
