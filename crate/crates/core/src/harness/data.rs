use crate::error::Result;
use crate::measurement::{
    build_observations_with, generate_measurements, generate_signal, sample_background, ComplexSignal,
    MeasurementEnsemble, NoiseModel, ObservationSet,
};
use crate::rng::RngStream;
use crate::solvers::{initialize, Initializer};

/// Parameters of one synthetic problem instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialSpec {
    pub n: usize,
    pub m: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta: f64,
    pub noise: NoiseModel,
    pub rho: f64,
    pub target_intensity: f64,
}

#[derive(Clone, Debug)]
pub struct TrialData {
    pub x: ComplexSignal,
    pub a: MeasurementEnsemble,
    pub obs: ObservationSet,
    pub z0: ComplexSignal,
}

/// Instance for `(master_seed, trial)`. The signal and the start direction
/// depend only on the trial; the ensemble, background and noise are further
/// keyed by `m`, so every command sees the same data for the same key.
///
/// The signal is rescaled to `||x||^2 = target_intensity`, which makes the
/// calibration constant of the ensemble close to one.
pub fn trial_data(master_seed: u64, trial: u64, spec: &TrialSpec) -> Result<TrialData> {
    let root = RngStream::for_trial(master_seed, trial);
    let x = generate_signal(spec.n, root.named("signal"))?.with_norm(spec.target_intensity.sqrt())?;
    let m_key = spec.m as u64;
    let a = generate_measurements(&x, spec.m, spec.target_intensity, root.named("ensemble").child(m_key))?;
    let clean = a.intensities(x.as_slice());
    let b = sample_background(&clean, spec.alpha1, spec.alpha2, root.named("background").child(m_key))?;
    let obs = build_observations_with(&x, &a, &b, spec.eta, spec.noise, root.named("noise").child(m_key))?;
    let z0 = initialize(&x, &a, &obs, Initializer::OraclePerturbation { rho: spec.rho }, root.named("init"))?;
    Ok(TrialData { x, a, obs, z0 })
}
