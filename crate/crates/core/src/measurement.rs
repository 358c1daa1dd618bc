//! Signals, complex Gaussian sensing ensembles, backgrounds and noisy observations.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A complex vector: the ground truth `x` or an iterate `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal(Vec<Complex64>);

impl ComplexSignal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("signal dimension must be at least 1".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("signal entries must be finite".into()));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// Rescales to the given Euclidean norm.
    pub fn with_norm(&self, target: f64) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("cannot rescale a zero signal".into()));
        }
        Ok(self.scaled(Complex64::new(target / norm, 0.0)))
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// `Σ conj(u_j) v_j`
pub(crate) fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// An `m x n` sensing matrix. Row `j` holds `a_j^*`, so `(A z)_j = a_j^* z`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementEnsemble {
    rows: Vec<Complex64>,
    m: usize,
    n: usize,
    /// Calibration constant already folded into `rows`.
    pub scale: f64,
    pub seed: RngStream,
}

impl MeasurementEnsemble {
    /// Builds an ensemble from explicit row-major rows (each row is `a_j^*`).
    pub fn from_rows(rows: Vec<Complex64>, m: usize, n: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDimension("ensemble needs m >= 1 and n >= 1".into()));
        }
        if rows.len() != m * n {
            return Err(Error::Shape {
                expected: m * n,
                found: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("ensemble entries must be finite".into()));
        }
        Ok(Self {
            rows,
            m,
            n,
            scale: 1.0,
            seed: RngStream::new(0, 0),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        &self.rows[j * self.n..(j + 1) * self.n]
    }

    /// `A z`, i.e. the vector of `a_j^* z`.
    pub fn forward(&self, z: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(z.len(), self.n);
        self.rows
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^* v = Σ_j v_j a_j`.
    pub fn adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.m);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (row, &vj) in self.rows.chunks_exact(self.n).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * vj;
            }
        }
        out
    }

    /// `|a_j^* z|^2` for every row.
    pub fn intensities(&self, z: &[Complex64]) -> Vec<f64> {
        self.forward(z).iter().map(|v| v.norm_sqr()).collect()
    }

    pub(crate) fn check_signal(&self, z: &ComplexSignal) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::Shape {
                expected: self.n,
                found: z.len(),
            });
        }
        Ok(())
    }
}

/// Draws `x` with i.i.d. unit-variance complex Gaussian entries.
pub fn generate_signal(n: usize, stream: RngStream) -> Result<ComplexSignal> {
    if n == 0 {
        return Err(Error::InvalidDimension("signal dimension must be at least 1".into()));
    }
    let mut rng = stream.rng();
    loop {
        let values: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng)).collect();
        if norm_sqr(&values) > 0.0 {
            return Ok(ComplexSignal(values));
        }
    }
}

/// Unscaled ensemble with `E[a a^*] = I`.
pub fn gaussian_ensemble(n: usize, m: usize, stream: RngStream) -> Result<MeasurementEnsemble> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if m < n {
        return Err(Error::InvalidDimension(format!("need m >= n, got m = {m}, n = {n}")));
    }
    let mut rng = stream.rng();
    let rows = (0..m * n).map(|_| complex_normal(&mut rng)).collect();
    Ok(MeasurementEnsemble {
        rows,
        m,
        n,
        scale: 1.0,
        seed: stream,
    })
}

/// Gaussian ensemble rescaled so that `mean_j |a_j^* x|^2 == target_mean_intensity`.
pub fn generate_measurements(
    x: &ComplexSignal,
    m: usize,
    target_mean_intensity: f64,
    stream: RngStream,
) -> Result<MeasurementEnsemble> {
    if !(target_mean_intensity > 0.0 && target_mean_intensity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target mean intensity must be positive, got {target_mean_intensity}"
        )));
    }
    if x.norm_sqr() == 0.0 {
        return Err(Error::InvalidParameter("signal must be nonzero".into()));
    }
    let mut ens = gaussian_ensemble(x.len(), m, stream)?;
    let raw_mean = ens.intensities(x.as_slice()).iter().sum::<f64>() / m as f64;
    if !(raw_mean > 0.0) {
        return Err(Error::DegenerateEnsemble);
    }
    let scale = (target_mean_intensity / raw_mean).sqrt();
    for v in ens.rows.iter_mut() {
        *v *= scale;
    }
    ens.scale = scale;
    Ok(ens)
}

/// `b_j = s_j * clean_j` with `log s_j` uniform on `[log alpha1, log alpha2]`.
pub fn sample_background(
    clean_intensity: &[f64],
    alpha1: f64,
    alpha2: f64,
    stream: RngStream,
) -> Result<Vec<f64>> {
    if !(alpha1 > 0.0 && alpha1 <= alpha2 && alpha2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < alpha1 <= alpha2, got alpha1 = {alpha1}, alpha2 = {alpha2}"
        )));
    }
    if let Some(index) = clean_intensity.iter().position(|&c| !(c > 0.0)) {
        return Err(Error::DegenerateIntensity { index });
    }
    let (lo, hi) = (alpha1.ln(), alpha2.ln());
    let mut rng = stream.rng();
    Ok(clean_intensity
        .iter()
        .map(|&c| {
            let u: f64 = rng.random();
            // exp(ln a) need not round-trip to a, so clamp to keep the sandwich exact
            let s = (lo + u * (hi - lo)).exp().clamp(alpha1, alpha2);
            s * c
        })
        .collect())
}

const INVERSION_LIMIT: f64 = 10.0;

/// Exact Poisson draw: sequential-search inversion below 10, PTRS above.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Poisson mean must be finite and nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    Ok(if lambda < INVERSION_LIMIT {
        poisson_inversion(lambda, rng)
    } else {
        poisson_ptrs(lambda, rng)
    })
}

fn poisson_inversion<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        if p == 0.0 {
            break;
        }
        cdf += p;
    }
    k
}

// Hörmann's transformed rejection with squeeze.
fn poisson_ptrs<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// How the additive noise `eta_j` is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseModel {
    /// `eta_j = eta * Poisson(|a_j^* x|^2 + b_j)`; nonnegative with nonzero mean.
    ScaledPoisson,
    /// `eta_j ~ N(0, sigma^2)` i.i.d. with `sigma = eta * mean_j(|a_j^* x|^2 + b_j)`.
    Gaussian,
}

/// Backgrounds, clean intensities, noise and observations for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub clean_intensity: Vec<f64>,
    pub background: Vec<f64>,
    pub noise: Vec<f64>,
    pub observed: Vec<f64>,
    pub eta_level: f64,
    /// Realized `min_j b_j / clean_j`.
    pub alpha1: f64,
    /// Realized `max_j b_j / clean_j`.
    pub alpha2: f64,
}

impl ObservationSet {
    pub fn m(&self) -> usize {
        self.observed.len()
    }

    /// Builds an observation set from explicit data (`noise` is inferred).
    pub fn from_parts(clean_intensity: Vec<f64>, background: Vec<f64>, observed: Vec<f64>) -> Result<Self> {
        let m = clean_intensity.len();
        for len in [background.len(), observed.len()] {
            if len != m {
                return Err(Error::Shape { expected: m, found: len });
            }
        }
        let noise = observed
            .iter()
            .zip(clean_intensity.iter().zip(&background))
            .map(|(y, (c, b))| y - c - b)
            .collect();
        let (alpha1, alpha2) = realized_alphas(&clean_intensity, &background);
        Ok(Self {
            clean_intensity,
            background,
            noise,
            observed,
            eta_level: 0.0,
            alpha1,
            alpha2,
        })
    }
}

fn realized_alphas(clean: &[f64], background: &[f64]) -> (f64, f64) {
    clean
        .iter()
        .zip(background)
        .map(|(c, b)| b / c)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// `y_j = |a_j^* x|^2 + b_j + eta * Poisson(|a_j^* x|^2 + b_j)`.
pub fn build_observations(
    x: &ComplexSignal,
    a: &MeasurementEnsemble,
    background: &[f64],
    eta_level: f64,
    stream: RngStream,
) -> Result<ObservationSet> {
    build_observations_with(x, a, background, eta_level, NoiseModel::ScaledPoisson, stream)
}

pub fn build_observations_with(
    x: &ComplexSignal,
    a: &MeasurementEnsemble,
    background: &[f64],
    eta_level: f64,
    model: NoiseModel,
    stream: RngStream,
) -> Result<ObservationSet> {
    a.check_signal(x)?;
    if background.len() != a.m() {
        return Err(Error::Shape {
            expected: a.m(),
            found: background.len(),
        });
    }
    if let Some(index) = background.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "background must be positive, b[{index}] = {}",
            background[index]
        )));
    }
    if !(eta_level >= 0.0 && eta_level.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be nonnegative, got {eta_level}")));
    }

    let clean = a.intensities(x.as_slice());
    let noise: Vec<f64> = if eta_level == 0.0 {
        vec![0.0; a.m()]
    } else {
        let mut rng = stream.rng();
        match model {
            NoiseModel::ScaledPoisson => clean
                .iter()
                .zip(background)
                .map(|(c, b)| sample_poisson(c + b, &mut rng).map(|k| eta_level * k as f64))
                .collect::<Result<_>>()?,
            NoiseModel::Gaussian => {
                let mean_rate = clean.iter().zip(background).map(|(c, b)| c + b).sum::<f64>() / a.m() as f64;
                let sigma = eta_level * mean_rate;
                (0..a.m())
                    .map(|_| { let g: f64 = StandardNormal.sample(&mut rng); sigma * g })
                    .collect()
            }
        }
    };
    let observed = clean
        .iter()
        .zip(background)
        .zip(&noise)
        .map(|((c, b), e)| c + b + e)
        .collect();
    let (alpha1, alpha2) = realized_alphas(&clean, background);
    Ok(ObservationSet {
        clean_intensity: clean,
        background: background.to_vec(),
        noise,
        observed,
        eta_level,
        alpha1,
        alpha2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(id: u64) -> RngStream {
        RngStream::new(42, id)
    }

    #[test]
    fn signal_rejects_zero_dimension() {
        assert!(matches!(generate_signal(0, stream(0)), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn single_entry_has_unit_second_moment() {
        let draws = 100_000;
        let mean = (0..draws)
            .map(|i| generate_signal(1, RngStream::new(5, i)).unwrap().norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean |x|^2 = {mean}");
    }

    #[test]
    fn normalized_energy_concentrates() {
        let n = 100;
        let mean = (0..1000)
            .map(|i| generate_signal(n, RngStream::new(6, i)).unwrap().norm_sqr() / n as f64)
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 1.0).abs() < 0.05, "mean ||x||^2/n = {mean}");
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_signal(17, stream(1)).unwrap(), generate_signal(17, stream(1)).unwrap());
        let x = generate_signal(8, stream(2)).unwrap();
        assert_eq!(
            generate_measurements(&x, 40, 2.0, stream(3)).unwrap(),
            generate_measurements(&x, 40, 2.0, stream(3)).unwrap()
        );
    }

    #[test]
    fn calibration_hits_target_intensity() {
        let x = generate_signal(100, stream(4)).unwrap();
        let a = generate_measurements(&x, 500, 2.0, stream(5)).unwrap();
        let mean = a.intensities(x.as_slice()).iter().sum::<f64>() / 500.0;
        assert!((mean - 2.0).abs() < 1e-12, "mean = {mean}");
        assert!(a.scale > 0.0);
    }

    #[test]
    fn unit_coordinate_row_power() {
        let mut e1 = vec![Complex64::new(0.0, 0.0); 4];
        e1[0] = Complex64::new(1.0, 0.0);
        let x = ComplexSignal::new(e1).unwrap();
        let a = gaussian_ensemble(4, 50_000, stream(6)).unwrap();
        let mean = (0..a.m()).map(|j| a.row(j)[0].norm_sqr()).sum::<f64>() / a.m() as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean |a_j1|^2 = {mean}");
        let cal = generate_measurements(&x, 50_000, 1.0, stream(6)).unwrap();
        assert!((cal.scale - 1.0).abs() < 0.03);
    }

    #[test]
    fn ensemble_requires_m_at_least_n() {
        assert!(matches!(gaussian_ensemble(5, 4, stream(0)), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn background_degenerate_interval_is_exact() {
        let clean = vec![0.5, 1.0, 2.5, 7.0];
        assert_eq!(sample_background(&clean, 1.0, 1.0, stream(7)).unwrap(), clean);
    }

    #[test]
    fn background_log_ratio_is_centered() {
        let clean: Vec<f64> = (0..100_000).map(|i| 0.1 + (i % 97) as f64).collect();
        let b = sample_background(&clean, 0.01, 100.0, stream(8)).unwrap();
        let mean_log = b.iter().zip(&clean).map(|(b, c)| (b / c).ln()).sum::<f64>() / clean.len() as f64;
        assert!(mean_log.abs() < 0.05, "mean log ratio = {mean_log}");
    }

    #[test]
    fn background_respects_sandwich() {
        let clean: Vec<f64> = (1..=1000).map(|i| i as f64 * 0.01).collect();
        let b = sample_background(&clean, 0.8, 1.2, stream(9)).unwrap();
        for (bj, cj) in b.iter().zip(&clean) {
            assert!(0.8 * cj <= *bj && *bj <= 1.2 * cj);
        }
    }

    #[test]
    fn background_errors() {
        assert!(matches!(sample_background(&[1.0], 0.0, 1.0, stream(0)), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_background(&[1.0], 2.0, 1.0, stream(0)), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            sample_background(&[1.0, 0.0], 0.5, 1.0, stream(0)),
            Err(Error::DegenerateIntensity { index: 1 })
        ));
    }

    fn poisson_moments(lambda: f64, draws: usize, id: u64) -> (f64, f64) {
        let mut rng = stream(id).rng();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let k = sample_poisson(lambda, &mut rng).unwrap() as f64;
            s += k;
            s2 += k * k;
        }
        let mean = s / draws as f64;
        (mean, s2 / draws as f64 - mean * mean)
    }

    #[test]
    fn poisson_zero_rate() {
        let mut rng = stream(10).rng();
        assert!((0..100).all(|_| sample_poisson(0.0, &mut rng).unwrap() == 0));
    }

    #[test]
    fn poisson_rejects_bad_rate() {
        let mut rng = stream(10).rng();
        assert!(sample_poisson(-1.0, &mut rng).is_err());
        assert!(sample_poisson(f64::NAN, &mut rng).is_err());
        assert!(sample_poisson(f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn poisson_small_rate_moments() {
        let (mean, var) = poisson_moments(4.0, 1_000_000, 11);
        assert!((mean - 4.0).abs() < 0.04, "mean = {mean}");
        assert!((var - 4.0).abs() < 0.04, "var = {var}");
    }

    #[test]
    fn poisson_large_rate_mean() {
        let (mean, _) = poisson_moments(50.0, 1_000_000, 12);
        assert!((mean - 50.0).abs() < 0.5, "mean = {mean}");
    }

    #[test]
    fn poisson_moments_within_three_standard_errors() {
        let draws = 1_000_000;
        for (i, lambda) in [0.5, 4.0, 50.0].into_iter().enumerate() {
            let (mean, var) = poisson_moments(lambda, draws, 20 + i as u64);
            let se_mean = (lambda / draws as f64).sqrt();
            // Var of the sample variance is (mu4 - sigma^4)/N = (lambda + 2 lambda^2)/N.
            let se_var = ((lambda + 2.0 * lambda * lambda) / draws as f64).sqrt();
            assert!((mean - lambda).abs() < 3.0 * se_mean, "lambda {lambda}: mean {mean}");
            assert!((var - lambda).abs() < 3.0 * se_var, "lambda {lambda}: var {var}");
        }
    }

    #[test]
    fn poisson_ptrs_matches_pmf() {
        // chi-square against the exact pmf for a rate handled by the rejection branch
        let lambda = 12.5;
        let draws = 200_000;
        let mut rng = stream(30).rng();
        let mut counts = vec![0usize; 40];
        for _ in 0..draws {
            let k = sample_poisson(lambda, &mut rng).unwrap() as usize;
            counts[k.min(39)] += 1;
        }
        let mut chi2 = 0.0;
        let mut cells = 0;
        for (k, &c) in counts.iter().enumerate().take(39) {
            let p = (-lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0)).exp();
            let expected = p * draws as f64;
            if expected > 5.0 {
                chi2 += (c as f64 - expected).powi(2) / expected;
                cells += 1;
            }
        }
        // 99.9% quantile of chi2 with ~25 dof is ~52.6
        assert!(chi2 < 55.0, "chi2 = {chi2} over {cells} cells");
    }

    #[test]
    fn observations_noiseless_identity() {
        let x = generate_signal(10, stream(40)).unwrap();
        let a = generate_measurements(&x, 60, 2.0, stream(41)).unwrap();
        let clean = a.intensities(x.as_slice());
        let obs = build_observations(&x, &a, &clean, 0.0, stream(42)).unwrap();
        assert!(obs.noise.iter().all(|&e| e == 0.0));
        for j in 0..60 {
            assert_eq!(obs.observed[j], obs.clean_intensity[j] + obs.background[j]);
        }
        assert_eq!(obs.alpha1, 1.0);
        assert_eq!(obs.alpha2, 1.0);
    }

    #[test]
    fn observations_construction_identity_with_noise() {
        let x = generate_signal(10, stream(43)).unwrap();
        let a = generate_measurements(&x, 60, 2.0, stream(44)).unwrap();
        let clean = a.intensities(x.as_slice());
        let b = sample_background(&clean, 0.5, 2.0, stream(45)).unwrap();
        let obs = build_observations(&x, &a, &b, 0.1, stream(46)).unwrap();
        for j in 0..60 {
            assert_eq!(obs.observed[j], obs.clean_intensity[j] + obs.background[j] + obs.noise[j]);
        }
        assert!(obs.alpha1 >= 0.5 && obs.alpha2 <= 2.0);
    }

    #[test]
    fn small_noise_mean_tracks_rate() {
        let n = 4;
        let m = 100_000;
        let x = generate_signal(n, stream(47)).unwrap();
        let a = generate_measurements(&x, m, 2.0, stream(48)).unwrap();
        let clean = a.intensities(x.as_slice());
        let obs = build_observations(&x, &a, &clean, 1e-3, stream(49)).unwrap();
        let mean_noise = obs.noise.iter().sum::<f64>() / m as f64;
        let mean_rate = clean.iter().map(|c| 2.0 * c).sum::<f64>() / m as f64;
        assert!((mean_noise / (1e-3 * mean_rate) - 1.0).abs() < 0.05);
    }

    #[test]
    fn large_noise_rms_scale() {
        let m = 100_000;
        let x = generate_signal(4, stream(50)).unwrap();
        let a = generate_measurements(&x, m, 2.0, stream(51)).unwrap();
        let clean = a.intensities(x.as_slice());
        let obs = build_observations(&x, &a, &clean, 0.1, stream(52)).unwrap();
        let rms = (obs.noise.iter().map(|e| e * e).sum::<f64>() / m as f64).sqrt();
        let mean_rate = clean.iter().map(|c| 2.0 * c).sum::<f64>() / m as f64;
        // E[eta^2] = eta^2 (lambda + lambda^2); for exponential clean intensity with
        // mean 2 and b = clean, E[lambda^2] = 4 E[c^2] = 32, E[lambda] = 4: rms = 0.1 sqrt(36)
        let expected = 0.1 * 36f64.sqrt();
        assert!((rms / expected - 1.0).abs() < 0.2, "rms {rms}, expected {expected}");
        assert!(rms / (0.1 * mean_rate) > 0.8 && rms / (0.1 * mean_rate) < 2.0);
    }

    #[test]
    fn gaussian_noise_is_centered_and_homoscedastic() {
        let m = 50_000;
        let x = generate_signal(4, stream(53)).unwrap();
        let a = generate_measurements(&x, m, 2.0, stream(54)).unwrap();
        let clean = a.intensities(x.as_slice());
        let obs = build_observations_with(&x, &a, &clean, 0.1, NoiseModel::Gaussian, stream(55)).unwrap();
        let mean = obs.noise.iter().sum::<f64>() / m as f64;
        let sd = (obs.noise.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        assert!(mean.abs() < 0.01);
        assert!((sd / 0.4 - 1.0).abs() < 0.03, "sd = {sd}");
    }

    #[test]
    fn observation_shape_errors() {
        let x = generate_signal(3, stream(56)).unwrap();
        let a = generate_measurements(&x, 9, 2.0, stream(57)).unwrap();
        assert!(matches!(
            build_observations(&x, &a, &[1.0; 8], 0.0, stream(0)),
            Err(Error::Shape { expected: 9, found: 8 })
        ));
        let y = generate_signal(4, stream(58)).unwrap();
        assert!(matches!(build_observations(&y, &a, &[1.0; 9], 0.0, stream(0)), Err(Error::Shape { .. })));
    }

    #[test]
    fn raw_intensity_is_exponential() {
        // KS distance of |a^* x|^2 for unit x against Exp(1)
        let x = generate_signal(8, stream(60)).unwrap().with_norm(1.0).unwrap();
        let a = gaussian_ensemble(8, 100_000, stream(61)).unwrap();
        let mut v = a.intensities(x.as_slice());
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let cdf = 1.0 - (-t).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS = {ks}");
    }
}
