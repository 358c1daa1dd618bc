//! Poisson likelihood and Gaussian least-squares objectives, their Wirtinger
//! gradients, phase-aligned distance and step-size rules.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::{inner, norm_sqr, ComplexSignal, MeasurementEnsemble, ObservationSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// `(1/m) Σ (|a_j^* z|^2 + b_j - y_j log(|a_j^* z|^2 + b_j))`
    #[default]
    PoissonMle,
    /// `(1/2m) Σ (|a_j^* z|^2 - (y_j - b_j))^2`
    GaussianLs,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::PoissonMle => "poisson",
            ModelKind::GaussianLs => "gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSizeRule {
    /// `min(1 - exp(-t / t0), cap)` with `t` counted from 1.
    Heuristic { t0: f64, cap: f64 },
    Constant { mu: f64 },
    /// `||g||^2 / ((1/m) Σ D_j |a_j^* g|^2)`, `D_j = |a_j^* z|^2 / (|a_j^* z|^2 + b_j)`.
    FisherInfo,
}

impl Default for StepSizeRule {
    fn default() -> Self {
        StepSizeRule::Constant { mu: 0.2 }
    }
}

impl StepSizeRule {
    pub fn heuristic() -> Self {
        StepSizeRule::Heuristic { t0: 330.0, cap: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSizeRule::Heuristic { t0, cap } => t0 > 0.0 && cap > 0.0 && t0.is_finite() && cap.is_finite(),
            StepSizeRule::Constant { mu } => mu > 0.0 && mu.is_finite(),
            StepSizeRule::FisherInfo => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step-size rule {self:?}")))
        }
    }

    /// Short label used in CSV output: `heuristic`, `constant:0.2`, `fisher`.
    pub fn name(&self) -> String {
        match self {
            StepSizeRule::Heuristic { .. } => "heuristic".into(),
            StepSizeRule::Constant { mu } => format!("constant:{mu}"),
            StepSizeRule::FisherInfo => "fisher".into(),
        }
    }
}

impl std::str::FromStr for StepSizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let rule = match s {
            "heuristic" => StepSizeRule::heuristic(),
            "fisher" => StepSizeRule::FisherInfo,
            "constant" => StepSizeRule::default(),
            _ => match s.strip_prefix("constant:") {
                Some(mu) => StepSizeRule::Constant {
                    mu: mu
                        .parse()
                        .map_err(|_| Error::Config(format!("bad step size in rule '{s}'")))?,
                },
                None => return Err(Error::Config(format!("unknown step-size rule '{s}'"))),
            },
        };
        rule.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(rule)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    /// Unit phase `e^{i phi}` minimizing `||z e^{-i phi} - x||`.
    pub phase: Complex64,
    pub distance: f64,
    /// `conj(phase) z - x`
    pub h: Vec<Complex64>,
}

pub fn align_and_distance(x: &ComplexSignal, z: &ComplexSignal) -> Result<AlignmentResult> {
    if x.len() != z.len() {
        return Err(Error::Shape {
            expected: x.len(),
            found: z.len(),
        });
    }
    let p = inner(x.as_slice(), z.as_slice());
    let abs = p.norm();
    let phase = if abs > 0.0 { p / abs } else { Complex64::new(1.0, 0.0) };
    let rot = phase.conj();
    let h: Vec<Complex64> = z.as_slice().iter().zip(x.as_slice()).map(|(zj, xj)| rot * zj - xj).collect();
    // ||h|| avoids the cancellation in ||x||^2 + ||z||^2 - 2|p| near the optimum
    let distance = norm_sqr(&h).sqrt();
    Ok(AlignmentResult { phase, distance, h })
}

/// `dist(z, x) / ||x||`
pub fn nrmse(x: &ComplexSignal, z: &ComplexSignal) -> Result<f64> {
    Ok(align_and_distance(x, z)?.distance / x.norm())
}

/// `A z` together with the Poisson rates `|a_j^* z|^2 + b_j`.
pub(crate) struct Evaluation {
    pub az: Vec<Complex64>,
    pub intensity: Vec<f64>,
}

fn check_inputs(z: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet) -> Result<()> {
    a.check_signal(z)?;
    if obs.m() != a.m() || obs.background.len() != a.m() {
        return Err(Error::Shape {
            expected: a.m(),
            found: obs.m(),
        });
    }
    Ok(())
}

pub(crate) fn evaluate(z: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, model: ModelKind) -> Result<Evaluation> {
    check_inputs(z, a, obs)?;
    let az = a.forward(z.as_slice());
    let intensity: Vec<f64> = az.iter().map(|v| v.norm_sqr()).collect();
    if model == ModelKind::PoissonMle {
        for (j, (q, b)) in intensity.iter().zip(&obs.background).enumerate() {
            let rate = q + b;
            if !(rate > 0.0) {
                return Err(Error::SingularEvaluation { index: j, value: rate });
            }
        }
    }
    Ok(Evaluation { az, intensity })
}

impl Evaluation {
    pub fn objective(&self, obs: &ObservationSet, model: ModelKind) -> f64 {
        let m = self.intensity.len() as f64;
        let sum: f64 = match model {
            ModelKind::PoissonMle => self
                .intensity
                .iter()
                .zip(obs.background.iter().zip(&obs.observed))
                .map(|(q, (b, y))| {
                    let rate = q + b;
                    rate - y * rate.ln()
                })
                .sum(),
            ModelKind::GaussianLs => {
                self.intensity
                    .iter()
                    .zip(obs.background.iter().zip(&obs.observed))
                    .map(|(q, (b, y))| (q - (y - b)).powi(2))
                    .sum::<f64>()
                    / 2.0
            }
        };
        sum / m
    }

    /// Per-measurement weight `w_j` such that the gradient is `(1/m) Σ w_j a_j a_j^* z`.
    pub fn weights(&self, obs: &ObservationSet, model: ModelKind) -> Vec<f64> {
        let it = self.intensity.iter().zip(obs.background.iter().zip(&obs.observed));
        match model {
            ModelKind::PoissonMle => it.map(|(q, (b, y))| 1.0 - y / (q + b)).collect(),
            ModelKind::GaussianLs => it.map(|(q, (b, y))| q - (y - b)).collect(),
        }
    }

    pub fn gradient(&self, a: &MeasurementEnsemble, obs: &ObservationSet, model: ModelKind) -> Vec<Complex64> {
        let inv_m = 1.0 / a.m() as f64;
        let weighted: Vec<Complex64> = self
            .weights(obs, model)
            .iter()
            .zip(&self.az)
            .map(|(w, v)| v * (w * inv_m))
            .collect();
        a.adjoint(&weighted)
    }
}

pub fn objective(z: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, model: ModelKind) -> Result<f64> {
    Ok(evaluate(z, a, obs, model)?.objective(obs, model))
}

/// Wirtinger gradient: the directional derivative along `d` is `2 Re <grad, d>`.
pub fn gradient(z: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, model: ModelKind) -> Result<Vec<Complex64>> {
    Ok(evaluate(z, a, obs, model)?.gradient(a, obs, model))
}

/// Single-measurement Poisson gradient `(1 - y_j / (|a_j^* z|^2 + b_j)) a_j a_j^* z`.
pub fn gradient_single(z: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, j: usize) -> Result<Vec<Complex64>> {
    check_inputs(z, a, obs)?;
    if j >= a.m() {
        return Err(Error::IndexOutOfRange { index: j, len: a.m() });
    }
    let row = a.row(j);
    let (w, v) = single_weight(row, z.as_slice(), obs.background[j], obs.observed[j], j)?;
    let coef = v * w;
    Ok(row.iter().map(|r| r.conj() * coef).collect())
}

/// Returns `(w_j, a_j^* z)`.
pub(crate) fn single_weight(row: &[Complex64], z: &[Complex64], b: f64, y: f64, j: usize) -> Result<(f64, Complex64)> {
    let v: Complex64 = row.iter().zip(z).map(|(r, zk)| r * zk).sum();
    let rate = v.norm_sqr() + b;
    if !(rate > 0.0) {
        return Err(Error::SingularEvaluation { index: j, value: rate });
    }
    Ok((1.0 - y / rate, v))
}

/// Step length for global iteration `t >= 1`. Returns `None` when the Fisher
/// rule meets a vanishing gradient (the iterate is stationary).
pub fn step_size(
    rule: StepSizeRule,
    t: usize,
    z: &ComplexSignal,
    grad: &[Complex64],
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
) -> Result<Option<f64>> {
    rule.validate()?;
    match rule {
        StepSizeRule::Heuristic { t0, cap } => Ok(Some((1.0 - (-(t as f64) / t0).exp()).min(cap))),
        StepSizeRule::Constant { mu } => Ok(Some(mu)),
        StepSizeRule::FisherInfo => {
            check_inputs(z, a, obs)?;
            if grad.len() != a.n() {
                return Err(Error::Shape {
                    expected: a.n(),
                    found: grad.len(),
                });
            }
            let g2 = norm_sqr(grad);
            if g2 == 0.0 {
                return Ok(None);
            }
            let az = a.forward(z.as_slice());
            let ag = a.forward(grad);
            let denom = az
                .iter()
                .zip(&ag)
                .zip(&obs.background)
                .map(|((v, u), b)| {
                    let q = v.norm_sqr();
                    q / (q + b) * u.norm_sqr()
                })
                .sum::<f64>()
                / a.m() as f64;
            if !(denom > 0.0) {
                return Ok(None);
            }
            Ok(Some(g2 / denom))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_observations, generate_measurements, generate_signal, sample_background};
    use crate::rng::RngStream;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sig(v: Vec<Complex64>) -> ComplexSignal {
        ComplexSignal::new(v).unwrap()
    }

    fn instance(n: usize, m: usize, eta: f64, seed: u64) -> (ComplexSignal, MeasurementEnsemble, ObservationSet) {
        let s = RngStream::new(seed, 0);
        let x = generate_signal(n, s.named("x")).unwrap();
        let a = generate_measurements(&x, m, 2.0, s.named("a")).unwrap();
        let clean = a.intensities(x.as_slice());
        let b = sample_background(&clean, 0.8, 1.2, s.named("b")).unwrap();
        let obs = build_observations(&x, &a, &b, eta, s.named("y")).unwrap();
        (x, a, obs)
    }

    fn scalar_problem() -> (MeasurementEnsemble, ObservationSet) {
        let a = MeasurementEnsemble::from_rows(vec![c(1.0, 0.0)], 1, 1).unwrap();
        let obs = ObservationSet::from_parts(vec![4.0], vec![4.0], vec![8.0]).unwrap();
        (a, obs)
    }

    #[test]
    fn scalar_objective_value() {
        let (a, obs) = scalar_problem();
        let f = objective(&sig(vec![c(2.0, 0.0)]), &a, &obs, ModelKind::PoissonMle).unwrap();
        assert!((f - (8.0 - 8.0 * 8f64.ln())).abs() < 1e-12);
        assert!((f + 8.6355).abs() < 1e-4);
        let g = gradient(&sig(vec![c(2.0, 0.0)]), &a, &obs, ModelKind::PoissonMle).unwrap();
        assert_eq!(g[0], c(0.0, 0.0));
    }

    #[test]
    fn scalar_gradient_closed_form() {
        let (a, obs) = scalar_problem();
        let z = c(1.5, -0.5);
        let g = gradient(&sig(vec![z]), &a, &obs, ModelKind::PoissonMle).unwrap();
        let expected = z * (1.0 - 8.0 / (z.norm_sqr() + 4.0));
        assert!((g[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn truth_minimizes_along_ray() {
        let (x, a, obs) = instance(6, 40, 0.0, 1);
        let f_x = objective(&x, &a, &obs, ModelKind::PoissonMle).unwrap();
        for i in 0..=100 {
            let t = 0.5 + i as f64 / 100.0;
            let f = objective(&x.scaled(c(t, 0.0)), &a, &obs, ModelKind::PoissonMle).unwrap();
            assert!(f >= f_x - 1e-14, "t = {t}");
        }
    }

    #[test]
    fn gaussian_zero_residual_at_truth() {
        let (x, a, obs) = instance(6, 40, 0.0, 2);
        // (c + b) - b recovers c only up to rounding
        assert!(objective(&x, &a, &obs, ModelKind::GaussianLs).unwrap() < 1e-28);
    }

    #[test]
    fn noiseless_gradient_vanishes_exactly() {
        let (x, a, obs) = instance(8, 40, 0.0, 3);
        let g = gradient(&x, &a, &obs, ModelKind::PoissonMle).unwrap();
        assert!(g.iter().all(|v| *v == c(0.0, 0.0)));
        for j in 0..40 {
            assert!(gradient_single(&x, &a, &obs, j).unwrap().iter().all(|v| *v == c(0.0, 0.0)));
        }
    }

    #[test]
    fn single_gradients_average_to_full() {
        let (_, a, obs) = instance(4, 12, 0.01, 4);
        let z = generate_signal(4, RngStream::new(4, 9)).unwrap();
        let full = gradient(&z, &a, &obs, ModelKind::PoissonMle).unwrap();
        let mut avg = [c(0.0, 0.0); 4];
        for j in 0..12 {
            let gj = gradient_single(&z, &a, &obs, j).unwrap();
            // dense recomputation of the single term
            let row = a.row(j);
            let v: Complex64 = row.iter().zip(z.as_slice()).map(|(r, zk)| r * zk).sum();
            let w = 1.0 - obs.observed[j] / (v.norm_sqr() + obs.background[j]);
            for k in 0..4 {
                assert!((gj[k] - row[k].conj() * v * w).norm() < 1e-14);
                avg[k] += gj[k] / 12.0;
            }
        }
        let err: f64 = avg.iter().zip(&full).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-12 * norm_sqr(&full).sqrt());
        assert!(matches!(
            gradient_single(&z, &a, &obs, 12),
            Err(Error::IndexOutOfRange { index: 12, len: 12 })
        ));
    }

    #[test]
    fn finite_difference_agreement() {
        for model in [ModelKind::PoissonMle, ModelKind::GaussianLs] {
            let (_, a, obs) = instance(8, 40, 0.01, 5);
            let mut rng = RngStream::new(5, 1).rng();
            let z = generate_signal(8, RngStream::new(5, 2)).unwrap();
            let g = gradient(&z, &a, &obs, model).unwrap();
            let eps = 1e-6 * z.norm();
            for _ in 0..16 {
                let d: Vec<Complex64> = (0..8).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
                let shift = |s: f64| sig(z.as_slice().iter().zip(&d).map(|(zk, dk)| zk + dk * s).collect());
                let fd = (objective(&shift(eps), &a, &obs, model).unwrap() - objective(&shift(-eps), &a, &obs, model).unwrap())
                    / (2.0 * eps);
                let an = 2.0 * inner(&g, &d).re;
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{model:?}: fd {fd}, analytic {an}");
            }
        }
    }

    #[test]
    fn singular_evaluation_is_reported() {
        let a = MeasurementEnsemble::from_rows(vec![c(1.0, 0.0), c(0.0, 1.0)], 2, 1).unwrap();
        let obs = ObservationSet::from_parts(vec![1.0, 1.0], vec![1.0, 0.0], vec![2.0, 1.0]).unwrap();
        let z = sig(vec![c(0.0, 0.0)]);
        assert_eq!(
            objective(&z, &a, &obs, ModelKind::PoissonMle),
            Err(Error::SingularEvaluation { index: 1, value: 0.0 })
        );
    }

    #[test]
    fn alignment_examples() {
        let x = sig(vec![c(1.0, 2.0), c(-0.5, 0.3)]);
        let r = align_and_distance(&x, &x).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.h.iter().all(|v| v.norm() == 0.0));
        let r = align_and_distance(&x, &x.scaled(c(0.0, 1.0))).unwrap();
        assert!(r.distance < 1e-15);
        assert!((r.phase - c(0.0, 1.0)).norm() < 1e-15);

        let e1 = sig(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let e2 = sig(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let r = align_and_distance(&e1, &e2).unwrap();
        assert_eq!(r.phase, c(1.0, 0.0));
        assert!((r.distance - 2f64.sqrt()).abs() < 1e-15);
        // brute-force scan over phases
        let best = (0..1_000_000)
            .map(|k| {
                let u = Complex64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 1e6);
                (c(1.0, 0.0) * u - 0.0).norm_sqr() + 1.0
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        assert!((best - r.distance).abs() < 1e-6);
    }

    #[test]
    fn alignment_beats_phase_grid() {
        let x = generate_signal(5, RngStream::new(6, 0)).unwrap();
        let z = generate_signal(5, RngStream::new(6, 1)).unwrap();
        let r = align_and_distance(&x, &z).unwrap();
        assert!((r.phase.norm() - 1.0).abs() < 1e-12);
        let d2 = (x.norm_sqr() + z.norm_sqr() - 2.0 * inner(x.as_slice(), z.as_slice()).norm()).max(0.0);
        assert!((r.distance - d2.sqrt()).abs() < 1e-12);
        for k in 0..360 {
            let u = Complex64::from_polar(1.0, (k as f64).to_radians());
            let d = x.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a * u - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(r.distance <= d + 1e-12);
        }
    }

    #[test]
    fn heuristic_and_constant_steps() {
        let (x, a, obs) = instance(3, 9, 0.0, 7);
        let g = vec![c(0.0, 0.0); 3];
        let h = StepSizeRule::heuristic();
        assert_eq!(step_size(h, 100, &x, &g, &a, &obs).unwrap(), Some(0.2));
        let s50 = step_size(h, 50, &x, &g, &a, &obs).unwrap().unwrap();
        assert!((s50 - (1.0 - (-50.0f64 / 330.0).exp())).abs() < 1e-15);
        assert!((s50 - 0.1406).abs() < 1e-4);
        for t in [1, 7, 500] {
            assert_eq!(step_size(StepSizeRule::Constant { mu: 0.2 }, t, &x, &g, &a, &obs).unwrap(), Some(0.2));
        }
    }

    #[test]
    fn fisher_step_small_background_limit() {
        let (x, a, mut obs) = instance(4, 20, 0.0, 8);
        obs.background.iter_mut().for_each(|b| *b = 1e-300);
        let z = generate_signal(4, RngStream::new(8, 1)).unwrap();
        let g = gradient(&z, &a, &obs, ModelKind::PoissonMle).unwrap();
        let step = step_size(StepSizeRule::FisherInfo, 1, &z, &g, &a, &obs).unwrap().unwrap();
        let ag = a.forward(&g);
        let expected = 20.0 * norm_sqr(&g) / norm_sqr(&ag);
        assert!((step / expected - 1.0).abs() < 1e-12);
        let zero = vec![c(0.0, 0.0); 4];
        assert_eq!(step_size(StepSizeRule::FisherInfo, 1, &x, &zero, &a, &obs).unwrap(), None);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("heuristic".parse::<StepSizeRule>().unwrap(), StepSizeRule::heuristic());
        assert_eq!("fisher".parse::<StepSizeRule>().unwrap(), StepSizeRule::FisherInfo);
        assert_eq!("constant:0.05".parse::<StepSizeRule>().unwrap(), StepSizeRule::Constant { mu: 0.05 });
        assert!("constant:-1".parse::<StepSizeRule>().is_err());
        assert!("newton".parse::<StepSizeRule>().is_err());
        assert_eq!(StepSizeRule::Constant { mu: 0.2 }.name(), "constant:0.2");
    }
}
