//! Closed-form convergence constants and Monte-Carlo probes of the smoothness,
//! curvature, concentration and gradient-Lipschitz bounds.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::{inner, norm_sqr, ComplexSignal, MeasurementEnsemble, ObservationSet};
use crate::objective::{align_and_distance, evaluate, ModelKind};
use crate::rng::RngStream;
use crate::solvers::random_unit_vector;

/// `(2 sqrt(76015) - 276) / 2477`
pub fn rho1() -> f64 {
    (2.0 * 76015f64.sqrt() - 276.0) / 2477.0
}

/// `(8075 - sqrt(45678865)) / 990`
pub fn t2() -> f64 {
    (8075.0 - 45678865f64.sqrt()) / 990.0
}

/// `(2 sqrt(39) - 12) / 3`, the largest admissible basin radius.
pub fn rho2() -> f64 {
    (2.0 * 39f64.sqrt() - 12.0) / 3.0
}

/// `(1 + 1/(2 sqrt(alpha1))) (1 + delta)`
pub fn smoothness_constant(alpha1: f64, delta: f64) -> Result<f64> {
    if !(alpha1 > 0.0 && alpha1.is_finite()) || !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need alpha1 > 0 and delta >= 0, got alpha1 = {alpha1}, delta = {delta}"
        )));
    }
    Ok((1.0 + 1.0 / (2.0 * alpha1.sqrt())) * (1.0 + delta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho: f64,
    pub delta: f64,
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
    pub rho1: f64,
    pub t2: f64,
    pub rho2: f64,
}

/// Upper limit on `alpha2` for the given `(alpha1, rho)`; the region is
/// `alpha1 <= alpha2 < region_upper(alpha1, rho)`.
pub fn region_upper(alpha1: f64, rho: f64) -> f64 {
    let (r1, t2) = (rho1(), t2());
    let slope = if rho <= r1 {
        3.0
    } else {
        3.0 - (3.0 - t2) * (rho - r1) / (1.0 / 6.0 - r1)
    };
    slope * alpha1 - (1.0 + rho).powi(2)
}

pub fn in_region(alpha1: f64, alpha2: f64, rho: f64) -> bool {
    rho > 0.0 && rho <= rho2() && alpha1 > 0.0 && alpha1 <= alpha2 && alpha2 < region_upper(alpha1, rho)
}

pub fn curvature_constants(alpha1: f64, alpha2: f64, rho: f64, delta: f64) -> Result<CurvatureConstants> {
    if !(alpha1 > 0.0 && alpha1 <= alpha2 && alpha2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < alpha1 <= alpha2, got alpha1 = {alpha1}, alpha2 = {alpha2}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    let max = rho2();
    if !(rho > 0.0 && rho <= max) {
        return Err(Error::OutOfTheoryRange { rho, max });
    }
    let u = (1.0 + rho).powi(2) + alpha2;
    let l1 = (1.0 - rho).powi(2) + alpha1;
    let l2 = alpha1;
    let phi1 = (1.0 - 6.0 * rho) / (4.0 * u) - rho * rho / (16.0 * l1) - delta / 4.0;
    let phi2 = (9.0 + 16.0 * rho * rho) / (32.0 * u) - 3.0 / (32.0 * l2) - delta / 4.0;
    let psi = 63.0 / (128.0 * u) - 9.0 / (128.0 * l2);
    let varphi = 81.0 * u * rho * rho / (u * u * (7.0 + 16.0 * u * psi));
    let second = (2.0 - 3.0 * rho + rho * rho) / u * (1.0 - delta);
    let lcur_hat = ((phi1 + phi2 - varphi) / 4.0).min(second);
    Ok(CurvatureConstants {
        alpha1,
        alpha2,
        rho,
        delta,
        u,
        l1,
        l2,
        phi1,
        phi2,
        psi,
        varphi,
        lcur_hat,
        u_smo: smoothness_constant(alpha1, delta)?,
        in_region: in_region(alpha1, alpha2, rho),
        rho1: rho1(),
        t2: t2(),
        rho2: max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeReport {
    /// Max over probes of `||grad f(z)|| / dist(x, z)`.
    pub max_smoothness_ratio: f64,
    /// Min over probes of `Re <grad f(z), z - x e^{i phi(z)}> / dist(x, z)^2`.
    pub min_curvature_ratio: f64,
    /// `min_j |a_j^* x| / ||x||`
    pub min_normalized_intensity: f64,
    pub probes: usize,
    pub rho: f64,
}

/// Per-probe `(smoothness ratio, curvature ratio)`.
pub fn probe_ratios(
    x: &ComplexSignal,
    a: &MeasurementEnsemble,
    obs: &ObservationSet,
    rho: f64,
    probes: usize,
    stream: RngStream,
) -> Result<Vec<(f64, f64)>> {
    a.check_signal(x)?;
    if probes == 0 {
        return Err(Error::InvalidParameter("need at least one probe".into()));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let x_norm = x.norm();
    (0..probes as u64)
        .into_par_iter()
        .map(|i| {
            let s = stream.child(i);
            let dir = random_unit_vector(x.len(), s.named("direction"));
            let mut rng = s.named("radius").rng();
            // 1 - U lies in (0, 1], so r > 0
            let r = (1.0 - rng.random::<f64>()) * rho * x_norm;
            let z = ComplexSignal::from_vec_unchecked(
                x.as_slice().iter().zip(&dir).map(|(xi, d)| xi + d * r).collect(),
            );
            let eval = evaluate(&z, a, obs, ModelKind::PoissonMle)?;
            let g = eval.gradient(a, obs, ModelKind::PoissonMle);
            let al = align_and_distance(x, &z)?;
            let dist = al.distance;
            let ph: Vec<Complex64> = al.h.iter().map(|h| h * al.phase).collect();
            let smooth = norm_sqr(&g).sqrt() / dist;
            let curv = inner(&g, &ph).re / (dist * dist);
            Ok((smooth, curv))
        })
        .collect()
}

fn min_normalized_intensity(x: &ComplexSignal, a: &MeasurementEnsemble) -> f64 {
    let x_norm = x.norm();
    a.forward(x.as_slice()).iter().map(|v| v.norm() / x_norm).fold(f64::INFINITY, f64::min)
}

fn probe_report(x: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, rho: f64, probes: usize, stream: RngStream) -> Result<ProbeReport> {
    let ratios = probe_ratios(x, a, obs, rho, probes, stream)?;
    Ok(ProbeReport {
        max_smoothness_ratio: ratios.iter().map(|r| r.0).fold(0.0, f64::max),
        min_curvature_ratio: ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        min_normalized_intensity: min_normalized_intensity(x, a),
        probes,
        rho,
    })
}

/// Samples `z = x + r u` with `r` uniform in `(0, rho ||x||]` and reports
/// the largest `||grad f(z)|| / dist(x, z)`.
pub fn empirical_smoothness(x: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, rho: f64, probes: usize, stream: RngStream) -> Result<ProbeReport> {
    probe_report(x, a, obs, rho, probes, stream)
}

/// Same probe distribution; the report's `min_curvature_ratio` is the quantity of interest.
pub fn empirical_curvature(x: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, rho: f64, probes: usize, stream: RngStream) -> Result<ProbeReport> {
    probe_report(x, a, obs, rho, probes, stream)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub measured: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl InequalityCheck {
    fn new(name: &'static str, measured: f64, lower: f64, upper: f64) -> Self {
        Self {
            name,
            measured,
            lower,
            upper,
            pass: lower <= measured && measured <= upper,
        }
    }
}

/// Evaluates the isometry bound for `x` and `h` and the five indicator-weighted
/// concentration inequalities. Both vectors are normalized; `h` is rotated so
/// that `h^* x` is real and nonnegative.
pub fn empirical_concentration(x: &ComplexSignal, h_tilde: &ComplexSignal, a: &MeasurementEnsemble, delta: f64) -> Result<Vec<InequalityCheck>> {
    a.check_signal(x)?;
    a.check_signal(h_tilde)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let x = x.with_norm(1.0)?;
    let h = h_tilde.with_norm(1.0)?;
    let p = inner(x.as_slice(), h.as_slice());
    if p.norm() >= 1.0 - 1e-12 {
        return Err(Error::ExcludedDirection);
    }
    let h = if p.norm() > 0.0 { h.scaled(p.conj() / p.norm()) } else { h };
    let r = inner(h.as_slice(), x.as_slice()).re;

    let m = a.m() as f64;
    let ax = a.forward(x.as_slice());
    let ah = a.forward(h.as_slice());
    let (mut iso_x, mut iso_h) = (0.0, 0.0);
    let (mut c1, mut c2, mut c2p, mut c3, mut c4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (vx, vh) in ax.iter().zip(&ah) {
        let qx = vx.norm_sqr();
        let qh = vh.norm_sqr();
        iso_x += qx;
        iso_h += qh;
        // h^* a a^* x = conj(a^* h) (a^* x)
        let cross = (vh.conj() * vx).re;
        if qx > qh {
            c1 += cross;
            c2 += qx;
            c3 += cross * cross / qx;
        } else {
            c2p += qx;
            if qx > 0.0 {
                c4 += cross * cross / qx;
            }
        }
    }
    let r2 = r * r;
    Ok(vec![
        InequalityCheck::new("isometry_x", iso_x / m, 1.0 - delta, 1.0 + delta),
        InequalityCheck::new("isometry_h", iso_h / m, 1.0 - delta, 1.0 + delta),
        InequalityCheck::new("cross_above", c1 / m, r / 2.0 - delta, r / 2.0 + delta),
        InequalityCheck::new("energy_above", c2 / m, 0.5 - delta, 0.75 + delta),
        InequalityCheck::new("energy_below", c2p / m, 0.25 - delta, 0.5 + delta),
        InequalityCheck::new("projected_above", c3 / m, 0.125 + 7.0 * r2 / 32.0 - delta, 0.25 + r2 / 4.0 + delta),
        InequalityCheck::new("projected_below", c4 / m, 0.25 + r2 / 4.0 - delta, 0.375 + 9.0 * r2 / 32.0 + delta),
    ])
}

/// Max over random pairs `||h1|| = ||h2|| = s` of
/// `|Re <grad f(x + h1) - grad f(x + h2), h2>| / (s ||h1 - h2||)`.
pub fn empirical_gradient_lipschitz(x: &ComplexSignal, a: &MeasurementEnsemble, obs: &ObservationSet, s: f64, pairs: usize, stream: RngStream) -> Result<f64> {
    a.check_signal(x)?;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!("s must lie in (0, 1), got {s}")));
    }
    if pairs == 0 {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    let grad_at = |h: &[Complex64]| -> Result<Vec<Complex64>> {
        let z = ComplexSignal::from_vec_unchecked(x.as_slice().iter().zip(h).map(|(a, b)| a + b).collect());
        Ok(evaluate(&z, a, obs, ModelKind::PoissonMle)?.gradient(a, obs, ModelKind::PoissonMle))
    };
    let ratios: Vec<Option<f64>> = (0..pairs as u64)
        .into_par_iter()
        .map(|i| {
            let st = stream.child(i);
            let h1: Vec<Complex64> = random_unit_vector(x.len(), st.named("h1")).into_iter().map(|v| v * s).collect();
            let h2: Vec<Complex64> = random_unit_vector(x.len(), st.named("h2")).into_iter().map(|v| v * s).collect();
            lipschitz_ratio(&h1, &h2, s, &grad_at)
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().flatten().fold(0.0, f64::max))
}

/// `None` when `h1 == h2`.
pub fn lipschitz_ratio<G>(h1: &[Complex64], h2: &[Complex64], s: f64, grad_at: &G) -> Result<Option<f64>>
where
    G: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let diff: Vec<Complex64> = h1.iter().zip(h2).map(|(a, b)| a - b).collect();
    let dn = norm_sqr(&diff).sqrt();
    if dn == 0.0 {
        return Ok(None);
    }
    let g1 = grad_at(h1)?;
    let g2 = grad_at(h2)?;
    let dg: Vec<Complex64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
    Ok(Some(inner(&dg, h2).re.abs() / (s * dn)))
}
