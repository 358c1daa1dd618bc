//! Experiment settings: a flat TOML key-value file merged with command-line
//! overrides (flags win), then resolved against per-command defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::objective::StepSizeRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Trace,
    Sweep,
    Background,
    Compare,
    Theory,
    Verify,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Trace => "trace",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Background => "background",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Theory => "theory",
            ExperimentKind::Verify => "verify",
        }
    }
}

/// A grid given either as a list (`"3,4,5"` or `[3, 4, 5]`) or a range
/// `"start:stop:step"` (stop inclusive).
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Text(String),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Text(s) => parse_grid(s)?,
        };
        check_grid(&values)?;
        Ok(values)
    }
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid '{s}'"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h): (f64, f64, f64) = (
                start.parse().map_err(|_| bad())?,
                stop.parse().map_err(|_| bad())?,
                step.parse().map_err(|_| bad())?,
            );
            if !(h > 0.0) || b < a {
                return Err(bad());
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            // round away the accumulated binary error, e.g. 3.5999999999999996
            Ok((0..count).map(|k| ((a + k as f64 * h) * 1e9).round() / 1e9).collect())
        }
        [_] => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

fn check_grid(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config("grid must not be empty".into()));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("grid values must be positive".into()));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Optional settings, as read from a file or the command line.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub n: Option<usize>,
    pub m_over_n: Option<GridSpec>,
    pub eta: Option<f64>,
    pub trials: Option<usize>,
    pub iters: Option<usize>,
    pub rule: Option<String>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub rho: Option<f64>,
    pub delta: Option<f64>,
    pub probes: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub svg: Option<bool>,
    pub threshold: Option<f64>,
}

macro_rules! merge_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        Overrides { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Overrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Values in `top` take precedence over `self`.
    pub fn merged(self, top: Overrides) -> Overrides {
        let base = self;
        merge_fields!(base, top; n, m_over_n, eta, trials, iters, rule, alpha1, alpha2, rho, delta, probes, seed, out, svg, threshold)
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub m_over_n_grid: Vec<f64>,
    pub eta: f64,
    pub trials: usize,
    pub max_iters: usize,
    pub rule: StepSizeRule,
    /// `None` selects the command's built-in list.
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub rho: f64,
    pub delta: f64,
    pub probes: usize,
    pub master_seed: u64,
    pub out_path: PathBuf,
    pub svg: bool,
    pub threshold: Option<f64>,
    /// Mean of `|a_j^* x|^2` after calibration; also `||x||^2`.
    pub target_intensity: f64,
}

pub const DEFAULT_RHO: f64 = 1.0 / 15.0;

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let ratio_grid: Vec<f64> = (0..=10).map(|k| ((3.0 + 0.2 * k as f64) * 1e9).round() / 1e9).collect();
        let (n, grid, eta, trials) = match kind {
            ExperimentKind::Trace | ExperimentKind::Background => (100, vec![5.0], 1e-3, 50),
            ExperimentKind::Sweep => (100, ratio_grid, 1e-3, 100),
            ExperimentKind::Compare => (100, ratio_grid, 0.1, 50),
            ExperimentKind::Theory | ExperimentKind::Verify => (64, vec![20.0], 0.0, 1),
        };
        Self {
            kind,
            n,
            m_over_n_grid: grid,
            eta,
            trials,
            max_iters: 500,
            rule: StepSizeRule::default(),
            alpha1: None,
            alpha2: None,
            rho: DEFAULT_RHO,
            delta: 0.0,
            probes: if kind == ExperimentKind::Verify { 1000 } else { 0 },
            master_seed: 2024,
            out_path: PathBuf::from(format!("{}.csv", kind.name())),
            svg: false,
            threshold: None,
            target_intensity: 2.0,
        }
    }

    pub fn resolve(kind: ExperimentKind, o: &Overrides) -> Result<Self> {
        let mut c = Self::defaults(kind);
        if let Some(n) = o.n {
            c.n = n;
        }
        if let Some(g) = &o.m_over_n {
            c.m_over_n_grid = g.values()?;
        }
        if let Some(v) = o.eta {
            c.eta = v;
        }
        if let Some(v) = o.trials {
            c.trials = v;
        }
        if let Some(v) = o.iters {
            c.max_iters = v;
        }
        if let Some(r) = &o.rule {
            c.rule = r.parse()?;
        }
        c.alpha1 = o.alpha1;
        c.alpha2 = o.alpha2;
        if let Some(v) = o.rho {
            c.rho = v;
        }
        if let Some(v) = o.delta {
            c.delta = v;
        }
        if let Some(v) = o.probes {
            c.probes = v;
        }
        if let Some(v) = o.seed {
            c.master_seed = v;
        }
        if let Some(v) = &o.out {
            c.out_path = v.clone();
        }
        if let Some(v) = o.svg {
            c.svg = v;
        }
        c.threshold = o.threshold;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        check_grid(&self.m_over_n_grid)?;
        if self.m_over_n_grid.iter().any(|r| r * (self.n as f64) < self.n as f64 - 1e-9) {
            return fail("m/n must be at least 1".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be nonnegative, got {}", self.eta));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.max_iters == 0 {
            return fail("iters must be at least 1".into());
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return fail(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let (Some(a1), Some(a2)) = (self.alpha1, self.alpha2) {
            if a1 > a2 {
                return fail(format!("alpha1 = {a1} exceeds alpha2 = {a2}"));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return fail(format!("delta must be nonnegative, got {}", self.delta));
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("threshold must be positive, got {t}"));
            }
        }
        Ok(())
    }

    /// `m = round(ratio * n)`
    pub fn m_for(&self, ratio: f64) -> usize {
        (ratio * self.n as f64).round() as usize
    }

    /// NRMSE below which a trial counts as a success.
    pub fn success_threshold(&self) -> Result<f64> {
        if let Some(t) = self.threshold {
            return Ok(t);
        }
        if self.eta == 1e-3 {
            Ok(0.5e-3)
        } else if self.eta == 0.1 {
            Ok(0.5)
        } else {
            Err(Error::ThresholdRequired { eta: self.eta })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_exact() {
        let c = ExperimentConfig::defaults(ExperimentKind::Sweep);
        assert_eq!(c.m_over_n_grid, vec![3.0, 3.2, 3.4, 3.6, 3.8, 4.0, 4.2, 4.4, 4.6, 4.8, 5.0]);
        assert_eq!(parse_grid("3:5:0.2").unwrap(), c.m_over_n_grid);
        assert_eq!(parse_grid("3, 4,5").unwrap(), vec![3.0, 4.0, 5.0]);
        assert!(parse_grid("3:x:1").is_err());
    }

    #[test]
    fn grid_must_ascend() {
        assert!(GridSpec::List(vec![4.0, 3.0]).values().is_err());
        assert!(GridSpec::List(vec![]).values().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Overrides::from_toml_str("n = 20\neta = 0.1\nm_over_n = \"3,4\"\nrule = \"fisher\"").unwrap();
        let flags = Overrides {
            n: Some(30),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(ExperimentKind::Sweep, &file.merged(flags)).unwrap();
        assert_eq!(c.n, 30);
        assert_eq!(c.eta, 0.1);
        assert_eq!(c.m_over_n_grid, vec![3.0, 4.0]);
        assert_eq!(c.rule, StepSizeRule::FisherInfo);
        let list = Overrides::from_toml_str("m_over_n = [3.0, 5.0]").unwrap();
        assert_eq!(list.m_over_n.unwrap().values().unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Overrides::from_toml_str("bogus = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn thresholds() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Sweep);
        assert_eq!(c.success_threshold().unwrap(), 0.5e-3);
        c.eta = 0.1;
        assert_eq!(c.success_threshold().unwrap(), 0.5);
        c.eta = 0.02;
        assert_eq!(c.success_threshold(), Err(Error::ThresholdRequired { eta: 0.02 }));
        c.threshold = Some(0.01);
        assert_eq!(c.success_threshold().unwrap(), 0.01);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = Overrides {
            trials: Some(0),
            ..Default::default()
        };
        assert!(matches!(ExperimentConfig::resolve(ExperimentKind::Trace, &bad), Err(Error::Config(_))));
        let bad = Overrides {
            rule: Some("constant:0".into()),
            ..Default::default()
        };
        assert!(matches!(ExperimentConfig::resolve(ExperimentKind::Trace, &bad), Err(Error::Config(_))));
    }
}
