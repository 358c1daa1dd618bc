use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poisson_wf::harness::config::{ExperimentConfig, ExperimentKind, GridSpec, Overrides};
use poisson_wf::harness::run;
use poisson_wf::Error;

#[derive(Parser)]
#[command(name = "poisson-wf", version, about = "Wirtinger flow experiments for Poisson phase retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean NRMSE per iteration for the heuristic, constant and Fisher step rules
    Trace(Common),
    /// Success rate over a grid of m/n
    Sweep(Common),
    /// NRMSE traces for several background spreads
    Background(Common),
    /// Poisson vs Gaussian least-squares models under both noise types
    Compare(Common),
    /// Closed-form convergence constants over a parameter grid
    Theory(Common),
    /// Monte-Carlo checks of the smoothness, curvature and concentration bounds
    Verify(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Signal dimension
    #[arg(long)]
    n: Option<usize>,
    /// Measurement ratios, e.g. `3,4,5` or `3:5:0.2`
    #[arg(long = "m-over-n")]
    m_over_n: Option<String>,
    /// Noise level
    #[arg(long)]
    eta: Option<f64>,
    /// Step rule: heuristic, constant:<mu> or fisher
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Iterations per solve
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// Radius of the starting neighbourhood relative to ||x||
    #[arg(long)]
    rho: Option<f64>,
    /// Concentration slack used by `theory`
    #[arg(long)]
    delta: Option<f64>,
    /// Probe count for `theory` and `verify`
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot next to the CSV
    #[arg(long)]
    svg: bool,
    /// Success threshold on the final NRMSE (required for unusual eta)
    #[arg(long)]
    threshold: Option<f64>,
    /// TOML file with the same keys (underscores instead of dashes); flags win
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            m_over_n: self.m_over_n.clone().map(GridSpec::Text),
            eta: self.eta,
            trials: self.trials,
            iters: self.iters,
            rule: self.rule.clone(),
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            rho: self.rho,
            delta: self.delta,
            probes: self.probes,
            seed: self.seed,
            out: self.out.clone(),
            svg: self.svg.then_some(true),
            threshold: self.threshold,
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidDimension(_) | Error::ThresholdRequired { .. } | Error::OutOfTheoryRange { .. }
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Trace(c) => (ExperimentKind::Trace, c),
        Command::Sweep(c) => (ExperimentKind::Sweep, c),
        Command::Background(c) => (ExperimentKind::Background, c),
        Command::Compare(c) => (ExperimentKind::Compare, c),
        Command::Theory(c) => (ExperimentKind::Theory, c),
        Command::Verify(c) => (ExperimentKind::Verify, c),
    };

    let result = (|| {
        let file = match &common.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        let merged = file.merged(common.overrides());
        let cfg = ExperimentConfig::resolve(kind, &merged)?;
        run(&cfg, merged.rho.is_some())
    })();

    match result {
        Ok(outcome) => {
            for path in &outcome.written {
                eprintln!("wrote {}", path.display());
            }
            if outcome.all_passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
