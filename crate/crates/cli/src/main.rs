mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urnlab::estimators::Regime;

#[derive(Parser, Debug)]
#[command(name = "urnlab", version, about = "Two-colour urn simulations with random multiple drawing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory; write trajectory and estimator CSVs.
    Run(RunArgs),
    /// Simulate many trajectories; write per-trajectory summaries.
    Ensemble(EnsembleArgs),
    /// Monte Carlo coverage of both confidence intervals.
    Coverage(CoverageArgs),
    /// Regenerate the artifacts of one catalog example.
    Reproduce(ReproduceArgs),
    /// Print the hypergeometric pmf.
    Pmf(PmfArgs),
    /// Exact law of the first steps and conditional-mean checks.
    Enumerate(EnumerateArgs),
    /// Print a scenario in config-file form.
    Show(ScenarioArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct ScenarioArgs {
    /// Built-in scenario (1a, 1b, 1c, 1d, 1e, 2, 3a, 3b).
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed; the URNLAB_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for multi-trajectory commands (0: all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum RegimeArg {
    /// Every reinforcement factor observed.
    Full,
    /// Factors only observed for colours present in the sample.
    Censored,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Full => Regime::Full,
            RegimeArg::Censored => Regime::Censored,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Estimation {
    /// Confidence intervals have level 1 - alpha.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = RegimeArg::Full)]
    regime: RegimeArg,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: ScenarioArgs,
    #[arg(long, default_value_t = 1500, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    /// Keep every k-th step in the CSVs (the last step is always kept).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    stride: u64,
    /// Stream index within the master seed.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Also write an SVG of Z_n, M_n and both interval bands.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    estimation: Estimation,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    #[command(flatten)]
    source: ScenarioArgs,
    #[arg(long, default_value_t = 1500, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[command(flatten)]
    estimation: Estimation,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[command(flatten)]
    source: ScenarioArgs,
    /// Step at which the intervals are built.
    #[arg(long, default_value_t = 1500, value_parser = clap::value_parser!(u64).range(2..))]
    ci_step: u64,
    /// Horizon whose proportion stands in for the limit.
    #[arg(long, default_value_t = 50_000, value_parser = clap::value_parser!(u64).range(1..))]
    proxy_horizon: u64,
    /// Minimum ratio proxy-horizon / ci-step.
    #[arg(long, default_value_t = urnlab::oracle::PROXY_FACTOR)]
    proxy_factor: u64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[command(flatten)]
    estimation: Estimation,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// Catalog example (1a, 1b, 1c, 1d, 1e, 2, 3a, 3b).
    #[arg(long)]
    example: String,
    /// Single horizon instead of the documented ones.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    #[command(flatten)]
    estimation: Estimation,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PmfArgs {
    #[arg(long)]
    draws: u64,
    #[arg(long)]
    total: u64,
    #[arg(long)]
    successes: u64,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[command(flatten)]
    source: ScenarioArgs,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(0..=urnlab::oracle::MAX_HORIZON))]
    horizon: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("{a} is not in (0, 1)"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
