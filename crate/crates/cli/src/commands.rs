use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use urnlab::estimators::{self, censored_warning, Inference, Regime, SizePlugIn};
use urnlab::oracle::{self, CoverageConfig};
use urnlab::pmf::hypergeom_table;
use urnlab::scenarios::{self, Scenario};

use crate::{svg, Command, Common, CoverageArgs, EnsembleArgs, EnumerateArgs, Estimation, PmfArgs, ReproduceArgs, RunArgs, ScenarioArgs};

/// Failure of a command, split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or scenario description: exit 2.
    Config(String),
    /// Failure while running: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<urnlab::Error> for CliError {
    fn from(e: urnlab::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => run(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Coverage(a) => coverage(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Pmf(a) => pmf(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Show(a) => {
            print!("{}", load(&a)?.to_toml());
            Ok(())
        }
    }
}

fn load(source: &ScenarioArgs) -> Result<Scenario> {
    match (&source.scenario, &source.config) {
        (Some(name), _) => builtin(name),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Scenario::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        (None, None) => Err(CliError::Config("one of --scenario or --config is required".into())),
    }
}

fn builtin(name: &str) -> Result<Scenario> {
    scenarios::catalog(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown scenario `{name}` (available: {})",
            scenarios::CATALOG_NAMES.join(", ")
        ))
    })
}

/// `--seed`, unless `URNLAB_SEED` is set.
fn seed(common: &Common) -> Result<u64> {
    match std::env::var("URNLAB_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Config(format!("URNLAB_SEED={v:?}: {e}"))),
        Err(_) => Ok(common.seed),
    }
}

fn output_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("output directory {}: {e}", path.display())))
}

fn inference<'a>(scenario: &'a Scenario, est: &Estimation) -> Inference<'a> {
    let regime = Regime::from(est.regime);
    if regime == Regime::Censored {
        if let Some(w) = censored_warning(&scenario.sample_size) {
            eprintln!("warning: {w}");
        }
    }
    Inference {
        regime,
        size: SizePlugIn::for_scenario(scenario),
        alpha: est.alpha,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_error(path))
}

/// One simulated path and where its files go.
#[derive(Clone, Copy)]
struct RunSpec<'a> {
    dir: &'a Path,
    prefix: &'a str,
    horizon: u64,
    seed: u64,
    stream: u64,
    stride: u64,
    plot: bool,
}

/// Trajectory, estimator and (optionally) plot files under `spec.dir`.
fn write_run(spec: &RunSpec<'_>, scenario: &Scenario, inference: &Inference<'_>) -> Result<Vec<PathBuf>> {
    let RunSpec { dir, prefix, horizon, seed, stream, stride, plot } = *spec;
    let (trajectory, snapshots) = estimators::track(scenario, horizon, seed, stream, stride, inference)?;
    let mut written = Vec::new();
    let path = dir.join(format!("{prefix}trajectory.csv"));
    write_file(&path, |w| trajectory.write_csv(w))?;
    written.push(path);
    let path = dir.join(format!("{prefix}estimators.csv"));
    write_file(&path, |w| estimators::write_snapshots(w, &snapshots))?;
    written.push(path);
    if plot {
        let path = dir.join(format!("{prefix}plot.svg"));
        let title = format!("scenario {}, seed {seed}, horizon {horizon}", scenario.name);
        let doc = svg::render(&title, &snapshots, 1.0 - inference.alpha);
        write_file(&path, |w| w.write_all(doc.as_bytes()))?;
        written.push(path);
    }
    if let Some(last) = snapshots.last() {
        println!("scenario {} (hash {}), seed {seed}, stream {stream}", scenario.name, scenario.hash());
        println!("n = {}  Z_n = {:.6}  M_n = {:.6}  S_n = {}", last.n, last.z, last.m, trajectory.records.last().map_or(0, |r| r.total()));
        if let (Some(z), Some(m)) = (last.ci_z, last.ci_m) {
            println!(
                "{:.0}% intervals: Z_n-centred [{:.6}, {:.6}], M_n-centred [{:.6}, {:.6}]",
                100.0 * z.level,
                z.lo(),
                z.hi(),
                m.lo(),
                m.hi()
            );
        }
    }
    Ok(written)
}

fn run(a: RunArgs) -> Result<()> {
    let scenario = load(&a.source)?;
    let seed = seed(&a.common)?;
    let inference = inference(&scenario, &a.estimation);
    output_dir(&a.common.out)?;
    let spec = RunSpec {
        dir: &a.common.out,
        prefix: "",
        horizon: a.horizon,
        seed,
        stream: a.stream,
        stride: a.stride,
        plot: a.plot,
    };
    let files = write_run(&spec, &scenario, &inference)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let scenario = load(&a.source)?;
    let seed = seed(&a.common)?;
    let inference = inference(&scenario, &a.estimation);
    output_dir(&a.common.out)?;
    let rows = pool(a.common.workers)?.install(|| oracle::ensemble(&scenario, a.horizon, a.reps, seed, &inference))?;
    let path = a.common.out.join("ensemble.csv");
    write_file(&path, |w| oracle::write_ensemble_csv(w, &rows))?;
    let quantiles = a.common.out.join("ensemble_quantiles.csv");
    write_file(&quantiles, |w| oracle::write_ensemble_quantiles(w, &rows))?;
    let mut table = Vec::new();
    oracle::write_ensemble_quantiles(&mut table, &rows).map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&table));
    println!("wrote {}", path.display());
    println!("wrote {}", quantiles.display());
    Ok(())
}

fn coverage(a: CoverageArgs) -> Result<()> {
    let scenario = load(&a.source)?;
    let seed = seed(&a.common)?;
    let inference = inference(&scenario, &a.estimation);
    output_dir(&a.common.out)?;
    let cfg = CoverageConfig {
        ci_step: a.ci_step,
        proxy_horizon: a.proxy_horizon,
        reps: a.reps,
        master_seed: seed,
        proxy_factor: a.proxy_factor,
    };
    if cfg.proxy_horizon < cfg.proxy_factor.saturating_mul(cfg.ci_step) {
        return Err(CliError::Config(format!(
            "--proxy-horizon {} must be at least {} x --ci-step {}",
            cfg.proxy_horizon, cfg.proxy_factor, cfg.ci_step
        )));
    }
    let report = pool(a.common.workers)?.install(|| oracle::coverage(&scenario, &cfg, &inference))?;
    let path = a.common.out.join("coverage.csv");
    write_file(&path, |w| oracle::write_coverage_csv(w, std::slice::from_ref(&report)))?;
    print!("{report}");
    println!("wrote {}", path.display());
    Ok(())
}

/// Horizons documented for each catalog example.
pub fn documented_horizons(example: &str) -> &'static [u64] {
    match example {
        "3a" => &[5000, 20_000],
        "3b" => &[5000],
        _ => &[1500],
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    example: &'a str,
    scenario_hash: String,
    master_seed: u64,
    stream: u64,
    version: &'static str,
    horizons: Vec<u64>,
    alpha: f64,
    regime: &'static str,
    files: Vec<String>,
    scenario: &'a Scenario,
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let scenario = builtin(&a.example)?;
    let seed = seed(&a.common)?;
    let inference = inference(&scenario, &a.estimation);
    let horizons: Vec<u64> = match a.horizon {
        Some(h) => vec![h],
        None => documented_horizons(&a.example).to_vec(),
    };
    output_dir(&a.common.out)?;
    let mut files = Vec::new();
    for &h in &horizons {
        let prefix = format!("{}_T{h}_", a.example);
        let spec = RunSpec {
            dir: &a.common.out,
            prefix: &prefix,
            horizon: h,
            seed,
            stream: 0,
            stride: 1,
            plot: true,
        };
        for f in write_run(&spec, &scenario, &inference)? {
            files.push(f.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    let manifest = Manifest {
        example: &a.example,
        scenario_hash: scenario.hash(),
        master_seed: seed,
        stream: 0,
        version: env!("CARGO_PKG_VERSION"),
        horizons,
        alpha: a.estimation.alpha,
        regime: match inference.regime {
            Regime::Full => "full",
            Regime::Censored => "censored",
        },
        files,
        scenario: &scenario,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
    let path = a.common.out.join("manifest.toml");
    write_file(&path, |w| w.write_all(text.as_bytes()))?;
    for f in &manifest.files {
        println!("wrote {}", a.common.out.join(f).display());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn pmf(a: PmfArgs) -> Result<()> {
    let table = hypergeom_table(a.draws, a.total, a.successes).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = io::stdout().lock();
    let body = || -> io::Result<()> {
        writeln!(out, "k,p")?;
        for (k, p) in table {
            writeln!(out, "{k},{p}")?;
        }
        Ok(())
    };
    body().map_err(|e| CliError::Runtime(e.to_string()))
}

pub const EXACT_LAW_HEADER: &str = "n,H,K,S,walker,Z,probability";

fn enumerate(a: EnumerateArgs) -> Result<()> {
    let scenario = load(&a.source)?;
    output_dir(&a.out)?;
    let law = oracle::enumerate(&scenario, a.horizon)?;
    let path = a.out.join("exact_law.csv");
    write_file(&path, |w| {
        writeln!(w, "{EXACT_LAW_HEADER}")?;
        for level in &law.levels {
            for (s, p) in &level.states {
                let walker = s.walker.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{walker},{},{}",
                    level.n,
                    s.h,
                    s.k,
                    s.h + s.k,
                    urnlab::urn::sig17(s.proportion()),
                    urnlab::urn::sig17(*p)
                )?;
            }
        }
        Ok(())
    })?;
    let report = oracle::check_conditional_means(&scenario, &law)?;
    println!("scenario {} (hash {}), horizon {}", scenario.name, scenario.hash(), a.horizon);
    println!("outcomes visited       {}", law.outcomes);
    for level in &law.levels {
        println!("level {:<2} states {:<8} mass {:.15}", level.n, level.states.len(), level.mass());
    }
    print!("{report}");
    println!("wrote {}", path.display());
    Ok(())
}
