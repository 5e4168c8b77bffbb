//! Exact finite-horizon enumeration of the process law, conditional-mean
//! checks on the enumerated states, and Monte Carlo harnesses (interval
//! coverage, limit-law samples, ensembles).
//!
//! Enumeration collapses paths onto the lattice of `(H, K, walker)` states.
//! That triple is Markov for every law in the catalog (the walker is the
//! last sample size for the random-walk law and absent otherwise), so
//! conditioning on the lattice state is the same as conditioning on the
//! whole history.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{CenterKind, ConfidenceInterval, Inference, RunningStats};
use crate::pmf::hypergeom_table;
use crate::scenarios::{Case, Scenario};
use crate::urn::{sig17, Simulation, StepRecord, UrnState};

/// Default cap on the number of `(N, X, A, B)` outcomes visited.
pub const OUTCOME_BUDGET: u64 = 10_000_000;
/// Largest horizon `enumerate` accepts.
pub const MAX_HORIZON: u64 = 5;

/// Node of the enumeration lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeState {
    pub h: u64,
    pub k: u64,
    pub walker: Option<u64>,
}

impl LatticeState {
    pub fn urn(&self, n: u64) -> UrnState {
        UrnState { n, h: self.h, k: self.k }
    }

    pub fn proportion(&self) -> f64 {
        self.h as f64 / (self.h + self.k) as f64
    }
}

/// Law of the process after step `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub n: u64,
    pub states: Vec<(LatticeState, f64)>,
    /// Marginal of `N_n` (empty at `n = 0`).
    pub draws: Vec<(u64, f64)>,
    /// Marginal of `X_n` (empty at `n = 0`).
    pub drawn_a: Vec<(u64, f64)>,
}

impl Level {
    pub fn mass(&self) -> f64 {
        self.states.iter().map(|(_, p)| p).sum()
    }

    /// Law of `Z_n` with equal ratios merged, sorted by value.
    pub fn proportion_law(&self) -> Vec<(f64, f64)> {
        let mut merged: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (s, p) in &self.states {
            let g = gcd(s.h, s.h + s.k);
            *merged.entry((s.h / g, (s.h + s.k) / g)).or_default() += p;
        }
        let mut out: Vec<(f64, f64)> = merged
            .into_iter()
            .map(|((h, s), p)| (h as f64 / s as f64, p))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// Law of the colour-A count `H_n`.
    pub fn count_law(&self) -> Vec<(u64, f64)> {
        let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
        for (s, p) in &self.states {
            *merged.entry(s.h).or_default() += p;
        }
        merged.into_iter().collect()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact law of the first `horizon` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw {
    pub horizon: u64,
    pub levels: Vec<Level>,
    /// `(N, X, A, B)` outcomes visited.
    pub outcomes: u64,
}

/// One weighted transition out of a lattice state.
#[derive(Clone, Copy, Debug)]
struct Transition {
    draws: u64,
    drawn_a: u64,
    reinforce_a: u64,
    reinforce_b: u64,
    /// `P(N = draws)`
    p_draws: f64,
    /// `P(X = drawn_a | N)`
    p_drawn: f64,
    /// `P(A, B)`
    p_pair: f64,
    next: LatticeState,
}

/// Per-step tables shared by all states of a level.
struct StepLaws {
    n: u64,
    pairs: Vec<((u64, u64), f64)>,
}

impl StepLaws {
    fn new(scenario: &Scenario, n: u64) -> Result<Self> {
        Ok(StepLaws {
            n,
            pairs: scenario.reinforcement.distribution(n)?,
        })
    }

    fn draws(&self, scenario: &Scenario, from: &LatticeState) -> Result<Vec<(u64, f64)>> {
        let prev = from.urn(self.n - 1);
        let table = scenario.sample_size.distribution(self.n, &prev, from.walker)?;
        for (v, _) in &table {
            if *v == 0 || *v > prev.total() {
                return Err(Error::SampleSizeOutOfRange {
                    n: self.n,
                    law: scenario.sample_size.name(),
                    proposed: *v,
                    total: prev.total(),
                });
            }
        }
        Ok(table)
    }

    /// Number of outcomes `from` expands into.
    fn fan_out(&self, scenario: &Scenario, from: &LatticeState) -> Result<u64> {
        let mut count = 0;
        for (d, _) in self.draws(scenario, from)? {
            let lo = d.saturating_sub(from.k);
            let hi = d.min(from.h);
            count += (hi - lo + 1) * self.pairs.len() as u64;
        }
        Ok(count)
    }

    fn for_each(&self, scenario: &Scenario, from: &LatticeState, mut f: impl FnMut(Transition)) -> Result<()> {
        let stateful = scenario.sample_size.is_stateful();
        let total = from.h + from.k;
        for (draws, p_draws) in self.draws(scenario, from)? {
            for (drawn_a, p_drawn) in hypergeom_table(draws, total, from.h)? {
                if p_drawn == 0.0 {
                    continue;
                }
                for &((a, b), p_pair) in &self.pairs {
                    let next = LatticeState {
                        h: from.h + a * drawn_a,
                        k: from.k + b * (draws - drawn_a),
                        walker: stateful.then_some(draws),
                    };
                    f(Transition {
                        draws,
                        drawn_a,
                        reinforce_a: a,
                        reinforce_b: b,
                        p_draws,
                        p_drawn,
                        p_pair,
                        next,
                    });
                }
            }
        }
        Ok(())
    }
}

fn initial_lattice(scenario: &Scenario) -> LatticeState {
    LatticeState {
        h: scenario.urn.a,
        k: scenario.urn.b,
        walker: None,
    }
}

fn check_horizon(horizon: u64) -> Result<()> {
    if horizon > MAX_HORIZON {
        return Err(Error::contract("horizon", format!("{horizon} exceeds {MAX_HORIZON}")));
    }
    Ok(())
}

/// Exact law of the first `horizon` steps, with the default outcome budget.
pub fn enumerate(scenario: &Scenario, horizon: u64) -> Result<ExactLaw> {
    enumerate_with_budget(scenario, horizon, OUTCOME_BUDGET)
}

pub fn enumerate_with_budget(scenario: &Scenario, horizon: u64, budget: u64) -> Result<ExactLaw> {
    check_horizon(horizon)?;
    let mut levels = vec![Level {
        n: 0,
        states: vec![(initial_lattice(scenario), 1.0)],
        draws: Vec::new(),
        drawn_a: Vec::new(),
    }];
    let mut outcomes = 0u64;
    for n in 1..=horizon {
        let laws = StepLaws::new(scenario, n)?;
        let prev = &levels[levels.len() - 1].states;
        let mut projected = outcomes;
        for (s, _) in prev {
            projected += laws.fan_out(scenario, s)?;
        }
        if projected > budget {
            return Err(Error::BudgetExceeded {
                count: projected,
                limit: budget,
            });
        }
        outcomes = projected;

        let mut next: BTreeMap<LatticeState, f64> = BTreeMap::new();
        let mut draws: BTreeMap<u64, f64> = BTreeMap::new();
        let mut drawn: BTreeMap<u64, f64> = BTreeMap::new();
        for (s, p) in prev {
            laws.for_each(scenario, s, |t| {
                let q = p * t.p_draws * t.p_drawn * t.p_pair;
                *next.entry(t.next).or_default() += q;
                *draws.entry(t.draws).or_default() += q;
                *drawn.entry(t.drawn_a).or_default() += q;
            })?;
        }
        levels.push(Level {
            n,
            states: next.into_iter().collect(),
            draws: draws.into_iter().collect(),
            drawn_a: drawn.into_iter().collect(),
        });
    }
    Ok(ExactLaw {
        horizon,
        levels,
        outcomes,
    })
}

/// One fully specified path and its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPath {
    pub steps: Vec<StepRecord>,
    pub probability: f64,
}

/// Every path of length `horizon`, without collapsing. Exponential in the
/// horizon; meant as a cross-check of [`enumerate`].
pub fn enumerate_paths(scenario: &Scenario, horizon: u64, budget: u64) -> Result<Vec<WeightedPath>> {
    check_horizon(horizon)?;
    let mut paths = vec![(initial_lattice(scenario), WeightedPath {
        steps: Vec::new(),
        probability: 1.0,
    })];
    for n in 1..=horizon {
        let laws = StepLaws::new(scenario, n)?;
        let mut next = Vec::new();
        for (state, path) in &paths {
            laws.for_each(scenario, state, |t| {
                let mut steps = path.steps.clone();
                steps.push(StepRecord {
                    n,
                    draws: t.draws,
                    drawn_a: t.drawn_a,
                    reinforce_a: t.reinforce_a,
                    reinforce_b: t.reinforce_b,
                    h: t.next.h,
                    k: t.next.k,
                });
                next.push((t.next, WeightedPath {
                    steps,
                    probability: path.probability * t.p_draws * t.p_drawn * t.p_pair,
                }));
            })?;
            if next.len() as u64 > budget {
                return Err(Error::BudgetExceeded {
                    count: next.len() as u64,
                    limit: budget,
                });
            }
        }
        paths = next;
    }
    Ok(paths.into_iter().map(|(_, p)| p).collect())
}

/// Outcome of the drift bound check.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundCheck {
    NotApplicable(String),
    Checked {
        /// `max drift / (E[(A+B)^2] N^2 / n^2)` over states with `n >= 1`.
        max_ratio: f64,
        /// Same with `S_n^2` in place of `n^2`, over all states.
        max_ratio_total: f64,
        violations: u64,
        violations_total: u64,
    },
}

/// Results of [`check_conditional_means`].
#[derive(Clone, Debug, PartialEq)]
pub struct MeanCheckReport {
    pub states: u64,
    /// `(state, N)` pairs examined.
    pub conditionings: u64,
    /// `max |E[X | state, N] - N Z|`
    pub max_sample_mean_error: f64,
    /// `max |E[Z_{n+1} | state, N] - Z_n|`
    pub max_drift: f64,
    pub bound: BoundCheck,
    /// `max |E[Z_{n+1} | state, N, A] - Z_n|` when `A = B` always.
    pub martingale_drift: Option<f64>,
}

impl MeanCheckReport {
    pub fn sample_mean_ok(&self, tol: f64) -> bool {
        self.max_sample_mean_error <= tol
    }

    pub fn bound_ok(&self) -> Option<bool> {
        match &self.bound {
            BoundCheck::NotApplicable(_) => None,
            BoundCheck::Checked {
                violations,
                violations_total,
                ..
            } => Some(*violations == 0 && *violations_total == 0),
        }
    }
}

impl fmt::Display for MeanCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states checked         {}", self.states)?;
        writeln!(f, "(state, N) pairs       {}", self.conditionings)?;
        writeln!(f, "max |E[X|N] - N Z|     {:.3e}", self.max_sample_mean_error)?;
        writeln!(f, "max drift of Z         {:.3e}", self.max_drift)?;
        match &self.bound {
            BoundCheck::NotApplicable(why) => writeln!(f, "drift bound            not applicable: {why}")?,
            BoundCheck::Checked {
                max_ratio,
                max_ratio_total,
                violations,
                violations_total,
            } => {
                writeln!(f, "drift / bound (n^2)    {max_ratio:.3e} ({violations} violations)")?;
                writeln!(f, "drift / bound (S^2)    {max_ratio_total:.3e} ({violations_total} violations)")?;
            }
        }
        match self.martingale_drift {
            Some(d) => writeln!(f, "martingale drift       {d:.3e}"),
            None => writeln!(f, "martingale drift       not applicable: A and B differ"),
        }
    }
}

// per N: (E[X], E[Z'], per-A E[Z'])
type DrawMoments = (f64, f64, BTreeMap<u64, (f64, f64)>);

/// Checks the conditional-mean identities on every transition out of every
/// level of `law`, so a law of horizon `h` covers steps `1..=h+1`.
pub fn check_conditional_means(scenario: &Scenario, law: &ExactLaw) -> Result<MeanCheckReport> {
    check_conditional_means_with_budget(scenario, law, OUTCOME_BUDGET)
}

pub fn check_conditional_means_with_budget(scenario: &Scenario, law: &ExactLaw, budget: u64) -> Result<MeanCheckReport> {
    let identical = law
        .levels
        .iter()
        .map(|l| StepLaws::new(scenario, l.n + 1))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|s| s.pairs.iter().all(|((a, b), _)| a == b));
    let applicable = scenario.case == Case::EqualMeans;

    let mut report = MeanCheckReport {
        states: 0,
        conditionings: 0,
        max_sample_mean_error: 0.0,
        max_drift: 0.0,
        bound: if applicable {
            BoundCheck::Checked {
                max_ratio: 0.0,
                max_ratio_total: 0.0,
                violations: 0,
                violations_total: 0,
            }
        } else {
            BoundCheck::NotApplicable("reinforcement means differ".into())
        },
        martingale_drift: identical.then_some(0.0),
    };

    let mut outcomes = 0u64;
    for level in &law.levels {
        let n = level.n;
        let laws = StepLaws::new(scenario, n + 1)?;
        for (s, _) in &level.states {
            outcomes += laws.fan_out(scenario, s)?;
        }
        if outcomes > budget {
            return Err(Error::BudgetExceeded {
                count: outcomes,
                limit: budget,
            });
        }
        let second_moment: f64 = laws
            .pairs
            .iter()
            .map(|((a, b), p)| ((a + b) as f64).powi(2) * p)
            .sum();
        for (state, _) in &level.states {
            report.states += 1;
            let z = state.proportion();
            let total = (state.h + state.k) as f64;
            let mut by_draws: BTreeMap<u64, DrawMoments> = BTreeMap::new();
            laws.for_each(scenario, state, |t| {
                let entry = by_draws.entry(t.draws).or_default();
                let next_z = t.next.proportion();
                entry.0 += t.p_drawn * t.p_pair * t.drawn_a as f64;
                entry.1 += t.p_drawn * t.p_pair * next_z;
                let per_a = entry.2.entry(t.reinforce_a).or_default();
                per_a.0 += t.p_drawn * t.p_pair * next_z;
                per_a.1 += t.p_drawn * t.p_pair;
            })?;
            for (draws, (mean_x, mean_z, per_a)) in by_draws {
                report.conditionings += 1;
                let d = draws as f64;
                report.max_sample_mean_error = report.max_sample_mean_error.max((mean_x - d * z).abs());
                let drift = (mean_z - z).abs();
                report.max_drift = report.max_drift.max(drift);
                if let BoundCheck::Checked {
                    max_ratio,
                    max_ratio_total,
                    violations,
                    violations_total,
                } = &mut report.bound
                {
                    let scale = second_moment * d * d;
                    if n >= 1 {
                        let bound = scale / (n as f64 * n as f64);
                        *max_ratio = max_ratio.max(drift / bound);
                        if drift > bound {
                            *violations += 1;
                        }
                    }
                    let bound_total = scale / (total * total);
                    *max_ratio_total = max_ratio_total.max(drift / bound_total);
                    if drift > bound_total {
                        *violations_total += 1;
                    }
                }
                if let Some(m) = report.martingale_drift.as_mut() {
                    for (ez, mass) in per_a.values() {
                        *m = m.max((ez / mass - z).abs());
                    }
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Monte Carlo harnesses
// ---------------------------------------------------------------------------

/// Runs `f(0..reps)` on the current rayon pool and returns results in index
/// order. The first failing index (in index order) decides the error.
pub fn replicate<T, F>(reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..reps).into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

/// `Z_T` of `reps` independent trajectories (stream `i` for replication `i`).
pub fn limit_law_samples(scenario: &Scenario, horizon: u64, reps: u64, master_seed: u64) -> Result<Vec<f64>> {
    replicate(reps, |i| {
        let mut sim = Simulation::new(scenario, master_seed, i);
        sim.run_for(horizon, |_| {})?;
        Ok(sim.state().proportion())
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// a continuous `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_uniform(samples: &[f64]) -> f64 {
    ks_statistic(samples, |x| x.clamp(0.0, 1.0))
}

/// Largest fraction of `samples` inside any closed interval of length
/// `width`.
pub fn max_cluster_mass(samples: &[f64], width: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] > width {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best as f64 / sorted.len() as f64
}

/// Fraction of `samples` within `eps` of 0 or 1.
pub fn boundary_mass(samples: &[f64], eps: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|z| **z <= eps || **z >= 1.0 - eps).count() as f64 / samples.len() as f64
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Default minimum ratio between proxy horizon and interval step.
pub const PROXY_FACTOR: u64 = 20;

/// Settings of a coverage experiment.
#[derive(Clone, Debug)]
pub struct CoverageConfig {
    /// Step `n` at which intervals are built.
    pub ci_step: u64,
    /// Horizon `T` whose `Z_T` stands in for the limit.
    pub proxy_horizon: u64,
    pub reps: u64,
    pub master_seed: u64,
    /// Required `T / n`.
    pub proxy_factor: u64,
}

/// What one replication contributes to a coverage experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageSample {
    pub z_n: f64,
    pub m_n: f64,
    pub v_n: f64,
    pub w_n: f64,
    pub w_clamped: bool,
    pub z_proxy: f64,
}

impl CoverageSample {
    fn intervals(&self, n: u64, alpha: f64) -> Result<(ConfidenceInterval, ConfidenceInterval)> {
        use crate::estimators::interval;
        Ok((
            interval(CenterKind::Z, self.z_n, self.v_n, n, alpha)?,
            interval(CenterKind::M, self.m_n, self.w_n, n, alpha)?,
        ))
    }
}

/// Runs the replications of a coverage experiment; `inference` fixes the
/// estimator regime and plug-ins (its `alpha` is ignored).
pub fn coverage_samples(scenario: &Scenario, cfg: &CoverageConfig, inference: &Inference<'_>) -> Result<Vec<CoverageSample>> {
    if scenario.case != Case::EqualMeans {
        return Err(Error::NotApplicable(format!(
            "scenario `{}` has unequal reinforcement means; no central limit theorem applies",
            scenario.name
        )));
    }
    if cfg.ci_step < 2 {
        return Err(Error::contract("ci_step", "must be at least 2"));
    }
    if cfg.reps == 0 {
        return Err(Error::contract("reps", "must be at least 1"));
    }
    if cfg.proxy_horizon < cfg.proxy_factor.saturating_mul(cfg.ci_step) {
        return Err(Error::contract(
            "proxy_horizon",
            format!(
                "{} is below {} x the interval step {}",
                cfg.proxy_horizon, cfg.proxy_factor, cfg.ci_step
            ),
        ));
    }
    replicate(cfg.reps, |i| {
        let mut sim = Simulation::new(scenario, cfg.master_seed, i);
        let mut stats = RunningStats::new();
        let mut failure = None;
        sim.run_for(cfg.ci_step, |r| {
            if let Err(e) = stats.update(r) {
                failure.get_or_insert(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let v_n = inference.v(&stats, stats.z())?;
        let w = inference.w(&stats)?;
        sim.run_for(cfg.proxy_horizon - cfg.ci_step, |_| {})?;
        Ok(CoverageSample {
            z_n: stats.z(),
            m_n: stats.m(),
            v_n,
            w_n: w.value,
            w_clamped: w.clamped,
            z_proxy: sim.state().proportion(),
        })
    })
}

/// Empirical coverage of both intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub scenario: String,
    pub ci_step: u64,
    pub proxy_horizon: u64,
    pub reps: u64,
    pub level: f64,
    pub coverage_z: f64,
    pub coverage_m: f64,
    pub mean_half_width_z: f64,
    pub mean_half_width_m: f64,
    pub w_clamped: u64,
    pub master_seed: u64,
}

impl CoverageReport {
    /// Binomial standard error of a coverage estimate.
    pub fn standard_error(&self, coverage: f64) -> f64 {
        (coverage * (1.0 - coverage) / self.reps as f64).sqrt()
    }

    pub fn se_z(&self) -> f64 {
        self.standard_error(self.coverage_z)
    }

    pub fn se_m(&self) -> f64 {
        self.standard_error(self.coverage_m)
    }
}

/// Summarizes `samples` at level `1 - alpha`.
pub fn coverage_report(scenario: &Scenario, cfg: &CoverageConfig, samples: &[CoverageSample], alpha: f64) -> Result<CoverageReport> {
    let (mut hit_z, mut hit_m, mut hw_z, mut hw_m, mut clamped) = (0u64, 0u64, 0.0, 0.0, 0u64);
    for s in samples {
        let (ci_z, ci_m) = s.intervals(cfg.ci_step, alpha)?;
        hit_z += u64::from(ci_z.contains(s.z_proxy));
        hit_m += u64::from(ci_m.contains(s.z_proxy));
        hw_z += ci_z.half_width;
        hw_m += ci_m.half_width;
        clamped += u64::from(s.w_clamped);
    }
    let r = samples.len() as f64;
    Ok(CoverageReport {
        scenario: scenario.name.clone(),
        ci_step: cfg.ci_step,
        proxy_horizon: cfg.proxy_horizon,
        reps: samples.len() as u64,
        level: 1.0 - alpha,
        coverage_z: hit_z as f64 / r,
        coverage_m: hit_m as f64 / r,
        mean_half_width_z: hw_z / r,
        mean_half_width_m: hw_m / r,
        w_clamped: clamped,
        master_seed: cfg.master_seed,
    })
}

/// Runs a coverage experiment at level `1 - inference.alpha`.
pub fn coverage(scenario: &Scenario, cfg: &CoverageConfig, inference: &Inference<'_>) -> Result<CoverageReport> {
    let samples = coverage_samples(scenario, cfg, inference)?;
    coverage_report(scenario, cfg, &samples, inference.alpha)
}

pub const COVERAGE_HEADER: &str = "scenario,ci_step,proxy_horizon,reps,level,coverage_Z,se_Z,coverage_M,se_M,\
mean_half_width_Z,mean_half_width_M,w_clamped,master_seed";

pub fn write_coverage_csv<W: Write>(mut out: W, reports: &[CoverageReport]) -> io::Result<()> {
    writeln!(out, "{COVERAGE_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.ci_step,
            r.proxy_horizon,
            r.reps,
            sig17(r.level),
            sig17(r.coverage_z),
            sig17(r.se_z()),
            sig17(r.coverage_m),
            sig17(r.se_m()),
            sig17(r.mean_half_width_z),
            sig17(r.mean_half_width_m),
            r.w_clamped,
            r.master_seed
        )?;
    }
    Ok(())
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario          {}", self.scenario)?;
        writeln!(f, "interval step n   {}", self.ci_step)?;
        writeln!(f, "proxy horizon T   {}", self.proxy_horizon)?;
        writeln!(f, "replications      {}", self.reps)?;
        writeln!(f, "nominal level     {:.4}", self.level)?;
        writeln!(
            f,
            "Z_n interval      coverage {:.4} (se {:.4}), mean half-width {:.5}",
            self.coverage_z,
            self.se_z(),
            self.mean_half_width_z
        )?;
        writeln!(
            f,
            "M_n interval      coverage {:.4} (se {:.4}), mean half-width {:.5}",
            self.coverage_m,
            self.se_m(),
            self.mean_half_width_m
        )?;
        writeln!(f, "W_n clamped at 0  {}", self.w_clamped)?;
        writeln!(f, "master seed       {}", self.master_seed)
    }
}

/// End-of-run summary of one ensemble member.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleRow {
    pub rep: u64,
    pub n: u64,
    pub z: f64,
    pub m: f64,
    pub total: u64,
    /// Only for equal-means scenarios.
    pub v: Option<f64>,
    pub w: Option<f64>,
    pub ci_z: Option<ConfidenceInterval>,
    pub ci_m: Option<ConfidenceInterval>,
}

/// Runs `reps` trajectories to `horizon` and summarizes each.
pub fn ensemble(
    scenario: &Scenario,
    horizon: u64,
    reps: u64,
    master_seed: u64,
    inference: &Inference<'_>,
) -> Result<Vec<EnsembleRow>> {
    if horizon == 0 {
        return Err(Error::contract("horizon", "must be at least 1"));
    }
    let clt = scenario.case == Case::EqualMeans;
    replicate(reps, |i| {
        let mut sim = Simulation::new(scenario, master_seed, i);
        let mut stats = RunningStats::new();
        let mut failure = None;
        sim.run_for(horizon, |r| {
            if let Err(e) = stats.update(r) {
                failure.get_or_insert(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let (v, w, ci_z, ci_m) = if clt && horizon >= 2 {
            (
                Some(inference.v(&stats, stats.z())?),
                Some(inference.w(&stats)?.value),
                Some(inference.ci(CenterKind::Z, &stats)?),
                Some(inference.ci(CenterKind::M, &stats)?),
            )
        } else {
            (None, None, None, None)
        };
        Ok(EnsembleRow {
            rep: i,
            n: horizon,
            z: stats.z(),
            m: stats.m(),
            total: sim.state().total(),
            v,
            w,
            ci_z,
            ci_m,
        })
    })
}

pub const ENSEMBLE_HEADER: &str = "rep,n,Z,M,S,V_n,W_n,ci_lo_Z,ci_hi_Z,ci_lo_M,ci_hi_M";

pub fn write_ensemble_csv<W: Write>(mut out: W, rows: &[EnsembleRow]) -> io::Result<()> {
    writeln!(out, "{ENSEMBLE_HEADER}")?;
    let opt = |x: Option<f64>| x.map(sig17).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.n,
            sig17(r.z),
            sig17(r.m),
            r.total,
            opt(r.v),
            opt(r.w),
            opt(r.ci_z.map(|c| c.lo())),
            opt(r.ci_z.map(|c| c.hi())),
            opt(r.ci_m.map(|c| c.lo())),
            opt(r.ci_m.map(|c| c.hi())),
        )?;
    }
    Ok(())
}

pub const QUANTILE_HEADER: &str = "statistic,q05,q25,q50,q75,q95,mean";

/// Quantiles of the final `Z`, `M` and `S / n` across an ensemble.
pub fn write_ensemble_quantiles<W: Write>(mut out: W, rows: &[EnsembleRow]) -> io::Result<()> {
    writeln!(out, "{QUANTILE_HEADER}")?;
    type Column = (&'static str, fn(&EnsembleRow) -> f64);
    let columns: [Column; 3] = [
        ("Z", |r| r.z),
        ("M", |r| r.m),
        ("S_over_n", |r| r.total as f64 / r.n as f64),
    ];
    for (name, get) in columns {
        let mut v: Vec<f64> = rows.iter().map(get).collect();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let qs: Vec<String> = [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|p| sig17(quantile(&v, *p))).collect();
        writeln!(out, "{name},{},{}", qs.join(","), sig17(mean))?;
    }
    Ok(())
}
