//! Running statistics, plug-in variance estimators and asymptotic
//! confidence intervals for the limit proportion.
//!
//! Integer-valued sums (of `A`, `A^2`, `N`, ...) are kept exactly in 128-bit
//! integers; the two real-valued ones (`X/N` and `1/N`) use Neumaier
//! summation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::scenarios::{Case, MomentSource, SampleMoments, SampleSizeLaw, Scenario};
use crate::urn::{sig17, Simulation, StepRecord, Trajectory};

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Which reinforcement estimators to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Regime {
    /// Every `A_j` and `B_j` is observed.
    #[default]
    Full,
    /// `A_j` only seen when `X_j > 0`, `B_j` only when `X_j < N_j`.
    Censored,
}

/// Estimated reinforcement moments `(m, q_A, q_B, q_AB)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReinforcementEstimates {
    pub m: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub q_ab: f64,
}

/// Censored estimators; `None` where no qualifying step has occurred yet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensoredEstimates {
    pub m: f64,
    pub q_a: Option<f64>,
    pub q_b: Option<f64>,
    pub q_ab: Option<f64>,
}

/// Streaming accumulators for `M_n` and all moment estimators of one
/// trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    z: f64,
    fraction: CompensatedSum,
    inverse_size: CompensatedSum,
    size: u128,
    size_sq: u128,
    a: u128,
    a_sq: u128,
    b_sq: u128,
    ab: u128,
    // censored
    seen: u128,
    a_sq_seen: u128,
    a_seen_count: u64,
    b_sq_seen: u128,
    b_seen_count: u64,
    ab_seen: u128,
    ab_seen_count: u64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds step `n + 1`.
    pub fn update(&mut self, r: &StepRecord) -> Result<()> {
        if r.n != self.n + 1 {
            return Err(Error::contract(
                "record",
                format!("expected step {}, got {}", self.n + 1, r.n),
            ));
        }
        let (a, b, x, size) = (
            r.reinforce_a as u128,
            r.reinforce_b as u128,
            r.drawn_a,
            r.draws as u128,
        );
        self.n = r.n;
        self.z = r.proportion();
        self.fraction.add(r.sample_fraction());
        self.inverse_size.add(1.0 / r.draws as f64);
        self.size += size;
        self.size_sq += size * size;
        self.a += a;
        self.a_sq += a * a;
        self.b_sq += b * b;
        self.ab += a * b;
        if x > 0 {
            self.seen += a;
            self.a_sq_seen += a * a;
            self.a_seen_count += 1;
        } else {
            self.seen += b;
        }
        if x < r.draws {
            self.b_sq_seen += b * b;
            self.b_seen_count += 1;
        }
        if x > 0 && x < r.draws {
            self.ab_seen += a * b;
            self.ab_seen_count += 1;
        }
        debug_assert!(self.size_sq >= self.size);
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Latest urn proportion `Z_n`.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Empirical mean of the sampled fractions, `M_n`.
    pub fn m(&self) -> f64 {
        self.mean(self.fraction.value()).clamp(0.0, 1.0)
    }

    fn mean(&self, sum: f64) -> f64 {
        sum / self.n as f64
    }

    pub fn mu_hat(&self) -> f64 {
        self.mean(self.size as f64)
    }

    pub fn q_n_hat(&self) -> f64 {
        self.mean(self.size_sq as f64)
    }

    pub fn eta_hat(&self) -> f64 {
        self.mean(self.inverse_size.value())
    }

    /// Observed sample-size moments in the form used by the plug-ins.
    pub fn size_moments(&self) -> SampleMoments {
        SampleMoments {
            mean: self.mu_hat(),
            second: self.q_n_hat(),
            inverse: self.eta_hat(),
        }
    }

    pub fn full(&self) -> ReinforcementEstimates {
        ReinforcementEstimates {
            m: self.mean(self.a as f64),
            q_a: self.mean(self.a_sq as f64),
            q_b: self.mean(self.b_sq as f64),
            q_ab: self.mean(self.ab as f64),
        }
    }

    pub fn censored(&self) -> CensoredEstimates {
        let ratio = |sum: u128, count: u64| (count > 0).then(|| sum as f64 / count as f64);
        CensoredEstimates {
            m: self.mean(self.seen as f64),
            q_a: ratio(self.a_sq_seen, self.a_seen_count),
            q_b: ratio(self.b_sq_seen, self.b_seen_count),
            q_ab: ratio(self.ab_seen, self.ab_seen_count),
        }
    }

    /// Reinforcement estimates for `regime`. Censored moments with an empty
    /// denominator fall back to the full-observation value; the flag reports
    /// whether that happened.
    pub fn reinforcement(&self, regime: Regime) -> (ReinforcementEstimates, bool) {
        let full = self.full();
        match regime {
            Regime::Full => (full, false),
            Regime::Censored => {
                let c = self.censored();
                let fell_back = c.q_a.is_none() || c.q_b.is_none() || c.q_ab.is_none();
                (
                    ReinforcementEstimates {
                        m: c.m,
                        q_a: c.q_a.unwrap_or(full.q_a),
                        q_b: c.q_b.unwrap_or(full.q_b),
                        q_ab: c.q_ab.unwrap_or(full.q_ab),
                    },
                    fell_back,
                )
            }
        }
    }
}

/// Warning for settings where the censored `q_AB` estimator can never be
/// defined.
pub fn censored_warning(law: &SampleSizeLaw) -> Option<String> {
    (law.fixed_size() == Some(1)).then(|| {
        "with one ball per draw 0 < X < N never happens: censored q_AB is undefined and \
         falls back to the full-observation estimator"
            .to_string()
    })
}

// ---------------------------------------------------------------------------
// Variance formulas
// ---------------------------------------------------------------------------

/// `V` for limit proportion `z`, reinforcement moments and sample-size
/// moments `n_mean = N`, `q = Q`.
pub fn v_theoretical(z: f64, m: f64, q_a: f64, q_b: f64, q_ab: f64, n_mean: f64, q: f64) -> f64 {
    let y = 1.0 - z;
    let num = y * q_a * (y * n_mean + z * q) + z * q_b * (z * n_mean + y * q) - 2.0 * z * y * q_ab * (q - n_mean);
    z * y * num / (m * n_mean).powi(2)
}

/// Same quantity as [`v_theoretical`], grouped by `N` and `Q`.
pub fn v_theoretical_grouped(z: f64, m: f64, q_a: f64, q_b: f64, q_ab: f64, n_mean: f64, q: f64) -> f64 {
    let y = 1.0 - z;
    let num = n_mean * (y * y * q_a + z * z * q_b + 2.0 * z * y * q_ab) + z * y * q * (q_a + q_b - 2.0 * q_ab);
    z * y * num / (m * n_mean).powi(2)
}

/// `V` when every sample has exactly `k` balls.
pub fn v_fixed_k(z: f64, m: f64, q_a: f64, q_b: f64, q_ab: f64, k: f64) -> f64 {
    let y = 1.0 - z;
    let num = y * y * q_a + z * z * q_b + 2.0 * z * y * q_ab + z * y * k * (q_a + q_b - 2.0 * q_ab);
    k * z * y * num / (m * k).powi(2)
}

/// Same quantity as [`v_fixed_k`], over `m^2 k`.
pub fn v_fixed_k_grouped(z: f64, m: f64, q_a: f64, q_b: f64, q_ab: f64, k: f64) -> f64 {
    let y = 1.0 - z;
    let num = y * y * q_a + z * z * q_b + z * y * (k * (q_a + q_b) - 2.0 * q_ab * (k - 1.0));
    z * y * num / (m * m * k)
}

/// `U = V + z(1-z)(L - 2/N)`, the limit variance of `sqrt(n)(M_n - Z_n)`.
pub fn u_theoretical(z: f64, v: f64, l: f64, n_mean: f64) -> f64 {
    v + z * (1.0 - z) * (l - 2.0 / n_mean)
}

fn check_plug_in(r: &ReinforcementEstimates, size: &SampleMoments) -> Result<()> {
    if r.m.is_nan() || r.m <= 0.0 {
        return Err(Error::contract("m_hat", format!("{} is not positive", r.m)));
    }
    if size.mean.is_nan() || size.mean <= 0.0 {
        return Err(Error::contract("mu_hat", format!("{} is not positive", size.mean)));
    }
    Ok(())
}

fn require_steps(stats: &RunningStats) -> Result<()> {
    if stats.n() == 0 {
        return Err(Error::contract("stats", "no steps observed"));
    }
    Ok(())
}

/// `V_n` at `center` with every moment estimated from the trajectory.
pub fn v_hat(stats: &RunningStats, center: f64, regime: Regime) -> Result<f64> {
    require_steps(stats)?;
    v_hat_with(stats, center, regime, &stats.size_moments())
}

/// `V_n` with the fixed-`k` formula.
pub fn v_hat_fixed_k(stats: &RunningStats, center: f64, k: u64, regime: Regime) -> Result<f64> {
    require_steps(stats)?;
    let (r, _) = stats.reinforcement(regime);
    let k = k as f64;
    check_plug_in(&r, &SampleMoments { mean: k, second: k * k, inverse: 1.0 / k })?;
    Ok(v_fixed_k(center, r.m, r.q_a, r.q_b, r.q_ab, k))
}

/// `V_n` with `f(center)`, `g(center)` in place of the estimated sample-size
/// moments.
pub fn v_hat_known_moments(stats: &RunningStats, center: f64, law: &SampleSizeLaw, regime: Regime) -> Result<f64> {
    require_steps(stats)?;
    let size = known_moments(law, center)?;
    v_hat_with(stats, center, regime, &size)
}

fn known_moments(law: &SampleSizeLaw, z: f64) -> Result<SampleMoments> {
    law.conditional_moments(z).ok_or_else(|| {
        Error::NotApplicable(format!("law `{}` has no closed-form conditional moments", law.name()))
    })
}

fn v_hat_with(stats: &RunningStats, center: f64, regime: Regime, size: &SampleMoments) -> Result<f64> {
    let (r, _) = stats.reinforcement(regime);
    check_plug_in(&r, size)?;
    Ok(v_theoretical(center, r.m, r.q_a, r.q_b, r.q_ab, size.mean, size.second))
}

/// `W_n`, clamped at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WEstimate {
    pub value: f64,
    /// Unclamped value.
    pub raw: f64,
    pub clamped: bool,
}

/// `W_n = 2 V'_n + M_n (1 - M_n) (eta - 2 / mu)` with `V'_n` centred at `M_n`.
pub fn w_hat(stats: &RunningStats, regime: Regime) -> Result<WEstimate> {
    require_steps(stats)?;
    w_hat_with(stats, regime, &stats.size_moments())
}

/// `W_n` with `f(M_n)`, `g(M_n)`, `h(M_n)` in place of the estimated
/// sample-size moments.
pub fn w_hat_known_moments(stats: &RunningStats, law: &SampleSizeLaw, regime: Regime) -> Result<WEstimate> {
    require_steps(stats)?;
    let size = known_moments(law, stats.m())?;
    w_hat_with(stats, regime, &size)
}

fn w_hat_with(stats: &RunningStats, regime: Regime, size: &SampleMoments) -> Result<WEstimate> {
    let m = stats.m();
    let v = v_hat_with(stats, m, regime, size)?;
    let raw = 2.0 * v + m * (1.0 - m) * (size.inverse - 2.0 / size.mean);
    Ok(WEstimate {
        value: raw.max(0.0),
        raw,
        clamped: raw < 0.0,
    })
}

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

/// Which statistic the interval is centred on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CenterKind {
    /// `Z_n ± q sqrt(V_n / n)`
    Z,
    /// `M_n ± q sqrt(W_n / n)`
    M,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceInterval {
    pub kind: CenterKind,
    pub center: f64,
    pub half_width: f64,
    /// Nominal level `1 - alpha`.
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn lo(&self) -> f64 {
        (self.center - self.half_width).max(0.0)
    }

    pub fn hi(&self) -> f64 {
        (self.center + self.half_width).min(1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo() <= x && x <= self.hi()
    }
}

/// `center ± q_{1-alpha/2} sqrt(variance / n)`. `alpha = 1` gives the
/// degenerate interval at the center.
pub fn interval(kind: CenterKind, center: f64, variance: f64, n: u64, alpha: f64) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::contract("alpha", format!("{alpha} not in (0, 1]")));
    }
    if n == 0 {
        return Err(Error::contract("n", "must be at least 1"));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::contract("variance", format!("{variance} is not a finite non-negative number")));
    }
    let q = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(ConfidenceInterval {
        kind,
        center,
        half_width: q * (variance / n as f64).sqrt(),
        level: 1.0 - alpha,
    })
}

/// Where the sample-size moments in the plug-ins come from.
#[derive(Clone, Copy, Debug)]
pub enum SizePlugIn<'a> {
    Estimated,
    /// Every sample has exactly `k` balls.
    FixedK(u64),
    Known(&'a SampleSizeLaw),
}

impl<'a> SizePlugIn<'a> {
    pub fn for_scenario(s: &'a Scenario) -> Self {
        match (s.sample_moments, s.sample_size.fixed_size()) {
            (MomentSource::Known, Some(k)) => SizePlugIn::FixedK(k),
            (MomentSource::Known, None) => SizePlugIn::Known(&s.sample_size),
            (MomentSource::Estimated, _) => SizePlugIn::Estimated,
        }
    }
}

/// Estimator settings shared by all intervals of one run.
#[derive(Clone, Copy, Debug)]
pub struct Inference<'a> {
    pub regime: Regime,
    pub size: SizePlugIn<'a>,
    pub alpha: f64,
}

impl<'a> Inference<'a> {
    pub fn for_scenario(s: &'a Scenario, alpha: f64) -> Self {
        Inference {
            regime: Regime::Full,
            size: SizePlugIn::for_scenario(s),
            alpha,
        }
    }

    pub fn v(&self, stats: &RunningStats, center: f64) -> Result<f64> {
        match self.size {
            SizePlugIn::Estimated => v_hat(stats, center, self.regime),
            SizePlugIn::FixedK(k) => v_hat_fixed_k(stats, center, k, self.regime),
            SizePlugIn::Known(law) => v_hat_known_moments(stats, center, law, self.regime),
        }
    }

    pub fn w(&self, stats: &RunningStats) -> Result<WEstimate> {
        match self.size {
            SizePlugIn::Estimated => w_hat(stats, self.regime),
            SizePlugIn::FixedK(k) => {
                let k = k as f64;
                require_steps(stats)?;
                w_hat_with(stats, self.regime, &SampleMoments { mean: k, second: k * k, inverse: 1.0 / k })
            }
            SizePlugIn::Known(law) => w_hat_known_moments(stats, law, self.regime),
        }
    }

    pub fn ci(&self, kind: CenterKind, stats: &RunningStats) -> Result<ConfidenceInterval> {
        if stats.n() < 2 {
            return Err(Error::contract("n", "confidence intervals need at least two steps"));
        }
        match kind {
            CenterKind::Z => interval(kind, stats.z(), self.v(stats, stats.z())?, stats.n(), self.alpha),
            CenterKind::M => interval(kind, stats.m(), self.w(stats)?.value, stats.n(), self.alpha),
        }
    }

    /// Everything reported at one step.
    pub fn snapshot(&self, stats: &RunningStats) -> Result<Snapshot> {
        require_steps(stats)?;
        let (r, _) = stats.reinforcement(self.regime);
        let both = if stats.n() >= 2 {
            Some((self.ci(CenterKind::Z, stats)?, self.ci(CenterKind::M, stats)?))
        } else {
            None
        };
        Ok(Snapshot {
            n: stats.n(),
            z: stats.z(),
            m: stats.m(),
            reinforcement: r,
            size: stats.size_moments(),
            v: self.v(stats, stats.z())?,
            w: self.w(stats)?,
            ci_z: both.map(|b| b.0),
            ci_m: both.map(|b| b.1),
        })
    }
}

/// Estimator values at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub n: u64,
    pub z: f64,
    pub m: f64,
    pub reinforcement: ReinforcementEstimates,
    pub size: SampleMoments,
    pub v: f64,
    pub w: WEstimate,
    pub ci_z: Option<ConfidenceInterval>,
    pub ci_m: Option<ConfidenceInterval>,
}

pub const SNAPSHOT_HEADER: &str =
    "n,Z,M,m_hat,qA_hat,qB_hat,qAB_hat,mu_hat,qN_hat,eta_hat,V_n,W_n,ci_lo_Z,ci_hi_Z,ci_lo_M,ci_hi_M";

/// Writes snapshots as CSV; interval columns are empty before step 2.
pub fn write_snapshots<W: Write>(mut out: W, rows: &[Snapshot]) -> io::Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    let opt = |ci: Option<ConfidenceInterval>| match ci {
        Some(c) => (sig17(c.lo()), sig17(c.hi())),
        None => (String::new(), String::new()),
    };
    for s in rows {
        let r = &s.reinforcement;
        let (zl, zh) = opt(s.ci_z);
        let (ml, mh) = opt(s.ci_m);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{zl},{zh},{ml},{mh}",
            s.n,
            sig17(s.z),
            sig17(s.m),
            sig17(r.m),
            sig17(r.q_a),
            sig17(r.q_b),
            sig17(r.q_ab),
            sig17(s.size.mean),
            sig17(s.size.second),
            sig17(s.size.inverse),
            sig17(s.v),
            sig17(s.w.value),
        )?;
    }
    Ok(())
}

/// Runs one trajectory and keeps every `stride`-th record and estimator
/// snapshot (plus the last ones).
pub fn track(
    scenario: &Scenario,
    horizon: u64,
    master_seed: u64,
    stream_index: u64,
    stride: u64,
    inference: &Inference<'_>,
) -> Result<(Trajectory, Vec<Snapshot>)> {
    if horizon == 0 {
        return Err(Error::contract("horizon", "must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::contract("stride", "must be at least 1"));
    }
    let clt = scenario.case == Case::EqualMeans;
    let mut sim = Simulation::new(scenario, master_seed, stream_index);
    let mut stats = RunningStats::new();
    let mut records = Vec::with_capacity((horizon / stride + 1) as usize);
    let mut snapshots = Vec::with_capacity((horizon / stride + 1) as usize);
    for _ in 0..horizon {
        let r = sim.advance()?;
        stats.update(&r)?;
        if r.n % stride == 0 || r.n == horizon {
            records.push(r);
            let mut snap = inference.snapshot(&stats)?;
            if !clt {
                // no normal limit when the means differ
                snap.ci_z = None;
                snap.ci_m = None;
            }
            snapshots.push(snap);
        }
    }
    let trajectory = Trajectory {
        initial: (scenario.urn.a, scenario.urn.b),
        scenario: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        master_seed,
        stream_index,
        stride,
        horizon,
        records,
    };
    Ok((trajectory, snapshots))
}

// ---------------------------------------------------------------------------
// Normal quantile
// ---------------------------------------------------------------------------

/// Inverse standard-normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against the CDF computed from `erfc`, which brings the
/// error down to a few ulps.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::contract("p", format!("{p} not in (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    let e = 0.5 * erfc(-x * FRAC_1_SQRT_2) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(n: u64, draws: u64, x: u64, a: u64, b: u64) -> StepRecord {
        StepRecord {
            n,
            draws,
            drawn_a: x,
            reinforce_a: a,
            reinforce_b: b,
            h: 5,
            k: 5,
        }
    }

    fn stats_from(records: &[StepRecord]) -> RunningStats {
        let mut s = RunningStats::new();
        for r in records {
            s.update(r).unwrap();
        }
        s
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
        let mut t = CompensatedSum::default();
        for _ in 0..10_000_000 {
            t.add(0.1);
        }
        assert!((t.value() - 1e6).abs() < 1e-6);
    }

    #[test]
    fn sample_fraction_mean() {
        let s = stats_from(&[record(1, 2, 1, 1, 1), record(2, 1, 1, 1, 1)]);
        assert_eq!(s.m(), 0.75);
    }

    #[test]
    fn censored_mean_uses_observed_factor() {
        let s = stats_from(&[record(1, 2, 0, 2, 4), record(2, 2, 2, 3, 1)]);
        let c = s.censored();
        assert_eq!(c.m, 3.5);
        assert_eq!(c.q_a, Some(9.0));
        assert_eq!(c.q_b, Some(16.0));
        assert_eq!(c.q_ab, None);
        let (r, fell_back) = s.reinforcement(Regime::Censored);
        assert!(fell_back);
        assert_eq!(r.q_ab, s.full().q_ab);
        assert_eq!(s.full().m, 2.5);
    }

    #[test]
    fn first_update_counts_one_step() {
        let s = stats_from(&[record(1, 3, 1, 2, 5)]);
        assert_eq!(s.n(), 1);
        assert_eq!(s.mu_hat(), 3.0);
        assert_eq!(s.q_n_hat(), 9.0);
        assert!((s.eta_hat() - 1.0 / 3.0).abs() < 1e-16);
        let full = s.full();
        assert_eq!((full.m, full.q_a, full.q_b, full.q_ab), (2.0, 4.0, 25.0, 10.0));
        let c = s.censored();
        assert_eq!((c.q_a, c.q_b, c.q_ab), (Some(4.0), Some(25.0), Some(10.0)));
    }

    #[test]
    fn out_of_order_record_is_rejected() {
        let mut s = RunningStats::new();
        assert!(s.update(&record(2, 1, 0, 1, 1)).is_err());
    }

    #[test]
    fn variance_reference_points() {
        for center in [0.0, 1.0] {
            assert_eq!(v_theoretical(center, 2.0, 4.0, 5.0, 3.0, 3.0, 10.0), 0.0);
        }
        let v = v_theoretical(0.5, 2.0, 4.0, 4.0, 4.0, 3.0, 9.0);
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
        let v = v_theoretical(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((v - 0.25).abs() < 1e-15);
        // A = B: no dependence on Q
        for q in [9.0, 10.0, 40.0] {
            let v = v_theoretical(0.3, 2.0, 5.0, 5.0, 5.0, 3.0, q);
            assert!((v - 0.21 * 5.0 / 12.0).abs() < 1e-15);
        }
        // k = 1: no dependence on q_AB
        let v1 = v_fixed_k(0.3, 2.0, 5.0, 7.0, 1.0, 1.0);
        let v2 = v_fixed_k(0.3, 2.0, 5.0, 7.0, 30.0, 1.0);
        assert!((v1 - v2).abs() < 1e-15);
    }

    #[test]
    fn constant_inputs_give_one_twelfth() {
        let records: Vec<_> = (1..=10).map(|n| record(n, 3, 1, 2, 2)).collect();
        let s = stats_from(&records);
        let v = v_hat(&s, 0.5, Regime::Full).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
        let v = v_hat_fixed_k(&s, 0.5, 3, Regime::Full).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn w_for_single_ball_unit_reinforcement() {
        // M = 0.4 from fractions {1, 0, 1, 0, 0}
        let records: Vec<_> = (1..=5).map(|n| record(n, 1, u64::from(n % 2 == 1 && n < 4), 1, 1)).collect();
        let s = stats_from(&records);
        assert!((s.m() - 0.4).abs() < 1e-15);
        let w = w_hat(&s, Regime::Full).unwrap();
        assert!((w.value - 0.24).abs() < 1e-15);
        assert!(!w.clamped);
        // M in {0, 1}: W = 0
        let s = stats_from(&[record(1, 1, 1, 1, 1), record(2, 2, 2, 1, 1)]);
        let w = w_hat(&s, Regime::Full).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn negative_w_is_clamped() {
        // Consistent plug-ins keep W >= 0; an inconsistent second moment
        // (Q < N^2) pushes it below zero.
        let records: Vec<_> = (1..=4).map(|n| record(n, 2, 1, 3, 1)).collect();
        let s = stats_from(&records);
        let bad = SampleMoments { mean: 1.0, second: 0.0, inverse: 1.0 };
        let w = w_hat_with(&s, Regime::Full, &bad).unwrap();
        assert!((w.raw - (2.0 * 0.25 * 4.0 / 9.0 - 0.25)).abs() < 1e-15);
        assert!(w.clamped);
        assert_eq!(w.value, 0.0);
        let w = w_hat(&s, Regime::Full).unwrap();
        assert!(!w.clamped && w.value > 0.0);
    }

    #[test]
    fn interval_reference() {
        let ci = interval(CenterKind::Z, 0.6, 8e-5 * 100.0, 100, 0.05).unwrap();
        assert!((ci.half_width - 0.0175305).abs() < 1e-6);
        assert!((ci.lo() - 0.582470).abs() < 1e-6);
        assert!((ci.hi() - 0.617531).abs() < 1e-6);
        let ci = interval(CenterKind::Z, 0.3, 0.0, 50, 0.05).unwrap();
        assert_eq!((ci.lo(), ci.hi()), (0.3, 0.3));
        let ci = interval(CenterKind::M, 0.3, 5.0, 50, 1.0).unwrap();
        assert_eq!((ci.lo(), ci.hi()), (0.3, 0.3));
        let ci = interval(CenterKind::Z, 0.99, 1.0, 10, 0.05).unwrap();
        assert_eq!(ci.hi(), 1.0);
        assert!(interval(CenterKind::Z, 0.5, 1.0, 10, 0.0).is_err());
        assert!(interval(CenterKind::Z, 0.5, f64::NAN, 10, 0.5).is_err());
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        let cases = [
            (0.975, 1.959963984540054),
            (0.75, 0.6744897501960817),
            (0.99, 2.3263478740408408),
            (0.841344746068543, 1.0),
            (1e-6, -4.753424308822899),
        ];
        for (p, x) in cases {
            assert!((normal_quantile(p).unwrap() - x).abs() < 1e-9, "p = {p}");
        }
        for p in [1e-6, 0.01, 0.2, 0.4999] {
            let lo = normal_quantile(p).unwrap();
            let hi = normal_quantile(1.0 - p).unwrap();
            assert!((lo + hi).abs() < 1e-9);
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mut p = 1e-6;
        while p < 1.0 - 1e-6 {
            let x = normal_quantile(p).unwrap();
            let back = 0.5 * erfc(-x * FRAC_1_SQRT_2);
            // dx = dp / phi(x)
            let phi = (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
            assert!(((back - p) / phi).abs() < 1e-9, "p = {p}");
            p += 1.7e-4;
        }
    }

    #[test]
    fn known_moment_plug_in() {
        let law = SampleSizeLaw::ZDependentBinomial { trials: 10 };
        let records: Vec<_> = (1..=4).map(|n| record(n, 6, 3, 2, 2)).collect();
        let s = stats_from(&records);
        let v = v_hat_known_moments(&s, 0.5, &law, Regime::Full).unwrap();
        assert!((v - v_theoretical(0.5, 2.0, 4.0, 4.0, 4.0, 6.0, 38.5)).abs() < 1e-15);
        let fixed = SampleSizeLaw::Fixed { size: 3 };
        assert!(v_hat_known_moments(&s, 0.5, &SampleSizeLaw::GrowingBinomialClamped { trials: 3, p: 0.1 }, Regime::Full).is_err());
        let via_law = v_hat_known_moments(&s, 0.4, &fixed, Regime::Full).unwrap();
        let via_k = v_hat_fixed_k(&s, 0.4, 3, Regime::Full).unwrap();
        assert!((via_law - via_k).abs() < 1e-15);
    }

    #[test]
    fn censored_warning_only_for_single_ball() {
        assert!(censored_warning(&SampleSizeLaw::Fixed { size: 1 }).is_some());
        assert!(censored_warning(&SampleSizeLaw::Fixed { size: 2 }).is_none());
    }

    #[test]
    fn snapshot_csv_columns() {
        let records: Vec<_> = (1..=3).map(|n| record(n, 2, 1, 2, 3)).collect();
        let mut s = RunningStats::new();
        let scenario = crate::scenarios::catalog("1a").unwrap();
        let inf = Inference::for_scenario(&scenario, 0.05);
        let mut rows = Vec::new();
        for r in &records {
            s.update(r).unwrap();
            rows.push(inf.snapshot(&s).unwrap());
        }
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], SNAPSHOT_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.split(',').count() == 16));
        assert!(lines[1].ends_with(",,,,"));
        assert!(!lines[2].ends_with(','));
    }

    #[test]
    fn track_matches_plain_run() {
        let s = crate::scenarios::catalog("1c").unwrap();
        let inf = Inference::for_scenario(&s, 0.05);
        let (t, snaps) = track(&s, 1000, 7, 0, 100, &inf).unwrap();
        let plain = crate::urn::run_thinned(&s, 1000, 7, 0, 100).unwrap();
        assert_eq!(t, plain);
        assert_eq!(snaps.len(), 10);
        assert_eq!(snaps.last().unwrap().z, t.records.last().unwrap().proportion());
        // Known-moment plug-in uses f(Z), g(Z) at the center.
        let last = snaps.last().unwrap();
        let law = &s.sample_size;
        let ci = last.ci_z.unwrap();
        let mut stats = RunningStats::new();
        let mut sim = Simulation::new(&s, 7, 0);
        sim.run_for(1000, |r| stats.update(r).unwrap()).unwrap();
        let v = v_hat_known_moments(&stats, stats.z(), law, Regime::Full).unwrap();
        assert_eq!(last.v, v);
        assert!(ci.half_width > 0.0);
    }

    #[test]
    fn w_positive_on_reference_run() {
        let s = crate::scenarios::catalog("1a").unwrap();
        let inf = Inference::for_scenario(&s, 0.05);
        let (_, snaps) = track(&s, 1500, 42, 0, 1500, &inf).unwrap();
        let last = snaps.last().unwrap();
        assert!(last.w.value > 0.0 && !last.w.clamped);
        assert!(last.v > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn variance_forms_agree(
            z in 0.0f64..=1.0,
            m in 1.0f64..50.0,
            q_a in 1.0f64..2500.0,
            q_b in 1.0f64..2500.0,
            corr in 0.0f64..=1.0,
            n_mean in 1.0f64..50.0,
            extra in 0.0f64..=1.0,
            k in 1u64..50,
        ) {
            let q_ab = 1.0 + corr * ((q_a * q_b).sqrt() - 1.0);
            let q = n_mean * n_mean + extra * n_mean * n_mean;
            let a = v_theoretical(z, m, q_a, q_b, q_ab, n_mean, q);
            let b = v_theoretical_grouped(z, m, q_a, q_b, q_ab, n_mean, q);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let k = k as f64;
            let general = v_theoretical(z, m, q_a, q_b, q_ab, k, k * k);
            let fixed = v_fixed_k(z, m, q_a, q_b, q_ab, k);
            let fixed2 = v_fixed_k_grouped(z, m, q_a, q_b, q_ab, k);
            prop_assert!((general - fixed).abs() <= 1e-12 * general.abs().max(1.0));
            prop_assert!((fixed - fixed2).abs() <= 1e-12 * fixed.abs().max(1.0));
        }
    }
}
