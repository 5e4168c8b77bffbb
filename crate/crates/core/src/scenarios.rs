//! Sample-size laws, reinforcement laws and the catalog of built-in
//! scenarios.
//!
//! Laws are plain data (serializable, hashable through their TOML form).
//! The only stateful law, the absorbed random walk, keeps its walker inside
//! a per-trajectory [`Dynamics`] value rather than in the shared law.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pmf::binomial_table;
use crate::randkit::{
    binomial_unchecked, multinomial_unchecked, negative_binomial_unchecked, validate_weights, RngStream,
};
use crate::urn::UrnState;

const MOMENT_TOL: f64 = 1e-12;

/// Probability rule for the time-dependent laws, evaluated at step `n >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayRule {
    /// `1 / sqrt(n)`
    InvSqrt,
    /// `min(1, 1/2 + 1/sqrt(n))`
    HalfPlusInvSqrt,
    /// `1 / sqrt(n + 1)`
    InvSqrtNext,
    Constant(f64),
}

impl DecayRule {
    pub fn at(&self, n: u64) -> f64 {
        let n = n.max(1) as f64;
        match *self {
            DecayRule::InvSqrt => 1.0 / n.sqrt(),
            DecayRule::HalfPlusInvSqrt => (0.5 + 1.0 / n.sqrt()).min(1.0),
            DecayRule::InvSqrtNext => 1.0 / (n + 1.0).sqrt(),
            DecayRule::Constant(p) => p,
        }
    }

    pub fn limit(&self) -> f64 {
        match *self {
            DecayRule::InvSqrt | DecayRule::InvSqrtNext => 0.0,
            DecayRule::HalfPlusInvSqrt => 0.5,
            DecayRule::Constant(p) => p,
        }
    }

    /// Largest value the rule takes over `n >= 1`.
    pub fn sup(&self) -> f64 {
        match *self {
            DecayRule::InvSqrt | DecayRule::HalfPlusInvSqrt => 1.0,
            DecayRule::InvSqrtNext => 1.0 / 2f64.sqrt(),
            DecayRule::Constant(p) => p,
        }
    }

    fn validate(&self) -> Result<()> {
        if let DecayRule::Constant(p) = self {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("constant probability {p} is not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A finite law on positive integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscreteLawFields", into = "DiscreteLawFields")]
pub struct DiscreteLaw {
    values: Vec<u64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteLawFields {
    values: Vec<u64>,
    weights: Vec<f64>,
}

impl TryFrom<DiscreteLawFields> for DiscreteLaw {
    type Error = Error;

    fn try_from(f: DiscreteLawFields) -> Result<Self> {
        DiscreteLaw::new(f.values, f.weights)
    }
}

impl From<DiscreteLaw> for DiscreteLawFields {
    fn from(d: DiscreteLaw) -> Self {
        DiscreteLawFields {
            values: d.values,
            weights: d.weights,
        }
    }
}

impl DiscreteLaw {
    pub fn new(values: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        validate_weights("weights", &weights).map_err(|e| Error::Config(e.to_string()))?;
        if values.contains(&0) {
            return Err(Error::Config("law values must be at least 1".into()));
        }
        Ok(DiscreteLaw { values, weights })
    }

    pub fn uniform(range: RangeInclusive<u64>) -> Self {
        let values: Vec<u64> = range.collect();
        let w = 1.0 / values.len() as f64;
        let weights = vec![w; values.len()];
        DiscreteLaw { values, weights }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn min(&self) -> u64 {
        self.values.iter().copied().min().unwrap_or(0)
    }

    /// `E[V^p]` for real `p`.
    pub fn moment(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| (*v as f64).powf(p) * w)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| *v as f64 * w).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| (*v as f64) * (*v as f64) * w)
            .sum()
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        let mut u = rng.uniform();
        for (v, w) in self.values.iter().zip(&self.weights) {
            if u < *w {
                return *v;
            }
            u -= w;
        }
        let last = self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(self.values.len() - 1);
        self.values[last]
    }

    pub fn table(&self) -> Vec<(u64, f64)> {
        self.values
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, w)| (*v, *w))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Sample-size laws
// ---------------------------------------------------------------------------

/// Law of the number of balls drawn at each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SampleSizeLaw {
    Fixed {
        size: u64,
    },
    /// Independent of the past, same law at every step.
    IidDiscrete {
        dist: DiscreteLaw,
    },
    /// `shift + Binomial(trials, p_n)`.
    ShiftedBinomialTimeDecay {
        shift: u64,
        trials: u64,
        rule: DecayRule,
    },
    /// `1 + Binomial(trials, Z_{n-1})`.
    ZDependentBinomial {
        trials: u64,
    },
    /// Lazy symmetric nearest-neighbour walk absorbed at 1 and `barrier`.
    AbsorbedRandomWalk {
        barrier: u64,
        step_prob: f64,
        initial: DiscreteLaw,
    },
    /// `min(1 + Binomial(trials + ceil(n^(1/3)), p), S_{n-1})`.
    GrowingBinomialClamped {
        trials: u64,
        p: f64,
    },
}

/// Closed-form conditional moments `f(z) = E[N]`, `g(z) = E[N^2]`,
/// `h(z) = E[1/N]` of the next sample size given the current proportion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMoments {
    pub mean: f64,
    pub second: f64,
    pub inverse: f64,
}

/// Smallest `c` with `c^3 >= n`.
pub fn ceil_cbrt(n: u64) -> u64 {
    let mut c = (n as f64).cbrt().round() as u64;
    while c.saturating_mul(c).saturating_mul(c) < n {
        c += 1;
    }
    while c > 0 && (c - 1) * (c - 1) * (c - 1) >= n {
        c -= 1;
    }
    c
}

impl SampleSizeLaw {
    pub fn name(&self) -> &'static str {
        match self {
            SampleSizeLaw::Fixed { .. } => "fixed",
            SampleSizeLaw::IidDiscrete { .. } => "iid-discrete",
            SampleSizeLaw::ShiftedBinomialTimeDecay { .. } => "shifted-binomial-time-decay",
            SampleSizeLaw::ZDependentBinomial { .. } => "z-dependent-binomial",
            SampleSizeLaw::AbsorbedRandomWalk { .. } => "absorbed-random-walk",
            SampleSizeLaw::GrowingBinomialClamped { .. } => "growing-binomial-clamped",
        }
    }

    /// The bound `C_N` on the sample size, if there is one.
    pub fn max_value(&self) -> Option<u64> {
        match self {
            SampleSizeLaw::Fixed { size } => Some(*size),
            SampleSizeLaw::IidDiscrete { dist } => Some(dist.max()),
            SampleSizeLaw::ShiftedBinomialTimeDecay { shift, trials, .. } => Some(shift + trials),
            SampleSizeLaw::ZDependentBinomial { trials } => Some(1 + trials),
            SampleSizeLaw::AbsorbedRandomWalk { barrier, .. } => Some(*barrier),
            SampleSizeLaw::GrowingBinomialClamped { .. } => None,
        }
    }

    pub fn fixed_size(&self) -> Option<u64> {
        match self {
            SampleSizeLaw::Fixed { size } => Some(*size),
            _ => None,
        }
    }

    pub fn is_stateful(&self) -> bool {
        matches!(self, SampleSizeLaw::AbsorbedRandomWalk { .. })
    }

    /// `(f(z), g(z), h(z))` when the law has them in closed form.
    pub fn conditional_moments(&self, z: f64) -> Option<SampleMoments> {
        match self {
            SampleSizeLaw::Fixed { size } => {
                let k = *size as f64;
                Some(SampleMoments {
                    mean: k,
                    second: k * k,
                    inverse: 1.0 / k,
                })
            }
            SampleSizeLaw::IidDiscrete { dist } => Some(SampleMoments {
                mean: dist.mean(),
                second: dist.second_moment(),
                inverse: dist.moment(-1.0),
            }),
            SampleSizeLaw::ZDependentBinomial { trials } => {
                let kappa = *trials as f64;
                let mean = 1.0 + kappa * z;
                let second = kappa * z * (1.0 - z) + mean * mean;
                // (1 - (1-z)^(k+1)) / ((k+1) z), continuous at z = 0 with value 1
                let inverse = if z <= 0.0 {
                    1.0
                } else {
                    -((kappa + 1.0) * (-z).ln_1p()).exp_m1() / ((kappa + 1.0) * z)
                };
                Some(SampleMoments { mean, second, inverse })
            }
            _ => None,
        }
    }

    fn validate(&self, a: u64, b: u64) -> Result<()> {
        let capacity = a + b;
        match self {
            SampleSizeLaw::Fixed { size } => {
                if *size == 0 {
                    return Err(Error::Config("fixed sample size must be at least 1".into()));
                }
            }
            SampleSizeLaw::IidDiscrete { .. } => {}
            SampleSizeLaw::ShiftedBinomialTimeDecay { shift, rule, .. } => {
                if *shift == 0 {
                    return Err(Error::Config("shift must be at least 1 so that N >= 1".into()));
                }
                rule.validate()?;
            }
            SampleSizeLaw::ZDependentBinomial { .. } => {}
            SampleSizeLaw::AbsorbedRandomWalk {
                barrier,
                step_prob,
                initial,
            } => {
                if *barrier < 3 || *barrier > capacity {
                    return Err(Error::Config(format!(
                        "barrier {barrier} must satisfy 3 <= h <= a + b = {capacity}"
                    )));
                }
                if !(*step_prob > 0.0 && *step_prob <= 0.5) {
                    return Err(Error::Config(format!("step probability {step_prob} not in (0, 1/2]")));
                }
                if initial.min() < 2 || initial.max() > barrier - 1 {
                    return Err(Error::Config(format!(
                        "initial walker law must live on 2..={}",
                        barrier - 1
                    )));
                }
            }
            SampleSizeLaw::GrowingBinomialClamped { p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!("p = {p} is not in [0, 1]")));
                }
            }
        }
        if let Some(max) = self.max_value() {
            if max > capacity {
                return Err(Error::Config(format!(
                    "sample-size law `{}` can draw {max} balls but the initial urn holds {capacity}",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    /// Law of `N_n` given the state after step `n - 1` and the walker
    /// position (for the random walk, the walker moves to the drawn value).
    pub fn distribution(&self, n: u64, prev: &UrnState, walker: Option<u64>) -> Result<Vec<(u64, f64)>> {
        Ok(match self {
            SampleSizeLaw::Fixed { size } => vec![(*size, 1.0)],
            SampleSizeLaw::IidDiscrete { dist } => dist.table(),
            SampleSizeLaw::ShiftedBinomialTimeDecay { shift, trials, rule } => binomial_table(*trials, rule.at(n))
                .into_iter()
                .map(|(k, p)| (shift + k, p))
                .collect(),
            SampleSizeLaw::ZDependentBinomial { trials } => binomial_table(*trials, prev.proportion())
                .into_iter()
                .map(|(k, p)| (1 + k, p))
                .collect(),
            SampleSizeLaw::AbsorbedRandomWalk {
                barrier,
                step_prob,
                initial,
            } => match walker {
                None => initial.table(),
                Some(w) if w <= 1 || w >= *barrier => vec![(w, 1.0)],
                Some(w) => vec![(w - 1, *step_prob), (w, 1.0 - 2.0 * step_prob), (w + 1, *step_prob)]
                    .into_iter()
                    .filter(|(_, p)| *p > 0.0)
                    .collect(),
            },
            SampleSizeLaw::GrowingBinomialClamped { trials, p } => {
                let total = prev.total();
                let mut out: Vec<(u64, f64)> = Vec::new();
                for (k, q) in binomial_table(trials + ceil_cbrt(n), *p) {
                    let v = (1 + k).min(total);
                    match out.last_mut() {
                        Some((last, mass)) if *last == v => *mass += q,
                        _ => out.push((v, q)),
                    }
                }
                out
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Reinforcement laws
// ---------------------------------------------------------------------------

/// Law of one reinforcement factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Discrete {
        #[serde(flatten)]
        law: DiscreteLaw,
    },
    /// `1 + Binomial(trials, p_n)`.
    ShiftedBinomial { trials: u64, rule: DecayRule },
    /// `1 + NegativeBinomial(r, p_n)` with mean `r p / (1 - p)`.
    ShiftedNegativeBinomial { r: u64, rule: DecayRule },
}

impl Marginal {
    pub fn discrete(law: DiscreteLaw) -> Self {
        Marginal::Discrete { law }
    }

    /// `(E[V], E[V^2])` at step `n`.
    pub fn moments(&self, n: u64) -> (f64, f64) {
        match self {
            Marginal::Discrete { law } => (law.mean(), law.second_moment()),
            Marginal::ShiftedBinomial { trials, rule } => binomial_moments(*trials, rule.at(n)),
            Marginal::ShiftedNegativeBinomial { r, rule } => negative_binomial_moments(*r, rule.at(n)),
        }
    }

    pub fn moment_limits(&self) -> (f64, f64) {
        match self {
            Marginal::Discrete { law } => (law.mean(), law.second_moment()),
            Marginal::ShiftedBinomial { trials, rule } => binomial_moments(*trials, rule.limit()),
            Marginal::ShiftedNegativeBinomial { r, rule } => negative_binomial_moments(*r, rule.limit()),
        }
    }

    #[inline]
    pub fn sample(&self, n: u64, rng: &mut RngStream) -> u64 {
        match self {
            Marginal::Discrete { law } => law.sample(rng),
            Marginal::ShiftedBinomial { trials, rule } => 1 + binomial_unchecked(rng, *trials, rule.at(n)),
            Marginal::ShiftedNegativeBinomial { r, rule } => 1 + negative_binomial_unchecked(rng, *r, rule.at(n)),
        }
    }

    pub fn table(&self, n: u64) -> Result<Vec<(u64, f64)>> {
        match self {
            Marginal::Discrete { law } => Ok(law.table()),
            Marginal::ShiftedBinomial { trials, rule } => Ok(binomial_table(*trials, rule.at(n))
                .into_iter()
                .map(|(k, p)| (1 + k, p))
                .collect()),
            Marginal::ShiftedNegativeBinomial { .. } => Err(Error::UnboundedSupport("shifted-negative-binomial")),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Marginal::Discrete { .. } => Ok(()),
            Marginal::ShiftedBinomial { rule, .. } => rule.validate(),
            Marginal::ShiftedNegativeBinomial { r, rule } => {
                rule.validate()?;
                if *r == 0 {
                    return Err(Error::Config("negative binomial needs r >= 1".into()));
                }
                if rule.sup() >= 1.0 {
                    return Err(Error::Config(
                        "negative binomial rule reaches p = 1 (infinite mean)".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

fn binomial_moments(trials: u64, p: f64) -> (f64, f64) {
    let k = trials as f64;
    let mean = 1.0 + k * p;
    (mean, k * p * (1.0 - p) + mean * mean)
}

fn negative_binomial_moments(r: u64, p: f64) -> (f64, f64) {
    let r = r as f64;
    let mean = 1.0 + r * p / (1.0 - p);
    let var = r * p / ((1.0 - p) * (1.0 - p));
    (mean, var + mean * mean)
}

/// Joint law of the reinforcement pair `(A_n, B_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReinforcementLaw {
    /// `A` and `B` independent with the given marginals.
    Independent { a: Marginal, b: Marginal },
    /// Finitely many `[A, B]` pairs with weights.
    FiniteJoint { pairs: Vec<[u64; 2]>, weights: Vec<f64> },
    /// `A = 1 + Y1`, `B = 1 + Y2` with `(Y1, Y2, Y3)` multinomial.
    MultinomialCoupled { size: u64, probs: [f64; 3] },
    /// `A = B`, drawn from one marginal.
    Identical { marginal: Marginal },
}

/// `(m_A, m_B, q_A, q_B, q_AB)`: first and second moments of the pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReinforcementMoments {
    pub m_a: f64,
    pub m_b: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub q_ab: f64,
}

impl ReinforcementLaw {
    pub fn name(&self) -> &'static str {
        match self {
            ReinforcementLaw::Independent { .. } => "independent",
            ReinforcementLaw::FiniteJoint { .. } => "finite-joint",
            ReinforcementLaw::MultinomialCoupled { .. } => "multinomial-coupled",
            ReinforcementLaw::Identical { .. } => "identical",
        }
    }

    #[inline]
    pub fn sample(&self, n: u64, rng: &mut RngStream) -> (u64, u64) {
        match self {
            ReinforcementLaw::Independent { a, b } => {
                let x = a.sample(n, rng);
                (x, b.sample(n, rng))
            }
            ReinforcementLaw::FiniteJoint { pairs, weights } => {
                let mut u = rng.uniform();
                for (pair, w) in pairs.iter().zip(weights) {
                    if u < *w {
                        return (pair[0], pair[1]);
                    }
                    u -= w;
                }
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(pairs.len() - 1);
                (pairs[last][0], pairs[last][1])
            }
            ReinforcementLaw::MultinomialCoupled { size, probs } => {
                let y = multinomial_unchecked(rng, *size, probs);
                (1 + y[0], 1 + y[1])
            }
            ReinforcementLaw::Identical { marginal } => {
                let x = marginal.sample(n, rng);
                (x, x)
            }
        }
    }

    /// Moments at step `n`.
    pub fn moments(&self, n: u64) -> ReinforcementMoments {
        self.moments_with(|m| m.moments(n))
    }

    /// Limits of the moment sequences as `n` grows.
    pub fn moment_limits(&self) -> ReinforcementMoments {
        self.moments_with(Marginal::moment_limits)
    }

    fn moments_with(&self, marginal: impl Fn(&Marginal) -> (f64, f64)) -> ReinforcementMoments {
        match self {
            ReinforcementLaw::Independent { a, b } => {
                let (m_a, q_a) = marginal(a);
                let (m_b, q_b) = marginal(b);
                ReinforcementMoments {
                    m_a,
                    m_b,
                    q_a,
                    q_b,
                    q_ab: m_a * m_b,
                }
            }
            ReinforcementLaw::FiniteJoint { pairs, weights } => {
                let mut m = ReinforcementMoments {
                    m_a: 0.0,
                    m_b: 0.0,
                    q_a: 0.0,
                    q_b: 0.0,
                    q_ab: 0.0,
                };
                for (pair, w) in pairs.iter().zip(weights) {
                    let (x, y) = (pair[0] as f64, pair[1] as f64);
                    m.m_a += w * x;
                    m.m_b += w * y;
                    m.q_a += w * x * x;
                    m.q_b += w * y * y;
                    m.q_ab += w * x * y;
                }
                m
            }
            ReinforcementLaw::MultinomialCoupled { size, probs } => {
                let s = *size as f64;
                let (p1, p2) = (probs[0], probs[1]);
                let m_a = 1.0 + s * p1;
                let m_b = 1.0 + s * p2;
                ReinforcementMoments {
                    m_a,
                    m_b,
                    q_a: s * p1 * (1.0 - p1) + m_a * m_a,
                    q_b: s * p2 * (1.0 - p2) + m_b * m_b,
                    // E[(1+Y1)(1+Y2)] with E[Y1 Y2] = s(s-1) p1 p2
                    q_ab: 1.0 + s * p1 + s * p2 + s * (s - 1.0) * p1 * p2,
                }
            }
            ReinforcementLaw::Identical { marginal: law } => {
                let (m, q) = marginal(law);
                ReinforcementMoments {
                    m_a: m,
                    m_b: m,
                    q_a: q,
                    q_b: q,
                    q_ab: q,
                }
            }
        }
    }

    /// Joint table of `(A, B)` at step `n`, when the support is finite.
    pub fn distribution(&self, n: u64) -> Result<Vec<((u64, u64), f64)>> {
        Ok(match self {
            ReinforcementLaw::Independent { a, b } => {
                let ta = a.table(n)?;
                let tb = b.table(n)?;
                ta.iter()
                    .flat_map(|(x, p)| tb.iter().map(move |(y, q)| ((*x, *y), p * q)))
                    .collect()
            }
            ReinforcementLaw::FiniteJoint { pairs, weights } => pairs
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(p, w)| ((p[0], p[1]), *w))
                .collect(),
            ReinforcementLaw::MultinomialCoupled { size, probs } => {
                let mut out = Vec::new();
                let rest = 1.0 - probs[0];
                for (y1, p) in binomial_table(*size, probs[0]) {
                    let cond = if rest > 0.0 { (probs[1] / rest).clamp(0.0, 1.0) } else { 0.0 };
                    for (y2, q) in binomial_table(size - y1, cond) {
                        out.push(((1 + y1, 1 + y2), p * q));
                    }
                }
                out
            }
            ReinforcementLaw::Identical { marginal } => {
                marginal.table(n)?.into_iter().map(|(x, p)| ((x, x), p)).collect()
            }
        })
    }

    /// The law with `B` forced equal to `A` (same `A` marginal).
    pub fn diagonal(&self) -> ReinforcementLaw {
        let marginal = match self {
            ReinforcementLaw::Independent { a, .. } => a.clone(),
            ReinforcementLaw::Identical { marginal } => marginal.clone(),
            ReinforcementLaw::FiniteJoint { pairs, weights } => {
                let mut values: Vec<u64> = pairs.iter().map(|p| p[0]).collect();
                values.sort_unstable();
                values.dedup();
                let weights = values
                    .iter()
                    .map(|v| {
                        pairs
                            .iter()
                            .zip(weights)
                            .filter(|(p, _)| p[0] == *v)
                            .map(|(_, w)| *w)
                            .sum()
                    })
                    .collect();
                Marginal::discrete(DiscreteLaw { values, weights })
            }
            ReinforcementLaw::MultinomialCoupled { size, probs } => Marginal::ShiftedBinomial {
                trials: *size,
                rule: DecayRule::Constant(probs[0]),
            },
        };
        ReinforcementLaw::Identical { marginal }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ReinforcementLaw::Independent { a, b } => {
                a.validate()?;
                b.validate()
            }
            ReinforcementLaw::FiniteJoint { pairs, weights } => {
                if pairs.len() != weights.len() {
                    return Err(Error::Config(format!(
                        "{} pairs but {} weights",
                        pairs.len(),
                        weights.len()
                    )));
                }
                validate_weights("weights", weights).map_err(|e| Error::Config(e.to_string()))?;
                if pairs.iter().any(|p| p[0] == 0 || p[1] == 0) {
                    return Err(Error::Config("reinforcement values must be at least 1".into()));
                }
                Ok(())
            }
            ReinforcementLaw::MultinomialCoupled { probs, .. } => {
                validate_weights("probs", probs).map_err(|e| Error::Config(e.to_string()))
            }
            ReinforcementLaw::Identical { marginal } => marginal.validate(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Which regime of the limit theory the scenario belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// `m_{A,n} = m_{B,n}` for every `n`: random diffuse limit.
    EqualMeans,
    /// Different limit means: the proportion goes to 0 or 1.
    UnequalMeans,
}

/// How confidence intervals plug in the sample-size moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    /// Empirical means of `N`, `N^2`, `1/N`.
    #[default]
    Estimated,
    /// Closed-form `f`, `g`, `h` of the sample-size law.
    Known,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialUrn {
    pub a: u64,
    pub b: u64,
}

/// A complete, validated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub case: Case,
    #[serde(default)]
    pub sample_moments: MomentSource,
    pub urn: InitialUrn,
    pub sample_size: SampleSizeLaw,
    pub reinforcement: ReinforcementLaw,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        a: u64,
        b: u64,
        sample_size: SampleSizeLaw,
        reinforcement: ReinforcementLaw,
        case: Case,
    ) -> Result<Self> {
        let s = Scenario {
            name: name.into(),
            case,
            sample_moments: MomentSource::Estimated,
            urn: InitialUrn { a, b },
            sample_size,
            reinforcement,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_known_moments(mut self) -> Result<Self> {
        self.sample_moments = MomentSource::Known;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let InitialUrn { a, b } = self.urn;
        if a == 0 || b == 0 {
            return Err(Error::Config("initial composition needs a >= 1 and b >= 1".into()));
        }
        self.sample_size.validate(a, b)?;
        self.reinforcement.validate()?;
        if self.sample_moments == MomentSource::Known && self.sample_size.conditional_moments(0.5).is_none() {
            return Err(Error::Config(format!(
                "sample-size law `{}` has no closed-form conditional moments",
                self.sample_size.name()
            )));
        }
        let limits = self.reinforcement.moment_limits();
        match self.case {
            Case::EqualMeans => {
                for n in 1..=100 {
                    let m = self.reinforcement.moments(n);
                    if (m.m_a - m.m_b).abs() > MOMENT_TOL * m.m_a.max(1.0) {
                        return Err(Error::Config(format!(
                            "declared equal means but m_A = {} and m_B = {} at step {n}",
                            m.m_a, m.m_b
                        )));
                    }
                }
                if (limits.m_a - limits.m_b).abs() > MOMENT_TOL * limits.m_a.max(1.0) {
                    return Err(Error::Config("declared equal means but the limits differ".into()));
                }
            }
            Case::UnequalMeans => {
                if (limits.m_a - limits.m_b).abs() <= MOMENT_TOL * limits.m_a.max(1.0) {
                    return Err(Error::Config(format!(
                        "declared unequal means but m_A = m_B = {}",
                        limits.m_a
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> UrnState {
        UrnState {
            n: 0,
            h: self.urn.a,
            k: self.urn.b,
        }
    }

    /// Fresh per-trajectory dynamics (walker state starts unset).
    pub fn dynamics(&self) -> Dynamics<'_> {
        Dynamics {
            sample_size: &self.sample_size,
            reinforcement: &self.reinforcement,
            walker: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// First 16 hex digits of the SHA-256 of the TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Same scenario with `B_n` forced equal to `A_n`.
    pub fn diagonal_reduction(&self) -> Scenario {
        Scenario {
            name: format!("{}-diag", self.name),
            case: Case::EqualMeans,
            sample_moments: self.sample_moments,
            urn: self.urn,
            sample_size: self.sample_size.clone(),
            reinforcement: self.reinforcement.diagonal(),
        }
    }
}

/// Per-trajectory view of a scenario: shared laws plus the walker state of
/// stateful sample-size laws.
#[derive(Clone, Debug)]
pub struct Dynamics<'a> {
    sample_size: &'a SampleSizeLaw,
    reinforcement: &'a ReinforcementLaw,
    walker: Option<u64>,
}

impl Dynamics<'_> {
    pub fn sample_size_law_name(&self) -> &'static str {
        self.sample_size.name()
    }

    pub fn walker(&self) -> Option<u64> {
        self.walker
    }

    /// Draws `N_n` given the state after step `n - 1`.
    pub fn sample_size(&mut self, n: u64, prev: &UrnState, rng: &mut RngStream) -> Result<u64> {
        sample_size(self.sample_size, &mut self.walker, n, prev, rng)
    }

    #[inline]
    pub fn reinforcement(&self, n: u64, rng: &mut RngStream) -> (u64, u64) {
        self.reinforcement.sample(n, rng)
    }
}

/// Draws `N_n`. `walker` carries the random-walk position between calls and
/// is ignored by the stateless laws.
pub fn sample_size(
    law: &SampleSizeLaw,
    walker: &mut Option<u64>,
    n: u64,
    prev: &UrnState,
    rng: &mut RngStream,
) -> Result<u64> {
    let value = match law {
        SampleSizeLaw::Fixed { size } => *size,
        SampleSizeLaw::IidDiscrete { dist } => dist.sample(rng),
        SampleSizeLaw::ShiftedBinomialTimeDecay { shift, trials, rule } => {
            shift + binomial_unchecked(rng, *trials, rule.at(n))
        }
        SampleSizeLaw::ZDependentBinomial { trials } => 1 + binomial_unchecked(rng, *trials, prev.proportion()),
        SampleSizeLaw::AbsorbedRandomWalk {
            barrier,
            step_prob,
            initial,
        } => {
            let next = match *walker {
                None => initial.sample(rng),
                Some(w) if w <= 1 || w >= *barrier => w,
                Some(w) => {
                    let u = rng.uniform();
                    if u < *step_prob {
                        w - 1
                    } else if u < 2.0 * step_prob {
                        w + 1
                    } else {
                        w
                    }
                }
            };
            *walker = Some(next);
            next
        }
        SampleSizeLaw::GrowingBinomialClamped { trials, p } => {
            let proposal = 1 + binomial_unchecked(rng, trials + ceil_cbrt(n), *p);
            proposal.min(prev.total())
        }
    };
    if value == 0 || value > prev.total() {
        return Err(Error::SampleSizeOutOfRange {
            n,
            law: law.name(),
            proposed: value,
            total: prev.total(),
        });
    }
    Ok(value)
}

/// Draws a reinforcement pair for step `n`.
pub fn sample_reinforcement(law: &ReinforcementLaw, n: u64, rng: &mut RngStream) -> (u64, u64) {
    law.sample(n, rng)
}

fn uniform_1_to_5() -> Marginal {
    Marginal::discrete(DiscreteLaw::uniform(1..=5))
}

fn decaying_binomial_factors() -> ReinforcementLaw {
    let m = Marginal::ShiftedBinomial {
        trials: 5,
        rule: DecayRule::HalfPlusInvSqrt,
    };
    ReinforcementLaw::Independent { a: m.clone(), b: m }
}

/// Names of the built-in scenarios, in catalog order.
pub const CATALOG_NAMES: [&str; 8] = ["1a", "1b", "1c", "1d", "1e", "2", "3a", "3b"];

/// All built-in scenarios.
pub fn builtin_catalog() -> Vec<Scenario> {
    CATALOG_NAMES.iter().map(|n| catalog(n).expect("catalog entries are valid")).collect()
}

/// One built-in scenario by name.
pub fn catalog(name: &str) -> Option<Scenario> {
    let uniform_n = || SampleSizeLaw::IidDiscrete {
        dist: DiscreteLaw::uniform(1..=5),
    };
    let independent_uniform = || ReinforcementLaw::Independent {
        a: uniform_1_to_5(),
        b: uniform_1_to_5(),
    };
    let scenario = match name {
        "1a" => Scenario::new("1a", 5, 5, uniform_n(), independent_uniform(), Case::EqualMeans),
        "1b" => Scenario::new(
            "1b",
            5,
            5,
            uniform_n(),
            ReinforcementLaw::MultinomialCoupled {
                size: 12,
                probs: [4.0 / 15.0, 4.0 / 15.0, 7.0 / 15.0],
            },
            Case::EqualMeans,
        ),
        "1c" => Scenario::new(
            "1c",
            6,
            6,
            SampleSizeLaw::ZDependentBinomial { trials: 10 },
            independent_uniform(),
            Case::EqualMeans,
        )
        .and_then(Scenario::with_known_moments),
        "1d" => Scenario::new(
            "1d",
            6,
            6,
            SampleSizeLaw::ShiftedBinomialTimeDecay {
                shift: 2,
                trials: 10,
                rule: DecayRule::InvSqrt,
            },
            decaying_binomial_factors(),
            Case::EqualMeans,
        ),
        "1e" => Scenario::new(
            "1e",
            30,
            30,
            SampleSizeLaw::AbsorbedRandomWalk {
                barrier: 50,
                step_prob: 0.25,
                initial: DiscreteLaw::uniform(2..=49),
            },
            decaying_binomial_factors(),
            Case::EqualMeans,
        ),
        "2" => {
            let m = Marginal::ShiftedNegativeBinomial {
                r: 3,
                rule: DecayRule::InvSqrtNext,
            };
            Scenario::new(
                "2",
                5,
                5,
                SampleSizeLaw::GrowingBinomialClamped { trials: 3, p: 0.1 },
                ReinforcementLaw::Independent { a: m.clone(), b: m },
                Case::EqualMeans,
            )
        }
        "3a" => Scenario::new(
            "3a",
            5,
            5,
            uniform_n(),
            ReinforcementLaw::FiniteJoint {
                pairs: vec![[1, 1], [3, 1], [1, 3], [3, 3]],
                weights: vec![3.0 / 16.0, 0.25, 1.0 / 16.0, 0.5],
            },
            Case::UnequalMeans,
        ),
        "3b" => Scenario::new(
            "3b",
            5,
            5,
            uniform_n(),
            ReinforcementLaw::FiniteJoint {
                pairs: vec![[1, 1], [10, 1], [1, 3], [10, 3]],
                weights: vec![0.2, 0.4, 0.2, 0.2],
            },
            Case::UnequalMeans,
        ),
        _ => return None,
    };
    Some(scenario.expect("built-in scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::derive_stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ceil_cbrt_exact() {
        let expect = [(1, 1), (2, 2), (8, 2), (9, 3), (27, 3), (28, 4), (1_000_000, 100), (1_000_001, 101)];
        for (n, c) in expect {
            assert_eq!(ceil_cbrt(n), c, "n = {n}");
        }
    }

    #[test]
    fn z_dependent_binomial_at_empty_color() {
        let law = SampleSizeLaw::ZDependentBinomial { trials: 10 };
        let prev = UrnState { n: 4, h: 0, k: 12 };
        let mut rng = derive_stream(1, 1);
        let mut walker = None;
        for _ in 0..1000 {
            assert_eq!(sample_size(&law, &mut walker, 5, &prev, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn absorbed_walker_stays_put() {
        let law = SampleSizeLaw::AbsorbedRandomWalk {
            barrier: 50,
            step_prob: 0.25,
            initial: DiscreteLaw::uniform(2..=49),
        };
        let prev = UrnState { n: 10, h: 500, k: 500 };
        let mut rng = derive_stream(1, 2);
        let mut walker = Some(50);
        for n in 11..1000 {
            assert_eq!(sample_size(&law, &mut walker, n, &prev, &mut rng).unwrap(), 50);
        }
        let mut walker = Some(1);
        assert_eq!(sample_size(&law, &mut walker, 11, &prev, &mut rng).unwrap(), 1);
    }

    #[test]
    fn walker_increments_are_centered_before_absorption() {
        let law = SampleSizeLaw::AbsorbedRandomWalk {
            barrier: 50,
            step_prob: 0.25,
            initial: DiscreteLaw::uniform(2..=49),
        };
        let prev = UrnState { n: 10, h: 500, k: 500 };
        let mut rng = derive_stream(8, 0);
        let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0.0);
        for rep in 0..20_000u64 {
            let mut walker = Some(2 + rep % 48);
            for n in 0..20 {
                let before = walker.unwrap();
                if before == 1 || before == 50 {
                    break;
                }
                let after = sample_size(&law, &mut walker, n + 2, &prev, &mut rng).unwrap();
                let d = after as f64 - before as f64;
                sum += d;
                sum_sq += d * d;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let se = ((sum_sq / count - mean * mean) / count).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean increment {mean} (se {se})");
    }

    #[test]
    fn growing_binomial_mean_at_step_one() {
        let law = SampleSizeLaw::GrowingBinomialClamped { trials: 3, p: 0.1 };
        let prev = UrnState { n: 0, h: 5, k: 5 };
        let mut rng = derive_stream(3, 3);
        let mut walker = None;
        let reps = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            let v = sample_size(&law, &mut walker, 1, &prev, &mut rng).unwrap();
            assert!((1..=5).contains(&v));
            sum += v as f64;
        }
        assert!(close(sum / reps as f64, 1.4, 0.01));
    }

    #[test]
    fn growing_binomial_clamps_to_urn() {
        let law = SampleSizeLaw::GrowingBinomialClamped { trials: 3, p: 1.0 };
        let prev = UrnState { n: 0, h: 1, k: 1 };
        let mut rng = derive_stream(3, 4);
        assert_eq!(sample_size(&law, &mut None, 1, &prev, &mut rng).unwrap(), 2);
        let table = law.distribution(1, &prev, None).unwrap();
        assert_eq!(table, vec![(2, 1.0)]);
    }

    #[test]
    fn reinforcement_sample_means() {
        let reps = 1_000_000;
        let mut rng = derive_stream(11, 0);

        let law = catalog("3a").unwrap().reinforcement;
        let (mut sa, mut sb) = (0.0, 0.0);
        for n in 1..=reps {
            let (a, b) = sample_reinforcement(&law, n, &mut rng);
            sa += a as f64;
            sb += b as f64;
        }
        assert!(close(sa / reps as f64, 2.5, 0.01));
        assert!(close(sb / reps as f64, 2.125, 0.01));

        let law = catalog("1b").unwrap().reinforcement;
        let (mut sa, mut sb) = (0.0, 0.0);
        for n in 1..=reps {
            let (a, b) = sample_reinforcement(&law, n, &mut rng);
            sa += a as f64;
            sb += b as f64;
        }
        assert!(close(sa / reps as f64, 4.2, 0.01));
        assert!(close(sb / reps as f64, 4.2, 0.01));

        let law = catalog("1a").unwrap().reinforcement;
        let mut sab = 0.0;
        for n in 1..=reps {
            let (a, b) = sample_reinforcement(&law, n, &mut rng);
            sab += (a * b) as f64;
        }
        assert!(close(sab / reps as f64, 9.0, 0.05));
    }

    #[test]
    fn conditional_moment_closed_forms() {
        let law = SampleSizeLaw::ZDependentBinomial { trials: 10 };
        let m = law.conditional_moments(0.5).unwrap();
        assert!(close(m.mean, 6.0, 1e-15));
        assert!(close(m.second, 38.5, 1e-12));
        let h = (1.0 - 2f64.powi(-11)) / 5.5;
        assert!(close(m.inverse, h, 1e-15));
        assert!(close(h, 0.181729, 1e-6));
        assert_eq!(law.conditional_moments(0.0).unwrap().inverse, 1.0);
        // h is continuous at 0
        assert!(close(law.conditional_moments(1e-9).unwrap().inverse, 1.0, 1e-7));

        // cross-check f, g, h against the binomial table directly
        let prev = UrnState { n: 3, h: 7, k: 13 };
        let z = prev.proportion();
        let table = law.distribution(4, &prev, None).unwrap();
        let m = law.conditional_moments(z).unwrap();
        let e = |f: &dyn Fn(f64) -> f64| table.iter().map(|(v, p)| f(*v as f64) * p).sum::<f64>();
        assert!(close(e(&|v| v), m.mean, 1e-12));
        assert!(close(e(&|v| v * v), m.second, 1e-11));
        assert!(close(e(&|v| 1.0 / v), m.inverse, 1e-12));

        let fixed = SampleSizeLaw::Fixed { size: 4 };
        for z in [0.0, 0.3, 1.0] {
            let m = fixed.conditional_moments(z).unwrap();
            assert_eq!((m.mean, m.second, m.inverse), (4.0, 16.0, 0.25));
        }
        assert!(SampleSizeLaw::GrowingBinomialClamped { trials: 3, p: 0.1 }
            .conditional_moments(0.5)
            .is_none());
    }

    #[test]
    fn joint_table_second_moment() {
        let m = catalog("3b").unwrap().reinforcement.moment_limits();
        assert!(close(m.q_a, 1.0 * 0.4 + 100.0 * 0.6, 1e-12));
        assert!(close(m.q_a, 60.4, 1e-12));
        assert!(close(m.m_a, 6.4, 1e-12));
        assert!(close(m.m_b, 1.8, 1e-12));
        let m = catalog("3a").unwrap().reinforcement.moment_limits();
        assert!(close(m.m_a, 2.5, 1e-12) && close(m.m_b, 2.125, 1e-12));
    }

    #[test]
    fn declared_moments_match_tables() {
        for s in builtin_catalog() {
            for n in [1, 2, 7, 50] {
                let Ok(table) = s.reinforcement.distribution(n) else {
                    continue;
                };
                let mass: f64 = table.iter().map(|(_, p)| p).sum();
                assert!(close(mass, 1.0, 1e-12), "{}: mass {mass}", s.name);
                let e = |f: &dyn Fn(f64, f64) -> f64| {
                    table.iter().map(|((a, b), p)| f(*a as f64, *b as f64) * p).sum::<f64>()
                };
                let m = s.reinforcement.moments(n);
                assert!(close(e(&|a, _| a), m.m_a, 1e-10), "{} m_a", s.name);
                assert!(close(e(&|_, b| b), m.m_b, 1e-10), "{} m_b", s.name);
                assert!(close(e(&|a, _| a * a), m.q_a, 1e-9), "{} q_a", s.name);
                assert!(close(e(&|_, b| b * b), m.q_b, 1e-9), "{} q_b", s.name);
                assert!(close(e(&|a, b| a * b), m.q_ab, 1e-9), "{} q_ab", s.name);
            }
        }
    }

    #[test]
    fn empirical_moments_within_three_standard_errors() {
        let reps = 1_000_000u64;
        for s in builtin_catalog() {
            let mut rng = derive_stream(77, 0);
            // Stationary laws are checked as is; time-decaying ones at a fixed step.
            let n = 40;
            let declared = s.reinforcement.moments(n);
            let (mut sa, mut saa, mut sb, mut sab) = (0.0, 0.0, 0.0, 0.0);
            let mut saaaa = 0.0;
            for _ in 0..reps {
                let (a, b) = s.reinforcement.sample(n, &mut rng);
                let (a, b) = (a as f64, b as f64);
                sa += a;
                saa += a * a;
                saaaa += a * a * a * a;
                sb += b;
                sab += a * b;
            }
            let r = reps as f64;
            let var_a = saa / r - (sa / r).powi(2);
            let se_mean = (var_a / r).sqrt();
            let se_sq = ((saaaa / r - (saa / r).powi(2)) / r).sqrt();
            assert!((sa / r - declared.m_a).abs() < 3.0 * se_mean + 1e-12, "{}: m_A", s.name);
            assert!((saa / r - declared.q_a).abs() < 3.0 * se_sq + 1e-12, "{}: q_A", s.name);
            assert!((sb / r - declared.m_b).abs() < 4.0 * (declared.q_b / r).sqrt(), "{}: m_B", s.name);
            assert!((sab / r - declared.q_ab).abs() < 0.05 * declared.q_ab, "{}: q_AB", s.name);
        }
    }

    #[test]
    fn equal_mean_entries_have_equal_moment_sequences() {
        for s in builtin_catalog().into_iter().filter(|s| s.case == Case::EqualMeans) {
            for n in 1..=100 {
                let m = s.reinforcement.moments(n);
                assert_eq!(m.m_a, m.m_b, "{} at n = {n}", s.name);
            }
        }
    }

    #[test]
    fn catalog_parameters() {
        let s = catalog("1a").unwrap();
        assert_eq!((s.urn.a, s.urn.b), (5, 5));
        assert_eq!(
            s.sample_size,
            SampleSizeLaw::IidDiscrete {
                dist: DiscreteLaw::uniform(1..=5)
            }
        );
        let s = catalog("1e").unwrap();
        assert_eq!((s.urn.a, s.urn.b), (30, 30));
        match &s.sample_size {
            SampleSizeLaw::AbsorbedRandomWalk {
                barrier,
                step_prob,
                initial,
            } => {
                assert_eq!((*barrier, *step_prob), (50, 0.25));
                assert_eq!(initial.values(), (2..=49).collect::<Vec<_>>().as_slice());
            }
            other => panic!("unexpected law {other:?}"),
        }
        let m = catalog("3b").unwrap().reinforcement.moment_limits();
        assert!(close(m.m_a, 6.4, 1e-12) && close(m.m_b, 1.8, 1e-12));
        assert_eq!(catalog("1c").unwrap().sample_moments, MomentSource::Known);
        assert!(catalog("4z").is_none());
        assert_eq!(builtin_catalog().len(), 8);
    }

    #[test]
    fn catalog_round_trips_through_toml() {
        for s in builtin_catalog() {
            let text = s.to_toml();
            for section in ["[urn]", "[sample_size]", "[reinforcement]"] {
                assert!(text.contains(section), "{}: missing {section}\n{text}", s.name);
            }
            let back = Scenario::from_toml(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.hash(), s.hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = catalog("1a").unwrap().to_toml();
        text = text.replace("[urn]\n", "[urn]\ncolour = 3\n");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("colour"), "{err}");

        let text = catalog("3a").unwrap().to_toml().replace("law = \"finite-joint\"", "law = \"finite-joint\"\nextra = 1");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn inconsistent_scenarios_are_rejected() {
        let law = catalog("3a").unwrap().reinforcement;
        let err = Scenario::new("x", 5, 5, SampleSizeLaw::Fixed { size: 1 }, law, Case::EqualMeans).unwrap_err();
        assert!(err.is_config());
        let err = Scenario::new(
            "x",
            2,
            2,
            SampleSizeLaw::Fixed { size: 5 },
            catalog("1a").unwrap().reinforcement,
            Case::EqualMeans,
        )
        .unwrap_err();
        assert!(err.to_string().contains("holds 4"), "{err}");
        let err = Scenario::new(
            "x",
            2,
            2,
            SampleSizeLaw::AbsorbedRandomWalk {
                barrier: 6,
                step_prob: 0.25,
                initial: DiscreteLaw::uniform(2..=5),
            },
            catalog("1a").unwrap().reinforcement,
            Case::EqualMeans,
        )
        .unwrap_err();
        assert!(err.to_string().contains("3 <= h"), "{err}");
        let bad_weights = DiscreteLaw::new(vec![1, 2], vec![0.5, 0.6]);
        assert!(bad_weights.is_err());
        let err = Scenario::new(
            "x",
            5,
            5,
            SampleSizeLaw::Fixed { size: 1 },
            ReinforcementLaw::Identical {
                marginal: Marginal::ShiftedNegativeBinomial {
                    r: 3,
                    rule: DecayRule::InvSqrt,
                },
            },
            Case::EqualMeans,
        )
        .unwrap_err();
        assert!(err.to_string().contains("infinite mean"), "{err}");
    }

    #[test]
    fn diagonal_reduction_keeps_a_marginal() {
        let d = catalog("3b").unwrap().diagonal_reduction();
        let m = d.reinforcement.moment_limits();
        assert!(close(m.m_a, 6.4, 1e-12) && m.m_a == m.m_b && m.q_a == m.q_ab);
        let d = catalog("1b").unwrap().diagonal_reduction();
        assert!(close(d.reinforcement.moments(1).m_a, 4.2, 1e-12));
        for (pair, _) in d.reinforcement.distribution(3).unwrap() {
            assert_eq!(pair.0, pair.1);
        }
    }
}
