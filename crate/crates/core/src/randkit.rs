//! Reproducible random streams and exact samplers for the discrete laws the
//! urn scenarios use.
//!
//! Streams are ChaCha12 generators (256-bit key, 64-bit block counter). The
//! key of stream `(master_seed, index)` is the SHA-256 digest of the two
//! integers in little-endian order, so any stream can be rebuilt from its
//! coordinates alone and distinct indices land on unrelated keys.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Name of the generator behind every [`RngStream`].
pub const ALGORITHM: &str = "chacha12/sha256-keyed";

/// Tolerance on the total mass of user-supplied probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Above this many trials the binomial sampler switches from inversion to
/// counting Bernoulli trials, which avoids underflow of `(1-p)^n`.
const BINOMIAL_INVERSION_MAX_TRIALS: u64 = 1000;

/// A seeded random stream identified by `(master_seed, index)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha12Rng,
    master_seed: u64,
    index: u64,
}

impl RngStream {
    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    pub fn origin(&self) -> (u64, u64) {
        (self.master_seed, self.index)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer on `0..bound`, unbiased.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        self.inner.random_range(0..bound)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Derives the stream for `(master_seed, index)`. Pure: the same arguments
/// always give the same sequence, whatever thread calls it.
pub fn derive_stream(master_seed: u64, index: u64) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    RngStream {
        inner: ChaCha12Rng::from_seed(key),
        master_seed,
        index,
    }
}

/// Checks a probability vector: finite, nonnegative, total within
/// [`NORMALIZATION_TOL`] of one.
pub fn validate_weights(param: &'static str, weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::contract(param, "empty probability vector"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::contract(param, format!("invalid weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::contract(
            param,
            format!("weights sum to {total:.17}, not 1"),
        ));
    }
    Ok(())
}

fn validate_probability(param: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(param, format!("{p} is not in [0, 1]")));
    }
    Ok(())
}

/// Support of the hypergeometric law: `max(0, draws - failures)..=min(draws, successes)`.
#[inline]
pub fn hypergeometric_support(draws: u64, total: u64, successes: u64) -> (u64, u64) {
    let failures = total - successes;
    (draws.saturating_sub(failures), draws.min(successes))
}

fn check_hypergeometric(draws: u64, total: u64, successes: u64) -> Result<()> {
    if draws == 0 {
        return Err(Error::contract("draws", "must be at least 1"));
    }
    if draws > total {
        return Err(Error::contract(
            "draws",
            format!("{draws} exceeds the population size {total}"),
        ));
    }
    if successes > total {
        return Err(Error::contract(
            "successes",
            format!("{successes} exceeds the population size {total}"),
        ));
    }
    Ok(())
}

/// Number of successes in `draws` draws without replacement from `total`
/// items of which `successes` are marked. Exact inverse-CDF walk.
pub fn sample_hypergeometric(
    rng: &mut RngStream,
    draws: u64,
    total: u64,
    successes: u64,
) -> Result<u64> {
    check_hypergeometric(draws, total, successes)?;
    Ok(hypergeometric_unchecked(rng, draws, total, successes))
}

/// Sampler body for callers that already guarantee the preconditions.
///
/// Unnormalized weights are built by the ratio recurrence
/// `p(k+1)/p(k) = (s-k)(d-k) / ((k+1)(t-s-d+k+1))`, anchored at the mode so
/// neither tail can overflow, then inverted against one uniform.
pub(crate) fn hypergeometric_unchecked(
    rng: &mut RngStream,
    draws: u64,
    total: u64,
    successes: u64,
) -> u64 {
    let (lo, hi) = hypergeometric_support(draws, total, successes);
    if lo == hi {
        return lo;
    }
    let failures = total - successes;
    let mode = (((draws + 1) as u128 * (successes + 1) as u128) / (total + 2) as u128) as u64;
    let mode = mode.clamp(lo, hi);

    let len = (hi - lo + 1) as usize;
    let mut w: SmallVec<[f64; 64]> = SmallVec::from_elem(0.0, len);
    w[(mode - lo) as usize] = 1.0;
    for k in mode..hi {
        let num = (successes - k) as f64 * (draws - k) as f64;
        let den = (k + 1) as f64 * (failures + k + 1 - draws) as f64;
        w[(k + 1 - lo) as usize] = w[(k - lo) as usize] * num / den;
    }
    for k in (lo + 1..=mode).rev() {
        let num = k as f64 * (failures + k - draws) as f64;
        let den = (successes - k + 1) as f64 * (draws - k + 1) as f64;
        w[(k - 1 - lo) as usize] = w[(k - lo) as usize] * num / den;
    }

    let mass: f64 = w.iter().sum();
    let mut target = rng.uniform() * mass;
    let mut k = hi;
    for (i, wi) in w.iter().enumerate() {
        if target < *wi {
            k = lo + i as u64;
            break;
        }
        target -= wi;
    }
    debug_assert!(k >= lo && k <= hi, "hypergeometric draw {k} outside {lo}..={hi}");
    k
}

/// Binomial(`trials`, `p`) by inversion (or Bernoulli counting for very
/// large `trials`).
pub fn sample_binomial(rng: &mut RngStream, trials: u64, p: f64) -> Result<u64> {
    validate_probability("p", p)?;
    Ok(binomial_unchecked(rng, trials, p))
}

pub(crate) fn binomial_unchecked(rng: &mut RngStream, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    if p > 0.5 {
        return trials - binomial_unchecked(rng, trials, 1.0 - p);
    }
    if trials > BINOMIAL_INVERSION_MAX_TRIALS {
        return (0..trials).filter(|_| rng.uniform() < p).count() as u64;
    }
    let q = 1.0 - p;
    let ratio = p / q;
    let mut f = q.powi(trials as i32);
    let mut u = rng.uniform();
    let mut k = 0;
    loop {
        if u < f || k == trials {
            return k;
        }
        u -= f;
        f *= ratio * (trials - k) as f64 / (k + 1) as f64;
        k += 1;
    }
}

/// Negative binomial with the "successes before the `r`-th failure"
/// convention: mean `r p / (1 - p)`, variance `r p / (1 - p)^2`.
pub fn sample_negative_binomial(rng: &mut RngStream, r: u64, p: f64) -> Result<u64> {
    if r == 0 {
        return Err(Error::contract("r", "must be at least 1"));
    }
    validate_probability("p", p)?;
    if p >= 1.0 {
        return Err(Error::contract("p", "p = 1 gives an infinite mean"));
    }
    Ok(negative_binomial_unchecked(rng, r, p))
}

pub(crate) fn negative_binomial_unchecked(rng: &mut RngStream, r: u64, p: f64) -> u64 {
    let mut failures = 0;
    let mut successes = 0;
    while failures < r {
        if rng.uniform() < p {
            successes += 1;
        } else {
            failures += 1;
        }
    }
    successes
}

/// Multinomial counts by sequential conditional binomials.
pub fn sample_multinomial(rng: &mut RngStream, size: u64, probs: &[f64]) -> Result<Vec<u64>> {
    validate_weights("probs", probs)?;
    Ok(multinomial_unchecked(rng, size, probs))
}

pub(crate) fn multinomial_unchecked(rng: &mut RngStream, size: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0; probs.len()];
    let mut remaining = size;
    let mut mass_left = 1.0;
    let last = probs.len() - 1;
    for (i, &p) in probs[..last].iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let cond = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = binomial_unchecked(rng, remaining, cond);
        counts[i] = x;
        remaining -= x;
        mass_left -= p;
    }
    counts[last] += remaining;
    counts
}

/// One value of `support` drawn with the matching `weights`.
pub fn sample_discrete<T: Copy>(rng: &mut RngStream, support: &[T], weights: &[f64]) -> Result<T> {
    if support.len() != weights.len() {
        return Err(Error::contract(
            "weights",
            format!(
                "{} weights for {} support points",
                weights.len(),
                support.len()
            ),
        ));
    }
    validate_weights("weights", weights)?;
    let mut u = rng.uniform();
    for (value, w) in support.iter().zip(weights) {
        if u < *w {
            return Ok(*value);
        }
        u -= w;
    }
    // Rounding can leave u just above the accumulated mass; fall back to the
    // last point that carries weight.
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(support.len() - 1);
    Ok(support[last])
}
