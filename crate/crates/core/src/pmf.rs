//! Closed-form probability mass functions.
//!
//! Binomial coefficients are exact 128-bit integers whenever they fit; past
//! that the pmf is accumulated in log space one factor at a time, which
//! keeps the relative error at a few ulps per drawn ball even for urns with
//! millions of balls.

use crate::error::{Error, Result};
use crate::randkit::hypergeometric_support;

/// `C(n, k)` if it fits in a `u128`.
pub fn choose_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1): it is (i+1) * C(n, i+1).
        c = c.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(c)
}

/// `ln C(n, k)` as a sum of `ln((n-i)/(i+1))`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Hypergeometric pmf `C(s, k) C(t - s, d - k) / C(t, d)`; zero outside
/// the support.
pub fn hypergeom_pmf(k: u64, draws: u64, total: u64, successes: u64) -> Result<f64> {
    if draws == 0 || draws > total {
        return Err(Error::contract("draws", format!("{draws} not in 1..={total}")));
    }
    if successes > total {
        return Err(Error::contract(
            "successes",
            format!("{successes} exceeds the population size {total}"),
        ));
    }
    let (lo, hi) = hypergeometric_support(draws, total, successes);
    if k < lo || k > hi {
        return Ok(0.0);
    }
    let failures = total - successes;
    if let (Some(a), Some(b), Some(c)) = (
        choose_exact(successes, k),
        choose_exact(failures, draws - k),
        choose_exact(total, draws),
    ) {
        return Ok(a as f64 * b as f64 / c as f64);
    }
    // p_k = C(d, k) * prod_{i<d} m_i / (t - i), where the m_i run through
    // s, s-1, ..., s-k+1 and then t-s, ..., t-s-(d-k)+1.
    let mut log_p = ln_choose(draws, k);
    for i in 0..draws {
        let num = if i < k { successes - i } else { failures - (i - k) };
        log_p += (num as f64 / (total - i) as f64).ln();
    }
    Ok(log_p.exp())
}

/// Full hypergeometric table as `(k, p_k)` over the support.
///
/// The mode is evaluated directly and the rest follows from the ratio
/// `p(k+1)/p(k) = (s-k)(d-k) / ((k+1)(t-s-d+k+1))`, walking outwards, so
/// the table costs O(d) instead of O(d^2).
pub fn hypergeom_table(draws: u64, total: u64, successes: u64) -> Result<Vec<(u64, f64)>> {
    if draws == 0 || draws > total || successes > total {
        // Delegate the error message.
        hypergeom_pmf(0, draws, total, successes)?;
    }
    let (lo, hi) = hypergeometric_support(draws, total, successes);
    let failures = total - successes;
    let mode = (((draws + 1) as u128 * (successes + 1) as u128) / (total + 2) as u128) as u64;
    let mode = mode.clamp(lo, hi);
    let mut p = vec![0.0; (hi - lo + 1) as usize];
    p[(mode - lo) as usize] = hypergeom_pmf(mode, draws, total, successes)?;
    for k in mode..hi {
        let num = (successes - k) as f64 * (draws - k) as f64;
        let den = (k + 1) as f64 * (failures + k + 1 - draws) as f64;
        p[(k + 1 - lo) as usize] = p[(k - lo) as usize] * num / den;
    }
    for k in (lo + 1..=mode).rev() {
        let num = k as f64 * (failures + k - draws) as f64;
        let den = (successes - k + 1) as f64 * (draws - k + 1) as f64;
        p[(k - 1 - lo) as usize] = p[(k - lo) as usize] * num / den;
    }
    Ok((lo..=hi).zip(p).collect())
}

/// Binomial pmf `C(n, k) p^k (1-p)^(n-k)`.
pub fn binomial_pmf(k: u64, trials: u64, p: f64) -> f64 {
    if k > trials {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == trials { 1.0 } else { 0.0 };
    }
    let coeff = match choose_exact(trials, k) {
        Some(c) if c < (1u128 << 100) => (c as f64).ln(),
        _ => ln_choose(trials, k),
    };
    (coeff + k as f64 * p.ln() + (trials - k) as f64 * (-p).ln_1p()).exp()
}

/// Binomial table `(k, p_k)` for `k = 0..=trials`, dropping exact zeros.
pub fn binomial_table(trials: u64, p: f64) -> Vec<(u64, f64)> {
    (0..=trials)
        .map(|k| (k, binomial_pmf(k, trials, p)))
        .filter(|(_, q)| *q > 0.0)
        .collect()
}
