//! Scalar statistics shared by the bounds.

use crate::error::{Error, Result};

/// Shannon entropy of a Bernoulli(p) variable, in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::EntropyDomain(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Probability that a pulse carries exactly `n` photons, averaged over the
/// two intensity classes.
pub fn tau_n(p_mu: f64, mu: f64, nu: f64, n: u32) -> f64 {
    poisson_pmf(mu, n) * p_mu + poisson_pmf(nu, n) * (1.0 - p_mu)
}

pub fn poisson_pmf(mean: f64, n: u32) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln = f64::from(n) * mean.ln() - mean - ln_factorial(n);
    ln.exp()
}

/// `P(N > cap)` for a Poisson variable.
pub fn poisson_tail(mean: f64, cap: u32) -> f64 {
    let head: f64 = (0..=cap).map(|n| poisson_pmf(mean, n)).sum();
    // Direct summation of the tail avoids cancellation in 1 - head.
    let tail: f64 = (cap + 1..cap + 60).map(|n| poisson_pmf(mean, n)).sum();
    tail.max(1.0 - head).clamp(0.0, 1.0)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

/// Hoeffding deviation for `n` trials at failure probability `eps`.
pub fn hoeffding_delta(n: f64, eps: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    (0.5 * n * (1.0 / eps).ln()).sqrt()
}
