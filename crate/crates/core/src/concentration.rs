//! Finite-sample concentration terms shared by the certifiers.

use crate::error::{ensure_domain, Error, Result};

/// Arguments of the empirical Bernstein term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinInput {
    pub n: usize,
    pub delta: f64,
    pub sigma2_hat: f64,
}

impl BernsteinInput {
    pub fn new(n: usize, delta: f64, sigma2_hat: f64) -> Result<Self> {
        ensure_domain!(n >= 1, "Bernstein term needs n >= 1");
        ensure_domain!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1), got {delta}");
        // Small negative values can come from rounding in a variance pass.
        ensure_domain!(
            (-1e-12..=0.25 + 1e-12).contains(&sigma2_hat),
            "variance of [0, 1] data must lie in [0, 0.25], got {sigma2_hat}"
        );
        Ok(Self {
            n,
            delta,
            sigma2_hat: sigma2_hat.clamp(0.0, 0.25),
        })
    }

    pub fn bound(&self) -> f64 {
        let log_term = (3.0 / self.delta).ln();
        let n = self.n as f64;
        (2.0 * self.sigma2_hat * log_term / n).sqrt() + 3.0 * log_term / n
    }
}

/// Empirical Bernstein deviation for the mean of `n` i.i.d. values in
/// `[0, 1]`: `sqrt(2 σ̂² ln(3/δ) / n) + 3 ln(3/δ) / n`.
pub fn bernstein_bound(n: usize, delta: f64, sigma2_hat: f64) -> Result<f64> {
    Ok(BernsteinInput::new(n, delta, sigma2_hat)?.bound())
}

/// Mean of `values` with a fixed left-to-right summation order.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Variance with divisor `n`.
pub fn empirical_variance(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / values.len() as f64).max(0.0))
}

/// Dvoretzky-Kiefer-Wolfowitz radius `sqrt(ln(2/δ) / (2n))`.
pub fn dkw_bound(n: usize, delta: f64) -> Result<f64> {
    ensure_domain!(n >= 1, "DKW radius needs n >= 1");
    ensure_domain!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1), got {delta}");
    Ok(((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Bernstein term for values in `[0, scale]`, obtained by rescaling to
/// `[0, 1]`.
pub(crate) fn scaled_bernstein(values: &[f64], scale: f64, delta: f64) -> Result<f64> {
    ensure_domain!(scale > 0.0, "scale must be positive, got {scale}");
    let var = empirical_variance(values)? / (scale * scale);
    Ok(scale * bernstein_bound(values.len(), delta, var.min(0.25))?)
}
