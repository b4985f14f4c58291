//! Closed-form terms of the bounded-variation certificate.

use crate::concentration::dkw_bound;
use crate::error::{ensure_domain, Result};

fn log_pairs_term(n_train: usize, delta: f64) -> Result<f64> {
    ensure_domain!(n_train >= 2, "need at least 2 training points, got {n_train}");
    ensure_domain!(delta > 0.0 && delta.is_finite(), "delta must be positive, got {delta}");
    let log_term = (4.0 * (n_train as f64 - 1.0) / delta).ln();
    ensure_domain!(log_term > 0.0, "ln(4(n-1)/delta) must be positive for n = {n_train}, delta = {delta}");
    Ok(log_term)
}

/// `t2 = sqrt((n/8) ln(4(n−1)/δ))`, the scale of the union bound over the
/// `n − 1` difference coordinates.
pub fn tv_t2(n_train: usize, delta: f64) -> Result<f64> {
    Ok((n_train as f64 / 8.0 * log_pairs_term(n_train, delta)?).sqrt())
}

/// Penalty weight `λ = sqrt(ln(4(n−1)/δ1) / (8n))`, equal to `t2 / n`.
pub fn tv_lambda(n_train: usize, delta1: f64) -> Result<f64> {
    Ok((log_pairs_term(n_train, delta1)? / (8.0 * n_train as f64)).sqrt())
}

/// Reconstruction bound on the mean absolute error of the TV fit over the
/// training scores.
pub fn tvb(n_train: usize, delta: f64, v: f64) -> Result<f64> {
    ensure_domain!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1), got {delta}");
    ensure_domain!(v >= 0.0 && v.is_finite(), "V must be nonnegative, got {v}");
    let t1 = (0.5 * (4.0 / delta).ln()).sqrt();
    let t2 = tv_t2(n_train, delta)?;
    let inner = 2.0 * t1 * t1 + 2.0 * t1 * (t1 * t1 + 4.0 * t2 * v).sqrt() + 4.0 * t2 * v;
    Ok((inner / n_train as f64).sqrt())
}

/// Population transfer bound `(V + V̂) dkw(n, δ2) + dkw(n, δ3)`.
pub fn ptb(v: f64, v_hat: f64, n_train: usize, delta2: f64, delta3: f64) -> Result<f64> {
    ensure_domain!(v >= 0.0 && v_hat >= 0.0, "variations must be nonnegative, got V = {v}, V_hat = {v_hat}");
    Ok((v + v_hat) * dkw_bound(n_train, delta2)? + dkw_bound(n_train, delta3)?)
}
