//! Exact 1-D total-variation denoising.
//!
//! Minimises `(1/(2n)) ‖y − v‖² + λ ‖Dv‖₁` with Condat's direct algorithm,
//! which works on the equivalent problem `½ ‖y − v‖² + nλ ‖Dv‖₁` in a single
//! forward pass with occasional restarts.

use crate::error::{ensure_domain, Result};

/// A maximal run of equal fitted values, `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

/// Output of [`tv_denoise`].
#[derive(Debug, Clone, PartialEq)]
pub struct TvFit {
    pub fitted: Vec<f64>,
    pub lambda: f64,
    pub segments: Vec<Segment>,
}

impl TvFit {
    /// `Σ |v_{i+1} − v_i|`.
    pub fn total_variation(&self) -> f64 {
        total_variation(&self.fitted)
    }
}

pub(crate) fn total_variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Value of `(1/(2n)) ‖y − v‖² + λ ‖Dv‖₁`.
pub fn tv_objective(y: &[f64], v: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let fit: f64 = y.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    fit / (2.0 * n) + lambda * total_variation(v)
}

/// Exact minimiser of the TV-penalised least-squares objective.
///
/// For `y` in `[0, 1]` the minimiser stays within `[min y, max y]`, so the
/// box constraint `v ∈ [0, 1]ⁿ` never binds; the result is checked against
/// that range and rounding noise is clipped back into it.
pub fn tv_denoise(y: &[f64], lambda: f64) -> Result<TvFit> {
    ensure_domain!(!y.is_empty(), "cannot denoise an empty sequence");
    ensure_domain!(lambda >= 0.0 && lambda.is_finite(), "lambda must be nonnegative, got {lambda}");
    ensure_domain!(y.iter().all(|v| (0.0..=1.0).contains(v)), "labels must lie in [0, 1]");

    let mut fitted = vec![0.0; y.len()];
    condat(y, &mut fitted, lambda * y.len() as f64);

    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * (1.0 + lambda * y.len() as f64);
    for v in &mut fitted {
        debug_assert!(*v >= lo - slack && *v <= hi + slack, "fit {v} escaped [{lo}, {hi}]");
        *v = v.clamp(lo, hi);
    }

    let segments = segments_of(&fitted);
    Ok(TvFit {
        fitted,
        lambda,
        segments,
    })
}

fn segments_of(v: &[f64]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=v.len() {
        if i == v.len() || v[i] != v[start] {
            out.push(Segment {
                start,
                end: i - 1,
                value: v[start],
            });
            start = i;
        }
    }
    out
}

/// Condat's direct algorithm for `argmin ½‖y − x‖² + λ‖Dx‖₁`.
fn condat(input: &[f64], output: &mut [f64], lambda: f64) {
    let width = input.len();
    let minlambda = -lambda;
    let twolambda = 2.0 * lambda;

    let mut k = 0usize;
    let mut k0 = 0usize;
    let mut kplus = 0usize;
    let mut kminus = 0usize;
    let mut umin = lambda;
    let mut umax = minlambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;

    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }

        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= minlambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = minlambda;
        }
    }
}

/// Largest violation of the optimality conditions of the TV objective at
/// `v`, on the scale of the `1/(2n)`-normalised objective.
///
/// With `u_k = Σ_{i≤k} (v_i − y_i)` the conditions read `|u_k| ≤ nλ`,
/// `u_k = nλ · sign(v_{k+1} − v_k)` wherever the fit jumps, and `u_n = 0`.
pub fn kkt_residual(y: &[f64], v: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let bound = lambda * n as f64;
    let mut u = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        u += v[k] - y[k];
        if k + 1 == n {
            worst = worst.max(u.abs());
            break;
        }
        let jump = v[k + 1] - v[k];
        let violation = if jump > 0.0 {
            (u - bound).abs()
        } else if jump < 0.0 {
            (u + bound).abs()
        } else {
            (u.abs() - bound).max(0.0)
        };
        worst = worst.max(violation);
    }
    worst / n as f64
}
