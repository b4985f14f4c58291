//! Hyperbolic-secant score perturbation.
//!
//! A score `s₀` is replaced by a draw from the density
//! `sech((s − s₀)/h) / Z(s₀, h)` on `[0, 1]`. The Gudermannian
//! `gd(u) = atan(sinh u)` is an antiderivative of `sech`, which gives the
//! normaliser, the CDF and its inverse in closed form.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ensure_domain, Result};
use crate::rng::stream_rng;

/// Points drawn from one RNG stream; fixes the output independently of the
/// thread count.
const CHUNK: usize = 4096;

fn gd(u: f64) -> f64 {
    u.sinh().atan()
}

fn gd_inv(theta: f64) -> f64 {
    theta.tan().asinh()
}

fn check(s_orig: f64, h: f64) -> Result<()> {
    ensure_domain!((0.0..=1.0).contains(&s_orig), "score must lie in [0, 1], got {s_orig}");
    ensure_domain!(h > 0.0 && h.is_finite(), "bandwidth must be positive, got {h}");
    Ok(())
}

/// `Z = ∫₀¹ sech((s − s₀)/h) ds = h [gd((1 − s₀)/h) + gd(s₀/h)]`.
pub fn sech_normalizer(s_orig: f64, h: f64) -> Result<f64> {
    check(s_orig, h)?;
    Ok(h * (gd((1.0 - s_orig) / h) + gd(s_orig / h)))
}

/// CDF of the truncated sech law centred at `s_orig`, evaluated at `s`.
pub fn sech_cdf(s: f64, s_orig: f64, h: f64) -> Result<f64> {
    let z = sech_normalizer(s_orig, h)?;
    let s = s.clamp(0.0, 1.0);
    Ok((h * (gd((s - s_orig) / h) - gd(-s_orig / h)) / z).clamp(0.0, 1.0))
}

/// Inverse-CDF draw for uniform `u ∈ [0, 1)`.
pub fn sech_quantile(u: f64, s_orig: f64, h: f64) -> Result<f64> {
    let z = sech_normalizer(s_orig, h)?;
    let theta = gd(-s_orig / h) + u * z / h;
    Ok((s_orig + h * gd_inv(theta)).clamp(0.0, 1.0))
}

/// Perturbation bandwidth and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub h: f64,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(h: f64, seed: u64) -> Result<Self> {
        ensure_domain!(h > 0.0 && h.is_finite(), "perturbation bandwidth must be positive, got {h}");
        Ok(Self { h, seed })
    }
}

/// Replaces every score with an independent sech-perturbed draw.
pub fn perturb_scores(scores: &[f64], spec: &PerturbSpec) -> Result<Vec<f64>> {
    for &s in scores {
        check(s, spec.h)?;
    }
    let mut out = vec![0.0; scores.len()];
    out.par_chunks_mut(CHUNK)
        .zip(scores.par_chunks(CHUNK))
        .enumerate()
        .try_for_each(|(chunk, (dst, src))| -> Result<()> {
            let mut rng = stream_rng(spec.seed, chunk as u64);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = sech_quantile(rng.gen::<f64>(), s, spec.h)?;
            }
            Ok(())
        })?;
    Ok(out)
}

/// Uniform bounds on the first and second derivatives of a calibration
/// function after perturbation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DerivativeBounds {
    pub b1: f64,
    pub b2: f64,
}

impl DerivativeBounds {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        ensure_domain!(b1 >= 0.0 && b1.is_finite(), "b1 must be nonnegative, got {b1}");
        ensure_domain!(b2 >= 0.0 && b2.is_finite(), "b2 must be nonnegative, got {b2}");
        Ok(Self { b1, b2 })
    }
}

/// `b1 = 1/(2h)`, `b2 = 3/(2h²)`.
pub fn derivative_bounds(h: f64) -> Result<DerivativeBounds> {
    ensure_domain!(h > 0.0 && h.is_finite(), "bandwidth must be positive, got {h}");
    Ok(DerivativeBounds {
        b1: 0.5 / h,
        b2: 1.5 / (h * h),
    })
}

/// Point mass of the original score law with its calibration value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub score: f64,
    pub mass: f64,
    pub eta: f64,
}

/// Calibration function of the perturbed classifier when the original scores
/// follow a discrete law: the kernel-weighted average
/// `Σ m_j η_j k(s|s_j) / Σ m_j k(s|s_j)` with `k(s|s_j) = sech((s − s_j)/h) / Z(s_j, h)`.
pub fn perturbed_calibration(atoms: &[Atom], h: f64, s: f64) -> Result<f64> {
    ensure_domain!(!atoms.is_empty(), "need at least one atom");
    let mut num = 0.0;
    let mut den = 0.0;
    for a in atoms {
        ensure_domain!(a.mass >= 0.0, "atom masses must be nonnegative");
        let k = sech((s - a.score) / h) / sech_normalizer(a.score, h)?;
        num += a.mass * a.eta * k;
        den += a.mass * k;
    }
    ensure_domain!(den > 0.0, "perturbed score density vanishes at {s}");
    Ok(num / den)
}

fn sech(u: f64) -> f64 {
    1.0 / u.cosh()
}
