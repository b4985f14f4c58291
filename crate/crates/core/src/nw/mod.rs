//! Bounded-derivatives certifier.
//!
//! Perturbing scores with the sech kernel of bandwidth `h` makes the
//! calibration function twice differentiable with `|η′| ≤ 1/(2h)` and
//! `|η″| ≤ 3/(2h²)`, whatever the original classifier. A Nadaraya-Watson
//! surrogate fitted on the training split then has a pointwise smoothing
//! error bounded by `g_T`, and the certificate adds the validation residual,
//! the mean of `g_T` and two Bernstein terms.

pub mod sech;
mod smoother;

use rayon::prelude::*;

pub use sech::{
    derivative_bounds, perturb_scores, perturbed_calibration, sech_cdf, sech_normalizer, sech_quantile, Atom,
    DerivativeBounds, PerturbSpec,
};
pub use smoother::{
    envelope_R, nw_eval, nw_weights, plugin_bandwidth, plugin_root, smoothing_error_g, NwPoint, NwSurrogate, Weights,
    MAX_BANDWIDTH, MIN_BANDWIDTH, TAU,
};

use crate::concentration::{bernstein_bound, empirical_variance, mean, scaled_bernstein};
use crate::data::{DeltaBudget, ScoredDataset};
use crate::error::{ensure_domain, Result};
use crate::report::{BoundReport, Method};

/// Flag raised when some validation point had no training point within the
/// smoothing bandwidth.
pub const FLAG_FALLBACK: &str = "nw_fallback";

/// How the surrogate is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwConfig {
    pub bounds: DerivativeBounds,
    /// Perturbation bandwidth the bounds came from, if any; reported only.
    pub perturbation_h: Option<f64>,
    /// Overrides the plug-in smoothing bandwidth.
    pub smoothing_bandwidth: Option<f64>,
}

impl NwConfig {
    /// Bounds implied by a sech perturbation of bandwidth `h`.
    pub fn from_perturbation(h: f64) -> Result<Self> {
        Ok(Self {
            bounds: derivative_bounds(h)?,
            perturbation_h: Some(h),
            smoothing_bandwidth: None,
        })
    }

    pub fn from_bounds(bounds: DerivativeBounds) -> Self {
        Self {
            bounds,
            perturbation_h: None,
            smoothing_bandwidth: None,
        }
    }

    pub fn fit(&self, train: &ScoredDataset) -> Result<NwSurrogate> {
        match self.smoothing_bandwidth {
            Some(h_s) => NwSurrogate::new(train, h_s, self.bounds),
            None => NwSurrogate::with_plugin_bandwidth(train, self.bounds),
        }
    }
}

/// Splits an NW budget into `(δ1, δ2)`.
pub fn nw_budget(delta: f64) -> Result<DeltaBudget> {
    DeltaBudget::equal(delta, 2)
}

/// Per-point validation quantities of one fold.
#[derive(Debug, Clone, Default)]
pub(crate) struct NwValidation {
    pub residuals: Vec<f64>,
    /// Smoothing errors after clipping at 1.
    pub g: Vec<f64>,
    pub fallback_count: usize,
}

/// Scale of the clipped smoothing errors: `R`, or `max(R, 1)` when some
/// query in `[0, 1]` would fall back to a nearest neighbour.
pub(crate) fn effective_range(surrogate: &NwSurrogate) -> f64 {
    if surrogate.has_fallback_region() {
        surrogate.R().max(1.0)
    } else {
        surrogate.R()
    }
}

pub(crate) fn validate(surrogate: &NwSurrogate, valid: &ScoredDataset) -> Result<NwValidation> {
    let points: Vec<NwPoint> = valid
        .scores()
        .par_iter()
        .map(|&s| surrogate.evaluate(s))
        .collect::<Result<_>>()?;
    let residuals = points.iter().zip(valid.scores()).map(|(p, s)| (p.eta - s).abs()).collect();
    // |η̂ − η| never exceeds 1, so 1 also bounds its expectation.
    let g = points.iter().map(|p| p.g.min(1.0)).collect();
    Ok(NwValidation {
        residuals,
        g,
        fallback_count: points.iter().filter(|p| p.fallback).count(),
    })
}

/// Certificate terms for pooled validation quantities.
pub(crate) fn assemble(
    v: &NwValidation,
    range: f64,
    n_train: usize,
    budget: &DeltaBudget,
) -> Result<BoundReport> {
    budget.expect_parts(2, "the NW certifier")?;
    ensure_domain!(range > 0.0, "envelope must be positive");
    let empirical = mean(&v.residuals)?;
    let smoothing = mean(&v.g)?;
    let bern_resid = bernstein_bound(v.residuals.len(), budget.part(0), empirical_variance(&v.residuals)?)?;
    let bern_smooth = scaled_bernstein(&v.g, range, budget.part(1))?;
    let mut report = BoundReport::from_terms(
        Method::Nw,
        n_train,
        v.residuals.len(),
        budget.total(),
        vec![
            ("empirical_mean", empirical),
            ("smoothing_mean", smoothing),
            ("bernstein_residual", bern_resid),
            ("bernstein_smoothing", bern_smooth),
        ],
    )?;
    report.diagnostics.insert("R_eff".into(), range);
    report.diagnostics.insert("fallback_count".into(), v.fallback_count as f64);
    if v.fallback_count > 0 {
        report.flag(FLAG_FALLBACK);
    }
    Ok(report)
}

pub(crate) fn add_config_diagnostics(report: &mut BoundReport, config: &NwConfig, surrogate: &NwSurrogate) {
    let d = &mut report.diagnostics;
    d.insert("b1".into(), config.bounds.b1);
    d.insert("b2".into(), config.bounds.b2);
    if let Some(h) = config.perturbation_h {
        d.insert("h".into(), h);
    }
    d.insert("h_s".into(), surrogate.bandwidth());
    d.insert("R".into(), surrogate.R());
    d.insert("tau".into(), surrogate.tau());
}

/// Certified bound with an explicit surrogate configuration.
pub fn certify_nw_with(
    train: &ScoredDataset,
    valid: &ScoredDataset,
    config: &NwConfig,
    budget: &DeltaBudget,
) -> Result<BoundReport> {
    let surrogate = config.fit(train)?;
    let v = validate(&surrogate, valid)?;
    let mut report = assemble(&v, effective_range(&surrogate), train.len(), budget)?;
    add_config_diagnostics(&mut report, config, &surrogate);
    Ok(report)
}

/// Certified upper bound on the calibration error of scores produced by a
/// sech perturbation of bandwidth `h`, using a fixed train/validation split.
/// `budget` holds `(δ1, δ2)`.
pub fn certify_nw(train: &ScoredDataset, valid: &ScoredDataset, h: f64, budget: &DeltaBudget) -> Result<BoundReport> {
    certify_nw_with(train, valid, &NwConfig::from_perturbation(h)?, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_composition() {
        // Every training and validation score sits at one point with label
        // mean equal to the score, so the residual is 0, g = ½/√m, and both
        // variances vanish.
        let m = 16;
        let train = ScoredDataset::new(vec![0.5; m], (0..m).map(|i| (i % 2) as u8).collect()).unwrap();
        let valid = ScoredDataset::new(vec![0.5; 10], vec![1; 10]).unwrap();
        let budget = nw_budget(0.05).unwrap();
        let config = NwConfig {
            smoothing_bandwidth: Some(0.6),
            ..NwConfig::from_perturbation(0.5).unwrap()
        };
        let r = certify_nw_with(&train, &valid, &config, &budget).unwrap();
        let g = 0.5 / (m as f64).sqrt();
        let range = 1.0 * 0.6 + 0.5 * 6.0 * 0.36 + 0.5;
        assert_eq!(r.term("empirical_mean").unwrap(), 0.0);
        assert_relative_eq!(r.term("smoothing_mean").unwrap(), g, max_relative = 1e-14);
        let bb = 3.0 * (3.0 / 0.025f64).ln() / 10.0;
        assert_relative_eq!(r.term("bernstein_residual").unwrap(), bb, max_relative = 1e-14);
        assert_relative_eq!(r.term("bernstein_smoothing").unwrap(), range * bb, max_relative = 1e-14);
        assert_relative_eq!(r.diagnostic("R_eff").unwrap(), range, max_relative = 1e-15);
        r.check().unwrap();
    }

    #[test]
    fn reports_derivative_bounds_and_fallbacks() {
        let train = ScoredDataset::new(vec![0.1, 0.12, 0.15], vec![0, 1, 0]).unwrap();
        let valid = ScoredDataset::new(vec![0.11, 0.9], vec![0, 1]).unwrap();
        let r = certify_nw(&train, &valid, 1.0 / 64.0, &nw_budget(0.05).unwrap()).unwrap();
        assert_eq!(r.diagnostic("b1"), Some(32.0));
        assert_eq!(r.diagnostic("b2"), Some(6144.0));
        assert_eq!(r.diagnostic("fallback_count"), Some(1.0));
        let range = r.diagnostic("R").unwrap();
        assert!(range > 1.0);
        assert_eq!(r.diagnostic("R_eff"), Some(range));
        assert!(r.flags.iter().any(|f| f == FLAG_FALLBACK));
        r.check().unwrap();
    }
}
