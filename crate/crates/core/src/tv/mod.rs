//! Bounded-variation certifier.
//!
//! Labels are sorted by score and denoised with an exact 1-D total-variation
//! solver. The fitted values define a left-continuous step surrogate whose
//! validation residuals, together with a reconstruction bound and a
//! population transfer bound, certify the calibration error of any
//! calibration function with total variation at most `V`.

mod bounds;
mod denoise;

use rayon::prelude::*;

pub use bounds::{ptb, tv_lambda, tv_t2, tvb};
pub use denoise::{kkt_residual, tv_denoise, tv_objective, Segment, TvFit};

use crate::concentration::{bernstein_bound, empirical_variance, mean};
use crate::data::{DeltaBudget, ScoredDataset};
use crate::error::{ensure_domain, Result};
use crate::report::{BoundReport, Method};

/// Flag raised when a validation score lies below every training score.
pub const FLAG_BELOW_SUPPORT: &str = "below_first_breakpoint";

/// Piecewise-constant calibration surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSurrogate {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    total_variation_hat: f64,
}

impl StepSurrogate {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        ensure_domain!(!breakpoints.is_empty(), "a step surrogate needs at least one breakpoint");
        ensure_domain!(breakpoints.len() == values.len(), "breakpoints and values differ in length");
        ensure_domain!(
            breakpoints.windows(2).all(|w| w[0] <= w[1]),
            "breakpoints must be sorted"
        );
        let total_variation_hat = denoise::total_variation(&values);
        Ok(Self {
            breakpoints,
            values,
            total_variation_hat,
        })
    }

    /// Sorts `train` by score (stable, so ties keep input order) and fits the
    /// TV-denoised labels.
    pub fn fit(train: &ScoredDataset, lambda: f64) -> Result<(Self, TvFit)> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| train.scores()[a].total_cmp(&train.scores()[b]));
        let breakpoints: Vec<f64> = order.iter().map(|&i| train.scores()[i]).collect();
        let y: Vec<f64> = order.iter().map(|&i| train.label_f64(i)).collect();
        let fit = tv_denoise(&y, lambda)?;
        let surrogate = Self::new(breakpoints, fit.fitted.clone())?;
        Ok((surrogate, fit))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `V̂ = Σ |consecutive value differences|`.
    pub fn total_variation_hat(&self) -> f64 {
        self.total_variation_hat
    }

    /// Value at the last breakpoint `≤ s`. Below the first breakpoint the
    /// first value is used.
    pub fn eval(&self, s: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= s);
        self.values[idx.saturating_sub(1)]
    }

    pub fn below_support(&self, s: f64) -> bool {
        s < self.breakpoints[0]
    }
}

/// See [`StepSurrogate::eval`].
pub fn eval_step(surrogate: &StepSurrogate, s: f64) -> f64 {
    surrogate.eval(s)
}

/// Everything a fold contributes to the certificate that does not depend on
/// the validation set.
#[derive(Debug, Clone)]
pub struct TvFoldFit {
    pub surrogate: StepSurrogate,
    pub n_train: usize,
    pub lambda: f64,
    pub segments: usize,
    pub tvb: f64,
    pub ptb: f64,
}

/// Splits a TV budget into `(δ1, δ2, δ3, δ4)`.
pub fn tv_budget(delta: f64) -> Result<DeltaBudget> {
    DeltaBudget::equal(delta, 4)
}

pub fn fit_tv_fold(train: &ScoredDataset, v: f64, budget: &DeltaBudget) -> Result<TvFoldFit> {
    budget.expect_parts(4, "the TV certifier")?;
    ensure_domain!(v >= 0.0 && v.is_finite(), "V must be nonnegative, got {v}");
    let n_train = train.len();
    let lambda = tv_lambda(n_train, budget.part(0))?;
    let (surrogate, fit) = StepSurrogate::fit(train, lambda)?;
    let tvb = tvb(n_train, budget.part(0), v)?;
    let ptb = ptb(v, surrogate.total_variation_hat(), n_train, budget.part(1), budget.part(2))?;
    Ok(TvFoldFit {
        surrogate,
        n_train,
        lambda,
        segments: fit.segments.len(),
        tvb,
        ptb,
    })
}

/// `|s_i − η̂(s_i)|` for every validation point, and the count of points
/// below the surrogate's support.
pub(crate) fn residuals(surrogate: &StepSurrogate, valid: &ScoredDataset) -> (Vec<f64>, usize) {
    let residuals: Vec<f64> = valid.scores().par_iter().map(|&s| (s - surrogate.eval(s)).abs()).collect();
    let below = valid.scores().iter().filter(|&&s| surrogate.below_support(s)).count();
    (residuals, below)
}

/// Certified upper bound on the calibration error under total variation at
/// most `v`, using a fixed train/validation split. `budget` holds
/// `(δ1, δ2, δ3, δ4)`.
pub fn certify_tv(train: &ScoredDataset, valid: &ScoredDataset, v: f64, budget: &DeltaBudget) -> Result<BoundReport> {
    let fold = fit_tv_fold(train, v, budget)?;
    let (res, below) = residuals(&fold.surrogate, valid);
    let empirical = mean(&res)?;
    let bern = bernstein_bound(res.len(), budget.part(3), empirical_variance(&res)?)?;
    let mut report = BoundReport::from_terms(
        Method::Tv,
        fold.n_train,
        valid.len(),
        budget.total(),
        vec![
            ("empirical_mean", empirical),
            ("bernstein_residual", bern),
            ("tvb", fold.tvb),
            ("ptb", fold.ptb),
        ],
    )?;
    add_fold_diagnostics(&mut report, &fold, v, below);
    Ok(report)
}

pub(crate) fn add_fold_diagnostics(report: &mut BoundReport, fold: &TvFoldFit, v: f64, below: usize) {
    let d = &mut report.diagnostics;
    d.insert("v".into(), v);
    d.insert("v_hat".into(), fold.surrogate.total_variation_hat());
    d.insert("lambda".into(), fold.lambda);
    d.insert("segments".into(), fold.segments as f64);
    d.insert("below_support_count".into(), below as f64);
    if below > 0 {
        report.flag(FLAG_BELOW_SUPPORT);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eval_step_examples() {
        let s = StepSurrogate::new(vec![0.2, 0.6], vec![0.1, 0.9]).unwrap();
        assert_eq!(eval_step(&s, 0.6), 0.9);
        assert_eq!(eval_step(&s, 0.4), 0.1);
        assert_eq!(eval_step(&s, 0.05), 0.1);
        assert_eq!(eval_step(&s, 1.0), 0.9);
        assert!(s.below_support(0.05));
        assert_relative_eq!(s.total_variation_hat(), 0.8, max_relative = 1e-15);
    }

    #[test]
    fn fit_sorts_scores_and_keeps_tie_order() {
        let train = ScoredDataset::new(vec![0.9, 0.1, 0.5, 0.5], vec![1, 0, 1, 0]).unwrap();
        let (s, _) = StepSurrogate::fit(&train, 0.0).unwrap();
        assert_eq!(s.breakpoints(), &[0.1, 0.5, 0.5, 0.9]);
        assert_eq!(s.values(), &[0.0, 1.0, 0.0, 1.0]);
        // The last of the tied breakpoints wins.
        assert_eq!(s.eval(0.5), 0.0);
    }

    #[test]
    fn exact_validation_fit_leaves_only_range_term() {
        // Constant labels give a constant fit; validation scores equal to it
        // make every residual zero.
        let train = ScoredDataset::new(vec![0.1, 0.4, 0.7, 0.9], vec![1; 4]).unwrap();
        let valid = ScoredDataset::new(vec![1.0; 5], vec![1; 5]).unwrap();
        let budget = tv_budget(0.05).unwrap();
        let r = certify_tv(&train, &valid, 1.0, &budget).unwrap();
        assert_eq!(r.term("empirical_mean").unwrap(), 0.0);
        let d4 = budget.part(3);
        assert_relative_eq!(r.term("bernstein_residual").unwrap(), 3.0 * (3.0 / d4).ln() / 5.0, max_relative = 1e-14);
        assert_relative_eq!(r.term("tvb").unwrap(), tvb(4, budget.part(0), 1.0).unwrap(), max_relative = 1e-15);
        assert_relative_eq!(r.term("ptb").unwrap(), ptb(1.0, 0.0, 4, budget.part(1), budget.part(2)).unwrap(), max_relative = 1e-15);
        assert_eq!(r.bound, 1.0);
        r.check().unwrap();
    }

    #[test]
    fn report_terms_sum_to_raw_bound() {
        let scores: Vec<f64> = (0..400).map(|i| (i as f64 * 0.618_033_988_7).fract()).collect();
        let labels: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let d = ScoredDataset::new(scores, labels).unwrap();
        let train = d.select(&(0..200).collect::<Vec<_>>()).unwrap();
        let valid = d.select(&(200..400).collect::<Vec<_>>()).unwrap();
        let r = certify_tv(&train, &valid, 1.0, &tv_budget(0.1).unwrap()).unwrap();
        r.check().unwrap();
        assert!(r.diagnostic("v_hat").unwrap() <= 1.0 + 1e-12);
        assert!(r.bound > 0.0);
    }
}
