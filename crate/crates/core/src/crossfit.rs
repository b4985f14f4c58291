//! K-fold cross-fitting.
//!
//! Each fold fits its surrogate on the complement of its validation set.
//! Validation quantities from all folds are pooled and the concentration
//! terms are applied once to the pooled sample at the full δ budget. The
//! underlying guarantees are stated for a single fixed split, so pooled
//! reports carry the [`FLAG_POOLED`] caveat.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bucketing::{certify_lipschitz, default_bucket_counts, DEFAULT_SHIFTS};
use crate::concentration::{bernstein_bound, empirical_variance, mean};
use crate::data::{make_split_plan, subsample_validation, ScoredDataset, SplitPlan};
use crate::error::{ensure_domain, Result};
use crate::nw::{self, NwConfig, NwValidation};
use crate::report::{BoundReport, FoldDiagnostics, Method};
use crate::rng::mix_seed;
use crate::tv;

pub const FLAG_POOLED: &str = "crossfit_pooled";
pub const DEFAULT_FOLDS: usize = 5;

/// Certifier and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Tv {
        v: f64,
    },
    Nw(NwConfig),
    Lipschitz {
        lipschitz: f64,
        /// `None` selects [`default_bucket_counts`] for the pooled size.
        bucket_counts: Option<Vec<usize>>,
        shifts: usize,
    },
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Tv { .. } => Method::Tv,
            MethodConfig::Nw(_) => Method::Nw,
            MethodConfig::Lipschitz { .. } => Method::Lipschitz,
        }
    }

    pub fn lipschitz(lipschitz: f64) -> Self {
        MethodConfig::Lipschitz {
            lipschitz,
            bucket_counts: None,
            shifts: DEFAULT_SHIFTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossfitConfig {
    pub folds: usize,
    pub method: MethodConfig,
    pub delta: f64,
    pub seed: u64,
    pub subsample: bool,
}

impl CrossfitConfig {
    pub fn new(method: MethodConfig, delta: f64, seed: u64) -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            method,
            delta,
            seed,
            subsample: true,
        }
    }
}

/// Cross-fitted certificate with a random fold plan drawn from `config.seed`.
pub fn certify_crossfit(dataset: &ScoredDataset, config: &CrossfitConfig) -> Result<BoundReport> {
    ensure_domain!(config.folds >= 2, "fold count must be at least 2, got {}", config.folds);
    let plan = make_split_plan(dataset.len(), config.folds, config.seed)?;
    certify_with_plan(dataset, &plan, config)
}

/// Validation indices each fold evaluates, after optional subsampling.
pub fn evaluation_indices(plan: &SplitPlan, subsample: bool) -> Vec<Vec<usize>> {
    plan.folds()
        .iter()
        .enumerate()
        .map(|(k, fold)| {
            if subsample {
                subsample_validation(&fold.valid, plan.n(), mix_seed(plan.seed(), k as u64))
            } else {
                fold.valid.clone()
            }
        })
        .collect()
}

/// Cross-fitted certificate over an explicit plan. `config.folds` is
/// ignored in favour of the plan's fold count.
pub fn certify_with_plan(dataset: &ScoredDataset, plan: &SplitPlan, config: &CrossfitConfig) -> Result<BoundReport> {
    ensure_domain!(plan.n() == dataset.len(), "plan covers {} points, dataset has {}", plan.n(), dataset.len());
    let eval = evaluation_indices(plan, config.subsample);
    let mut report = match &config.method {
        MethodConfig::Tv { v } => crossfit_tv(dataset, plan, &eval, *v, config.delta)?,
        MethodConfig::Nw(nw_config) => crossfit_nw(dataset, plan, &eval, nw_config, config.delta)?,
        MethodConfig::Lipschitz {
            lipschitz,
            bucket_counts,
            shifts,
        } => {
            let mut pooled: Vec<usize> = eval.concat();
            pooled.sort_unstable();
            let valid = dataset.select(&pooled)?;
            let counts = bucket_counts.clone().unwrap_or_else(|| default_bucket_counts(valid.len()));
            let mut report = certify_lipschitz(&valid, *lipschitz, &counts, *shifts, config.delta)?;
            // Nothing is fitted, so folds only record what they contributed.
            report.folds = eval.iter().enumerate().map(|(k, idx)| fold_entry(k, 0, idx.len(), Vec::new())).collect();
            report
        }
    };
    report.seed = Some(plan.seed());
    report.diagnostics.insert("folds".into(), plan.fold_count() as f64);
    report.diagnostics.insert("subsample".into(), if config.subsample { 1.0 } else { 0.0 });
    report.flag(FLAG_POOLED);
    Ok(report)
}

fn fold_entry(fold: usize, n_train: usize, n_valid: usize, values: Vec<(&str, f64)>) -> FoldDiagnostics {
    FoldDiagnostics {
        fold,
        n_train,
        n_valid,
        values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
    }
}

fn crossfit_tv(dataset: &ScoredDataset, plan: &SplitPlan, eval: &[Vec<usize>], v: f64, delta: f64) -> Result<BoundReport> {
    let budget = tv::tv_budget(delta)?;
    let per_fold: Vec<(tv::TvFoldFit, Vec<f64>, usize)> = plan
        .folds()
        .par_iter()
        .zip(eval.par_iter())
        .map(|(fold, idx)| {
            let fit = tv::fit_tv_fold(&dataset.select(&fold.train)?, v, &budget)?;
            let (res, below) = tv::residuals(&fit.surrogate, &dataset.select(idx)?);
            Ok((fit, res, below))
        })
        .collect::<Result<_>>()?;

    let pooled: Vec<f64> = per_fold.iter().flat_map(|f| f.1.iter().copied()).collect();
    let total = pooled.len() as f64;
    let weight = |f: &(tv::TvFoldFit, Vec<f64>, usize)| f.1.len() as f64 / total;
    let tvb: f64 = per_fold.iter().map(|f| weight(f) * f.0.tvb).sum();
    let ptb: f64 = per_fold.iter().map(|f| weight(f) * f.0.ptb).sum();
    let mut report = BoundReport::from_terms(
        Method::Tv,
        per_fold.iter().map(|f| f.0.n_train).min().unwrap_or(0),
        pooled.len(),
        delta,
        vec![
            ("empirical_mean", mean(&pooled)?),
            ("bernstein_residual", bernstein_bound(pooled.len(), budget.part(3), empirical_variance(&pooled)?)?),
            ("tvb", tvb),
            ("ptb", ptb),
        ],
    )?;
    let below: usize = per_fold.iter().map(|f| f.2).sum();
    let d = &mut report.diagnostics;
    d.insert("v".into(), v);
    d.insert("v_hat".into(), per_fold.iter().map(|f| weight(f) * f.0.surrogate.total_variation_hat()).sum());
    d.insert("lambda".into(), per_fold.iter().map(|f| weight(f) * f.0.lambda).sum());
    d.insert("below_support_count".into(), below as f64);
    if below > 0 {
        report.flag(tv::FLAG_BELOW_SUPPORT);
    }
    report.folds = per_fold
        .iter()
        .enumerate()
        .map(|(k, (fit, res, below))| {
            fold_entry(
                k,
                fit.n_train,
                res.len(),
                vec![
                    ("lambda", fit.lambda),
                    ("v_hat", fit.surrogate.total_variation_hat()),
                    ("segments", fit.segments as f64),
                    ("tvb", fit.tvb),
                    ("ptb", fit.ptb),
                    ("empirical_mean", mean(res).unwrap_or(0.0)),
                    ("below_support_count", *below as f64),
                ],
            )
        })
        .collect();
    Ok(report)
}

fn crossfit_nw(dataset: &ScoredDataset, plan: &SplitPlan, eval: &[Vec<usize>], config: &NwConfig, delta: f64) -> Result<BoundReport> {
    let budget = nw::nw_budget(delta)?;
    let per_fold: Vec<(nw::NwSurrogate, NwValidation)> = plan
        .folds()
        .par_iter()
        .zip(eval.par_iter())
        .map(|(fold, idx)| {
            let surrogate = config.fit(&dataset.select(&fold.train)?)?;
            let v = nw::validate(&surrogate, &dataset.select(idx)?)?;
            Ok((surrogate, v))
        })
        .collect::<Result<_>>()?;

    let mut pooled = NwValidation::default();
    let mut range: f64 = 0.0;
    for (surrogate, v) in &per_fold {
        pooled.residuals.extend_from_slice(&v.residuals);
        pooled.g.extend_from_slice(&v.g);
        pooled.fallback_count += v.fallback_count;
        range = range.max(nw::effective_range(surrogate));
    }
    let n_train = plan.folds().iter().map(|f| f.train.len()).min().unwrap_or(0);
    let mut report = nw::assemble(&pooled, range, n_train, &budget)?;
    let widest = per_fold
        .iter()
        .map(|f| &f.0)
        .max_by(|a, b| a.R().total_cmp(&b.R()))
        .expect("plans have at least two folds");
    nw::add_config_diagnostics(&mut report, config, widest);
    report.folds = per_fold
        .iter()
        .enumerate()
        .map(|(k, (s, v))| {
            fold_entry(
                k,
                s.scores().len(),
                v.residuals.len(),
                vec![
                    ("h_s", s.bandwidth()),
                    ("R", s.R()),
                    ("R_eff", nw::effective_range(s)),
                    ("fallback_count", v.fallback_count as f64),
                    ("empirical_mean", mean(&v.residuals).unwrap_or(0.0)),
                    ("smoothing_mean", mean(&v.g).unwrap_or(0.0)),
                ],
            )
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_split_plan;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calibrated(n: usize, seed: u64) -> ScoredDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let labels = scores.iter().map(|&s| u8::from(rng.gen::<f64>() < s)).collect();
        ScoredDataset::new(scores, labels).unwrap()
    }

    #[test]
    fn identical_halves_give_symmetric_folds() {
        let half = calibrated(600, 1);
        let scores = [half.scores(), half.scores()].concat();
        let labels = [half.labels(), half.labels()].concat();
        let data = ScoredDataset::new(scores, labels).unwrap();
        let plan = SplitPlan::from_validation_sets(1200, 0, vec![(0..600).collect(), (600..1200).collect()]).unwrap();
        let config = CrossfitConfig {
            folds: 2,
            subsample: false,
            ..CrossfitConfig::new(MethodConfig::Tv { v: 1.0 }, 0.05, 0)
        };
        let pooled = certify_with_plan(&data, &plan, &config).unwrap();
        let fixed = tv::certify_tv(&half, &half, 1.0, &tv::tv_budget(0.05).unwrap()).unwrap();
        for term in ["empirical_mean", "tvb", "ptb"] {
            assert_relative_eq!(pooled.term(term).unwrap(), fixed.term(term).unwrap(), max_relative = 1e-12);
        }
        assert_eq!(pooled.folds[0].values, pooled.folds[1].values);
        // The pooled Bernstein term sees both halves.
        let resid = fixed.term("empirical_mean").unwrap();
        let var = (fixed.term("bernstein_residual").unwrap() - 3.0 * (3.0 / 0.0125f64).ln() / 600.0).powi(2) * 600.0
            / (2.0 * (3.0 / 0.0125f64).ln());
        assert!(resid > 0.0);
        assert_relative_eq!(
            pooled.term("bernstein_residual").unwrap(),
            bernstein_bound(1200, 0.0125, var).unwrap(),
            max_relative = 1e-9
        );
        assert!(pooled.flags.iter().any(|f| f == FLAG_POOLED));
    }

    #[test]
    fn reports_are_deterministic() {
        let data = calibrated(3000, 2);
        for method in [
            MethodConfig::Tv { v: 1.0 },
            MethodConfig::Nw(NwConfig::from_perturbation(0.125).unwrap()),
            MethodConfig::lipschitz(4.0),
        ] {
            let config = CrossfitConfig::new(method, 0.05, 17);
            let a = certify_crossfit(&data, &config).unwrap();
            let b = certify_crossfit(&data, &config).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            a.check().unwrap();
            assert_eq!(a.seed, Some(17));
        }
    }

    #[test]
    fn nw_report_has_perturbation_bounds() {
        let data = calibrated(2000, 3);
        let config = CrossfitConfig::new(MethodConfig::Nw(NwConfig::from_perturbation(1.0 / 64.0).unwrap()), 0.05, 1);
        let r = certify_crossfit(&data, &config).unwrap();
        assert_eq!(r.diagnostic("b1"), Some(32.0));
        assert_eq!(r.diagnostic("b2"), Some(6144.0));
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.n_valid, 2000);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn folds_never_leak(n in 4usize..2000, k in 2usize..10, seed: u64, subsample: bool) {
            prop_assume!(n >= 2 * k);
            let plan = make_split_plan(n, k, seed).unwrap();
            let eval = evaluation_indices(&plan, subsample);
            for (fold, idx) in plan.folds().iter().zip(&eval) {
                let mut in_train = vec![false; n];
                for &i in &fold.train {
                    in_train[i] = true;
                }
                prop_assert!(idx.iter().all(|&i| !in_train[i]));
                prop_assert!(fold.valid.iter().all(|&i| !in_train[i]));
            }
        }
    }
}
