//! Synthetic calibration functions with a quadrature ground truth, and the
//! rate-sweep harness that measures how fast certified bounds approach it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bucketing::{ece, DEFAULT_ECE_BINS};
use crate::crossfit::{certify_crossfit, CrossfitConfig, MethodConfig, DEFAULT_FOLDS};
use crate::data::ScoredDataset;
use crate::error::{ensure_domain, Error, Result};
use crate::nw::{DerivativeBounds, NwConfig};
use crate::rng::{mix_seed, stream_rng};

const CHUNK: usize = 4096;
const TV_GRID: usize = 1 << 20;
const TV_MARGIN: f64 = 1e-6;
const QUADRATURE_TOL: f64 = 1e-12;

/// Synthetic calibration function `η(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EtaSpec {
    /// `η(s) = s`.
    Identity,
    /// `η(s) = clip(s + c, 0, 1)`.
    Offset { c: f64 },
    /// `η(s) = clip(s + A sin(2πfs), 0, 1)`.
    SmoothWiggle { amplitude: f64, frequency: f64 },
    /// Piecewise constant; `levels[j]` holds on `[knots[j−1], knots[j])`.
    Step { knots: Vec<f64>, levels: Vec<f64> },
    /// Same form as the wiggle at a frequency well above the usual ECE bin
    /// count, on scores restricted to `[0.2, 0.8]` by default.
    HighFrequency { amplitude: f64, frequency: f64 },
}

pub const FAMILIES: [&str; 5] = ["identity", "offset", "smooth-wiggle", "step", "high-frequency"];

impl EtaSpec {
    /// The documented default member of a family.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "identity" => EtaSpec::Identity,
            "offset" => EtaSpec::Offset { c: 0.1 },
            "smooth-wiggle" => EtaSpec::SmoothWiggle {
                amplitude: 0.1,
                frequency: 1.0,
            },
            "step" => EtaSpec::Step {
                knots: vec![0.3, 0.7],
                levels: vec![0.2, 0.5, 0.9],
            },
            "high-frequency" => EtaSpec::HighFrequency {
                amplitude: 0.2,
                frequency: 30.0,
            },
            other => return Err(Error::Domain(format!("unknown family `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EtaSpec::Identity => "identity",
            EtaSpec::Offset { .. } => "offset",
            EtaSpec::SmoothWiggle { .. } => "smooth-wiggle",
            EtaSpec::Step { .. } => "step",
            EtaSpec::HighFrequency { .. } => "high-frequency",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EtaSpec::Step { knots, levels } = self {
            ensure_domain!(levels.len() == knots.len() + 1, "a step function needs one more level than knots");
            ensure_domain!(knots.windows(2).all(|w| w[0] < w[1]), "knots must be increasing");
            ensure_domain!(knots.iter().all(|k| (0.0..=1.0).contains(k)), "knots must lie in [0, 1]");
            ensure_domain!(levels.iter().all(|l| (0.0..=1.0).contains(l)), "levels must lie in [0, 1]");
        }
        Ok(())
    }

    fn raw(&self, s: f64) -> f64 {
        match self {
            EtaSpec::Identity => s,
            EtaSpec::Offset { c } => s + c,
            EtaSpec::SmoothWiggle { amplitude, frequency } | EtaSpec::HighFrequency { amplitude, frequency } => {
                s + amplitude * (2.0 * PI * frequency * s).sin()
            }
            EtaSpec::Step { knots, levels } => levels[knots.partition_point(|&k| k <= s)],
        }
    }

    /// `η(s)`, always in `[0, 1]`.
    pub fn eta(&self, s: f64) -> f64 {
        self.raw(s).clamp(0.0, 1.0)
    }

    pub fn default_score_law(&self) -> ScoreLaw {
        match self {
            EtaSpec::HighFrequency { .. } => ScoreLaw::Uniform { lo: 0.2, hi: 0.8 },
            _ => ScoreLaw::default(),
        }
    }

    fn clipping_active(&self, law: &ScoreLaw) -> bool {
        let (lo, hi) = law.support();
        let n = 1 << 16;
        (0..=n).any(|i| {
            let r = self.raw(lo + (hi - lo) * i as f64 / n as f64);
            !(0.0..=1.0).contains(&r)
        })
    }

    /// Lipschitz constant of `η` on the score support, if it has one.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            EtaSpec::Identity | EtaSpec::Offset { .. } => Some(1.0),
            EtaSpec::SmoothWiggle { amplitude, frequency } | EtaSpec::HighFrequency { amplitude, frequency } => {
                Some(1.0 + 2.0 * PI * frequency * amplitude.abs())
            }
            EtaSpec::Step { .. } => None,
        }
    }

    /// Bounds on `|η′|` and `|η″|` over the support of `law`, when `η` is
    /// twice differentiable there.
    pub fn derivative_bounds(&self, law: &ScoreLaw) -> Option<DerivativeBounds> {
        if self.clipping_active(law) {
            return None;
        }
        match self {
            EtaSpec::Identity | EtaSpec::Offset { .. } => Some(DerivativeBounds { b1: 1.0, b2: 0.0 }),
            EtaSpec::SmoothWiggle { amplitude, frequency } | EtaSpec::HighFrequency { amplitude, frequency } => {
                let w = 2.0 * PI * frequency;
                Some(DerivativeBounds {
                    b1: 1.0 + w * amplitude.abs(),
                    b2: w * w * amplitude.abs(),
                })
            }
            EtaSpec::Step { .. } => None,
        }
    }

    /// Total variation of `η` over the support of `law`. Exact for monotone
    /// and step families; otherwise a fine-grid sum plus a small margin that
    /// covers the grid's underestimate.
    pub fn total_variation(&self, law: &ScoreLaw) -> f64 {
        let (lo, hi) = law.support();
        match self {
            EtaSpec::Identity | EtaSpec::Offset { .. } => self.eta(hi) - self.eta(lo),
            EtaSpec::Step { knots, levels } => {
                let first = knots.partition_point(|&k| k <= lo);
                let last = knots.partition_point(|&k| k <= hi);
                levels[first..=last].windows(2).map(|w| (w[1] - w[0]).abs()).sum()
            }
            _ => {
                let step = (hi - lo) / TV_GRID as f64;
                let mut prev = self.eta(lo);
                let mut tv = 0.0;
                for i in 1..=TV_GRID {
                    let v = self.eta(lo + step * i as f64);
                    tv += (v - prev).abs();
                    prev = v;
                }
                tv + TV_MARGIN
            }
        }
    }

    /// Points in `[lo, hi]` where `|s − η(s)|` may fail to be smooth.
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        match self {
            EtaSpec::Identity => {}
            EtaSpec::Offset { c } => pts.extend([-c, 1.0 - c]),
            EtaSpec::SmoothWiggle { frequency, .. } | EtaSpec::HighFrequency { frequency, .. } => {
                let half_periods = (2.0 * frequency * hi).ceil() as i64;
                pts.extend((0..=half_periods).map(|k| k as f64 / (2.0 * frequency)));
                pts.extend(roots(|s| self.raw(s), lo, hi));
                pts.extend(roots(|s| self.raw(s) - 1.0, lo, hi));
            }
            EtaSpec::Step { knots, levels } => {
                pts.extend(knots.iter().copied());
                pts.extend(levels.iter().copied());
            }
        }
        pts.retain(|&p| p >= lo && p <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        pts
    }
}

/// Sign changes of `f` on a fine grid, refined by bisection.
fn roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = 1 << 14;
    let mut out = Vec::new();
    let x = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
    for i in 0..n {
        let (mut a, mut b) = (x(i), x(i + 1));
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            out.push(a);
        }
        if fa * fb < 0.0 {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(m) * fa > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

/// Distribution of the classifier's scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ScoreLaw {
    Uniform { lo: f64, hi: f64 },
    /// Mixture of normals, each truncated to `[0, 1]`; components are
    /// `(weight, mean, sd)`.
    TruncatedMixture { components: Vec<(f64, f64, f64)> },
}

impl Default for ScoreLaw {
    fn default() -> Self {
        ScoreLaw::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl ScoreLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreLaw::Uniform { lo, hi } => {
                ensure_domain!(0.0 <= *lo && lo < hi && *hi <= 1.0, "uniform support must satisfy 0 <= lo < hi <= 1")
            }
            ScoreLaw::TruncatedMixture { components } => {
                ensure_domain!(!components.is_empty(), "a mixture needs components");
                ensure_domain!(
                    components.iter().all(|&(w, _, sd)| w > 0.0 && sd > 0.0),
                    "mixture weights and sds must be positive"
                );
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            ScoreLaw::Uniform { lo, hi } => (*lo, *hi),
            ScoreLaw::TruncatedMixture { .. } => (0.0, 1.0),
        }
    }

    fn truncated(components: &[(f64, f64, f64)]) -> Vec<(f64, Normal, f64, f64)> {
        let total: f64 = components.iter().map(|c| c.0).sum();
        components
            .iter()
            .map(|&(w, m, sd)| {
                let d = Normal::new(m, sd).expect("validated parameters");
                let (c0, c1) = (d.cdf(0.0), d.cdf(1.0));
                (w / total, d, c0, c1 - c0)
            })
            .collect()
    }

    /// Density on the support.
    pub fn density(&self, s: f64) -> f64 {
        use statrs::distribution::Continuous;
        match self {
            ScoreLaw::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&s) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            ScoreLaw::TruncatedMixture { components } => Self::truncated(components)
                .iter()
                .map(|(w, d, _, mass)| w * d.pdf(s) / mass)
                .sum(),
        }
    }

    fn sampler(&self) -> impl Fn(&mut ChaCha8Rng) -> f64 + Sync + '_ {
        let parts = match self {
            ScoreLaw::TruncatedMixture { components } => Self::truncated(components),
            ScoreLaw::Uniform { .. } => Vec::new(),
        };
        move |rng: &mut ChaCha8Rng| match self {
            ScoreLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            ScoreLaw::TruncatedMixture { .. } => {
                let mut u = rng.gen::<f64>();
                let mut pick = parts.len() - 1;
                for (k, p) in parts.iter().enumerate() {
                    if u < p.0 {
                        pick = k;
                        break;
                    }
                    u -= p.0;
                }
                let (_, d, c0, mass) = &parts[pick];
                d.inverse_cdf(c0 + rng.gen::<f64>() * mass).clamp(0.0, 1.0)
            }
        }
    }
}

/// `n` i.i.d. draws `s ~ law`, `y ~ Bernoulli(η(s))`.
pub fn sample_synthetic(spec: &EtaSpec, law: &ScoreLaw, n: usize, seed: u64) -> Result<ScoredDataset> {
    spec.validate()?;
    law.validate()?;
    ensure_domain!(n >= 1, "need at least one sample");
    let draw = law.sampler();
    let mut scores = vec![0.0; n];
    let mut labels = vec![0u8; n];
    scores
        .par_chunks_mut(CHUNK)
        .zip(labels.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(chunk, (s, y))| {
            let mut rng = stream_rng(seed, chunk as u64);
            for (si, yi) in s.iter_mut().zip(y.iter_mut()) {
                *si = draw(&mut rng);
                *yi = u8::from(rng.gen::<f64>() < spec.eta(*si));
            }
        });
    ScoredDataset::new(scores, labels)
}

/// `E_s |s − η(s)|` by double-exponential quadrature between breakpoints.
pub fn true_ce(spec: &EtaSpec, law: &ScoreLaw) -> Result<f64> {
    spec.validate()?;
    law.validate()?;
    let (lo, hi) = law.support();
    let pts = spec.breakpoints(lo, hi);
    let integrand = |s: f64| (s - spec.eta(s)).abs() * law.density(s);
    let pieces = pts.len().saturating_sub(1).max(1) as f64;
    Ok(pts
        .windows(2)
        .map(|w| quadrature::integrate(integrand, w[0], w[1], QUADRATURE_TOL / pieces).integral)
        .sum())
}

/// Estimator compared against the ground truth in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Tv,
    Nw,
    Lipschitz,
    Ece,
}

impl BenchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::Tv => "tv",
            BenchMethod::Nw => "nw",
            BenchMethod::Lipschitz => "lipschitz",
            BenchMethod::Ece => "ece",
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(BenchMethod::Tv),
            "nw" => Ok(BenchMethod::Nw),
            "lipschitz" => Ok(BenchMethod::Lipschitz),
            "ece" => Ok(BenchMethod::Ece),
            other => Err(Error::Domain(format!("unknown bench method `{other}`"))),
        }
    }
}

/// Anything that turns a sample into a gap to the true calibration error.
pub trait GapEstimator: Sync {
    fn name(&self) -> String;
    fn gap(&self, data: &ScoredDataset, true_ce: f64, seed: u64) -> Result<f64>;
}

/// A [`BenchMethod`] configured for one family.
#[derive(Debug, Clone)]
pub struct FamilyEstimator {
    pub method: BenchMethod,
    config: Option<MethodConfig>,
    pub delta: f64,
    pub folds: usize,
}

impl FamilyEstimator {
    /// Certifiers use the family's own regularity constants: total variation
    /// for TV, analytic derivative bounds for NW, the Lipschitz constant for
    /// bucketing.
    pub fn new(method: BenchMethod, spec: &EtaSpec, law: &ScoreLaw, delta: f64) -> Result<Self> {
        let config = match method {
            BenchMethod::Tv => Some(MethodConfig::Tv {
                v: spec.total_variation(law),
            }),
            BenchMethod::Nw => {
                let bounds = spec.derivative_bounds(law).ok_or_else(|| {
                    Error::NotApplicable(format!("family `{}` has no derivative bounds on this score law", spec.name()))
                })?;
                Some(MethodConfig::Nw(NwConfig::from_bounds(bounds)))
            }
            BenchMethod::Lipschitz => {
                let l = spec.lipschitz().ok_or_else(|| {
                    Error::NotApplicable(format!("family `{}` is not Lipschitz", spec.name()))
                })?;
                Some(MethodConfig::lipschitz(l))
            }
            BenchMethod::Ece => None,
        };
        Ok(Self {
            method,
            config,
            delta,
            folds: DEFAULT_FOLDS,
        })
    }

    /// Certified bound, or the ECE value for [`BenchMethod::Ece`].
    pub fn estimate(&self, data: &ScoredDataset, seed: u64) -> Result<f64> {
        match &self.config {
            None => ece(data.scores(), data.labels(), DEFAULT_ECE_BINS),
            Some(method) => {
                let config = CrossfitConfig {
                    folds: self.folds,
                    method: method.clone(),
                    delta: self.delta,
                    seed,
                    subsample: self.method == BenchMethod::Nw,
                };
                Ok(certify_crossfit(data, &config)?.bound)
            }
        }
    }
}

impl GapEstimator for FamilyEstimator {
    fn name(&self) -> String {
        self.method.to_string()
    }

    fn gap(&self, data: &ScoredDataset, true_ce: f64, seed: u64) -> Result<f64> {
        let value = self.estimate(data, seed)?;
        Ok(match self.method {
            BenchMethod::Ece => (value - true_ce).abs(),
            _ => value - true_ce,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub method: String,
    pub n: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub gaps: Vec<f64>,
}

/// Gap statistics per method and sample size, with fitted log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub family: EtaSpec,
    pub score_law: ScoreLaw,
    pub true_ce: f64,
    pub repeats: usize,
    pub seed: u64,
    pub rows: Vec<RateRow>,
    /// `None` when some mean gap is not positive.
    pub slopes: BTreeMap<String, Option<f64>>,
}

impl RateTable {
    pub fn rows_for(&self, method: &str) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    pub fn slope(&self, method: &str) -> Option<f64> {
        self.slopes.get(method).copied().flatten()
    }

    pub fn mean_gap(&self, method: &str, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method && r.n == n).map(|r| r.mean_gap)
    }

    /// `method,n,mean_gap,std_gap`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "n", "mean_gap", "std_gap"])?;
        for r in &self.rows {
            w.write_record([r.method.clone(), r.n.to_string(), format!("{:?}", r.mean_gap), format!("{:?}", r.std_gap)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of the dataset for grid point `i`, repeat `r`.
pub fn trial_seed(seed: u64, i: usize, r: usize) -> u64 {
    mix_seed(seed, ((i as u64) << 32) | r as u64)
}

/// Runs every estimator on `repeats` fresh datasets at each sample size.
pub fn rate_sweep_with(
    spec: &EtaSpec,
    law: &ScoreLaw,
    estimators: &[&dyn GapEstimator],
    n_grid: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<RateTable> {
    ensure_domain!(!n_grid.is_empty(), "the n grid is empty");
    ensure_domain!(n_grid.windows(2).all(|w| w[0] < w[1]), "the n grid must be strictly increasing");
    ensure_domain!(repeats >= 1, "need at least one repeat");
    let ce = true_ce(spec, law)?;

    let mut rows = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let per_repeat: Vec<Vec<f64>> = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let s = trial_seed(seed, i, r);
                let data = sample_synthetic(spec, law, n, s)?;
                estimators
                    .iter()
                    .map(|e| {
                        e.gap(&data, ce, mix_seed(s, 1)).map_err(|err| {
                            Error::Domain(format!("{} at n = {n}, repeat {r}: {err}", e.name()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (m, e) in estimators.iter().enumerate() {
            let gaps: Vec<f64> = per_repeat.iter().map(|g| g[m]).collect();
            let mean = gaps.iter().sum::<f64>() / repeats as f64;
            let std = if repeats > 1 {
                (gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (repeats - 1) as f64).sqrt()
            } else {
                0.0
            };
            log::info!("{} n={n}: mean gap {mean:.5} (sd {std:.5})", e.name());
            rows.push(RateRow {
                method: e.name(),
                n,
                mean_gap: mean,
                std_gap: std,
                gaps,
            });
        }
    }

    let mut slopes = BTreeMap::new();
    for e in estimators {
        let name = e.name();
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.method == name).map(|r| (r.n as f64, r.mean_gap)).collect();
        slopes.insert(name, fit_slope(&pts).ok());
    }
    Ok(RateTable {
        family: spec.clone(),
        score_law: law.clone(),
        true_ce: ce,
        repeats,
        seed,
        rows,
        slopes,
    })
}

/// [`rate_sweep_with`] for the built-in methods.
pub fn rate_sweep(
    spec: &EtaSpec,
    law: &ScoreLaw,
    methods: &[BenchMethod],
    n_grid: &[usize],
    repeats: usize,
    delta: f64,
    seed: u64,
) -> Result<RateTable> {
    let estimators: Vec<FamilyEstimator> = methods
        .iter()
        .map(|&m| FamilyEstimator::new(m, spec, law, delta))
        .collect::<Result<_>>()?;
    let refs: Vec<&dyn GapEstimator> = estimators.iter().map(|e| e as &dyn GapEstimator).collect();
    rate_sweep_with(spec, law, &refs, n_grid, repeats, seed)
}

/// Least-squares slope of `ln gap` against `ln n`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    ensure_domain!(points.len() >= 2, "need at least two points to fit a slope");
    ensure_domain!(
        points.iter().all(|&(n, g)| n > 0.0 && g > 0.0),
        "sample sizes and gaps must be positive"
    );
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    ensure_domain!(sxx > 0.0, "sample sizes must not all be equal");
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ce_examples() {
        let u = ScoreLaw::default();
        assert!(true_ce(&EtaSpec::Identity, &u).unwrap().abs() < 1e-12);
        assert_relative_eq!(true_ce(&EtaSpec::Offset { c: 0.1 }, &u).unwrap(), 0.095, epsilon = 1e-10);
        let wiggle = EtaSpec::preset("smooth-wiggle").unwrap();
        assert_relative_eq!(true_ce(&wiggle, &u).unwrap(), 0.2 / PI, epsilon = 1e-10);
        let hf = EtaSpec::preset("high-frequency").unwrap();
        assert_relative_eq!(true_ce(&hf, &hf.default_score_law()).unwrap(), 0.4 / PI, epsilon = 1e-10);
        // ∫₀^0.3 |s − 0.2| + ∫_0.3^0.7 |s − 0.5| + ∫_0.7^1 |s − 0.9|
        let step = EtaSpec::preset("step").unwrap();
        let expected = (0.02 + 0.005) + (0.02 + 0.02) + (0.02 + 0.005);
        assert_relative_eq!(true_ce(&step, &u).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn family_constants() {
        let u = ScoreLaw::default();
        assert_eq!(EtaSpec::Identity.total_variation(&u), 1.0);
        assert_relative_eq!(EtaSpec::Offset { c: 0.1 }.total_variation(&u), 0.9, epsilon = 1e-15);
        assert_relative_eq!(EtaSpec::preset("step").unwrap().total_variation(&u), 0.7, epsilon = 1e-15);
        let wiggle = EtaSpec::preset("smooth-wiggle").unwrap();
        let tv = wiggle.total_variation(&u);
        assert!((1.0..1.0 + 2e-6).contains(&tv));
        let b = wiggle.derivative_bounds(&u).unwrap();
        assert_relative_eq!(b.b1, 1.0 + 0.2 * PI, epsilon = 1e-15);
        assert_relative_eq!(b.b2, 0.4 * PI * PI, epsilon = 1e-14);
        assert!(EtaSpec::Offset { c: 0.1 }.derivative_bounds(&u).is_none());
        let hf = EtaSpec::preset("high-frequency").unwrap();
        assert!(hf.derivative_bounds(&hf.default_score_law()).is_some());
        assert!(hf.derivative_bounds(&u).is_none());
    }

    #[test]
    fn sampling_follows_the_calibration_function() {
        let d = sample_synthetic(&EtaSpec::Identity, &ScoreLaw::default(), 200_000, 1).unwrap();
        let window: Vec<usize> = (0..d.len()).filter(|&i| (0.2..0.4).contains(&d.scores()[i])).collect();
        let mean = window.iter().map(|&i| d.label_f64(i)).sum::<f64>() / window.len() as f64;
        assert!((mean - 0.3).abs() < 4.0 * (0.25 / window.len() as f64).sqrt());

        let zero = sample_synthetic(&EtaSpec::Offset { c: -1.0 }, &ScoreLaw::default(), 1000, 2).unwrap();
        assert!(zero.labels().iter().all(|&y| y == 0));

        let law = ScoreLaw::TruncatedMixture {
            components: vec![(0.7, 0.3, 0.1), (0.3, 0.9, 0.2)],
        };
        let a = sample_synthetic(&EtaSpec::Identity, &law, 5000, 3).unwrap();
        assert_eq!(a, sample_synthetic(&EtaSpec::Identity, &law, 5000, 3).unwrap());
        assert!(a.scores().iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let law = ScoreLaw::TruncatedMixture {
            components: vec![(0.7, 0.3, 0.1), (0.3, 0.9, 0.2)],
        };
        let total = quadrature::integrate(|s| law.density(s), 0.0, 1.0, 1e-12).integral;
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn slope_examples() {
        let ns: [f64; 5] = [1e4, 3e4, 1e5, 3e5, 1e6];
        let half: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 2.0 * n.powf(-0.5))).collect();
        assert!((fit_slope(&half).unwrap() + 0.5).abs() < 1e-12);
        let quarter: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 0.3 * n.powf(-0.25))).collect();
        assert!((fit_slope(&quarter).unwrap() + 0.25).abs() < 1e-12);
        assert!(fit_slope(&[(10.0, 0.0), (20.0, 1.0)]).is_err());
        assert!(fit_slope(&[(10.0, 1.0)]).is_err());
    }

    struct Constant;

    impl GapEstimator for Constant {
        fn name(&self) -> String {
            "constant".into()
        }

        fn gap(&self, _: &ScoredDataset, _: f64, _: u64) -> Result<f64> {
            Ok(0.5)
        }
    }

    #[test]
    fn constant_gap_has_flat_slope() {
        let t = rate_sweep_with(&EtaSpec::Identity, &ScoreLaw::default(), &[&Constant], &[100, 1000, 10_000], 2, 0).unwrap();
        assert!(t.slope("constant").unwrap().abs() < 0.02);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,n,mean_gap,std_gap\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
