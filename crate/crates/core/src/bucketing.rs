//! Lipschitz bucketing baseline and the binned ECE heuristic.
//!
//! For a calibration function with Lipschitz constant `L`, the gap
//! `φ(s) = s − η(s)` is `(1 + L)`-Lipschitz, so inside a bucket of width `w`
//! its mean absolute deviation from the bucket mean is at most
//! `(1 + L) w / 2`. The bucket mean of `φ` equals the mean of `s − y` and is
//! estimated with a two-sided empirical Bernstein bound. Bucket masses are
//! replaced by their empirical frequencies at the cost of a multinomial
//! deviation term.

use rayon::prelude::*;

use crate::concentration::bernstein_bound;
use crate::data::ScoredDataset;
use crate::error::{ensure_domain, Result};
use crate::report::{BoundReport, Method};

pub const DEFAULT_SHIFTS: usize = 4;
pub const DEFAULT_ECE_BINS: usize = 15;

/// Equal-width buckets of `[0, 1]`, optionally shifted by a fraction of the
/// width. A nonzero shift adds one bucket: the outer two are clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPartition {
    pub count: usize,
    pub shift: usize,
    pub shifts: usize,
    edges: Vec<f64>,
}

impl BucketPartition {
    /// `count` buckets offset by `shift / (shifts · count)`.
    pub fn new(count: usize, shift: usize, shifts: usize) -> Result<Self> {
        ensure_domain!(count >= 1, "bucket count must be positive");
        ensure_domain!(shifts >= 1 && shift < shifts, "shift {shift} out of range for {shifts} shifts");
        let width = 1.0 / count as f64;
        let offset = shift as f64 / (shifts * count) as f64;
        let mut edges = vec![0.0];
        if offset > 0.0 {
            edges.push(offset);
        }
        for k in 1..count {
            let e = offset + k as f64 * width;
            if e < 1.0 {
                edges.push(e);
            }
        }
        edges.push(1.0);
        Ok(Self {
            count,
            shift,
            shifts,
            edges,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self, bucket: usize) -> f64 {
        self.edges[bucket + 1] - self.edges[bucket]
    }

    /// Bucket holding `s`; buckets are `[e_k, e_{k+1})` except the last,
    /// which is closed.
    pub fn index(&self, s: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= s)
    }
}

/// Per-bucket statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BucketStats {
    n: usize,
    sum: f64,
    sum_sq: f64,
    score_sum: f64,
    label_sum: f64,
}

fn bucket_stats(valid: &ScoredDataset, partition: &BucketPartition) -> Vec<BucketStats> {
    let mut stats = vec![BucketStats::default(); partition.len()];
    for (&s, &y) in valid.scores().iter().zip(valid.labels()) {
        let b = &mut stats[partition.index(s)];
        let z = s - f64::from(y);
        b.n += 1;
        b.sum += z;
        b.sum_sq += z * z;
        b.score_sum += s;
        b.label_sum += f64::from(y);
    }
    stats
}

/// Terms of one bucketed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketBound {
    /// `Σ (n_b/n) min(1, |s̄_b − ȳ_b| + D_b + (1 + L) w_b / 2)`.
    pub bucketed: f64,
    /// Deviation of empirical bucket masses from their true values.
    pub mass_deviation: f64,
}

impl BucketBound {
    pub fn total(&self) -> f64 {
        self.bucketed + self.mass_deviation
    }
}

/// Upper bound on the calibration error of a `lipschitz`-Lipschitz
/// calibration function from one bucket partition, valid with probability
/// `1 − delta`.
pub fn lipschitz_bucket_bound(valid: &ScoredDataset, lipschitz: f64, partition: &BucketPartition, delta: f64) -> Result<BucketBound> {
    ensure_domain!(lipschitz >= 0.0 && lipschitz.is_finite(), "L must be nonnegative, got {lipschitz}");
    ensure_domain!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1), got {delta}");
    let n = valid.len() as f64;
    let buckets = partition.len();
    // Half of delta for the bucket means (two-sided, per bucket), half for
    // the masses.
    let delta_mean = delta / (4.0 * buckets as f64);
    let delta_mass = delta / 2.0;

    let mut bucketed = 0.0;
    for (b, st) in bucket_stats(valid, partition).iter().enumerate() {
        if st.n == 0 {
            continue;
        }
        let nb = st.n as f64;
        let w = partition.width(b);
        let gap = (st.score_sum - st.label_sum).abs() / nb;
        let range = 1.0 + w;
        let mean = st.sum / nb;
        let var = ((st.sum_sq / nb - mean * mean).max(0.0) / (range * range)).min(0.25);
        let dev = range * bernstein_bound(st.n, delta_mean, var)?;
        let a = (gap + dev + 0.5 * (1.0 + lipschitz) * w).min(1.0);
        bucketed += nb / n * a;
    }
    let mass_deviation = if buckets == 1 {
        0.0
    } else {
        0.5 * (2.0 * (buckets as f64 * std::f64::consts::LN_2 + (1.0 / delta_mass).ln()) / n).sqrt()
    };
    Ok(BucketBound {
        bucketed,
        mass_deviation,
    })
}

/// `2^k` for `k = 1..=14`, keeping counts up to `max(n/20, 2)`.
pub fn default_bucket_counts(n: usize) -> Vec<usize> {
    let cap = (n / 20).max(2);
    (1..=14).map(|k| 1usize << k).filter(|&b| b <= cap).collect()
}

/// Minimum of [`lipschitz_bucket_bound`] over all `(B, r)` candidates, each
/// at level `δ / (|counts| · shifts)`.
pub fn certify_lipschitz(valid: &ScoredDataset, lipschitz: f64, bucket_counts: &[usize], shifts: usize, delta: f64) -> Result<BoundReport> {
    ensure_domain!(!bucket_counts.is_empty(), "need at least one bucket count");
    ensure_domain!(shifts >= 1, "need at least one shift");
    let per_candidate = delta / (bucket_counts.len() * shifts) as f64;
    let mut candidates = Vec::new();
    for &count in bucket_counts {
        for shift in 0..shifts {
            candidates.push((count, shift));
        }
    }
    let results: Vec<(usize, usize, BucketBound)> = candidates
        .par_iter()
        .map(|&(count, shift)| {
            let p = BucketPartition::new(count, shift, shifts)?;
            Ok((count, shift, lipschitz_bucket_bound(valid, lipschitz, &p, per_candidate)?))
        })
        .collect::<Result<_>>()?;
    let best = results
        .iter()
        .min_by(|a, b| {
            a.2.total()
                .total_cmp(&b.2.total())
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        })
        .expect("candidate set is nonempty");

    let mut report = BoundReport::from_terms(
        Method::Lipschitz,
        0,
        valid.len(),
        delta,
        vec![("bucketed", best.2.bucketed), ("mass_deviation", best.2.mass_deviation)],
    )?;
    let d = &mut report.diagnostics;
    d.insert("L".into(), lipschitz);
    d.insert("B".into(), best.0 as f64);
    d.insert("r".into(), best.1 as f64);
    d.insert("shifts".into(), shifts as f64);
    d.insert("candidates".into(), results.len() as f64);
    d.insert("delta_candidate".into(), per_candidate);
    Ok(report)
}

/// Binned expected calibration error over `bins` equal-width bins. Not a
/// certified bound.
pub fn ece(scores: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    ensure_domain!(bins >= 1, "bin count must be positive");
    ensure_domain!(!scores.is_empty() && scores.len() == labels.len(), "need equally many scores and labels");
    // Compensated score sums and exact label counts per bin.
    let mut sum = vec![(0.0f64, 0.0f64); bins];
    let mut positives = vec![0u64; bins];
    for (&s, &y) in scores.iter().zip(labels) {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        let (acc, comp) = &mut sum[b];
        let t = *acc + s;
        *comp += if acc.abs() >= s.abs() { (*acc - t) + s } else { (s - t) + *acc };
        *acc = t;
        positives[b] += u64::from(y);
    }
    let n = scores.len() as f64;
    Ok(sum
        .iter()
        .zip(&positives)
        .map(|(&(acc, comp), &k)| ((acc - k as f64) + comp).abs() / n)
        .sum::<f64>()
        .min(1.0))
}
