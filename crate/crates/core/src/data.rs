//! Dataset ingestion, deterministic fold plans and failure-probability budgets.

use std::io::{Read, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_domain, Error, Result};

/// Paired classifier scores in `[0, 1]` and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredDataset {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty);
        }
        if scores.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidDataset(format!(
                "score {} at index {i} is outside [0, 1]",
                scores[i]
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidDataset(format!(
                "label {} at index {i} is not 0 or 1",
                labels[i]
            )));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_f64(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    /// Rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let scores = indices.iter().map(|&i| self.scores[i]).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(scores, labels)
    }

    /// Same labels with new scores, e.g. after perturbation.
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Self::new(scores, self.labels.clone())
    }

    /// Writes the dataset as `score,label` CSV. Scores use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["score", "label"])?;
        for (s, y) in self.scores.iter().zip(&self.labels) {
            w.write_record([format_score(*s), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_score(s: f64) -> String {
    // `{:?}` prints the shortest round-trip form and keeps a trailing `.0`.
    format!("{s:?}")
}

/// Parses `score,label` CSV. Line numbers in errors are 1-based and count the
/// header as line 1.
pub fn load_dataset<R: Read>(source: R) -> Result<ScoredDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Empty),
        Some(h) => h?,
    };
    if header.len() != 2 || &header[0] != "score" || &header[1] != "label" {
        return Err(Error::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let score: f64 = record[0].parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("cannot parse score `{}`", &record[0]),
        })?;
        let label: i64 = record[1].parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("cannot parse label `{}`", &record[1]),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange { line });
        }
        if label != 0 && label != 1 {
            return Err(Error::InvalidLabel { line });
        }
        scores.push(score);
        labels.push(label as u8);
    }
    ScoredDataset::new(scores, labels)
}

/// Allocation of a total failure probability across the sub-bounds of a
/// certifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBudget {
    total: f64,
    parts: Vec<f64>,
}

impl DeltaBudget {
    /// `total` split into `count` equal parts.
    pub fn equal(total: f64, count: usize) -> Result<Self> {
        ensure_domain!(total > 0.0 && total < 1.0, "delta must lie in (0, 1), got {total}");
        ensure_domain!(count >= 1, "a budget needs at least one part");
        Ok(Self {
            total,
            parts: vec![total / count as f64; count],
        })
    }

    pub fn from_parts(parts: Vec<f64>) -> Result<Self> {
        ensure_domain!(!parts.is_empty(), "a budget needs at least one part");
        ensure_domain!(
            parts.iter().all(|&p| p > 0.0 && p.is_finite()),
            "every budget part must be positive, got {parts:?}"
        );
        let total: f64 = parts.iter().sum();
        ensure_domain!(total < 1.0, "budget parts sum to {total}, which is not below 1");
        Ok(Self { total, parts })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn part(&self, i: usize) -> f64 {
        self.parts[i]
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub(crate) fn expect_parts(&self, count: usize, method: &str) -> Result<()> {
        if self.parts.len() != count {
            return Err(Error::Domain(format!(
                "{method} needs a budget with {count} parts, got {}",
                self.parts.len()
            )));
        }
        Ok(())
    }
}

/// One cross-fitting fold: fit on `train`, evaluate on `valid`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Partition of `0..n` into validation folds, each paired with its
/// complement as the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    n: usize,
    seed: u64,
    folds: Vec<Fold>,
}

impl SplitPlan {
    /// Builds a plan from explicit validation sets, which must partition
    /// `0..n`.
    pub fn from_validation_sets(n: usize, seed: u64, valid_sets: Vec<Vec<usize>>) -> Result<Self> {
        ensure_domain!(valid_sets.len() >= 2, "a split plan needs at least 2 folds");
        let mut owner = vec![usize::MAX; n];
        for (k, set) in valid_sets.iter().enumerate() {
            ensure_domain!(!set.is_empty(), "fold {k} has an empty validation set");
            for &i in set {
                ensure_domain!(i < n, "index {i} out of range for n = {n}");
                ensure_domain!(owner[i] == usize::MAX, "index {i} appears in two folds");
                owner[i] = k;
            }
        }
        ensure_domain!(
            owner.iter().all(|&k| k != usize::MAX),
            "validation sets do not cover every index"
        );
        let folds = valid_sets
            .into_iter()
            .enumerate()
            .map(|(k, mut valid)| {
                valid.sort_unstable();
                let train = (0..n).filter(|&i| owner[i] != k).collect();
                Fold { train, valid }
            })
            .collect();
        Ok(Self { n, seed, folds })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most
/// one. Deterministic in `(n, k, seed)`.
pub fn make_split_plan(n: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    ensure_domain!(k >= 2, "fold count must be at least 2, got {k}");
    ensure_domain!(n >= 2 * k, "need n >= 2K samples, got n = {n}, K = {k}");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut sets = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        sets.push(order[start..start + size].to_vec());
        start += size;
    }
    SplitPlan::from_validation_sets(n, seed, sets)
}

/// Number of validation points kept per fold when subsampling.
pub fn subsample_size(n_valid: usize, n_total: usize) -> usize {
    let target = ((n_total as f64 * 0.05).floor() as usize).clamp(5000, 15000);
    n_valid.min(target)
}

/// Uniform subset of `valid` without replacement, sized by
/// [`subsample_size`]. The result keeps the input order.
pub fn subsample_validation(valid: &[usize], n_total: usize, seed: u64) -> Vec<usize> {
    let size = subsample_size(valid.len(), n_total);
    if size == valid.len() {
        return valid.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, valid.len(), size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| valid[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_row() {
        let d = load_dataset("score,label\n0.5,1\n".as_bytes()).unwrap();
        assert_eq!(d.scores(), &[0.5]);
        assert_eq!(d.labels(), &[1]);
    }

    #[test]
    fn reports_out_of_range_score_with_line() {
        let err = load_dataset("score,label\n1.2,0\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "score out of range at line 2");
    }

    #[test]
    fn rejects_bad_labels_headers_and_extra_columns() {
        let err = load_dataset("score,label\n0.1,0\n0.2,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidLabel { line: 3 }));
        assert!(matches!(
            load_dataset("s,y\n0.1,0\n".as_bytes()).unwrap_err(),
            Error::Header(_)
        ));
        assert!(matches!(
            load_dataset("score,label\n0.1,0,7\n".as_bytes()).unwrap_err(),
            Error::MalformedRow { line: 2, .. }
        ));
        assert!(matches!(
            load_dataset("score,label\nabc,0\n".as_bytes()).unwrap_err(),
            Error::MalformedRow { line: 2, .. }
        ));
        assert!(matches!(load_dataset("".as_bytes()).unwrap_err(), Error::Empty));
        assert!(matches!(load_dataset("score,label\n".as_bytes()).unwrap_err(), Error::Empty));
    }

    #[test]
    fn ten_rows_round_trip_in_order() {
        let scores: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).fract()).collect();
        let labels: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
        let d = ScoredDataset::new(scores, labels).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(load_dataset(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn split_plan_examples() {
        let plan = make_split_plan(10, 2, 7).unwrap();
        assert_eq!(plan.folds()[0].valid.len(), 5);
        assert_eq!(plan.folds()[1].valid.len(), 5);
        assert!(plan.folds()[0].valid.iter().all(|i| !plan.folds()[1].valid.contains(i)));
        assert_eq!(plan, make_split_plan(10, 2, 7).unwrap());

        let plan = make_split_plan(11, 2, 3).unwrap();
        let mut sizes: Vec<_> = plan.folds().iter().map(|f| f.valid.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![5, 6]);

        assert!(make_split_plan(7, 4, 0).is_err());
        assert!(make_split_plan(10, 1, 0).is_err());
    }

    #[test]
    fn subsample_sizes_follow_three_branch_rule() {
        let idx: Vec<usize> = (0..500_000).collect();
        assert_eq!(subsample_validation(&idx, 1_000_000, 1).len(), 15000);
        assert_eq!(subsample_validation(&idx[..5000], 10_000, 1).len(), 5000);
        assert_eq!(subsample_validation(&idx[..100_000], 200_000, 1).len(), 10000);
        assert_eq!(subsample_validation(&idx[..300], 1000, 1).len(), 300);

        for exp in 3..=7 {
            for mant in [1usize, 2, 3, 5, 7] {
                let n = mant * 10usize.pow(exp);
                let expected = (n / 20).clamp(5000, 15000);
                assert_eq!(subsample_size(usize::MAX, n), expected, "n = {n}");
            }
        }
    }

    #[test]
    fn subsample_is_deterministic_subset() {
        let idx: Vec<usize> = (0..40_000).map(|i| 3 * i).collect();
        let a = subsample_validation(&idx, 1_000_000, 9);
        assert_eq!(a, subsample_validation(&idx, 1_000_000, 9));
        assert_ne!(a, subsample_validation(&idx, 1_000_000, 10));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|i| i % 3 == 0));
    }

    #[test]
    fn budget_parts_sum_to_total() {
        let b = DeltaBudget::equal(0.05, 4).unwrap();
        assert!((b.parts().iter().sum::<f64>() - b.total()).abs() < 1e-12);
        let b = DeltaBudget::from_parts(vec![0.01, 0.02, 0.005]).unwrap();
        assert!((b.total() - 0.035).abs() < 1e-12);
        assert!(DeltaBudget::equal(1.5, 2).is_err());
        assert!(DeltaBudget::from_parts(vec![0.1, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn split_plans_partition_indices(n in 4usize..400, k in 2usize..8, seed: u64) {
            prop_assume!(n >= 2 * k);
            let plan = make_split_plan(n, k, seed).unwrap();
            let mut seen = vec![0u32; n];
            let sizes: Vec<usize> = plan.folds().iter().map(|f| f.valid.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for fold in plan.folds() {
                prop_assert_eq!(fold.train.len() + fold.valid.len(), n);
                for &i in &fold.valid {
                    seen[i] += 1;
                    prop_assert!(fold.train.binary_search(&i).is_err());
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
