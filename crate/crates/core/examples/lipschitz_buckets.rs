//! Lipschitz bucketing baseline: one partition, then the shifted search.

use calcert::bucketing::{certify_lipschitz, default_bucket_counts, lipschitz_bucket_bound, BucketPartition, DEFAULT_SHIFTS};
use calcert::synth::{sample_synthetic, true_ce, EtaSpec};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::preset("smooth-wiggle")?;
    let law = spec.default_score_law();
    let lipschitz = spec.lipschitz().expect("smooth family");
    let valid = sample_synthetic(&spec, &law, 200_000, 3)?;

    for b in [4, 16, 64] {
        let bound = lipschitz_bucket_bound(&valid, lipschitz, &BucketPartition::new(b, 0, 1)?, 0.05)?;
        println!("B = {b:<3} bucketed {:.4} + mass {:.4}", bound.bucketed, bound.mass_deviation);
    }

    let counts = default_bucket_counts(valid.len());
    let report = certify_lipschitz(&valid, lipschitz, &counts, DEFAULT_SHIFTS, 0.05)?;
    println!(
        "best over {} candidates: {:.4} (B = {}, r = {}), true CE {:.4}",
        counts.len() * DEFAULT_SHIFTS,
        report.bound,
        report.diagnostic("B").unwrap(),
        report.diagnostic("r").unwrap(),
        true_ce(&spec, &law)?
    );
    Ok(())
}
