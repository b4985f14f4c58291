//! Fixed-split TV certificate for a monotone calibration function.

use calcert::synth::{sample_synthetic, true_ce, EtaSpec};
use calcert::tv::{certify_tv, tv_budget};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::Offset { c: 0.1 };
    let law = spec.default_score_law();
    let train = sample_synthetic(&spec, &law, 50_000, 1)?;
    let valid = sample_synthetic(&spec, &law, 50_000, 2)?;

    // Any non-decreasing η on [0, 1] has total variation at most 1.
    let report = certify_tv(&train, &valid, 1.0, &tv_budget(0.05)?)?;

    println!("true CE      {:.4}", true_ce(&spec, &law)?);
    println!("certified    {:.4}", report.bound);
    for (name, value) in &report.terms {
        println!("  {name:<20} {value:.5}");
    }
    println!("segments     {}", report.diagnostic("segments").unwrap_or(f64::NAN));
    Ok(())
}
