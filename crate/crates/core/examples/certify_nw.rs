//! NW certificate on sech-perturbed scores of an uncalibrated step classifier.

use calcert::nw::{certify_nw, nw_budget, perturb_scores, PerturbSpec};
use calcert::synth::{sample_synthetic, EtaSpec};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::preset("step")?;
    let law = spec.default_score_law();
    let h = 1.0 / 64.0;

    let perturb = |seed: u64| -> calcert::Result<_> {
        let data = sample_synthetic(&spec, &law, 100_000, seed)?;
        let scores = perturb_scores(data.scores(), &PerturbSpec::new(h, seed + 100)?)?;
        data.with_scores(scores)
    };
    let train = perturb(1)?;
    let valid = perturb(2)?;

    let report = certify_nw(&train, &valid, h, &nw_budget(0.05)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
