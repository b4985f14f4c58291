//! The sech perturbation kernel: normaliser, CDF, sampler and the derivative
//! bounds it induces on the calibration function.

use calcert::nw::{derivative_bounds, perturb_scores, perturbed_calibration, sech_cdf, sech_normalizer, Atom, PerturbSpec};

fn main() -> calcert::Result<()> {
    for h in [1.0 / 64.0, 0.1, 1.0] {
        let b = derivative_bounds(h)?;
        println!("h = {h:<9} Z(0.5) = {:.6}  b1 = {:<8} b2 = {}", sech_normalizer(0.5, h)?, b.b1, b.b2);
    }

    let h = 0.05;
    let draws = perturb_scores(&vec![0.3; 20_000], &PerturbSpec::new(h, 7)?)?;
    let below = draws.iter().filter(|&&s| s <= 0.35).count() as f64 / draws.len() as f64;
    println!("P(s <= 0.35): empirical {below:.4}, exact {:.4}", sech_cdf(0.35, 0.3, h)?);

    // A two-point classifier whose scores are badly miscalibrated becomes
    // smooth after perturbation.
    let atoms = [
        Atom { score: 0.2, mass: 0.5, eta: 0.6 },
        Atom { score: 0.8, mass: 0.5, eta: 0.3 },
    ];
    for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("eta({s:.2}) = {:.4}", perturbed_calibration(&atoms, 0.1, s)?);
    }
    Ok(())
}
