//! Five-fold cross-fitting for all three certifiers on one dataset.

use calcert::crossfit::{certify_crossfit, CrossfitConfig, MethodConfig};
use calcert::nw::NwConfig;
use calcert::synth::{sample_synthetic, true_ce, EtaSpec};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::preset("smooth-wiggle")?;
    let law = spec.default_score_law();
    let data = sample_synthetic(&spec, &law, 100_000, 9)?;
    println!("true CE {:.4}", true_ce(&spec, &law)?);

    let methods = [
        MethodConfig::Tv { v: spec.total_variation(&law) },
        MethodConfig::Nw(NwConfig::from_bounds(spec.derivative_bounds(&law).expect("no clipping"))),
        MethodConfig::lipschitz(spec.lipschitz().expect("smooth family")),
    ];
    for method in methods {
        let report = certify_crossfit(&data, &CrossfitConfig::new(method, 0.05, 42))?;
        println!("{:<10} {:.4}  folds: {}", report.method.as_str(), report.bound, report.folds.len());
    }
    Ok(())
}
