//! Binned ECE against a calibration function that oscillates faster than the
//! bins: the binned gaps cancel, the heuristic reports near zero, and more
//! data does not help.

use calcert::bucketing::{ece, DEFAULT_ECE_BINS};
use calcert::crossfit::{certify_crossfit, CrossfitConfig, MethodConfig};
use calcert::nw::NwConfig;
use calcert::synth::{sample_synthetic, true_ce, EtaSpec};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::preset("high-frequency")?;
    let law = spec.default_score_law();
    let truth = true_ce(&spec, &law)?;
    let bounds = spec.derivative_bounds(&law).expect("no clipping on [0.2, 0.8]");
    println!("true CE {truth:.4}");

    for n in [10_000, 100_000, 300_000] {
        let data = sample_synthetic(&spec, &law, n, n as u64)?;
        let e = ece(data.scores(), data.labels(), DEFAULT_ECE_BINS)?;
        let config = CrossfitConfig::new(MethodConfig::Nw(NwConfig::from_bounds(bounds)), 0.05, 1);
        let nw = certify_crossfit(&data, &config)?.bound;
        println!("n = {n:<7} ECE {e:.4} (gap {:.4})   NW bound {nw:.4} (gap {:.4})", (e - truth).abs(), nw - truth);
    }
    Ok(())
}
