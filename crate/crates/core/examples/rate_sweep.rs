//! Small rate sweep: mean gap to the true CE and fitted log-log slopes.

use calcert::synth::{rate_sweep, BenchMethod, EtaSpec};

fn main() -> calcert::Result<()> {
    let spec = EtaSpec::preset("smooth-wiggle")?;
    let methods = [BenchMethod::Tv, BenchMethod::Nw, BenchMethod::Lipschitz, BenchMethod::Ece];
    let table = rate_sweep(&spec, &spec.default_score_law(), &methods, &[5_000, 20_000, 80_000], 4, 0.05, 1)?;

    table.write_csv(std::io::stdout())?;
    for (method, slope) in &table.slopes {
        match slope {
            Some(s) => println!("{method:<10} slope {s:+.3}"),
            None => println!("{method:<10} slope undefined"),
        }
    }
    Ok(())
}
