//! Loading a `score,label` CSV and certifying it with a fixed split.

use calcert::data::{load_dataset, make_split_plan};
use calcert::tv::{certify_tv, tv_budget};

const CSV: &str = "score,label
0.05,0
0.10,0
0.20,0
0.30,1
0.35,0
0.50,1
0.55,0
0.60,1
0.70,1
0.80,1
0.85,1
0.95,1
";

fn main() -> calcert::Result<()> {
    let data = load_dataset(CSV.as_bytes())?;
    println!("{} rows", data.len());

    let plan = make_split_plan(data.len(), 2, 0)?;
    let fold = &plan.folds()[0];
    let report = certify_tv(&data.select(&fold.train)?, &data.select(&fold.valid)?, 1.0, &tv_budget(0.1)?)?;
    println!("bound {:.3} (vacuous at this size: raw {:.3})", report.bound, report.raw_bound);

    match load_dataset("score,label\n0.4,1\n1.2,0\n".as_bytes()) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
