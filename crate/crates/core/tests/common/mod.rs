#![allow(dead_code)]

use std::path::PathBuf;

use calcert::concentration::bernstein_bound;
use calcert::nw::{derivative_bounds, envelope_R, sech_normalizer};
use calcert::tv::{ptb, tv_lambda, tvb};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

/// One oracle row: function name, its parameters and the expected values.
pub struct OracleRow {
    pub function: String,
    pub params: Vec<f64>,
    pub expected: Vec<f64>,
}

pub fn load_oracles() -> Vec<OracleRow> {
    let mut reader = csv::Reader::from_path(data_path("formula_oracles.csv")).expect("oracle table");
    reader
        .records()
        .map(|r| {
            let r = r.expect("oracle row");
            let num = |i: usize| -> Option<f64> {
                let f = r.get(i).unwrap();
                (!f.is_empty()).then(|| f.parse().unwrap())
            };
            OracleRow {
                function: r[0].to_string(),
                params: (1..=5).filter_map(num).collect(),
                expected: (6..=7).filter_map(num).collect(),
            }
        })
        .collect()
}

pub fn evaluate(row: &OracleRow) -> Vec<f64> {
    let p = &row.params;
    match row.function.as_str() {
        "bernstein_bound" => vec![bernstein_bound(p[0] as usize, p[1], p[2]).unwrap()],
        "tv_lambda" => vec![tv_lambda(p[0] as usize, p[1]).unwrap()],
        "tvb" => vec![tvb(p[0] as usize, p[1], p[2]).unwrap()],
        "ptb" => vec![ptb(p[0], p[1], p[2] as usize, p[3], p[4]).unwrap()],
        "sech_normalizer" => vec![sech_normalizer(p[0], p[1]).unwrap()],
        "derivative_bounds" => {
            let b = derivative_bounds(p[0]).unwrap();
            vec![b.b1, b.b2]
        }
        "envelope_R" => vec![envelope_R(p[0], p[1], p[2])],
        other => panic!("unknown oracle function {other}"),
    }
}

/// Largest relative error per function.
pub fn oracle_errors() -> Vec<(String, usize, f64)> {
    let mut out: Vec<(String, usize, f64)> = Vec::new();
    for row in load_oracles() {
        let got = evaluate(&row);
        let err = got
            .iter()
            .zip(&row.expected)
            .map(|(g, e)| ((g - e) / e).abs())
            .fold(0.0, f64::max);
        match out.iter_mut().find(|o| o.0 == row.function) {
            Some(o) => {
                o.1 += 1;
                o.2 = o.2.max(err);
            }
            None => out.push((row.function.clone(), 1, err)),
        }
    }
    out
}
