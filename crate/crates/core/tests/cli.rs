use std::fs;
use std::path::Path;
use std::process::Command;

use calcert::cli::run;
use serde_json::Value;

fn calcert(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("calcert").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = calcert(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

fn schema() -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap()
}

fn assert_valid(report: &Value) {
    let schema = schema();
    let messages: Vec<String> = match schema.validate(report) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    panic!("schema violations: {messages:?}");
}

fn synth_file(dir: &Path, family: &str, n: &str, seed: &str) -> String {
    let path = dir.join(format!("{family}-{n}-{seed}.csv"));
    let p = path.to_str().unwrap().to_string();
    ok(&["synth", "--family", family, "--n", n, "--seed", seed, "--out", &p]);
    p
}

#[test]
fn certify_reports_validate_against_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "identity", "3000", "1");
    for args in [
        vec!["--method", "tv", "--V", "1"],
        vec!["--method", "nw", "--h", "0.015625"],
        vec!["--method", "lipschitz", "--L", "1"],
        vec!["--method", "lipschitz", "--h", "0.25"],
    ] {
        let mut full = vec!["certify", "--input", &data, "--delta", "0.05", "--seed", "1"];
        full.extend(args);
        let report: Value = serde_json::from_str(&ok(&full)).unwrap();
        assert_valid(&report);
        assert_eq!(report["manifest"]["command"], "certify");
        assert_eq!(report["manifest"]["input_digests"]["input"].as_str().unwrap().len(), 64);
        assert!(report["manifest"].get("duration_seconds").is_none());
    }
}

#[test]
fn nw_reports_derivative_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "smooth-wiggle", "2000", "4");
    let out = ok(&["certify", "--input", &data, "--method", "nw", "--h", "0.015625", "--delta", "0.05", "--seed", "1"]);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["diagnostics"]["b1"], 32.0);
    assert_eq!(report["diagnostics"]["b2"], 6144.0);
    assert!(report["flags"].as_array().unwrap().iter().any(|f| f == "crossfit_pooled"));
}

#[test]
fn argument_and_data_errors_have_distinct_exit_codes() {
    let (code, _, err) = calcert(&["certify", "--method", "tv"]);
    assert_eq!(code, 2);
    assert!(err.contains("--input") && err.contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "identity", "500", "1");
    let (code, _, err) = calcert(&["certify", "--input", &data, "--method", "nw"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = calcert(&["certify", "--input", &data, "--method", "tv", "--delta", "1.5"]);
    assert_eq!(code, 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "score,label\n0.5,1\n1.5,0\n").unwrap();
    let (code, out, err) = calcert(&["certify", "--input", bad.to_str().unwrap(), "--method", "tv"]);
    assert_eq!(code, 3);
    assert!(out.is_empty());
    assert!(err.contains("line 3"), "{err}");

    let (code, _, _) = calcert(&["ece", "--input", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(code, 3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_calcert");
    let out = Command::new(bin).args(["certify", "--method", "tv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn tiny_perturbation_keeps_scores_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "step", "5000", "2");
    let a = ok(&["perturb", "--input", &data, "--h", "1e-9", "--seed", "3"]);
    assert_eq!(a, ok(&["perturb", "--input", &data, "--h", "1e-9", "--seed", "3"]));
    let original = fs::read_to_string(&data).unwrap();
    let mut sup: f64 = 0.0;
    for (x, y) in original.lines().zip(a.lines()).skip(1) {
        let (sx, lx) = x.split_once(',').unwrap();
        let (sy, ly) = y.split_once(',').unwrap();
        assert_eq!(lx, ly);
        sup = sup.max((sx.parse::<f64>().unwrap() - sy.parse::<f64>().unwrap()).abs());
    }
    assert_eq!(original.lines().count(), a.lines().count());
    assert!(sup < 1e-6, "{sup}");
}

#[test]
fn synthetic_calibrated_data_has_small_ece() {
    let csv = ok(&["synth", "--family", "identity", "--n", "1000", "--seed", "5"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, &csv).unwrap();
    let value: f64 = ok(&["ece", "--input", path.to_str().unwrap()]).trim().parse().unwrap();

    // Each bin's gap has standard deviation at most ½/√n_b.
    let mut counts = [0usize; 15];
    for line in csv.lines().skip(1) {
        let s: f64 = line.split(',').next().unwrap().parse().unwrap();
        counts[((s * 15.0) as usize).min(14)] += 1;
    }
    let sigma: f64 = counts.iter().map(|&c| (c as f64).sqrt() / 2.0).sum::<f64>() / 1000.0;
    assert!(value < 3.0 * sigma, "ece {value} vs 3σ = {}", 3.0 * sigma);
}

#[test]
fn single_bin_ece_is_the_global_gap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("score,label\n");
    for _ in 0..10 {
        text.push_str("0.9,0\n");
    }
    fs::write(&path, text).unwrap();
    assert_eq!(ok(&["ece", "--bins", "1", "--input", path.to_str().unwrap()]), "0.9\n");
}

#[test]
fn pipeline_is_byte_identical_across_reruns() {
    let pipeline = |dir: &Path| -> String {
        let data = synth_file(dir, "smooth-wiggle", "4000", "11");
        let perturbed = dir.join("p.csv");
        fs::write(&perturbed, ok(&["perturb", "--input", &data, "--h", "0.015625", "--seed", "12"])).unwrap();
        let p = perturbed.to_str().unwrap();
        let mut all = String::new();
        for m in ["tv", "nw", "lipschitz"] {
            all += &ok(&["certify", "--input", p, "--method", m, "--h", "0.015625", "--seed", "13"]);
        }
        all.replace(dir.to_str().unwrap(), "<dir>")
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    assert_eq!(first, pipeline(b.path()));
    assert_eq!(first, pipeline(a.path()));
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "offset", "6000", "21");
    let args = ["certify", "--input", &data, "--method", "nw", "--h", "0.05", "--seed", "2"];
    let mut capped = vec!["--threads", "1"];
    capped.extend(args);
    assert_eq!(ok(&args), ok(&capped));
}

#[test]
fn certify_with_perturbation_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), "step", "3000", "8");
    let out = ok(&["certify", "--input", &data, "--method", "nw", "--h", "0.015625", "--perturb", "--timing"]);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_valid(&report);
    assert!(report["manifest"]["duration_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["manifest"]["params"]["perturb"], true);
    let (code, _, _) = calcert(&["certify", "--input", &data, "--method", "tv", "--perturb"]);
    assert_eq!(code, 2);
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.csv");
    ok(&[
        "bench", "--family", "smooth-wiggle", "--methods", "nw,tv,lipschitz,ece", "--n", "2e3,4e3", "--repeats", "2", "--seed",
        "1", "--out", out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("method,n,mean_gap,std_gap"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let table: Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 8);
    assert_eq!(table["slopes"].as_object().unwrap().len(), 4);
    assert_eq!(table["manifest"]["command"], "bench");

    let stdout: Value = serde_json::from_str(&ok(&["bench", "--family", "identity", "--methods", "tv", "--n", "1000,2000", "--repeats", "1"])).unwrap();
    assert_eq!(stdout["rows"].as_array().unwrap().len(), 2);

    let (code, _, err) = calcert(&["bench", "--family", "step", "--methods", "nw", "--n", "1000", "--repeats", "1"]);
    assert_eq!(code, 2, "{err}");
}
