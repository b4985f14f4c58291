//! Command-line frontend.
//!
//! Data goes to standard output, logs to standard error. Every JSON document
//! carries a `manifest` object:
//!
//! ```text
//! {
//!   "method": "tv" | "nw" | "lipschitz",
//!   "n_train": int, "n_valid": int, "delta": float,
//!   "bound": float, "raw_bound": float,
//!   "terms": { name: float }, "diagnostics": { name: float },
//!   "flags": [string], "seed": int | null, "folds": [...],
//!   "manifest": {
//!     "command": string, "params": { ... },
//!     "input_digests": { name: sha256 hex }, "seed": int,
//!     "version": string, "duration_seconds": float (only with --timing)
//!   }
//! }
//! ```
//!
//! Exit status is 0 on success, 2 for invalid arguments and 3 for invalid
//! input data.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bucketing::ece;
use crate::crossfit::{certify_crossfit, CrossfitConfig, MethodConfig};
use crate::data::{load_dataset, ScoredDataset};
use crate::error::Error;
use crate::nw::{derivative_bounds, perturb_scores, NwConfig, PerturbSpec};
use crate::report::Method;
use crate::rng::mix_seed;
use crate::synth::{rate_sweep, sample_synthetic, BenchMethod, EtaSpec, FAMILIES};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "calcert", version, about = "Certified upper bounds on the L1 calibration error of binary classifiers")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Record wall-clock duration in the manifest (breaks byte-identical reruns).
    #[arg(long, global = true)]
    pub timing: bool,

    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify an upper bound from a `score,label` CSV.
    Certify(CertifyArgs),
    /// Replace scores with sech-perturbed draws.
    Perturb(PerturbArgs),
    /// Sample a synthetic dataset.
    Synth(SynthArgs),
    /// Sweep sample sizes and fit convergence rates.
    Bench(BenchArgs),
    /// Binned ECE (heuristic, not a bound).
    Ece(EceArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    /// Input CSV, or `-` for standard input.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    #[serde(serialize_with = "serialize_method")]
    pub method: Method,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total-variation budget for `tv`.
    #[arg(long = "V", default_value_t = 1.0)]
    #[serde(rename = "V")]
    pub v: f64,
    /// Perturbation bandwidth: gives `b1, b2` for `nw` and `L = 1/(2h)` for `lipschitz`.
    #[arg(long)]
    pub h: Option<f64>,
    /// Lipschitz constant for `lipschitz`.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[arg(long, default_value_t = crate::crossfit::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Evaluate NW on full validation folds.
    #[arg(long)]
    pub no_subsample: bool,
    /// Apply the sech perturbation with bandwidth `--h` before certifying.
    #[arg(long, requires = "h")]
    pub perturb: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(FAMILIES))]
    pub family: String,
    #[arg(long, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(FAMILIES))]
    pub family: String,
    #[arg(long, value_delimiter = ',', value_parser = parse_bench_method, default_value = "tv,nw,lipschitz,ece")]
    #[serde(serialize_with = "serialize_bench_methods")]
    pub methods: Vec<BenchMethod>,
    /// Comma-separated sample sizes; `1e4` notation is accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_count, required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; the JSON table goes next to it with a `.json` extension.
    /// Without it the JSON goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EceArgs {
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, default_value_t = crate::bucketing::DEFAULT_ECE_BINS)]
    pub bins: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_bench_method(s: &str) -> Result<BenchMethod, String> {
    s.trim().parse().map_err(|e: Error| e.to_string())
}

fn parse_count(s: &str) -> Result<usize, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x >= 1.0 && x.fract() == 0.0 && x <= 1e12 {
        Ok(x as usize)
    } else {
        Err(format!("`{s}` is not a positive integer"))
    }
}

fn serialize_method<S: serde::Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.as_str())
}

fn serialize_bench_methods<S: serde::Serializer>(m: &[BenchMethod], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(m.iter().map(|m| m.as_str()))
}

/// Failure of a command, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e)
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
}

impl RunManifest {
    fn new(command: &str, params: &impl Serialize, seed: u64) -> Result<Self, CliError> {
        Ok(Self {
            command: command.into(),
            params: serde_json::to_value(params).map_err(Error::Json)?,
            input_digests: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            duration_seconds: None,
        })
    }
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    manifest: &'a RunManifest,
}

fn to_json<T: Serialize>(body: &T, manifest: &RunManifest) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(&WithManifest { body, manifest }).map_err(Error::Json)?;
    text.push('\n');
    Ok(text)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    if path == Path::new("-") {
        io::stdin().read_to_end(&mut bytes)?;
    } else {
        bytes = fs::read(path).map_err(|e| CliError::Data(Error::InvalidDataset(format!("{}: {e}", path.display()))))?;
    }
    Ok(bytes)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load(path: &Path) -> Result<(ScoredDataset, String), CliError> {
    let bytes = read_input(path)?;
    let digest = sha256_hex(&bytes);
    Ok((load_dataset(&bytes[..])?, digest))
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn certify(args: &CertifyArgs, timing: Option<Instant>, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut data, digest) = load(&args.input)?;
    if args.perturb {
        let h = args.h.expect("clap enforces --h with --perturb");
        let scores = perturb_scores(data.scores(), &PerturbSpec::new(h, mix_seed(args.seed, 0x7065))?)?;
        data = data.with_scores(scores)?;
    }
    let method = match args.method {
        Method::Tv => MethodConfig::Tv { v: args.v },
        Method::Nw => {
            let h = args.h.ok_or_else(|| usage("--method nw requires --h"))?;
            MethodConfig::Nw(NwConfig::from_perturbation(h)?)
        }
        Method::Lipschitz => {
            let l = match (args.l, args.h) {
                (Some(l), _) => l,
                (None, Some(h)) => derivative_bounds(h)?.b1,
                (None, None) => return Err(usage("--method lipschitz requires --L or --h")),
            };
            MethodConfig::lipschitz(l)
        }
    };
    let config = CrossfitConfig {
        folds: args.folds,
        method,
        delta: args.delta,
        seed: args.seed,
        subsample: !args.no_subsample,
    };
    let report = certify_crossfit(&data, &config)?;
    let mut manifest = RunManifest::new("certify", args, args.seed)?;
    manifest.input_digests.insert("input".into(), digest);
    manifest.duration_seconds = timing.map(|t| t.elapsed().as_secs_f64());
    out.write_all(to_json(&report, &manifest)?.as_bytes())?;
    Ok(())
}

fn perturb(args: &PerturbArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, _) = load(&args.input)?;
    let scores = perturb_scores(data.scores(), &PerturbSpec::new(args.h, args.seed)?)?;
    data.with_scores(scores)?.write_csv(out)?;
    Ok(())
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = EtaSpec::preset(&args.family)?;
    let data = sample_synthetic(&spec, &spec.default_score_law(), args.n, args.seed)?;
    match &args.out {
        Some(path) => data.write_csv(fs::File::create(path)?)?,
        None => data.write_csv(out)?,
    }
    Ok(())
}

fn bench(args: &BenchArgs, timing: Option<Instant>, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = EtaSpec::preset(&args.family)?;
    let table = rate_sweep(
        &spec,
        &spec.default_score_law(),
        &args.methods,
        &args.n,
        args.repeats,
        args.delta,
        args.seed,
    )?;
    let mut manifest = RunManifest::new("bench", args, args.seed)?;
    manifest.duration_seconds = timing.map(|t| t.elapsed().as_secs_f64());
    let json = to_json(&table, &manifest)?;
    match &args.out {
        Some(path) => {
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            fs::write(path, csv)?;
            fs::write(path.with_extension("json"), json)?;
        }
        None => out.write_all(json.as_bytes())?,
    }
    Ok(())
}

fn ece_cmd(args: &EceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (data, _) = load(&args.input)?;
    let value = ece(data.scores(), data.labels(), args.bins)?;
    writeln!(out, "{value}")?;
    Ok(())
}

/// Runs a parsed command, writing its data output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let start = cli.timing.then(Instant::now);
    let mut buf = Vec::new();
    let mut body = || match &cli.command {
        Command::Certify(a) => certify(a, start, &mut buf),
        Command::Perturb(a) => perturb(a, &mut buf),
        Command::Synth(a) => synth(a, &mut buf),
        Command::Bench(a) => bench(a, start, &mut buf),
        Command::Ece(a) => ece_cmd(a, &mut buf),
    };
    match cli.threads {
        Some(0) => Err(usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(e.to_string()))?
            .install(body),
        None => body(),
    }?;
    out.write_all(&buf)?;
    Ok(())
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).try_init();
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
