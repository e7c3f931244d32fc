//! Command-line front end: `generate`, `importance`, `ale`, `density`,
//! `truth`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ale::{self, GridKind, TargetVariance};
use crate::dataset::{Dataset, MissingPolicy};
use crate::error::{Error, Result};
use crate::gknock::{DiagonalRule, KnockoffConfig, DEFAULT_SHRINKAGE};
use crate::importance::{
    density_diagnostic, run_all, ImportanceConfig, LossFn, Measure, Strategy, StrategyOptions,
    DEFAULT_ALE_BINS, DEFAULT_DENSITY_BINS, DEFAULT_REPLICATES,
};
use crate::models::{
    exact_function_predictor, fit_knn, fit_ols, FitReport, Predictor, RecordingPredictor,
    TablePredictor,
};
use crate::seed::{Purpose, SeedPolicy, ALL_FEATURES};
use crate::synth::{
    analytic_ground_truth_independent, oracle_ground_truth, sample_hooker, HookerSpec,
    DEFAULT_NOISE_SD,
};

pub const QUERIES_FILE: &str = "queries.csv";
const DEFAULT_ORACLE_SIZE: usize = 2000;

#[derive(Debug, Parser)]
#[command(
    name = "permsafe",
    version,
    about = "Permutation feature importance without extrapolation"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes outputs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic benchmark and its ground truth.
    Generate(GenerateArgs),
    /// Permutation, restricted-permutation and ALE importance.
    Importance(ImportanceArgs),
    /// ALE curves and indices over a sweep of grid sizes.
    Ale(AleArgs),
    /// Prediction-density extrapolation diagnostic for one feature.
    Density(DensityArgs),
    /// Ground-truth total indices for the Hooker benchmark.
    Truth(TruthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Hooker,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeedArgs {
    /// Master seed.
    #[arg(long, env = "PERMSAFE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HookerArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, default_value_t = crate::synth::DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
}

impl HookerArgs {
    fn spec(&self) -> HookerSpec {
        HookerSpec {
            rho: self.rho,
            noise_sd: self.noise_sd,
            n: self.n,
            ..HookerSpec::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub benchmark: Benchmark,
    #[command(flatten)]
    pub hooker: HookerArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Outer sample size of the oracle used when rho != 0.
    #[arg(long, default_value_t = DEFAULT_ORACLE_SIZE)]
    pub oracle_outer: usize,
    #[arg(long, default_value_t = DEFAULT_ORACLE_SIZE)]
    pub oracle_inner: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TruthArgs {
    #[command(flatten)]
    pub hooker: HookerArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long, default_value_t = DEFAULT_ORACLE_SIZE)]
    pub outer: usize,
    #[arg(long, default_value_t = DEFAULT_ORACLE_SIZE)]
    pub inner: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingArg {
    Reject,
    Drop,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// CSV file, or `hooker:rho=R,n=N,noise=S,seed=K` for a synthetic sample.
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = MissingArg::Reject)]
    pub missing: MissingArg,
    /// `exact:<id>`, `ols[:interactions]`, `knn:<k>` or `predictions:<path>`.
    #[arg(long)]
    pub model: String,
    /// Hold-out fraction for reporting the fit of built-in models.
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    /// `linear`, `knn` or `knn:<k>`.
    #[arg(long, default_value = "linear")]
    pub regression: String,
    /// `sdp` or `equi`.
    #[arg(long, default_value = "sdp")]
    pub knockoff_rule: String,
    #[arg(long, default_value_t = DEFAULT_SHRINKAGE)]
    pub shrinkage: f64,
}

impl SamplerArgs {
    fn options(&self) -> Result<StrategyOptions> {
        Ok(StrategyOptions {
            regression: self.regression.parse()?,
            knockoff: KnockoffConfig {
                shrinkage: self.shrinkage,
                rule: self.knockoff_rule.parse::<DiagonalRule>()?,
            },
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// nu, tau_prime, tau_ale, kappa_ale (strategy-suffixed names such as
    /// nu_gcmr also select the strategy).
    #[arg(long, value_delimiter = ',', default_value = "nu")]
    pub measures: Vec<String>,
    #[arg(
        long,
        alias = "strategy",
        value_delimiter = ',',
        default_value = "unrestricted"
    )]
    pub strategies: Vec<String>,
    #[arg(short = 'R', long = "replicates", default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_ALE_BINS)]
    pub k: usize,
    #[arg(long, default_value = "quantile")]
    pub grid: String,
    #[arg(long, default_value = "quadratic")]
    pub loss: String,
    #[arg(long, value_enum, default_value_t = NormalizerArg::Observed)]
    pub kappa_normalizer: NormalizerArg,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Also write the density diagnostic for this feature.
    #[arg(long)]
    pub density: Option<String>,
    /// Restricted strategy for the density diagnostic.
    #[arg(long, default_value = "gcmr")]
    pub density_strategy: String,
    #[arg(long, default_value_t = DEFAULT_DENSITY_BINS)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerArg {
    Observed,
    Predicted,
}

impl From<NormalizerArg> for TargetVariance {
    fn from(v: NormalizerArg) -> Self {
        match v {
            NormalizerArg::Observed => TargetVariance::Observed,
            NormalizerArg::Predicted => TargetVariance::Predicted,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k_sweep: Vec<usize>,
    #[arg(long, default_value = "quantile")]
    pub grid: String,
    /// Center curves to a zero weighted mean.
    #[arg(long)]
    pub center: bool,
    #[arg(long, value_enum, default_value_t = NormalizerArg::Observed)]
    pub kappa_normalizer: NormalizerArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub feature: String,
    #[arg(long, default_value = "gcmr")]
    pub strategy: String,
    #[arg(long, default_value_t = DEFAULT_DENSITY_BINS)]
    pub bins: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidRho(_)
        | Error::RhoNotZero(_)
        | Error::Config(_)
        | Error::UnknownExpression(_)
        | Error::InvalidK { .. } => 2,
        Error::NotPositiveDefinite { .. }
        | Error::NotPositiveSemidefinite { .. }
        | Error::ZeroTargetVariance
        | Error::InsufficientRows { .. }
        | Error::DegenerateColumn(_)
        | Error::PredictorFailure { .. } => 4,
        _ => 3,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let job = || match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Importance(a) => cmd_importance(a, cli.threads),
        Command::Ale(a) => cmd_ale(a),
        Command::Density(a) => cmd_density(a),
        Command::Truth(a) => cmd_truth(a),
    };
    match cli.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(job),
        None => job(),
    }
}

#[derive(Serialize)]
struct Meta<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a A,
}

fn meta_json<A: Serialize>(command: &str, args: &A) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
    })?)
}

fn comment_line(meta: &serde_json::Value) -> String {
    format!("# {meta}\n")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn file_name_part(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct TruthFile<'a> {
    meta: serde_json::Value,
    spec: &'a HookerSpec,
    ground_truth: crate::synth::GroundTruth,
}

fn hooker_truth(
    spec: &HookerSpec,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<crate::synth::GroundTruth> {
    if spec.rho == 0.0 {
        analytic_ground_truth_independent(spec)
    } else {
        oracle_ground_truth(spec, outer, inner, seed)
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = a.hooker.spec();
    spec.validate()?;
    let meta = meta_json("generate", a)?;
    let ds = sample_hooker(&spec, a.seed.seed)?;
    let oracle_seed = SeedPolicy::new(a.seed.seed).child_seed(Purpose::Oracle, ALL_FEATURES, 0);
    let truth = hooker_truth(&spec, a.oracle_outer, a.oracle_inner, oracle_seed)?;

    let mut csv = comment_line(&meta).into_bytes();
    ds.write_csv(&mut csv)?;
    write_bytes(&a.out.join("data.csv"), &csv)?;
    write_json(
        &a.out.join("truth.json"),
        &TruthFile {
            meta,
            spec: &spec,
            ground_truth: truth,
        },
    )
}

fn cmd_truth(a: &TruthArgs) -> Result<()> {
    let spec = a.hooker.spec();
    spec.validate()?;
    let meta = meta_json("truth", a)?;
    let truth = hooker_truth(&spec, a.outer, a.inner, a.seed.seed)?;
    write_json(
        &a.out.join("truth.json"),
        &TruthFile {
            meta,
            spec: &spec,
            ground_truth: truth,
        },
    )
}

/// Parses `hooker:rho=0.9,n=2000,noise=0.1,seed=7`.
fn synthetic_input(desc: &str) -> Result<Option<Dataset>> {
    let Some(rest) =
        desc.strip_prefix("hooker:")
            .or(if desc == "hooker" { Some("") } else { None })
    else {
        return Ok(None);
    };
    let mut spec = HookerSpec::default();
    let mut seed = 0u64;
    let bad = |s: &str| Error::Config(format!("bad synthetic spec `{s}`"));
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(kv))?;
        match k {
            "rho" => spec.rho = v.parse().map_err(|_| bad(kv))?,
            "n" => spec.n = v.parse().map_err(|_| bad(kv))?,
            "noise" => spec.noise_sd = v.parse().map_err(|_| bad(kv))?,
            "seed" => seed = v.parse().map_err(|_| bad(kv))?,
            _ => return Err(bad(kv)),
        }
    }
    sample_hooker(&spec, seed).map(Some)
}

fn load_input(a: &InputArgs) -> Result<Dataset> {
    if let Some(ds) = synthetic_input(&a.data)? {
        return Ok(ds);
    }
    let policy = match a.missing {
        MissingArg::Reject => MissingPolicy::Reject,
        MissingArg::Drop => MissingPolicy::DropRow,
    };
    Dataset::load_csv(&a.data, &a.target, policy)
}

enum ModelSpec {
    Exact(String),
    Ols { interactions: bool },
    Knn(usize),
    Predictions(PathBuf),
}

fn parse_model(spec: &str) -> Result<ModelSpec> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match (kind, arg) {
        ("exact", id) if !id.is_empty() => Ok(ModelSpec::Exact(id.to_owned())),
        ("ols", "") => Ok(ModelSpec::Ols {
            interactions: false,
        }),
        ("ols", "interactions") => Ok(ModelSpec::Ols { interactions: true }),
        ("knn", k) => k
            .parse()
            .map(ModelSpec::Knn)
            .map_err(|_| Error::Config(format!("bad k in model spec `{spec}`"))),
        ("predictions", p) if !p.is_empty() => Ok(ModelSpec::Predictions(PathBuf::from(p))),
        _ => Err(Error::Config(format!("unknown model spec `{spec}`"))),
    }
}

fn fit_builtin(
    spec: &ModelSpec,
    ds: &Dataset,
    a: &InputArgs,
) -> Result<(Box<dyn Predictor>, Option<FitReport>)> {
    let split = if a.test_fraction > 0.0 {
        let seed = SeedPolicy::new(a.seed.seed).child_seed(Purpose::Split, ALL_FEATURES, 0);
        Some(ds.split(a.test_fraction, seed)?)
    } else {
        None
    };
    let (train, test) = match &split {
        Some((tr, te)) => (tr, Some(te)),
        None => (ds, None),
    };
    Ok(match spec {
        ModelSpec::Exact(id) => (Box::new(exact_function_predictor(id)?), None),
        ModelSpec::Ols { interactions } => {
            let (m, r) = fit_ols(train, *interactions, test)?;
            (Box::new(m), Some(r))
        }
        ModelSpec::Knn(k) => {
            let (m, r) = fit_knn(train, *k, test)?;
            (Box::new(m), Some(r))
        }
        ModelSpec::Predictions(_) => unreachable!("handled by the external protocol"),
    })
}

/// Output files of a command, written only after the run succeeds.
type Outputs = Vec<(PathBuf, Vec<u8>)>;

fn queries_csv(
    names: &[String],
    queries: &[Vec<f64>],
    meta: &serde_json::Value,
) -> Result<Vec<u8>> {
    let mut buf = comment_line(meta).into_bytes();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(names)?;
        for q in queries {
            wtr.write_record(q.iter().map(|v| v.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io(QUERIES_FILE, e))?;
    }
    Ok(buf)
}

/// Reads a `prediction` column; a `# queries_sha256=<hex>` line, when
/// present, must match the query file.
fn read_predictions(path: &Path) -> Result<(Vec<f64>, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let declared = text.lines().find_map(|l| {
        l.trim()
            .strip_prefix('#')
            .and_then(|r| r.trim().strip_prefix("queries_sha256="))
            .map(|h| h.trim().to_owned())
    });
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "prediction")
        .ok_or_else(|| Error::Protocol(format!("{}: no `prediction` column", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(col).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            line: i + 2,
            column: "prediction".into(),
            value: raw.into(),
        })?;
        if !v.is_finite() {
            return Err(Error::Protocol(format!(
                "non-finite prediction on data row {}",
                i + 1
            )));
        }
        out.push(v);
    }
    Ok((out, declared))
}

/// Runs `body` with the requested model. External predictions use two
/// phases: the first writes `queries.csv`, the second answers from the
/// predictions file.
fn with_model<F>(a: &InputArgs, ds: &Dataset, meta: &serde_json::Value, body: F) -> Result<()>
where
    F: Fn(&dyn Predictor, Option<FitReport>) -> Result<Outputs>,
{
    let spec = parse_model(&a.model)?;
    let outputs = match &spec {
        ModelSpec::Predictions(path) => {
            let recorder = RecordingPredictor::new(ds.n_features());
            body(&recorder, None)?;
            let queries = recorder.queries();
            let qbytes = queries_csv(ds.column_names(), &queries, meta)?;
            let qpath = a.out.join(QUERIES_FILE);
            if !path.exists() {
                write_bytes(&qpath, &qbytes)?;
                eprintln!(
                    "wrote {} ({} rows, sha256 {}); supply predictions at {} and rerun",
                    qpath.display(),
                    queries.len(),
                    sha256_hex(&qbytes),
                    path.display()
                );
                return Ok(());
            }
            let on_disk = fs::read(&qpath).map_err(|e| Error::io(&qpath, e))?;
            let expected = sha256_hex(&qbytes);
            if sha256_hex(&on_disk) != expected {
                return Err(Error::Protocol(format!(
                    "{} does not match the queries of this run",
                    qpath.display()
                )));
            }
            let (preds, declared) = read_predictions(path)?;
            if let Some(h) = declared {
                if !h.eq_ignore_ascii_case(&expected) {
                    return Err(Error::Protocol(format!(
                        "predictions were made for query file {h}, expected {expected}"
                    )));
                }
            }
            if preds.len() != queries.len() {
                return Err(Error::Protocol(format!(
                    "{} predictions for {} query rows",
                    preds.len(),
                    queries.len()
                )));
            }
            let table = TablePredictor::new(&queries, &preds)?;
            body(&table, None)?
        }
        _ => {
            let (model, fit) = fit_builtin(&spec, ds, a)?;
            body(model.as_ref(), fit)?
        }
    };
    for (path, bytes) in outputs {
        write_bytes(&path, &bytes)?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.trim().parse()).collect()
}

fn importance_config(a: &ImportanceArgs, threads: Option<usize>) -> Result<ImportanceConfig> {
    let mut measures: Vec<Measure> = Vec::new();
    let mut strategies: Vec<Strategy> = parse_list(&a.strategies)?;
    for name in &a.measures {
        let m: Measure = name.trim().parse()?;
        if !measures.contains(&m) {
            measures.push(m);
        }
        if let Some((_, suffix)) = name.trim().rsplit_once('_') {
            if let Ok(s) = suffix.parse::<Strategy>() {
                if !strategies.contains(&s) {
                    strategies.push(s);
                }
            }
        }
    }
    measures.sort();
    strategies.sort();
    strategies.dedup();
    Ok(ImportanceConfig {
        measures,
        strategies,
        replicates: a.replicates,
        ale_bins: a.k,
        grid: a.grid.parse::<GridKind>()?,
        loss: a.loss.parse::<LossFn>()?,
        options: a.sampler.options()?,
        target_variance: a.kappa_normalizer.into(),
        master_seed: a.input.seed.seed,
        threads,
    })
}

fn resolve_feature(ds: &Dataset, name: &str) -> Result<usize> {
    ds.column_index(name)
        .or_else(|| name.parse::<usize>().ok().filter(|&j| j < ds.n_features()))
        .ok_or_else(|| Error::Config(format!("unknown feature `{name}`")))
}

#[allow(clippy::too_many_arguments)]
fn density_bytes(
    model: &dyn Predictor,
    ds: &Dataset,
    j: usize,
    strategy: Strategy,
    seed: u64,
    bins: usize,
    options: &StrategyOptions,
    meta: &serde_json::Value,
) -> Result<Vec<u8>> {
    let diag = density_diagnostic(
        model,
        ds,
        j,
        strategy,
        &SeedPolicy::new(seed),
        bins,
        options,
    )?;
    let mut m = meta.clone();
    m["tail_mass_unrestricted"] = diag.tail_mass_unrestricted.into();
    m["tail_mass_restricted"] = diag.tail_mass_restricted.into();
    let mut buf = Vec::new();
    diag.write_csv(&mut buf, Some(&m.to_string()))?;
    Ok(buf)
}

fn cmd_importance(a: &ImportanceArgs, threads: Option<usize>) -> Result<()> {
    let config = importance_config(a, threads)?;
    config.validate()?;
    let ds = load_input(&a.input)?;
    let meta = meta_json("importance", a)?;
    let density = match &a.density {
        Some(name) => Some((
            resolve_feature(&ds, name)?,
            a.density_strategy.parse::<Strategy>()?,
        )),
        None => None,
    };
    with_model(&a.input, &ds, &meta, |model, fit| {
        let mut report = run_all(model, &ds, &config)?;
        report.meta.extra.insert("run".into(), meta.clone());
        if let Some(f) = fit {
            report
                .meta
                .extra
                .insert("fit".into(), serde_json::to_value(f)?);
        }
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        let mut out = vec![
            (
                a.input.out.join("report.json"),
                report.to_json()?.into_bytes(),
            ),
            (a.input.out.join("report.csv"), csv),
        ];
        if let Some((j, strategy)) = density {
            let bytes = density_bytes(
                model,
                &ds,
                j,
                strategy,
                config.master_seed,
                a.bins,
                &config.options,
                &meta,
            )?;
            let name = format!("density_{}.csv", file_name_part(&ds.column_names()[j]));
            out.push((a.input.out.join(name), bytes));
        }
        Ok(out)
    })
}

fn cmd_density(a: &DensityArgs) -> Result<()> {
    let ds = load_input(&a.input)?;
    let meta = meta_json("density", a)?;
    let j = resolve_feature(&ds, &a.feature)?;
    let strategy: Strategy = a.strategy.parse()?;
    let options = a.sampler.options()?;
    with_model(&a.input, &ds, &meta, |model, _| {
        let bytes = density_bytes(
            model,
            &ds,
            j,
            strategy,
            a.input.seed.seed,
            a.bins,
            &options,
            &meta,
        )?;
        let name = format!("density_{}.csv", file_name_part(&ds.column_names()[j]));
        Ok(vec![(a.input.out.join(name), bytes)])
    })
}

#[derive(Serialize)]
struct AleSummaryRow<'a> {
    feature: &'a str,
    k: usize,
    n_bins: usize,
    tau_ale: f64,
    kappa_ale: Option<f64>,
    merged_bins: bool,
    discrete: bool,
}

fn cmd_ale(a: &AleArgs) -> Result<()> {
    if a.k_sweep.is_empty() || a.k_sweep.contains(&0) {
        return Err(Error::Config("--k-sweep needs positive grid sizes".into()));
    }
    let grid_kind: GridKind = a.grid.parse()?;
    let ds = load_input(&a.input)?;
    let meta = meta_json("ale", a)?;
    with_model(&a.input, &ds, &meta, |model, _| {
        let sigma_y2 = ale::target_variance(model, &ds, a.kappa_normalizer.into())?;
        let mut out = Vec::new();
        let mut summary = comment_line(&meta).into_bytes();
        {
            let mut wtr = csv::Writer::from_writer(&mut summary);
            for &k in &a.k_sweep {
                for j in 0..ds.n_features() {
                    let name = &ds.column_names()[j];
                    let grid = match ale::build_grid(&ds, j, k, grid_kind) {
                        Ok(g) => g,
                        Err(Error::DegenerateColumn(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    let effects = ale::local_effects(model, &ds, &grid)?;
                    let curve = ale::ale_curve(&effects, a.center);
                    let mut buf = comment_line(&meta).into_bytes();
                    curve.write_csv(&mut buf)?;
                    out.push((
                        a.input
                            .out
                            .join(format!("ale_{}_k{k}.csv", file_name_part(name))),
                        buf,
                    ));
                    let kappa = effects.kappa(ds.feature_variance(j), sigma_y2).ok();
                    wtr.serialize(AleSummaryRow {
                        feature: name,
                        k,
                        n_bins: grid.n_bins(),
                        tau_ale: effects.tau(),
                        kappa_ale: kappa,
                        merged_bins: grid.merged,
                        discrete: grid.discrete,
                    })?;
                }
            }
            wtr.flush().map_err(|e| Error::io("ale_summary.csv", e))?;
        }
        out.push((a.input.out.join("ale_summary.csv"), summary));
        Ok(out)
    })
}

pub fn main_exit() -> ! {
    let code = run(std::env::args_os());
    let _ = std::io::stdout().flush();
    std::process::exit(code)
}
