//! Importance estimators: permutation loss increase, Jansen-form total
//! indices under free or restricted resampling, ALE indices, replication
//! and the prediction-density extrapolation diagnostic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ale::{self, GridKind, TargetVariance};
use crate::dataset::{variance, Dataset};
use crate::error::{Error, Result};
use crate::gcmr::{GcmrSampler, RegressionKind};
use crate::gknock::{GknockSampler, KnockoffConfig};
use crate::models::Predictor;
use crate::seed::{rng_from, Purpose, SeedPolicy, ALL_FEATURES};

pub const DEFAULT_REPLICATES: usize = 50;
pub const DEFAULT_ALE_BINS: usize = 10;
pub const DEFAULT_DENSITY_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFn {
    #[default]
    Quadratic,
    Absolute,
}

impl LossFn {
    pub fn evaluate(self, y: f64, y_hat: f64) -> f64 {
        match self {
            LossFn::Quadratic => (y - y_hat) * (y - y_hat),
            LossFn::Absolute => (y - y_hat).abs(),
        }
    }
}

impl FromStr for LossFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(LossFn::Quadratic),
            "absolute" => Ok(LossFn::Absolute),
            _ => Err(Error::Config(format!("unknown loss `{s}`"))),
        }
    }
}

/// How the replacement column for a feature is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform random permutation of the column.
    Unrestricted,
    /// Residual permutation in normal-score space.
    Gcmr,
    /// Gaussian knockoff in normal-score space.
    Gknock,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Unrestricted, Strategy::Gcmr, Strategy::Gknock];

    fn purpose(self) -> Purpose {
        match self {
            Strategy::Unrestricted => Purpose::Unrestricted,
            Strategy::Gcmr => Purpose::Gcmr,
            Strategy::Gknock => Purpose::Gknock,
        }
    }

    /// Child seed for one feature and replicate. Knockoffs are drawn
    /// jointly, so their stream ignores the feature.
    pub fn seed(self, policy: &SeedPolicy, feature: usize, replicate: usize) -> u64 {
        let feature = match self {
            Strategy::Gknock => ALL_FEATURES,
            _ => feature as u64,
        };
        policy.child_seed(self.purpose(), feature, replicate as u64)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Unrestricted => "unrestricted",
            Strategy::Gcmr => "gcmr",
            Strategy::Gknock => "gknock",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unrestricted" => Ok(Strategy::Unrestricted),
            "gcmr" => Ok(Strategy::Gcmr),
            "gknock" => Ok(Strategy::Gknock),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// Measure families requested from [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Loss increase, one entry per strategy.
    Nu,
    /// Jansen total index, one entry per strategy.
    Tau,
    TauAle,
    KappaAle,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nu" | "nu_gcmr" | "nu_gknock" => Ok(Measure::Nu),
            "tau" | "tau_prime" | "tau_gcmr" | "tau_gknock" => Ok(Measure::Tau),
            "tau_ale" => Ok(Measure::TauAle),
            "kappa_ale" => Ok(Measure::KappaAle),
            _ => Err(Error::Config(format!("unknown measure `{s}`"))),
        }
    }
}

/// Report key for a measure under a strategy.
pub fn measure_key(measure: Measure, strategy: Strategy) -> &'static str {
    match (measure, strategy) {
        (Measure::Nu, Strategy::Unrestricted) => "nu",
        (Measure::Nu, Strategy::Gcmr) => "nu_gcmr",
        (Measure::Nu, Strategy::Gknock) => "nu_gknock",
        (Measure::Tau, Strategy::Unrestricted) => "tau_prime",
        (Measure::Tau, Strategy::Gcmr) => "tau_gcmr",
        (Measure::Tau, Strategy::Gknock) => "tau_gknock",
        (Measure::TauAle, _) => "tau_ale",
        (Measure::KappaAle, _) => "kappa_ale",
    }
}

/// Options of the restricted strategies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyOptions {
    pub regression: RegressionKind,
    pub knockoff: KnockoffConfig,
}

/// Fitted samplers and baseline predictions shared across replicates.
pub struct Permuter<'a> {
    model: &'a dyn Predictor,
    ds: &'a Dataset,
    rows: Vec<f64>,
    baseline: Vec<f64>,
    gcmr: Option<GcmrSampler>,
    gknock: Option<GknockSampler>,
}

impl<'a> Permuter<'a> {
    pub fn new(
        model: &'a dyn Predictor,
        ds: &'a Dataset,
        strategies: &[Strategy],
        options: &StrategyOptions,
    ) -> Result<Self> {
        if model.n_features() != ds.n_features() {
            return Err(Error::DimensionMismatch {
                expected: model.n_features(),
                actual: ds.n_features(),
            });
        }
        let rows = ds.rows_flat();
        let baseline = model.predict_rows(&rows)?;
        let gcmr = if strategies.contains(&Strategy::Gcmr) {
            Some(GcmrSampler::fit(ds, options.regression)?)
        } else {
            None
        };
        let gknock = if strategies.contains(&Strategy::Gknock) {
            Some(GknockSampler::fit(ds, &options.knockoff)?)
        } else {
            None
        };
        Ok(Self {
            model,
            ds,
            rows,
            baseline,
            gcmr,
            gknock,
        })
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn gcmr(&self) -> Option<&GcmrSampler> {
        self.gcmr.as_ref()
    }

    pub fn gknock(&self) -> Option<&GknockSampler> {
        self.gknock.as_ref()
    }

    fn is_degenerate(&self, j: usize) -> bool {
        let c = self.ds.column(j);
        c.iter().all(|&v| v == c[0])
    }

    /// Replacement column for feature `j`. For knockoffs, `knockoffs` may
    /// carry a pre-drawn joint copy for this seed.
    pub fn column(
        &self,
        strategy: Strategy,
        j: usize,
        seed: u64,
        knockoffs: Option<&[Option<Vec<f64>>]>,
    ) -> Result<Vec<f64>> {
        self.ds.check_feature(j)?;
        if self.is_degenerate(j) {
            return Err(Error::DegenerateColumn(j));
        }
        match strategy {
            Strategy::Unrestricted => {
                let mut col = self.ds.column(j).to_vec();
                col.shuffle(&mut rng_from(seed));
                Ok(col)
            }
            Strategy::Gcmr => self
                .gcmr
                .as_ref()
                .ok_or_else(|| Error::Config("GCMR sampler not fitted".into()))?
                .permute(j, seed),
            Strategy::Gknock => {
                let drawn;
                let cols = match knockoffs {
                    Some(k) => k,
                    None => {
                        drawn = self.knockoffs(seed)?;
                        &drawn
                    }
                };
                cols.get(j)
                    .cloned()
                    .flatten()
                    .ok_or(Error::DegenerateColumn(j))
            }
        }
    }

    pub fn knockoffs(&self, seed: u64) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(self
            .gknock
            .as_ref()
            .ok_or_else(|| Error::Config("knockoff sampler not fitted".into()))?
            .knockoff_columns(seed))
    }

    /// Predictions with column `j` replaced.
    pub fn predict_with(&self, j: usize, column: &[f64]) -> Result<Vec<f64>> {
        let d = self.ds.n_features();
        let mut rows = self.rows.clone();
        for (n, &v) in column.iter().enumerate() {
            rows[n * d + j] = v;
        }
        self.model.predict_rows(&rows)
    }

    /// Loss increase and Jansen form from one replacement column.
    pub fn scores(&self, j: usize, column: &[f64], loss: LossFn) -> Result<PairedScores> {
        let permuted = self.predict_with(j, column)?;
        Ok(paired_scores(
            self.ds.target(),
            &self.baseline,
            &permuted,
            loss,
        ))
    }
}

/// `nu` and `tau` computed on the same replacement column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedScores {
    pub nu: f64,
    pub tau: f64,
}

fn paired_scores(y: &[f64], baseline: &[f64], permuted: &[f64], loss: LossFn) -> PairedScores {
    let n = y.len() as f64;
    let mut loss_perm = 0.0;
    let mut loss_base = 0.0;
    let mut sq = 0.0;
    for ((&yn, &b), &p) in y.iter().zip(baseline).zip(permuted) {
        loss_perm += loss.evaluate(yn, p);
        loss_base += loss.evaluate(yn, b);
        sq += (p - b) * (p - b);
    }
    PairedScores {
        nu: loss_perm / n - loss_base / n,
        tau: sq / (2.0 * n),
    }
}

/// Loss increase when feature `j` is replaced under `strategy`.
pub fn nu_hat(
    model: &dyn Predictor,
    ds: &Dataset,
    j: usize,
    strategy: Strategy,
    loss: LossFn,
    seed: u64,
    options: &StrategyOptions,
) -> Result<f64> {
    paired(model, ds, j, strategy, loss, seed, options).map(|s| s.nu)
}

/// Jansen form `(1/2N) Σ (g(x'_j, x_-j) - g(x))²` under a free permutation.
pub fn jansen_tau_prime(model: &dyn Predictor, ds: &Dataset, j: usize, seed: u64) -> Result<f64> {
    paired(
        model,
        ds,
        j,
        Strategy::Unrestricted,
        LossFn::Quadratic,
        seed,
        &StrategyOptions::default(),
    )
    .map(|s| s.tau)
}

/// Jansen form under a restricted strategy.
pub fn conditional_tau(
    model: &dyn Predictor,
    ds: &Dataset,
    j: usize,
    strategy: Strategy,
    seed: u64,
    options: &StrategyOptions,
) -> Result<f64> {
    paired(model, ds, j, strategy, LossFn::Quadratic, seed, options).map(|s| s.tau)
}

fn paired(
    model: &dyn Predictor,
    ds: &Dataset,
    j: usize,
    strategy: Strategy,
    loss: LossFn,
    seed: u64,
    options: &StrategyOptions,
) -> Result<PairedScores> {
    ds.check_feature(j)?;
    let permuter = Permuter::new(model, ds, &[strategy], options)?;
    match permuter.column(strategy, j, seed, None) {
        Ok(col) => permuter.scores(j, &col, loss),
        Err(Error::DegenerateColumn(_)) => Ok(PairedScores { nu: 0.0, tau: 0.0 }),
        Err(e) => Err(e),
    }
}

/// Everything [`run_all`] needs besides the model and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub measures: Vec<Measure>,
    pub strategies: Vec<Strategy>,
    pub replicates: usize,
    pub ale_bins: usize,
    pub grid: GridKind,
    pub loss: LossFn,
    pub options: StrategyOptions,
    pub target_variance: TargetVariance,
    pub master_seed: u64,
    /// Worker cap; `None` uses every core. Never changes results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            measures: vec![Measure::Nu],
            strategies: vec![Strategy::Unrestricted],
            replicates: DEFAULT_REPLICATES,
            ale_bins: DEFAULT_ALE_BINS,
            grid: GridKind::Quantile,
            loss: LossFn::Quadratic,
            options: StrategyOptions::default(),
            target_variance: TargetVariance::Observed,
            master_seed: 0,
            threads: None,
        }
    }
}

impl ImportanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::Config("no measures requested".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicate count must be at least 1".into()));
        }
        if self.ale_bins == 0 {
            return Err(Error::Config("ALE grid needs K >= 1".into()));
        }
        if self.permutation_measures().next().is_some() && self.strategies.is_empty() {
            return Err(Error::Config("no strategies requested".into()));
        }
        Ok(())
    }

    fn permutation_measures(&self) -> impl Iterator<Item = Measure> + '_ {
        self.measures
            .iter()
            .copied()
            .filter(|m| matches!(m, Measure::Nu | Measure::Tau))
    }

    fn wants(&self, m: Measure) -> bool {
        self.measures.contains(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureStats {
    pub mean: f64,
    /// Sample standard deviation over replicates (0 when `n == 1`).
    pub sd: f64,
    pub n: usize,
}

impl MeasureStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        Self {
            mean,
            sd: variance(values).sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub name: String,
    pub measures: BTreeMap<String, MeasureStats>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub model: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub target: String,
    pub config: ImportanceConfig,
    /// Caller-supplied context (command line, input paths).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub meta: ReportMeta,
    pub features: Vec<FeatureReport>,
}

impl ImportanceReport {
    pub fn mean(&self, feature: usize, key: &str) -> Option<f64> {
        self.features
            .get(feature)?
            .measures
            .get(key)
            .map(|s| s.mean)
    }

    pub fn means(&self, key: &str) -> Vec<Option<f64>> {
        (0..self.features.len())
            .map(|j| self.mean(j, key))
            .collect()
    }

    /// Rank per feature (1 = largest mean) for `key`; ties keep feature
    /// order. Features without the measure rank last.
    pub fn ranking(&self, key: &str) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        let value = |j: usize| self.mean(j, key).unwrap_or(f64::NEG_INFINITY);
        order.sort_by(|&a, &b| value(b).total_cmp(&value(a)).then(a.cmp(&b)));
        let mut ranks = vec![0; order.len()];
        for (pos, &j) in order.iter().enumerate() {
            ranks[j] = pos + 1;
        }
        ranks
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per feature and measure, preceded by a `#` line holding the
    /// metadata as JSON.
    pub fn write_csv<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# {}", serde_json::to_string(&self.meta)?)
            .map_err(|e| Error::io("<csv writer>", e))?;
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["feature", "measure", "mean", "sd", "n", "flags"])?;
        for f in &self.features {
            for (key, s) in &f.measures {
                wtr.write_record([
                    f.name.clone(),
                    key.clone(),
                    s.mean.to_string(),
                    s.sd.to_string(),
                    s.n.to_string(),
                    f.flags.join(";"),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Per-task output: values keyed by report key, plus flags.
#[derive(Default)]
struct TaskResult {
    values: Vec<(&'static str, f64)>,
    flags: Vec<String>,
}

fn run_task(
    permuter: &Permuter<'_>,
    config: &ImportanceConfig,
    policy: &SeedPolicy,
    knockoffs: Option<&[Option<Vec<f64>>]>,
    j: usize,
    r: usize,
) -> TaskResult {
    let mut out = TaskResult::default();
    for &strategy in &config.strategies {
        let seed = strategy.seed(policy, j, r);
        let scores = permuter
            .column(strategy, j, seed, knockoffs)
            .and_then(|col| permuter.scores(j, &col, config.loss));
        let scores = match scores {
            Ok(s) => s,
            Err(Error::DegenerateColumn(_)) => {
                out.flags.push("degenerate".into());
                PairedScores { nu: 0.0, tau: 0.0 }
            }
            Err(e) => {
                out.flags.push(format!("error:{strategy}:{e}"));
                continue;
            }
        };
        for m in config.permutation_measures() {
            let v = if m == Measure::Nu {
                scores.nu
            } else {
                scores.tau
            };
            out.values.push((measure_key(m, strategy), v));
        }
    }
    out
}

fn ale_task(
    model: &dyn Predictor,
    ds: &Dataset,
    config: &ImportanceConfig,
    j: usize,
) -> TaskResult {
    let mut out = TaskResult::default();
    let grid = match ale::build_grid(ds, j, config.ale_bins, config.grid) {
        Ok(g) => g,
        Err(Error::DegenerateColumn(_)) => {
            out.flags.push("degenerate".into());
            for m in [Measure::TauAle, Measure::KappaAle] {
                if config.wants(m) {
                    out.values
                        .push((measure_key(m, Strategy::Unrestricted), 0.0));
                }
            }
            return out;
        }
        Err(e) => {
            out.flags.push(format!("error:ale:{e}"));
            return out;
        }
    };
    if grid.merged {
        out.flags.push("merged_bins".into());
    }
    if grid.discrete {
        out.flags.push("discrete_grid".into());
    }
    let effects = match ale::local_effects(model, ds, &grid) {
        Ok(e) => e,
        Err(e) => {
            out.flags.push(format!("error:ale:{e}"));
            return out;
        }
    };
    if config.wants(Measure::TauAle) {
        out.values.push(("tau_ale", effects.tau()));
    }
    if config.wants(Measure::KappaAle) {
        let kappa = ale::target_variance(model, ds, config.target_variance)
            .and_then(|v| effects.kappa(ds.feature_variance(j), v));
        match kappa {
            Ok(k) => out.values.push(("kappa_ale", k)),
            Err(e) => out.flags.push(format!("error:kappa_ale:{e}")),
        }
    }
    out
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Runs every requested measure for every feature over `R` replicates.
///
/// Per-feature failures become flags; only setup failures (model/data
/// mismatch, sampler fitting) abort the run.
pub fn run_all(
    model: &dyn Predictor,
    ds: &Dataset,
    config: &ImportanceConfig,
) -> Result<ImportanceReport> {
    config.validate()?;
    let d = ds.n_features();
    let policy = SeedPolicy::new(config.master_seed);
    let strategies: Vec<Strategy> = if config.permutation_measures().next().is_some() {
        config.strategies.clone()
    } else {
        Vec::new()
    };
    let permuter = Permuter::new(model, ds, &strategies, &config.options)?;
    let parallel = model.concurrent_safe() && config.threads != Some(1);
    let reps = config.replicates;

    let results: Vec<TaskResult> = with_pool(config.threads, || {
        let knockoffs: Vec<Vec<Option<Vec<f64>>>> = if strategies.contains(&Strategy::Gknock) {
            let draw = |r: usize| {
                permuter
                    .knockoffs(Strategy::Gknock.seed(&policy, 0, r))
                    .expect("sampler fitted")
            };
            if parallel {
                (0..reps).into_par_iter().map(draw).collect()
            } else {
                (0..reps).map(draw).collect()
            }
        } else {
            Vec::new()
        };
        let task = |t: usize| {
            let (r, j) = (t / d, t % d);
            let k = knockoffs.get(r).map(Vec::as_slice);
            run_task(&permuter, config, &policy, k, j, r)
        };
        let n_tasks = if strategies.is_empty() { 0 } else { reps * d };
        if parallel {
            (0..n_tasks).into_par_iter().map(task).collect()
        } else {
            (0..n_tasks).map(task).collect()
        }
    });
    let ale_results: Vec<TaskResult> =
        if config.wants(Measure::TauAle) || config.wants(Measure::KappaAle) {
            (0..d).map(|j| ale_task(model, ds, config, j)).collect()
        } else {
            Vec::new()
        };

    let mut features = Vec::with_capacity(d);
    for j in 0..d {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut flags: Vec<String> = Vec::new();
        let per_feature = (0..reps)
            .filter_map(|r| results.get(r * d + j))
            .chain(ale_results.get(j));
        for res in per_feature {
            for (key, v) in &res.values {
                values.entry((*key).to_owned()).or_default().push(*v);
            }
            for f in &res.flags {
                if !flags.contains(f) {
                    flags.push(f.clone());
                }
            }
        }
        if let Some(g) = permuter.gcmr() {
            if g.model(j).map(|m| m.collinear).unwrap_or(false) {
                flags.push("collinear".into());
            }
        }
        let measures = values
            .into_iter()
            .map(|(k, v)| (k, MeasureStats::from_values(&v)))
            .collect();
        features.push(FeatureReport {
            name: ds.column_names()[j].clone(),
            measures,
            flags,
        });
    }

    Ok(ImportanceReport {
        meta: ReportMeta {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            model: model.name().to_owned(),
            n_rows: ds.n_rows(),
            n_features: d,
            target: ds.target_name().to_owned(),
            config: config.clone(),
            extra: BTreeMap::new(),
        },
        features,
    })
}

/// Prediction histograms on the original data and after unrestricted and
/// restricted replacement of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostic {
    pub feature: usize,
    pub strategy: Strategy,
    pub edges: Vec<f64>,
    pub original: Vec<f64>,
    pub unrestricted: Vec<f64>,
    pub restricted: Vec<f64>,
    /// Fraction of unrestricted predictions outside the original range.
    pub tail_mass_unrestricted: f64,
    /// Fraction of restricted predictions outside the original range.
    pub tail_mass_restricted: f64,
}

impl DensityDiagnostic {
    /// CSV `bin_left,bin_right,orig,unrestricted,restricted`, preceded by
    /// an optional `#` metadata line.
    pub fn write_csv<W: std::io::Write>(&self, mut writer: W, meta: Option<&str>) -> Result<()> {
        if let Some(m) = meta {
            writeln!(writer, "# {m}").map_err(|e| Error::io("<csv writer>", e))?;
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "bin_left",
            "bin_right",
            "orig",
            "unrestricted",
            "restricted",
        ])?;
        for k in 0..self.original.len() {
            wtr.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.original[k].to_string(),
                self.unrestricted[k].to_string(),
                self.restricted[k].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

pub fn density_diagnostic(
    model: &dyn Predictor,
    ds: &Dataset,
    j: usize,
    strategy: Strategy,
    policy: &SeedPolicy,
    bins: usize,
    options: &StrategyOptions,
) -> Result<DensityDiagnostic> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    ds.check_feature(j)?;
    let permuter = Permuter::new(model, ds, &[Strategy::Unrestricted, strategy], options)?;
    let original = permuter.baseline().to_vec();
    let free_col = permuter.column(
        Strategy::Unrestricted,
        j,
        Strategy::Unrestricted.seed(policy, j, 0),
        None,
    );
    let restricted_col = permuter.column(strategy, j, strategy.seed(policy, j, 0), None);
    let (free, restricted) = match (free_col, restricted_col) {
        (Ok(a), Ok(b)) => (permuter.predict_with(j, &a)?, permuter.predict_with(j, &b)?),
        (Err(Error::DegenerateColumn(_)), _) | (_, Err(Error::DegenerateColumn(_))) => {
            (original.clone(), original.clone())
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };

    let all = original.iter().chain(&free).chain(&restricted);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();

    let (omin, omax) = original
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let tail =
        |v: &[f64]| v.iter().filter(|&&p| p < omin || p > omax).count() as f64 / v.len() as f64;

    Ok(DensityDiagnostic {
        feature: j,
        strategy,
        tail_mass_unrestricted: tail(&free),
        tail_mass_restricted: tail(&restricted),
        original: histogram(&original, lo, width, bins),
        unrestricted: histogram(&free, lo, width, bins),
        restricted: histogram(&restricted, lo, width, bins),
        edges,
    })
}
