//! Hooker benchmark: Gaussian-copula sampling and ground-truth total
//! indices, analytic (independent case) or by double-loop Monte Carlo.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::HOOKER_COEFFICIENTS;
use crate::normal;
use crate::seed::{Purpose, SeedPolicy, ALL_FEATURES};

pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const DEFAULT_N: usize = 2000;
const ORACLE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookerSpec {
    pub coefficients: Vec<f64>,
    /// Copula correlation between X1 and X2.
    pub rho: f64,
    pub noise_sd: f64,
    pub n: usize,
}

impl Default for HookerSpec {
    fn default() -> Self {
        Self {
            coefficients: HOOKER_COEFFICIENTS.to_vec(),
            rho: 0.0,
            noise_sd: DEFAULT_NOISE_SD,
            n: DEFAULT_N,
        }
    }
}

impl HookerSpec {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(Error::InvalidRho(self.rho));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::Config(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if self.n < 2 {
            return Err(Error::EmptyData { rows: self.n });
        }
        if self.coefficients.len() < 2 || self.coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config(
                "need at least two finite coefficients".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|j| format!("X{j}")).collect()
    }

    /// Noise-free response.
    pub fn g(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// One draw of all features; the first two are copula-linked.
fn draw_row<R: Rng>(spec: &HookerSpec, rng: &mut R, row: &mut [f64]) {
    let z1: f64 = rng.sample(StandardNormal);
    let e: f64 = rng.sample(StandardNormal);
    let z2 = spec.rho * z1 + (1.0 - spec.rho * spec.rho).sqrt() * e;
    row[0] = normal::cdf(z1);
    row[1] = normal::cdf(z2);
    for x in row.iter_mut().skip(2) {
        *x = rng.gen::<f64>();
    }
}

pub fn sample_hooker(spec: &HookerSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dim();
    let mut rng = SeedPolicy::new(seed).rng(Purpose::Synth, ALL_FEATURES, 0);
    let mut cols = vec![Vec::with_capacity(spec.n); d];
    let mut y = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; d];
    for _ in 0..spec.n {
        draw_row(spec, &mut rng, &mut row);
        let eps: f64 = rng.sample(StandardNormal);
        y.push(spec.g(&row) + spec.noise_sd * eps);
        for (c, &v) in cols.iter_mut().zip(&row) {
            c.push(v);
        }
    }
    Dataset::new(cols, spec.feature_names(), y, "y")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Analytic,
    OracleMc {
        outer: usize,
        inner: usize,
        seed: u64,
    },
}

/// True `nu_j = 2 tau_j` per feature for the noise-free response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub features: Vec<String>,
    pub nu: Vec<f64>,
    /// Monte Carlo standard errors; absent for analytic values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl GroundTruth {
    pub fn tau(&self) -> Vec<f64> {
        self.nu.iter().map(|v| v / 2.0).collect()
    }
}

/// `beta_j^2 / 6` per feature; only valid when all inputs are independent.
pub fn analytic_ground_truth_independent(spec: &HookerSpec) -> Result<GroundTruth> {
    spec.validate()?;
    if spec.rho != 0.0 {
        return Err(Error::RhoNotZero(spec.rho));
    }
    Ok(GroundTruth {
        features: spec.feature_names(),
        nu: spec.coefficients.iter().map(|b| b * b / 6.0).collect(),
        std_errors: None,
        provenance: Provenance::Analytic,
    })
}

/// Redraws feature `j` from its exact conditional law given `row`.
fn conditional_redraw<R: Rng>(spec: &HookerSpec, row: &[f64], j: usize, rng: &mut R) -> f64 {
    if j < 2 {
        let partner = normal::quantile(row[1 - j]);
        let e: f64 = rng.sample(StandardNormal);
        normal::cdf(spec.rho * partner + (1.0 - spec.rho * spec.rho).sqrt() * e)
    } else {
        rng.gen::<f64>()
    }
}

/// Maps independent uniforms to one feature row; `u[1]` drives the copula
/// partner of X1.
fn row_from_uniforms(spec: &HookerSpec, u: &[f64], row: &mut [f64]) {
    let z1 = normal::quantile(u[0]);
    let e = normal::quantile(u[1]);
    row[0] = u[0];
    row[1] = normal::cdf(spec.rho * z1 + (1.0 - spec.rho * spec.rho).sqrt() * e);
    row[2..].copy_from_slice(&u[2..]);
}

/// Latin hypercube of `n` points in `[0, 1)^d`, row-major.
fn latin_hypercube<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    let mut strata: Vec<usize> = (0..n).collect();
    for k in 0..d {
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            out[i * d + k] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    out
}

/// Double-loop Monte Carlo of `E[(g(x'_j, x_-j) - g(x))^2]` with `x'_j`
/// drawn from its conditional distribution. Outer draws are Latin
/// hypercube stratified; `std_errors` use the iid formula and are
/// conservative.
pub fn oracle_ground_truth(
    spec: &HookerSpec,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<GroundTruth> {
    spec.validate()?;
    if outer < 100 || inner < 100 {
        return Err(Error::Config(format!(
            "oracle needs outer, inner >= 100 (got {outer}, {inner})"
        )));
    }
    let d = spec.dim();
    let policy = SeedPolicy::new(seed);
    let design = latin_hypercube(outer, d, &mut policy.rng(Purpose::Oracle, ALL_FEATURES, 0));
    let n_chunks = outer.div_ceil(ORACLE_CHUNK);
    // Per outer draw: inner-mean of squared differences, per feature.
    let chunks: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = policy.rng(Purpose::Oracle, ALL_FEATURES, c as u64 + 1);
            let rows = c * ORACLE_CHUNK..(outer.min((c + 1) * ORACLE_CHUNK));
            let mut row = vec![0.0; d];
            let mut out = Vec::with_capacity(rows.len());
            for i in rows {
                row_from_uniforms(spec, &design[i * d..(i + 1) * d], &mut row);
                let base = spec.g(&row);
                let mut means = vec![0.0; d];
                for (j, m) in means.iter_mut().enumerate() {
                    let xj = row[j];
                    let mut acc = 0.0;
                    for _ in 0..inner {
                        row[j] = conditional_redraw(spec, &row, j, &mut rng);
                        let diff = spec.g(&row) - base;
                        acc += diff * diff;
                        row[j] = xj;
                    }
                    *m = acc / inner as f64;
                }
                out.push(means);
            }
            out
        })
        .collect();

    let draws: Vec<Vec<f64>> = chunks.into_iter().flatten().collect();
    let mut nu = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    for j in 0..d {
        let v: Vec<f64> = draws.iter().map(|m| m[j]).collect();
        nu.push(crate::dataset::mean(&v));
        se.push((crate::dataset::variance(&v) / outer as f64).sqrt());
    }
    Ok(GroundTruth {
        features: spec.feature_names(),
        nu,
        std_errors: Some(se),
        provenance: Provenance::OracleMc { outer, inner, seed },
    })
}
