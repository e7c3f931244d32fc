//! Gaussian conditional model reliance (GCMR) sampling.
//!
//! In normal-score space each feature is regressed on the others, the
//! residuals are permuted and added back to the fitted conditional mean,
//! and the result is mapped back through the inverse normal-score map.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gauss_transform::NormalScores;
use crate::linalg;
use crate::seed::rng_from;

/// Estimator for `E[Z_j | Z_-j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegressionKind {
    /// OLS on an intercept and the other scores.
    #[default]
    Linear,
    /// Mean over the `k` nearest rows in the other scores; `None` means
    /// `ceil(sqrt(N))`.
    Knn { k: Option<usize> },
}

impl fmt::Display for RegressionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressionKind::Linear => f.write_str("linear"),
            RegressionKind::Knn { k: None } => f.write_str("knn"),
            RegressionKind::Knn { k: Some(k) } => write!(f, "knn:{k}"),
        }
    }
}

impl FromStr for RegressionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(RegressionKind::Linear),
            "knn" => Ok(RegressionKind::Knn { k: None }),
            _ => match s.strip_prefix("knn:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(RegressionKind::Knn { k: Some(k) }),
                _ => Err(Error::Config(format!("unknown regression kind `{s}`"))),
            },
        }
    }
}

/// Fitted conditional mean of one feature's scores given the others.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    pub feature: usize,
    pub kind: RegressionKind,
    /// Features used as regressors, in coefficient order.
    pub regressors: Vec<usize>,
    /// Observed scores `z_j`.
    pub scores: Vec<f64>,
    /// Intercept followed by one slope per regressor (linear kind only).
    pub coefficients: Option<Vec<f64>>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Ridge fallback was used.
    pub collinear: bool,
}

/// Fits the conditional model of column `j` on every other column of `z`.
pub fn fit_conditional(z: &[Vec<f64>], j: usize, kind: RegressionKind) -> Result<ConditionalModel> {
    if j >= z.len() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: z.len(),
        });
    }
    let regressors: Vec<usize> = (0..z.len()).filter(|&k| k != j).collect();
    fit_conditional_on(z, j, &regressors, kind)
}

pub(crate) fn fit_conditional_on(
    z: &[Vec<f64>],
    j: usize,
    regressors: &[usize],
    kind: RegressionKind,
) -> Result<ConditionalModel> {
    let target = &z[j];
    let n = target.len();
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!(
            "non-finite score in column {j}"
        )));
    }
    let (fitted, coefficients, collinear) = match kind {
        RegressionKind::Linear => {
            let p = regressors.len() + 1;
            let design = DMatrix::from_fn(n, p, |row, col| {
                if col == 0 {
                    1.0
                } else {
                    z[regressors[col - 1]][row]
                }
            });
            let y = DVector::from_column_slice(target);
            let fit = linalg::least_squares(&design, &y);
            let fitted = (&design * &fit.coefficients).as_slice().to_vec();
            (
                fitted,
                Some(fit.coefficients.as_slice().to_vec()),
                fit.collinear,
            )
        }
        RegressionKind::Knn { k } => {
            let k = k.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
            if k == 0 || k > n {
                return Err(Error::InvalidK { k, n });
            }
            (knn_fitted(z, target, regressors, k), None, false)
        }
    };
    let residuals = target.iter().zip(&fitted).map(|(t, m)| t - m).collect();
    Ok(ConditionalModel {
        feature: j,
        kind,
        regressors: regressors.to_vec(),
        scores: target.to_vec(),
        coefficients,
        fitted,
        residuals,
        collinear,
    })
}

fn knn_fitted(z: &[Vec<f64>], target: &[f64], regressors: &[usize], k: usize) -> Vec<f64> {
    let n = target.len();
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    (0..n)
        .map(|row| {
            dist.clear();
            dist.extend((0..n).map(|other| {
                let d2: f64 = regressors
                    .iter()
                    .map(|&c| {
                        let diff = z[c][row] - z[c][other];
                        diff * diff
                    })
                    .sum();
                (d2, other)
            }));
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < n {
                dist.select_nth_unstable_by(k - 1, cmp);
            }
            dist[..k].iter().map(|&(_, i)| target[i]).sum::<f64>() / k as f64
        })
        .collect()
}

impl ConditionalModel {
    /// New scores `m_n + r_perm(n)`, evaluated as `z_n + (r_perm(n) - r_n)`
    /// so fixed points of the permutation reproduce `z_n` bit for bit.
    pub fn permuted_scores(&self, perm: &[usize]) -> Vec<f64> {
        perm.iter()
            .enumerate()
            .map(|(n, &p)| {
                if p == n {
                    self.scores[n]
                } else {
                    self.scores[n] + (self.residuals[p] - self.residuals[n])
                }
            })
            .collect()
    }
}

/// Normal scores plus one conditional model per non-constant feature,
/// fitted once and reused across replicates.
#[derive(Debug, Clone)]
pub struct GcmrSampler {
    scores: NormalScores,
    models: Vec<Option<ConditionalModel>>,
}

impl GcmrSampler {
    pub fn fit(ds: &Dataset, kind: RegressionKind) -> Result<Self> {
        let scores = NormalScores::fit(ds);
        let features: Vec<usize> = scores.active_features();
        Self::fit_features(scores, &features, kind)
    }

    fn fit_features(
        scores: NormalScores,
        features: &[usize],
        kind: RegressionKind,
    ) -> Result<Self> {
        let active = scores.active_features();
        let mut models = vec![None; scores.columns().len()];
        for &j in features {
            let regressors: Vec<usize> = active.iter().copied().filter(|&k| k != j).collect();
            models[j] = Some(fit_conditional_on(scores.columns(), j, &regressors, kind)?);
        }
        Ok(Self { scores, models })
    }

    pub fn scores(&self) -> &NormalScores {
        &self.scores
    }

    pub fn model(&self, j: usize) -> Result<&ConditionalModel> {
        self.models
            .get(j)
            .ok_or(Error::IndexOutOfRange {
                index: j,
                len: self.models.len(),
            })?
            .as_ref()
            .ok_or(Error::DegenerateColumn(j))
    }

    /// Replacement column for feature `j` using an explicit residual
    /// permutation.
    pub fn permute_with(&self, j: usize, perm: &[usize]) -> Result<Vec<f64>> {
        let model = self.model(j)?;
        let map = self.scores.map(j)?;
        Ok(model
            .permuted_scores(perm)
            .into_iter()
            .map(|z| map.inverse(z))
            .collect())
    }

    /// Replacement column for feature `j` with a uniform random residual
    /// permutation drawn from `seed`.
    pub fn permute(&self, j: usize, seed: u64) -> Result<Vec<f64>> {
        let n = self.scores.n_rows();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng_from(seed));
        self.permute_with(j, &perm)
    }
}

/// Full GCMR pipeline for a single feature.
pub fn gcmr_permute(ds: &Dataset, j: usize, seed: u64, kind: RegressionKind) -> Result<Vec<f64>> {
    ds.check_feature(j)?;
    let scores = NormalScores::fit(ds);
    if scores.is_degenerate(j) {
        return Err(Error::DegenerateColumn(j));
    }
    GcmrSampler::fit_features(scores, &[j], kind)?.permute(j, seed)
}
