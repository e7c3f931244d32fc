//! Second-order Gaussian knockoffs in normal-score space (GKnock).
//!
//! A Gaussian knockoff model is fitted to the normal scores, knockoff
//! scores are drawn from the conditional law of `Z'` given `Z`, and each
//! knockoff column is mapped back through the inverse normal-score map.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gauss_transform::NormalScores;
use crate::linalg;
use crate::seed::rng_from;

/// Default covariance shrinkage toward the identity.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

/// Pivot floor for the conditional covariance, relative to its largest
/// diagonal entry.
const PSD_TOL: f64 = 1e-9;

/// Rule for the knockoff diagonal `s`, chosen on the correlation scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum DiagonalRule {
    /// Maximize `sum(s)` subject to `0 <= s <= 1` and `diag(s) <= 2R`.
    #[default]
    Sdp,
    /// `s_k = min(1, 2 * lambda_min(R))` for every feature.
    Equicorrelated,
    /// Explicit values on the covariance scale.
    Fixed(Vec<f64>),
}

impl std::str::FromStr for DiagonalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdp" => Ok(DiagonalRule::Sdp),
            "equi" | "equicorrelated" => Ok(DiagonalRule::Equicorrelated),
            _ => Err(Error::Config(format!("unknown knockoff rule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffConfig {
    pub shrinkage: f64,
    pub rule: DiagonalRule,
}

impl Default for KnockoffConfig {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            rule: DiagonalRule::Sdp,
        }
    }
}

/// Fitted Gaussian knockoff parameters.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub s: DVector<f64>,
    /// `diag(s) Σ⁻¹`; the conditional mean operator is `A = I - B`.
    b: DMatrix<f64>,
    /// `2 diag(s) - diag(s) Σ⁻¹ diag(s)`.
    pub c: DMatrix<f64>,
    /// Lower factor with `L Lᵀ = C`.
    pub chol: DMatrix<f64>,
}

impl KnockoffModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Conditional mean operator `A = I - diag(s) Σ⁻¹`.
    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.b
    }
}

/// Fits the knockoff model to score columns (`z[k]` is feature `k`).
pub fn fit_knockoff_model(z: &[Vec<f64>], config: &KnockoffConfig) -> Result<KnockoffModel> {
    let d = z.len();
    if d == 0 {
        return Err(Error::InvalidData("no features".into()));
    }
    let gamma = config.shrinkage;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("shrinkage {gamma} outside [0, 1]")));
    }
    let n = z[0].len();
    let cols: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let mu = DVector::from_iterator(d, z.iter().map(|c| c.iter().sum::<f64>() / n as f64));
    let sigma = linalg::covariance(&cols) * (1.0 - gamma) + DMatrix::identity(d, d) * gamma;

    let eig = sigma.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if lo.partial_cmp(&(1e-10 * hi)) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    let sigma_inv = sigma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: lo })?
        .inverse();

    let scale: Vec<f64> = (0..d).map(|k| sigma[(k, k)]).collect();
    let s_vec: Vec<f64> = match &config.rule {
        DiagonalRule::Fixed(values) => {
            if values.len() != d {
                return Err(Error::Config(format!(
                    "{} knockoff diagonal values for {d} features",
                    values.len()
                )));
            }
            values.clone()
        }
        rule => {
            let corr = DMatrix::from_fn(d, d, |a, b| sigma[(a, b)] / (scale[a] * scale[b]).sqrt());
            let s_corr = match rule {
                DiagonalRule::Equicorrelated => {
                    vec![(2.0 * linalg::min_eigenvalue(&corr)).min(1.0); d]
                }
                _ => sdp_diagonal(&corr),
            };
            s_corr.iter().zip(&scale).map(|(s, v)| s * v).collect()
        }
    };
    let s = DVector::from_vec(s_vec);
    let ds = DMatrix::from_diagonal(&s);
    let b = &ds * &sigma_inv;
    let mut c = &ds * 2.0 - &b * &ds;
    c = (&c + c.transpose()) * 0.5;
    let tol = PSD_TOL * c.diagonal().max().max(f64::MIN_POSITIVE);
    let chol =
        linalg::psd_cholesky(&c, tol).map_err(|pivot| Error::NotPositiveSemidefinite { pivot })?;
    Ok(KnockoffModel {
        mu,
        sigma,
        s,
        b,
        c,
        chol,
    })
}

/// Barrier-method solution of `max sum(s)` s.t. `0 <= s <= 1`,
/// `2R - diag(s) >= 0`.
fn sdp_diagonal(corr: &DMatrix<f64>) -> Vec<f64> {
    let d = corr.nrows();
    let start = (2.0 * linalg::min_eigenvalue(corr)).min(1.0) * 0.5;
    let mut s = DVector::from_element(d, start.max(1e-12));
    let barrier_terms = 3.0 * d as f64;

    let slack = |s: &DVector<f64>| -> Option<DMatrix<f64>> {
        if s.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return None;
        }
        let m = corr * 2.0 - DMatrix::from_diagonal(s);
        m.cholesky().map(|ch| ch.inverse())
    };
    let objective = |s: &DVector<f64>, t: f64| -> Option<f64> {
        if s.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return None;
        }
        let m = corr * 2.0 - DMatrix::from_diagonal(s);
        let ch = m.cholesky()?;
        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(t * s.sum() + logdet + s.iter().map(|&v| v.ln() + (1.0 - v).ln()).sum::<f64>())
    };

    let mut t = 1.0;
    while barrier_terms / t > 1e-10 {
        for _ in 0..100 {
            let Some(minv) = slack(&s) else { break };
            let grad =
                DVector::from_fn(d, |k, _| t - minv[(k, k)] + 1.0 / s[k] - 1.0 / (1.0 - s[k]));
            let hess = DMatrix::from_fn(d, d, |a, b| {
                let mut h = -minv[(a, b)] * minv[(a, b)];
                if a == b {
                    h -= 1.0 / (s[a] * s[a]) + 1.0 / ((1.0 - s[a]) * (1.0 - s[a]));
                }
                h
            });
            let Some(neg) = (-hess).cholesky() else { break };
            let step = neg.solve(&grad);
            let decrement = grad.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            let base = objective(&s, t).unwrap();
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let cand = &s + &step * alpha;
                if let Some(v) = objective(&cand, t) {
                    if v >= base + 0.25 * alpha * decrement {
                        s = cand;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        t *= 10.0;
    }
    s.iter().copied().collect()
}

/// Draws knockoff scores, one row per observation:
/// `Z' = z - diag(s)Σ⁻¹(z - mu) + L ε`.
pub fn sample_knockoffs(model: &KnockoffModel, z: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let d = model.dim();
    let n = z.first().map_or(0, Vec::len);
    let mut rng = rng_from(seed);
    let mut out = vec![vec![0.0; n]; d];
    let mut centered = vec![0.0; d];
    let mut eps = vec![0.0; d];
    for row in 0..n {
        for k in 0..d {
            centered[k] = z[k][row] - model.mu[k];
            eps[k] = rng.sample(StandardNormal);
        }
        for a in 0..d {
            let mut shift = 0.0;
            let mut noise = 0.0;
            for k in 0..d {
                shift += model.b[(a, k)] * centered[k];
                noise += model.chol[(a, k)] * eps[k];
            }
            out[a][row] = z[a][row] - shift + noise;
        }
    }
    out
}

/// Normal scores and a knockoff model over the non-constant features.
#[derive(Debug, Clone)]
pub struct GknockSampler {
    scores: NormalScores,
    active: Vec<usize>,
    model: KnockoffModel,
}

impl GknockSampler {
    pub fn fit(ds: &Dataset, config: &KnockoffConfig) -> Result<Self> {
        let scores = NormalScores::fit(ds);
        let active = scores.active_features();
        let z: Vec<Vec<f64>> = active.iter().map(|&j| scores.column(j).to_vec()).collect();
        let model = fit_knockoff_model(&z, config)?;
        Ok(Self {
            scores,
            active,
            model,
        })
    }

    pub fn model(&self) -> &KnockoffModel {
        &self.model
    }

    pub fn scores(&self) -> &NormalScores {
        &self.scores
    }

    /// One joint knockoff draw mapped back to feature space. Constant
    /// features get `None`.
    pub fn knockoff_columns(&self, seed: u64) -> Vec<Option<Vec<f64>>> {
        let z: Vec<Vec<f64>> = self
            .active
            .iter()
            .map(|&j| self.scores.column(j).to_vec())
            .collect();
        let zk = sample_knockoffs(&self.model, &z, seed);
        let mut out = vec![None; self.scores.columns().len()];
        for (col, &j) in zk.into_iter().zip(&self.active) {
            let map = self.scores.map(j).expect("active feature has a map");
            out[j] = Some(col.into_iter().map(|v| map.inverse(v)).collect());
        }
        out
    }
}

/// Replacement column for feature `j` from one knockoff draw.
pub fn gknock_permute(
    ds: &Dataset,
    j: usize,
    seed: u64,
    config: &KnockoffConfig,
) -> Result<Vec<f64>> {
    ds.check_feature(j)?;
    let sampler = GknockSampler::fit(ds, config)?;
    sampler
        .knockoff_columns(seed)
        .swap_remove(j)
        .ok_or(Error::DegenerateColumn(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, corr: &DMatrix<f64>, seed: u64) -> Vec<Vec<f64>> {
        let d = corr.nrows();
        let l = corr.clone().cholesky().unwrap().l();
        let mut rng = rng_from(seed);
        let mut cols = vec![Vec::with_capacity(n); d];
        for _ in 0..n {
            let e = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * e;
            for k in 0..d {
                cols[k].push(x[k]);
            }
        }
        cols
    }

    fn pair(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    #[test]
    fn identity_covariance_closed_form() {
        // with Σ = I: λ_min = 1, s = 1, A = 0, C = I
        for rule in [DiagonalRule::Sdp, DiagonalRule::Equicorrelated] {
            let corr = DMatrix::identity(2, 2);
            let s = match rule {
                DiagonalRule::Sdp => sdp_diagonal(&corr),
                _ => vec![(2.0 * linalg::min_eigenvalue(&corr)).min(1.0); 2],
            };
            assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-6), "{s:?}");
        }
        let z = gaussian(4000, &DMatrix::identity(2, 2), 1);
        let cfg = KnockoffConfig {
            shrinkage: 1.0,
            rule: DiagonalRule::Equicorrelated,
        };
        let m = fit_knockoff_model(&z, &cfg).unwrap();
        assert!(m.a().norm() < 1e-12);
        assert!((&m.c - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn joint_moments_hold_exactly_in_the_model() {
        let corr = DMatrix::from_fn(4, 4, |a, b| 0.6f64.powi((a as i32 - b as i32).abs()));
        let z = gaussian(500, &corr, 4);
        for rule in [DiagonalRule::Sdp, DiagonalRule::Equicorrelated] {
            let m = fit_knockoff_model(
                &z,
                &KnockoffConfig {
                    shrinkage: 0.01,
                    rule,
                },
            )
            .unwrap();
            let a = m.a();
            let s = DMatrix::from_diagonal(&m.s);
            assert!((&a * &m.sigma - (&m.sigma - &s)).norm() < 1e-10);
            assert!((&a * &m.sigma * a.transpose() + &m.c - &m.sigma).norm() < 1e-10);
            assert!((&m.chol * m.chol.transpose() - &m.c).norm() < 1e-8);
        }
    }

    #[test]
    fn equicorrelated_rule_with_singular_conditional_covariance() {
        let corr = DMatrix::from_fn(10, 10, |a, b| 0.5f64.powi((a as i32 - b as i32).abs()));
        let cfg = KnockoffConfig {
            shrinkage: DEFAULT_SHRINKAGE,
            rule: DiagonalRule::Equicorrelated,
        };
        for seed in 0..60 {
            let z = gaussian(300, &corr, seed);
            let m = fit_knockoff_model(&z, &cfg).unwrap();
            assert!(linalg::min_eigenvalue(&m.c) < 1e-8);
        }
    }

    #[test]
    fn correlated_pair_diagonal() {
        // λ_min(R) = 1 - 0.95 = 0.05, so s = 0.1 under both rules
        let corr = pair(0.95);
        let sdp = sdp_diagonal(&corr);
        assert!(sdp.iter().all(|v| (v - 0.1).abs() < 1e-6), "{sdp:?}");
        let equi = 2.0 * linalg::min_eigenvalue(&corr);
        assert!((equi - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sdp_keeps_independent_features_at_one() {
        let mut corr = DMatrix::identity(4, 4);
        corr[(0, 1)] = 0.9;
        corr[(1, 0)] = 0.9;
        let s = sdp_diagonal(&corr);
        assert!(
            (s[0] - 0.2).abs() < 1e-6 && (s[1] - 0.2).abs() < 1e-6,
            "{s:?}"
        );
        assert!(
            (s[2] - 1.0).abs() < 1e-6 && (s[3] - 1.0).abs() < 1e-6,
            "{s:?}"
        );
        let m = corr * 2.0 - DMatrix::from_diagonal(&DVector::from_vec(s));
        assert!(linalg::min_eigenvalue(&m) > -1e-9);
    }

    #[test]
    fn duplicated_column_is_not_positive_definite() {
        let z = gaussian(500, &DMatrix::identity(1, 1), 2);
        let dup = vec![z[0].clone(), z[0].clone()];
        let cfg = KnockoffConfig {
            shrinkage: 0.0,
            rule: DiagonalRule::Equicorrelated,
        };
        assert!(matches!(
            fit_knockoff_model(&dup, &cfg),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn zero_diagonal_returns_input() {
        let z = gaussian(300, &pair(0.5), 3);
        let cfg = KnockoffConfig {
            shrinkage: DEFAULT_SHRINKAGE,
            rule: DiagonalRule::Fixed(vec![0.0, 0.0]),
        };
        let m = fit_knockoff_model(&z, &cfg).unwrap();
        assert_eq!(m.c.norm(), 0.0);
        assert_eq!(sample_knockoffs(&m, &z, 9), z);
    }

    #[test]
    fn independent_case_decorrelates() {
        let z = gaussian(2000, &DMatrix::identity(2, 2), 4);
        let m = fit_knockoff_model(&z, &KnockoffConfig::default()).unwrap();
        let zk = sample_knockoffs(&m, &z, 5);
        for k in 0..2 {
            let r = crate::dataset::correlation(&z[k], &zk[k]);
            assert!(r.abs() < 0.06, "{r}");
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let z = gaussian(100, &pair(0.3), 6);
        let m = fit_knockoff_model(&z, &KnockoffConfig::default()).unwrap();
        assert_eq!(sample_knockoffs(&m, &z, 1), sample_knockoffs(&m, &z, 1));
        assert_ne!(sample_knockoffs(&m, &z, 1), sample_knockoffs(&m, &z, 2));
    }
}
