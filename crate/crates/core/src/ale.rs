//! Accumulated local effects: grids, curves and the ALE importance indices.
//!
//! Every evaluation point differs from an observed row only in feature `j`,
//! and only by moving it to one of the two edges of the row's own bin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{variance, Dataset};
use crate::error::{Error, Result};
use crate::models::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Edges at empirical quantiles `i / K`.
    #[default]
    Quantile,
    /// Equally spaced edges over `[min, max]`.
    Uniform,
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::Quantile => "quantile",
            GridKind::Uniform => "uniform",
        })
    }
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(GridKind::Quantile),
            "uniform" => Ok(GridKind::Uniform),
            _ => Err(Error::Config(format!("unknown grid kind `{s}`"))),
        }
    }
}

/// Which variance normalizes the kappa index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetVariance {
    /// Sample variance of the observed target.
    #[default]
    Observed,
    /// Sample variance of the model's predictions on the data.
    Predicted,
}

/// Partition of one feature's range into bins `[z_{k-1}, z_k)`, the last
/// bin closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct AleGrid {
    pub feature: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Bin of each row.
    pub bins: Vec<usize>,
    /// Some empty bins were merged away.
    pub merged: bool,
    /// Edges were set to the distinct values of a low-cardinality feature.
    pub discrete: bool,
}

impl AleGrid {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn n_rows(&self) -> usize {
        self.bins.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    /// Largest displacement of an evaluation point from its original row.
    pub fn extrapolation_radius(&self) -> f64 {
        (0..self.n_bins())
            .map(|k| self.width(k))
            .fold(0.0, f64::max)
    }

    /// Row indices per bin, each list increasing.
    pub fn rows_by_bin(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_bins()];
        for (n, &b) in self.bins.iter().enumerate() {
            out[b].push(n);
        }
        out
    }
}

fn assign_bins(edges: &[f64], values: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let k = edges.len() - 1;
    let inner = &edges[1..k];
    let mut counts = vec![0; k];
    let bins = values
        .iter()
        .map(|&x| {
            let b = inner.partition_point(|&e| e <= x);
            counts[b] += 1;
            b
        })
        .collect();
    (bins, counts)
}

/// Type-7 empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_grid(ds: &Dataset, j: usize, k: usize, kind: GridKind) -> Result<AleGrid> {
    ds.check_feature(j)?;
    if k == 0 {
        return Err(Error::Config("ALE grid needs K >= 1".into()));
    }
    let column = ds.column(j);
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateColumn(j));
    }
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);

    let discrete = distinct.len() <= k + 1;
    let mut edges: Vec<f64> = if discrete {
        distinct
    } else {
        match kind {
            GridKind::Quantile => (0..=k)
                .map(|i| quantile_sorted(&sorted, i as f64 / k as f64))
                .collect(),
            GridKind::Uniform => (0..=k)
                .map(|i| {
                    if i == k {
                        max
                    } else {
                        min + (max - min) * i as f64 / k as f64
                    }
                })
                .collect(),
        }
    };
    edges.dedup();

    let mut merged = false;
    loop {
        let (bins, counts) = assign_bins(&edges, column);
        match counts.iter().position(|&c| c == 0) {
            None => {
                return Ok(AleGrid {
                    feature: j,
                    edges,
                    counts,
                    bins,
                    merged,
                    discrete,
                })
            }
            Some(empty) => {
                merged = true;
                // merge into the left neighbour; the first bin merges right
                edges.remove(if empty > 0 { empty } else { 1 });
            }
        }
    }
}

/// Predictions at both edges of each row's bin, holding the other
/// features at their observed values.
#[derive(Debug, Clone)]
pub struct LocalEffects {
    pub grid: AleGrid,
    /// `g(z_k, x_-j)` for each row, `z_k` the upper edge of its bin.
    pub upper: Vec<f64>,
    /// `g(z_{k-1}, x_-j)` for each row.
    pub lower: Vec<f64>,
}

impl LocalEffects {
    fn bin_means(&self, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        self.grid
            .rows_by_bin()
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                let s: f64 = rows
                    .iter()
                    .map(|&n| f(k, self.upper[n] - self.lower[n]))
                    .sum();
                s / rows.len() as f64
            })
            .collect()
    }

    /// Mean prediction difference per bin.
    pub fn mean_differences(&self) -> Vec<f64> {
        self.bin_means(|_, d| d)
    }

    /// `½ Σ_k mean_k(Δ²) p_k`.
    pub fn tau(&self) -> f64 {
        let p = self.grid.probabilities();
        0.5 * self
            .bin_means(|_, d| d * d)
            .iter()
            .zip(&p)
            .map(|(m, p)| m * p)
            .sum::<f64>()
    }

    /// `(1/K) Σ_k mean_k((Δ / width_k)²) · σ_j² / σ_y²`.
    pub fn kappa(&self, feature_variance: f64, target_variance: f64) -> Result<f64> {
        if target_variance.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::ZeroTargetVariance);
        }
        let ratios = self.bin_means(|k, d| {
            let r = d / self.grid.width(k);
            r * r
        });
        let mean_sq = ratios.iter().sum::<f64>() / ratios.len() as f64;
        Ok(mean_sq * feature_variance / target_variance)
    }
}

pub fn local_effects(model: &dyn Predictor, ds: &Dataset, grid: &AleGrid) -> Result<LocalEffects> {
    let j = grid.feature;
    let d = ds.n_features();
    if model.n_features() != d {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: d,
        });
    }
    let n = ds.n_rows();
    let base = ds.rows_flat();
    let mut rows = Vec::with_capacity(2 * n * d);
    for side in [1, 0] {
        for (r, &b) in grid.bins.iter().enumerate() {
            let start = rows.len();
            rows.extend_from_slice(&base[r * d..(r + 1) * d]);
            rows[start + j] = grid.edges[b + side];
        }
    }
    let pred = model
        .predict_rows(&rows)
        .map_err(|e| Error::PredictorFailure {
            context: format!("ALE local effects for feature {j}"),
            message: e.to_string(),
        })?;
    let (upper, lower) = pred.split_at(n);
    Ok(LocalEffects {
        grid: grid.clone(),
        upper: upper.to_vec(),
        lower: lower.to_vec(),
    })
}

/// Accumulated effect at each grid edge.
#[derive(Debug, Clone)]
pub struct AleCurve {
    pub grid: AleGrid,
    pub values: Vec<f64>,
    pub centered: bool,
}

impl AleCurve {
    /// Bin-probability-weighted mean of the curve (bin midpoint values).
    pub fn weighted_mean(&self) -> f64 {
        self.grid
            .probabilities()
            .iter()
            .enumerate()
            .map(|(k, p)| p * 0.5 * (self.values[k] + self.values[k + 1]))
            .sum()
    }

    /// CSV with columns `edge,value,bin_count`; `bin_count` is the count of
    /// the bin ending at that edge (0 on the first edge).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["edge", "value", "bin_count"])?;
        for (k, (e, v)) in self.grid.edges.iter().zip(&self.values).enumerate() {
            let count = if k == 0 { 0 } else { self.grid.counts[k - 1] };
            wtr.write_record([e.to_string(), v.to_string(), count.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub fn ale_curve(effects: &LocalEffects, centered: bool) -> AleCurve {
    let mut values = Vec::with_capacity(effects.grid.n_bins() + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for m in effects.mean_differences() {
        acc += m;
        values.push(acc);
    }
    let mut curve = AleCurve {
        grid: effects.grid.clone(),
        values,
        centered: false,
    };
    if centered {
        let shift = curve.weighted_mean();
        for v in &mut curve.values {
            *v -= shift;
        }
        curve.centered = true;
    }
    curve
}

pub fn tau_ale(model: &dyn Predictor, ds: &Dataset, grid: &AleGrid) -> Result<f64> {
    Ok(local_effects(model, ds, grid)?.tau())
}

pub fn kappa_ale(
    model: &dyn Predictor,
    ds: &Dataset,
    grid: &AleGrid,
    normalizer: TargetVariance,
) -> Result<f64> {
    let effects = local_effects(model, ds, grid)?;
    let sigma_y2 = target_variance(model, ds, normalizer)?;
    effects.kappa(ds.feature_variance(grid.feature), sigma_y2)
}

pub fn target_variance(
    model: &dyn Predictor,
    ds: &Dataset,
    normalizer: TargetVariance,
) -> Result<f64> {
    Ok(match normalizer {
        TargetVariance::Observed => variance(ds.target()),
        TargetVariance::Predicted => variance(&model.predict_rows(&ds.rows_flat())?),
    })
}
