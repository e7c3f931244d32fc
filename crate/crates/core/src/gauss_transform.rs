//! Rank-based normal-score transform and its inverse.
//!
//! Each feature is mapped through its Hazen empirical CDF and then the
//! standard normal quantile function. Both directions interpolate linearly
//! between the observed order statistics and clamp at the sample extremes,
//! so inverse-mapped values never leave the observed range.

use crate::dataset::{empirical_cdf_values, Dataset};
use crate::error::{Error, Result};
use crate::normal;

/// Invertible map between one feature's values and its normal scores.
///
/// Knots are the distinct order statistics of the column paired with their
/// scores; tied observations share a knot since they share a midrank.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalScoreMap {
    feature: usize,
    x_knots: Vec<f64>,
    z_knots: Vec<f64>,
}

impl NormalScoreMap {
    pub fn fit(ds: &Dataset, j: usize) -> Result<Self> {
        ds.check_feature(j)?;
        Self::fit_column(ds.column(j), j)
    }

    pub fn fit_column(column: &[f64], feature: usize) -> Result<Self> {
        let u = empirical_cdf_values(column);
        let mut pairs: Vec<(f64, f64)> = column
            .iter()
            .zip(&u)
            .map(|(&x, &p)| (x, normal::quantile(p)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        if pairs.len() < 2 {
            return Err(Error::DegenerateColumn(feature));
        }
        let (x_knots, z_knots) = pairs.into_iter().unzip();
        Ok(Self {
            feature,
            x_knots,
            z_knots,
        })
    }

    pub fn feature(&self) -> usize {
        self.feature
    }

    /// Distinct order statistics, increasing.
    pub fn x_knots(&self) -> &[f64] {
        &self.x_knots
    }

    /// Normal scores of [`Self::x_knots`], increasing.
    pub fn z_knots(&self) -> &[f64] {
        &self.z_knots
    }

    pub fn min(&self) -> f64 {
        self.x_knots[0]
    }

    pub fn max(&self) -> f64 {
        *self.x_knots.last().unwrap()
    }

    pub fn forward(&self, x: f64) -> f64 {
        interpolate(&self.x_knots, &self.z_knots, x)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        interpolate(&self.z_knots, &self.x_knots, z)
    }
}

/// Piecewise-linear interpolation through strictly increasing `xs`, clamped
/// to the end values outside `[xs[0], xs[last]]`.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    // first knot strictly greater than x; 1 <= hi <= last here
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    let y = ys[lo] + t * (ys[hi] - ys[lo]);
    // rounding must not step outside the bracketing knots
    y.clamp(ys[lo], ys[hi])
}

/// Normal-score maps and transformed columns for a whole dataset.
///
/// Constant features have no map; their score column is all zeros and they
/// are excluded from conditional models.
#[derive(Debug, Clone)]
pub struct NormalScores {
    maps: Vec<Option<NormalScoreMap>>,
    scores: Vec<Vec<f64>>,
}

impl NormalScores {
    pub fn fit(ds: &Dataset) -> Self {
        let mut maps = Vec::with_capacity(ds.n_features());
        let mut scores = Vec::with_capacity(ds.n_features());
        for j in 0..ds.n_features() {
            match NormalScoreMap::fit(ds, j) {
                Ok(map) => {
                    scores.push(ds.column(j).iter().map(|&x| map.forward(x)).collect());
                    maps.push(Some(map));
                }
                Err(_) => {
                    scores.push(vec![0.0; ds.n_rows()]);
                    maps.push(None);
                }
            }
        }
        Self { maps, scores }
    }

    pub fn map(&self, j: usize) -> Result<&NormalScoreMap> {
        self.maps
            .get(j)
            .ok_or(Error::IndexOutOfRange {
                index: j,
                len: self.maps.len(),
            })?
            .as_ref()
            .ok_or(Error::DegenerateColumn(j))
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        self.maps[j].is_none()
    }

    /// Indices of non-constant features.
    pub fn active_features(&self) -> Vec<usize> {
        (0..self.maps.len())
            .filter(|&j| self.maps[j].is_some())
            .collect()
    }

    /// Score column for feature `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.scores[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn n_rows(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }
}
