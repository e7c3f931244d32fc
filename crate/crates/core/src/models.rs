//! Black-box predictor contract and built-in regressors.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{mean, variance, Dataset};
use crate::error::{Error, Result};
use crate::linalg;

/// Coefficients of the Hooker benchmark, `X1..X10`.
pub const HOOKER_COEFFICIENTS: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.8, 1.2, 1.5];

/// A model evaluated on feature rows.
///
/// Implementations must be pure: the same row always yields the same
/// prediction.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> Result<f64>;

    /// Predictions for a row-major matrix with [`Self::n_features`] columns.
    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_features();
        if d == 0 || !rows.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rows.len(),
            });
        }
        rows.chunks(d).map(|r| self.predict_row(r)).collect()
    }

    /// Whether rows may be evaluated from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Goodness of fit on the evaluation rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2: f64,
    pub mse: f64,
    /// Mean absolute error.
    pub mad: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Scores `model` on `eval`. `n_test` is 0 when `eval` is the training set.
pub fn fit_report(
    model: &dyn Predictor,
    eval: &Dataset,
    n_train: usize,
    held_out: bool,
) -> Result<FitReport> {
    let pred = model.predict_rows(&eval.rows_flat())?;
    let y = eval.target();
    let n = y.len() as f64;
    let sse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum();
    let sae: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).abs()).sum();
    let m = mean(y);
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(FitReport {
        r2,
        mse: sse / n,
        mad: sae / n,
        n_train,
        n_test: if held_out { eval.n_rows() } else { 0 },
    })
}

/// Analytic regression functions with no noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum Expression {
    Hooker,
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct ExactFunction {
    name: String,
    expression: Expression,
    coefficients: Vec<f64>,
    intercept: f64,
}

impl ExactFunction {
    pub fn new(expression: Expression) -> Self {
        let (name, intercept, coefficients) = match &expression {
            Expression::Hooker => ("exact:hooker".to_owned(), 0.0, HOOKER_COEFFICIENTS.to_vec()),
            Expression::Linear {
                intercept,
                coefficients,
            } => ("exact:linear".to_owned(), *intercept, coefficients.clone()),
        };
        Self {
            name,
            expression,
            coefficients,
            intercept,
        }
    }

    pub fn expression(&self) -> &Expression {
        &self.expression
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Parses `hooker` or `linear:b1,b2,...` (optionally `linear:b1,...@c` with
/// intercept `c`).
pub fn exact_function_predictor(id: &str) -> Result<ExactFunction> {
    if id == "hooker" {
        return Ok(ExactFunction::new(Expression::Hooker));
    }
    if let Some(spec) = id.strip_prefix("linear:") {
        let (coefs, intercept) = match spec.split_once('@') {
            Some((c, i)) => (c, i.parse::<f64>().ok()),
            None => (spec, Some(0.0)),
        };
        let coefficients: Option<Vec<f64>> = coefs
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        if let (Some(coefficients), Some(intercept)) = (coefficients, intercept) {
            return Ok(ExactFunction::new(Expression::Linear {
                intercept,
                coefficients,
            }));
        }
    }
    Err(Error::UnknownExpression(id.to_owned()))
}

impl Predictor for ExactFunction {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                actual: row.len(),
            });
        }
        Ok(self.eval(row))
    }
}

/// Ordinary least squares, optionally with all pairwise products.
///
/// Features are standardized before expansion; this spans the same space as
/// the raw expansion and keeps the design well conditioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub feature_names: Vec<String>,
    pub interactions: bool,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Intercept, linear terms, then products `(a, b)` with `a < b` in
    /// lexicographic order, all on the standardized scale.
    pub coefficients: Vec<f64>,
    pub collinear: bool,
}

impl OlsModel {
    fn n_terms(d: usize, interactions: bool) -> usize {
        1 + d + if interactions { d * (d - 1) / 2 } else { 0 }
    }

    fn expand(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        let start = out.len();
        out.extend(
            row.iter()
                .zip(self.means.iter().zip(&self.scales))
                .map(|(x, (m, s))| (x - m) / s),
        );
        if self.interactions {
            let d = row.len();
            for a in 0..d {
                for b in (a + 1)..d {
                    out.push(out[start + a] * out[start + b]);
                }
            }
        }
    }
}

impl Predictor for OlsModel {
    fn name(&self) -> &str {
        if self.interactions {
            "ols:interactions"
        } else {
            "ols"
        }
    }

    fn n_features(&self) -> usize {
        self.means.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: row.len(),
            });
        }
        let mut terms = Vec::with_capacity(self.coefficients.len());
        self.expand(row, &mut terms);
        Ok(terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| t * c)
            .sum())
    }
}

fn column_scales(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let means = ds.columns().iter().map(|c| mean(c)).collect();
    let scales = ds
        .columns()
        .iter()
        .map(|c| {
            let sd = variance(c).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (means, scales)
}

/// Fits OLS on `train`; the report uses `test` when given.
pub fn fit_ols(
    train: &Dataset,
    interactions: bool,
    test: Option<&Dataset>,
) -> Result<(OlsModel, FitReport)> {
    let d = train.n_features();
    let n = train.n_rows();
    let p = OlsModel::n_terms(d, interactions);
    if n <= p {
        return Err(Error::InsufficientRows {
            rows: n,
            regressors: p,
        });
    }
    let (means, scales) = column_scales(train);
    let mut model = OlsModel {
        feature_names: train.column_names().to_vec(),
        interactions,
        means,
        scales,
        coefficients: vec![0.0; p],
        collinear: false,
    };
    let mut design = DMatrix::zeros(n, p);
    let mut terms = Vec::with_capacity(p);
    for row in 0..n {
        model.expand(&train.row(row), &mut terms);
        for (c, t) in terms.iter().enumerate() {
            design[(row, c)] = *t;
        }
    }
    let fit = linalg::least_squares(&design, &DVector::from_column_slice(train.target()));
    model.coefficients = fit.coefficients.as_slice().to_vec();
    model.collinear = fit.collinear;
    let report = match test {
        Some(t) => fit_report(&model, t, n, true)?,
        None => fit_report(&model, train, n, false)?,
    };
    Ok((model, report))
}

/// k-nearest-neighbour regression under standardized Euclidean distance.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Standardized training rows, row-major.
    rows: Vec<f64>,
    targets: Vec<f64>,
}

impl Predictor for KnnModel {
    fn name(&self) -> &str {
        "knn"
    }

    fn n_features(&self) -> usize {
        self.means.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let d = self.n_features();
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        let q: Vec<f64> = row
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .chunks(d)
            .enumerate()
            .map(|(i, r)| {
                let d2 = r
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        Ok(dist[..self.k]
            .iter()
            .map(|&(_, i)| self.targets[i])
            .sum::<f64>()
            / self.k as f64)
    }
}

pub fn fit_knn(train: &Dataset, k: usize, test: Option<&Dataset>) -> Result<(KnnModel, FitReport)> {
    let n = train.n_rows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let (means, scales) = column_scales(train);
    let d = train.n_features();
    let mut rows = train.rows_flat();
    for (i, v) in rows.iter_mut().enumerate() {
        let j = i % d;
        *v = (*v - means[j]) / scales[j];
    }
    let model = KnnModel {
        k,
        means,
        scales,
        rows,
        targets: train.target().to_vec(),
    };
    let report = match test {
        Some(t) => fit_report(&model, t, n, true)?,
        None => fit_report(&model, train, n, false)?,
    };
    Ok((model, report))
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// First phase of the external-model protocol: records every distinct
/// query row and answers 0.
#[derive(Debug, Default)]
pub struct RecordingPredictor {
    d: usize,
    queries: Mutex<BTreeSet<Vec<u64>>>,
}

impl RecordingPredictor {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            queries: Mutex::default(),
        }
    }

    /// Distinct query rows in a canonical order.
    pub fn queries(&self) -> Vec<Vec<f64>> {
        self.queries
            .lock()
            .expect("query log poisoned")
            .iter()
            .map(|k| k.iter().map(|&b| f64::from_bits(b)).collect())
            .collect()
    }
}

impl Predictor for RecordingPredictor {
    fn name(&self) -> &str {
        "recording"
    }

    fn n_features(&self) -> usize {
        self.d
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.queries
            .lock()
            .expect("query log poisoned")
            .insert(row_key(row));
        Ok(0.0)
    }
}

/// Second phase of the external-model protocol: answers queries from a
/// table of externally computed predictions.
#[derive(Debug, Clone)]
pub struct TablePredictor {
    d: usize,
    table: HashMap<Vec<u64>, f64>,
}

impl TablePredictor {
    pub fn new(queries: &[Vec<f64>], predictions: &[f64]) -> Result<Self> {
        if queries.len() != predictions.len() {
            return Err(Error::Protocol(format!(
                "{} queries but {} predictions",
                queries.len(),
                predictions.len()
            )));
        }
        let d = queries.first().map_or(0, Vec::len);
        let table = queries
            .iter()
            .zip(predictions)
            .map(|(q, &p)| (row_key(q), p))
            .collect();
        Ok(Self { d, table })
    }
}

impl Predictor for TablePredictor {
    fn name(&self) -> &str {
        "predictions"
    }

    fn n_features(&self) -> usize {
        self.d
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.table
            .get(&row_key(row))
            .copied()
            .ok_or_else(|| Error::Protocol("query row missing from predictions table".into()))
    }
}
