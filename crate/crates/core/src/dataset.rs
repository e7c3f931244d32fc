//! Tabular data model, CSV ingestion and sample statistics.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric feature matrix (stored column-major) with a named target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    column_names: Vec<String>,
    target: Vec<f64>,
    target_name: String,
}

/// What to do with rows holding empty, unparseable or non-finite cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    DropRow,
}

/// Selects a feature column or the target for [`Dataset::summarize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRef {
    Feature(usize),
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: f64,
    /// Unbiased sample variance (divisor N - 1).
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub distinct_count: usize,
}

impl Dataset {
    /// Builds a dataset from feature columns and a target vector.
    pub fn new(
        columns: Vec<Vec<f64>>,
        column_names: Vec<String>,
        target: Vec<f64>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let n = target.len();
        if columns.is_empty() {
            return Err(Error::InvalidData(
                "at least one feature is required".into(),
            ));
        }
        if columns.len() != column_names.len() {
            return Err(Error::InvalidData(format!(
                "{} columns but {} names",
                columns.len(),
                column_names.len()
            )));
        }
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::InvalidData(format!(
                "column `{}` has {} rows, target has {n}",
                column_names[j],
                c.len()
            )));
        }
        if n < 2 {
            return Err(Error::EmptyData { rows: n });
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if name.is_empty() {
                return Err(Error::InvalidData("empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate column name `{name}`"
                )));
            }
        }
        let non_finite = columns
            .iter()
            .flatten()
            .chain(target.iter())
            .any(|v| !v.is_finite());
        if non_finite {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        Ok(Self {
            columns,
            column_names,
            target,
            target_name: target_name.into(),
        })
    }

    /// Reads a headed CSV file. Lines starting with `#` are skipped.
    pub fn load_csv(
        path: impl AsRef<Path>,
        target_column: &str,
        missing_policy: MissingPolicy,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, target_column, missing_policy)
    }

    pub fn read_csv<R: std::io::Read>(
        reader: R,
        target_column: &str,
        missing_policy: MissingPolicy,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let target_idx = header
            .iter()
            .position(|h| h == target_column)
            .ok_or_else(|| Error::MissingTarget(target_column.to_owned()))?;

        let width = header.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
        'rows: for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let mut row = Vec::with_capacity(width);
            for (c, cell) in record.iter().enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => match missing_policy {
                        MissingPolicy::DropRow => continue 'rows,
                        MissingPolicy::Reject => {
                            return Err(Error::Parse {
                                line,
                                column: header.get(c).cloned().unwrap_or_default(),
                                value: cell.to_owned(),
                            })
                        }
                    },
                }
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }

        let target = columns.remove(target_idx);
        let mut names = header;
        let target_name = names.remove(target_idx);
        if target.len() < 2 {
            return Err(Error::EmptyData { rows: target.len() });
        }
        Self::new(columns, names, target, target_name)
    }

    /// Writes the dataset as CSV (features in order, target last).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        wtr.write_record(&header)?;
        for n in 0..self.n_rows() {
            let mut record: Vec<String> = self.columns.iter().map(|c| c[n].to_string()).collect();
            record.push(self.target[n].to_string());
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn check_feature(&self, j: usize) -> Result<()> {
        if j < self.n_features() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_features(),
            })
        }
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[n]).collect()
    }

    /// Row-major copy of the feature matrix.
    pub fn rows_flat(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut out = vec![0.0; self.n_rows() * d];
        for (j, col) in self.columns.iter().enumerate() {
            for (n, &v) in col.iter().enumerate() {
                out[n * d + j] = v;
            }
        }
        out
    }

    /// Row-major feature matrix with column `j` replaced by `values`.
    pub fn rows_with_column(&self, j: usize, values: &[f64]) -> Vec<f64> {
        let d = self.n_features();
        let mut out = self.rows_flat();
        for (n, &v) in values.iter().enumerate() {
            out[n * d + j] = v;
        }
        out
    }

    /// Returns a copy with the target replaced.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        Self::new(
            self.columns.clone(),
            self.column_names.clone(),
            target,
            self.target_name.clone(),
        )
    }

    /// Returns a dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&n| c[n]).collect())
            .collect();
        let target = rows.iter().map(|&n| self.target[n]).collect();
        Self::new(
            columns,
            self.column_names.clone(),
            target,
            self.target_name.clone(),
        )
    }

    /// Seeded train/test split. `test_fraction` of the rows (rounded) go to
    /// the second dataset.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction * self.n_rows() as f64).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.select_rows(train)?, self.select_rows(test)?))
    }

    pub fn summarize(&self, column: ColumnRef) -> Result<ColumnSummary> {
        let values = match column {
            ColumnRef::Feature(j) => {
                self.check_feature(j)?;
                &self.columns[j]
            }
            ColumnRef::Target => &self.target,
        };
        Ok(summarize_values(values))
    }

    pub fn feature_variance(&self, j: usize) -> f64 {
        variance(&self.columns[j])
    }

    /// Z-score standardization of every feature column (constant columns
    /// are only centered).
    pub fn standardized(&self) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let m = mean(c);
                let sd = variance(c).sqrt();
                let scale = if sd > 0.0 { sd } else { 1.0 };
                c.iter().map(|v| (v - m) / scale).collect()
            })
            .collect();
        Self {
            columns,
            ..self.clone()
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn summarize_values(values: &[f64]) -> ColumnSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct_count = usize::from(!sorted.is_empty());
    distinct_count += sorted.windows(2).filter(|w| w[0] != w[1]).count();
    ColumnSummary {
        mean: mean(values),
        variance: variance(values),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        distinct_count,
    }
}

/// Midranks (1-based) of `values`; tied values share the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Hazen plotting positions `(r - 0.5) / N` from midranks. Every output lies
/// strictly inside (0, 1).
pub fn empirical_cdf_values(column: &[f64]) -> Vec<f64> {
    let n = column.len() as f64;
    midranks(column)
        .into_iter()
        .map(|r| (r - 0.5) / n)
        .collect()
}

/// Sample Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
