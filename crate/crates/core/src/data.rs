use std::path::Path;

use crate::error::{Error, Result};

/// Observations `(x^k, y^k)`, stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    names: Vec<String>,
    target_name: String,
}

impl Dataset {
    pub fn new(
        columns: Vec<Vec<f64>>,
        y: Vec<f64>,
        names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Dataset(
                "at least one input column is required".into(),
            ));
        }
        if y.is_empty() {
            return Err(Error::Dataset("at least one row is required".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::Dataset(
                "one name per input column is required".into(),
            ));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != y.len()) {
            return Err(Error::Dataset(format!(
                "column `{}` has {} rows, target has {}",
                names[c],
                columns[c].len(),
                y.len()
            )));
        }
        let all_finite = y
            .iter()
            .chain(columns.iter().flatten())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Dataset("all entries must be finite".into()));
        }
        Ok(Dataset {
            columns,
            y,
            names,
            target_name,
        })
    }

    /// Builds a dataset from row-major inputs with default column names
    /// `x1..xK`.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dataset("ragged input rows".into()));
        }
        let columns = (0..k)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        let names = (1..=k).map(|j| format!("x{j}")).collect();
        Self::new(columns, y, names, "y".into())
    }

    /// Reads a CSV with a header row. `target` names the response column;
    /// every other column becomes an input in header order.
    pub fn read_csv(path: &Path, target: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let t = headers.iter().position(|h| h == target).ok_or_else(|| {
            Error::Dataset(format!("no column named `{target}` in {}", path.display()))
        })?;
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
        let mut y = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut col = 0;
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Dataset(format!(
                        "{}: row {}: column `{}` is not a number: `{field}`",
                        path.display(),
                        row + 2,
                        headers[j]
                    ))
                })?;
                if j == t {
                    y.push(v);
                } else {
                    columns[col].push(v);
                    col += 1;
                }
            }
        }
        let names = headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != t)
            .map(|(_, h)| h.clone())
            .collect();
        Self::new(columns, y, names, target.to_string())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[k].to_string()).collect();
            rec.push(self.y[k].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[k]).collect()
    }

    /// Population variance of the target.
    pub fn y_variance(&self) -> f64 {
        let n = self.y.len() as f64;
        let mean = self.y.iter().sum::<f64>() / n;
        self.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&k| c[k]).collect())
            .collect();
        let y = rows.iter().map(|&k| self.y[k]).collect();
        Self::new(columns, y, self.names.clone(), self.target_name.clone())
    }
}

/// Input columns (and the target, when present) of a query file.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl Query {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads a CSV with a header row. Columns named in `inputs` are used
    /// when all of them are present; otherwise the first `inputs.len()`
    /// columns other than `target`.
    pub fn read_csv(path: &Path, inputs: &[String], target: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let t = headers.iter().position(|h| h == target);
        let picked: Vec<usize> = if inputs.iter().all(|n| headers.contains(n)) {
            inputs
                .iter()
                .map(|n| headers.iter().position(|h| h == n).unwrap())
                .collect()
        } else {
            (0..headers.len())
                .filter(|j| Some(*j) != t)
                .take(inputs.len())
                .collect()
        };
        if picked.len() != inputs.len() {
            return Err(Error::Dataset(format!(
                "{} has {} input columns, models take {}",
                path.display(),
                picked.len(),
                inputs.len()
            )));
        }
        let mut columns = vec![Vec::new(); picked.len()];
        let mut y = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let num = |j: usize| -> Result<f64> {
                let field = record.get(j).unwrap_or("").trim();
                field
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| {
                        Error::Dataset(format!(
                            "{}: row {}: column `{}` is not a finite number: `{field}`",
                            path.display(),
                            row + 2,
                            headers[j]
                        ))
                    })
            };
            for (c, &j) in columns.iter_mut().zip(&picked) {
                c.push(num(j)?);
            }
            if let Some(t) = t {
                y.push(num(t)?);
            }
        }
        if columns[0].is_empty() {
            return Err(Error::Empty("query file has no rows"));
        }
        Ok(Query {
            names: picked.iter().map(|&j| headers[j].clone()).collect(),
            columns,
            y: t.map(|_| y),
        })
    }
}
