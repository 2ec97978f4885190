use crate::error::{Error, Result};

/// Named numeric table; `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Row-major construction. Infinite values are rejected; `NaN` is kept as
    /// "missing".
    pub fn new(names: Vec<String>, rows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * names.len() {
            return Err(Error::shape(
                "FeatureMatrix::new",
                format!("{} values for {rows} rows x {} columns", data.len(), names.len()),
            ));
        }
        if let Some(index) = data.iter().position(|v| v.is_infinite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { names, rows, data })
    }

    /// Columns named `x0, x1, ...`.
    pub fn unnamed(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new((0..cols).map(|c| format!("x{c}")).collect(), rows, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn missing_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_nan()).count()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            rows: indices.len(),
            data,
        }
    }

    /// Reorders/selects columns by name.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::contract(format!("missing feature column {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(FeatureMatrix {
            names: names.to_vec(),
            rows: self.rows,
            data,
        })
    }

    /// Stacks two tables with identical columns.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.names != other.names {
            return Err(Error::shape("vstack", "column names differ"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(FeatureMatrix {
            names: self.names.clone(),
            rows: self.rows + other.rows,
            data,
        })
    }
}
