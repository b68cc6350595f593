//! Observation matrices.

use crate::error::{Error, Result};

/// `n x m` matrix of observations stored row-major; row `i` is `X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    m: usize,
}

impl Sample {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InsufficientSample { n: 0, required: 1 });
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::Dimension("observations must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "row {i} has {} coordinates, expected {m}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(data, m)
    }

    /// Scalar observations (`m = 1`).
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_row_major(values.to_vec(), 1)
    }

    pub fn from_row_major(data: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || data.is_empty() || !data.len().is_multiple_of(m) {
            return Err(Error::Dimension(format!(
                "cannot shape {} values into rows of width {m}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample entry {} (row {}) is not finite",
                i,
                i / m
            )));
        }
        let n = data.len() / m;
        Ok(Sample { data, n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Sample standard deviation (n - 1 denominator) of coordinate `j`.
    pub fn std_dev(&self, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let col = self.column(j);
        let mean = col.iter().sum::<f64>() / self.n as f64;
        let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (self.n as f64 - 1.0)).sqrt()
    }

    /// Rows reordered by `perm` (`perm[i]` is the source row of row `i`).
    pub fn permuted(&self, perm: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in perm {
            data.extend_from_slice(self.row(i));
        }
        Sample {
            data,
            n: perm.len(),
            m: self.m,
        }
    }

    /// Keep only the given coordinates.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Sample> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.m) {
            return Err(Error::Dimension(format!(
                "column {c} out of range for dimension {}",
                self.m
            )));
        }
        let mut data = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Sample::from_row_major(data, cols.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Sample::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Sample::from_values(&[1.0, f64::NAN]).is_err());
        assert!(Sample::from_values(&[]).is_err());
    }

    #[test]
    fn std_dev_uses_unbiased_denominator() {
        let s = Sample::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert!((s.std_dev(0) - 1.0).abs() < 1e-15);
    }
}
