use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two axes of a data matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Features, indexed by matrix rows.
    Rows,
    /// Observations, indexed by matrix columns.
    Cols,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Rows => Axis::Cols,
            Axis::Cols => Axis::Rows,
        }
    }

    /// Number of elements along this axis of `z`.
    pub fn len_of(self, z: &Array2<f64>) -> usize {
        match self {
            Axis::Rows => z.nrows(),
            Axis::Cols => z.ncols(),
        }
    }

    /// The vector describing element `i` of this axis (a row or a column).
    pub fn lane(self, z: &Array2<f64>, i: usize) -> ArrayView1<'_, f64> {
        match self {
            Axis::Rows => z.row(i),
            Axis::Cols => z.column(i),
        }
    }
}

/// A dense matrix of features (rows) by observations (columns) with ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    feature_ids: Vec<String>,
    observation_ids: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, feature_ids: Vec<String>, observation_ids: Vec<String>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!(
                "matrix must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if feature_ids.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: feature_ids.len(),
            });
        }
        if observation_ids.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: observation_ids.len(),
            });
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} at row {r}, column {c}"
            )));
        }
        check_unique("feature", &feature_ids)?;
        check_unique("observation", &observation_ids)?;
        Ok(Self {
            values,
            feature_ids,
            observation_ids,
        })
    }

    /// Wraps a bare matrix, generating ids `f0..` and `o0..`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        let feature_ids = (0..rows).map(|i| format!("f{i}")).collect();
        let observation_ids = (0..cols).map(|j| format!("o{j}")).collect();
        Self::new(values, feature_ids, observation_ids)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_observations(&self) -> usize {
        self.values.ncols()
    }

    pub fn ids(&self, axis: Axis) -> &[String] {
        match axis {
            Axis::Rows => &self.feature_ids,
            Axis::Cols => &self.observation_ids,
        }
    }

    /// Standardizes every row to zero mean and unit variance. Constant rows
    /// are centered only.
    pub fn zscore_rows(&self) -> Self {
        let mut values = self.values.clone();
        let n = values.ncols() as f64;
        for mut row in values.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            row.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
        Self {
            values,
            feature_ids: self.feature_ids.clone(),
            observation_ids: self.observation_ids.clone(),
        }
    }

    /// Reorders rows and columns by the given permutations.
    pub fn permuted(&self, row_order: &[usize], col_order: &[usize]) -> Result<Self> {
        let values = permute(&self.values, row_order, col_order)?;
        Ok(Self {
            values,
            feature_ids: row_order.iter().map(|&i| self.feature_ids[i].clone()).collect(),
            observation_ids: col_order.iter().map(|&j| self.observation_ids[j].clone()).collect(),
        })
    }
}

fn check_unique(what: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what} id '{id}'")));
        }
    }
    Ok(())
}

pub(crate) fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// `out[a, b] = z[row_order[a], col_order[b]]`.
pub fn permute(z: &Array2<f64>, row_order: &[usize], col_order: &[usize]) -> Result<Array2<f64>> {
    if !is_permutation(row_order, z.nrows()) || !is_permutation(col_order, z.ncols()) {
        return Err(Error::InvalidInput(
            "orders must be permutations of the matrix axes".into(),
        ));
    }
    Ok(Array2::from_shape_fn((z.nrows(), z.ncols()), |(a, b)| {
        z[[row_order[a], col_order[b]]]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite_and_duplicates() {
        let z = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(DataMatrix::from_values(z).is_err());
        let z = array![[1.0, 2.0], [0.0, 1.0]];
        let err = DataMatrix::new(z, vec!["a".into(), "a".into()], vec!["x".into(), "y".into()]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        let z = Array2::<f64>::zeros((1, 4));
        assert!(DataMatrix::from_values(z).is_err());
    }

    #[test]
    fn zscore_rows_standardizes() {
        let m = DataMatrix::from_values(array![[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]).unwrap();
        let z = m.zscore_rows();
        assert!((z.values()[[0, 0]] + 1.0).abs() < 1e-12);
        assert_eq!(z.values().row(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }
}
