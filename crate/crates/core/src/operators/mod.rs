//! Linear operators with matched adjoints.

mod gradient;
mod norm;
mod ray;

pub use gradient::Gradient;
pub use norm::power_iteration_norm;
pub use ray::{ParallelGeometry, RayTransform};

use crate::error::{check_len, Result};

/// A linear map `L: R^n → R^m` with its exact transpose.
pub trait LinearOperator: Send + Sync {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;

    /// Short label used in logs and manifests.
    fn name(&self) -> &str {
        "operator"
    }
}

/// The identity on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn domain_len(&self) -> usize {
        self.0
    }
    fn range_len(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("identity input", self.0, x.len())?;
        Ok(x.to_vec())
    }
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.apply(y)
    }
    fn name(&self) -> &str {
        "identity"
    }
}

/// An explicit row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("dense operator", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &x) in d.iter().enumerate() {
            data[i * n + i] = x;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    /// Materializes any operator by applying it to the unit vectors.
    pub fn from_operator(op: &dyn LinearOperator) -> Result<Self> {
        let (rows, cols) = (op.range_len(), op.domain_len());
        let mut data = vec![0.0; rows * cols];
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            let col = op.apply(&e)?;
            e[j] = 0.0;
            for i in 0..rows {
                data[i * cols + j] = col[i];
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseOperator {
    fn domain_len(&self) -> usize {
        self.cols
    }
    fn range_len(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense operator input", self.cols, x.len())?;
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| crate::dot(row, x))
            .collect())
    }
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("dense operator adjoint input", self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        Ok(out)
    }
    fn name(&self) -> &str {
        "dense"
    }
}
