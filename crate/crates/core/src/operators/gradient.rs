use super::LinearOperator;
use crate::error::{check_len, Error, Result};

/// Forward-difference gradient on a 1-D or 2-D grid with zero padding:
/// `(∇u)_{j,i} = u_{i+e_j} - u_i`, where a neighbour outside the grid counts
/// as 0 (so the last difference along an axis is `-u_i`).
///
/// The field is stored axis-major: component `j` of pixel `i` sits at
/// `j * n + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gradient {
    dims: Vec<usize>,
}

impl Gradient {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "gradient needs one or two positive dims, got {dims:?}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
        })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    fn n(&self) -> usize {
        self.dims.iter().product()
    }

    /// `(stride, extent)` of each axis in row-major order.
    fn axes(&self) -> Vec<(usize, usize)> {
        match self.dims.as_slice() {
            [n] => vec![(1, *n)],
            [r, c] => vec![(*c, *r), (1, *c)],
            _ => unreachable!(),
        }
    }
}

impl LinearOperator for Gradient {
    fn domain_len(&self) -> usize {
        self.n()
    }

    fn range_len(&self) -> usize {
        self.ndim() * self.n()
    }

    fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        check_len("gradient input", n, u.len())?;
        let mut out = vec![0.0; self.range_len()];
        for (j, (stride, extent)) in self.axes().into_iter().enumerate() {
            let comp = &mut out[j * n..(j + 1) * n];
            for (i, g) in comp.iter_mut().enumerate() {
                let pos = (i / stride) % extent;
                let next = if pos + 1 < extent { u[i + stride] } else { 0.0 };
                *g = next - u[i];
            }
        }
        Ok(out)
    }

    fn adjoint(&self, p: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        check_len("gradient adjoint input", self.range_len(), p.len())?;
        let mut out = vec![0.0; n];
        for (j, (stride, extent)) in self.axes().into_iter().enumerate() {
            let comp = &p[j * n..(j + 1) * n];
            for (i, o) in out.iter_mut().enumerate() {
                let pos = (i / stride) % extent;
                let prev = if pos > 0 { comp[i - stride] } else { 0.0 };
                *o += prev - comp[i];
            }
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "gradient"
    }
}
