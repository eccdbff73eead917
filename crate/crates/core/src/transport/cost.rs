use crate::error::{Error, Result};

/// A regular grid of mass points: `dims` is the shape (one or two axes,
/// row-major), `spacing` the physical distance between neighbours per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::Config(format!(
                "grid must have one or two axes, got {}",
                dims.len()
            )));
        }
        if dims.len() != spacing.len() {
            return Err(Error::Config("grid dims and spacing differ in length".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("grid dims must be positive: {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::Config(format!(
                "grid spacing must be positive and finite: {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// Square 2-D grid with unit spacing.
    pub fn square(n: usize) -> Self {
        Self::new(vec![n, n], vec![1.0, 1.0]).expect("n > 0")
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape as `(rows, cols)`; a 1-D grid is a single row.
    pub fn shape2(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("validated in GridSpec::new"),
        }
    }

    /// Spacing as `(row_spacing, col_spacing)`.
    pub fn spacing2(&self) -> (f64, f64) {
        match self.spacing.as_slice() {
            [h] => (1.0, *h),
            [hr, hc] => (*hr, *hc),
            _ => unreachable!("validated in GridSpec::new"),
        }
    }

    /// Physical Euclidean length of an index offset `(dr, dc)`.
    pub fn offset_length(&self, dr: isize, dc: isize) -> f64 {
        let (hr, hc) = self.spacing2();
        let (y, x) = (dr as f64 * hr, dc as f64 * hc);
        (y * y + x * x).sqrt()
    }
}

/// The ground cost between the points of the two marginals.
#[derive(Debug, Clone, PartialEq)]
pub enum CostSpec {
    /// Explicit `n0 × n1` matrix, row-major.
    Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    /// Both marginals live on `grid`; `c(x, y) = min(|x - y|, truncation)^power`.
    TranslationInvariant {
        grid: GridSpec,
        power: f64,
        truncation: f64,
    },
}

impl CostSpec {
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::check_len("dense cost matrix", rows * cols, data.len())?;
        if rows == 0 || cols == 0 {
            return Err(Error::Config("cost matrix must be non-empty".into()));
        }
        if let Some(c) = data.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::Config(format!(
                "cost entries must be finite and nonnegative, found {c}"
            )));
        }
        Ok(CostSpec::Dense { rows, cols, data })
    }

    /// Truncated powered Euclidean cost on a grid.
    pub fn translation_invariant(grid: GridSpec, power: f64, truncation: f64) -> Result<Self> {
        if !(truncation > 0.0) {
            return Err(Error::Config(format!(
                "cost truncation must be positive, got {truncation}"
            )));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::Config(format!(
                "ground metric power must be positive, got {power}"
            )));
        }
        let grid = GridSpec::new(grid.dims, grid.spacing)?;
        Ok(CostSpec::TranslationInvariant {
            grid,
            power,
            truncation,
        })
    }

    pub fn n0(&self) -> usize {
        match self {
            CostSpec::Dense { rows, .. } => *rows,
            CostSpec::TranslationInvariant { grid, .. } => grid.len(),
        }
    }

    pub fn n1(&self) -> usize {
        match self {
            CostSpec::Dense { cols, .. } => *cols,
            CostSpec::TranslationInvariant { grid, .. } => grid.len(),
        }
    }

    /// Cost between point `i` of the first marginal and point `j` of the second.
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        match self {
            CostSpec::Dense { cols, data, .. } => data[i * cols + j],
            CostSpec::TranslationInvariant { grid, .. } => {
                let (_, nc) = grid.shape2();
                let (ri, ci) = ((i / nc) as isize, (i % nc) as isize);
                let (rj, cj) = ((j / nc) as isize, (j % nc) as isize);
                self.offset_cost(rj - ri, cj - ci)
            }
        }
    }

    /// Cost as a function of the index offset (translation-invariant only;
    /// dense costs return NaN).
    pub fn offset_cost(&self, dr: isize, dc: isize) -> f64 {
        match self {
            CostSpec::TranslationInvariant {
                grid,
                power,
                truncation,
            } => grid.offset_length(dr, dc).min(*truncation).powf(*power),
            CostSpec::Dense { .. } => f64::NAN,
        }
    }

    /// Largest cost entry.
    pub fn max_cost(&self) -> f64 {
        match self {
            CostSpec::Dense { data, .. } => data.iter().cloned().fold(0.0, f64::max),
            CostSpec::TranslationInvariant { grid, .. } => {
                let (nr, nc) = grid.shape2();
                self.offset_cost(nr as isize - 1, nc as isize - 1)
            }
        }
    }
}

/// Builds the grid cost `min(|x_i - x_j|, truncation)^power`.
pub fn build_cost(grid: GridSpec, power: f64, truncation: f64) -> Result<CostSpec> {
    CostSpec::translation_invariant(grid, power, truncation)
}
