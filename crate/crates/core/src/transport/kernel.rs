//! The Gibbs kernel `K = exp(-C/ε)` and its products.
//!
//! Dense costs keep `K`, `Kᵀ` and `C⊙K` as matrices. Translation-invariant
//! costs on a grid never form a matrix: the product is a linear convolution
//! with the stencil `k(δ) = exp(-c(δ)/ε)`, computed by zero-embedding into a
//! grid of at least `2·dim - 1` points per axis and multiplying spectra.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::cost::CostSpec;
use crate::error::{check_len, Error, Result};
use crate::par;

/// Relative size of negative FFT round-off that is silently clamped.
const NEGATIVE_ROUNDOFF: f64 = 1e-12;

#[derive(Clone)]
pub struct KernelOperator {
    cost: CostSpec,
    epsilon: f64,
    /// Smallest kernel entry, `exp(-max c / ε)`.
    min_entry: f64,
    repr: Repr,
}

#[derive(Clone)]
enum Repr {
    Dense {
        k: Vec<f64>,
        kt: Vec<f64>,
        ck: Vec<f64>,
        ckt: Vec<f64>,
    },
    Fft {
        conv: Arc<FftConvolution>,
        kernel_hat: Arc<Vec<Complex<f64>>>,
        cost_kernel_hat: Arc<Vec<Complex<f64>>>,
    },
}

/// Which kernel a product uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `K = exp(-C/ε)`
    Gibbs,
    /// `C ⊙ K`, used for `trace(Cᵀ M)`.
    CostWeighted,
}

impl std::fmt::Debug for KernelOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelOperator")
            .field("n0", &self.n0())
            .field("n1", &self.n1())
            .field("epsilon", &self.epsilon)
            .field("fft", &self.is_fft())
            .finish()
    }
}

impl KernelOperator {
    /// Builds the kernel. Translation-invariant costs use the FFT path.
    pub fn new(cost: CostSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        let min_entry = (-cost.max_cost() / epsilon).exp();
        let repr = match &cost {
            CostSpec::Dense { rows, cols, data } => {
                let (rows, cols) = (*rows, *cols);
                let k: Vec<f64> = data.iter().map(|c| (-c / epsilon).exp()).collect();
                let ck: Vec<f64> = data.iter().zip(&k).map(|(c, k)| c * k).collect();
                let kt = transpose(&k, rows, cols);
                let ckt = transpose(&ck, rows, cols);
                Repr::Dense { k, kt, ck, ckt }
            }
            CostSpec::TranslationInvariant { grid, .. } => {
                let (nr, nc) = grid.shape2();
                let conv = FftConvolution::new(nr, nc);
                let stencil = |dr: isize, dc: isize| cost.offset_cost(dr, dc);
                let kernel_hat = conv.spectrum(|dr, dc| (-stencil(dr, dc) / epsilon).exp());
                let cost_kernel_hat = conv.spectrum(|dr, dc| {
                    let c = stencil(dr, dc);
                    c * (-c / epsilon).exp()
                });
                Repr::Fft {
                    conv: Arc::new(conv),
                    kernel_hat: Arc::new(kernel_hat),
                    cost_kernel_hat: Arc::new(cost_kernel_hat),
                }
            }
        };
        Ok(Self {
            cost,
            epsilon,
            min_entry,
            repr,
        })
    }

    /// Same as [`KernelOperator::new`] but a translation-invariant cost is
    /// materialized as a dense matrix. Used to cross-check the FFT path.
    pub fn new_dense(cost: &CostSpec, epsilon: f64) -> Result<Self> {
        let (n0, n1) = (cost.n0(), cost.n1());
        let mut data = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                data[i * n1 + j] = cost.cost(i, j);
            }
        }
        Self::new(CostSpec::dense(n0, n1, data)?, epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn n0(&self) -> usize {
        self.cost.n0()
    }

    pub fn n1(&self) -> usize {
        self.cost.n1()
    }

    pub fn is_fft(&self) -> bool {
        matches!(self.repr, Repr::Fft { .. })
    }

    /// Smallest entry of `K`.
    pub fn min_entry(&self) -> f64 {
        self.min_entry
    }

    /// `K v` (or `Kᵀ v` when `transpose`), for arbitrary real `v`.
    pub fn apply(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.product(KernelKind::Gibbs, v, transpose)
    }

    /// Product with either kernel, no sign handling.
    pub fn product(&self, kind: KernelKind, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let (n_in, n_out) = if transpose {
            (self.n0(), self.n1())
        } else {
            (self.n1(), self.n0())
        };
        check_len("kernel input", n_in, v.len())?;
        match &self.repr {
            Repr::Dense { k, kt, ck, ckt } => {
                let m = match (kind, transpose) {
                    (KernelKind::Gibbs, false) => k,
                    (KernelKind::Gibbs, true) => kt,
                    (KernelKind::CostWeighted, false) => ck,
                    (KernelKind::CostWeighted, true) => ckt,
                };
                Ok(dense_matvec(m, n_out, n_in, v))
            }
            Repr::Fft {
                conv,
                kernel_hat,
                cost_kernel_hat,
            } => {
                // The stencil is even in every axis, so K and C⊙K are symmetric.
                let hat = match kind {
                    KernelKind::Gibbs => kernel_hat,
                    KernelKind::CostWeighted => cost_kernel_hat,
                };
                Ok(conv.convolve(v, hat))
            }
        }
    }

    /// `K v` for entrywise nonnegative `v`, as used inside the Sinkhorn loops.
    ///
    /// FFT round-off can produce tiny negative (or too small) entries where the
    /// exact product is minute. Entries are raised to the certified lower bound
    /// `min(K)·Σv`; a negative entry larger than `1e-12·‖Kv‖∞` in magnitude
    /// is reported as a numerical error.
    pub fn apply_nonneg(&self, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        self.product_nonneg(KernelKind::Gibbs, v, transpose)
    }

    pub fn product_nonneg(&self, kind: KernelKind, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let mut out = self.product(kind, v, transpose)?;
        if !self.is_fft() {
            return Ok(out);
        }
        let scale = crate::norm_inf(&out);
        if !scale.is_finite() {
            return Err(Error::numerical(
                "kernel product overflowed; increase epsilon",
            ));
        }
        let floor = match kind {
            KernelKind::Gibbs => self.min_entry * v.iter().sum::<f64>(),
            KernelKind::CostWeighted => 0.0,
        };
        let mut clamped = 0usize;
        for (i, o) in out.iter_mut().enumerate() {
            if *o < floor {
                if *o < -NEGATIVE_ROUNDOFF * scale {
                    return Err(Error::numerical(format!(
                        "kernel product entry {i} is {o:e}, below round-off level of {scale:e}"
                    )));
                }
                *o = floor;
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::trace!("clamped {clamped} kernel product entries to {floor:e}");
        }
        Ok(out)
    }

    /// Dense copy of `K` (row-major, `n0 × n1`). Intended for small problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let (n0, n1) = (self.n0(), self.n1());
        let mut k = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                k[i * n1 + j] = (-self.cost.cost(i, j) / self.epsilon).exp();
            }
        }
        k
    }
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = m[i * cols + j];
        }
    }
    t
}

fn dense_matvec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    par::for_each_indexed(&mut out, |i, o| {
        *o = crate::dot(&m[i * cols..(i + 1) * cols], v);
    });
    out
}

/// Linear 2-D convolution of an `nr × nc` image with an even stencil via a
/// zero-padded circular convolution.
pub(crate) struct FftConvolution {
    nr: usize,
    nc: usize,
    pr: usize,
    pc: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Padded length: at least `2n - 1`, rounded up to the even `2n`.
fn padded_len(n: usize) -> usize {
    if n == 1 {
        1
    } else {
        2 * n
    }
}

impl FftConvolution {
    pub(crate) fn new(nr: usize, nc: usize) -> Self {
        let (pr, pc) = (padded_len(nr), padded_len(nc));
        let mut planner = FftPlanner::new();
        Self {
            nr,
            nc,
            pr,
            pc,
            row_fwd: planner.plan_fft_forward(pc),
            row_inv: planner.plan_fft_inverse(pc),
            col_fwd: planner.plan_fft_forward(pr),
            col_inv: planner.plan_fft_inverse(pr),
        }
    }

    /// Spectrum of the circularly embedded stencil, stored column-major
    /// (`pc` columns of length `pr`) to match [`FftConvolution::convolve`].
    pub(crate) fn spectrum(&self, stencil: impl Fn(isize, isize) -> f64) -> Vec<Complex<f64>> {
        let (pr, pc) = (self.pr, self.pc);
        let mut buf = vec![Complex::new(0.0, 0.0); pr * pc];
        let (mr, mc) = (self.nr as isize, self.nc as isize);
        for dr in -(mr - 1)..mr {
            for dc in -(mc - 1)..mc {
                let r = dr.rem_euclid(pr as isize) as usize;
                let c = dc.rem_euclid(pc as isize) as usize;
                buf[r * pc + c] = Complex::new(stencil(dr, dc), 0.0);
            }
        }
        self.row_fwd.process(&mut buf);
        let mut cols = transpose_complex(&buf, pr, pc);
        if pr > 1 {
            self.col_fwd.process(&mut cols);
        }
        cols
    }

    pub(crate) fn convolve(&self, v: &[f64], hat: &[Complex<f64>]) -> Vec<f64> {
        let (nr, nc, pr, pc) = (self.nr, self.nc, self.pr, self.pc);
        let threads = par::current_num_threads().max(1);

        // Only the first `nr` padded rows carry data.
        let mut rows = vec![Complex::new(0.0, 0.0); nr * pc];
        for r in 0..nr {
            for c in 0..nc {
                rows[r * pc + c] = Complex::new(v[r * nc + c], 0.0);
            }
        }
        let per_chunk = nr.div_ceil(threads).max(1) * pc;
        par::for_each_chunk(&mut rows, per_chunk, |_, chunk| self.row_fwd.process(chunk));

        // Columns: transpose into `pc` contiguous columns of length `pr`.
        let mut cols = vec![Complex::new(0.0, 0.0); pc * pr];
        par::for_each_chunk(&mut cols, pr, |c, col| {
            for r in 0..nr {
                col[r] = rows[r * pc + c];
            }
        });
        if pr > 1 {
            let per_chunk = pc.div_ceil(threads).max(1) * pr;
            par::for_each_chunk(&mut cols, per_chunk, |ci, chunk| {
                self.col_fwd.process(chunk);
                let base = ci * per_chunk;
                for (k, x) in chunk.iter_mut().enumerate() {
                    *x *= hat[base + k];
                }
                self.col_inv.process(chunk);
            });
        } else {
            for (x, h) in cols.iter_mut().zip(hat) {
                *x *= *h;
            }
        }

        // Back to rows, again only the first `nr`.
        par::for_each_chunk(&mut rows, pc, |r, row| {
            for (c, x) in row.iter_mut().enumerate() {
                *x = cols[c * pr + r];
            }
        });
        let per_chunk = nr.div_ceil(threads).max(1) * pc;
        par::for_each_chunk(&mut rows, per_chunk, |_, chunk| self.row_inv.process(chunk));

        let scale = 1.0 / (pr * pc) as f64;
        let mut out = vec![0.0; nr * nc];
        for r in 0..nr {
            for c in 0..nc {
                out[r * nc + c] = rows[r * pc + c].re * scale;
            }
        }
        out
    }
}

fn transpose_complex(m: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut t = vec![Complex::new(0.0, 0.0); m.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = m[i * cols + j];
        }
    }
    t
}
