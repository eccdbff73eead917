use super::LinearOperator;
use crate::error::{check_len, Error, Result};
use crate::par;

/// Parallel-beam scan geometry.
///
/// The image has `rows × cols` square pixels of width `pixel_size`, centred
/// at the origin; `x` runs along columns and `y` along rows. Angle `k` is the
/// midpoint of the `k`-th of `n_angles` equal cells of `angle_range`, and line
/// `j` sits at signed offset `(j + 1/2 - n_lines/2) · extent / n_lines` from
/// the origin along the normal `(cos θ, sin θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelGeometry {
    pub n_angles: usize,
    pub angle_range: (f64, f64),
    pub n_lines: usize,
    pub detector_extent: f64,
    pub rows: usize,
    pub cols: usize,
    pub pixel_size: f64,
}

impl ParallelGeometry {
    /// Geometry for a `rows × cols` image with unit pixels and a detector
    /// spanning the image diagonal.
    pub fn new(rows: usize, cols: usize, n_angles: usize, angle_range: (f64, f64), n_lines: usize) -> Result<Self> {
        let g = Self {
            n_angles,
            angle_range,
            n_lines,
            detector_extent: ((rows * rows + cols * cols) as f64).sqrt(),
            rows,
            cols,
            pixel_size: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("geometry image grid must be non-empty".into()));
        }
        if self.n_angles == 0 || self.n_lines == 0 {
            return Err(Error::Config(
                "geometry needs at least one angle and one line".into(),
            ));
        }
        let (a, b) = self.angle_range;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!(
                "angle range must be increasing, got [{a}, {b}]"
            )));
        }
        if !(self.detector_extent > 0.0) || !(self.pixel_size > 0.0) {
            return Err(Error::Config(
                "detector extent and pixel size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn angles(&self) -> Vec<f64> {
        let (a, b) = self.angle_range;
        let d = (b - a) / self.n_angles as f64;
        (0..self.n_angles).map(|k| a + (k as f64 + 0.5) * d).collect()
    }

    pub fn angle_step(&self) -> f64 {
        (self.angle_range.1 - self.angle_range.0) / self.n_angles as f64
    }

    pub fn line_spacing(&self) -> f64 {
        self.detector_extent / self.n_lines as f64
    }

    pub fn offsets(&self) -> Vec<f64> {
        let ds = self.line_spacing();
        (0..self.n_lines)
            .map(|j| (j as f64 + 0.5 - self.n_lines as f64 / 2.0) * ds)
            .collect()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn sinogram_len(&self) -> usize {
        self.n_angles * self.n_lines
    }
}

/// Line integrals of the bilinear interpolant of an image, sampled every half
/// pixel along each line (Joseph-style). The sinogram is angle-major:
/// entry `k * n_lines + j`.
///
/// Small geometries store the weights once as a sparse matrix together with
/// its transpose; larger ones recompute them on every call.
#[derive(Debug, Clone)]
pub struct RayTransform {
    geom: ParallelGeometry,
    angles: Vec<(f64, f64)>,
    offsets: Vec<f64>,
    matrix: Option<SparseWeights>,
}

/// Compressed rows of the ray matrix plus the compressed transpose.
#[derive(Debug, Clone)]
struct SparseWeights {
    row_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    row_val: Vec<f64>,
    col_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    col_val: Vec<f64>,
}

/// Stored weights are capped at this many nonzeros (about 200 MB).
const MAX_STORED_NNZ: usize = 8_000_000;

impl RayTransform {
    /// Builds the transform, storing the weight matrix when its estimated
    /// size stays below a fixed memory budget.
    pub fn new(geom: ParallelGeometry) -> Result<Self> {
        let mut t = Self::matrix_free(geom)?;
        let g = &t.geom;
        // Each line touches at most two pixels per half-pixel sample across
        // the diagonal, with up to four weights per sample before merging.
        let diag = ((g.rows * g.rows + g.cols * g.cols) as f64).sqrt();
        let estimate = g.sinogram_len() as f64 * 3.0 * diag;
        if estimate <= MAX_STORED_NNZ as f64 && g.image_len() <= u32::MAX as usize {
            t.matrix = Some(t.assemble());
        }
        Ok(t)
    }

    /// Builds the transform without storing weights.
    pub fn matrix_free(geom: ParallelGeometry) -> Result<Self> {
        geom.validate()?;
        let angles = geom.angles().into_iter().map(|t| (t.cos(), t.sin())).collect();
        let offsets = geom.offsets();
        Ok(Self {
            geom,
            angles,
            offsets,
            matrix: None,
        })
    }

    pub fn geometry(&self) -> &ParallelGeometry {
        &self.geom
    }

    pub fn is_stored(&self) -> bool {
        self.matrix.is_some()
    }

    fn assemble(&self) -> SparseWeights {
        let (na, nl, n) = (self.geom.n_angles, self.geom.n_lines, self.geom.image_len());
        let rows: Vec<Vec<(u32, f64)>> = par::map_range(na * nl, |r| {
            let mut entries: Vec<(u32, f64)> = Vec::new();
            self.for_each_weight(r / nl, r % nl, |p, w| entries.push((p as u32, w)));
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
            for (p, w) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == p => last.1 += w,
                    _ => merged.push((p, w)),
                }
            }
            merged
        });
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut row_val = Vec::with_capacity(nnz);
        let mut col_count = vec![0usize; n + 1];
        row_ptr.push(0);
        for row in &rows {
            for &(p, w) in row {
                row_idx.push(p);
                row_val.push(w);
                col_count[p as usize + 1] += 1;
            }
            row_ptr.push(row_idx.len());
        }
        for p in 0..n {
            col_count[p + 1] += col_count[p];
        }
        let col_ptr = col_count.clone();
        let mut fill = col_count;
        let mut col_idx = vec![0u32; nnz];
        let mut col_val = vec![0.0; nnz];
        for (r, row) in rows.iter().enumerate() {
            for &(p, w) in row {
                let slot = &mut fill[p as usize];
                col_idx[*slot] = r as u32;
                col_val[*slot] = w;
                *slot += 1;
            }
        }
        SparseWeights {
            row_ptr,
            row_idx,
            row_val,
            col_ptr,
            col_idx,
            col_val,
        }
    }

    /// Calls `f(pixel, weight)` for every interpolation weight of one line.
    /// Shared by the forward map and the adjoint so they are exact transposes.
    fn for_each_weight(&self, angle: usize, line: usize, mut f: impl FnMut(usize, f64)) {
        let g = &self.geom;
        let h = g.pixel_size;
        let (nr, nc) = (g.rows as f64, g.cols as f64);
        let (c, s) = self.angles[angle];
        let off = self.offsets[line];
        // Point on the line: off·(c, s) + t·(-s, c).
        let step = 0.5 * h;
        let half = 0.5 * (nr * nr + nc * nc).sqrt() * h + h;
        let (x0, y0) = (off * c, off * s);
        // Clip the parameter range to the interpolation support
        // |x| < (cols/2 + 1/2) h, |y| < (rows/2 + 1/2) h.
        let (bx, by) = ((0.5 * nc + 0.5) * h, (0.5 * nr + 0.5) * h);
        let (mut lo, mut hi) = (-half, half);
        for (p0, d, b) in [(x0, -s, bx), (y0, c, by)] {
            if d.abs() < 1e-15 {
                if p0.abs() >= b {
                    return;
                }
            } else {
                let (t1, t2) = ((-b - p0) / d, (b - p0) / d);
                lo = lo.max(t1.min(t2));
                hi = hi.min(t1.max(t2));
            }
        }
        if lo >= hi {
            return;
        }
        // Samples sit on the fixed lattice t_m = -half + (m + 1/2) step.
        let m_lo = ((lo + half) / step - 0.5).floor().max(0.0) as usize;
        let m_hi = ((hi + half) / step - 0.5).ceil().max(0.0) as usize;
        let (rows, cols) = (g.rows as isize, g.cols as isize);
        for m in m_lo..=m_hi {
            let t = -half + (m as f64 + 0.5) * step;
            let (x, y) = (x0 - t * s, y0 + t * c);
            let fc = x / h + 0.5 * nc - 0.5;
            let fr = y / h + 0.5 * nr - 0.5;
            let (c0, r0) = (fc.floor(), fr.floor());
            let (wc, wr) = (fc - c0, fr - r0);
            let (c0, r0) = (c0 as isize, r0 as isize);
            for (dr, wy) in [(0, 1.0 - wr), (1, wr)] {
                let r = r0 + dr;
                if r < 0 || r >= rows || wy == 0.0 {
                    continue;
                }
                for (dc, wx) in [(0, 1.0 - wc), (1, wc)] {
                    let cc = c0 + dc;
                    if cc < 0 || cc >= cols || wx == 0.0 {
                        continue;
                    }
                    f((r * cols + cc) as usize, step * wy * wx);
                }
            }
        }
    }
}

impl LinearOperator for RayTransform {
    fn domain_len(&self) -> usize {
        self.geom.image_len()
    }

    fn range_len(&self) -> usize {
        self.geom.sinogram_len()
    }

    fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("ray transform input", self.domain_len(), u.len())?;
        let nl = self.geom.n_lines;
        let mut out = vec![0.0; self.range_len()];
        if let Some(m) = &self.matrix {
            par::for_each_indexed(&mut out, |r, o| {
                let range = m.row_ptr[r]..m.row_ptr[r + 1];
                *o = m.row_idx[range.clone()]
                    .iter()
                    .zip(&m.row_val[range])
                    .map(|(&p, w)| w * u[p as usize])
                    .sum();
            });
            return Ok(out);
        }
        par::for_each_chunk(&mut out, nl, |k, row| {
            for (j, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                self.for_each_weight(k, j, |p, w| acc += w * u[p]);
                *o = acc;
            }
        });
        Ok(out)
    }

    fn adjoint(&self, sino: &[f64]) -> Result<Vec<f64>> {
        check_len("ray adjoint input", self.range_len(), sino.len())?;
        let (na, nl, n) = (self.geom.n_angles, self.geom.n_lines, self.domain_len());
        if let Some(m) = &self.matrix {
            let mut out = vec![0.0; n];
            par::for_each_indexed(&mut out, |p, o| {
                let range = m.col_ptr[p]..m.col_ptr[p + 1];
                *o = m.col_idx[range.clone()]
                    .iter()
                    .zip(&m.col_val[range])
                    .map(|(&r, w)| w * sino[r as usize])
                    .sum();
            });
            return Ok(out);
        }
        // One buffer per angle, summed in a fixed order so the result does not
        // depend on thread scheduling.
        let mut buffers = vec![0.0; na * n];
        par::for_each_chunk(&mut buffers, n, |k, img| {
            for j in 0..nl {
                let v = sino[k * nl + j];
                if v != 0.0 {
                    self.for_each_weight(k, j, |p, w| img[p] += w * v);
                }
            }
        });
        let mut out = vec![0.0; n];
        for img in buffers.chunks(n) {
            for (o, x) in out.iter_mut().zip(img) {
                *o += x;
            }
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "ray_transform"
    }
}
