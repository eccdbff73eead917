//! Analytic phantoms rasterized by point sampling at pixel centres.
//!
//! Images are row-major with row 0 at the top. Pixel `(r, c)` of a `size ×
//! size` image samples the point `x = -1 + (2c + 1)/size`,
//! `y = 1 - (2r + 1)/size` of the square `[-1, 1]²`.

use crate::error::{Error, Result};

/// One ellipse: additive intensity, semi-axes, centre and rotation (degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    const fn new(value: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Self {
            value,
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Shepp–Logan head phantom with the higher-contrast intensities commonly
/// used for display (Toft's modification).
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Sum of ellipse intensities at `(x, y)`.
pub fn ellipse_sum(ellipses: &[Ellipse], x: f64, y: f64) -> f64 {
    ellipses
        .iter()
        .filter(|e| e.contains(x, y))
        .map(|e| e.value)
        .sum()
}

/// Centre of pixel `(r, c)` in `[-1, 1]²`.
pub fn pixel_center(size: usize, r: usize, c: usize) -> (f64, f64) {
    // Written so that mirrored pixels get exactly negated coordinates.
    let n = size as f64;
    (
        (2.0 * c as f64 + 1.0 - n) / n,
        (n - 2.0 * r as f64 - 1.0) / n,
    )
}

fn rasterize(size: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut img = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            let (x, y) = pixel_center(size, r, c);
            img[r * size + c] = f(x, y).max(0.0);
        }
    }
    let max = img.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        img.iter_mut().for_each(|v| *v /= max);
    }
    img
}

fn check_size(size: usize) -> Result<()> {
    if size < 16 {
        return Err(Error::Config(format!("phantom size must be >= 16, got {size}")));
    }
    Ok(())
}

/// The Shepp–Logan phantom on a `size × size` grid, clamped to be
/// nonnegative and scaled to maximum 1.
pub fn shepp_logan(size: usize) -> Result<Vec<f64>> {
    check_size(size)?;
    Ok(rasterize(size, |x, y| ellipse_sum(&SHEPP_LOGAN, x, y)))
}

/// The phantom seen through the smooth coordinate warp
/// `(x, y) ↦ (x + a sin(πy), y + a sin(πx))`, i.e. the image value at a
/// point is the phantom value at the displaced point. Stands in for a prior
/// acquired from a differently deformed object.
pub fn warped_shepp_logan(size: usize, amplitude: f64) -> Result<Vec<f64>> {
    check_size(size)?;
    if !amplitude.is_finite() || amplitude.abs() >= 0.5 {
        return Err(Error::Config(format!(
            "warp amplitude must satisfy |a| < 0.5, got {amplitude}"
        )));
    }
    let pi = std::f64::consts::PI;
    Ok(rasterize(size, |x, y| {
        let (xw, yw) = (x + amplitude * (pi * y).sin(), y + amplitude * (pi * x).sin());
        ellipse_sum(&SHEPP_LOGAN, xw, yw)
    }))
}
