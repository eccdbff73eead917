//! Filtered backprojection for the parallel-beam geometry.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_len, Error, Result};
use crate::operators::{LinearOperator, RayTransform};

/// Ramp filter times a Hann window that reaches zero at `filter_param`
/// times the Nyquist frequency, applied per angle, followed by
/// backprojection with the matched adjoint scaled to approximate the
/// continuous inversion formula.
pub fn fbp(sinogram: &[f64], ray: &RayTransform, filter_param: f64) -> Result<Vec<f64>> {
    let geom = ray.geometry();
    check_len("fbp sinogram", geom.sinogram_len(), sinogram.len())?;
    if !(filter_param > 0.0 && filter_param <= 1.0) {
        return Err(Error::Config(format!(
            "filter parameter must lie in (0, 1], got {filter_param}"
        )));
    }
    let (na, nl) = (geom.n_angles, geom.n_lines);
    let ds = geom.line_spacing();
    let len = (2 * nl).next_power_of_two();
    let response = filter_response(len, ds, filter_param);

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf = vec![Complex::new(0.0, 0.0); na * len];
    for k in 0..na {
        for j in 0..nl {
            buf[k * len + j] = Complex::new(sinogram[k * nl + j], 0.0);
        }
    }
    fwd.process(&mut buf);
    for row in buf.chunks_mut(len) {
        for (x, h) in row.iter_mut().zip(&response) {
            *x *= h;
        }
    }
    inv.process(&mut buf);
    let mut filtered = vec![0.0; na * nl];
    for k in 0..na {
        for j in 0..nl {
            // Linear convolution with the spatial ramp times Δs.
            filtered[k * nl + j] = buf[k * len + j].re * ds / len as f64;
        }
    }
    let h = geom.pixel_size;
    let scale = geom.angle_step() * ds / (h * h);
    let mut img = ray.adjoint(&filtered)?;
    img.iter_mut().for_each(|v| *v *= scale);
    Ok(img)
}

/// DFT of the band-limited spatial ramp kernel (Ram-Lak), windowed by Hann.
fn filter_response(len: usize, ds: f64, cutoff: f64) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    let pi2 = std::f64::consts::PI.powi(2);
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = if i <= len / 2 { i as i64 } else { i as i64 - len as i64 };
        let v = if n == 0 {
            1.0 / (4.0 * ds * ds)
        } else if n % 2 != 0 {
            -1.0 / (pi2 * (n * n) as f64 * ds * ds)
        } else {
            0.0
        };
        *k = Complex::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    (0..len)
        .map(|i| {
            // Frequency as a fraction of Nyquist.
            let f = (if i <= len / 2 { i } else { len - i }) as f64 / (len / 2) as f64;
            let window = if f <= cutoff {
                0.5 * (1.0 + (std::f64::consts::PI * f / cutoff).cos())
            } else {
                0.0
            };
            kernel[i].re * window
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::ParallelGeometry;
    use std::f64::consts::PI;

    fn blob(n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let (x, y) = (c as f64 + 0.5 - n as f64 / 2.0 - 4.0, r as f64 + 0.5 - n as f64 / 2.0 + 3.0);
                u[r * n + c] = (-(x * x + 0.5 * y * y) / 40.0).exp();
            }
        }
        u
    }

    fn ncc(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma).powi(2);
            db += (y - mb).powi(2);
        }
        num / (da * db).sqrt()
    }

    #[test]
    fn zero_and_linearity() {
        let ray = RayTransform::new(ParallelGeometry::new(16, 16, 8, (0.0, PI), 23).unwrap()).unwrap();
        assert!(fbp(&vec![0.0; 8 * 23], &ray, 0.7).unwrap().iter().all(|&v| v == 0.0));
        let b1: Vec<f64> = (0..184).map(|i| (i as f64 * 0.37).sin()).collect();
        let b2: Vec<f64> = (0..184).map(|i| (i as f64 * 0.11).cos()).collect();
        let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        let (f1, f2, fs) = (
            fbp(&b1, &ray, 0.7).unwrap(),
            fbp(&b2, &ray, 0.7).unwrap(),
            fbp(&sum, &ray, 0.7).unwrap(),
        );
        for i in 0..256 {
            assert!((f1[i] + f2[i] - fs[i]).abs() <= 1e-10 * (1.0 + fs[i].abs()));
        }
    }

    #[test]
    fn full_angle_reconstruction_of_smooth_blob() {
        let n = 48;
        let ray = RayTransform::new(ParallelGeometry::new(n, n, 90, (0.0, PI), 101).unwrap()).unwrap();
        let u = blob(n);
        let rec = fbp(&ray.apply(&u).unwrap(), &ray, 1.0).unwrap();
        assert!(ncc(&rec, &u) >= 0.9);
        // Amplitude is reproduced, not just the shape.
        let peak = rec.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 0.1, "peak {peak}");
    }

    #[test]
    fn rejects_bad_filter() {
        let ray = RayTransform::new(ParallelGeometry::new(16, 16, 4, (0.0, PI), 9).unwrap()).unwrap();
        assert!(fbp(&vec![0.0; 36], &ray, 0.0).is_err());
        assert!(fbp(&vec![0.0; 36], &ray, 1.5).is_err());
    }
}
