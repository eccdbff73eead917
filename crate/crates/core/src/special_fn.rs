//! The Wright omega function on the real line.
//!
//! `ω(x)` is the unique positive `w` with `w + ln w = x`, equivalently
//! `ω(x) = W₀(eˣ)`. It closes the dual update of the quadratic data term in
//! the generalized Sinkhorn iteration.

use crate::error::{Error, Result};
use crate::par;

/// Numerical controls for [`wright_omega`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaEvalPolicy {
    /// Accepted residual `|w + ln w - x| <= abs_tol * max(1, |x|)`.
    pub abs_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for OmegaEvalPolicy {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            max_newton_iters: 50,
        }
    }
}

impl OmegaEvalPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_newton_iters < 1 {
            return Err(Error::Config(format!(
                "omega policy needs abs_tol > 0 and max_newton_iters >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Evaluates `ω(x)` by the fourth-order Fritsch–Shafer–Crowley iteration
/// on `w + ln w = x`, started from series or asymptotic approximations.
///
/// When `eˣ` is subnormal or zero the function returns `eˣ` itself: there
/// `ω(x) = eˣ·(1 - O(eˣ))` is exact to working precision.
pub fn wright_omega(x: f64, policy: &OmegaEvalPolicy) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("wright_omega of non-finite value {x}")));
    }
    let ex = x.exp();
    if ex < f64::MIN_POSITIVE {
        return Ok(ex);
    }
    let tol = policy.abs_tol * x.abs().max(1.0);
    let mut w = initial_guess(x, ex);
    for _ in 0..policy.max_newton_iters {
        let r = x - w - w.ln();
        let wp1 = 1.0 + w;
        let t = wp1 * (wp1 + 2.0 * r / 3.0);
        let next = w * (1.0 + r / wp1 * (t - 0.5 * r) / (t - r));
        // The step error is O(r⁴), so a small residual means the new iterate
        // is already at working precision.
        let done = r.abs() <= 1e-5 * wp1 || (next - w).abs() <= 4.0 * f64::EPSILON * next;
        w = next;
        if done {
            break;
        }
    }
    let residual = w + w.ln() - x;
    if w > 0.0 && residual.abs() <= tol {
        Ok(w)
    } else {
        Err(Error::numerical(format!(
            "wright_omega({x}) did not converge: last iterate {w}, residual {residual:e}"
        )))
    }
}

fn initial_guess(x: f64, ex: f64) -> f64 {
    if x <= -2.0 {
        // W(z) = z - z² + 3z³/2 - 8z⁴/3 + ... with z = eˣ.
        ex * (1.0 - ex * (1.0 - ex * (1.5 - ex * 8.0 / 3.0)))
    } else if x < 3.0 {
        // Taylor expansion about ω(1) = 1.
        let y = x - 1.0;
        1.0 + y * (0.5 + y * (1.0 / 16.0 + y * (-1.0 / 192.0 + y * (-1.0 / 3072.0 + y * 13.0 / 61440.0))))
    } else {
        let l = x.ln();
        x - l + l / x + l * (l - 2.0) / (2.0 * x * x)
    }
}

/// Entrywise [`wright_omega`]. Errors name the offending index.
pub fn wright_omega_elementwise(xs: &[f64], policy: &OmegaEvalPolicy) -> Result<Vec<f64>> {
    let mut out = vec![0.0; xs.len()];
    wright_omega_into(xs, &mut out, policy)?;
    Ok(out)
}

/// Writes `ω(xs[i])` into `out[i]`.
pub fn wright_omega_into(xs: &[f64], out: &mut [f64], policy: &OmegaEvalPolicy) -> Result<()> {
    crate::error::check_len("wright_omega output", xs.len(), out.len())?;
    par::for_each_indexed(out, |i, o| {
        *o = wright_omega(xs[i], policy).unwrap_or(f64::NAN);
    });
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        // Re-run the scalar to surface its error with the index attached.
        return match wright_omega(xs[i], policy) {
            Err(Error::Domain(m)) => Err(Error::Domain(format!("entry {i}: {m}"))),
            Err(Error::Numerical { message, .. }) => {
                Err(Error::numerical(format!("entry {i}: {message}")))
            }
            Err(e) => Err(e),
            Ok(_) => Err(Error::numerical(format!("entry {i}: omega evaluation failed"))),
        };
    }
    Ok(())
}
