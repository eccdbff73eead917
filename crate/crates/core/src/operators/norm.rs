use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LinearOperator;
use crate::error::{Error, Result};

/// Estimates `‖L‖` by power iteration on `LᵀL` from a seeded Gaussian start.
///
/// Returns `‖L x‖` for the last normalized iterate `x`; the sequence of such
/// values is nondecreasing, so the estimate approaches the norm from below.
pub fn power_iteration_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::Config("power iteration needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..op.domain_len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let nx = crate::norm2(&x);
    if nx == 0.0 {
        return Ok(0.0);
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let y = op.apply(&x)?;
        estimate = crate::norm2(&y);
        let z = op.adjoint(&y)?;
        let nz = crate::norm2(&z);
        if nz == 0.0 {
            log::warn!("power iteration hit the null space of {}; norm estimate 0", op.name());
            return Ok(0.0);
        }
        x = z.into_iter().map(|v| v / nz).collect();
    }
    Ok(estimate)
}
