//! Products with the implicit transport plan `M = diag(u0) K diag(u1)`.

use super::{DualPotentials, KernelOperator};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanDirection {
    /// `Mᵀ v` for `v` on the first marginal's points: where the mass of `v`
    /// is sent.
    Forward,
    /// `M v` for `v` on the second marginal's points.
    Transpose,
}

/// Applies the plan defined by `pot` to `v` without forming `M`.
///
/// With `v` the indicator of a region of the prior, the forward product is
/// the part of the transported density that originates in that region.
pub fn apply_plan(
    kernel: &KernelOperator,
    pot: &DualPotentials,
    v: &[f64],
    direction: PlanDirection,
) -> Result<Vec<f64>> {
    check_len("lambda0", kernel.n0(), pot.lambda0.len())?;
    check_len("lambda1", kernel.n1(), pot.lambda1.len())?;
    let (u0, u1) = pot.scalings(kernel.epsilon())?;
    let (inner, outer, transpose) = match direction {
        PlanDirection::Forward => (&u0, &u1, true),
        PlanDirection::Transpose => (&u1, &u0, false),
    };
    check_len("plan input", inner.len(), v.len())?;
    let w: Vec<f64> = inner.iter().zip(v).map(|(a, b)| a * b).collect();
    let kw = if v.iter().all(|&x| x >= 0.0) {
        kernel.apply_nonneg(&w, transpose)?
    } else {
        kernel.apply(&w, transpose)?
    };
    Ok(outer.iter().zip(&kw).map(|(a, b)| a * b).collect())
}
