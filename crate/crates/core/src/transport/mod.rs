//! Discrete entropic optimal transport.
//!
//! For marginals `μ0 ∈ R^{n0}`, `μ1 ∈ R^{n1}` and cost `C`, the regularized
//! cost is `T_ε(μ0, μ1) = min trace(Cᵀ M) + ε D(M)` over plans with the given
//! marginals, `D(M) = Σ m log m - m + 1`. Optimal plans have the scaling form
//! `M = diag(u0) K diag(u1)` with `K = exp(-C/ε)` and `u_k = exp(λ_k/ε)`.
//!
//! Potentials are stored as `λ`; the scalings are formed when needed because
//! the FFT kernel product works on `u`.

mod cost;
mod kernel;
mod kl;
mod lp;
mod plan;
mod sinkhorn;

pub use cost::{build_cost, CostSpec, GridSpec};
pub use kernel::{KernelKind, KernelOperator};
pub use kl::{algorithm3_iterate, kl_prox_quadratic, ScalingPair};
pub use lp::exact_transport_lp;
pub use plan::{apply_plan, PlanDirection};
pub use sinkhorn::{
    dual_objective, generalized_sinkhorn, omt_prox, primal_value, sinkhorn, transport_cost,
    DualUpdate, HalfStep, IterateView, PointMass, QuadraticPenalty, SinkhornReport,
    SinkhornSettings,
};

/// Dual variables `(λ0, λ1)` of the two marginal constraints.
///
/// Entries of `λ1` may be `-∞` where the second marginal of a plain transport
/// problem vanishes (the scaling is then exactly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
}

impl DualPotentials {
    pub fn zeros(n0: usize, n1: usize) -> Self {
        Self {
            lambda0: vec![0.0; n0],
            lambda1: vec![0.0; n1],
        }
    }

    /// The scalings `(u0, u1) = (exp(λ0/ε), exp(λ1/ε))`.
    pub fn scalings(&self, epsilon: f64) -> crate::Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            scaling(&self.lambda0, epsilon)?,
            scaling(&self.lambda1, epsilon)?,
        ))
    }
}

pub(crate) fn scaling(lambda: &[f64], epsilon: f64) -> crate::Result<Vec<f64>> {
    let mut u = vec![0.0; lambda.len()];
    crate::par::for_each_indexed(&mut u, |i, x| *x = (lambda[i] / epsilon).exp());
    if let Some(i) = u.iter().position(|x| !x.is_finite()) {
        return Err(overflow_error(i));
    }
    Ok(u)
}

pub(crate) fn overflow_error(i: usize) -> crate::Error {
    crate::Error::numerical(format!(
        "scaling exp(lambda/epsilon) overflowed at entry {i}; increase epsilon"
    ))
}

/// `Σ a_i b_i` with the convention `0 · (±∞) = 0`.
pub(crate) fn dot_zero_safe(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == 0.0 || y == 0.0 { 0.0 } else { x * y })
        .sum()
}
