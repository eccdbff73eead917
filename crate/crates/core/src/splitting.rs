//! Douglas–Rachford type primal-dual splitting for
//! `min_z f(z) + Σ_i g_i(L_i z - r_i)`.
//!
//! Each iteration needs one prox of `f`, one conjugate prox per term, and two
//! applications of every `L_i` and `L_iᵀ`. Convergence requires
//! `τ Σ σ_i ‖L_i‖² < 4` and relaxation `λ ∈ (0, 2)`.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::operators::{power_iteration_norm, LinearOperator};
use crate::prox::ProxFunction;

/// Iterations used when an operator norm has to be estimated.
const NORM_ITERS: usize = 100;
const NORM_SEED: u64 = 0x5eed;

/// One term `g(L z - r)`.
pub struct Term {
    pub g: ProxFunction,
    pub op: Arc<dyn LinearOperator>,
    pub shift: Vec<f64>,
    /// `‖L‖`, estimated by power iteration when absent.
    pub norm: Option<f64>,
}

impl Term {
    pub fn new(g: ProxFunction, op: Arc<dyn LinearOperator>, shift: Option<Vec<f64>>) -> Self {
        let shift = shift.unwrap_or_else(|| vec![0.0; op.range_len()]);
        Self {
            g,
            op,
            shift,
            norm: None,
        }
    }

    pub fn with_norm(mut self, norm: f64) -> Self {
        self.norm = Some(norm);
        self
    }

    /// `‖L‖`, estimating and caching it if needed.
    pub fn op_norm(&mut self) -> Result<f64> {
        if let Some(n) = self.norm {
            return Ok(n);
        }
        let n = power_iteration_norm(self.op.as_ref(), NORM_ITERS, NORM_SEED)?;
        self.norm = Some(n);
        Ok(n)
    }
}

impl std::fmt::Debug for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Term")
            .field("g", &self.g.name())
            .field("op", &self.op.name())
            .field("norm", &self.norm)
            .finish()
    }
}

/// `f` and the composite terms.
#[derive(Debug)]
pub struct SplitProblem {
    pub f: ProxFunction,
    pub terms: Vec<Term>,
    /// Length of `z`.
    pub dim: usize,
}

impl SplitProblem {
    pub fn new(f: ProxFunction, terms: Vec<Term>, dim: usize) -> Result<Self> {
        for t in &terms {
            check_len("operator domain", dim, t.op.domain_len())?;
            check_len("term shift", t.op.range_len(), t.shift.len())?;
        }
        if terms.is_empty() {
            return Err(Error::Config("splitting problem needs at least one term".into()));
        }
        Ok(Self { f, terms, dim })
    }

    /// Operator norms of all terms.
    pub fn op_norms(&mut self) -> Result<Vec<f64>> {
        self.terms.iter_mut().map(|t| t.op_norm()).collect()
    }

    /// `f(z) + Σ g_i(L_i z - r_i)` with indicators counted as 0, and the
    /// largest indicator violation.
    pub fn objective(&self, z: &[f64]) -> Result<(f64, f64)> {
        let (value, violation, _) = self.evaluate(z)?;
        Ok((value, violation))
    }

    /// Objective, largest violation and the norms `‖L_i z - r_i‖`.
    fn evaluate(&self, z: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let mut value = self.f.value(z);
        let mut violation = self.f.violation(z);
        let mut norms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut y = t.op.apply(z)?;
            for (a, b) in y.iter_mut().zip(&t.shift) {
                *a -= b;
            }
            value += t.g.value(&y);
            violation = violation.max(t.g.violation(&y));
            norms.push(crate::norm2(&y));
        }
        Ok((value, violation, norms))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitParams {
    pub tau: f64,
    pub sigmas: Vec<f64>,
    /// Constant relaxation `λ ∈ (0, 2)`.
    pub relax: f64,
    pub max_iter: usize,
    /// Stop when the fixed-point residual falls to this value; 0 runs all
    /// `max_iter` iterations.
    pub tol: f64,
}

/// `σ_i = 1 / (τ ‖L_i‖²)`, which makes the step condition value equal the
/// number of terms; more than three terms are rejected.
pub fn default_step_sizes(norms: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    if let Some(n) = norms.iter().find(|n| !(**n > 0.0) || !n.is_finite()) {
        return Err(Error::Config(format!("operator norm must be positive, got {n}")));
    }
    if norms.len() >= 4 {
        return Err(Error::Config(format!(
            "with {} terms the default step rule gives condition value {} >= 4; set sigmas manually",
            norms.len(),
            norms.len()
        )));
    }
    Ok(norms.iter().map(|n| 1.0 / (tau * n * n)).collect())
}

/// `τ Σ σ_i ‖L_i‖²`.
pub fn condition_value(tau: f64, sigmas: &[f64], norms: &[f64]) -> f64 {
    tau * sigmas.iter().zip(norms).map(|(s, n)| s * n * n).sum::<f64>()
}

/// Per-iteration metrics passed to observers and kept in the history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖(x, v)_{n+1} - (x, v)_n‖ / max(1, ‖(x, v)_n‖)`.
    pub fixed_point_residual: f64,
    /// `‖x_{n+1} - x_n‖ / max(1, ‖x_n‖)`.
    pub primal_residual: f64,
    /// Objective at the current prox point (`NaN` when not evaluated).
    pub objective: f64,
    /// Largest indicator violation at the current prox point.
    pub constraint_residual: f64,
    /// `‖L_i z - r_i‖` per term at the current prox point (empty when not
    /// evaluated).
    pub term_residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub solution: Vec<f64>,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub constraint_residual: f64,
}

fn axpy_into(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Runs the splitting iteration from `x = 0`, `v_i = 0`.
///
/// The observer, if any, is called after each iteration with metrics that
/// include the objective at the current prox point (this costs one extra
/// application of every `L_i`). The returned solution is `Prox^τ_f` at the
/// final iterate.
pub fn douglas_rachford_solve(
    problem: &mut SplitProblem,
    params: &SplitParams,
    mut observer: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<SplitResult> {
    let m = problem.terms.len();
    check_len("step sizes", m, params.sigmas.len())?;
    if !(params.tau > 0.0) || params.sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("tau and all sigmas must be positive".into()));
    }
    if !(params.relax > 0.0 && params.relax < 2.0) {
        return Err(Error::Config(format!(
            "relaxation must lie in (0, 2), got {}",
            params.relax
        )));
    }
    if params.max_iter == 0 {
        return Err(Error::Config("max_iter must be >= 1".into()));
    }
    let norms = problem.op_norms()?;
    let cond = condition_value(params.tau, &params.sigmas, &norms);
    if !(cond < 4.0) {
        return Err(Error::Config(format!(
            "step condition tau * sum sigma_i ||L_i||^2 = {cond} must be < 4"
        )));
    }

    let (tau, lam) = (params.tau, params.relax);
    let n = problem.dim;
    let mut x = vec![0.0; n];
    let mut v: Vec<Vec<f64>> = problem.terms.iter().map(|t| vec![0.0; t.op.range_len()]).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let adjoint_sum = |terms: &[Term], ys: &[Vec<f64>]| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; n];
        for (t, y) in terms.iter().zip(ys) {
            axpy_into(&mut acc, 1.0, &t.op.adjoint(y)?);
        }
        Ok(acc)
    };

    for it in 1..=params.max_iter {
        let ltv = adjoint_sum(&problem.terms, &v)?;
        let arg: Vec<f64> = x.iter().zip(&ltv).map(|(a, b)| a - 0.5 * tau * b).collect();
        let p1 = problem.f.prox(&arg, tau).map_err(|e| e.at_iteration(it))?;
        let w1: Vec<f64> = p1.iter().zip(&x).map(|(p, xi)| 2.0 * p - xi).collect();

        let mut p2 = Vec::with_capacity(m);
        let mut w2 = Vec::with_capacity(m);
        for (i, t) in problem.terms.iter_mut().enumerate() {
            let s = params.sigmas[i];
            let lw = t.op.apply(&w1)?;
            let a: Vec<f64> = (0..lw.len())
                .map(|k| v[i][k] + 0.5 * s * lw[k] - s * t.shift[k])
                .collect();
            let p = t.g.prox_conjugate(&a, s).map_err(|e| e.at_iteration(it))?;
            w2.push(p.iter().zip(&v[i]).map(|(p, vi)| 2.0 * p - vi).collect::<Vec<f64>>());
            p2.push(p);
        }

        let ltw2 = adjoint_sum(&problem.terms, &w2)?;
        let z1: Vec<f64> = w1.iter().zip(&ltw2).map(|(w, l)| w - 0.5 * tau * l).collect();

        let mut dx2 = 0.0;
        let mut x2 = 0.0;
        for k in 0..n {
            let step = lam * (z1[k] - p1[k]);
            x2 += x[k] * x[k];
            dx2 += step * step;
            x[k] += step;
        }
        let (mut dv2, mut v2) = (0.0, 0.0);
        let d: Vec<f64> = z1.iter().zip(&w1).map(|(z, w)| 2.0 * z - w).collect();
        for (i, t) in problem.terms.iter().enumerate() {
            let s = params.sigmas[i];
            let ld = t.op.apply(&d)?;
            for k in 0..ld.len() {
                let z2 = w2[i][k] + 0.5 * s * ld[k];
                #[cfg(not(feature = "doubled-dual-update"))]
                let step = lam * (z2 - p2[i][k]);
                #[cfg(feature = "doubled-dual-update")]
                let step = lam * (2.0 * z2 - p2[i][k]);
                v2 += v[i][k] * v[i][k];
                dv2 += step * step;
                v[i][k] += step;
            }
        }
        if !(dx2.is_finite() && dv2.is_finite()) {
            return Err(Error::numerical("non-finite iterate in splitting loop").at_iteration(it));
        }

        let fixed_point_residual = ((dx2 + dv2) / (x2 + v2).max(1.0)).sqrt();
        let primal_residual = (dx2 / x2.max(1.0)).sqrt();
        let (objective, constraint_residual, term_residuals) = if observer.is_some() {
            problem.evaluate(&p1)?
        } else {
            (f64::NAN, f64::NAN, Vec::new())
        };
        let record = IterationRecord {
            iteration: it,
            fixed_point_residual,
            primal_residual,
            objective,
            constraint_residual,
            term_residuals,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&record);
        }
        history.push(record);
        iterations = it;
        if params.tol > 0.0 && fixed_point_residual <= params.tol {
            converged = true;
            break;
        }
    }

    let ltv = adjoint_sum(&problem.terms, &v)?;
    let arg: Vec<f64> = x.iter().zip(&ltv).map(|(a, b)| a - 0.5 * tau * b).collect();
    let solution = problem.f.prox(&arg, tau).map_err(|e| e.at_iteration(iterations))?;
    let (objective, constraint_residual) = problem.objective(&solution)?;
    log::info!(
        "splitting finished after {iterations} iterations (converged: {converged}, objective {objective:.6e})"
    );
    Ok(SplitResult {
        solution,
        history,
        iterations,
        converged,
        objective,
        constraint_residual,
    })
}
