//! Sinkhorn and generalized Sinkhorn iterations (block-coordinate ascent on
//! the dual), the proximal operator of the transport cost, and the primal and
//! dual objective values.

use super::{dot_zero_safe, overflow_error, scaling, DualPotentials, KernelKind, KernelOperator};
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::special_fn::{wright_omega_into, OmegaEvalPolicy};

/// Relative tolerance on `Σμ0 = Σμ1` for balanced problems.
const MASS_BALANCE_TOL: f64 = 1e-12;

/// The `λ1` half of the block-coordinate ascent, determined by the function
/// `g` penalizing the second marginal.
pub trait DualUpdate: Sync {
    /// Length of the second marginal.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the maximizer over `λ1` of the dual objective with `λ0` fixed,
    /// given `ktu0 = Kᵀ exp(λ0/ε)`.
    fn update(&self, ktu0: &[f64], epsilon: f64, lambda1: &mut [f64]) -> Result<()>;

    /// `-g*(-λ1)`.
    fn neg_conjugate(&self, lambda1: &[f64]) -> f64;

    /// `g(μ)` at a feasible second marginal.
    fn primal_term(&self, mu: &[f64]) -> f64;

    /// The fixed second marginal when `g` is the indicator of a point.
    fn target(&self) -> Option<&[f64]> {
        None
    }
}

/// `g = indicator of {μ1}`: the classical Sinkhorn column update.
#[derive(Debug, Clone, Copy)]
pub struct PointMass<'a> {
    pub mu1: &'a [f64],
}

impl DualUpdate for PointMass<'_> {
    fn len(&self) -> usize {
        self.mu1.len()
    }

    fn update(&self, ktu0: &[f64], epsilon: f64, lambda1: &mut [f64]) -> Result<()> {
        let mu1 = self.mu1;
        par::for_each_indexed(lambda1, |j, l| {
            *l = if mu1[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                epsilon * (mu1[j] / ktu0[j]).ln()
            };
        });
        Ok(())
    }

    fn neg_conjugate(&self, lambda1: &[f64]) -> f64 {
        dot_zero_safe(lambda1, self.mu1)
    }

    fn primal_term(&self, _mu: &[f64]) -> f64 {
        0.0
    }

    fn target(&self) -> Option<&[f64]> {
        Some(self.mu1)
    }
}

/// `g(μ) = ‖μ - μ1‖² / (2σ)`, giving the Wright-omega update.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticPenalty<'a> {
    pub mu1: &'a [f64],
    pub sigma: f64,
    pub policy: OmegaEvalPolicy,
}

impl<'a> QuadraticPenalty<'a> {
    pub fn new(mu1: &'a [f64], sigma: f64) -> Self {
        Self {
            mu1,
            sigma,
            policy: OmegaEvalPolicy::default(),
        }
    }
}

impl DualUpdate for QuadraticPenalty<'_> {
    fn len(&self) -> usize {
        self.mu1.len()
    }

    fn update(&self, ktu0: &[f64], epsilon: f64, lambda1: &mut [f64]) -> Result<()> {
        let (mu1, sigma) = (self.mu1, self.sigma);
        let se = sigma * epsilon;
        let log_se = se.ln();
        let mut arg = vec![0.0; mu1.len()];
        par::for_each_indexed(&mut arg, |j, a| *a = mu1[j] / se + ktu0[j].ln() - log_se);
        wright_omega_into(&arg, lambda1, &self.policy)?;
        par::for_each_indexed(lambda1, |j, l| *l = mu1[j] / sigma - epsilon * *l);
        Ok(())
    }

    fn neg_conjugate(&self, lambda1: &[f64]) -> f64 {
        lambda1
            .iter()
            .zip(self.mu1)
            .map(|(l, m)| l * (m - 0.5 * self.sigma * l))
            .sum()
    }

    fn primal_term(&self, mu: &[f64]) -> f64 {
        let d: f64 = mu.iter().zip(self.mu1).map(|(a, b)| (a - b) * (a - b)).sum();
        d / (2.0 * self.sigma)
    }
}

/// Stopping control for the Sinkhorn loops.
///
/// With a point-mass `g` the loop stops when both marginal residuals (ℓ1) are
/// at most `tol·Σμ0`. Otherwise it stops when the fixed-point residual of the
/// `λ1` equation, `‖λ1⁺ - λ1‖∞ / (ε(1 + ‖λ‖∞))`, is at most `tol`. A
/// tolerance of zero runs exactly `max_iter` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Record the dual objective after every half-step in the report.
    pub record_dual: bool,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            record_dual: false,
        }
    }
}

impl SinkhornSettings {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            record_dual: false,
        }
    }

    /// Exactly `iters` iterations, no early stop.
    pub fn fixed(iters: usize) -> Self {
        Self::with_tol(0.0, iters)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) || !self.tol.is_finite() {
            return Err(Error::Config(format!(
                "sinkhorn tolerance must be finite and >= 0, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("sinkhorn max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SinkhornReport {
    pub iterations: usize,
    /// `‖diag(u0) K u1 - μ0‖₁` at the returned potentials.
    pub marginal_residual_row: f64,
    /// `‖diag(u1) Kᵀ u0 - μ1‖₁` for a point-mass `g`, else the `λ1` residual.
    pub marginal_residual_col_or_kkt: f64,
    /// `trace(Cᵀ M) + ε D(M) + g(Mᵀ 1)` at the returned potentials.
    pub primal_value: f64,
    pub dual_value: f64,
    pub converged: bool,
    /// Stopping quantity after each iteration (relative to `Σμ0` for the
    /// marginal rule).
    pub residual_history: Vec<f64>,
    /// Dual objective after every half-step when requested.
    pub dual_trace: Vec<f64>,
}

/// Which half of an iteration just finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfStep {
    Row,
    Column,
}

/// Snapshot handed to iteration observers.
#[derive(Debug)]
pub struct IterateView<'a> {
    pub iteration: usize,
    pub half: HalfStep,
    pub lambda0: &'a [f64],
    pub lambda1: &'a [f64],
}

pub(crate) struct SinkhornOutput {
    pub potentials: DualPotentials,
    pub report: SinkhornReport,
    /// `Mᵀ 1 = u1 ⊙ Kᵀ u0` at the returned potentials.
    pub column_marginal: Vec<f64>,
}

/// Block-coordinate ascent on the dual: alternates the closed-form `λ0` update
/// `λ0 = ε log(μ0 ./ K u1)` with `update`.
///
/// The returned potentials always end on a `λ0` update, so the plan's first
/// marginal is `μ0` up to rounding.
pub fn generalized_sinkhorn(
    mu0: &[f64],
    kernel: &KernelOperator,
    update: &dyn DualUpdate,
    settings: &SinkhornSettings,
    warm: Option<&DualPotentials>,
    observer: Option<&mut dyn FnMut(&IterateView)>,
) -> Result<(DualPotentials, SinkhornReport)> {
    let out = run(mu0, kernel, update, settings, warm, observer)?;
    Ok((out.potentials, out.report))
}

pub(crate) fn run(
    mu0: &[f64],
    kernel: &KernelOperator,
    update: &dyn DualUpdate,
    settings: &SinkhornSettings,
    warm: Option<&DualPotentials>,
    mut observer: Option<&mut dyn FnMut(&IterateView)>,
) -> Result<SinkhornOutput> {
    settings.validate()?;
    let (n0, n1) = (kernel.n0(), kernel.n1());
    check_len("first marginal", n0, mu0.len())?;
    check_len("second marginal", n1, update.len())?;
    check_positive(mu0)?;
    let eps = kernel.epsilon();
    let mass: f64 = mu0.iter().sum();
    let entropy_const = eps * (n0 as f64) * (n1 as f64);
    let mu0_dot = |l0: &[f64]| crate::dot(l0, mu0);

    let mut lambda1 = match warm {
        Some(w) => {
            check_len("warm-start lambda1", n1, w.lambda1.len())?;
            w.lambda1.clone()
        }
        None => vec![0.0; n1],
    };
    let mut lambda1_next = vec![0.0; n1];
    let mut lambda0 = vec![0.0; n0];
    let mut u0 = vec![0.0; n0];
    let mut u1 = scaling(&lambda1, eps)?;
    let mut ku1 = kernel.apply_nonneg(&u1, false)?;
    let mut report = SinkhornReport::default();

    for it in 1..=settings.max_iter {
        // λ0 half-step.
        for (i, x) in u0.iter_mut().enumerate() {
            *x = mu0[i] / ku1[i];
        }
        if let Some(i) = u0.iter().position(|x| !x.is_finite()) {
            return Err(Error::numerical(format!(
                "K u1 vanished at entry {i}; increase epsilon"
            ))
            .at_iteration(it));
        }
        for (l, x) in lambda0.iter_mut().zip(&u0) {
            *l = eps * x.ln();
        }
        let row: Vec<f64> = u0.iter().zip(&ku1).map(|(a, b)| a * b).collect();
        if settings.record_dual {
            let d = mu0_dot(&lambda0) + update.neg_conjugate(&lambda1) - eps * row.iter().sum::<f64>()
                + entropy_const;
            report.dual_trace.push(d);
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&IterateView {
                iteration: it,
                half: HalfStep::Row,
                lambda0: &lambda0,
                lambda1: &lambda1,
            });
        }

        let ktu0 = kernel.apply_nonneg(&u0, true)?;
        update
            .update(&ktu0, eps, &mut lambda1_next)
            .map_err(|e| e.at_iteration(it))?;

        let row_res: f64 = row.iter().zip(mu0).map(|(a, b)| (a - b).abs()).sum();
        let col: Vec<f64> = u1.iter().zip(&ktu0).map(|(a, b)| a * b).collect();
        let (second, stop_value) = match update.target() {
            Some(mu1) => {
                let col_res: f64 = col.iter().zip(mu1).map(|(a, b)| (a - b).abs()).sum();
                (col_res, row_res.max(col_res) / mass)
            }
            None => {
                let scale = crate::norm_inf(&lambda0).max(crate::norm_inf(&lambda1));
                let diff = lambda1_next
                    .iter()
                    .zip(&lambda1)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                let kkt = diff / (eps * (1.0 + scale));
                (kkt, kkt)
            }
        };
        if !stop_value.is_finite() {
            return Err(Error::numerical("non-finite residual in sinkhorn loop").at_iteration(it));
        }
        report.residual_history.push(stop_value);
        let converged = stop_value <= settings.tol;

        if converged || it == settings.max_iter {
            report.iterations = it;
            report.converged = converged;
            report.marginal_residual_row = row_res;
            report.marginal_residual_col_or_kkt = second;
            report.dual_value = mu0_dot(&lambda0) + update.neg_conjugate(&lambda1)
                - eps * row.iter().sum::<f64>()
                + entropy_const;
            report.primal_value = dot_zero_safe(&lambda0, &row) + dot_zero_safe(&lambda1, &col)
                - eps * row.iter().sum::<f64>()
                + entropy_const
                + update.primal_term(&col);
            log::debug!(
                "sinkhorn stopped after {it} iterations (converged: {converged}, residual {stop_value:e})"
            );
            return Ok(SinkhornOutput {
                potentials: DualPotentials { lambda0, lambda1 },
                report,
                column_marginal: col,
            });
        }

        // λ1 half-step.
        std::mem::swap(&mut lambda1, &mut lambda1_next);
        for (j, (x, l)) in u1.iter_mut().zip(&lambda1).enumerate() {
            *x = (l / eps).exp();
            if !x.is_finite() {
                return Err(overflow_error(j).at_iteration(it));
            }
        }
        if settings.record_dual {
            let cross: f64 = u1.iter().zip(&ktu0).map(|(a, b)| a * b).sum();
            let d = mu0_dot(&lambda0) + update.neg_conjugate(&lambda1) - eps * cross + entropy_const;
            report.dual_trace.push(d);
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&IterateView {
                iteration: it,
                half: HalfStep::Column,
                lambda0: &lambda0,
                lambda1: &lambda1,
            });
        }
        ku1 = kernel.apply_nonneg(&u1, false)?;
    }
    unreachable!("loop returns at max_iter")
}

fn check_positive(mu0: &[f64]) -> Result<()> {
    if let Some(i) = mu0.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::Domain(format!(
            "first marginal must be strictly positive and finite; entry {i} is {}",
            mu0[i]
        )));
    }
    Ok(())
}

/// Classical Sinkhorn scaling for balanced marginals. Zero entries of `μ1` are
/// allowed and give zero scalings (`λ1 = -∞`).
pub fn sinkhorn(
    mu0: &[f64],
    mu1: &[f64],
    kernel: &KernelOperator,
    settings: &SinkhornSettings,
    warm: Option<&DualPotentials>,
) -> Result<(DualPotentials, SinkhornReport)> {
    if let Some(i) = mu1.iter().position(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::Domain(format!(
            "second marginal must be nonnegative and finite; entry {i} is {}",
            mu1[i]
        )));
    }
    let (m0, m1) = (mu0.iter().sum::<f64>(), mu1.iter().sum::<f64>());
    if (m0 - m1).abs() > MASS_BALANCE_TOL * m0.abs().max(m1.abs()) {
        return Err(Error::Model(format!(
            "marginals have different total mass: {m0} vs {m1}"
        )));
    }
    generalized_sinkhorn(mu0, kernel, &PointMass { mu1 }, settings, warm, None)
}

/// Proximal operator of `μ ↦ T_ε(μ0, μ)` with step `σ`:
/// `argmin_μ T_ε(μ0, μ) + ‖μ - μ1‖² / (2σ)`.
///
/// Returns the minimizer `u1 ⊙ Kᵀ u0`, the final potentials (for warm
/// starting the next call) and the iteration report. The minimizer carries
/// the mass of `μ0`. For the prox of `γ T_ε` with step `τ` use `σ = τγ`.
pub fn omt_prox(
    mu0: &[f64],
    mu1: &[f64],
    sigma: f64,
    kernel: &KernelOperator,
    settings: &SinkhornSettings,
    warm: Option<&DualPotentials>,
) -> Result<(Vec<f64>, DualPotentials, SinkhornReport)> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!(
            "prox step sigma must be positive, got {sigma}"
        )));
    }
    if let Some(i) = mu1.iter().position(|m| !m.is_finite()) {
        return Err(Error::Domain(format!("prox input entry {i} is not finite")));
    }
    let update = QuadraticPenalty::new(mu1, sigma);
    let out = run(mu0, kernel, &update, settings, warm, None)?;
    Ok((out.column_marginal, out.potentials, out.report))
}

fn plan_marginals(
    kernel: &KernelOperator,
    u0: &[f64],
    u1: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ku1 = kernel.apply_nonneg(u1, false)?;
    let ktu0 = kernel.apply_nonneg(u0, true)?;
    let row = u0.iter().zip(&ku1).map(|(a, b)| a * b).collect();
    let col = u1.iter().zip(&ktu0).map(|(a, b)| a * b).collect();
    Ok((row, col))
}

fn check_potentials(kernel: &KernelOperator, pot: &DualPotentials) -> Result<()> {
    check_len("lambda0", kernel.n0(), pot.lambda0.len())?;
    check_len("lambda1", kernel.n1(), pot.lambda1.len())
}

/// `trace(Cᵀ M)` for `M = diag(u0) K diag(u1)`, through the `C⊙K` kernel.
pub fn transport_cost(kernel: &KernelOperator, pot: &DualPotentials) -> Result<f64> {
    check_potentials(kernel, pot)?;
    let (u0, u1) = pot.scalings(kernel.epsilon())?;
    let cku1 = kernel.product_nonneg(KernelKind::CostWeighted, &u1, false)?;
    Ok(crate::dot(&u0, &cku1))
}

/// `trace(Cᵀ M) + ε D(M)` for the plan defined by the potentials, without
/// forming `M`.
pub fn primal_value(kernel: &KernelOperator, pot: &DualPotentials) -> Result<f64> {
    check_potentials(kernel, pot)?;
    let eps = kernel.epsilon();
    let (u0, u1) = pot.scalings(eps)?;
    let (row, col) = plan_marginals(kernel, &u0, &u1)?;
    let trace = transport_cost(kernel, pot)?;
    let total: f64 = row.iter().sum();
    let entropy = dot_zero_safe(&pot.lambda0, &row) + dot_zero_safe(&pot.lambda1, &col)
        - trace
        - eps * total
        + eps * (kernel.n0() as f64) * (kernel.n1() as f64);
    let value = trace + entropy;
    if !value.is_finite() {
        return Err(Error::numerical("primal value is not finite; increase epsilon"));
    }
    Ok(value)
}

/// The dual objective `λ0ᵀμ0 - g*(-λ1) - ε u0ᵀ K u1 + ε n0 n1`.
pub fn dual_objective(
    mu0: &[f64],
    g: &dyn DualUpdate,
    kernel: &KernelOperator,
    pot: &DualPotentials,
) -> Result<f64> {
    check_potentials(kernel, pot)?;
    check_len("first marginal", kernel.n0(), mu0.len())?;
    let eps = kernel.epsilon();
    let (u0, u1) = pot.scalings(eps)?;
    let ku1 = kernel.apply_nonneg(&u1, false)?;
    let value = crate::dot(&pot.lambda0, mu0) + g.neg_conjugate(&pot.lambda1)
        - eps * crate::dot(&u0, &ku1)
        + eps * (kernel.n0() as f64) * (kernel.n1() as f64);
    if !value.is_finite() {
        return Err(Error::numerical("dual value is not finite; increase epsilon"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{build_cost, CostSpec, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(rng: &mut ChaCha8Rng, n0: usize, n1: usize, eps: f64) -> KernelOperator {
        let c: Vec<f64> = (0..n0 * n1).map(|_| rng.random::<f64>()).collect();
        KernelOperator::new(CostSpec::dense(n0, n1, c).unwrap(), eps).unwrap()
    }

    fn random_mass(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x * total / s).collect()
    }

    #[test]
    fn single_cell_problem() {
        let k = KernelOperator::new(CostSpec::dense(1, 1, vec![0.0]).unwrap(), 1.0).unwrap();
        let (pot, rep) = sinkhorn(&[1.0], &[1.0], &k, &SinkhornSettings::default(), None).unwrap();
        let (u0, u1) = pot.scalings(1.0).unwrap();
        assert!((u0[0] * u1[0] - 1.0).abs() < 1e-15);
        assert!(rep.converged);
        assert!(primal_value(&k, &pot).unwrap().abs() < 1e-15);
        let d = dual_objective(&[1.0], &PointMass { mu1: &[1.0] }, &k, &pot).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_by_two() {
        let k = KernelOperator::new(
            CostSpec::dense(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let mu = [0.5, 0.5];
        let (pot, rep) =
            sinkhorn(&mu, &mu, &k, &SinkhornSettings::with_tol(1e-12, 1000), None).unwrap();
        assert!(rep.converged);
        assert!(rep.marginal_residual_row <= 1e-10 && rep.marginal_residual_col_or_kkt <= 1e-10);
        let (u0, u1) = pot.scalings(0.5).unwrap();
        let kd = k.to_dense();
        let m = |i: usize, j: usize| u0[i] * kd[i * 2 + j] * u1[j];
        assert!((m(0, 0) - m(1, 1)).abs() < 1e-12);
        assert!((m(0, 1) - m(1, 0)).abs() < 1e-12);
        // Diagonal entry a and off-diagonal 1/2 - a with a/(1/2 - a) = e^{1/ε}.
        let a = 0.5 * 2f64.exp() / (1.0 + 2f64.exp());
        assert!((m(0, 0) - a).abs() < 1e-10);
    }

    #[test]
    fn zero_entries_in_second_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_dense(&mut rng, 4, 5, 0.2);
        let mu0 = random_mass(&mut rng, 4, 1.0);
        let mu1 = [0.25, 0.0, 0.5, 0.0, 0.25];
        let (pot, rep) =
            sinkhorn(&mu0, &mu1, &k, &SinkhornSettings::with_tol(1e-12, 10_000), None).unwrap();
        assert!(rep.converged);
        assert_eq!(pot.lambda1[1], f64::NEG_INFINITY);
        let gap = rep.primal_value - rep.dual_value;
        assert!(gap.abs() <= 1e-9, "gap {gap}");
        assert!(primal_value(&k, &pot).unwrap().is_finite());
    }

    #[test]
    fn mass_mismatch_is_a_model_error() {
        let k = KernelOperator::new(CostSpec::dense(2, 2, vec![0.0; 4]).unwrap(), 1.0).unwrap();
        let r = sinkhorn(&[1.0, 1.0], &[1.0, 1.5], &k, &SinkhornSettings::default(), None);
        assert!(matches!(r, Err(Error::Model(_))));
        let r = sinkhorn(&[1.0, 0.0], &[0.5, 0.5], &k, &SinkhornSettings::default(), None);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = random_dense(&mut rng, 6, 6, 0.01);
        let mu0 = random_mass(&mut rng, 6, 1.0);
        let mu1 = random_mass(&mut rng, 6, 1.0);
        let (_, rep) = sinkhorn(&mu0, &mu1, &k, &SinkhornSettings::with_tol(1e-14, 3), None).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert_eq!(rep.residual_history.len(), 3);
    }

    #[test]
    fn point_mass_update_reproduces_sinkhorn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random_dense(&mut rng, 7, 9, 0.3);
        let mu0 = random_mass(&mut rng, 7, 2.0);
        let mu1 = random_mass(&mut rng, 9, 2.0);
        let s = SinkhornSettings::with_tol(1e-11, 500);
        let (a, ra) = sinkhorn(&mu0, &mu1, &k, &s, None).unwrap();
        let (b, rb) =
            generalized_sinkhorn(&mu0, &k, &PointMass { mu1: &mu1 }, &s, None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn prox_of_trivial_problem_returns_prior() {
        let k = KernelOperator::new(CostSpec::dense(1, 1, vec![0.0]).unwrap(), 1.0).unwrap();
        for (mu1, sigma) in [(3.0, 0.1), (-2.0, 5.0), (0.7, 1.0)] {
            let (est, _, _) =
                omt_prox(&[1.5], &[mu1], sigma, &k, &SinkhornSettings::default(), None).unwrap();
            assert!((est[0] - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn prox_conserves_mass_and_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = GridSpec::square(8);
        let k = KernelOperator::new(build_cost(grid, 2.0, 20.0).unwrap(), 1.0).unwrap();
        let mu0 = random_mass(&mut rng, 64, 10.0);
        let mu1: Vec<f64> = (0..64).map(|_| rng.random_range(-0.2..0.5)).collect();
        let s = SinkhornSettings::with_tol(1e-10, 5000);
        let (est, pot, rep) = omt_prox(&mu0, &mu1, 0.5, &k, &s, None).unwrap();
        assert!(rep.converged);
        let (m0, m1) = (mu0.iter().sum::<f64>(), est.iter().sum::<f64>());
        assert!((m0 - m1).abs() <= 1e-12 * m0);
        assert!(est.iter().all(|&x| x > 0.0));
        // Stationarity of the λ1 equation: μ_est = μ1 - σλ1.
        for j in 0..64 {
            assert!((est[j] - (mu1[j] - 0.5 * pot.lambda1[j])).abs() < 1e-7);
        }
        let gap = rep.primal_value - rep.dual_value;
        assert!(gap.abs() <= 1e-8 * (1.0 + rep.primal_value.abs()), "gap {gap}");
        // Warm start from the solution converges immediately.
        let (_, _, rep2) = omt_prox(&mu0, &mu1, 0.5, &k, &s, Some(&pot)).unwrap();
        assert!(rep2.iterations <= 2);
    }

    #[test]
    fn dual_increases_along_quadratic_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_dense(&mut rng, 10, 10, 0.5);
        let mu0 = random_mass(&mut rng, 10, 1.0);
        let mu1: Vec<f64> = (0..10).map(|_| rng.random_range(-0.1..0.3)).collect();
        let mut s = SinkhornSettings::fixed(60);
        s.record_dual = true;
        let update = QuadraticPenalty::new(&mu1, 0.3);
        let (pot, rep) = generalized_sinkhorn(&mu0, &k, &update, &s, None, None).unwrap();
        assert_eq!(rep.dual_trace.len(), 2 * rep.iterations - 1);
        for w in rep.dual_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
        let d = dual_objective(&mu0, &update, &k, &pot).unwrap();
        assert!((d - rep.dual_value).abs() < 1e-12 * (1.0 + d.abs()));
    }

    #[test]
    fn far_prox_input_gives_nonnegative_estimate_or_overflow_error() {
        let k = KernelOperator::new(CostSpec::dense(2, 2, vec![0.0, 4.0, 4.0, 0.0]).unwrap(), 1.0)
            .unwrap();
        let s = SinkhornSettings::with_tol(1e-12, 10_000);
        let (est, _, _) = omt_prox(&[1.0, 1.0], &[30.0, -30.0], 0.1, &k, &s, None).unwrap();
        assert!(est.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((est[0] + est[1] - 2.0).abs() < 1e-12);
        // λ1 ≈ (μ1 - μ_est)/σ = 1e6 cannot be exponentiated.
        let r = omt_prox(&[1.0, 1.0], &[1e3, -1e3], 1e-3, &k, &s, None);
        match r {
            Err(Error::Numerical { message, .. }) => assert!(message.contains("epsilon")),
            other => panic!("expected overflow error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_settings() {
        let k = KernelOperator::new(CostSpec::dense(1, 1, vec![0.0]).unwrap(), 1.0).unwrap();
        let s = SinkhornSettings::with_tol(-1.0, 10);
        assert!(matches!(sinkhorn(&[1.0], &[1.0], &k, &s, None), Err(Error::Config(_))));
        assert!(matches!(
            omt_prox(&[1.0], &[1.0], 0.0, &k, &SinkhornSettings::default(), None),
            Err(Error::Config(_))
        ));
    }
}
