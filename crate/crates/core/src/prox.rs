//! Proximal operators `Prox^σ_f(x) = argmin_z f(z) + ‖z - x‖² / (2σ)`.
//!
//! Conjugate proxes are always obtained through the Moreau decomposition
//! `Prox^σ_{f*}(x) = x - σ Prox^{1/σ}_f(x/σ)`.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::transport::{omt_prox, DualPotentials, KernelOperator, SinkhornReport, SinkhornSettings};

/// `γ T_ε(μ0, ·)` with warm-started inner iterations.
#[derive(Debug, Clone)]
pub struct OmtTerm {
    pub prior: Vec<f64>,
    pub kernel: Arc<KernelOperator>,
    pub weight: f64,
    pub settings: SinkhornSettings,
    /// Potentials of the previous evaluation, reused as the starting point.
    pub warm: Option<DualPotentials>,
    pub last_report: Option<SinkhornReport>,
    /// `T_ε(μ0, p)` for the last output `p`.
    last_value: Option<f64>,
}

impl OmtTerm {
    pub fn new(prior: Vec<f64>, kernel: Arc<KernelOperator>, weight: f64, settings: SinkhornSettings) -> Result<Self> {
        check_len("omt prior", kernel.n0(), prior.len())?;
        if !(weight > 0.0) {
            return Err(Error::Config(format!("omt weight must be positive, got {weight}")));
        }
        Ok(Self {
            prior,
            kernel,
            weight,
            settings,
            warm: None,
            last_report: None,
            last_value: None,
        })
    }

    fn prox(&mut self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let s = sigma * self.weight;
        let (est, pot, report) =
            omt_prox(&self.prior, x, s, &self.kernel, &self.settings, self.warm.as_ref())?;
        let penalty: f64 = est.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * s);
        self.last_value = Some(report.primal_value - penalty);
        self.warm = Some(pot);
        self.last_report = Some(report);
        Ok(est)
    }
}

/// The functions appearing in the reconstruction splittings.
#[derive(Debug, Clone)]
pub enum ProxFunction {
    /// `f ≡ 0`.
    Zero,
    /// Indicator of the nonnegative orthant.
    IndicatorNonneg,
    /// Indicator of `{0}`.
    IndicatorZero,
    /// `weight · Σ_i ‖y_i‖₂` over pixels of a `groups`-component field stored
    /// component-major (isotropic TV when composed with the gradient).
    GroupL21 { groups: usize, weight: f64 },
    /// Indicator of `{y : ‖y‖₂ ≤ radius}`.
    L2Ball { radius: f64 },
    /// `weight · ‖x - center‖²`.
    SquaredL2 { weight: f64, center: Vec<f64> },
    /// `γ T_ε(μ0, ·)`.
    Omt(Box<OmtTerm>),
}

impl ProxFunction {
    pub fn l2_ball(radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be >= 0, got {radius}")));
        }
        Ok(ProxFunction::L2Ball { radius })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProxFunction::Zero => "zero",
            ProxFunction::IndicatorNonneg => "indicator_nonneg",
            ProxFunction::IndicatorZero => "indicator_zero",
            ProxFunction::GroupL21 { .. } => "group_l21",
            ProxFunction::L2Ball { .. } => "l2_ball",
            ProxFunction::SquaredL2 { .. } => "squared_l2",
            ProxFunction::Omt(_) => "omt",
        }
    }

    /// Whether the function is an indicator (its value is 0 or +∞).
    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            ProxFunction::IndicatorNonneg | ProxFunction::IndicatorZero | ProxFunction::L2Ball { .. }
        )
    }

    pub fn prox(&mut self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("prox step must be positive, got {sigma}")));
        }
        Ok(match self {
            ProxFunction::Zero => x.to_vec(),
            ProxFunction::IndicatorNonneg => prox_nonneg(x),
            ProxFunction::IndicatorZero => vec![0.0; x.len()],
            ProxFunction::GroupL21 { groups, weight } => prox_group_l21(x, *groups, sigma * *weight)?,
            ProxFunction::L2Ball { radius } => project_l2_ball(x, *radius)?,
            ProxFunction::SquaredL2 { weight, center } => prox_squared_l2(x, *weight, center, sigma)?,
            ProxFunction::Omt(term) => term.prox(x, sigma)?,
        })
    }

    /// `Prox^σ_{f*}(x)` by Moreau decomposition.
    pub fn prox_conjugate(&mut self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("prox step must be positive, got {sigma}")));
        }
        let scaled: Vec<f64> = x.iter().map(|v| v / sigma).collect();
        let p = self.prox(&scaled, 1.0 / sigma)?;
        Ok(x.iter().zip(&p).map(|(a, b)| a - sigma * b).collect())
    }

    /// Function value, with indicators evaluated as 0 (see [`Self::violation`]).
    /// The transport term reports its value at the most recent prox output.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ProxFunction::Zero
            | ProxFunction::IndicatorNonneg
            | ProxFunction::IndicatorZero
            | ProxFunction::L2Ball { .. } => 0.0,
            ProxFunction::GroupL21 { groups, weight } => {
                let n = x.len() / (*groups).max(1);
                (0..n)
                    .map(|i| (0..*groups).map(|j| x[j * n + i].powi(2)).sum::<f64>().sqrt())
                    .sum::<f64>()
                    * weight
            }
            ProxFunction::SquaredL2 { weight, center } => {
                weight * x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            ProxFunction::Omt(term) => term.weight * term.last_value.unwrap_or(f64::NAN),
        }
    }

    /// Distance-like infeasibility of `x` for indicator functions, 0 otherwise.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ProxFunction::IndicatorNonneg => {
                x.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>().sqrt()
            }
            ProxFunction::IndicatorZero => crate::norm2(x),
            ProxFunction::L2Ball { radius } => (crate::norm2(x) - radius).max(0.0),
            _ => 0.0,
        }
    }
}

/// Projection onto the nonnegative orthant.
pub fn prox_nonneg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Vector soft-thresholding of each pixel's `groups` components by `t`;
/// zero vectors stay zero.
pub fn prox_group_l21(x: &[f64], groups: usize, t: f64) -> Result<Vec<f64>> {
    if groups == 0 || !x.len().is_multiple_of(groups) {
        return Err(Error::Dimension {
            context: "group field length",
            expected: groups * (x.len() / groups.max(1)),
            got: x.len(),
        });
    }
    let n = x.len() / groups;
    let mut out = x.to_vec();
    for i in 0..n {
        let norm = (0..groups).map(|j| x[j * n + i].powi(2)).sum::<f64>().sqrt();
        let shrink = if norm > t { 1.0 - t / norm } else { 0.0 };
        for j in 0..groups {
            out[j * n + i] *= shrink;
        }
    }
    Ok(out)
}

/// Projection onto the Euclidean ball of radius `kappa`.
pub fn project_l2_ball(x: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return Err(Error::Config(format!("ball radius must be >= 0, got {kappa}")));
    }
    let norm = crate::norm2(x);
    if norm <= kappa {
        Ok(x.to_vec())
    } else {
        Ok(x.iter().map(|v| v * kappa / norm).collect())
    }
}

/// Prox of `γ‖· - μ0‖²`: `(x + 2σγ μ0) / (1 + 2σγ)`.
pub fn prox_squared_l2(x: &[f64], gamma: f64, mu0: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_len("squared-l2 center", x.len(), mu0.len())?;
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("weight must be >= 0, got {gamma}")));
    }
    let a = 2.0 * sigma * gamma;
    Ok(x.iter().zip(mu0).map(|(v, m)| (v + a * m) / (1.0 + a)).collect())
}
