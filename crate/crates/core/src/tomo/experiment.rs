use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::fbp::fbp;
use crate::error::{check_len, Error, Result};
use crate::operators::{Gradient, Identity, LinearOperator, ParallelGeometry, RayTransform};
use crate::prox::{OmtTerm, ProxFunction};
use crate::splitting::{
    default_step_sizes, douglas_rachford_solve, IterationRecord, SplitParams, SplitProblem,
    SplitResult, Term,
};
use crate::transport::{build_cost, GridSpec, KernelOperator, SinkhornSettings};

/// Relative floor applied to priors before transport use.
const PRIOR_FLOOR: f64 = 1e-6;
const NORM_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fbp,
    Tv,
    TvL2,
    TvOmt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Tv => "tv",
            Method::TvL2 => "tv_l2",
            Method::TvOmt => "tv_omt",
        }
    }

    pub fn needs_prior(self) -> bool {
        matches!(self, Method::TvL2 | Method::TvOmt)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbp" => Ok(Method::Fbp),
            "tv" => Ok(Method::Tv),
            "tv_l2" => Ok(Method::TvL2),
            "tv_omt" => Ok(Method::TvOmt),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected fbp, tv, tv_l2 or tv_omt)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one reconstruction experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub image_size: usize,
    pub n_angles: usize,
    pub angle_range: (f64, f64),
    pub n_lines: usize,
    /// Relative noise `‖e‖ / ‖Aμ‖`.
    pub noise_level: f64,
    /// `κ = kappa_factor · noise_level · ‖Aμ‖`.
    pub kappa_factor: f64,
    pub method: Method,
    pub gamma: f64,
    pub epsilon: f64,
    pub tau: f64,
    /// Relaxation `λ` of the splitting iteration.
    pub lambda: f64,
    pub outer_iters: usize,
    /// Early stop on the splitting fixed-point residual (0: fixed count).
    pub outer_tol: f64,
    pub inner_iters: usize,
    /// Early stop for the inner Sinkhorn loop (0: fixed count).
    pub inner_tol: f64,
    pub truncation: f64,
    pub fbp_filter: f64,
    pub warp_amplitude: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `method`: 64×64 image, 30 angles in
    /// `[π/4, 3π/4]`, 100 lines, 5% noise, 2000 outer iterations and the
    /// standard per-method weights and step sizes.
    pub fn defaults(method: Method) -> Self {
        let pi = std::f64::consts::PI;
        let (gamma, tau, lambda) = match method {
            Method::TvOmt => (4.0, 5.0, 1.8),
            Method::TvL2 => (10.0, 0.05, 1.0),
            Method::Tv | Method::Fbp => (0.0, 0.05, 1.0),
        };
        Self {
            image_size: 64,
            n_angles: 30,
            angle_range: (pi / 4.0, 3.0 * pi / 4.0),
            n_lines: 100,
            noise_level: 0.05,
            kappa_factor: 1.2,
            method,
            gamma,
            epsilon: 1.0,
            tau,
            lambda,
            outer_iters: 2000,
            outer_tol: 0.0,
            inner_iters: 200,
            inner_tol: 0.0,
            truncation: 20.0,
            fbp_filter: 0.7,
            warp_amplitude: 0.06,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size < 2 {
            return bad(format!("image size must be >= 2, got {}", self.image_size));
        }
        if !(self.noise_level >= 0.0) {
            return bad(format!("noise level must be >= 0, got {}", self.noise_level));
        }
        if !(self.kappa_factor >= 1.0) {
            return bad(format!("kappa factor must be >= 1, got {}", self.kappa_factor));
        }
        if !(self.tau > 0.0) || !(self.lambda > 0.0 && self.lambda < 2.0) {
            return bad(format!(
                "need tau > 0 and lambda in (0, 2), got tau = {}, lambda = {}",
                self.tau, self.lambda
            ));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return bad("iteration counts must be >= 1".into());
        }
        match self.method {
            Method::TvL2 if !(self.gamma >= 0.0) => {
                return bad(format!("gamma must be >= 0, got {}", self.gamma))
            }
            Method::TvOmt if !(self.gamma > 0.0) || !(self.epsilon > 0.0) => {
                return bad(format!(
                    "tv_omt needs gamma > 0 and epsilon > 0, got {} and {}",
                    self.gamma, self.epsilon
                ))
            }
            _ => {}
        }
        self.geometry()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ParallelGeometry> {
        ParallelGeometry::new(
            self.image_size,
            self.image_size,
            self.n_angles,
            self.angle_range,
            self.n_lines,
        )
    }

    pub fn ray_transform(&self) -> Result<RayTransform> {
        RayTransform::new(self.geometry()?)
    }
}

/// Noisy data `b = Aμ + e` with `‖e‖ = noise_level · ‖Aμ‖` exactly, and the
/// matching ball radius `κ = kappa_factor · noise_level · ‖Aμ‖`.
pub fn simulate_data(
    phantom: &[f64],
    ray: &RayTransform,
    noise_level: f64,
    kappa_factor: f64,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    if !(noise_level >= 0.0) || !(kappa_factor >= 1.0) {
        return Err(Error::Config(format!(
            "need noise_level >= 0 and kappa_factor >= 1, got {noise_level} and {kappa_factor}"
        )));
    }
    let clean = ray.apply(phantom)?;
    let norm = crate::norm2(&clean);
    if noise_level == 0.0 || norm == 0.0 {
        return Ok((clean, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..clean.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = noise_level * norm / crate::norm2(&e);
    let b = clean.iter().zip(&e).map(|(c, n)| c + scale * n).collect();
    Ok((b, kappa_factor * noise_level * norm))
}

/// Prepares a prior for the transport term: rescales it so that its
/// projections carry the same total mass as the data, then raises every
/// entry to at least `1e-6 · max`.
pub fn prepare_prior(prior: &[f64], ray: &RayTransform, b: &[f64]) -> Result<Vec<f64>> {
    check_len("prior", ray.domain_len(), prior.len())?;
    check_len("data", ray.range_len(), b.len())?;
    let projected: f64 = ray.apply(prior)?.iter().sum();
    let measured: f64 = b.iter().sum();
    if !(projected > 0.0) || !(measured > 0.0) {
        return Err(Error::Model(
            "prior and data must both have positive total mass".into(),
        ));
    }
    let s = measured / projected;
    let max = prior.iter().cloned().fold(0.0, f64::max) * s;
    let floor = PRIOR_FLOOR * max;
    Ok(prior.iter().map(|v| (v * s).max(floor)).collect())
}

/// Builds the splitting problem for a variational method:
///
/// - `tv`: `f = I_{≥0}`, terms `‖·‖_{2,1} ∘ ∇` and `I_{‖·-b‖≤κ} ∘ A`;
/// - `tv_l2`: `f = I_{≥0}`, terms `γ‖· - μ0‖²`, `‖·‖_{2,1} ∘ ∇`, `I_{‖·-b‖≤κ} ∘ A`;
/// - `tv_omt`: `f = γ T_ε(μ0, ·)`, terms `‖·‖_{2,1} ∘ ∇`, `I_{‖·-b‖≤κ} ∘ A`.
///
/// The prior is used as given; see [`prepare_prior`] for the transport case.
pub fn assemble_problem(
    config: &ExperimentConfig,
    ray: Arc<RayTransform>,
    b: &[f64],
    kappa: f64,
    prior: Option<&[f64]>,
) -> Result<(SplitProblem, SplitParams)> {
    config.validate()?;
    if !(kappa >= 0.0) {
        return Err(Error::Config(format!("kappa must be >= 0, got {kappa}")));
    }
    let n = ray.domain_len();
    check_len("data", ray.range_len(), b.len())?;
    let size = config.image_size;
    let grad: Arc<dyn LinearOperator> = Arc::new(Gradient::new(&[size, size])?);
    let tv = Term::new(ProxFunction::GroupL21 { groups: 2, weight: 1.0 }, grad, None);
    let data = Term::new(ProxFunction::l2_ball(kappa)?, ray.clone(), Some(b.to_vec()));
    let prior = match (config.method.needs_prior(), prior) {
        (true, None) => {
            return Err(Error::Config(format!(
                "method {} requires a prior",
                config.method
            )))
        }
        (true, Some(p)) => {
            check_len("prior", n, p.len())?;
            Some(p.to_vec())
        }
        _ => None,
    };

    let (f, terms) = match config.method {
        Method::Fbp => {
            return Err(Error::Config(
                "fbp is not a variational method; call tomo::fbp".into(),
            ))
        }
        Method::Tv => (ProxFunction::IndicatorNonneg, vec![tv, data]),
        Method::TvL2 => {
            let prior = prior.expect("checked above");
            let l2 = Term::new(
                ProxFunction::SquaredL2 {
                    weight: config.gamma,
                    center: vec![0.0; n],
                },
                Arc::new(Identity(n)),
                Some(prior),
            )
            .with_norm(1.0);
            (ProxFunction::IndicatorNonneg, vec![l2, tv, data])
        }
        Method::TvOmt => {
            let prior = prior.expect("checked above");
            if let Some(i) = prior.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Config(format!(
                    "transport prior must be strictly positive; entry {i} is {}",
                    prior[i]
                )));
            }
            let grid = GridSpec::square(size);
            let kernel = KernelOperator::new(build_cost(grid, 2.0, config.truncation)?, config.epsilon)?;
            let settings = SinkhornSettings::with_tol(config.inner_tol, config.inner_iters);
            let term = OmtTerm::new(prior, Arc::new(kernel), config.gamma, settings)?;
            (ProxFunction::Omt(Box::new(term)), vec![tv, data])
        }
    };
    let mut problem = SplitProblem::new(f, terms, n)?;
    for t in problem.terms.iter_mut() {
        if t.norm.is_none() {
            t.norm = Some(crate::operators::power_iteration_norm(
                t.op.as_ref(),
                NORM_ITERS,
                config.seed,
            )?);
        }
    }
    let norms = problem.op_norms()?;
    let sigmas = default_step_sizes(&norms, config.tau)?;
    let params = SplitParams {
        tau: config.tau,
        sigmas,
        relax: config.lambda,
        max_iter: config.outer_iters,
        tol: config.outer_tol,
    };
    Ok((problem, params))
}

/// Result of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: Vec<f64>,
    /// `‖Aμ - b‖`.
    pub data_residual: f64,
    /// Splitting result (absent for FBP).
    pub split: Option<SplitResult>,
}

/// Runs `config.method` on data `b`.
pub fn reconstruct(
    config: &ExperimentConfig,
    ray: Arc<RayTransform>,
    b: &[f64],
    kappa: f64,
    prior: Option<&[f64]>,
    observer: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<Reconstruction> {
    let (image, split) = if config.method == Method::Fbp {
        (fbp(b, &ray, config.fbp_filter)?, None)
    } else {
        let (mut problem, params) = assemble_problem(config, ray.clone(), b, kappa, prior)?;
        let res = douglas_rachford_solve(&mut problem, &params, observer)?;
        (res.solution.clone(), Some(res))
    };
    let ax = ray.apply(&image)?;
    let data_residual = ax
        .iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(Reconstruction {
        image,
        data_residual,
        split,
    })
}
