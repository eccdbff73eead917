//! The entropic (Kullback–Leibler) proximal form of the quadratic-penalty
//! iteration, kept as an independent cross-check of the `λ`-domain update.

use super::KernelOperator;
use crate::error::{check_len, Error, Result};
use crate::special_fn::{wright_omega, OmegaEvalPolicy};

/// `argmin_x ‖x - μ1‖² / (2σε) + Σ x log(x/z) - x + z`, the KL proximal point
/// of `g/ε` at `z` for `g = ‖· - μ1‖² / (2σ)`.
///
/// Closed form: `σε · ω(μ1/(σε) + log(z/(σε)))`.
pub fn kl_prox_quadratic(z: &[f64], mu1: &[f64], sigma: f64, epsilon: f64) -> Result<Vec<f64>> {
    check_len("kl prox center", z.len(), mu1.len())?;
    if !(sigma > 0.0) || !(epsilon > 0.0) {
        return Err(Error::Config(format!(
            "sigma and epsilon must be positive, got {sigma} and {epsilon}"
        )));
    }
    let se = sigma * epsilon;
    let policy = OmegaEvalPolicy::default();
    z.iter()
        .zip(mu1)
        .enumerate()
        .map(|(i, (&zi, &m))| {
            if !(zi > 0.0) {
                return Err(Error::Domain(format!(
                    "kl prox needs a positive point, entry {i} is {zi}"
                )));
            }
            Ok(se * wright_omega(m / se + (zi / se).ln(), &policy)?)
        })
        .collect()
}

/// Scalings `(u0, u1)` after one full iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPair {
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
}

/// Runs `iters` iterations of the scaling-domain recursion
/// `u0 = μ0 ./ (K u1)`, `u1 = Prox^KL(Kᵀ u0) ./ (Kᵀ u0)` from `u1 = 1` and
/// returns every iterate.
pub fn algorithm3_iterate(
    mu0: &[f64],
    mu1: &[f64],
    sigma: f64,
    kernel: &KernelOperator,
    iters: usize,
) -> Result<Vec<ScalingPair>> {
    check_len("first marginal", kernel.n0(), mu0.len())?;
    check_len("second marginal", kernel.n1(), mu1.len())?;
    let mut u1 = vec![1.0; kernel.n1()];
    let mut out = Vec::with_capacity(iters);
    for it in 1..=iters {
        let ku1 = kernel.apply_nonneg(&u1, false)?;
        let u0: Vec<f64> = mu0.iter().zip(&ku1).map(|(m, k)| m / k).collect();
        if u0.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("K u1 vanished; increase epsilon").at_iteration(it));
        }
        let z = kernel.apply_nonneg(&u0, true)?;
        let p = kl_prox_quadratic(&z, mu1, sigma, kernel.epsilon())?;
        u1 = p.iter().zip(&z).map(|(a, b)| a / b).collect();
        out.push(ScalingPair { u0, u1: u1.clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::CostSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_point() {
        let (sigma, eps) = (0.7, 1.3);
        // The ω argument is 1 + log(z/(σε)) = 1 when z = σε.
        let p = kl_prox_quadratic(&[sigma * eps], &[sigma * eps], sigma, eps).unwrap();
        assert!((p[0] - sigma * eps).abs() < 1e-15);
        let p = kl_prox_quadratic(&[1.0], &[1.0], 0.5, 2.0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let sigma = rng.random_range(0.05..5.0);
            let eps = rng.random_range(0.1..3.0);
            let z: Vec<f64> = (0..30).map(|_| rng.random_range(1e-3..10.0)).collect();
            let mu1: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = kl_prox_quadratic(&z, &mu1, sigma, eps).unwrap();
            for i in 0..30 {
                let r = (x[i] - mu1[i]) / (sigma * eps) + (x[i] / z[i]).ln();
                assert!(r.abs() <= 1e-10, "residual {r}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive_point() {
        assert!(matches!(
            kl_prox_quadratic(&[0.0], &[1.0], 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_cost_reduces_to_scalar_recursion() {
        // With K = 11ᵀ only s = Σu0 matters: the column marginal is p(s) with
        // p_j(s) = σε ω(μ1_j/(σε) + log(s/(σε))), and the fixed point has
        // Σp(s*) = Σμ0. Solve for s* by bisection and compare.
        let k = KernelOperator::new(CostSpec::dense(3, 3, vec![0.0; 9]).unwrap(), 1.0).unwrap();
        let mu = [0.2, 0.3, 0.5];
        let sigma = 1.0;
        let p = |s: f64| kl_prox_quadratic(&[s; 3], &mu, sigma, 1.0).unwrap();
        let (mut lo, mut hi) = (1e-6_f64, 1e6_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if p(mid).iter().sum::<f64>() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let expected = p(lo);
        let it = algorithm3_iterate(&mu, &mu, sigma, &k, 300).unwrap();
        let last = it.last().unwrap();
        let s: f64 = last.u0.iter().sum();
        for j in 0..3 {
            assert!((last.u1[j] * s - expected[j]).abs() <= 1e-10);
        }
        // First sweep: u0 = μ0 / 3.
        for i in 0..3 {
            assert!((it[0].u0[i] - mu[i] / 3.0).abs() < 1e-16);
        }
    }

    #[test]
    fn first_iterate_of_two_by_two() {
        // u1 = 1, K = [[1, e^-1], [e^-1, 1]]: u0 = μ0 / (1 + e^-1).
        let k = KernelOperator::new(CostSpec::dense(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(), 1.0)
            .unwrap();
        let mu0 = [0.4, 0.6];
        let mu1 = [0.5, 0.5];
        let it = algorithm3_iterate(&mu0, &mu1, 2.0, &k, 1).unwrap();
        let s = 1.0 + (-1.0f64).exp();
        assert!((it[0].u0[0] - 0.4 / s).abs() < 1e-15);
        assert!((it[0].u0[1] - 0.6 / s).abs() < 1e-15);
        // z = Kᵀ u0 and u1 solves (u1 z - μ1)/(σε) + log u1 = 0.
        let e = (-1.0f64).exp();
        let z = [it[0].u0[0] + e * it[0].u0[1], e * it[0].u0[0] + it[0].u0[1]];
        for j in 0..2 {
            let u = it[0].u1[j];
            assert!(((u * z[j] - mu1[j]) / 2.0 + u.ln()).abs() < 1e-13);
        }
    }
}
