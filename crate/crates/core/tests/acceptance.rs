//! Acceptance run: every criterion prints one PASS/FAIL line, and the process
//! exits nonzero if any of them fails.
//!
//! `ACCEPTANCE_ONLY=2,5` restricts the run to the listed criteria.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use otprox::operators::{power_iteration_norm, DenseOperator, Identity};
use otprox::prox::ProxFunction;
use otprox::splitting::{douglas_rachford_solve, SplitParams, SplitProblem, Term};
use otprox::tomo::{
    prepare_prior, reconstruct, shepp_logan, simulate_data, warped_shepp_logan, ExperimentConfig,
    Method,
};
use otprox::transport::{
    algorithm3_iterate, apply_plan, build_cost, exact_transport_lp, generalized_sinkhorn,
    omt_prox, sinkhorn, CostSpec, GridSpec, HalfStep, IterateView, KernelOperator, PlanDirection,
    QuadraticPenalty, SinkhornSettings,
};
use otprox::{wright_omega, Gradient, LinearOperator, OmegaEvalPolicy, ParallelGeometry, RayTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), otprox::Error>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------

fn omega_identity() -> Outcome {
    let mut r = rng(11);
    let xs = uniform(&mut r, 100_000, -700.0, 700.0);
    let policy = OmegaEvalPolicy::default();
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for &x in &xs {
        let w = wright_omega(x, &policy)?;
        worst = worst.max((w + w.ln() - x).abs() / x.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-12 && secs < 1.0,
        format!("max scaled residual {worst:.2e}, {secs:.3} s for 1e5 samples"),
    ))
}

fn sinkhorn_duality() -> Outcome {
    let mut r = rng(21);
    let (n0, n1) = (20, 30);
    let mut worst_res = 0.0_f64;
    let mut worst_gap = 0.0_f64;
    let mut worst_drop = 0.0_f64;
    let mut max_iters = 0;
    let mut ok = true;
    for _ in 0..50 {
        let cost = CostSpec::dense(n0, n1, uniform(&mut r, n0 * n1, 0.0, 1.0))?;
        let kernel = KernelOperator::new_dense(&cost, 0.1)?;
        let mut mu0 = uniform(&mut r, n0, 0.5, 1.5);
        let mut mu1 = uniform(&mut r, n1, 0.5, 1.5);
        let (s0, s1) = (mu0.iter().sum::<f64>(), mu1.iter().sum::<f64>());
        mu0.iter_mut().for_each(|m| *m /= s0);
        mu1.iter_mut().for_each(|m| *m /= s1);
        let settings = SinkhornSettings {
            tol: 1e-10,
            max_iter: 5000,
            record_dual: true,
        };
        let (_, rep) = sinkhorn(&mu0, &mu1, &kernel, &settings, None)?;
        let res = rep.marginal_residual_row.max(rep.marginal_residual_col_or_kkt);
        let gap = (rep.primal_value - rep.dual_value).abs() / (1.0 + rep.primal_value.abs());
        // Each half-step is an exact block maximization, so any decrease is
        // roundoff in evaluating the dual sum.
        let drop = rep
            .dual_trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / (1.0 + w[0].abs()))
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= rep.converged && res <= 1e-10 && gap <= 1e-8 && drop <= 1e-13;
        worst_res = worst_res.max(res);
        worst_gap = worst_gap.max(gap);
        worst_drop = worst_drop.max(drop);
        max_iters = max_iters.max(rep.iterations);
    }
    Ok((
        ok,
        format!(
            "max residual {worst_res:.2e}, max scaled gap {worst_gap:.2e}, largest dual drop {worst_drop:.2e}, max iterations {max_iters}"
        ),
    ))
}

fn entropic_to_lp() -> Outcome {
    let mut r = rng(31);
    let mut ok = true;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_order = f64::NEG_INFINITY;
    for _ in 0..20 {
        let c = uniform(&mut r, 9, 0.0, 1.0);
        let mu0 = uniform(&mut r, 3, 0.5, 1.5);
        let mut mu1 = uniform(&mut r, 3, 0.5, 1.5);
        let s = mu0.iter().sum::<f64>() / mu1.iter().sum::<f64>();
        mu1.iter_mut().for_each(|m| *m *= s);
        let lp = exact_transport_lp(&mu0, &mu1, &c)?;
        let cost = CostSpec::dense(3, 3, c)?;
        for eps in [1.0, 0.1, 0.01] {
            let kernel = KernelOperator::new_dense(&cost, eps)?;
            let settings = SinkhornSettings::with_tol(1e-13, 200_000);
            let (_, rep) = sinkhorn(&mu0, &mu1, &kernel, &settings, None)?;
            let t = rep.primal_value;
            worst_order = worst_order.max(lp - t);
            ok &= lp <= t;
            if eps == 0.01 {
                let excess = (t - lp) / (1.0 + lp);
                worst_excess = worst_excess.max(excess);
                ok &= excess <= 0.05;
            }
        }
    }
    Ok((
        ok,
        format!(
            "max (T_LP - T_eps) {worst_order:.2e}, max (T_0.01 - T_LP)/(1 + T_LP) {worst_excess:.4}"
        ),
    ))
}

/// Squared distance on an `n × n` grid with unit spacing, written out directly.
fn grid_cost(n: usize) -> Vec<f64> {
    let m = n * n;
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let dr = (i / n) as f64 - (j / n) as f64;
            let dc = (i % n) as f64 - (j % n) as f64;
            c[i * m + j] = dr * dr + dc * dc;
        }
    }
    c
}

/// Maximizes the concave dual of the quadratic-penalty transport prox,
/// `λ0·μ0 + λ1·μ1 - σ‖λ1‖²/2 - ε Σ exp((λ0_i + λ1_j - C_ij)/ε)`,
/// by damped Newton and returns `μ1 - σλ1`.
fn newton_prox_oracle(mu0: &[f64], mu1: &[f64], cost: &[f64], sigma: f64, eps: f64) -> Vec<f64> {
    let (n0, n1) = (mu0.len(), mu1.len());
    let plan = |l0: &[f64], l1: &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                m[i * n1 + j] = ((l0[i] + l1[j] - cost[i * n1 + j]) / eps).exp();
            }
        }
        m
    };
    let objective = |l0: &[f64], l1: &[f64]| -> f64 {
        dot(l0, mu0) + dot(l1, mu1) - 0.5 * sigma * dot(l1, l1) - eps * plan(l0, l1).iter().sum::<f64>()
    };
    let mut l0 = vec![0.0; n0];
    let mut l1 = vec![0.0; n1];
    for _ in 0..500 {
        let m = plan(&l0, &l1);
        let row: Vec<f64> = (0..n0).map(|i| m[i * n1..(i + 1) * n1].iter().sum()).collect();
        let col: Vec<f64> = (0..n1).map(|j| (0..n0).map(|i| m[i * n1 + j]).sum()).collect();
        let mut g = DVector::zeros(n0 + n1);
        for i in 0..n0 {
            g[i] = mu0[i] - row[i];
        }
        for j in 0..n1 {
            g[n0 + j] = mu1[j] - sigma * l1[j] - col[j];
        }
        if g.amax() <= 1e-14 * mu0.iter().sum::<f64>() {
            break;
        }
        let mut h = DMatrix::zeros(n0 + n1, n0 + n1);
        for i in 0..n0 {
            h[(i, i)] = row[i] / eps;
            for j in 0..n1 {
                h[(i, n0 + j)] = m[i * n1 + j] / eps;
                h[(n0 + j, i)] = m[i * n1 + j] / eps;
            }
        }
        for j in 0..n1 {
            h[(n0 + j, n0 + j)] = col[j] / eps + sigma;
        }
        let step = h.cholesky().expect("negative dual Hessian is positive definite").solve(&g);
        let f0 = objective(&l0, &l1);
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let c0: Vec<f64> = (0..n0).map(|i| l0[i] + t * step[i]).collect();
            let c1: Vec<f64> = (0..n1).map(|j| l1[j] + t * step[n0 + j]).collect();
            if objective(&c0, &c1) >= f0 + 1e-4 * t * slope || t < 1e-12 {
                l0 = c0;
                l1 = c1;
                break;
            }
            t *= 0.5;
        }
    }
    mu1.iter().zip(&l1).map(|(m, l)| m - sigma * l).collect()
}

struct ProxCase {
    rel_err: f64,
    kkt_row: f64,
    kkt_col: f64,
    mass_err: f64,
    rho: f64,
}

fn prox_cases() -> Result<Vec<ProxCase>, otprox::Error> {
    let n = 8;
    let eps = 1.0;
    let cost = grid_cost(n);
    let kdense: Vec<f64> = cost.iter().map(|c| (-c / eps).exp()).collect();
    let kernel = KernelOperator::new(build_cost(GridSpec::square(n), 2.0, 100.0)?, eps)?;
    let m = n * n;
    let mut r = rng(41);
    let mut out = Vec::new();
    for _ in 0..20 {
        let mu0 = uniform(&mut r, m, 0.5, 1.5);
        let mu1 = uniform(&mut r, m, 0.0, 2.0);
        for sigma in [0.1, 1.0, 10.0] {
            let settings = SinkhornSettings::with_tol(1e-13, 200_000);
            let (est, pot, rep) = omt_prox(&mu0, &mu1, sigma, &kernel, &settings, None)?;
            let oracle = newton_prox_oracle(&mu0, &mu1, &cost, sigma, eps);
            let (u0, u1) = pot.scalings(eps)?;
            let mut kkt_row = 0.0_f64;
            let mut kkt_col = 0.0_f64;
            for i in 0..m {
                let ku1: f64 = (0..m).map(|j| kdense[i * m + j] * u1[j]).sum();
                kkt_row = kkt_row.max((u0[i] * ku1 - mu0[i]).abs());
                let ktu0: f64 = (0..m).map(|j| kdense[j * m + i] * u0[j]).sum();
                kkt_col = kkt_col.max((u1[i] * ktu0 - (mu1[i] - sigma * pot.lambda1[i])).abs());
            }
            let h = &rep.residual_history;
            let tail = &h[h.len().saturating_sub(51)..];
            let ratios: Vec<f64> = tail
                .windows(2)
                .filter(|w| w[0] > 0.0)
                .map(|w| w[1] / w[0])
                .collect();
            let rho = if ratios.is_empty() { f64::NAN } else { median(ratios) };
            let m0: f64 = mu0.iter().sum();
            out.push(ProxCase {
                rel_err: dist(&est, &oracle) / norm(&oracle),
                kkt_row,
                kkt_col,
                mass_err: (est.iter().sum::<f64>() - m0).abs() / m0,
                rho,
            });
        }
    }
    Ok(out)
}

fn prox_correctness(cases: &[ProxCase]) -> Outcome {
    let max = |f: fn(&ProxCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    let (e, kr, kc, me) = (
        max(|c| c.rel_err),
        max(|c| c.kkt_row),
        max(|c| c.kkt_col),
        max(|c| c.mass_err),
    );
    Ok((
        e <= 1e-5 && kr <= 1e-8 && kc <= 1e-8 && me <= 1e-10,
        format!(
            "{} solves, max relative error {e:.2e}, KKT residuals {kr:.2e} / {kc:.2e}, mass error {me:.2e}",
            cases.len()
        ),
    ))
}

fn linear_convergence(cases: &[ProxCase]) -> Outcome {
    let rhos: Vec<f64> = cases.iter().map(|c| c.rho).collect();
    let ok = rhos.iter().all(|r| *r < 1.0);
    let lo = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((ok, format!("rho in [{lo:.4}, {hi:.4}] over {} solves", rhos.len())))
}

fn algorithm_equivalence() -> Outcome {
    let mut r = rng(51);
    let n = 10;
    let iters = 40;
    let mut worst = 0.0_f64;
    let mut compared = iters;
    for _ in 0..10 {
        let cost = CostSpec::dense(n, n, uniform(&mut r, n * n, 0.0, 1.0))?;
        let eps = 0.5;
        let kernel = KernelOperator::new_dense(&cost, eps)?;
        let mu0 = uniform(&mut r, n, 0.5, 1.5);
        let mu1 = uniform(&mut r, n, 0.0, 2.0);
        let sigma = r.random_range(0.1..10.0);
        let mut u0s: Vec<Vec<f64>> = Vec::new();
        let mut u1s: Vec<Vec<f64>> = Vec::new();
        let mut obs = |v: &IterateView| {
            let scale = |l: &[f64]| l.iter().map(|x| (x / eps).exp()).collect::<Vec<_>>();
            match v.half {
                HalfStep::Row => u0s.push(scale(v.lambda0)),
                HalfStep::Column => u1s.push(scale(v.lambda1)),
            }
        };
        let update = QuadraticPenalty::new(&mu1, sigma);
        generalized_sinkhorn(
            &mu0,
            &kernel,
            &update,
            &SinkhornSettings::fixed(iters + 1),
            None,
            Some(&mut obs),
        )?;
        let pairs = algorithm3_iterate(&mu0, &mu1, sigma, &kernel, iters)?;
        let rel = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max)
        };
        // The generalized loop stops early once an update is exactly stationary.
        for (k, p) in pairs.iter().enumerate() {
            if k < u0s.len() {
                worst = worst.max(rel(&p.u0, &u0s[k]));
            }
            if k < u1s.len() {
                worst = worst.max(rel(&p.u1, &u1s[k]));
            }
        }
        compared = compared.min(u1s.len());
    }
    Ok((
        worst <= 1e-10 && compared >= 10,
        format!("max relative difference of scalings {worst:.2e}, at least {compared} iterations compared per instance"),
    ))
}

fn adjoint_gap(op: &dyn LinearOperator, r: &mut ChaCha8Rng, pairs: usize) -> Result<f64, otprox::Error> {
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let x = uniform(r, op.domain_len(), -1.0, 1.0);
        let y = uniform(r, op.range_len(), -1.0, 1.0);
        let ax = op.apply(&x)?;
        let aty = op.adjoint(&y)?;
        let scale = norm(&ax) * norm(&y);
        worst = worst.max((dot(&ax, &y) - dot(&x, &aty)).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn dense_svd_norm(op: &dyn LinearOperator) -> Result<f64, otprox::Error> {
    let d = DenseOperator::from_operator(op)?;
    let m = DMatrix::from_row_slice(op.range_len(), op.domain_len(), d.data());
    Ok(m.singular_values().max())
}

fn operator_integrity() -> Outcome {
    let mut r = rng(61);
    let grad2 = Gradient::new(&[16, 12])?;
    let grad1 = Gradient::new(&[40])?;
    let g_adj = adjoint_gap(&grad2, &mut r, 100)?.max(adjoint_gap(&grad1, &mut r, 100)?);

    let geom = ParallelGeometry::new(32, 32, 12, (0.3, 2.9), 45)?;
    let stored = RayTransform::new(geom.clone())?;
    let free = RayTransform::matrix_free(geom)?;
    let r_adj = adjoint_gap(&stored, &mut r, 100)?.max(adjoint_gap(&free, &mut r, 100)?);

    // Kernel products against K_ij = exp(-min(|x_i - x_j|, t)^p / ε) built here.
    let mut k_err = 0.0_f64;
    let cases: [(usize, usize, f64, f64, f64, f64); 7] = [
        (1, 7, 1.0, 2.0, 100.0, 1.0),
        (4, 4, 1.0, 2.0, 100.0, 0.5),
        (5, 9, 0.5, 1.0, 100.0, 0.3),
        (8, 8, 1.0, 2.0, 3.0, 2.0),
        (16, 16, 1.0, 2.0, 20.0, 1.0),
        (13, 21, 0.7, 1.5, 6.0, 1.0),
        (32, 32, 1.0, 2.0, 20.0, 4.0),
    ];
    for (rows, cols, h, p, t, eps) in cases {
        let grid = GridSpec::new(vec![rows, cols], vec![h, h])?;
        let kernel = KernelOperator::new(build_cost(grid, p, t)?, eps)?;
        let n = rows * cols;
        let v = uniform(&mut r, n, 0.0, 1.0);
        let w = uniform(&mut r, n, -1.0, 1.0);
        let mut kv = vec![0.0; n];
        let mut kw = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let dr = h * ((i / cols) as f64 - (j / cols) as f64);
                let dc = h * ((i % cols) as f64 - (j % cols) as f64);
                let k = (-(dr.hypot(dc).min(t)).powf(p) / eps).exp();
                kv[i] += k * v[j];
                kw[i] += k * w[j];
            }
        }
        for transpose in [false, true] {
            let a = kernel.apply_nonneg(&v, transpose)?;
            let b = kernel.apply(&w, transpose)?;
            let sv = kv.iter().cloned().fold(1.0, f64::max);
            let sw = kw.iter().map(|x| x.abs()).fold(1.0, f64::max);
            k_err = k_err.max(dist_inf(&a, &kv) / sv).max(dist_inf(&b, &kw) / sw);
        }
    }

    let mut n_err = 0.0_f64;
    let ops: Vec<Box<dyn LinearOperator>> = vec![
        Box::new(Gradient::new(&[8, 8])?),
        Box::new(RayTransform::new(ParallelGeometry::new(8, 8, 6, (0.0, 3.0), 11)?)?),
        Box::new(Identity(64)),
    ];
    for op in &ops {
        let est = power_iteration_norm(op.as_ref(), 1000, 7)?;
        let exact = dense_svd_norm(op.as_ref())?;
        n_err = n_err.max((est - exact).abs() / exact);
    }

    Ok((
        g_adj <= 1e-12 && r_adj <= 1e-8 && k_err <= 1e-10 && n_err <= 1e-6,
        format!(
            "adjoint gaps gradient {g_adj:.2e} / ray {r_adj:.2e}, kernel error {k_err:.2e}, norm error {n_err:.2e}"
        ),
    ))
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn split_params(tau: f64, sigmas: Vec<f64>, max_iter: usize, tol: f64) -> SplitParams {
    SplitParams {
        tau,
        sigmas,
        relax: 1.0,
        max_iter,
        tol,
    }
}

/// `min_{x ≥ 0} w Σ|(Dx)_i| + ½‖x - b‖²` with `D` the zero-padded forward
/// difference, by FISTA on the box-constrained dual. Returns the primal point
/// and the duality gap, which bounds `½‖x - x*‖²`.
fn tv1d_oracle(b: &[f64], w: f64) -> (Vec<f64>, f64) {
    let n = b.len();
    let d = |x: &[f64]| -> Vec<f64> {
        (0..n).map(|i| if i + 1 < n { x[i + 1] - x[i] } else { -x[i] }).collect()
    };
    let dt = |p: &[f64]| -> Vec<f64> {
        (0..n).map(|i| if i > 0 { p[i - 1] - p[i] } else { -p[i] }).collect()
    };
    let primal_of = |p: &[f64]| -> Vec<f64> {
        let q = dt(p);
        b.iter().zip(&q).map(|(bi, qi)| (bi - qi).max(0.0)).collect()
    };
    let primal = |x: &[f64]| w * d(x).iter().map(|v| v.abs()).sum::<f64>() + 0.5 * dist(x, b).powi(2);
    let dual = |p: &[f64]| {
        let x = primal_of(p);
        0.5 * dist(&x, b).powi(2) + dot(&dt(p), &x)
    };
    let step = 0.25;
    let mut p = vec![0.0; n];
    let mut y = p.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let g = d(&primal_of(&y));
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| (yi + step * gi).clamp(-w, w)).collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&p)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        p = next;
        t = t_next;
    }
    let x = primal_of(&p);
    let gap = primal(&x) - dual(&p);
    (x, gap)
}

fn splitting_driver() -> Outcome {
    let mut r = rng(71);
    // Quadratic: min ½‖z - b‖² has minimizer b.
    let n = 50;
    let b = uniform(&mut r, n, -2.0, 2.0);
    let half = ProxFunction::SquaredL2 {
        weight: 0.5,
        center: vec![0.0; n],
    };
    let mut quad = SplitProblem::new(
        ProxFunction::Zero,
        vec![Term::new(half.clone(), Arc::new(Identity(n)), Some(b.clone())).with_norm(1.0)],
        n,
    )?;
    let res = douglas_rachford_solve(&mut quad, &split_params(1.0, vec![1.0], 5000, 1e-14), None)?;
    let q_err = dist(&res.solution, &b);

    // Condition value 4.5 must be rejected before the first iteration.
    let mut calls = 0;
    let mut bad = SplitProblem::new(
        ProxFunction::Zero,
        vec![Term::new(half, Arc::new(Identity(n)), Some(b.clone())).with_norm(1.0)],
        n,
    )?;
    let rejected = {
        let mut obs = |_: &otprox::splitting::IterationRecord| calls += 1;
        matches!(
            douglas_rachford_solve(&mut bad, &split_params(1.5, vec![3.0], 10, 0.0), Some(&mut obs)),
            Err(otprox::Error::Config(_))
        )
    };

    // 1-D TV denoising with a nonnegativity constraint.
    let m = 16;
    let wgt = 0.3;
    let noisy: Vec<f64> = (0..m)
        .map(|i| if (4..10).contains(&i) { 1.0 } else { 0.1 } + r.random_range(-0.3..0.3))
        .collect();
    let (oracle, gap) = tv1d_oracle(&noisy, wgt);
    let mut tv = SplitProblem::new(
        ProxFunction::IndicatorNonneg,
        vec![
            Term::new(
                ProxFunction::GroupL21 { groups: 1, weight: wgt },
                Arc::new(Gradient::new(&[m])?),
                None,
            ),
            Term::new(
                ProxFunction::SquaredL2 {
                    weight: 0.5,
                    center: vec![0.0; m],
                },
                Arc::new(Identity(m)),
                Some(noisy.clone()),
            )
            .with_norm(1.0),
        ],
        m,
    )?;
    let norms = tv.op_norms()?;
    let tau = 0.5;
    let sigmas = norms.iter().map(|l| 1.0 / (tau * l * l)).collect();
    let sol = douglas_rachford_solve(&mut tv, &split_params(tau, sigmas, 200_000, 1e-15), None)?;
    let tv_err = dist(&sol.solution, &oracle);
    let bound = (2.0 * gap.max(0.0)).sqrt();

    Ok((
        q_err <= 1e-6 && rejected && calls == 0 && tv_err + bound <= 1e-5,
        format!(
            "quadratic error {q_err:.2e}, step violation rejected: {}, TV error {tv_err:.2e} (oracle duality gap {gap:.1e}, {} iterations)",
            rejected && calls == 0,
            sol.iterations
        ),
    ))
}

fn desk_ct() -> Outcome {
    let start = Instant::now();
    let base = ExperimentConfig::defaults(Method::Tv);
    let phantom = shepp_logan(base.image_size)?;
    let ray = Arc::new(base.ray_transform()?);
    let (b, kappa) = simulate_data(&phantom, &ray, base.noise_level, base.kappa_factor, base.seed)?;
    let prior = prepare_prior(
        &warped_shepp_logan(base.image_size, base.warp_amplitude)?,
        &ray,
        &b,
    )?;
    let pnorm = norm(&phantom);
    let run = |cfg: &ExperimentConfig| -> Result<(f64, f64, f64, f64), otprox::Error> {
        let t = Instant::now();
        let rec = reconstruct(cfg, ray.clone(), &b, kappa, Some(&prior), None)?;
        Ok((
            rec.data_residual / kappa,
            dist(&rec.image, &phantom) / pnorm,
            dist(&rec.image, &prior) / norm(&prior),
            t.elapsed().as_secs_f64(),
        ))
    };
    let mut lines = Vec::new();
    let mut ok = true;
    let mut errs = Vec::new();
    for method in [Method::Fbp, Method::Tv, Method::TvL2, Method::TvOmt] {
        let (res, err, _, secs) = run(&ExperimentConfig::defaults(method))?;
        errs.push(err);
        if method != Method::Fbp {
            ok &= res <= 1.001;
        }
        lines.push(format!("{method}: residual/kappa {res:.5}, relerr {err:.4}, {secs:.0} s"));
    }
    // Order above: fbp, tv, tv_l2, tv_omt.
    ok &= errs[3] <= errs[0];
    let mut dprior = Vec::new();
    for gamma in [1.0, 100.0, 10_000.0] {
        let mut cfg = ExperimentConfig::defaults(Method::TvL2);
        cfg.gamma = gamma;
        let (res, _, d, _) = run(&cfg)?;
        lines.push(format!("tv_l2 gamma {gamma}: distance to prior {d:.4}, residual/kappa {res:.5}"));
        dprior.push(d);
    }
    ok &= dprior.windows(2).all(|w| w[1] <= w[0]);
    lines.push(format!("total {:.0} s", start.elapsed().as_secs_f64()));
    Ok((ok, lines.join("; ")))
}

fn mass_flow() -> Outcome {
    let n = 24;
    let eps = 1.0;
    let prior: Vec<f64> = warped_shepp_logan(n, 0.06)?.iter().map(|v| v + 0.01).collect();
    let mut r = rng(81);
    let target: Vec<f64> = shepp_logan(n)?
        .iter()
        .map(|v| v + r.random_range(-0.05..0.05))
        .collect();
    let kernel = KernelOperator::new(build_cost(GridSpec::square(n), 2.0, 20.0)?, eps)?;
    let (est, pot, _) = omt_prox(&prior, &target, 20.0, &kernel, &SinkhornSettings::fixed(200), None)?;
    let mut worst = 0.0_f64;
    let partitions: Vec<Vec<usize>> = vec![
        (0..n * n).map(|_| r.random_range(0..6)).collect(),
        (0..n * n).map(|i| 2 * (i / n >= n / 2) as usize + (i % n >= n / 2) as usize).collect(),
        (0..n * n).map(|i| (i * 7) % 3).collect(),
    ];
    for labels in &partitions {
        let k = labels.iter().max().unwrap() + 1;
        let mut sum = vec![0.0; n * n];
        for region in 0..k {
            let ind: Vec<f64> = labels.iter().map(|&l| (l == region) as u8 as f64).collect();
            let flow = apply_plan(&kernel, &pot, &ind, PlanDirection::Forward)?;
            sum.iter_mut().zip(&flow).for_each(|(s, f)| *s += f);
        }
        worst = worst.max(dist(&sum, &est) / norm(&est));
    }
    Ok((
        worst <= 1e-8,
        format!("max relative mismatch {worst:.2e} over {} partitions", partitions.len()),
    ))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));

    // Criteria 4 and 6 share the same prox solves.
    let cases = if wanted(4) || wanted(6) { Some(prox_cases()) } else { None };
    let with_cases = |f: fn(&[ProxCase]) -> Outcome| match &cases {
        Some(Ok(c)) => f(c),
        Some(Err(e)) => Ok((false, format!("error: {e}"))),
        None => unreachable!(),
    };

    let mut failed = 0;
    for k in 1..=10 {
        if !wanted(k) {
            continue;
        }
        let (name, outcome) = match k {
            1 => ("omega identity", omega_identity()),
            2 => ("sinkhorn feasibility and duality", sinkhorn_duality()),
            3 => ("entropic to LP consistency", entropic_to_lp()),
            4 => ("prox correctness", with_cases(prox_correctness)),
            5 => ("algorithm equivalence", algorithm_equivalence()),
            6 => ("local linear convergence", with_cases(linear_convergence)),
            7 => ("operator integrity", operator_integrity()),
            8 => ("splitting driver", splitting_driver()),
            9 => ("desk-scale CT", desk_ct()),
            _ => ("mass-flow consistency", mass_flow()),
        };
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!("criterion {k} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
