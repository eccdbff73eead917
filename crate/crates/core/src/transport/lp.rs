//! Exact (unregularized) transport cost for tiny problems, used as a
//! reference value.

use crate::error::{check_len, Error, Result};

/// Largest supported side length.
const MAX_SIDE: usize = 3;

/// Optimal value of `min trace(Cᵀ M)` over nonnegative `M` with row sums `μ0`
/// and column sums `μ1`, for `n0, n1 ≤ 3`.
///
/// Every vertex of the transportation polytope is the unique solution
/// supported on a spanning tree of the complete bipartite graph, so the
/// minimum is found by enumerating spanning trees and keeping the feasible
/// ones.
pub fn exact_transport_lp(mu0: &[f64], mu1: &[f64], cost: &[f64]) -> Result<f64> {
    let (n0, n1) = (mu0.len(), mu1.len());
    if n0 == 0 || n1 == 0 || n0 > MAX_SIDE || n1 > MAX_SIDE {
        return Err(Error::Unsupported(format!(
            "exact transport is limited to {MAX_SIDE}x{MAX_SIDE}, got {n0}x{n1}"
        )));
    }
    check_len("cost matrix", n0 * n1, cost.len())?;
    let mass: f64 = mu0.iter().sum();
    let tol = 1e-12 * mass.abs().max(1.0);
    if (mass - mu1.iter().sum::<f64>()).abs() > tol {
        return Err(Error::Model("marginals have different total mass".into()));
    }
    if mu0.iter().chain(mu1).any(|&m| m < 0.0) {
        return Err(Error::Domain("marginals must be nonnegative".into()));
    }

    let edges = n0 * n1;
    let tree_size = n0 + n1 - 1;
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << edges) {
        if subset.count_ones() as usize != tree_size {
            continue;
        }
        let chosen: Vec<usize> = (0..edges).filter(|e| subset & (1 << e) != 0).collect();
        if let Some(flow) = tree_flow(&chosen, mu0, mu1) {
            if flow.iter().all(|&(_, f)| f >= -tol) {
                let value: f64 = flow.iter().map(|&(e, f)| cost[e] * f.max(0.0)).sum();
                best = best.min(value);
            }
        }
    }
    Ok(best)
}

/// Flows on the edges of a spanning tree, found by repeatedly peeling leaves.
/// Returns `None` if the edge set has a cycle (it is then not a tree).
fn tree_flow(edges: &[usize], mu0: &[f64], mu1: &[f64]) -> Option<Vec<(usize, f64)>> {
    let (n0, n1) = (mu0.len(), mu1.len());
    // Nodes 0..n0 are sources, n0..n0+n1 sinks; supply is the remaining mass.
    let mut supply: Vec<f64> = mu0.iter().chain(mu1).cloned().collect();
    let mut alive = vec![true; edges.len()];
    let mut flows = Vec::with_capacity(edges.len());
    let ends = |e: usize| (e / n1, n0 + e % n1);
    for _ in 0..edges.len() {
        let mut degree = vec![0usize; n0 + n1];
        for (k, &e) in edges.iter().enumerate() {
            if alive[k] {
                let (a, b) = ends(e);
                degree[a] += 1;
                degree[b] += 1;
            }
        }
        let (k, leaf) = edges.iter().enumerate().find_map(|(k, &e)| {
            let (a, b) = ends(e);
            if !alive[k] {
                None
            } else if degree[a] == 1 {
                Some((k, a))
            } else if degree[b] == 1 {
                Some((k, b))
            } else {
                None
            }
        })?;
        let (a, b) = ends(edges[k]);
        let f = supply[leaf];
        supply[a] -= f;
        supply[b] -= f;
        alive[k] = false;
        flows.push((edges[k], f));
    }
    Some(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_plan_costs_nothing() {
        let c = [0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let mu = [0.2, 0.5, 0.3];
        assert!(exact_transport_lp(&mu, &mu, &c).unwrap().abs() < 1e-15);
        assert_eq!(
            exact_transport_lp(&[1.0, 1.0], &[1.0, 1.0], &[0.0, 1.0, 1.0, 0.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn moves_one_unit() {
        let v = exact_transport_lp(&[2.0, 1.0], &[1.0, 2.0], &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rectangular_and_degenerate() {
        // One source feeding three sinks: the plan is forced.
        let v = exact_transport_lp(&[3.0], &[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((v - 6.0).abs() < 1e-14);
        // Zero-mass row.
        let v = exact_transport_lp(&[0.0, 1.0], &[0.5, 0.5], &[0.0, 0.0, 1.0, 3.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn brute_force_grid_agrees() {
        // 2×2: one free parameter m11 ∈ [max(0, a - d), min(a, c)].
        let (mu0, mu1) = ([0.7, 0.3], [0.4, 0.6]);
        let c = [0.3, 0.9, 0.5, 0.1];
        let mut best = f64::INFINITY;
        for k in 0..=100_000 {
            let m11 = 0.4 * k as f64 / 100_000.0;
            let m = [m11, 0.7 - m11, 0.4 - m11, 0.6 - 0.7 + m11];
            if m.iter().all(|&x| x >= -1e-15) {
                best = best.min(m.iter().zip(&c).map(|(a, b)| a * b).sum());
            }
        }
        let v = exact_transport_lp(&mu0, &mu1, &c).unwrap();
        assert!((v - best).abs() < 1e-12);
    }

    #[test]
    fn size_limit() {
        assert!(matches!(
            exact_transport_lp(&[1.0; 4], &[1.0; 4], &[0.0; 16]),
            Err(Error::Unsupported(_))
        ));
    }
}
