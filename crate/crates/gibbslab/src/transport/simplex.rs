//! Exact optimal transport between finite point clouds: a
//! transportation-simplex solver with dual optimality certificates.
//!
//! The solver keeps a spanning-tree basis of m + n - 1 cells
//! (northwest-corner start), prices nonbasic cells with tree
//! potentials, and pivots on the most negative reduced cost until none
//! remains below `-PIVOT_TOL * max|c|`. After a generous pivot budget
//! it falls back to Bland's rule (first negative cell, smallest
//! leaving index) so degenerate instances cannot cycle; a hard cap
//! turns refusal to converge into an error rather than a hang.
//!
//! On sorted one-dimensional supports the northwest-corner start *is*
//! the monotone coupling, so the solver confirms optimality without a
//! single pivot — a property the tests pin as a cross-check between
//! the two routes.

use nalgebra::DVector;

use super::{TransportError, TransportPlan, MAX_PLAN_CELLS, PIVOT_TOL};

/// An exact solution: optimal cost, validated plan, and the dual
/// potentials `(u, v)` certifying optimality (`u_i + v_j <= c_ij`
/// everywhere, with equality on the support).
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub cost: f64,
    pub plan: TransportPlan,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Squared-distance optimal transport between weighted point clouds.
pub fn w2_sq_exact(
    xs: &[DVector<f64>],
    ps: &[f64],
    ys: &[DVector<f64>],
    qs: &[f64],
) -> Result<ExactSolution, TransportError> {
    if xs.len() != ps.len() || ys.len() != qs.len() || xs.is_empty() || ys.is_empty() {
        return Err(TransportError::BadMarginal(
            "points and weights must be nonempty and equal length".into(),
        ));
    }
    let dim = xs[0].len();
    if xs.iter().chain(ys.iter()).any(|p| p.len() != dim) {
        return Err(TransportError::BadMarginal(
            "all points must share one dimension".into(),
        ));
    }
    for &w in ps.iter().chain(qs.iter()) {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(TransportError::BadMarginal("negative or non-finite weight".into()));
        }
    }
    let (sp, sq): (f64, f64) = (ps.iter().sum(), qs.iter().sum());
    if (sp - sq).abs() > 1e-10 {
        return Err(TransportError::Unbalanced { diff: (sp - sq).abs() });
    }
    let cells = xs
        .len()
        .checked_mul(ys.len())
        .ok_or(TransportError::SizeLimit { cells: usize::MAX })?;
    if cells > MAX_PLAN_CELLS {
        return Err(TransportError::SizeLimit { cells });
    }

    let m = xs.len();
    let n = ys.len();
    let mut cost = vec![0.0f64; cells];
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            cost[i * n + j] = (x - y).norm_squared();
        }
    }
    solve(&cost, m, n, ps, qs)
}

/// Core solver over an explicit cost matrix (row-major `m x n`).
pub fn solve(
    cost: &[f64],
    m: usize,
    n: usize,
    supply: &[f64],
    demand: &[f64],
) -> Result<ExactSolution, TransportError> {
    assert_eq!(cost.len(), m * n);
    let c = |i: usize, j: usize| cost[i * n + j];
    let scale = cost.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = PIVOT_TOL * scale;

    // Northwest-corner start: exactly m + n - 1 basic cells, zeros
    // included, forming a spanning tree of the bipartite node set.
    let mut basis: Vec<(usize, usize, f64)> = Vec::with_capacity(m + n - 1);
    {
        let (mut i, mut j) = (0usize, 0usize);
        let mut rp = supply[0];
        let mut rq = demand[0];
        loop {
            let moved = rp.min(rq).max(0.0);
            basis.push((i, j, moved));
            rp -= moved;
            rq -= moved;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // Advance the exhausted side; on ties advance the row
            // unless it is already the last one.
            if (rp <= rq && i < m - 1) || j == n - 1 {
                i += 1;
                rp = supply[i];
            } else {
                j += 1;
                rq = demand[j];
            }
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let max_pivots = 200 + 40 * (m + n) * (m + n);
    let bland_after = max_pivots / 2;
    let mut u = vec![0.0f64; m];
    let mut v = vec![0.0f64; n];

    for pivot in 0..=max_pivots {
        compute_potentials(&basis, m, n, &|i, j| c(i, j), &mut u, &mut v)?;

        // Price nonbasic cells.
        let bland = pivot >= bland_after;
        let mut entering: Option<(usize, usize, f64)> = None;
        'scan: for i in 0..m {
            for j in 0..n {
                let rc = c(i, j) - u[i] - v[j];
                if rc < -tol {
                    match entering {
                        Some((_, _, best)) if rc >= best => {}
                        _ => entering = Some((i, j, rc)),
                    }
                    if bland {
                        break 'scan; // first negative suffices
                    }
                }
            }
        }
        let Some((ei, ej, _)) = entering else {
            // Optimal. Assemble outputs.
            let total: f64 = basis.iter().map(|&(i, j, w)| w * c(i, j)).sum();
            let entries: Vec<(usize, usize, f64)> = basis
                .iter()
                .map(|&(i, j, w)| (i, j, w.max(0.0)))
                .collect();
            let plan = TransportPlan::new(supply.to_vec(), demand.to_vec(), entries)?;
            return Ok(ExactSolution {
                cost: total,
                plan,
                u,
                v,
            });
        };

        if pivot == max_pivots {
            return Err(TransportError::NonConvergence { iters: max_pivots });
        }

        // Unique tree path from source ei to sink ej; the entering arc
        // closes it into a cycle. Arcs at even positions along the
        // path lose theta, odd positions gain it.
        let path = tree_path(&basis, m, n, ei, ej)?;
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &arc) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let mass = basis[arc].2;
                // Strict < keeps the first minimizer: deterministic and
                // Bland-compatible.
                if mass < theta {
                    theta = mass;
                    leaving = arc;
                }
            }
        }
        for (pos, &arc) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis[arc].2 -= theta;
            } else {
                basis[arc].2 += theta;
            }
        }
        basis[leaving] = (ei, ej, theta);
    }
    unreachable!("loop exits via optimality or the pivot cap");
}

/// Solves `u_i + v_j = c_ij` over the basis tree (`u_0 = 0`).
fn compute_potentials(
    basis: &[(usize, usize, f64)],
    m: usize,
    n: usize,
    c: &dyn Fn(usize, usize) -> f64,
    u: &mut [f64],
    v: &mut [f64],
) -> Result<(), TransportError> {
    // Nodes: 0..m sources, m..m+n sinks.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for (a, &(i, j, _)) in basis.iter().enumerate() {
        adj[i].push(a);
        adj[m + j].push(a);
    }
    let mut known = vec![false; m + n];
    let mut stack = vec![0usize];
    u[0] = 0.0;
    known[0] = true;
    let mut seen = 1usize;
    while let Some(node) = stack.pop() {
        for &a in &adj[node] {
            let (i, j, _) = basis[a];
            let (src, snk) = (i, m + j);
            let other = if node == src { snk } else { src };
            if known[other] {
                continue;
            }
            if other == snk {
                v[j] = c(i, j) - u[i];
            } else {
                u[i] = c(i, j) - v[j];
            }
            known[other] = true;
            seen += 1;
            stack.push(other);
        }
    }
    if seen != m + n {
        // A spanning-tree basis always reaches every node; hitting this
        // means the pivot logic corrupted the basis.
        return Err(TransportError::NonConvergence { iters: 0 });
    }
    Ok(())
}

/// Unique path (as basis-arc indices) from source `ei` to sink `ej`.
fn tree_path(
    basis: &[(usize, usize, f64)],
    m: usize,
    n: usize,
    ei: usize,
    ej: usize,
) -> Result<Vec<usize>, TransportError> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for (a, &(i, j, _)) in basis.iter().enumerate() {
        adj[i].push(a);
        adj[m + j].push(a);
    }
    let start = ei;
    let goal = m + ej;
    let mut parent_arc: Vec<Option<usize>> = vec![None; m + n];
    let mut parent_node: Vec<usize> = vec![usize::MAX; m + n];
    let mut visited = vec![false; m + n];
    visited[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        for &a in &adj[node] {
            let (i, j, _) = basis[a];
            let other = if node == i { m + j } else { i };
            if !visited[other] {
                visited[other] = true;
                parent_arc[other] = Some(a);
                parent_node[other] = node;
                queue.push_back(other);
            }
        }
    }
    if !visited[goal] {
        return Err(TransportError::NonConvergence { iters: 0 });
    }
    let mut path = Vec::new();
    let mut node = goal;
    while node != start {
        path.push(parent_arc[node].expect("visited nodes have parents"));
        node = parent_node[node];
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn points_1d(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_row_slice(&[x])).collect()
    }

    fn normalize(ws: &mut [f64]) {
        let s: f64 = ws.iter().sum();
        for w in ws.iter_mut() {
            *w /= s;
        }
    }

    /// Brute-force optimum over permutations for uniform marginals of
    /// equal size (a Birkhoff vertex must be optimal).
    fn permutation_optimum(cost: &[f64], k: usize) -> f64 {
        fn perms(k: usize) -> Vec<Vec<usize>> {
            if k == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in perms(k - 1) {
                for slot in 0..k {
                    let mut q: Vec<usize> = p.iter().map(|&x| x + usize::from(x >= slot)).collect();
                    q.insert(0, slot);
                    // q[0] = slot, rest is p lifted to skip slot -- every
                    // permutation of 0..k arises exactly once.
                    out.push(q);
                }
            }
            out
        }
        perms(k)
            .into_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| cost[i * k + j] / k as f64)
                    .sum()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_permutation_enumeration_on_uniform_marginals() {
        let mut rng = stream(101, &[1]);
        for trial in 0..20u64 {
            let k = 3 + (trial % 2) as usize; // 3 or 4 points
            let cost: Vec<f64> = (0..k * k).map(|_| rng.gen_range(0.0..10.0)).collect();
            let uniform = vec![1.0 / k as f64; k];
            let sol = solve(&cost, k, k, &uniform, &uniform).unwrap();
            let brute = permutation_optimum(&cost, k);
            assert_relative_eq!(sol.cost, brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn agrees_with_monotone_coupling_on_sorted_lines() {
        let mut rng = stream(102, &[1]);
        for _ in 0..25 {
            let k = rng.gen_range(2..7usize);
            let l = rng.gen_range(2..7usize);
            let mut xs: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut ys: Vec<f64> = (0..l).map(|_| rng.gen_range(-5.0..5.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            ys.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let mut ps: Vec<f64> = (0..xs.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut qs: Vec<f64> = (0..ys.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
            normalize(&mut ps);
            normalize(&mut qs);
            let lp = w2_sq_exact(&points_1d(&xs), &ps, &points_1d(&ys), &qs).unwrap();
            let (mono, _) = crate::transport::w2_sq_monotone_1d(&xs, &ps, &ys, &qs).unwrap();
            assert_relative_eq!(lp.cost, mono, epsilon = 1e-11);
        }
    }

    #[test]
    fn duality_gap_is_zero_at_optimum() {
        let mut rng = stream(103, &[1]);
        for _ in 0..10 {
            let (m, n) = (rng.gen_range(2..6usize), rng.gen_range(2..6usize));
            let cost: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let mut ps: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut qs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            normalize(&mut ps);
            normalize(&mut qs);
            let sol = solve(&cost, m, n, &ps, &qs).unwrap();
            let dual: f64 = sol.u.iter().zip(&ps).map(|(u, p)| u * p).sum::<f64>()
                + sol.v.iter().zip(&qs).map(|(v, q)| v * q).sum::<f64>();
            assert_relative_eq!(sol.cost, dual, epsilon = 1e-10);
            // Dual feasibility on every cell.
            for i in 0..m {
                for j in 0..n {
                    assert!(sol.u[i] + sol.v[j] <= cost[i * n + j] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn two_dimensional_points_move_diagonally() {
        // Mass at (0,0) and (1,1) to (0,1) and (1,0): any pairing costs 1.
        let xs = vec![
            DVector::from_row_slice(&[0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 1.0]),
        ];
        let ys = vec![
            DVector::from_row_slice(&[0.0, 1.0]),
            DVector::from_row_slice(&[1.0, 0.0]),
        ];
        let sol = w2_sq_exact(&xs, &[0.5, 0.5], &ys, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(sol.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_marginals_with_zeros_solve() {
        let xs = points_1d(&[0.0, 1.0, 2.0]);
        let sol = w2_sq_exact(&xs, &[0.0, 1.0, 0.0], &xs, &[0.5, 0.0, 0.5]).unwrap();
        assert_relative_eq!(sol.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn size_limit_refuses_large_problems() {
        let k = 1001usize;
        let xs = points_1d(&(0..k).map(|i| i as f64).collect::<Vec<_>>());
        let w = vec![1.0 / k as f64; k];
        assert!(matches!(
            w2_sq_exact(&xs, &w, &xs, &w),
            Err(TransportError::SizeLimit { .. })
        ));
    }

    #[test]
    fn unbalanced_inputs_are_refused() {
        let xs = points_1d(&[0.0, 1.0]);
        assert!(matches!(
            w2_sq_exact(&xs, &[0.5, 0.4], &xs, &[0.5, 0.5]),
            Err(TransportError::Unbalanced { .. })
        ));
    }
}
