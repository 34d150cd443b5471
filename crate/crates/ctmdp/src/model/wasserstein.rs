//! L¹-Wasserstein distance between mixtures on a common action grid.
//!
//! For a 1-D grid the distance reduces to the CDF formula
//! W₁(a, b) = Σ |F_a − F_b|·Δx over sorted points. For k > 1 the discrete
//! transport linear program is solved exactly by successive shortest
//! paths (min-cost flow with Dijkstra over reduced costs).

use super::{ActionGrid, Mixture};
use crate::error::{CtmdpError, Result};

/// W₁(a, b) on the grid's Euclidean metric.
pub fn wasserstein1(a: &Mixture, b: &Mixture, grid: &ActionGrid) -> Result<f64> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(CtmdpError::GridMismatch(format!(
            "mixtures of size {} / {} on a grid of {} points",
            a.len(),
            b.len(),
            grid.len()
        )));
    }
    if grid.dim() == 1 {
        return Ok(wasserstein1_cdf(a, b, grid));
    }
    Ok(transport_cost(a, b, grid))
}

fn wasserstein1_cdf(a: &Mixture, b: &Mixture, grid: &ActionGrid) -> f64 {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&p, &q| grid.point(p)[0].total_cmp(&grid.point(q)[0]));
    let mut total = 0.0;
    let mut fa = 0.0;
    let mut fb = 0.0;
    for w in order.windows(2) {
        fa += a.weights()[w[0]];
        fb += b.weights()[w[0]];
        let dx = grid.point(w[1])[0] - grid.point(w[0])[0];
        total += (fa - fb).abs() * dx;
    }
    total
}

fn transport_cost(a: &Mixture, b: &Mixture, grid: &ActionGrid) -> f64 {
    // net formulation: common mass stays in place (valid for a metric
    // cost), only the surplus of a over b moves
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for u in 0..grid.len() {
        let diff = a.weights()[u] - b.weights()[u];
        if diff > 0.0 {
            sources.push((u, diff));
        } else if diff < 0.0 {
            sinks.push((u, -diff));
        }
    }
    if sources.is_empty() || sinks.is_empty() {
        return 0.0;
    }
    let cost = |s: usize, d: usize| grid.distance(sources[s].0, sinks[d].0);
    let flow = solve_transport(
        &sources.iter().map(|&(_, m)| m).collect::<Vec<_>>(),
        &sinks.iter().map(|&(_, m)| m).collect::<Vec<_>>(),
        &cost,
    );
    flow.cost
}

pub(crate) struct TransportSolution {
    pub cost: f64,
    /// flow[s][d] shipped from source s to sink d.
    pub flow: Vec<Vec<f64>>,
    /// Node potentials at termination, sources then sinks. Reduced costs
    /// c(s,d) + pot[s] − pot[ns+d] are nonnegative and vanish on arcs
    /// carrying flow, which is the LP optimality certificate.
    pub potentials: Vec<f64>,
}

/// Balanced transport between positive masses by successive shortest
/// paths over the residual bipartite graph. Each augmentation saturates a
/// source or a sink exactly (the bottleneck subtraction is exact for the
/// minimizing node), so the loop runs at most n_s + n_d times.
pub(crate) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> TransportSolution {
    let ns = supply.len();
    let nd = demand.len();
    let n = ns + nd;
    let mut remaining_s = supply.to_vec();
    let mut remaining_d = demand.to_vec();
    let mut flow = vec![vec![0.0; nd]; ns];
    // rc(s -> d) = cost + pot[s] - pot[ns+d]; kept nonnegative across
    // iterations by the capped potential update below
    let mut pot = vec![0.0; n];

    while let Some(start) = (0..ns).find(|&s| remaining_s[s] > 0.0) {
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        dist[start] = 0.0;
        loop {
            let mut cur = None;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    cur = Some(v);
                }
            }
            let Some(v) = cur else { break };
            done[v] = true;
            if v < ns {
                for d in 0..nd {
                    let rc = (cost(v, d) + pot[v] - pot[ns + d]).max(0.0);
                    if dist[v] + rc < dist[ns + d] {
                        dist[ns + d] = dist[v] + rc;
                        prev[ns + d] = Some(v);
                    }
                }
            } else {
                let d = v - ns;
                for s in 0..ns {
                    if flow[s][d] > 0.0 {
                        let rc = (-(cost(s, d) + pot[s] - pot[ns + d])).max(0.0);
                        if dist[v] + rc < dist[s] {
                            dist[s] = dist[v] + rc;
                            prev[s] = Some(v);
                        }
                    }
                }
            }
        }
        let target = (0..nd)
            .filter(|&d| remaining_d[d] > 0.0 && dist[ns + d].is_finite())
            .min_by(|&x, &y| dist[ns + x].total_cmp(&dist[ns + y]))
            .expect("balanced transport always has a reachable active sink");

        let mut bottleneck = remaining_d[target].min(remaining_s[start]);
        let mut v = ns + target;
        while let Some(p) = prev[v] {
            if v < ns {
                // residual arc sink p -> source v undoes existing flow
                bottleneck = bottleneck.min(flow[v][p - ns]);
            }
            v = p;
        }
        let mut v = ns + target;
        while let Some(p) = prev[v] {
            if v >= ns {
                flow[p][v - ns] += bottleneck;
            } else {
                flow[v][p - ns] -= bottleneck;
            }
            v = p;
        }
        remaining_s[start] -= bottleneck;
        remaining_d[target] -= bottleneck;
        if remaining_s[start] <= 1e-15 {
            remaining_s[start] = 0.0;
        }
        if remaining_d[target] <= 1e-15 {
            remaining_d[target] = 0.0;
        }

        let cap = dist[ns + target];
        for (w, p) in pot.iter_mut().enumerate() {
            *p += dist[w].min(cap);
        }
    }

    let mut cost_sum = 0.0;
    for s in 0..ns {
        for d in 0..nd {
            cost_sum += flow[s][d] * cost(s, d);
        }
    }
    TransportSolution {
        cost: cost_sum,
        flow,
        potentials: pot,
    }
}
