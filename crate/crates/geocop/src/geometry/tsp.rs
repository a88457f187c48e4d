//! Exact and heuristic tour solvers used for TSP labels.

use super::{GeometryError, PointSet, Tour};

/// Largest instance `held_karp` accepts by default; the DP holds
/// `2^m * m` states.
pub const DEFAULT_HK_MAX: usize = 13;

/// Closed tour length: consecutive edges plus the edge back to the start.
pub fn tour_length(ps: &PointSet, tour: &Tour) -> Result<f64, GeometryError> {
    let m = ps.len();
    if !tour.is_valid(m) {
        return Err(GeometryError::InvalidTour);
    }
    let mut len = 0.0;
    for k in 0..m {
        let a = ps[tour.order[k]];
        let b = ps[tour.order[(k + 1) % m]];
        len += a.dist(&b);
    }
    Ok(len)
}

/// Held-Karp dynamic program: the globally optimal closed tour.
///
/// `hk_max` bounds the instance size; memory grows as `2^m * m`.
pub fn held_karp(ps: &PointSet, hk_max: usize) -> Result<(Tour, f64), GeometryError> {
    let m = ps.len();
    if m < 2 {
        return Err(GeometryError::TooFewPoints { got: m, need: 2 });
    }
    if m > hk_max {
        return Err(GeometryError::TooManyPoints { got: m, max: hk_max });
    }
    if m == 2 {
        let t = Tour::new(vec![0, 1]);
        let len = tour_length(ps, &t)?;
        return Ok((t, len));
    }

    let dist: Vec<f64> = (0..m * m)
        .map(|k| ps[k / m].dist(&ps[k % m]))
        .collect();
    let full: usize = 1 << m;

    // dp[mask * m + j]: shortest path starting at 0, visiting exactly `mask`
    // (which always contains 0 and j), ending at j.
    let mut dp = vec![f64::INFINITY; full * m];
    let mut parent = vec![usize::MAX; full * m];
    dp[(1 << 0) * m] = 0.0;

    for mask in 1..full {
        if mask & 1 == 0 {
            continue;
        }
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let cur = dp[mask * m + j];
            if !cur.is_finite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next_mask = mask | (1 << k);
                let cand = cur + dist[j * m + k];
                if cand < dp[next_mask * m + k] {
                    dp[next_mask * m + k] = cand;
                    parent[next_mask * m + k] = j;
                }
            }
        }
    }

    let full_mask = full - 1;
    let (mut best_j, mut best_len) = (usize::MAX, f64::INFINITY);
    for j in 1..m {
        let cand = dp[full_mask * m + j] + dist[j * m];
        if cand < best_len {
            best_len = cand;
            best_j = j;
        }
    }

    let mut order = Vec::with_capacity(m);
    let mut mask = full_mask;
    let mut j = best_j;
    while j != usize::MAX {
        order.push(j);
        let pj = parent[mask * m + j];
        mask &= !(1 << j);
        j = pj;
    }
    order.reverse();
    debug_assert_eq!(order[0], 0);
    Ok((Tour::new(order), best_len))
}

/// Greedy nearest-neighbor construction starting at point 0.
pub fn nearest_neighbor_tour(ps: &PointSet) -> Tour {
    let m = ps.len();
    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut cur = 0usize;
    visited[0] = true;
    order.push(0);
    for _ in 1..m {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..m {
            if !visited[j] {
                let d = ps[cur].dist(&ps[j]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        visited[best] = true;
        order.push(best);
        cur = best;
    }
    Tour::new(order)
}

/// 2-opt local search: repeatedly reverses segments while that shortens the
/// tour. Deterministic scan order, first improvement.
pub fn two_opt(ps: &PointSet, start: &Tour) -> Tour {
    let m = ps.len();
    let mut order = start.order.clone();
    if m < 4 {
        return Tour::new(order);
    }
    let d = |a: usize, b: usize| ps[a].dist(&ps[b]);
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..m - 1 {
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue; // same edge pair
                }
                let (a, b) = (order[i], order[i + 1]);
                let (c, e) = (order[j], order[(j + 1) % m]);
                let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if delta < -1e-12 {
                    order[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    Tour::new(order)
}
