//! Transportation problem with integer supplies and demands, solved by
//! successive shortest paths with Dijkstra on reduced costs.

use super::TransportError;

/// Returns sparse flows `(i, j, units)` of a minimum-cost transport moving
/// `supply[i]` units out of each source and `demand[j]` into each sink.
pub(crate) fn solve(
    cost: &[f64],
    supply: &[u64],
    demand: &[u64],
) -> Result<Vec<(usize, usize, u64)>, TransportError> {
    let (n, m) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), n * m);
    if supply.iter().sum::<u64>() != demand.iter().sum::<u64>() {
        return Err(TransportError::SolverError("unbalanced supplies".into()));
    }
    // Node numbering: sources 0..n, sinks n..n+m, super source s, super sink t.
    let s = n + m;
    let t = s + 1;
    let nodes = n + m + 2;
    let mut flow = vec![0u64; n * m];
    let mut left = supply.to_vec();
    let mut need = demand.to_vec();
    let mut potential = vec![0.0f64; nodes];
    let mut remaining: u64 = supply.iter().sum();
    let mut dist = vec![0.0f64; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut guard = 0usize;
    while remaining > 0 {
        guard += 1;
        if guard > 4 * (n + m) * (n + m) + 16 {
            return Err(TransportError::SolverError("augmentation limit reached".into()));
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[s] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, &d) in dist.iter().enumerate() {
                if !done[k] && d < best {
                    best = d;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut [f64], prev: &mut [usize]| {
                let nd = best + c + potential[u] - potential[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == s {
                for i in 0..n {
                    if left[i] > 0 && !done[i] {
                        relax(i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u < n {
                for j in 0..m {
                    if !done[n + j] {
                        relax(n + j, cost[u * m + j], &mut dist, &mut prev);
                    }
                }
            } else if u < n + m {
                let j = u - n;
                if need[j] > 0 && !done[t] {
                    relax(t, 0.0, &mut dist, &mut prev);
                }
                for i in 0..n {
                    if flow[i * m + j] > 0 && !done[i] {
                        relax(i, -cost[i * m + j], &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[t].is_finite() {
            return Err(TransportError::SolverError("no augmenting path".into()));
        }
        for k in 0..nodes {
            if dist[k].is_finite() {
                potential[k] += dist[k];
            }
        }
        // Bottleneck along the path t <- ... <- s.
        let mut amount = remaining;
        let mut v = t;
        while v != s {
            let u = prev[v];
            if u == s {
                amount = amount.min(left[v]);
            } else if v == t {
                amount = amount.min(need[u - n]);
            } else if u >= n && v < n {
                amount = amount.min(flow[v * m + (u - n)]);
            }
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            if u == s {
                left[v] -= amount;
            } else if v == t {
                need[u - n] -= amount;
            } else if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                flow[v * m + (u - n)] -= amount;
            }
            v = u;
        }
        remaining -= amount;
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i * m + j] > 0 {
                out.push((i, j, flow[i * m + j]));
            }
        }
    }
    Ok(out)
}
