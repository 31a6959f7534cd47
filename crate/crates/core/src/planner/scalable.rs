//! Visiting-order heuristics for target sets past the exact DP's capacity.

use crate::planner::closure::{DistanceMatrix, UNREACHABLE};

/// Cost of visiting `order` (node indices) starting at `origin`, summing
/// closure distances. `None` if some hop is unreachable.
pub(crate) fn order_cost(d: &DistanceMatrix, origin: usize, order: &[usize]) -> Option<u32> {
    let mut pos = origin;
    let mut total = 0u32;
    for &t in order {
        total += d.get(pos, t)?;
        pos = t;
    }
    Some(total)
}

/// Greedy nearest neighbour from `origin`: repeatedly move to the closest
/// remaining target (ties to the smaller index). Targets left unreachable
/// from the current position are returned separately.
pub fn nearest_neighbor(
    d: &DistanceMatrix,
    origin: usize,
    targets: &[usize],
) -> (Vec<usize>, Vec<usize>) {
    let mut remaining: Vec<usize> = targets.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut order = Vec::with_capacity(remaining.len());
    let mut pos = origin;
    while !remaining.is_empty() {
        let (at, dist) = remaining
            .iter()
            .enumerate()
            .map(|(k, &t)| (k, d.raw(pos, t)))
            .min_by_key(|&(k, dist)| (dist, remaining[k]))
            .expect("non-empty");
        if dist == UNREACHABLE {
            break;
        }
        pos = remaining.remove(at);
        order.push(pos);
    }
    (order, remaining)
}

/// 2-opt on an open path with a fixed origin: reverse any segment whose
/// reversal strictly lowers the (directed) total, until no move helps or
/// `max_passes` sweeps have run.
pub fn two_opt(d: &DistanceMatrix, origin: usize, order: &mut [usize], max_passes: usize) {
    let n = order.len();
    if n < 2 {
        return;
    }
    let Some(mut best) = order_cost(d, origin, order) else {
        return;
    };
    for _ in 0..max_passes {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                order[i..=j].reverse();
                match order_cost(d, origin, order) {
                    Some(c) if c < best => {
                        best = c;
                        improved = true;
                    }
                    _ => order[i..=j].reverse(),
                }
            }
        }
        if !improved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::planner::closure::metric_closure;
    use crate::Execution;

    #[test]
    fn two_opt_never_worse_than_nearest_neighbor() {
        for seed in 0..30 {
            let g = fixtures::random_strongly_connected(30, 25, seed);
            let (d, _) = metric_closure(&g, Execution::Sequential);
            let targets: Vec<usize> = (1..30).collect();
            let (mut order, left) = nearest_neighbor(&d, 0, &targets);
            assert!(left.is_empty());
            let nn = order_cost(&d, 0, &order).unwrap();
            two_opt(&d, 0, &mut order, 50);
            let improved = order_cost(&d, 0, &order).unwrap();
            assert!(improved <= nn, "seed {seed}: {improved} > {nn}");
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, targets);
        }
    }
}
