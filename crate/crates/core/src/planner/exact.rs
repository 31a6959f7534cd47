// Held-Karp over a subset of closure nodes.
//
// Targets are numbered 0..m in ascending node order; bit k of a visit mask
// says target k has been covered. cost[mask][j] is the cheapest walk that
// starts at the planning origin, covers exactly `mask`, and ends on target
// j ∈ mask:
//
//   cost[{j}][j]  = d(origin, j)
//   cost[V][j]    = min over i ∈ V∖{j} of cost[V∖{j}][i] + d(i, j)
//
// Open walk, free end. Revisits are implicit in the closure distances.

use crate::par::{self, Execution};
use crate::planner::closure::UNREACHABLE;

/// Below this many targets the layers are too thin to split across threads.
const PARALLEL_MIN_TARGETS: usize = 12;

pub(crate) struct ExactSolution {
    /// Target positions (0..m) in visiting order.
    pub order: Vec<usize>,
    pub cost: u32,
    /// Targets that no single walk from the origin can cover together with
    /// the chosen ones.
    pub dropped: Vec<usize>,
}

#[inline]
fn add(a: u32, b: u32) -> u32 {
    if a == UNREACHABLE || b == UNREACHABLE {
        UNREACHABLE
    } else {
        a + b
    }
}

/// `from_origin[j]` = d(origin, target j); `between[i * m + j]` = d(i, j).
///
/// Picks the largest coverable target set (all of them when the targets are
/// mutually reachable), then the minimum cost, then the smallest end target,
/// then the lexicographically smallest visiting order.
pub(crate) fn solve(from_origin: &[u32], between: &[u32], exec: Execution) -> ExactSolution {
    let m = from_origin.len();
    if m == 0 {
        return ExactSolution {
            order: Vec::new(),
            cost: 0,
            dropped: Vec::new(),
        };
    }
    let full = (1usize << m) - 1;
    let mut cost = vec![UNREACHABLE; (full + 1) * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = from_origin[j];
    }

    // Fills row `mask` of the table from strictly smaller masks.
    let fill = |lower: &[u32], mask: usize, out: &mut [u32]| {
        let mut js = mask;
        while js != 0 {
            let j = js.trailing_zeros() as usize;
            js &= js - 1;
            let prev = mask & !(1 << j);
            let prev_row = &lower[prev * m..(prev + 1) * m];
            let mut best = UNREACHABLE;
            let mut is = prev;
            while is != 0 {
                let i = is.trailing_zeros() as usize;
                is &= is - 1;
                let c = add(prev_row[i], between[i * m + j]);
                if c < best {
                    best = c;
                }
            }
            out[j] = best;
        }
    };

    if exec.is_parallel() && m >= PARALLEL_MIN_TARGETS {
        let mut layers: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
        for mask in 1..=full {
            layers[mask.count_ones() as usize].push(mask);
        }
        for layer in layers.iter().skip(2) {
            let rows = par::map(exec, layer, |&mask| {
                let mut out = vec![UNREACHABLE; m];
                fill(&cost, mask, &mut out);
                out
            });
            for (&mask, r) in layer.iter().zip(rows) {
                cost[mask * m..(mask + 1) * m].copy_from_slice(&r);
            }
        }
    } else {
        // every proper subset of `mask` is numerically smaller
        for mask in 1..=full {
            if mask.count_ones() < 2 {
                continue;
            }
            let (lower, upper) = cost.split_at_mut(mask * m);
            fill(lower, mask, &mut upper[..m]);
        }
    }

    // Choose the covered set and end target.
    let mut best: Option<(usize, u32, usize, usize)> = None; // (size, cost, end, mask)
    for mask in 1..=full {
        let size = mask.count_ones() as usize;
        for j in 0..m {
            let c = cost[mask * m + j];
            if c == UNREACHABLE {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, bc, bj, bm)) => {
                    (
                        size,
                        std::cmp::Reverse(c),
                        std::cmp::Reverse(j),
                        std::cmp::Reverse(mask),
                    ) > (
                        bs,
                        std::cmp::Reverse(bc),
                        std::cmp::Reverse(bj),
                        std::cmp::Reverse(bm),
                    )
                }
            };
            if better {
                best = Some((size, c, j, mask));
            }
        }
    }
    let Some((_, total, end, chosen)) = best else {
        return ExactSolution {
            order: Vec::new(),
            cost: 0,
            dropped: (0..m).collect(),
        };
    };

    let order = lexicographic_order(from_origin, between, m, chosen, end, total);
    ExactSolution {
        order,
        cost: total,
        dropped: (0..m).filter(|&k| chosen & (1 << k) == 0).collect(),
    }
}

/// Lexicographically smallest visiting order of `chosen` ending at `end` with
/// total cost `total`, rebuilt front to back with a suffix table:
/// rest[U][i] = cheapest walk from i covering chosen∖U and ending at `end`.
fn lexicographic_order(
    from_origin: &[u32],
    between: &[u32],
    m: usize,
    chosen: usize,
    end: usize,
    total: u32,
) -> Vec<usize> {
    let size = 1usize << m;
    let mut rest = vec![UNREACHABLE; size * m];
    rest[chosen * m + end] = 0;
    // supersets are numerically larger, so walk the submasks of `chosen`
    // in decreasing order
    let mut sub = chosen;
    loop {
        if sub != chosen && sub != 0 {
            for i in 0..m {
                if sub & (1 << i) == 0 {
                    continue;
                }
                let mut best = UNREACHABLE;
                let mut remaining = chosen & !sub;
                while remaining != 0 {
                    let k = remaining.trailing_zeros() as usize;
                    remaining &= remaining - 1;
                    let next = sub | (1 << k);
                    if k == end && next != chosen {
                        continue;
                    }
                    let c = add(between[i * m + k], rest[next * m + k]);
                    if c < best {
                        best = c;
                    }
                }
                rest[sub * m + i] = best;
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & chosen;
    }

    let mut order = Vec::with_capacity(chosen.count_ones() as usize);
    let mut visited = 0usize;
    let mut spent = 0u32;
    let mut pos: Option<usize> = None;
    while visited != chosen {
        let mut remaining = chosen & !visited;
        let mut picked = None;
        while remaining != 0 {
            let k = remaining.trailing_zeros() as usize;
            remaining &= remaining - 1;
            let step = match pos {
                None => from_origin[k],
                Some(i) => between[i * m + k],
            };
            let next = visited | (1 << k);
            if add(add(spent, step), rest[next * m + k]) == total {
                picked = Some((k, step));
                break;
            }
        }
        let (k, step) = picked.expect("an optimal continuation always exists");
        order.push(k);
        visited |= 1 << k;
        spent += step;
        pos = Some(k);
    }
    order
}
