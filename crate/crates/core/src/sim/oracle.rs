use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::stg::StgGraph;

/// Largest graph the exhaustive oracle accepts.
pub const ORACLE_CAPACITY: usize = 9;

fn bfs(g: &StgGraph, ids: &[&str], from: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; ids.len()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for e in g.outgoing(ids[u]) {
            let v = ids
                .iter()
                .position(|s| *s == e.target)
                .expect("validated target");
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Cheapest walk from `start` through every other state, found by trying
/// every visiting order over breadth-first distances. `None` when some state
/// cannot be reached from `start`.
pub fn brute_force_optimal_path(g: &StgGraph, start: &str) -> Result<Option<u32>> {
    let ids: Vec<&str> = g.state_ids().collect();
    if ids.len() > ORACLE_CAPACITY {
        return Err(Error::OracleCapacity {
            states: ids.len(),
            capacity: ORACLE_CAPACITY,
        });
    }
    let s = ids
        .iter()
        .position(|id| *id == start)
        .ok_or_else(|| Error::UnknownState(start.to_owned()))?;
    let dist: Vec<Vec<Option<u32>>> = (0..ids.len()).map(|i| bfs(g, &ids, i)).collect();
    if dist[s].iter().any(Option::is_none) {
        return Ok(None);
    }
    let mut rest: Vec<usize> = (0..ids.len()).filter(|&i| i != s).collect();
    let mut best = None;
    permute(&mut rest, 0, &mut |order| {
        let mut pos = s;
        let mut total = 0;
        for &t in order {
            match dist[pos][t] {
                Some(d) => total += d,
                None => return,
            }
            pos = t;
        }
        if best.is_none_or(|b| total < b) {
            best = Some(total);
        }
    });
    Ok(best)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
