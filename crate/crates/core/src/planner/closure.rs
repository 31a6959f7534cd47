//! All-pairs shortest paths over unit-cost actions (Floyd-Warshall) with a
//! next-hop table for path reconstruction.

use std::collections::BTreeMap;

use crate::par::{self, Execution};
use crate::stg::StgGraph;

/// Unreachable marker in distance tables.
pub const UNREACHABLE: u32 = u32::MAX;
const NO_HOP: u32 = u32::MAX;

/// Below this size the per-pivot fork/join costs more than it saves.
const PARALLEL_MIN_NODES: usize = 96;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Raw distance; [`UNREACHABLE`] when there is no path.
    #[inline]
    pub fn raw(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        let v = self.raw(i, j);
        (v != UNREACHABLE).then_some(v)
    }

    pub fn by_id(&self, from: &str, to: &str) -> Option<u32> {
        self.get(*self.index.get(from)?, *self.index.get(to)?)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredecessorMatrix {
    n: usize,
    next: Vec<u32>,
    ids: Vec<String>,
}

impl PredecessorMatrix {
    /// First node after `i` on the chosen shortest path to `j`.
    pub fn next_hop(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.next[i * self.n + j];
        (v != NO_HOP).then_some(v as usize)
    }

    /// Node sequence `i, …, j`, or `None` when `j` is unreachable.
    pub fn path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        let mut out = vec![i];
        let mut cur = i;
        while cur != j {
            cur = self.next_hop(cur, j)?;
            out.push(cur);
            if out.len() > self.n {
                return None;
            }
        }
        Some(out)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

struct Row {
    d: Vec<u32>,
    next: Vec<u32>,
}

/// Shortest action counts between every pair of states.
///
/// Nodes are indexed by ascending state id. The pivot loop runs in ascending
/// index order and only strictly shorter detours replace a path, so among
/// equal-length routes the one through the smallest pivot wins.
pub fn metric_closure(g: &StgGraph, exec: Execution) -> (DistanceMatrix, PredecessorMatrix) {
    let ids: Vec<String> = g.state_ids().map(str::to_owned).collect();
    let n = ids.len();
    let index: BTreeMap<String, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();

    let mut rows: Vec<Row> = (0..n)
        .map(|i| {
            let mut d = vec![UNREACHABLE; n];
            let mut next = vec![NO_HOP; n];
            d[i] = 0;
            next[i] = i as u32;
            Row { d, next }
        })
        .collect();
    for e in g.actions() {
        if let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) {
            if s != t {
                rows[s].d[t] = 1;
                rows[s].next[t] = t as u32;
            }
        }
    }

    let exec = if n >= PARALLEL_MIN_NODES {
        exec
    } else {
        Execution::Sequential
    };
    for k in 0..n {
        let pivot = rows[k].d.clone();
        par::for_each_mut(exec, &mut rows, |_, row| {
            let dik = row.d[k];
            if dik == UNREACHABLE {
                return;
            }
            let hop = row.next[k];
            for (j, &dkj) in pivot.iter().enumerate() {
                if dkj != UNREACHABLE && dik + dkj < row.d[j] {
                    row.d[j] = dik + dkj;
                    row.next[j] = hop;
                }
            }
        });
    }

    let mut d = Vec::with_capacity(n * n);
    let mut next = Vec::with_capacity(n * n);
    for row in rows {
        d.extend(row.d);
        next.extend(row.next);
    }
    (
        DistanceMatrix {
            n,
            d,
            ids: ids.clone(),
            index,
        },
        PredecessorMatrix { n, next, ids },
    )
}
