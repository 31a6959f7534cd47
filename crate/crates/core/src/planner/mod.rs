//! Coverage path planning.
//!
//! A [`Planner`] owns a graph snapshot together with its metric closure and
//! answers three questions: the minimum-step walk from a start state that
//! covers a target set ([`Planner::plan_coverage_path`], exact Held-Karp up
//! to `n_exact` targets), a heuristic walk for larger sets
//! ([`Planner::plan_scalable`]), and the replan from the explorer's current
//! position ([`Planner::replan`]). Every plan is expanded into concrete
//! action ids.

mod closure;
mod exact;
mod scalable;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use closure::{metric_closure, DistanceMatrix, PredecessorMatrix, UNREACHABLE};
pub use scalable::{nearest_neighbor, two_opt};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::stg::StgGraph;

pub const DEFAULT_N_EXACT: usize = 16;
/// Hard ceiling for `n_exact`; the DP tables grow as 2^n · n.
pub const MAX_N_EXACT: usize = 20;
const TWO_OPT_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_exact: usize,
    pub exec: Execution,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_exact: DEFAULT_N_EXACT,
            exec: Execution::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_exact == 0 || self.n_exact > MAX_N_EXACT {
            return Err(Error::Param(format!(
                "n_exact must lie in 1..={MAX_N_EXACT}, got {}",
                self.n_exact
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    /// Start state followed by the targets in visiting order.
    pub node_order: Vec<String>,
    pub actions: Vec<String>,
    pub total_cost: u32,
    /// Targets no walk from the start can cover, sorted.
    pub uncovered: Vec<String>,
}

impl Plan {
    pub fn start(&self) -> Option<&str> {
        self.node_order.first().map(String::as_str)
    }

    /// Targets in visiting order (start excluded).
    pub fn targets(&self) -> &[String] {
        self.node_order.get(1..).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Replays the actions on `g` from the plan's start and returns every
    /// state passed through, start included.
    pub fn replay(&self, g: &StgGraph) -> Result<Vec<String>> {
        let start = self
            .start()
            .ok_or_else(|| Error::Consistency("plan has no start state".into()))?;
        let mut walk = vec![start.to_owned()];
        for id in &self.actions {
            let edge = g.action(id).ok_or_else(|| {
                Error::Consistency(format!("plan action {id:?} is not in the graph"))
            })?;
            if &edge.source != walk.last().expect("non-empty") {
                return Err(Error::Consistency(format!(
                    "action {id:?} does not leave {:?}",
                    walk.last().expect("non-empty")
                )));
            }
            walk.push(edge.target.clone());
        }
        Ok(walk)
    }
}

/// Expands a node order into concrete actions by following the next-hop
/// table; parallel edges resolve to the smallest action id.
pub fn expand_plan(
    order: &[String],
    pred: &PredecessorMatrix,
    g: &StgGraph,
) -> Result<Vec<String>> {
    let index: BTreeMap<&str, usize> = pred
        .ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let hop_edges = hop_edges(g, &index);
    let nodes = order
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownState(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    expand_indices(&nodes, pred, &hop_edges)
}

fn hop_edges(g: &StgGraph, index: &BTreeMap<&str, usize>) -> BTreeMap<(usize, usize), String> {
    let mut out: BTreeMap<(usize, usize), String> = BTreeMap::new();
    // actions are sorted by id, so the first edge seen per pair is the smallest
    for e in g.actions() {
        if let (Some(&s), Some(&t)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) {
            out.entry((s, t)).or_insert_with(|| e.action_id.clone());
        }
    }
    out
}

fn expand_indices(
    nodes: &[usize],
    pred: &PredecessorMatrix,
    hop_edges: &BTreeMap<(usize, usize), String>,
) -> Result<Vec<String>> {
    let mut actions = Vec::new();
    for w in nodes.windows(2) {
        let path = pred.path(w[0], w[1]).ok_or_else(|| {
            Error::Consistency(format!(
                "no path from {:?} to {:?}",
                pred.ids()[w[0]],
                pred.ids()[w[1]]
            ))
        })?;
        for hop in path.windows(2) {
            let id = hop_edges.get(&(hop[0], hop[1])).ok_or_else(|| {
                Error::Consistency(format!(
                    "next-hop table uses a missing edge {:?} -> {:?}",
                    pred.ids()[hop[0]],
                    pred.ids()[hop[1]]
                ))
            })?;
            actions.push(id.clone());
        }
    }
    Ok(actions)
}

/// Graph snapshot plus its metric closure.
#[derive(Debug, Clone)]
pub struct Planner {
    graph: StgGraph,
    dist: DistanceMatrix,
    pred: PredecessorMatrix,
    hop_edges: BTreeMap<(usize, usize), String>,
    config: PlannerConfig,
}

impl Planner {
    pub fn new(graph: StgGraph, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let (dist, pred) = metric_closure(&graph, config.exec);
        let index: BTreeMap<&str, usize> = dist
            .ids()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let hop_edges = hop_edges(&graph, &index);
        Ok(Planner {
            graph,
            dist,
            pred,
            hop_edges,
            config,
        })
    }

    pub fn graph(&self) -> &StgGraph {
        &self.graph
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn predecessors(&self) -> &PredecessorMatrix {
        &self.pred
    }

    pub fn config(&self) -> PlannerConfig {
        self.config
    }

    fn index(&self, id: &str) -> Result<usize> {
        self.dist
            .index_of(id)
            .ok_or_else(|| Error::UnknownState(id.to_owned()))
    }

    /// Splits targets into (reachable, unreachable) from `start`, dropping
    /// `start` itself.
    fn classify(
        &self,
        start: usize,
        targets: &BTreeSet<String>,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut reachable = Vec::new();
        let mut unreachable = Vec::new();
        for t in targets {
            let i = self.index(t)?;
            if i == start {
                continue;
            }
            if self.dist.get(start, i).is_some() {
                reachable.push(i);
            } else {
                unreachable.push(i);
            }
        }
        Ok((reachable, unreachable))
    }

    fn exact_order(&self, origin: usize, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let m = targets.len();
        let from: Vec<u32> = targets.iter().map(|&t| self.dist.raw(origin, t)).collect();
        let mut between = vec![0u32; m * m];
        for (a, &i) in targets.iter().enumerate() {
            for (b, &j) in targets.iter().enumerate() {
                between[a * m + b] = self.dist.raw(i, j);
            }
        }
        let sol = exact::solve(&from, &between, self.config.exec);
        debug_assert_eq!(
            scalable::order_cost(
                &self.dist,
                origin,
                &sol.order.iter().map(|&k| targets[k]).collect::<Vec<_>>()
            ),
            Some(sol.cost)
        );
        (
            sol.order.into_iter().map(|k| targets[k]).collect(),
            sol.dropped.into_iter().map(|k| targets[k]).collect(),
        )
    }

    fn finish(&self, start: usize, order: Vec<usize>, mut uncovered: Vec<usize>) -> Result<Plan> {
        let mut nodes = Vec::with_capacity(order.len() + 1);
        nodes.push(start);
        nodes.extend(order);
        let actions = expand_indices(&nodes, &self.pred, &self.hop_edges)?;
        uncovered.sort_unstable();
        uncovered.dedup();
        Ok(Plan {
            node_order: nodes.iter().map(|&i| self.dist.id(i).to_owned()).collect(),
            total_cost: actions.len() as u32,
            actions,
            uncovered: uncovered
                .into_iter()
                .map(|i| self.dist.id(i).to_owned())
                .collect(),
        })
    }

    /// Minimum-step walk from `start` covering every reachable target,
    /// solved exactly. Fails with a capacity error past `n_exact` reachable
    /// targets.
    pub fn plan_coverage_path(&self, start: &str, targets: &BTreeSet<String>) -> Result<Plan> {
        let s = self.index(start)?;
        let (reachable, unreachable) = self.classify(s, targets)?;
        if reachable.len() > self.config.n_exact {
            return Err(Error::Capacity {
                targets: reachable.len(),
                capacity: self.config.n_exact,
            });
        }
        let (order, dropped) = self.exact_order(s, &reachable);
        let mut uncovered = unreachable;
        uncovered.extend(dropped);
        self.finish(s, order, uncovered)
    }

    /// Heuristic coverage walk for arbitrarily many targets; identical to
    /// [`Planner::plan_coverage_path`] within capacity.
    ///
    /// Targets are grouped by activity and groups visited nearest-first,
    /// each solved exactly when small enough or by nearest neighbour plus
    /// 2-opt otherwise. A global nearest neighbour plus 2-opt order is built
    /// too, targets already passed on the way are pruned from both, and the
    /// cheaper one wins (the grouped one on ties).
    pub fn plan_scalable(&self, start: &str, targets: &BTreeSet<String>) -> Result<Plan> {
        let s = self.index(start)?;
        let (reachable, unreachable) = self.classify(s, targets)?;
        if reachable.len() <= self.config.n_exact {
            return self.plan_coverage_path(start, targets);
        }

        let (grouped, grouped_left) = self.grouped_order(s, &reachable);
        let grouped = self.prune_passed(s, grouped);

        let (mut global, global_left) = nearest_neighbor(&self.dist, s, &reachable);
        two_opt(&self.dist, s, &mut global, TWO_OPT_PASSES);
        let global = self.prune_passed(s, global);

        let cost = |o: &[usize]| scalable::order_cost(&self.dist, s, o).unwrap_or(UNREACHABLE);
        let key = |o: &[usize], left: &[usize]| (left.len(), cost(o));
        let (order, left) = if key(&global, &global_left) < key(&grouped, &grouped_left) {
            (global, global_left)
        } else {
            (grouped, grouped_left)
        };
        let mut uncovered = unreachable;
        uncovered.extend(left);
        self.finish(s, order, uncovered)
    }

    fn grouped_order(&self, origin: usize, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &t in targets {
            let activity = &self
                .graph
                .state(self.dist.id(t))
                .expect("indexed state")
                .activity;
            groups.entry(activity).or_default().push(t);
        }
        let mut order = Vec::new();
        let mut left = Vec::new();
        let mut pos = origin;
        while !groups.is_empty() {
            let (name, gap) = groups
                .iter()
                .map(|(name, members)| {
                    (
                        *name,
                        members
                            .iter()
                            .map(|&t| self.dist.raw(pos, t))
                            .min()
                            .unwrap_or(UNREACHABLE),
                    )
                })
                .min_by_key(|&(name, gap)| (gap, name))
                .expect("non-empty");
            let members = groups.remove(name).expect("present");
            if gap == UNREACHABLE {
                left.extend(members);
                continue;
            }
            let reach: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&t| self.dist.get(pos, t).is_some())
                .collect();
            left.extend(
                members
                    .iter()
                    .copied()
                    .filter(|&t| self.dist.get(pos, t).is_none()),
            );
            let (part, dropped) = if reach.len() <= self.config.n_exact {
                self.exact_order(pos, &reach)
            } else {
                let (mut o, rest) = nearest_neighbor(&self.dist, pos, &reach);
                two_opt(&self.dist, pos, &mut o, TWO_OPT_PASSES);
                (o, rest)
            };
            left.extend(dropped);
            if let Some(&last) = part.last() {
                pos = last;
            }
            order.extend(part);
        }
        (order, left)
    }

    /// Drops targets that an earlier leg of the walk already passes through.
    /// By the triangle inequality this never increases the cost.
    fn prune_passed(&self, origin: usize, order: Vec<usize>) -> Vec<usize> {
        let mut seen = BTreeSet::from([origin]);
        let mut kept = Vec::with_capacity(order.len());
        let mut pos = origin;
        for t in order {
            if seen.contains(&t) {
                continue;
            }
            if let Some(path) = self.pred.path(pos, t) {
                seen.extend(path);
            }
            kept.push(t);
            pos = t;
        }
        kept
    }

    /// Plan from `current` over every unvisited state, routed to the exact
    /// or scalable planner by size. With nothing left to cover this is the
    /// empty plan (no actions, cost 0).
    pub fn replan(&self, current: &str, visited: &BTreeSet<String>) -> Result<Plan> {
        let targets: BTreeSet<String> = self
            .graph
            .state_ids()
            .filter(|s| !visited.contains(*s))
            .map(str::to_owned)
            .collect();
        self.plan_scalable(current, &targets)
    }
}

/// One-shot exact planning over a graph.
pub fn plan_coverage_path(
    g: &StgGraph,
    start: &str,
    targets: &BTreeSet<String>,
    config: PlannerConfig,
) -> Result<Plan> {
    Planner::new(g.clone(), config)?.plan_coverage_path(start, targets)
}

/// One-shot scalable planning over a graph.
pub fn plan_scalable(
    g: &StgGraph,
    start: &str,
    targets: &BTreeSet<String>,
    config: PlannerConfig,
) -> Result<Plan> {
    Planner::new(g.clone(), config)?.plan_scalable(start, targets)
}

/// One-shot replan over a graph.
pub fn replan(
    g: &StgGraph,
    current: &str,
    visited: &BTreeSet<String>,
    config: PlannerConfig,
) -> Result<Plan> {
    Planner::new(g.clone(), config)?.replan(current, visited)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn all(g: &StgGraph) -> BTreeSet<String> {
        g.state_ids().map(str::to_owned).collect()
    }

    fn seq() -> PlannerConfig {
        PlannerConfig {
            n_exact: DEFAULT_N_EXACT,
            exec: Execution::Sequential,
        }
    }

    #[test]
    fn line_graph_plan() {
        let g = fixtures::line_graph();
        let plan = plan_coverage_path(&g, "A", &all(&g), seq()).unwrap();
        assert_eq!(plan.node_order, vec!["A", "B", "C"]);
        assert_eq!(plan.total_cost, 2);
        assert!(plan.uncovered.is_empty());
        assert_eq!(plan.replay(&g).unwrap(), vec!["A", "B", "C"]);
    }

    #[test]
    fn star_plan_matches_enumeration() {
        let g = fixtures::star_graph();
        let plan = plan_coverage_path(&g, "H", &all(&g), seq()).unwrap();
        // every leaf order costs 1 + 2 + 2: out to a leaf, and back-and-out twice
        let (d, _) = metric_closure(&g, Execution::Sequential);
        let leaves = ["L1", "L2", "L3"];
        let mut best = u32::MAX;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    if a == b || b == c || a == c {
                        continue;
                    }
                    let o = [leaves[a], leaves[b], leaves[c]];
                    let cost = d.by_id("H", o[0]).unwrap()
                        + d.by_id(o[0], o[1]).unwrap()
                        + d.by_id(o[1], o[2]).unwrap();
                    best = best.min(cost);
                }
            }
        }
        assert_eq!(best, 5);
        assert_eq!(plan.total_cost, best);
        // all orders tie: smallest end (L1) first, then the smallest order
        assert_eq!(plan.node_order, vec!["H", "L2", "L3", "L1"]);
        assert_eq!(
            plan.replay(&g).unwrap(),
            vec!["H", "L2", "H", "L3", "H", "L1"]
        );
    }

    #[test]
    fn unknown_start_and_target() {
        let g = fixtures::line_graph();
        assert!(matches!(
            plan_coverage_path(&g, "Z", &all(&g), seq()),
            Err(Error::UnknownState(_))
        ));
        let bad = BTreeSet::from(["Q".to_owned()]);
        assert!(plan_coverage_path(&g, "A", &bad, seq()).is_err());
    }

    #[test]
    fn unreachable_targets_reported() {
        let g = fixtures::line_graph();
        // nothing leads back to A
        let plan = plan_coverage_path(&g, "B", &all(&g), seq()).unwrap();
        assert_eq!(plan.uncovered, vec!["A"]);
        assert_eq!(plan.node_order, vec!["B", "C"]);
    }

    #[test]
    fn capacity_error() {
        let g = fixtures::random_strongly_connected(20, 10, 1);
        let cfg = PlannerConfig {
            n_exact: 8,
            exec: Execution::Sequential,
        };
        let start = g.start_state.clone();
        assert!(matches!(
            plan_coverage_path(&g, &start, &all(&g), cfg),
            Err(Error::Capacity {
                targets: 19,
                capacity: 8
            })
        ));
        let plan = plan_scalable(&g, &start, &all(&g), cfg).unwrap();
        assert!(plan.uncovered.is_empty());
        let walk: BTreeSet<String> = plan.replay(&g).unwrap().into_iter().collect();
        assert_eq!(walk, all(&g));
    }

    #[test]
    fn scalable_within_capacity_is_exact() {
        for seed in 0..20 {
            let g = fixtures::random_strongly_connected(9, 8, seed);
            let start = g.start_state.clone();
            assert_eq!(
                plan_scalable(&g, &start, &all(&g), seq()).unwrap(),
                plan_coverage_path(&g, &start, &all(&g), seq()).unwrap()
            );
        }
    }

    #[test]
    fn expand_examples() {
        let g = fixtures::line_graph();
        let (_, pred) = metric_closure(&g, Execution::Sequential);
        let order = vec!["A".to_owned(), "C".to_owned()];
        assert_eq!(
            expand_plan(&order, &pred, &g).unwrap(),
            vec!["A/click:click_B>B", "B/click:click_C>C"]
        );
        let same = vec!["B".to_owned(), "B".to_owned()];
        assert!(expand_plan(&same, &pred, &g).unwrap().is_empty());
        let back = vec!["B".to_owned(), "A".to_owned()];
        assert!(matches!(
            expand_plan(&back, &pred, &g),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn parallel_edges_pick_smallest_id() {
        let mut g = fixtures::line_graph();
        let mut alt = g.actions()[0].clone();
        alt.action_id = "0-first".into();
        alt.trigger = crate::stg::Trigger::LongPress;
        g.add_action(alt);
        let plan = plan_coverage_path(&g, "A", &all(&g), seq()).unwrap();
        assert_eq!(plan.actions[0], "0-first");
    }

    #[test]
    fn replan_empty_and_deviation() {
        let g = fixtures::line_graph();
        let planner = Planner::new(g.clone(), seq()).unwrap();
        let plan = planner.replan("B", &all(&g)).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.total_cost, 0);
        let visited = BTreeSet::from(["A".to_owned(), "C".to_owned()]);
        let plan = planner.replan("C", &visited).unwrap();
        assert_eq!(plan.node_order, vec!["C", "B"]);
        assert_eq!(plan.total_cost, 1);
    }

    #[test]
    fn invalid_config() {
        let g = fixtures::line_graph();
        assert!(Planner::new(
            g.clone(),
            PlannerConfig {
                n_exact: 0,
                exec: Execution::Sequential
            }
        )
        .is_err());
        assert!(Planner::new(
            g,
            PlannerConfig {
                n_exact: 64,
                exec: Execution::Sequential
            }
        )
        .is_err());
    }
}
