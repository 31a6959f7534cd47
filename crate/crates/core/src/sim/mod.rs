//! Closed-loop exploration simulator.
//!
//! Tester models walk an app's graph one action at a time until every state
//! has been seen or the step budget runs out. Guided testers are driven
//! through a live [`Session`]; the baselines (uniform random, greedy nearest
//! and depth-first) move on their own.

mod compare;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use compare::{compare_strategies, quantile, ComparisonReport, Savings, TesterSummary};
pub use oracle::{brute_force_optimal_path, ORACLE_CAPACITY};

use crate::app::AppModel;
use crate::error::{Error, Result};
use crate::guidance::{Session, SessionConfig, TransitionReport};
use crate::planner::{Planner, PlannerConfig};
use crate::stg::StgGraph;
use crate::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TesterKind {
    /// Follows the hint with probability `p`, otherwise acts at random.
    Guided(f64),
    Random,
    GreedyNearest,
    Dfs,
}

impl fmt::Display for TesterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TesterKind::Guided(p) => write!(f, "guided:{p:?}"),
            TesterKind::Random => f.write_str("random"),
            TesterKind::GreedyNearest => f.write_str("greedy_nearest"),
            TesterKind::Dfs => f.write_str("dfs"),
        }
    }
}

impl FromStr for TesterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match (name, arg) {
            ("guided", None) => TesterKind::Guided(1.0),
            ("guided", Some(a)) => {
                let p: f64 = a
                    .parse()
                    .map_err(|_| Error::Param(format!("compliance {a:?} is not a number")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Param(format!(
                        "compliance must lie in [0, 1], got {p}"
                    )));
                }
                TesterKind::Guided(p)
            }
            ("random", None) => TesterKind::Random,
            ("greedy" | "greedy_nearest", None) => TesterKind::GreedyNearest,
            ("dfs", None) => TesterKind::Dfs,
            _ => return Err(Error::Param(format!("unknown tester model {s:?}"))),
        };
        Ok(kind)
    }
}

impl Serialize for TesterKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TesterKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TesterModel {
    pub kind: TesterKind,
    #[serde(default)]
    pub seed: u64,
}

impl TesterModel {
    pub fn new(kind: TesterKind) -> Self {
        TesterModel { kind, seed: 0 }
    }

    pub fn guided(p: f64) -> Self {
        TesterModel::new(TesterKind::Guided(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub steps_taken: u64,
    pub states_visited: usize,
    pub states_total: usize,
    pub activities_visited: usize,
    pub activities_total: usize,
    pub repeated_visits: u64,
    /// (step, state coverage) recorded at step 0 and whenever coverage grows.
    pub coverage_curve: Vec<(u64, f64)>,
    pub reached_full_coverage: bool,
}

impl SimMetrics {
    pub fn state_coverage(&self) -> f64 {
        if self.states_total == 0 {
            0.0
        } else {
            self.states_visited as f64 / self.states_total as f64
        }
    }

    /// Steps to full coverage, if reached.
    pub fn steps_to_coverage(&self) -> Option<u64> {
        self.reached_full_coverage.then_some(self.steps_taken)
    }
}

struct Tracker<'g> {
    graph: &'g StgGraph,
    visits: BTreeMap<String, u64>,
    steps: u64,
    budget: u64,
    curve: Vec<(u64, f64)>,
    current: String,
}

impl<'g> Tracker<'g> {
    fn new(graph: &'g StgGraph, start: &str, budget: u64) -> Self {
        let mut t = Tracker {
            graph,
            visits: BTreeMap::from([(start.to_owned(), 1)]),
            steps: 0,
            budget,
            curve: Vec::new(),
            current: start.to_owned(),
        };
        t.curve.push((0, t.coverage()));
        t
    }

    fn coverage(&self) -> f64 {
        self.visits.len() as f64 / self.graph.states().len() as f64
    }

    fn done(&self) -> bool {
        self.steps >= self.budget || self.complete()
    }

    fn complete(&self) -> bool {
        self.visits.len() == self.graph.states().len()
    }

    fn visited(&self, s: &str) -> bool {
        self.visits.contains_key(s)
    }

    fn step(&mut self, to: &str) {
        self.steps += 1;
        let count = self.visits.entry(to.to_owned()).or_insert(0);
        *count += 1;
        if *count == 1 {
            let c = self.coverage();
            self.curve.push((self.steps, c));
        }
        self.current = to.to_owned();
    }

    fn finish(self) -> SimMetrics {
        let activities_visited = self
            .graph
            .states()
            .iter()
            .filter(|s| self.visits.contains_key(&s.state_id))
            .map(|s| s.activity.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        SimMetrics {
            steps_taken: self.steps,
            states_visited: self.visits.len(),
            states_total: self.graph.states().len(),
            activities_visited,
            activities_total: self.graph.activities().len(),
            repeated_visits: self.visits.values().map(|v| v - 1).sum(),
            reached_full_coverage: self.complete(),
            coverage_curve: self.curve,
        }
    }
}

fn random_move(g: &StgGraph, from: &str, rng: &mut ChaCha8Rng) -> Option<crate::ActionEdge> {
    let out: Vec<_> = g.outgoing(from).collect();
    out.choose(rng).map(|e| (*e).clone())
}

/// Runs one tester on `app.true_graph` from the launch state.
pub fn run_simulation(
    app: &AppModel,
    tester: TesterModel,
    budget: u64,
    seed: u64,
) -> Result<SimMetrics> {
    simulate_graph(&app.true_graph, app.launch_state(), tester, budget, seed)
}

/// Runs one tester on an arbitrary graph. The random stream depends on both
/// `seed` and `tester.seed`.
pub fn simulate_graph(
    g: &StgGraph,
    start: &str,
    tester: TesterModel,
    budget: u64,
    seed: u64,
) -> Result<SimMetrics> {
    if budget == 0 {
        return Err(Error::Param("budget must be at least 1".into()));
    }
    if !g.contains_state(start) {
        return Err(Error::UnknownState(start.to_owned()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tester.seed);
    let mut t = Tracker::new(g, start, budget);
    match tester.kind {
        TesterKind::Guided(p) => guided(&mut t, p, &mut rng)?,
        TesterKind::Random => {
            while !t.done() {
                let Some(e) = random_move(g, &t.current, &mut rng) else {
                    break;
                };
                t.step(&e.target);
            }
        }
        TesterKind::GreedyNearest => {
            let planner = Planner::new(g.clone(), sequential())?;
            greedy(&mut t, &planner);
        }
        TesterKind::Dfs => {
            let planner = Planner::new(g.clone(), sequential())?;
            dfs(&mut t, &planner, &mut rng);
        }
    }
    Ok(t.finish())
}

fn sequential() -> PlannerConfig {
    PlannerConfig {
        exec: Execution::Sequential,
        ..PlannerConfig::default()
    }
}

fn guided(t: &mut Tracker<'_>, p: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let config = SessionConfig {
        planner: sequential(),
        ..SessionConfig::default()
    };
    let mut session = Session::start("sim", t.graph.clone(), &t.current, config)?;
    while !t.done() {
        let Some(hint) = session.current_hint() else {
            break;
        };
        let action = if rng.gen_bool(p) {
            hint.action_id
        } else {
            match random_move(t.graph, &t.current, rng) {
                Some(e) => e.action_id,
                None => break,
            }
        };
        let target = t
            .graph
            .action(&action)
            .expect("hinted or outgoing action")
            .target
            .clone();
        session.report_transition(&TransitionReport::action(&action), t.steps * 1000)?;
        t.step(&target);
    }
    Ok(())
}

/// Walks the closure path to `to`, one counted step per action, stopping
/// early when the budget runs out.
fn walk_to(t: &mut Tracker<'_>, planner: &Planner, to: usize) {
    let d = planner.distances();
    let from = d.index_of(&t.current).expect("current state is indexed");
    let path = planner
        .predecessors()
        .path(from, to)
        .expect("target reachable");
    for &v in &path[1..] {
        if t.done() {
            return;
        }
        t.step(d.id(v));
    }
}

/// Nearest unvisited state by closure distance, ties to the smaller id.
fn nearest_unvisited(t: &Tracker<'_>, planner: &Planner) -> Option<usize> {
    let d = planner.distances();
    let from = d.index_of(&t.current)?;
    (0..d.len())
        .filter(|&j| !t.visited(d.id(j)))
        .filter_map(|j| d.get(from, j).map(|c| (c, j)))
        .min()
        .map(|(_, j)| j)
}

fn greedy(t: &mut Tracker<'_>, planner: &Planner) {
    while !t.done() {
        let Some(goal) = nearest_unvisited(t, planner) else {
            break;
        };
        walk_to(t, planner, goal);
    }
}

fn dfs(t: &mut Tracker<'_>, planner: &Planner, rng: &mut ChaCha8Rng) {
    let g = t.graph;
    let d = planner.distances();
    let mut stack: Vec<String> = Vec::new();
    while !t.done() {
        let fresh: Vec<String> = g
            .outgoing(&t.current)
            .map(|e| e.target.as_str())
            .filter(|s| !t.visited(s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        if let Some(next) = fresh.choose(rng) {
            stack.push(t.current.clone());
            t.step(next);
            continue;
        }
        match stack.pop() {
            Some(prev) => {
                if g.outgoing(&t.current).any(|e| e.target == prev) {
                    t.step(&prev);
                } else if d.by_id(&t.current, &prev).is_some() {
                    walk_to(t, planner, d.index_of(&prev).expect("indexed state"));
                }
            }
            None => {
                let Some(goal) = nearest_unvisited(t, planner) else {
                    break;
                };
                walk_to(t, planner, goal);
            }
        }
    }
}
