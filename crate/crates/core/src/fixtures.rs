//! Small hand-built graphs and seeded random graph families used by tests,
//! benches and the CLI demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stg::{
    ActionEdge, ComponentKind, ComponentNode, Provenance, StateNode, StgGraph, Trigger, TOUCH_BACK,
};

/// Builds a graph where every state gets a generated component tree: a root
/// container, a title, and one trigger component per outgoing click or
/// long-press edge (local id `<trigger>_<target>`). Back edges use
/// `touch_back`.
pub fn build(start: &str, states: &[(&str, &str)], edges: &[(&str, &str, Trigger)]) -> StgGraph {
    let mut g = StgGraph::new(start);
    for &(id, activity) in states {
        let mut children = vec![ComponentNode::leaf(
            "title",
            ComponentKind::TextView,
            Some(&format!("title_{id}")),
        )
        .with_content(id)];
        for &(src, tgt, trigger) in edges {
            if src != id || trigger == Trigger::Back {
                continue;
            }
            let kind = if trigger == Trigger::LongPress {
                ComponentKind::AppWidget
            } else {
                ComponentKind::Button
            };
            let local = component_for(trigger, tgt);
            children.push(ComponentNode::leaf(
                &local,
                kind,
                Some(&format!("{id}_{local}")),
            ));
        }
        let root = ComponentNode::container("root", Some(&format!("root_{id}")), children);
        g.add_state(StateNode::new(id, activity, root))
            .expect("fixture ids are unique");
    }
    for &(src, tgt, trigger) in edges {
        let cref = if trigger == Trigger::Back {
            TOUCH_BACK.to_owned()
        } else {
            component_for(trigger, tgt)
        };
        g.add_action(ActionEdge::new(
            src,
            trigger,
            &cref,
            tgt,
            Provenance::Manual,
        ));
    }
    g
}

/// Local id of the generated trigger component for an edge.
pub fn component_for(trigger: Trigger, target: &str) -> String {
    format!("{}_{target}", trigger.as_str())
}

/// A→B→C by clicks, with a back action from C to B.
pub fn line_graph() -> StgGraph {
    build(
        "A",
        &[("A", "Main"), ("B", "Main"), ("C", "Main")],
        &[
            ("A", "B", Trigger::Click),
            ("B", "C", Trigger::Click),
            ("C", "B", Trigger::Back),
        ],
    )
}

/// Hub H with bidirectional unit edges to L1, L2, L3.
pub fn star_graph() -> StgGraph {
    build(
        "H",
        &[
            ("H", "Main"),
            ("L1", "Main"),
            ("L2", "Main"),
            ("L3", "Main"),
        ],
        &[
            ("H", "L1", Trigger::Click),
            ("H", "L2", Trigger::Click),
            ("H", "L3", Trigger::Click),
            ("L1", "H", Trigger::Back),
            ("L2", "H", Trigger::Back),
            ("L3", "H", Trigger::Back),
        ],
    )
}

/// A→B→C→A.
pub fn cycle_graph() -> StgGraph {
    build(
        "A",
        &[("A", "Main"), ("B", "Main"), ("C", "Main")],
        &[
            ("A", "B", Trigger::Click),
            ("B", "C", Trigger::Click),
            ("C", "A", Trigger::Click),
        ],
    )
}

fn state_name(i: usize) -> String {
    format!("S{i:02}")
}

/// Random digraph on `n` states where each ordered pair is an edge with
/// probability `p`. Not necessarily connected.
pub fn random_graph(n: usize, p: f64, seed: u64) -> StgGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n).map(state_name).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    from_index_edges(&names, &edges, &mut rng)
}

/// Random strongly-connected digraph: a shuffled Hamiltonian cycle plus
/// `extra` random edges. States are spread round-robin over three activities.
pub fn random_strongly_connected(n: usize, extra: usize, seed: u64) -> StgGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n).map(state_name).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order[1..].shuffle(&mut rng);
    let mut edges = Vec::new();
    if n > 1 {
        for w in 0..n {
            edges.push((order[w], order[(w + 1) % n]));
        }
    }
    for _ in 0..extra {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j && !edges.contains(&(i, j)) {
            edges.push((i, j));
        }
    }
    from_index_edges(&names, &edges, &mut rng)
}

fn from_index_edges(names: &[String], edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> StgGraph {
    let activities = ["Main", "Detail", "Settings"];
    let states: Vec<(&str, &str)> = names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), activities[i % activities.len()]))
        .collect();
    let triggers = [
        Trigger::Click,
        Trigger::Click,
        Trigger::Back,
        Trigger::LongPress,
    ];
    let mut seen_back = std::collections::BTreeSet::new();
    let labelled: Vec<(&str, &str, Trigger)> = edges
        .iter()
        .map(|&(i, j)| {
            let mut t = triggers[rng.gen_range(0..triggers.len())];
            // one touch_back per source keeps the generated trees plausible
            if t == Trigger::Back && !seen_back.insert(i) {
                t = Trigger::Click;
            }
            (names[i].as_str(), names[j].as_str(), t)
        })
        .collect();
    let start = names.first().map(String::as_str).unwrap_or("S00");
    build(start, &states, &labelled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stg::validate;

    #[test]
    fn fixtures_are_valid() {
        for g in [line_graph(), star_graph(), cycle_graph()] {
            assert!(validate(&g).is_empty(), "{}", validate(&g));
        }
        for seed in 0..20 {
            let g = random_strongly_connected(8, 6, seed);
            assert!(validate(&g).is_empty(), "{}", validate(&g));
            let g = random_graph(10, 0.2, seed);
            assert!(validate(&g).is_empty(), "{}", validate(&g));
        }
    }
}
