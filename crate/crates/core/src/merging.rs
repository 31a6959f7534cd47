//! Near-duplicate state merging.
//!
//! Two passes: [`signature_merge`] collapses states whose component
//! hierarchies are identical once content is ignored; [`context_merge`]
//! then collapses states that look alike *and* sit in alike neighbourhoods
//! (a similar predecessor pair and a similar successor pair). Neither pass
//! ever merges across activities.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stg::{hierarchy_signature, ComponentKind, StateNode, StgGraph, FORMAT_VERSION};

pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePass {
    Signature,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub representative: String,
    /// Ids folded into the representative (the representative excluded).
    pub merged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub version: String,
    pub pass: MergePass,
    pub similarity_threshold: f64,
    pub clusters: Vec<Cluster>,
}

impl MergeReport {
    fn new(pass: MergePass, tau: f64, rename: &BTreeMap<String, String>) -> Self {
        let mut by_rep: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (id, rep) in rename {
            if id != rep {
                by_rep.entry(rep).or_default().push(id.clone());
            }
        }
        MergeReport {
            version: FORMAT_VERSION.to_owned(),
            pass,
            similarity_threshold: tau,
            clusters: by_rep
                .into_iter()
                .map(|(rep, merged)| Cluster {
                    representative: rep.to_owned(),
                    merged,
                })
                .collect(),
        }
    }

    /// Original id → representative id, for merged ids only.
    pub fn mapping(&self) -> BTreeMap<&str, &str> {
        self.clusters
            .iter()
            .flat_map(|c| {
                c.merged
                    .iter()
                    .map(move |m| (m.as_str(), c.representative.as_str()))
            })
            .collect()
    }
}

/// Merges states with equal content-free hierarchy signatures within the
/// same activity. The lexicographically smallest id represents its cluster.
pub fn signature_merge(g: &StgGraph) -> (StgGraph, MergeReport) {
    let mut groups: BTreeMap<(&str, String), Vec<&str>> = BTreeMap::new();
    for s in g.states() {
        groups
            .entry((s.activity.as_str(), hierarchy_signature(s, true)))
            .or_default()
            .push(&s.state_id);
    }
    let mut rename = BTreeMap::new();
    for ids in groups.values() {
        // states are sorted by id, so ids[0] is the smallest
        for id in ids {
            rename.insert((*id).to_owned(), ids[0].to_owned());
        }
    }
    let report = MergeReport::new(MergePass::Signature, 1.0, &rename);
    (g.quotient(&rename), report)
}

type Bag<'a> = BTreeMap<(ComponentKind, Option<&'a str>), usize>;

fn component_bag(state: &StateNode) -> Bag<'_> {
    let mut bag = BTreeMap::new();
    for (_, node) in state.root.walk() {
        *bag.entry((node.kind, node.resource_id.as_deref()))
            .or_insert(0) += 1;
    }
    bag
}

/// Multiset Jaccard index over the (kind, resource_id) pairs of all nodes of
/// the two component trees.
pub fn similarity(s1: &StateNode, s2: &StateNode) -> f64 {
    bag_jaccard(&component_bag(s1), &component_bag(s2))
}

struct Partition {
    parent: Vec<usize>,
}

impl Partition {
    fn new(n: usize) -> Self {
        Partition {
            parent: (0..n).collect(),
        }
    }

    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    /// Keeps the smaller index as the root so a cluster's root is always its
    /// lexicographically smallest state.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
    }
}

/// Context-aware merging to a fixpoint.
///
/// Clusters C1, C2 of the same activity merge when some member pair is
/// similar (≥ τ), some predecessor cluster pair is similar, and some
/// successor cluster pair is similar. Cluster similarity is single-linkage
/// over members, which makes the result independent of merge order and
/// monotone in τ. Clusters holding the start state skip the predecessor
/// test. Candidate pairs are scanned in (representative, representative)
/// order and the first qualifying pair merges.
pub fn context_merge(g: &StgGraph, tau: f64, exec: Execution) -> Result<(StgGraph, MergeReport)> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Param(format!(
            "similarity threshold must lie in (0, 1], got {tau}"
        )));
    }
    let states = g.states();
    let n = states.len();
    let index: BTreeMap<&str, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.state_id.as_str(), i))
        .collect();
    let bags: Vec<_> = states.iter().map(component_bag).collect();
    let similar: Vec<Vec<bool>> = par::map_range(exec, n, |i| {
        (0..n)
            .map(|j| i == j || bag_jaccard(&bags[i], &bags[j]) >= tau)
            .collect()
    });
    let mut preds = vec![BTreeSet::new(); n];
    let mut succs = vec![BTreeSet::new(); n];
    for e in g.actions() {
        if let (Some(&s), Some(&t)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) {
            succs[s].insert(t);
            preds[t].insert(s);
        }
    }
    let start = index.get(g.start_state.as_str()).copied();

    let mut part = Partition::new(n);
    loop {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            members.entry(part.find(i)).or_default().push(i);
        }
        let roots: Vec<usize> = members.keys().copied().collect();
        let pairs: Vec<(usize, usize)> = roots
            .iter()
            .enumerate()
            .flat_map(|(x, &a)| roots[x + 1..].iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| states[a].activity == states[b].activity)
            .collect();

        let cluster_similar = |c1: usize, c2: usize| {
            c1 == c2
                || members[&c1]
                    .iter()
                    .any(|&a| members[&c2].iter().any(|&b| similar[a][b]))
        };
        let neighbour_clusters = |c: usize, adj: &[BTreeSet<usize>]| -> BTreeSet<usize> {
            members[&c]
                .iter()
                .flat_map(|&m| adj[m].iter().map(|&x| part.find(x)))
                .collect()
        };
        let some_similar_pair = |xs: &BTreeSet<usize>, ys: &BTreeSet<usize>| {
            xs.iter()
                .any(|&x| ys.iter().any(|&y| cluster_similar(x, y)))
        };
        let holds_start = |c: usize| start.is_some_and(|s| part.find(s) == c);

        let found = par::find_first(exec, pairs.len(), |p| {
            let (c1, c2) = pairs[p];
            if !cluster_similar(c1, c2) {
                return false;
            }
            let pred_ok = holds_start(c1)
                || holds_start(c2)
                || some_similar_pair(
                    &neighbour_clusters(c1, &preds),
                    &neighbour_clusters(c2, &preds),
                );
            pred_ok
                && some_similar_pair(
                    &neighbour_clusters(c1, &succs),
                    &neighbour_clusters(c2, &succs),
                )
        });
        match found {
            Some(p) => {
                let (a, b) = pairs[p];
                part.union(a, b);
            }
            None => break,
        }
    }

    let rename: BTreeMap<String, String> = (0..n)
        .map(|i| {
            (
                states[i].state_id.clone(),
                states[part.find(i)].state_id.clone(),
            )
        })
        .collect();
    let report = MergeReport::new(MergePass::Context, tau, &rename);
    Ok((g.quotient(&rename), report))
}

fn bag_jaccard(a: &Bag<'_>, b: &Bag<'_>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (k, &x) in a {
        let y = b.get(k).copied().unwrap_or(0);
        inter += x.min(y);
        union += x.max(y);
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            union += y;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Signature pass followed by the context pass at `tau`.
pub fn merge_all(
    g: &StgGraph,
    tau: f64,
    exec: Execution,
) -> Result<(StgGraph, MergeReport, MergeReport)> {
    let (sig, sig_report) = signature_merge(g);
    let (ctx, ctx_report) = context_merge(&sig, tau, exec)?;
    Ok((ctx, sig_report, ctx_report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::stg::{ActionEdge, ComponentNode, Provenance, Trigger, TOUCH_BACK};

    fn flat(id: &str, activity: &str, nodes: &[(ComponentKind, &str)]) -> StateNode {
        let children = nodes
            .iter()
            .enumerate()
            .map(|(i, &(kind, rid))| ComponentNode::leaf(&format!("n{i}"), kind, Some(rid)))
            .collect();
        StateNode::new(
            id,
            activity,
            ComponentNode::container("root", Some("root"), children),
        )
    }

    #[test]
    fn jaccard_on_bare_multisets() {
        use ComponentKind::*;
        let bag = |items: &[(ComponentKind, &'static str)]| -> Bag<'static> {
            let mut b = Bag::new();
            for &(k, r) in items {
                *b.entry((k, Some(r))).or_insert(0) += 1;
            }
            b
        };
        let a = bag(&[(Button, "b1"), (TextView, "t1"), (TextView, "t2")]);
        let b = bag(&[(Button, "b1"), (TextView, "t1"), (ImageView, "i1")]);
        // |{b1,t1}| / |{b1,t1,t2,i1}|
        assert_eq!(bag_jaccard(&a, &b), 0.5);
    }

    #[test]
    fn jaccard_examples() {
        use ComponentKind::*;
        let a = flat(
            "A",
            "M",
            &[(Button, "b1"), (TextView, "t1"), (TextView, "t2")],
        );
        let b = flat(
            "B",
            "M",
            &[(Button, "b1"), (TextView, "t1"), (ImageView, "i1")],
        );
        // bags include the shared root container: {root,b1,t1,t2} vs {root,b1,t1,i1}
        assert!((similarity(&a, &b) - 3.0 / 5.0).abs() < 1e-12);
        assert_eq!(similarity(&a, &a), 1.0);
        assert_eq!(similarity(&a, &b), similarity(&b, &a));

        let bare = |id: &str, nodes: &[(ComponentKind, &str)]| {
            let mut s = flat(id, "M", nodes);
            s.root.resource_id = Some(format!("root_{id}"));
            s
        };
        let x = bare("X", &[(Button, "b1"), (TextView, "t1"), (TextView, "t2")]);
        let y = bare("Y", &[(Button, "b1"), (TextView, "t1"), (ImageView, "i1")]);
        // distinct roots: shared {b1,t1}, union {rootX,rootY,b1,t1,t2,i1}
        assert!((similarity(&x, &y) - 2.0 / 6.0).abs() < 1e-12);
        let z = bare("Z", &[(Button, "zz")]);
        let w = bare("W", &[(ImageView, "ww")]);
        assert_eq!(similarity(&z, &w), 0.0);
    }

    #[test]
    fn multiset_counts_matter() {
        use ComponentKind::*;
        let a = flat("A", "M", &[(Button, "b"), (Button, "b")]);
        let b = flat("B", "M", &[(Button, "b")]);
        // {root, b, b} vs {root, b}: min 2, max 3
        assert!((similarity(&a, &b) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn content_only_pair_merges() {
        let mut g = fixtures::line_graph();
        let mut dup = g.state("B").unwrap().clone();
        dup.state_id = "B2".into();
        dup.root.find_mut("title").unwrap().content = Some("something else".into());
        g.add_state(dup).unwrap();
        g.add_action(ActionEdge::new(
            "A",
            Trigger::Click,
            "click_B",
            "B2",
            Provenance::Dynamic,
        ));
        g.add_action(ActionEdge::new(
            "B2",
            Trigger::Click,
            "click_C",
            "C",
            Provenance::Dynamic,
        ));
        let (m, report) = signature_merge(&g);
        assert_eq!(m.states().len(), 3);
        assert_eq!(
            report.clusters,
            vec![Cluster {
                representative: "B".into(),
                merged: vec!["B2".into()]
            }]
        );
        // A→B2 and B2→C collapse onto A→B and B→C
        assert_eq!(m.actions().len(), 3);
    }

    #[test]
    fn distinct_signatures_are_untouched() {
        let g = fixtures::star_graph();
        let (m, report) = signature_merge(&g);
        assert_eq!(m, g);
        assert!(report.clusters.is_empty());
    }

    #[test]
    fn visit_counts_sum() {
        let mut g = fixtures::line_graph();
        g.state_mut("B").unwrap().visit_count = 2;
        let mut dup = g.state("B").unwrap().clone();
        dup.state_id = "B~v1".into();
        dup.visit_count = 3;
        g.add_state(dup).unwrap();
        let (m, _) = signature_merge(&g);
        assert_eq!(m.state("B").unwrap().visit_count, 5);
    }

    #[test]
    fn tau_range_checked() {
        let g = fixtures::line_graph();
        assert!(context_merge(&g, 0.0, Execution::Sequential).is_err());
        assert!(context_merge(&g, 1.5, Execution::Sequential).is_err());
        assert!(context_merge(&g, f64::NAN, Execution::Sequential).is_err());
        assert!(context_merge(&g, 1.0, Execution::Sequential).is_ok());
    }

    #[test]
    fn tau_one_with_distinct_signatures_no_merges() {
        let g = fixtures::random_strongly_connected(9, 10, 3);
        let (m, report) = context_merge(&g, 1.0, Execution::Sequential).unwrap();
        assert!(report.clusters.is_empty());
        assert_eq!(m, g);
    }

    /// List page L (start) opens two detail pages D1, D2. The details share
    /// 22 (kind, resource_id) pairs plus the root, and each has one private
    /// pair: Jaccard = 23 / 25 = 0.92. `succ_sim_low` swaps the back edges
    /// for forward edges into two pages Q1, Q2 sharing 3 of 10 pairs (0.3).
    fn detail_fixture(succ_sim_low: bool) -> StgGraph {
        use ComponentKind::*;
        let mut shared: Vec<(ComponentKind, String)> =
            (0..22).map(|i| (TextView, format!("row{i}"))).collect();
        let detail = |id: &str, private: &str, shared: &mut Vec<(ComponentKind, String)>| {
            shared.push((Button, private.to_owned()));
            let nodes: Vec<(ComponentKind, &str)> =
                shared.iter().map(|(k, r)| (*k, r.as_str())).collect();
            let s = flat(id, "Shop", &nodes);
            shared.pop();
            s
        };
        let d1 = detail("D1", "buy_a", &mut shared);
        let d2 = detail("D2", "buy_b", &mut shared);
        assert!((similarity(&d1, &d2) - 0.92).abs() < 1e-12);

        let mut list = flat("L", "Shop", &[(Button, "open_d1"), (Button, "open_d2")]);
        list.root.resource_id = Some("list_root".into());
        let mut g = StgGraph::new("L");
        g.add_state(list).unwrap();
        g.add_state(d1).unwrap();
        g.add_state(d2).unwrap();
        g.add_action(ActionEdge::new(
            "L",
            Trigger::Click,
            "n0",
            "D1",
            Provenance::Dynamic,
        ));
        g.add_action(ActionEdge::new(
            "L",
            Trigger::Click,
            "n1",
            "D2",
            Provenance::Dynamic,
        ));
        if succ_sim_low {
            let mut q1 = flat(
                "Q1",
                "Shop",
                &[
                    (TextView, "c1"),
                    (TextView, "c2"),
                    (ImageView, "p"),
                    (ImageView, "q"),
                    (ImageView, "r"),
                ],
            );
            q1.root.resource_id = Some("q1".into());
            let mut q2 = flat(
                "Q2",
                "Shop",
                &[
                    (TextView, "c1"),
                    (TextView, "c2"),
                    (ImageView, "s"),
                    (ImageView, "t"),
                ],
            );
            q2.root.resource_id = Some("q2".into());
            g.add_state(q1).unwrap();
            g.add_state(q2).unwrap();
            g.add_action(ActionEdge::new(
                "D1",
                Trigger::Click,
                "n22",
                "Q1",
                Provenance::Dynamic,
            ));
            g.add_action(ActionEdge::new(
                "D2",
                Trigger::Click,
                "n22",
                "Q2",
                Provenance::Dynamic,
            ));
        } else {
            g.add_action(ActionEdge::new(
                "D1",
                Trigger::Back,
                TOUCH_BACK,
                "L",
                Provenance::Dynamic,
            ));
            g.add_action(ActionEdge::new(
                "D2",
                Trigger::Back,
                TOUCH_BACK,
                "L",
                Provenance::Dynamic,
            ));
        }
        g
    }

    #[test]
    fn context_merge_hand_fixture() {
        let g = detail_fixture(false);
        let (m, report) = context_merge(&g, 0.9, Execution::Sequential).unwrap();
        assert_eq!(
            report.clusters,
            vec![Cluster {
                representative: "D1".into(),
                merged: vec!["D2".into()]
            }]
        );
        assert_eq!(m.states().len(), 2);
        assert_eq!(m.actions().len(), 3);
    }

    #[test]
    fn context_merge_needs_similar_successors() {
        let g = detail_fixture(true);
        // Q1 {root_q1,c1,c2,p,q,r} vs Q2 {root_q2,c1,c2,s,t}: 2 / 9
        let q = similarity(g.state("Q1").unwrap(), g.state("Q2").unwrap());
        assert!((q - 2.0 / 9.0).abs() < 1e-12);
        let (m, report) = context_merge(&g, 0.9, Execution::Sequential).unwrap();
        assert!(report.clusters.is_empty());
        assert_eq!(m, g);
        // with the threshold under both similarities the pair merges
        let (_, report) = context_merge(&g, 0.2, Execution::Sequential).unwrap();
        assert!(!report.clusters.is_empty());
    }

    #[test]
    fn activity_barrier() {
        let mut g = detail_fixture(false);
        let mut d2 = g.state("D2").unwrap().clone();
        d2.activity = "Other".into();
        *g.state_mut("D2").unwrap() = d2;
        let (_, report) = context_merge(&g, 0.9, Execution::Sequential).unwrap();
        assert!(report.clusters.is_empty());
    }

    #[test]
    fn modes_agree_and_idempotent() {
        for seed in 0..10 {
            let g = fixtures::random_strongly_connected(12, 20, seed);
            let (a, ra) = context_merge(&g, 0.3, Execution::Sequential).unwrap();
            let (b, rb) = context_merge(&g, 0.3, Execution::Parallel).unwrap();
            assert_eq!(a, b);
            assert_eq!(ra, rb);
            let (again, r2) = context_merge(&a, 0.3, Execution::Sequential).unwrap();
            assert_eq!(again, a);
            assert!(r2.clusters.is_empty());
        }
    }
}
