//! Declarative synthetic apps and the two extraction passes over them.
//!
//! An [`AppModel`] is the ground truth: activities with their declared launch
//! targets, the true state transition graph, and per-state content variants
//! that render as near-duplicate pages. [`static_extract`] reads only the
//! activity declarations; [`dynamic_explore`] random-walks the true graph and
//! records what it sees. [`combine`] merges the two partial graphs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stg::{
    parse_document, ActionEdge, ComponentKind, ComponentNode, Provenance, StateNode, StgGraph,
    Trigger, FORMAT_VERSION, TOUCH_BACK,
};

/// local_id → replacement content.
pub type ContentAssignment = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityDecl {
    pub name: String,
    pub declared_targets: Vec<String>,
    /// Owned states; the first one is the activity's entry state.
    pub states: Vec<String>,
}

impl ActivityDecl {
    pub fn entry(&self) -> Option<&str> {
        self.states.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppModel {
    pub version: String,
    pub activities: Vec<ActivityDecl>,
    pub launch_activity: String,
    pub true_graph: StgGraph,
    #[serde(default)]
    pub content_variants: BTreeMap<String, Vec<ContentAssignment>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppParams {
    pub n_activities: usize,
    pub states_per_activity: usize,
    pub branching: usize,
    pub duplicate_rate: f64,
    pub seed: u64,
}

impl Default for AppParams {
    fn default() -> Self {
        AppParams {
            n_activities: 3,
            states_per_activity: 4,
            branching: 2,
            duplicate_rate: 0.0,
            seed: 7,
        }
    }
}

/// Component through which an activity's entry state launches `activity`.
pub fn launch_component(activity: &str) -> String {
    format!("launch_{activity}")
}

/// Id of the `k`-th content variant of `base` (zero-based).
pub fn variant_id(base: &str, k: usize) -> String {
    format!("{base}~v{}", k + 1)
}

/// Strips a variant suffix, returning the ground-truth state id.
pub fn base_id(id: &str) -> &str {
    id.split_once('~').map_or(id, |(b, _)| b)
}

fn apply_content(root: &mut ComponentNode, assignment: &ContentAssignment) {
    for (local, content) in assignment {
        if let Some(node) = root.find_mut(local) {
            node.content = Some(content.clone());
        }
    }
}

impl AppModel {
    pub fn activity(&self, name: &str) -> Option<&ActivityDecl> {
        self.activities.iter().find(|a| a.name == name)
    }

    pub fn launch_state(&self) -> &str {
        &self.true_graph.start_state
    }

    /// The `k`-th near-duplicate rendering of `base`.
    pub fn variant_state(&self, base: &str, k: usize) -> Option<StateNode> {
        let assignment = self.content_variants.get(base)?.get(k)?;
        let mut node = self.true_graph.state(base)?.clone();
        node.state_id = variant_id(base, k);
        node.visit_count = 0;
        apply_content(&mut node.root, assignment);
        Some(node)
    }

    /// True graph with every content variant materialized as its own state,
    /// carrying copies of the base state's outgoing and incoming edges.
    pub fn expanded_graph(&self) -> StgGraph {
        let mut g = self.true_graph.clone();
        let base_edges: Vec<ActionEdge> = g.actions().to_vec();
        for (base, variants) in &self.content_variants {
            for k in 0..variants.len() {
                let node = self
                    .variant_state(base, k)
                    .expect("variant of a known state");
                let vid = node.state_id.clone();
                g.add_state(node).expect("variant ids are fresh");
                for e in &base_edges {
                    if &e.source == base {
                        let target = if &e.target == base { &vid } else { &e.target };
                        g.add_action(ActionEdge::new(
                            &vid,
                            e.trigger,
                            &e.component_ref,
                            target,
                            e.provenance,
                        ));
                    }
                    if &e.target == base && &e.source != base {
                        g.add_action(ActionEdge::new(
                            &e.source,
                            e.trigger,
                            &e.component_ref,
                            &vid,
                            e.provenance,
                        ));
                    }
                }
            }
        }
        g
    }

    pub fn save(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("app serialization is infallible");
        out.push(b'\n');
        out
    }

    pub fn load(bytes: &[u8]) -> Result<AppModel> {
        parse_document(bytes)
    }
}

struct EdgeSpec {
    source: String,
    target: String,
    trigger: Trigger,
    component: String,
    kind: ComponentKind,
}

/// Generates a random synthetic app. Deterministic for a fixed seed.
///
/// Each activity is a chain of states (`next` clicks forward, `touch_back`
/// returns), activities hang off a random launch tree rooted at the first
/// activity (launch clicks from entry states, `touch_back` from the child
/// entry), and `branching - 1` extra links per state add shortcuts. The
/// result is strongly connected.
pub fn generate_random_app(params: &AppParams) -> Result<AppModel> {
    if params.n_activities == 0 || params.states_per_activity == 0 || params.branching == 0 {
        return Err(Error::Param(
            "n_activities, states_per_activity and branching must all be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.duplicate_rate) {
        return Err(Error::Param(format!(
            "duplicate_rate must lie in [0, 1], got {}",
            params.duplicate_rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let names: Vec<String> = (0..params.n_activities)
        .map(|a| format!("Act{a}"))
        .collect();
    let ids: Vec<Vec<String>> = (0..params.n_activities)
        .map(|a| {
            (0..params.states_per_activity)
                .map(|k| format!("A{a}S{k}"))
                .collect()
        })
        .collect();

    let mut specs: Vec<EdgeSpec> = Vec::new();
    let mut has = BTreeSet::new();
    let mut push =
        |specs: &mut Vec<EdgeSpec>, s: &str, t: &str, trigger: Trigger, component: String, kind| {
            if has.insert((s.to_owned(), t.to_owned(), trigger)) {
                specs.push(EdgeSpec {
                    source: s.to_owned(),
                    target: t.to_owned(),
                    trigger,
                    component,
                    kind,
                });
            }
        };

    for chain in &ids {
        for w in chain.windows(2) {
            push(
                &mut specs,
                &w[0],
                &w[1],
                Trigger::Click,
                "next".into(),
                ComponentKind::Button,
            );
            push(
                &mut specs,
                &w[1],
                &w[0],
                Trigger::Back,
                TOUCH_BACK.into(),
                ComponentKind::BackControl,
            );
        }
    }
    for a in 1..params.n_activities {
        let parent = rng.gen_range(0..a);
        let (pe, ce) = (&ids[parent][0], &ids[a][0]);
        push(
            &mut specs,
            pe,
            ce,
            Trigger::Click,
            launch_component(&names[a]),
            ComponentKind::Button,
        );
        push(
            &mut specs,
            ce,
            pe,
            Trigger::Back,
            TOUCH_BACK.into(),
            ComponentKind::BackControl,
        );
    }
    let link_kinds = [
        ComponentKind::NavItem,
        ComponentKind::FragmentTab,
        ComponentKind::Button,
    ];
    for a in 0..params.n_activities {
        for k in 0..params.states_per_activity {
            let src = &ids[a][k];
            for m in 0..params.branching - 1 {
                let cross = k == 0 && params.n_activities > 1 && rng.gen_bool(0.3);
                if cross {
                    let mut b = rng.gen_range(0..params.n_activities - 1);
                    if b >= a {
                        b += 1;
                    }
                    push(
                        &mut specs,
                        src,
                        &ids[b][0],
                        Trigger::Click,
                        launch_component(&names[b]),
                        ComponentKind::Button,
                    );
                } else if params.states_per_activity > 1 {
                    let mut j = rng.gen_range(0..params.states_per_activity - 1);
                    if j >= k {
                        j += 1;
                    }
                    let (trigger, kind) = if rng.gen_bool(0.15) {
                        (Trigger::LongPress, ComponentKind::AppWidget)
                    } else {
                        (
                            Trigger::Click,
                            link_kinds[rng.gen_range(0..link_kinds.len())],
                        )
                    };
                    push(
                        &mut specs,
                        src,
                        &ids[a][j],
                        trigger,
                        format!("link{m}"),
                        kind,
                    );
                }
            }
        }
    }

    let mut graph = StgGraph::new(&ids[0][0]);
    for (a, chain) in ids.iter().enumerate() {
        for (k, id) in chain.iter().enumerate() {
            let mut toolbar =
                vec![
                    ComponentNode::leaf("title", ComponentKind::TextView, Some("title"))
                        .with_content(&format!("{} page {k}", names[a])),
                ];
            if specs
                .iter()
                .any(|e| &e.source == id && e.trigger == Trigger::Back)
                && rng.gen_bool(0.5)
            {
                toolbar.push(ComponentNode::leaf(
                    "up",
                    ComponentKind::ImageView,
                    Some("up_icon"),
                ));
            }
            let mut children = vec![
                ComponentNode::container("toolbar", Some("toolbar"), toolbar),
                ComponentNode::leaf("body", ComponentKind::TextView, Some(&format!("{id}_body")))
                    .with_content(&format!("content of {id}")),
            ];
            if rng.gen_bool(0.4) {
                children.push(
                    ComponentNode::leaf("banner", ComponentKind::ImageView, Some("banner"))
                        .with_content(&format!("img:{:08x}", rng.gen::<u32>())),
                );
            }
            for e in specs
                .iter()
                .filter(|e| &e.source == id && e.trigger != Trigger::Back)
            {
                if children.iter().any(|c| c.local_id == e.component) {
                    continue;
                }
                children.push(
                    ComponentNode::leaf(&e.component, e.kind, Some(&e.component))
                        .with_content(&e.component),
                );
            }
            let root = ComponentNode::container("root", Some("root"), children);
            graph
                .add_state(StateNode::new(id, &names[a], root))
                .expect("generated ids are unique");
        }
    }
    for e in &specs {
        graph.add_action(ActionEdge::new(
            &e.source,
            e.trigger,
            &e.component,
            &e.target,
            Provenance::Manual,
        ));
    }

    let activities = names
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let entry = &ids[a][0];
            let targets: BTreeSet<String> = graph
                .outgoing(entry)
                .filter_map(|e| e.component_ref.strip_prefix("launch_").map(str::to_owned))
                .collect();
            ActivityDecl {
                name: name.clone(),
                declared_targets: targets.into_iter().collect(),
                states: ids[a].clone(),
            }
        })
        .collect();

    let mut all: Vec<&String> = ids.iter().flatten().collect();
    all.shuffle(&mut rng);
    let n_dup = (params.duplicate_rate * all.len() as f64).round() as usize;
    let mut content_variants = BTreeMap::new();
    for id in all.into_iter().take(n_dup) {
        let n_variants = rng.gen_range(1..=2);
        let variants = (0..n_variants)
            .map(|v| {
                let mut assignment = ContentAssignment::new();
                assignment.insert("title".into(), format!("{id} title variant {}", v + 1));
                assignment.insert(
                    "body".into(),
                    format!("{id} body variant {} #{}", v + 1, rng.gen::<u16>()),
                );
                assignment
            })
            .collect();
        content_variants.insert(id.clone(), variants);
    }

    Ok(AppModel {
        version: FORMAT_VERSION.to_owned(),
        activities,
        launch_activity: names[0].clone(),
        true_graph: graph,
        content_variants,
    })
}

/// Activity-level skeleton from launch declarations: one static edge from
/// A's entry to B's entry per declared target B of A.
pub fn static_extract(app: &AppModel) -> StgGraph {
    let launch_entry = app
        .activity(&app.launch_activity)
        .and_then(ActivityDecl::entry)
        .unwrap_or(app.launch_state());
    let mut g = StgGraph::new(launch_entry);
    for act in &app.activities {
        let Some(entry) = act.entry() else { continue };
        if let Some(state) = app.true_graph.state(entry) {
            let mut state = state.clone();
            state.visit_count = 0;
            let _ = g.add_state(state);
        }
    }
    for act in &app.activities {
        let Some(src) = act.entry() else { continue };
        for target in &act.declared_targets {
            let Some(dst) = app.activity(target).and_then(ActivityDecl::entry) else {
                continue;
            };
            g.add_action(ActionEdge::new(
                src,
                Trigger::Click,
                &launch_component(target),
                dst,
                Provenance::Static,
            ));
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: String,
    /// `None` for a restart from the launch state after a dead end.
    pub action_id: Option<String>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationTrace {
    pub steps: Vec<TraceStep>,
    pub seed: u64,
    pub budget: usize,
}

/// Seeded uniform random walk over the true graph, recording every observed
/// page (with a content variant drawn per visit) and every traversed edge.
/// The launch page is always observed with its default content.
pub fn dynamic_explore(
    app: &AppModel,
    budget: usize,
    seed: u64,
) -> Result<(StgGraph, ExplorationTrace)> {
    if budget == 0 {
        return Err(Error::Param("exploration budget must be at least 1".into()));
    }
    let truth = &app.true_graph;
    let launch = app.launch_state().to_owned();
    if !truth.contains_state(&launch) {
        return Err(Error::UnknownState(launch));
    }
    let mut out_edges: BTreeMap<&str, Vec<&ActionEdge>> = BTreeMap::new();
    for e in truth.actions() {
        out_edges.entry(e.source.as_str()).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = StgGraph::new(&launch);

    let observe = |g: &mut StgGraph, base: &str, rng: &mut ChaCha8Rng, default: bool| -> String {
        let n_variants = app.content_variants.get(base).map_or(0, Vec::len);
        let pick = if default || n_variants == 0 {
            0
        } else {
            rng.gen_range(0..=n_variants)
        };
        let node = if pick == 0 {
            let mut n = truth
                .state(base)
                .expect("walk stays in the true graph")
                .clone();
            n.visit_count = 0;
            n
        } else {
            app.variant_state(base, pick - 1)
                .expect("variant index in range")
        };
        let id = node.state_id.clone();
        if !g.contains_state(&id) {
            g.add_state(node).expect("checked above");
        }
        g.state_mut(&id).expect("just inserted").visit_count += 1;
        id
    };

    let mut base = launch.clone();
    let mut seen = observe(&mut g, &base, &mut rng, true);
    let mut steps = Vec::with_capacity(budget);
    for _ in 0..budget {
        match out_edges.get(base.as_str()) {
            Some(choices) if !choices.is_empty() => {
                let edge = choices[rng.gen_range(0..choices.len())];
                let next = observe(&mut g, &edge.target, &mut rng, false);
                let recorded = ActionEdge::new(
                    &seen,
                    edge.trigger,
                    &edge.component_ref,
                    &next,
                    Provenance::Dynamic,
                );
                steps.push(TraceStep {
                    state: seen.clone(),
                    action_id: Some(recorded.action_id.clone()),
                    result: next.clone(),
                });
                g.add_action(recorded);
                base = edge.target.clone();
                seen = next;
            }
            _ => {
                let next = observe(&mut g, &launch, &mut rng, true);
                steps.push(TraceStep {
                    state: seen.clone(),
                    action_id: None,
                    result: next.clone(),
                });
                base = launch.clone();
                seen = next;
            }
        }
    }
    Ok((
        g,
        ExplorationTrace {
            steps,
            seed,
            budget,
        },
    ))
}

/// Union of two partial graphs over a shared state-id namespace.
///
/// Edges collapse by identity (static provenance wins over dynamic); visit
/// counts take the maximum; the start state comes from `dynamic_g` when it
/// is present there.
pub fn combine(static_g: &StgGraph, dynamic_g: &StgGraph) -> Result<StgGraph> {
    let start = if dynamic_g.contains_state(&dynamic_g.start_state) {
        &dynamic_g.start_state
    } else {
        &static_g.start_state
    };
    let mut out = StgGraph::new(start);
    let mut conflicts = Vec::new();
    for s in static_g.states().iter().chain(dynamic_g.states()) {
        match out.state_mut(&s.state_id) {
            Some(existing) => {
                if !existing.same_payload(s) {
                    conflicts.push(s.state_id.clone());
                }
                existing.visit_count = existing.visit_count.max(s.visit_count);
            }
            None => out.add_state(s.clone())?,
        }
    }
    if !conflicts.is_empty() {
        conflicts.dedup();
        return Err(Error::Conflict(conflicts));
    }
    for e in static_g.actions().iter().chain(dynamic_g.actions()) {
        out.add_action(e.clone());
    }
    Ok(out)
}

/// Default step budget for [`extract`].
pub const DEFAULT_EXPLORATION_BUDGET: usize = 2_000;

/// Static pass, dynamic pass and their union in one call.
pub fn extract(app: &AppModel, budget: usize, seed: u64) -> Result<(StgGraph, ExplorationTrace)> {
    let (dynamic_g, trace) = dynamic_explore(app, budget, seed)?;
    Ok((combine(&static_extract(app), &dynamic_g)?, trace))
}
