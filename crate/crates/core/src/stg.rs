//! State transition graph model, canonical state signatures, validation and
//! the versioned capture format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into every document this crate emits.
pub const FORMAT_VERSION: &str = "1";

/// `component_ref` of a back action that has no on-screen control.
pub const TOUCH_BACK: &str = "touch_back";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Button,
    NavItem,
    FragmentTab,
    BackControl,
    AppWidget,
    TextView,
    ImageView,
    Container,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Button => "button",
            ComponentKind::NavItem => "nav_item",
            ComponentKind::FragmentTab => "fragment_tab",
            ComponentKind::BackControl => "back_control",
            ComponentKind::AppWidget => "app_widget",
            ComponentKind::TextView => "text_view",
            ComponentKind::ImageView => "image_view",
            ComponentKind::Container => "container",
        }
    }

    pub fn is_leaf(self) -> bool {
        self != ComponentKind::Container
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentNode {
    pub local_id: String,
    pub kind: ComponentKind,
    #[serde(default)]
    pub resource_id: Option<String>,
    /// Text payload or image hash placeholder.
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub children: Vec<ComponentNode>,
}

impl ComponentNode {
    pub fn leaf(local_id: &str, kind: ComponentKind, resource_id: Option<&str>) -> Self {
        ComponentNode {
            local_id: local_id.to_owned(),
            kind,
            resource_id: resource_id.map(str::to_owned),
            content: None,
            children: Vec::new(),
        }
    }

    pub fn container(
        local_id: &str,
        resource_id: Option<&str>,
        children: Vec<ComponentNode>,
    ) -> Self {
        ComponentNode {
            local_id: local_id.to_owned(),
            kind: ComponentKind::Container,
            resource_id: resource_id.map(str::to_owned),
            content: None,
            children,
        }
    }

    pub fn with_content(mut self, content: &str) -> Self {
        self.content = Some(content.to_owned());
        self
    }

    /// Depth-first pre-order walk, yielding each node with its depth.
    pub fn walk(&self) -> Vec<(usize, &ComponentNode)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, self)];
        while let Some((depth, node)) = stack.pop() {
            out.push((depth, node));
            for child in node.children.iter().rev() {
                stack.push((depth + 1, child));
            }
        }
        out
    }

    pub fn find(&self, local_id: &str) -> Option<&ComponentNode> {
        if self.local_id == local_id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(local_id))
    }

    pub fn find_mut(&mut self, local_id: &str) -> Option<&mut ComponentNode> {
        if self.local_id == local_id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(local_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateNode {
    pub state_id: String,
    pub activity: String,
    pub root: ComponentNode,
    #[serde(default)]
    pub visit_count: u64,
}

impl StateNode {
    pub fn new(state_id: &str, activity: &str, root: ComponentNode) -> Self {
        StateNode {
            state_id: state_id.to_owned(),
            activity: activity.to_owned(),
            root,
            visit_count: 0,
        }
    }

    /// Same page ignoring the visit counter.
    pub fn same_payload(&self, other: &StateNode) -> bool {
        self.state_id == other.state_id
            && self.activity == other.activity
            && self.root == other.root
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Click,
    Back,
    LongPress,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Click => "click",
            Trigger::Back => "back",
            Trigger::LongPress => "long_press",
        }
    }
}

/// Where an edge came from. The derive order doubles as the precedence used
/// when identical edges from different sources collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Static,
    Dynamic,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEdge {
    pub action_id: String,
    pub source: String,
    pub target: String,
    pub trigger: Trigger,
    pub component_ref: String,
    pub provenance: Provenance,
}

/// Edge identity: (source, component_ref, trigger, target).
pub type EdgeKey<'a> = (&'a str, &'a str, Trigger, &'a str);

impl ActionEdge {
    pub fn new(
        source: &str,
        trigger: Trigger,
        component_ref: &str,
        target: &str,
        provenance: Provenance,
    ) -> Self {
        ActionEdge {
            action_id: canonical_action_id(source, trigger, component_ref, target),
            source: source.to_owned(),
            target: target.to_owned(),
            trigger,
            component_ref: component_ref.to_owned(),
            provenance,
        }
    }

    pub fn key(&self) -> EdgeKey<'_> {
        (
            &self.source,
            &self.component_ref,
            self.trigger,
            &self.target,
        )
    }

    /// Precedence when two edges with the same identity collapse into one.
    fn rank(&self) -> (Provenance, &str) {
        (self.provenance, &self.action_id)
    }
}

/// Deterministic action id derived from the edge identity.
pub fn canonical_action_id(
    source: &str,
    trigger: Trigger,
    component_ref: &str,
    target: &str,
) -> String {
    format!("{source}/{}:{component_ref}>{target}", trigger.as_str())
}

/// Directed multigraph of UI states and trigger actions.
///
/// `states` is kept sorted by `state_id` and `actions` by `action_id`; both
/// are plain vectors so that documents with duplicate ids can still be loaded
/// and reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StgGraph {
    pub start_state: String,
    states: Vec<StateNode>,
    actions: Vec<ActionEdge>,
}

impl StgGraph {
    pub fn new(start_state: &str) -> Self {
        StgGraph {
            start_state: start_state.to_owned(),
            states: Vec::new(),
            actions: Vec::new(),
        }
    }

    /// Builds a graph from raw parts, sorting but not deduplicating.
    pub fn from_parts(
        start_state: &str,
        mut states: Vec<StateNode>,
        mut actions: Vec<ActionEdge>,
    ) -> Self {
        states.sort_by(|a, b| a.state_id.cmp(&b.state_id));
        actions.sort_by(|a, b| a.action_id.cmp(&b.action_id));
        StgGraph {
            start_state: start_state.to_owned(),
            states,
            actions,
        }
    }

    pub fn states(&self) -> &[StateNode] {
        &self.states
    }

    pub fn actions(&self) -> &[ActionEdge] {
        &self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, id: &str) -> Option<&StateNode> {
        self.states
            .binary_search_by(|s| s.state_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.states[i])
    }

    pub fn state_mut(&mut self, id: &str) -> Option<&mut StateNode> {
        self.states
            .binary_search_by(|s| s.state_id.as_str().cmp(id))
            .ok()
            .map(move |i| &mut self.states[i])
    }

    pub fn contains_state(&self, id: &str) -> bool {
        self.state(id).is_some()
    }

    pub fn action(&self, action_id: &str) -> Option<&ActionEdge> {
        self.actions
            .binary_search_by(|a| a.action_id.as_str().cmp(action_id))
            .ok()
            .map(|i| &self.actions[i])
    }

    pub fn outgoing<'a>(&'a self, source: &'a str) -> impl Iterator<Item = &'a ActionEdge> + 'a {
        // ids start with "{source}/" and strings sharing a prefix sort together
        let prefix = format!("{source}/");
        let from = self
            .actions
            .partition_point(|a| a.action_id.as_str() < prefix.as_str());
        self.actions[from..]
            .iter()
            .take_while(move |a| a.action_id.starts_with(&prefix))
            .filter(move |a| a.source == source)
    }

    pub fn incoming<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a ActionEdge> + 'a {
        self.actions.iter().filter(move |a| a.target == target)
    }

    pub fn add_state(&mut self, state: StateNode) -> Result<()> {
        match self
            .states
            .binary_search_by(|s| s.state_id.as_str().cmp(&state.state_id))
        {
            Ok(_) => Err(Error::DuplicateState(state.state_id)),
            Err(pos) => {
                self.states.insert(pos, state);
                Ok(())
            }
        }
    }

    /// Inserts `edge` unless an edge with the same identity exists; in that
    /// case the higher-precedence of the two is kept. Returns true when the
    /// edge set grew.
    pub fn add_action(&mut self, edge: ActionEdge) -> bool {
        if let Some(pos) = self.actions.iter().position(|a| a.key() == edge.key()) {
            if edge.rank() < self.actions[pos].rank() {
                self.actions.remove(pos);
                self.insert_sorted(edge);
            }
            return false;
        }
        self.insert_sorted(edge);
        true
    }

    fn insert_sorted(&mut self, edge: ActionEdge) {
        let pos = self
            .actions
            .partition_point(|a| a.action_id.as_str() <= edge.action_id.as_str());
        self.actions.insert(pos, edge);
    }

    pub fn state_ids(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.state_id.as_str())
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.states.iter().map(|s| s.activity.as_str()).collect()
    }

    /// Rebuilds the graph with states renamed through `map` (ids missing from
    /// the map are kept). States mapping to the same id collapse into the
    /// state whose original id equals the new id (or the first one), with
    /// visit counts summed; edges are re-pointed and deduplicated.
    pub fn quotient(&self, map: &BTreeMap<String, String>) -> StgGraph {
        let rename = |id: &str| map.get(id).cloned().unwrap_or_else(|| id.to_owned());
        let mut merged: BTreeMap<String, StateNode> = BTreeMap::new();
        let mut visits: BTreeMap<String, u64> = BTreeMap::new();
        for s in &self.states {
            let rep = rename(&s.state_id);
            *visits.entry(rep.clone()).or_default() += s.visit_count;
            let keep_own = s.state_id == rep;
            match merged.get(&rep) {
                Some(existing) if existing.state_id == rep || !keep_own => {}
                _ => {
                    let mut node = s.clone();
                    node.state_id = rep.clone();
                    merged.insert(rep, node);
                }
            }
        }
        let mut out = StgGraph::new(&rename(&self.start_state));
        for (id, mut node) in merged {
            node.visit_count = visits[&id];
            out.states.push(node);
        }
        for a in &self.actions {
            let mut edge = a.clone();
            edge.source = rename(&a.source);
            edge.target = rename(&a.target);
            out.add_action(edge);
        }
        out
    }
}

/// Canonical depth-first serialization of a state's component hierarchy.
///
/// Each node is written as `(kind,resource_id,child_count)` with the
/// resource id JSON-quoted (or `null`); with `strip_content == false` the
/// content is appended as a fourth field. Nodes are joined by `;` in
/// pre-order. `local_id` never participates.
pub fn hierarchy_signature(state: &StateNode, strip_content: bool) -> String {
    let mut out = String::new();
    for (i, (_, node)) in state.root.walk().into_iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        out.push('(');
        out.push_str(node.kind.as_str());
        out.push(',');
        out.push_str(&quote(node.resource_id.as_deref()));
        out.push(',');
        out.push_str(&node.children.len().to_string());
        if !strip_content {
            out.push(',');
            out.push_str(&quote(node.content.as_deref()));
        }
        out.push(')');
    }
    out
}

fn quote(s: Option<&str>) -> String {
    match s {
        Some(s) => serde_json::to_string(s).expect("string serialization is infallible"),
        None => "null".to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub id: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: &str, id: &str, detail: String) {
        self.violations.push(Violation {
            invariant: invariant.to_owned(),
            id: id.to_owned(),
            detail,
        });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {} [{}]: {}", v.invariant, v.id, v.detail)?;
        }
        Ok(())
    }
}

/// Structural checks on a single state's component tree.
pub fn validate_state(state: &StateNode) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_state(state, &mut report);
    report.violations.sort();
    report
}

fn check_state(state: &StateNode, report: &mut ValidationReport) {
    let id = state.state_id.as_str();
    if id.is_empty() {
        report.push("empty_state_id", id, "state id must be non-empty".into());
    }
    if state.activity.is_empty() {
        report.push(
            "missing_activity",
            id,
            "state must belong to an activity".into(),
        );
    }
    let mut seen = BTreeSet::new();
    for (_, node) in state.root.walk() {
        if !seen.insert(node.local_id.as_str()) {
            report.push(
                "duplicate_local_id",
                id,
                format!("local id {:?} appears more than once", node.local_id),
            );
        }
        if node.kind.is_leaf() && !node.children.is_empty() {
            report.push(
                "leaf_with_children",
                id,
                format!("{} {:?} has children", node.kind.as_str(), node.local_id),
            );
        }
    }
}

/// Checks every graph, state and edge invariant. The report is ordered by
/// (invariant, id, detail).
pub fn validate(graph: &StgGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for s in &graph.states {
        if !ids.insert(s.state_id.as_str()) {
            report.push(
                "duplicate_state_id",
                &s.state_id,
                "state id is not unique".into(),
            );
        }
        check_state(s, &mut report);
    }
    if !ids.contains(graph.start_state.as_str()) {
        report.push(
            "missing_start_state",
            &graph.start_state,
            "start state is not in the graph".into(),
        );
    }
    let mut keys = BTreeSet::new();
    let mut action_ids = BTreeSet::new();
    for a in &graph.actions {
        if !action_ids.insert(a.action_id.as_str()) {
            report.push(
                "duplicate_action_id",
                &a.action_id,
                "action id is not unique".into(),
            );
        }
        if !keys.insert(a.key()) {
            report.push(
                "duplicate_action",
                &a.action_id,
                "another action has the same (source, component_ref, trigger, target)".into(),
            );
        }
        let source = graph.state(&a.source);
        if source.is_none() {
            report.push(
                "dangling_source",
                &a.source,
                format!("action {:?} starts at a missing state", a.action_id),
            );
        }
        if graph.state(&a.target).is_none() {
            report.push(
                "dangling_target",
                &a.target,
                format!("action {:?} targets a missing state", a.action_id),
            );
        }
        if let Some(src) = source {
            let is_touch_back = a.trigger == Trigger::Back && a.component_ref == TOUCH_BACK;
            if !is_touch_back && src.root.find(&a.component_ref).is_none() {
                report.push(
                    "unresolved_component_ref",
                    &a.action_id,
                    format!(
                        "component {:?} is not in state {:?}",
                        a.component_ref, a.source
                    ),
                );
            }
        }
    }
    report.violations.sort();
    report
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    version: String,
    start_state: String,
    states: Vec<StateNode>,
    actions: Vec<ActionEdge>,
}

/// Parses a versioned document: syntax first, then the version tag, then the
/// schema (unknown fields rejected).
pub fn parse_document<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: format!("{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    match value.get("version") {
        None => {
            return Err(Error::Parse {
                path: "version".into(),
                message: "missing field `version`".into(),
            })
        }
        Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
        Some(serde_json::Value::String(v)) => {
            return Err(Error::Version {
                found: v.clone(),
                expected: FORMAT_VERSION,
            })
        }
        Some(other) => {
            return Err(Error::Parse {
                path: "version".into(),
                message: format!("expected a string, found {other}"),
            })
        }
    }
    serde_path_to_error::deserialize(value).map_err(Error::from_json)
}

pub fn load_graph(bytes: &[u8]) -> Result<StgGraph> {
    let doc: GraphDocument = parse_document(bytes)?;
    Ok(StgGraph::from_parts(
        &doc.start_state,
        doc.states,
        doc.actions,
    ))
}

pub fn save_graph(graph: &StgGraph) -> Vec<u8> {
    let doc = GraphDocument {
        version: FORMAT_VERSION.to_owned(),
        start_state: graph.start_state.clone(),
        states: graph.states.clone(),
        actions: graph.actions.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("graph serialization is infallible");
    out.push(b'\n');
    out
}

impl Serialize for StgGraph {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        GraphDocument {
            version: FORMAT_VERSION.to_owned(),
            start_state: self.start_state.clone(),
            states: self.states.clone(),
            actions: self.actions.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StgGraph {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let doc = GraphDocument::deserialize(deserializer)?;
        if doc.version != FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported graph version {:?}",
                doc.version
            )));
        }
        Ok(StgGraph::from_parts(
            &doc.start_state,
            doc.states,
            doc.actions,
        ))
    }
}
