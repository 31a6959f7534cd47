//! Live guidance sessions.
//!
//! A [`Session`] follows one explorer through the graph: it serves the next
//! hint move of the active plan, replans from the observed state whenever
//! the explorer deviates, replans after an idle spell, and admits states the
//! graph did not know about. Every state change is appended to an event log;
//! [`Session::replay`] rebuilds an identical session from that log.

mod layout;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use layout::{
    layout_state, LaidOutComponent, Rect, ScreenLayout, BACK_KEY, SCREEN_HEIGHT, SCREEN_WIDTH,
};

use crate::error::{Error, Result};
use crate::planner::{Plan, Planner, PlannerConfig};
use crate::stg::{
    validate, validate_state, ActionEdge, Provenance, StateNode, StgGraph, Trigger, FORMAT_VERSION,
    TOUCH_BACK,
};

pub const DEFAULT_IDLE_THRESHOLD_MS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub idle_threshold_ms: u64,
    pub planner: PlannerConfig,
    pub allow_unknown_states: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            idle_threshold_ms: DEFAULT_IDLE_THRESHOLD_MS,
            planner: PlannerConfig::default(),
            allow_unknown_states: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlay {
    pub bounds: Rect,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub action_id: String,
    pub trigger: Trigger,
    pub component_ref: String,
    pub target: String,
    pub overlay: Overlay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Transition {
        action_id: Option<String>,
        observed: String,
    },
    IdleTick,
    HintServed {
        action_id: Option<String>,
    },
    Deviation {
        expected: Option<String>,
        taken: Option<String>,
        observed: String,
    },
    UnknownState {
        state: Box<StateNode>,
        via_action: Box<ActionEdge>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        outgoing: Vec<ActionEdge>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TesterEvent {
    /// Milliseconds since session start.
    pub at_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// What the explorer reported doing: the action taken, the state observed
/// afterwards, or both.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionReport {
    #[serde(default)]
    pub action_id: Option<String>,
    #[serde(default)]
    pub observed: Option<String>,
}

impl TransitionReport {
    pub fn action(id: &str) -> Self {
        TransitionReport {
            action_id: Some(id.to_owned()),
            observed: None,
        }
    }

    pub fn observed(state: &str) -> Self {
        TransitionReport {
            action_id: None,
            observed: Some(state.to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub current: String,
    pub steps: u64,
    pub states_visited: usize,
    pub states_total: usize,
    pub state_coverage: f64,
    pub activities_visited: usize,
    pub activities_total: usize,
    pub repeated_visits: u64,
    pub deviations: u64,
    pub idle_replans: u64,
    pub initial_plan_cost: u32,
    pub remaining_plan_steps: usize,
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct Session {
    session_id: String,
    start_state: String,
    initial_graph: StgGraph,
    planner: Planner,
    config: SessionConfig,
    current: String,
    visits: BTreeMap<String, u64>,
    plan: Plan,
    cursor: usize,
    initial_plan_cost: u32,
    last_event_ms: u64,
    steps: u64,
    deviations: u64,
    idle_replans: u64,
    event_log: Vec<TesterEvent>,
}

impl Session {
    pub fn start(
        session_id: &str,
        graph: StgGraph,
        start: &str,
        config: SessionConfig,
    ) -> Result<Session> {
        validate(&graph).into_result()?;
        if !graph.contains_state(start) {
            return Err(Error::UnknownState(start.to_owned()));
        }
        let planner = Planner::new(graph.clone(), config.planner)?;
        let plan = planner.replan(start, &BTreeSet::from([start.to_owned()]))?;
        Ok(Session {
            session_id: session_id.to_owned(),
            start_state: start.to_owned(),
            initial_graph: graph,
            planner,
            config,
            current: start.to_owned(),
            visits: BTreeMap::from([(start.to_owned(), 1)]),
            initial_plan_cost: plan.total_cost,
            plan,
            cursor: 0,
            last_event_ms: 0,
            steps: 0,
            deviations: 0,
            idle_replans: 0,
            event_log: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn graph(&self) -> &StgGraph {
        self.planner.graph()
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn events(&self) -> &[TesterEvent] {
        &self.event_log
    }

    pub fn visit_count(&self, state: &str) -> u64 {
        self.visits.get(state).copied().unwrap_or(0)
    }

    pub fn visited(&self) -> BTreeSet<String> {
        self.visits.keys().cloned().collect()
    }

    /// Actions of the plan still ahead of the explorer.
    pub fn remaining_actions(&self) -> &[String] {
        &self.plan.actions[self.cursor.min(self.plan.actions.len())..]
    }

    pub fn screen(&self) -> ScreenLayout {
        layout_state(
            self.graph()
                .state(&self.current)
                .expect("current state is in the graph"),
        )
    }

    /// The next planned action with overlay metadata, or `None` once the plan
    /// is exhausted.
    pub fn current_hint(&self) -> Option<Hint> {
        let action_id = self.plan.actions.get(self.cursor)?;
        let edge = self.graph().action(action_id)?;
        let screen = self.screen();
        let (bounds, label) = match edge.trigger {
            Trigger::Back if edge.component_ref == TOUCH_BACK => (screen.back_key, "back"),
            Trigger::Back => (screen.bounds_of(&edge.component_ref)?, "back"),
            Trigger::Click => (screen.bounds_of(&edge.component_ref)?, "click"),
            Trigger::LongPress => (screen.bounds_of(&edge.component_ref)?, "long press"),
        };
        Some(Hint {
            action_id: edge.action_id.clone(),
            trigger: edge.trigger,
            component_ref: edge.component_ref.clone(),
            target: edge.target.clone(),
            overlay: Overlay {
                bounds,
                label: label.to_owned(),
            },
        })
    }

    fn log(&mut self, now_ms: u64, body: EventBody) -> u64 {
        let at_ms = self
            .event_log
            .last()
            .map_or(now_ms, |e| e.at_ms.max(now_ms));
        self.event_log.push(TesterEvent { at_ms, body });
        at_ms
    }

    fn visit(&mut self, state: &str) {
        *self.visits.entry(state.to_owned()).or_insert(0) += 1;
        self.current = state.to_owned();
        self.steps += 1;
    }

    fn replan_here(&mut self) -> Result<()> {
        self.plan = self.planner.replan(&self.current, &self.visited())?;
        self.cursor = 0;
        Ok(())
    }

    /// Serves the current hint and records that it was shown.
    pub fn serve_hint(&mut self, now_ms: u64) -> Option<Hint> {
        let hint = self.current_hint();
        self.log(
            now_ms,
            EventBody::HintServed {
                action_id: hint.as_ref().map(|h| h.action_id.clone()),
            },
        );
        hint
    }

    /// Applies the explorer's move. Following the hint advances the cursor;
    /// anything else is a deviation and replans from the observed state.
    /// Returns whether the move deviated from the hint.
    pub fn report_transition(&mut self, report: &TransitionReport, now_ms: u64) -> Result<bool> {
        let edge = match &report.action_id {
            Some(id) => {
                let edge = self
                    .graph()
                    .action(id)
                    .filter(|e| e.source == self.current)
                    .ok_or_else(|| Error::InvalidAction {
                        action: id.clone(),
                        state: self.current.clone(),
                    })?;
                Some(edge.clone())
            }
            None => None,
        };
        let observed = match (&report.observed, &edge) {
            (Some(o), _) => o.clone(),
            (None, Some(e)) => e.target.clone(),
            (None, None) => {
                return Err(Error::Param(
                    "a transition needs an action id or an observed state".into(),
                ))
            }
        };
        if !self.graph().contains_state(&observed) {
            return Err(Error::UnknownState(observed));
        }

        let hinted = self.plan.actions.get(self.cursor).cloned();
        let hinted_target = hinted
            .as_deref()
            .and_then(|id| self.graph().action(id))
            .map(|e| e.target.clone());
        let followed = match (&hinted, &edge) {
            (Some(h), Some(e)) => *h == e.action_id && e.target == observed,
            (Some(_), None) => hinted_target.as_deref() == Some(observed.as_str()),
            (None, _) => false,
        };

        self.visit(&observed);
        let at = self.log(
            now_ms,
            EventBody::Transition {
                action_id: report.action_id.clone(),
                observed: observed.clone(),
            },
        );
        self.last_event_ms = at;

        if followed {
            self.cursor += 1;
            return Ok(false);
        }
        let deviated = hinted.is_some();
        if deviated {
            self.deviations += 1;
            self.log(
                now_ms,
                EventBody::Deviation {
                    expected: hinted,
                    taken: report.action_id.clone(),
                    observed,
                },
            );
        }
        self.replan_here()?;
        Ok(deviated)
    }

    /// Replans from the current state once the explorer has been idle for
    /// longer than the threshold. Returns whether it replanned.
    pub fn on_idle(&mut self, now_ms: u64) -> Result<bool> {
        if now_ms.saturating_sub(self.last_event_ms) <= self.config.idle_threshold_ms {
            return Ok(false);
        }
        self.replan_here()?;
        self.idle_replans += 1;
        let at = self.log(now_ms, EventBody::IdleTick);
        self.last_event_ms = at;
        Ok(true)
    }

    /// Adds a state the graph did not contain, reached from the current
    /// state through `via_action`, moves the explorer there and replans.
    /// `outgoing` holds actions already known to leave the new state (its
    /// back key, say); their targets must be in the graph.
    pub fn register_unknown_state(
        &mut self,
        state: StateNode,
        via_action: ActionEdge,
        outgoing: Vec<ActionEdge>,
        now_ms: u64,
    ) -> Result<()> {
        if !self.config.allow_unknown_states {
            return Err(Error::UnknownState(state.state_id));
        }
        if self.graph().contains_state(&state.state_id) {
            return Err(Error::DuplicateState(state.state_id));
        }
        validate_state(&state).into_result()?;
        if via_action.source != self.current || via_action.target != state.state_id {
            return Err(Error::InvalidAction {
                action: via_action.action_id,
                state: self.current.clone(),
            });
        }
        if let Some(e) = outgoing.iter().find(|e| e.source != state.state_id) {
            return Err(Error::InvalidAction {
                action: e.action_id.clone(),
                state: state.state_id.clone(),
            });
        }
        let manual = |e: &ActionEdge| {
            ActionEdge::new(
                &e.source,
                e.trigger,
                &e.component_ref,
                &e.target,
                Provenance::Manual,
            )
        };
        let edge = manual(&via_action);
        let outgoing: Vec<ActionEdge> = outgoing.iter().map(manual).collect();
        let mut graph = self.graph().clone();
        let mut node = state.clone();
        node.visit_count = 0;
        graph.add_state(node)?;
        graph.add_action(edge.clone());
        for e in &outgoing {
            graph.add_action(e.clone());
        }
        validate(&graph).into_result()?;
        self.planner = Planner::new(graph, self.config.planner)?;

        self.visit(&state.state_id);
        let at = self.log(
            now_ms,
            EventBody::UnknownState {
                state: Box::new(state),
                via_action: Box::new(edge),
                outgoing,
            },
        );
        self.last_event_ms = at;
        self.replan_here()
    }

    pub fn metrics(&self) -> SessionMetrics {
        let g = self.graph();
        let activities_total = g.activities().len();
        let activities_visited = g
            .states()
            .iter()
            .filter(|s| self.visits.contains_key(&s.state_id))
            .map(|s| s.activity.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let states_total = g.states().len();
        let states_visited = self.visits.len();
        SessionMetrics {
            session_id: self.session_id.clone(),
            current: self.current.clone(),
            steps: self.steps,
            states_visited,
            states_total,
            state_coverage: if states_total == 0 {
                0.0
            } else {
                states_visited as f64 / states_total as f64
            },
            activities_visited,
            activities_total,
            repeated_visits: self.visits.values().map(|v| v - 1).sum(),
            deviations: self.deviations,
            idle_replans: self.idle_replans,
            initial_plan_cost: self.initial_plan_cost,
            remaining_plan_steps: self.remaining_actions().len(),
            complete: states_visited == states_total,
        }
    }

    /// Header needed to rebuild this session from its log.
    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            version: FORMAT_VERSION.to_owned(),
            session_id: self.session_id.clone(),
            start: self.start_state.clone(),
            config: self.config,
            graph: self.initial_graph.clone(),
        }
    }

    /// Rebuilds a session by re-applying the explorer-driven events of a
    /// log. Derived events (deviations) are regenerated, not re-applied.
    pub fn replay(header: &SessionHeader, events: &[TesterEvent]) -> Result<Session> {
        let mut s = Session::start(
            &header.session_id,
            header.graph.clone(),
            &header.start,
            header.config,
        )?;
        for e in events {
            match &e.body {
                EventBody::Transition {
                    action_id,
                    observed,
                } => {
                    let report = TransitionReport {
                        action_id: action_id.clone(),
                        observed: Some(observed.clone()),
                    };
                    s.report_transition(&report, e.at_ms)?;
                }
                EventBody::IdleTick => {
                    if !s.on_idle(e.at_ms)? {
                        return Err(Error::Consistency(format!(
                            "idle tick at {} ms does not fire on replay",
                            e.at_ms
                        )));
                    }
                }
                EventBody::HintServed { .. } => {
                    s.serve_hint(e.at_ms);
                }
                EventBody::UnknownState {
                    state,
                    via_action,
                    outgoing,
                } => {
                    s.register_unknown_state(
                        (**state).clone(),
                        (**via_action).clone(),
                        outgoing.clone(),
                        e.at_ms,
                    )?;
                }
                EventBody::Deviation { .. } => {}
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub version: String,
    pub session_id: String,
    pub start: String,
    pub config: SessionConfig,
    pub graph: StgGraph,
}

/// Newline-delimited log: the header on the first line, then one event per
/// line.
pub fn write_log(header: &SessionHeader, events: &[TesterEvent]) -> String {
    let mut out = serde_json::to_string(header).expect("header serialization is infallible");
    out.push('\n');
    for e in events {
        out.push_str(&event_line(e));
    }
    out
}

pub fn event_line(e: &TesterEvent) -> String {
    let mut line = serde_json::to_string(e).expect("event serialization is infallible");
    line.push('\n');
    line
}

pub fn read_log(text: &str) -> Result<(SessionHeader, Vec<TesterEvent>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| Error::Parse {
        path: "1:1".into(),
        message: "empty session log".into(),
    })?;
    let header: SessionHeader = crate::stg::parse_document(first.as_bytes())?;
    let events = lines
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: format!("{}:{}", i + 2, e.column()),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::stg::ComponentNode;
    use crate::Execution;

    fn cfg() -> SessionConfig {
        SessionConfig {
            planner: PlannerConfig {
                exec: Execution::Sequential,
                ..PlannerConfig::default()
            },
            ..SessionConfig::default()
        }
    }

    fn line_session() -> Session {
        Session::start("s1", fixtures::line_graph(), "A", cfg()).unwrap()
    }

    #[test]
    fn start_on_line_graph() {
        let s = line_session();
        assert_eq!(s.plan().node_order, vec!["A", "B", "C"]);
        let hint = s.current_hint().unwrap();
        assert_eq!(hint.action_id, "A/click:click_B>B");
        assert_eq!(hint.target, "B");
        assert_eq!(hint.overlay.label, "click");
        assert_eq!(Some(hint.overlay.bounds), s.screen().bounds_of("click_B"));
    }

    #[test]
    fn start_plan_is_the_planner_replan() {
        for seed in 0..10 {
            let g = fixtures::random_graph(9, 0.25, seed);
            let start = g.start_state.clone();
            let s = Session::start("s", g.clone(), &start, cfg()).unwrap();
            let expected =
                crate::planner::replan(&g, &start, &BTreeSet::from([start.clone()]), cfg().planner)
                    .unwrap();
            assert_eq!(s.plan(), &expected);
        }
    }

    #[test]
    fn single_state_graph_has_no_hint() {
        let g = fixtures::build("X", &[("X", "Main")], &[]);
        let s = Session::start("s", g, "X", cfg()).unwrap();
        assert!(s.plan().is_empty());
        assert!(s.current_hint().is_none());
        assert!(s.metrics().complete);
    }

    #[test]
    fn unknown_start() {
        assert!(matches!(
            Session::start("s", fixtures::line_graph(), "Q", cfg()),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn following_hints_advances_cursor() {
        let mut s = line_session();
        let h = s.current_hint().unwrap();
        assert!(!s
            .report_transition(&TransitionReport::action(&h.action_id), 100)
            .unwrap());
        assert_eq!(s.cursor(), 1);
        assert_eq!(s.current(), "B");
        let h = s.current_hint().unwrap();
        s.report_transition(&TransitionReport::action(&h.action_id), 200)
            .unwrap();
        assert!(s.current_hint().is_none());
        let m = s.metrics();
        assert!(m.complete);
        assert_eq!(m.steps, 2);
        assert_eq!(m.initial_plan_cost, 2);
    }

    #[test]
    fn back_hint_uses_back_key() {
        let mut s = line_session();
        s.report_transition(&TransitionReport::observed("C"), 10)
            .unwrap();
        let h = s.current_hint().unwrap();
        assert_eq!(h.trigger, Trigger::Back);
        assert_eq!(h.component_ref, TOUCH_BACK);
        assert_eq!(h.overlay.label, "back");
        assert_eq!(h.overlay.bounds, BACK_KEY);
    }

    #[test]
    fn long_press_hint_label() {
        let g = fixtures::build(
            "A",
            &[("A", "Main"), ("B", "Main")],
            &[("A", "B", Trigger::LongPress), ("B", "A", Trigger::Back)],
        );
        let s = Session::start("s", g, "A", cfg()).unwrap();
        let h = s.current_hint().unwrap();
        assert_eq!(h.overlay.label, "long press");
        assert_eq!(Some(h.overlay.bounds), s.screen().bounds_of("long_press_B"));
    }

    #[test]
    fn deviation_replans_from_observed() {
        let mut s = line_session();
        // hint points to B; the explorer lands on C
        assert!(s
            .report_transition(&TransitionReport::observed("C"), 50)
            .unwrap());
        let expected = Planner::new(fixtures::line_graph(), cfg().planner)
            .unwrap()
            .replan("C", &BTreeSet::from(["A".to_owned(), "C".to_owned()]))
            .unwrap();
        assert_eq!(s.plan(), &expected);
        assert_eq!(s.plan().node_order, vec!["C", "B"]);
        assert_eq!(s.cursor(), 0);
        assert!(matches!(
            s.events().last().unwrap().body,
            EventBody::Deviation { .. }
        ));
    }

    #[test]
    fn revisit_counts() {
        let mut s = line_session();
        s.report_transition(&TransitionReport::observed("B"), 1)
            .unwrap();
        s.report_transition(&TransitionReport::observed("C"), 2)
            .unwrap();
        s.report_transition(&TransitionReport::observed("B"), 3)
            .unwrap();
        assert_eq!(s.visit_count("B"), 2);
        assert_eq!(s.metrics().repeated_visits, 1);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut s = line_session();
        let err = s.report_transition(&TransitionReport::action("B/click:click_C>C"), 1);
        assert!(matches!(err, Err(Error::InvalidAction { .. })));
        assert!(matches!(
            s.report_transition(&TransitionReport::observed("nowhere"), 1),
            Err(Error::UnknownState(_))
        ));
        assert!(s.events().is_empty());
    }

    #[test]
    fn idle_rule() {
        let mut s = line_session();
        assert!(!s.on_idle(4_000).unwrap());
        assert!(s.events().is_empty());
        let before = s.plan().clone();
        assert!(s.on_idle(6_000).unwrap());
        assert_eq!(s.plan(), &before);
        assert_eq!(s.metrics().idle_replans, 1);
        // clock restarts at the tick
        assert!(!s.on_idle(10_000).unwrap());
    }

    #[test]
    fn idle_after_stale_plan_reroots() {
        let mut s = line_session();
        s.report_transition(&TransitionReport::observed("C"), 1_000)
            .unwrap();
        // simulate a plan gone stale: force the old plan back in
        s.plan = Planner::new(fixtures::line_graph(), cfg().planner)
            .unwrap()
            .replan("A", &BTreeSet::from(["A".to_owned()]))
            .unwrap();
        assert!(s.on_idle(7_000).unwrap());
        assert_eq!(s.plan().start(), Some("C"));
    }

    fn new_page(id: &str) -> StateNode {
        StateNode::new(
            id,
            "Main",
            ComponentNode::container(
                "root",
                Some("new_root"),
                vec![ComponentNode::leaf(
                    "t",
                    crate::ComponentKind::TextView,
                    Some("t"),
                )],
            ),
        )
    }

    #[test]
    fn unknown_state_registration() {
        let mut s = line_session();
        let via = ActionEdge::new("A", Trigger::Back, TOUCH_BACK, "N", Provenance::Dynamic);
        s.register_unknown_state(new_page("N"), via, vec![], 10)
            .unwrap();
        assert_eq!(s.current(), "N");
        assert_eq!(s.graph().state("N").unwrap().visit_count, 0);
        assert_eq!(
            s.graph().incoming("N").next().unwrap().provenance,
            Provenance::Manual
        );
        // N has no way out: everything else is unreachable
        assert_eq!(s.plan().uncovered, vec!["B", "C"]);
        assert!(s.plan().is_empty());

        let dup = ActionEdge::new("N", Trigger::Back, TOUCH_BACK, "A", Provenance::Manual);
        assert!(matches!(
            s.register_unknown_state(new_page("A"), dup, vec![], 20),
            Err(Error::DuplicateState(_))
        ));
    }

    #[test]
    fn unknown_state_that_links_back() {
        let g = fixtures::build(
            "A",
            &[("A", "Main"), ("B", "Main")],
            &[("A", "B", Trigger::Click), ("B", "A", Trigger::Back)],
        );
        let mut s = Session::start("s", g, "A", cfg()).unwrap();
        let via = ActionEdge::new("A", Trigger::LongPress, "click_B", "N", Provenance::Dynamic);
        let back = ActionEdge::new("N", Trigger::Back, TOUCH_BACK, "A", Provenance::Dynamic);
        s.register_unknown_state(new_page("N"), via, vec![back], 10)
            .unwrap();
        assert_eq!(s.plan().node_order, vec!["N", "B"]);
        assert_eq!(
            s.plan().actions,
            vec!["N/back:touch_back>A", "A/click:click_B>B"]
        );
        assert_eq!(s.current_hint().unwrap().overlay.bounds, BACK_KEY);
        let stray = ActionEdge::new("A", Trigger::Back, TOUCH_BACK, "B", Provenance::Dynamic);
        let via = ActionEdge::new("N", Trigger::Click, "t", "M", Provenance::Dynamic);
        assert!(matches!(
            s.register_unknown_state(new_page("M"), via, vec![stray], 15),
            Err(Error::InvalidAction { .. })
        ));
        let mut bad = new_page("M");
        bad.root
            .children
            .push(ComponentNode::leaf("t", crate::ComponentKind::Button, None));
        let via = ActionEdge::new("N", Trigger::Click, "t", "M", Provenance::Dynamic);
        assert!(matches!(
            s.register_unknown_state(bad, via, vec![], 30),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn replay_reproduces_session() {
        let g = fixtures::random_strongly_connected(8, 6, 2);
        let start = g.start_state.clone();
        let mut s = Session::start("r", g, &start, cfg()).unwrap();
        s.serve_hint(5);
        let first = s.graph().outgoing(&start).last().unwrap().action_id.clone();
        s.report_transition(&TransitionReport::action(&first), 100)
            .unwrap();
        s.on_idle(9_000).unwrap();
        while let Some(h) = s.serve_hint(9_500) {
            s.report_transition(&TransitionReport::action(&h.action_id), 10_000)
                .unwrap();
        }
        let text = write_log(&s.header(), s.events());
        let (header, events) = read_log(&text).unwrap();
        let again = Session::replay(&header, &events).unwrap();
        assert_eq!(again.events(), s.events());
        assert_eq!(
            serde_json::to_string(&again.metrics()).unwrap(),
            serde_json::to_string(&s.metrics()).unwrap()
        );
        assert!(s.metrics().complete);
    }
}
