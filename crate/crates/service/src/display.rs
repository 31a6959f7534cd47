//! Graph view document for the explorer's map panel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use stgnav::stg::FORMAT_VERSION;
use stgnav::{Provenance, StgGraph, Trigger};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayNode {
    pub id: String,
    pub activity: String,
    pub visit_count: u64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayEdge {
    pub action_id: String,
    pub source: String,
    pub target: String,
    pub trigger: Trigger,
    pub component_ref: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayActivity {
    pub name: String,
    pub states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayDocument {
    pub version: String,
    pub start_state: String,
    pub nodes: Vec<DisplayNode>,
    pub edges: Vec<DisplayEdge>,
    pub activities: Vec<DisplayActivity>,
}

pub fn display_document(g: &StgGraph) -> DisplayDocument {
    let mut by_activity: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in g.states() {
        by_activity
            .entry(&s.activity)
            .or_default()
            .push(s.state_id.clone());
    }
    DisplayDocument {
        version: FORMAT_VERSION.to_owned(),
        start_state: g.start_state.clone(),
        nodes: g
            .states()
            .iter()
            .map(|s| DisplayNode {
                id: s.state_id.clone(),
                activity: s.activity.clone(),
                visit_count: s.visit_count,
                components: s.root.walk().len(),
            })
            .collect(),
        edges: g
            .actions()
            .iter()
            .map(|e| DisplayEdge {
                action_id: e.action_id.clone(),
                source: e.source.clone(),
                target: e.target.clone(),
                trigger: e.trigger,
                component_ref: e.component_ref.clone(),
                provenance: e.provenance,
            })
            .collect(),
        activities: by_activity
            .into_iter()
            .map(|(name, states)| DisplayActivity {
                name: name.to_owned(),
                states,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stgnav::fixtures;

    #[test]
    fn star_graph_document() {
        let d = display_document(&fixtures::star_graph());
        assert_eq!(d.nodes.len(), 4);
        assert_eq!(d.edges.len(), 6);
        assert_eq!(d.start_state, "H");
        let states: usize = d.activities.iter().map(|a| a.states.len()).sum();
        assert_eq!(states, 4);
        assert!(d.edges.iter().any(|e| e.component_ref == "touch_back"));
    }
}
