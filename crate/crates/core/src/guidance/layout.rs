//! Deterministic screen layout for component trees.
//!
//! Components are stacked top to bottom in pre-order, one row each, indented
//! by depth; a container's box spans its whole subtree. Rows shrink so the
//! tree always fits between the status bar and the navigation bar.

use serde::{Deserialize, Serialize};

use crate::stg::{ComponentKind, ComponentNode, StateNode};

pub const SCREEN_WIDTH: u32 = 360;
pub const SCREEN_HEIGHT: u32 = 640;
pub const STATUS_BAR_HEIGHT: u32 = 24;
pub const NAV_BAR_HEIGHT: u32 = 56;
const ROW_HEIGHT: u32 = 48;
const INDENT: u32 = 12;
const MAX_INDENT_DEPTH: u32 = 8;

/// Region of the system back key in the navigation bar.
pub const BACK_KEY: Rect = Rect {
    x: 0,
    y: SCREEN_HEIGHT - NAV_BAR_HEIGHT,
    width: SCREEN_WIDTH / 3,
    height: NAV_BAR_HEIGHT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.width <= self.x + self.width
            && other.y + other.height <= self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaidOutComponent {
    pub local_id: String,
    pub kind: ComponentKind,
    pub resource_id: Option<String>,
    pub content: Option<String>,
    pub depth: u32,
    pub bounds: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenLayout {
    pub state_id: String,
    pub activity: String,
    pub width: u32,
    pub height: u32,
    pub components: Vec<LaidOutComponent>,
    pub back_key: Rect,
}

impl ScreenLayout {
    pub fn bounds_of(&self, local_id: &str) -> Option<Rect> {
        self.components
            .iter()
            .find(|c| c.local_id == local_id)
            .map(|c| c.bounds)
    }
}

fn subtree_size(node: &ComponentNode) -> u32 {
    1 + node.children.iter().map(subtree_size).sum::<u32>()
}

pub fn layout_state(state: &StateNode) -> ScreenLayout {
    let nodes = state.root.walk();
    let content_height = SCREEN_HEIGHT - STATUS_BAR_HEIGHT - NAV_BAR_HEIGHT;
    let row = (content_height / nodes.len().max(1) as u32).clamp(1, ROW_HEIGHT);
    let components = nodes
        .iter()
        .enumerate()
        .map(|(i, &(depth, node))| {
            let x = INDENT * (depth as u32).min(MAX_INDENT_DEPTH);
            LaidOutComponent {
                local_id: node.local_id.clone(),
                kind: node.kind,
                resource_id: node.resource_id.clone(),
                content: node.content.clone(),
                depth: depth as u32,
                bounds: Rect {
                    x,
                    y: STATUS_BAR_HEIGHT + row * i as u32,
                    width: SCREEN_WIDTH - 2 * x,
                    height: row * subtree_size(node),
                },
            }
        })
        .collect();
    ScreenLayout {
        state_id: state.state_id.clone(),
        activity: state.activity.clone(),
        width: SCREEN_WIDTH,
        height: SCREEN_HEIGHT,
        components,
        back_key: BACK_KEY,
    }
}
