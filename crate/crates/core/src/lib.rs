//! Guided exploration of GUI state transition graphs.
//!
//! The crate extracts an action-labelled state transition graph from a
//! synthetic app model, collapses near-duplicate states, plans a minimal-step
//! walk covering every state, and drives live guidance sessions that serve
//! the next hint move and replan on deviation or idleness. A simulator
//! compares guided explorers against baseline tester models.

pub mod app;
pub mod error;
pub mod fixtures;
pub mod guidance;
pub mod merging;
pub mod par;
pub mod planner;
pub mod sim;
pub mod stg;

pub use error::{Error, Result};
pub use par::Execution;
pub use stg::{ActionEdge, ComponentKind, ComponentNode, Provenance, StateNode, StgGraph, Trigger};
