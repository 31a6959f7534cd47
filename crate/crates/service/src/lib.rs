//! HTTP guidance service and command line front end over the `stgnav` core.

pub mod api;
pub mod cli;
pub mod display;
pub mod store;
