//! Resource leak detection for Java methods driven by resource-oriented
//! intentions.
//!
//! The pipeline has three steps:
//!
//! 1. [`frontend`] parses a method and [`cfg`] builds its control-flow graph.
//! 2. An intention provider ([`gateway`]) reports which lines acquire,
//!    release, or validate the reachability of a resource.
//! 3. [`paths`] enumerates pruned entry→exit paths and [`detector`] runs the
//!    two-stage path analysis over them.
//!
//! [`eval`] replays buggy/fixed method pairs and computes inference and
//! detection metrics.

pub mod cfg;
pub mod detector;
pub mod eval;
pub mod frontend;
pub mod gateway;
pub mod intent;
pub mod paths;
