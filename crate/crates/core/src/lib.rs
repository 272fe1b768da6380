//! Retrieval-grounded thought-graph planning.
//!
//! A query seeds a graph of thoughts; Monte-Carlo Tree Search decides which
//! pair of existing thoughts or retrieved documents to combine next, guided
//! by a pluggable scoring model, until a thought scores above the stop
//! threshold or the step budget runs out.

pub mod config;
pub mod eval;
pub mod generator;
pub mod mdp;
pub mod planner;
pub mod retrieval;
pub mod scoring;
pub mod sim;
pub mod trace;
pub mod transport;
