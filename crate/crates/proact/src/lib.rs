//! Trace-driven proactive assistant pipeline.
//!
//! The library replays multi-modal sensor traces through a tiered
//! perception scheduler, extracts hierarchical text contexts, retrieves
//! scenario-relevant personas, invokes a pluggable reasoner backend, and
//! gates delivered assistance with a temporal constraint. An evaluation
//! harness computes the full metric suite against annotated ground truth
//! and a set of baseline samplers.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `proact` binary for the end-to-end CLI.

pub mod config;
pub mod context;
pub mod delivery;
pub mod embed;
pub mod eval;
pub mod gen;
pub mod persona;
pub mod pipeline;
pub mod reasoner;
pub mod scheduler;
pub mod tools;
pub mod trace;
