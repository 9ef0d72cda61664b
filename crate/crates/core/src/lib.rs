//! Constrained multiobjective optimization with a coevolutionary engine whose
//! offspring partly come from a language-model backend.

pub mod engine;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod problems;
pub mod report;
pub mod rng;
pub mod selection;
pub mod stats;
