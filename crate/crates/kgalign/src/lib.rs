//! Entity alignment for heterogeneous knowledge graphs.
//!
//! The model initializes alignment-target entities by two-stage masked
//! attribute aggregation, refines all nodes with a two-layer relation-aware
//! GNN under partitioned attention, and scores cross-KG entity pairs with a
//! small MLP over the embedding discrepancy. A synthetic paired-KG generator
//! and a training/evaluation harness make every mechanism testable end to
//! end at desk scale.

pub mod aggregation;
pub mod commands;
pub mod error;
pub mod eval;
pub mod features;
pub mod forward;
pub mod gnn;
pub mod kg;
pub mod synthetic;
pub mod tape;
pub mod training;

pub use error::{KgError, Result};
