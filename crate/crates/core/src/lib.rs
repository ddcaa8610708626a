//! Closed-loop simulation of a short-video recommender and the users it serves.
//!
//! The loop is: a cold-start slate per user, agent feedback on every shown
//! item, feedback-weighted retraining of a matrix factorization (MF) or
//! factorization machine (FM) model, then model-driven recommendations for
//! the next iteration. Diversity metrics (coverage, entropy, in-bubble
//! proportion) and satisfaction are computed from the run log.
//!
//! Modules map onto the pieces of that loop:
//!
//! - [`catalog`]: hierarchical video catalog, JSONL IO, synthetic fixtures.
//! - [`personas`]: seeded user profiles with demographics and motivation.
//! - [`agents`]: feedback decisions from a rule-based or LLM-backed agent.
//! - [`recommender`]: MF/FM scoring, weighted BCE training, serving.
//! - [`metrics`]: per-iteration diversity metrics and demographic ECDFs.
//! - [`simulation`]: the iteration loop, run directories and sweeps.

pub mod agents;
pub mod catalog;
pub mod error;
pub mod metrics;
pub mod personas;
pub mod recommender;
pub mod simulation;

pub use error::{Error, Result};
