//! Boundary-aware policy optimization for agentic search, at desk scale.
//!
//! The crate bundles:
//!
//! - [`trajectory`]: parsing, validation, and answer extraction for tagged
//!   think/search/result/answer episodes, plus JSONL log ingestion.
//! - [`reward`]: character-F1 correctness rewards and the group-conditional
//!   boundary reward that pays refusals only when the whole group failed.
//! - [`modulator`]: the two-stage adaptive gate (exploration/plateau) with the
//!   IDK-ratio floor, rollout-diversity gating, and all-failed-group resampling.
//! - [`grpo`]: group-normalized advantages and the clipped policy-gradient update
//!   for a tabular softmax policy.
//! - [`sim`]: a synthetic multi-hop retrieval environment with a ground-truth
//!   reasoning boundary, a toy search agent, and the training loop.
//! - [`metrics`]: accuracy / precision / IDK-rate / reliability reporting,
//!   rejection success rate, and pass@K.
//! - [`cli`]: the `bapo` command-line front end (`train`, `score`, `compare`).

pub mod cli;
pub mod config;
pub mod grpo;
pub mod metrics;
pub mod modulator;
pub mod reward;
pub mod sim;
pub mod trajectory;
