//! Synthetic multi-hop retrieval environment with a measurable reasoning boundary.
//!
//! The corpus is a set of (subject, relation, object) triples arranged as private
//! chains, one per question. A question is answerable exactly when every link of
//! its chain exists in the corpus; unanswerable questions have a knocked-out link,
//! so ground truth about "should the agent refuse" is available by construction.
//! A toy softmax agent searches the corpus through a noisy top-k retriever and
//! either answers with the entity it has reached or declares IDK.

mod corpus;
mod rollout;
mod train;

pub use corpus::{
    generate_corpus, retrieve, Fact, Question, QuestionSets, Snippet, SyntheticCorpus,
    VAL_QUESTIONS,
};
pub use rollout::{oracle_rollout, rollout_group, run_episode, ActionSource, AgentAction,
    SimulatedRollout, ToyAgentPolicy};
pub use train::{
    evaluate_policy, train, AttemptRecord, EvalOutcome, GateCounts, QuestionEval, StepRecord,
    TrainError, TrainOutput,
};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("corpus needs {needed} entities but only {available} are configured")]
    InsufficientEntities { needed: usize, available: usize },
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a; stable across platforms and toolchain versions.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in s.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Counter-based RNG stream: the same (seed, tag, id, indices) always yields the
/// same stream, independent of scheduling, so rollouts can run in parallel without
/// losing determinism.
pub fn stream_rng(seed: u64, tag: &str, id: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    state = splitmix64(state ^ hash_str(tag));
    state = splitmix64(state ^ hash_str(id));
    state = splitmix64(state ^ a);
    state = splitmix64(state ^ b);
    ChaCha8Rng::seed_from_u64(state)
}
