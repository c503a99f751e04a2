//! The toy search agent: a tabular softmax policy rolled out against the corpus.
//!
//! A decision context is (searches done so far, did the last retrieval hit). At
//! every decision point the agent may answer IDK; below the tool limit it may also
//! search. Searching follows the question's relation chain from the entity the
//! agent currently holds; a hit advances the chain, a miss leaves it in place so
//! the next search retries. Once the chain is exhausted an extra search re-issues
//! the previous query as a self-check. Rendered trajectories use the same tagged
//! grammar the parser reads, and rewards are computed from the parsed surface.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{retrieve, Question, Snippet, SyntheticCorpus};
use crate::config::{EnvParams, GrpoParams, PolicyInit};
use crate::grpo::{trajectory_log_prob, Decision, GrpoError, PolicyParams};
use crate::trajectory::{
    extract_answer, validate_format_with_limit, ExtractedAnswer, FormatVerdict, SearchAction,
    Step, Trajectory,
};

/// Action templates available to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentAction {
    /// Query the retriever for the next unresolved link (or re-check the last one).
    Search,
    /// Answer with the entity currently held.
    AnswerCurrent,
    /// Answer "I DON'T KNOW".
    AnswerIdk,
}

const FULL_ACTIONS: [AgentAction; 3] = [
    AgentAction::Search,
    AgentAction::AnswerCurrent,
    AgentAction::AnswerIdk,
];
const FINAL_ACTIONS: [AgentAction; 2] = [AgentAction::AnswerCurrent, AgentAction::AnswerIdk];

/// Tabular policy over (hop, last-retrieval-hit) contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyAgentPolicy {
    pub params: PolicyParams,
    pub tool_limit: usize,
}

impl ToyAgentPolicy {
    /// Build the initial policy from configured logits.
    pub fn new(
        init: &PolicyInit,
        grpo: &GrpoParams,
        tool_limit: usize,
    ) -> Result<Self, GrpoError> {
        let mut contexts = Vec::with_capacity((tool_limit + 1) * 2);
        for hop in 0..=tool_limit {
            for _hit in 0..2 {
                contexts.push(if hop < tool_limit {
                    vec![init.search_logit, init.answer_logit, init.idk_logit]
                } else {
                    vec![init.final_answer_logit, init.final_idk_logit]
                });
            }
        }
        Ok(ToyAgentPolicy {
            params: PolicyParams::new(contexts, grpo.learning_rate, grpo.clip_epsilon)?,
            tool_limit,
        })
    }

    /// Context id for (searches done, last retrieval hit).
    pub fn context_id(&self, hop: usize, last_hit: bool) -> usize {
        hop * 2 + usize::from(!last_hit)
    }

    /// The action templates available in a context.
    pub fn actions_at(&self, hop: usize) -> &'static [AgentAction] {
        if hop < self.tool_limit {
            &FULL_ACTIONS
        } else {
            &FINAL_ACTIONS
        }
    }
}

/// How episode decisions are made.
#[derive(Debug, Clone, Copy)]
pub enum ActionSource<'a> {
    /// Sample from the policy distribution.
    Sample(&'a ToyAgentPolicy),
    /// Follow the chain, refuse on a miss: the ground-truth-boundary reference.
    Oracle,
}

/// One sampled episode: the rendered trajectory plus what the update needs.
#[derive(Debug, Clone)]
pub struct SimulatedRollout {
    pub trajectory: Trajectory,
    pub decisions: Vec<Decision>,
    /// Log-probability under the sampling-time policy (zero for the oracle).
    pub old_log_prob: f64,
    pub answer: ExtractedAnswer,
    pub verdict: FormatVerdict,
}

struct EpisodeState<'a> {
    question: &'a Question,
    current: String,
    chain_pos: usize,
    hop: usize,
    last_hit: bool,
    last_query: Option<(String, String)>,
    steps: Vec<Step>,
}

impl EpisodeState<'_> {
    fn next_query(&self) -> (String, String) {
        if self.chain_pos < self.question.hops {
            (
                self.current.clone(),
                self.question.relation_chain[self.chain_pos].clone(),
            )
        } else {
            // Chain exhausted: re-issue the previous lookup as a self-check.
            self.last_query
                .clone()
                .expect("chain_pos > 0 implies a previous query")
        }
    }
}

/// Run one episode, choosing actions from `source`.
pub fn run_episode(
    source: ActionSource<'_>,
    corpus: &SyntheticCorpus,
    question: &Question,
    env: &EnvParams,
    rng: &mut ChaCha8Rng,
) -> SimulatedRollout {
    let mut state = EpisodeState {
        question,
        current: question.start_entity.clone(),
        chain_pos: 0,
        hop: 0,
        last_hit: true,
        last_query: None,
        steps: Vec::new(),
    };
    let mut decisions = Vec::new();
    let mut old_log_prob = 0.0;

    let (final_reasoning, answer_text) = loop {
        let action = match source {
            ActionSource::Sample(policy) => {
                let context = policy.context_id(state.hop, state.last_hit);
                let action_idx = policy
                    .params
                    .sample_action(context, rng)
                    .expect("context ids are in range by construction");
                decisions.push(Decision {
                    context,
                    action: action_idx,
                });
                policy.actions_at(state.hop)[action_idx]
            }
            ActionSource::Oracle => oracle_action(&state, env),
        };

        match action {
            AgentAction::Search => step_search(corpus, env, &mut state, rng),
            AgentAction::AnswerCurrent => {
                break (
                    "The chain ends here; answering.".to_string(),
                    state.current.clone(),
                )
            }
            AgentAction::AnswerIdk => {
                break (
                    "The evidence is missing; refusing.".to_string(),
                    "I DON'T KNOW".to_string(),
                )
            }
        }
    };

    if let ActionSource::Sample(policy) = source {
        old_log_prob = trajectory_log_prob(&policy.params, &decisions)
            .expect("recorded decisions are valid for the recording policy");
    }

    let trajectory = Trajectory::simulated(
        state.steps,
        final_reasoning,
        format!("The final answer is \\boxed{{{answer_text}}}"),
    );
    let verdict = validate_format_with_limit(&trajectory, env.tool_limit);
    let answer = extract_answer(&trajectory).expect("rendered answers always carry a box");
    SimulatedRollout {
        trajectory,
        decisions,
        old_log_prob,
        answer,
        verdict,
    }
}

fn step_search(
    corpus: &SyntheticCorpus,
    env: &EnvParams,
    state: &mut EpisodeState<'_>,
    rng: &mut ChaCha8Rng,
) {
    let chain_done = state.chain_pos == state.question.hops;
    let (subject, relation) = state.next_query();
    let results = retrieve(
        corpus,
        &subject,
        &relation,
        env.top_k,
        state.question.noise_rate,
        rng,
    );
    let retrieved = results
        .iter()
        .find(|s| s.subject == subject && s.relation == relation)
        .map(|s| s.object.clone());
    if let Some(object) = &retrieved {
        if !chain_done {
            state.current = object.clone();
            state.chain_pos += 1;
        }
    }
    // A self-check on a completed chain re-reads evidence the agent already holds,
    // so a displaced result does not un-confirm it.
    let hit = retrieved.is_some() || chain_done;
    state.steps.push(Step {
        reasoning: format!("Looking up {relation} of {subject}."),
        action: SearchAction {
            query: format!("{subject} {relation}"),
        },
        observation: render_observation(&results),
    });
    state.last_query = Some((subject, relation));
    state.last_hit = hit;
    state.hop += 1;
}

fn render_observation(results: &[Snippet]) -> String {
    results
        .iter()
        .map(Snippet::text)
        .collect::<Vec<_>>()
        .join(" | ")
}

/// The reference agent: search the next link while the chain is unresolved, answer
/// once it is complete, refuse as soon as a lookup comes back empty (or the tool
/// budget runs out mid-chain).
fn oracle_action(state: &EpisodeState<'_>, env: &EnvParams) -> AgentAction {
    if state.chain_pos == state.question.hops {
        AgentAction::AnswerCurrent
    } else if !state.last_hit || state.hop == env.tool_limit {
        AgentAction::AnswerIdk
    } else {
        AgentAction::Search
    }
}

/// Sample a rollout group for one question; rollout `i` of attempt `attempt` draws
/// from its own RNG stream, so groups are reproducible regardless of scheduling.
pub fn rollout_group(
    policy: &ToyAgentPolicy,
    corpus: &SyntheticCorpus,
    question: &Question,
    group_size: usize,
    env: &EnvParams,
    seed: u64,
    attempt: usize,
) -> Vec<SimulatedRollout> {
    (0..group_size)
        .map(|i| {
            let mut rng = super::stream_rng(
                seed,
                "rollout",
                &question.id,
                attempt as u64,
                i as u64,
            );
            run_episode(ActionSource::Sample(policy), corpus, question, env, &mut rng)
        })
        .collect()
}

/// Run the oracle once on a question.
pub fn oracle_rollout(
    corpus: &SyntheticCorpus,
    question: &Question,
    env: &EnvParams,
    rng: &mut ChaCha8Rng,
) -> SimulatedRollout {
    run_episode(ActionSource::Oracle, corpus, question, env, rng)
}
