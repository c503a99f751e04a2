//! The training loop: rollouts → rewards → modulator → policy update, with
//! periodic validation and a final best-of-N test evaluation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::corpus::{generate_corpus, Question, SyntheticCorpus};
use super::rollout::{rollout_group, run_episode, ActionSource, SimulatedRollout, ToyAgentPolicy};
use super::{stream_rng, SimError};
use crate::config::{RunConfig, RunMode};
use crate::grpo::{
    group_advantages, policy_update, GrpoError, GrpoOptions, RolloutDatum,
};
use crate::metrics::{
    classify, pass_at_k, report, MetricsError, ReliabilityReport, Verdict,
};
use crate::modulator::{
    apply, diversity_gate, GateReason, ModulatorError, ModulatorState, Stage,
};
use crate::reward::{BoundaryMode, GroupRewards, RewardError};
use crate::trajectory::normalize_answer;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Modulator(#[from] ModulatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Per-step gate-decision counts across the batch's sample groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub stage_default_off: usize,
    pub exploration_low_idk: usize,
    pub plateau_on: usize,
    pub high_diversity_off: usize,
}

impl GateCounts {
    fn note(&mut self, reason: GateReason) {
        match reason {
            GateReason::StageDefaultOff => self.stage_default_off += 1,
            GateReason::ExplorationLowIdk => self.exploration_low_idk += 1,
            GateReason::PlateauOn => self.plateau_on += 1,
            GateReason::HighDiversityOff => self.high_diversity_off += 1,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub stage: Stage,
    pub batch_idk_ratio: f64,
    pub mean_r_correct: f64,
    /// Mean effective boundary reward (after gating).
    pub mean_r_idk: f64,
    pub mean_total: f64,
    pub objective: f64,
    #[serde(flatten)]
    pub gate_counts: GateCounts,
    /// Extra rollout draws taken for all-failed groups this step.
    pub resamples: usize,
    /// Latest validation accuracy (step-0 baseline carried forward).
    pub val_acc: f64,
}

/// One evaluated attempt on a test question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub answer: String,
    pub is_idk: bool,
    pub verdict: Verdict,
}

/// Best-of-N evaluation record for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEval {
    pub id: String,
    pub answerable: bool,
    pub gold: String,
    pub attempts: Vec<AttemptRecord>,
}

/// Final-policy evaluation: per-question attempts, the pooled report, and the
/// pass@K curve over attempt counts.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub questions: Vec<QuestionEval>,
    pub report: ReliabilityReport,
    pub pass_at_k: Vec<(usize, f64)>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub steps: Vec<StepRecord>,
    pub policy: ToyAgentPolicy,
    pub validation_history: Vec<(u64, f64)>,
    /// Step of the exploration → plateau transition, if it happened.
    pub plateau_transition: Option<u64>,
    pub eval: EvalOutcome,
}

fn boundary_mode(mode: RunMode) -> BoundaryMode {
    match mode {
        RunMode::Bapo => BoundaryMode::GroupConditional,
        RunMode::GrpoOnly | RunMode::ReliablePromptEval => BoundaryMode::Disabled,
        RunMode::StaticIdk => BoundaryMode::Unconditional,
    }
}

struct PreparedGroup {
    rollouts: Vec<SimulatedRollout>,
    rewards: GroupRewards,
    resamples: usize,
}

/// Roll out one question's group, resampling all-failed groups when the modulator
/// allows it, and score it under the mode's boundary rule.
fn prepare_group(
    policy: &ToyAgentPolicy,
    corpus: &SyntheticCorpus,
    question: &Question,
    config: &RunConfig,
    modulator: &ModulatorState,
    step: u64,
) -> Result<PreparedGroup, TrainError> {
    let mode = boundary_mode(config.run.mode);
    let gold = normalize_answer(&question.gold);
    let seed = config.run.seed ^ step;
    let mut rollouts = rollout_group(
        policy,
        corpus,
        question,
        config.grpo.group_size,
        &config.env,
        seed,
        0,
    );
    let score = |rollouts: &[SimulatedRollout]| -> Result<GroupRewards, RewardError> {
        GroupRewards::compute(
            question.id.clone(),
            gold.clone(),
            rollouts
                .iter()
                .map(|r| (r.answer.clone(), r.verdict.clone()))
                .collect(),
            mode,
        )
    };
    let mut rewards = score(&rollouts)?;
    let mut resamples = 0;
    if config.run.mode == RunMode::Bapo {
        while modulator.should_resample(&rewards, resamples) {
            resamples += 1;
            rollouts.extend(rollout_group(
                policy,
                corpus,
                question,
                config.grpo.group_size,
                &config.env,
                seed,
                resamples,
            ));
            rewards = score(&rollouts)?;
        }
    }
    Ok(PreparedGroup {
        rollouts,
        rewards,
        resamples,
    })
}

fn thread_count() -> usize {
    if let Ok(value) = std::env::var("BAPO_SIM_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get().min(8))
        .unwrap_or(1)
}

/// Prepare a batch of groups, fanning out over threads when configured. Results
/// come back in question order, so parallelism does not disturb determinism.
fn prepare_batch(
    policy: &ToyAgentPolicy,
    corpus: &SyntheticCorpus,
    questions: &[&Question],
    config: &RunConfig,
    modulator: &ModulatorState,
    step: u64,
) -> Result<Vec<PreparedGroup>, TrainError> {
    let threads = thread_count().min(questions.len().max(1));
    if threads <= 1 {
        return questions
            .iter()
            .map(|q| prepare_group(policy, corpus, q, config, modulator, step))
            .collect();
    }
    let chunk_size = questions.len().div_ceil(threads);
    let chunks: Vec<&[&Question]> = questions.chunks(chunk_size).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|q| prepare_group(policy, corpus, q, config, modulator, step))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut groups = Vec::with_capacity(questions.len());
        for handle in handles {
            groups.extend(handle.join().expect("rollout thread panicked")?);
        }
        Ok(groups)
    })
}

/// Evaluate a policy on a question set: `attempts` sampled episodes per question,
/// each from a stream keyed by (seed, tag, question, attempt) so repeated
/// evaluations under an unchanged policy see identical noise.
pub fn evaluate_policy(
    policy: &ToyAgentPolicy,
    corpus: &SyntheticCorpus,
    questions: &[Question],
    config: &RunConfig,
    tag: &str,
    attempts: usize,
) -> Vec<QuestionEval> {
    questions
        .iter()
        .map(|question| {
            let gold = vec![normalize_answer(&question.gold)];
            let attempts = (0..attempts)
                .map(|attempt| {
                    let mut rng =
                        stream_rng(config.run.seed, tag, &question.id, attempt as u64, 0);
                    let rollout = run_episode(
                        ActionSource::Sample(policy),
                        corpus,
                        question,
                        &config.env,
                        &mut rng,
                    );
                    AttemptRecord {
                        verdict: classify(&rollout.answer, &gold),
                        answer: rollout.answer.text,
                        is_idk: rollout.answer.is_idk,
                    }
                })
                .collect();
            QuestionEval {
                id: question.id.clone(),
                answerable: question.answerable,
                gold: question.gold.clone(),
                attempts,
            }
        })
        .collect()
}

fn validation_accuracy(
    policy: &ToyAgentPolicy,
    corpus: &SyntheticCorpus,
    questions: &[Question],
    config: &RunConfig,
) -> f64 {
    let evals = evaluate_policy(policy, corpus, questions, config, "val", 1);
    let correct = evals
        .iter()
        .filter(|e| e.attempts[0].verdict == Verdict::Correct)
        .count();
    correct as f64 / evals.len().max(1) as f64
}

fn eval_outcome(evals: Vec<QuestionEval>, attempts: usize) -> Result<EvalOutcome, TrainError> {
    let pooled: Vec<Verdict> = evals
        .iter()
        .flat_map(|e| e.attempts.iter().map(|a| a.verdict))
        .collect();
    let attempt_table: Vec<Vec<Verdict>> = evals
        .iter()
        .map(|e| e.attempts.iter().map(|a| a.verdict).collect())
        .collect();
    let pass_curve = (1..=attempts)
        .map(|k| pass_at_k(&attempt_table, k).map(|rate| (k, rate)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalOutcome {
        report: report(&pooled)?,
        questions: evals,
        pass_at_k: pass_curve,
    })
}

/// Run a full training (or evaluation-only) session per the config.
pub fn train(config: &RunConfig) -> Result<TrainOutput, TrainError> {
    let (corpus, questions) = generate_corpus(&config.env, config.run.seed)?;
    let mut policy = ToyAgentPolicy::new(&config.policy, &config.grpo, config.env.tool_limit)?;
    let mut modulator = ModulatorState::new(config.modulator.params())?;
    let grpo_options = GrpoOptions {
        kl_coefficient: config
            .grpo
            .kl_penalty_enabled
            .then_some(config.grpo.kl_coefficient),
    };

    let mut steps = Vec::new();
    let mut val_acc = validation_accuracy(&policy, &corpus, &questions.val, config);
    modulator.record_validation(0, val_acc)?;

    if config.run.mode != RunMode::ReliablePromptEval {
        let steps_per_epoch = questions.train.len().div_ceil(config.run.batch_size);
        let total_steps = (config.run.epochs * steps_per_epoch) as u64;
        let mut step: u64 = 0;

        'epochs: for epoch in 0..config.run.epochs {
            let mut order: Vec<usize> = (0..questions.train.len()).collect();
            let mut shuffle_rng =
                stream_rng(config.run.seed, "shuffle", "train", epoch as u64, 0);
            order.shuffle(&mut shuffle_rng);

            for batch_indices in order.chunks(config.run.batch_size) {
                step += 1;
                if step > total_steps {
                    break 'epochs;
                }
                let batch: Vec<&Question> =
                    batch_indices.iter().map(|&i| &questions.train[i]).collect();
                let prepared =
                    prepare_batch(&policy, &corpus, &batch, config, &modulator, step)?;

                let total_rollouts: usize = prepared.iter().map(|g| g.rollouts.len()).sum();
                let idk_rollouts: usize = prepared
                    .iter()
                    .map(|g| g.rollouts.iter().filter(|r| r.answer.is_idk).count())
                    .sum();
                let batch_idk_ratio = idk_rollouts as f64 / total_rollouts.max(1) as f64;
                modulator.note_batch_idk_ratio(batch_idk_ratio);

                let stage_decision = modulator.stage_gate(batch_idk_ratio);
                let mut gate_counts = GateCounts::default();
                let mut resamples = 0;
                let mut groups_for_update = Vec::with_capacity(prepared.len());
                let mut correct_sum = 0.0;
                let mut boundary_sum = 0.0;
                let mut total_sum = 0.0;

                for group in &prepared {
                    resamples += group.resamples;
                    let effective = if config.run.mode == RunMode::Bapo {
                        let answers: Vec<String> = group
                            .rollouts
                            .iter()
                            .map(|r| {
                                if r.answer.is_idk {
                                    "i dont know".to_string()
                                } else {
                                    r.answer.text.clone()
                                }
                            })
                            .collect();
                        let diversity = diversity_gate(&answers, answers.len());
                        let (effective, decision) =
                            apply(&stage_decision, diversity, &group.rewards);
                        gate_counts.note(decision.reason);
                        effective
                    } else {
                        group.rewards.clone()
                    };

                    let totals = effective.totals();
                    for rollout in &effective.rollouts {
                        correct_sum += rollout.reward.correctness;
                        boundary_sum += rollout.reward.boundary;
                        total_sum += rollout.reward.total;
                    }
                    let advantages = group_advantages(&totals)?;
                    let data: Vec<RolloutDatum> = group
                        .rollouts
                        .iter()
                        .zip(&advantages.per_rollout)
                        .map(|(rollout, &advantage)| RolloutDatum {
                            decisions: rollout.decisions.clone(),
                            old_log_prob: rollout.old_log_prob,
                            advantage,
                        })
                        .collect();
                    groups_for_update.push(data);
                }

                let objective = policy_update(&mut policy.params, &groups_for_update, &grpo_options)?;

                if step.is_multiple_of(config.modulator.eval_every as u64) {
                    val_acc = validation_accuracy(&policy, &corpus, &questions.val, config);
                    modulator.record_validation(step, val_acc)?;
                }

                let denominator = total_rollouts.max(1) as f64;
                steps.push(StepRecord {
                    step,
                    stage: modulator.stage(),
                    batch_idk_ratio,
                    mean_r_correct: correct_sum / denominator,
                    mean_r_idk: boundary_sum / denominator,
                    mean_total: total_sum / denominator,
                    objective,
                    gate_counts,
                    resamples,
                    val_acc,
                });
            }
        }
    }

    let evals = evaluate_policy(
        &policy,
        &corpus,
        &questions.test,
        config,
        "test",
        config.run.eval_attempts,
    );
    let eval = eval_outcome(evals, config.run.eval_attempts)?;

    Ok(TrainOutput {
        steps,
        policy,
        validation_history: modulator.validation_history().to_vec(),
        plateau_transition: modulator.transition_step(),
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EnvParams, RunParams};

    fn tiny_config(mode: RunMode, seed: u64) -> RunConfig {
        RunConfig {
            env: EnvParams {
                n_entities: 3_000,
                train_questions: 192,
                test_questions: 60,
                ..EnvParams::default()
            },
            run: RunParams {
                mode,
                seed,
                batch_size: 32,
                epochs: 1,
                eval_attempts: 3,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn train_is_deterministic() {
        let config = tiny_config(RunMode::Bapo, 5);
        let a = train(&config).unwrap();
        let b = train(&config).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.policy.params, b.policy.params);
        assert_eq!(a.eval.questions, b.eval.questions);
    }

    #[test]
    fn reliable_prompt_eval_skips_training() {
        let config = tiny_config(RunMode::ReliablePromptEval, 5);
        let out = train(&config).unwrap();
        assert!(out.steps.is_empty());
        let initial =
            ToyAgentPolicy::new(&config.policy, &config.grpo, config.env.tool_limit).unwrap();
        assert_eq!(out.policy.params, initial.params);
        assert!(out.eval.report.idk_rate > 0.0);
    }

    #[test]
    fn grpo_only_never_pays_boundary() {
        let config = tiny_config(RunMode::GrpoOnly, 7);
        let out = train(&config).unwrap();
        assert!(out.steps.iter().all(|s| s.mean_r_idk == 0.0));
    }

    #[test]
    fn step_records_cover_all_batches() {
        let config = tiny_config(RunMode::Bapo, 9);
        let out = train(&config).unwrap();
        assert_eq!(out.steps.len(), 6); // 192 questions / batch 32 × 1 epoch
        assert_eq!(out.steps.last().unwrap().step, 6);
        let k_curve = &out.eval.pass_at_k;
        assert_eq!(k_curve.len(), 3);
        for window in k_curve.windows(2) {
            assert!(window[0].1 <= window[1].1);
        }
    }
}
