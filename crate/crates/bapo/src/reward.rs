//! Per-rollout correctness rewards and group-conditional boundary rewards.
//!
//! A rollout's correctness reward is the character-level F1 of its answer against
//! the gold answer, with −1 for format violations and 0 for IDK answers. The
//! boundary reward grants +0.5 to a format-valid IDK rollout, but only inside a
//! group where every correctness reward is non-positive — that is, when the whole
//! group failed and admitting ignorance was the right call. Totals are the sum of
//! the two components.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{ExtractedAnswer, FormatVerdict};

/// Reward granted to a qualifying IDK rollout.
pub const BOUNDARY_REWARD: f64 = 0.5;

/// Reward for a format-invalid rollout.
pub const FORMAT_PENALTY: f64 = -1.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("reward groups need at least two rollouts, got {0}")]
    GroupTooSmall(usize),
}

/// How boundary rewards are assigned within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// No boundary reward at all (correctness-only training).
    Disabled,
    /// +0.5 for format-valid IDK rollouts only when every correctness reward in the
    /// group is non-positive.
    GroupConditional,
    /// +0.5 for every format-valid IDK rollout, unconditionally. This is the static
    /// reward that invites premature refusal; it exists as an ablation arm.
    Unconditional,
}

/// Reward components for one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub correctness: f64,
    pub boundary: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn new(correctness: f64, boundary: f64) -> Self {
        RewardBreakdown {
            correctness,
            boundary,
            total: correctness + boundary,
        }
    }
}

/// What the boundary rule needs to know about one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSignal {
    pub correctness: f64,
    pub is_idk: bool,
    pub format_valid: bool,
}

/// One scored rollout within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRollout {
    pub answer: ExtractedAnswer,
    pub verdict: FormatVerdict,
    pub reward: RewardBreakdown,
}

/// Rewards for a full rollout group on one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRewards {
    pub question_id: String,
    /// Normalized gold answer.
    pub gold: String,
    pub rollouts: Vec<ScoredRollout>,
}

/// Character-level F1 over character multisets of two normalized strings.
///
/// Overlap is the size of the multiset intersection; precision and recall divide it
/// by the character counts of the prediction and the gold. Zero when either string
/// is empty or nothing overlaps.
pub fn char_f1(pred: &str, gold: &str) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut gold_counts = std::collections::HashMap::new();
    for ch in gold.chars() {
        *gold_counts.entry(ch).or_insert(0usize) += 1;
    }
    let mut overlap = 0usize;
    let mut pred_len = 0usize;
    for ch in pred.chars() {
        pred_len += 1;
        if let Some(count) = gold_counts.get_mut(&ch) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let gold_len = gold.chars().count();
    let precision = overlap as f64 / pred_len as f64;
    let recall = overlap as f64 / gold_len as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Correctness reward for one rollout: −1 on format violations, 0 for IDK answers,
/// character F1 against the gold otherwise.
///
/// Pinning IDK to 0 keeps the boundary rule coherent: the sentinel string would
/// otherwise collect spurious character overlap against arbitrary golds.
pub fn correctness_reward(answer: &ExtractedAnswer, verdict: &FormatVerdict, gold: &str) -> f64 {
    if !verdict.valid {
        return FORMAT_PENALTY;
    }
    if answer.is_idk {
        return 0.0;
    }
    char_f1(&answer.text, gold)
}

/// Group-conditional boundary rewards: when every correctness reward is ≤ 0, each
/// format-valid IDK rollout earns +0.5; everything else earns 0. If any rollout has
/// positive correctness the whole group earns 0.
pub fn boundary_rewards(signals: &[RolloutSignal]) -> Vec<f64> {
    let all_failed = signals.iter().all(|s| s.correctness <= 0.0);
    signals
        .iter()
        .map(|s| {
            if all_failed && s.is_idk && s.format_valid {
                BOUNDARY_REWARD
            } else {
                0.0
            }
        })
        .collect()
}

/// Static boundary rewards: +0.5 for every format-valid IDK rollout regardless of
/// what the rest of the group did.
pub fn unconditional_boundary_rewards(signals: &[RolloutSignal]) -> Vec<f64> {
    signals
        .iter()
        .map(|s| {
            if s.is_idk && s.format_valid {
                BOUNDARY_REWARD
            } else {
                0.0
            }
        })
        .collect()
}

impl GroupRewards {
    /// Score a group of rollout outcomes against a normalized gold answer.
    pub fn compute(
        question_id: impl Into<String>,
        gold: impl Into<String>,
        outcomes: Vec<(ExtractedAnswer, FormatVerdict)>,
        mode: BoundaryMode,
    ) -> Result<GroupRewards, RewardError> {
        if outcomes.len() < 2 {
            return Err(RewardError::GroupTooSmall(outcomes.len()));
        }
        let gold = gold.into();
        let signals: Vec<RolloutSignal> = outcomes
            .iter()
            .map(|(answer, verdict)| RolloutSignal {
                correctness: correctness_reward(answer, verdict, &gold),
                is_idk: answer.is_idk,
                format_valid: verdict.valid,
            })
            .collect();
        let boundaries = match mode {
            BoundaryMode::Disabled => vec![0.0; signals.len()],
            BoundaryMode::GroupConditional => boundary_rewards(&signals),
            BoundaryMode::Unconditional => unconditional_boundary_rewards(&signals),
        };
        let rollouts = outcomes
            .into_iter()
            .zip(signals.iter().zip(boundaries))
            .map(|((answer, verdict), (signal, boundary))| ScoredRollout {
                answer,
                verdict,
                reward: RewardBreakdown::new(signal.correctness, boundary),
            })
            .collect();
        Ok(GroupRewards {
            question_id: question_id.into(),
            gold,
            rollouts,
        })
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward.total).collect()
    }

    pub fn any_positive_correctness(&self) -> bool {
        self.rollouts.iter().any(|r| r.reward.correctness > 0.0)
    }

    pub fn any_idk(&self) -> bool {
        self.rollouts.iter().any(|r| r.answer.is_idk)
    }

    /// A copy with boundary components zeroed and totals recomputed.
    pub fn without_boundary(&self) -> GroupRewards {
        let mut copy = self.clone();
        for rollout in &mut copy.rollouts {
            rollout.reward = RewardBreakdown::new(rollout.reward.correctness, 0.0);
        }
        copy
    }
}
