//! The adaptive reward modulator: decides, per training step and per sample group,
//! whether the boundary reward is active, and when all-failed groups deserve
//! resampling.
//!
//! Training moves through two stages. During **exploration** the boundary reward is
//! off by default and switches on only when the batch IDK ratio falls below the
//! floor `alpha` — a thermostat that stops refusal from going extinct without
//! otherwise distracting from correctness. Once the validation score **plateaus**
//! the boundary reward applies in full, except for samples whose rollouts are still
//! highly diverse (the policy is still exploring there), and groups with no correct
//! rollout and no IDK get resampled up to `resample_budget` extra draws.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::GroupRewards;

#[derive(Debug, Error, PartialEq)]
pub enum ModulatorError {
    #[error("validation step {step} is not greater than the last recorded step {last}")]
    NonMonotonicStep { step: u64, last: u64 },
    #[error("invalid modulator parameter {field}: {message}")]
    InvalidParameter {
        field: &'static str,
        message: String,
    },
}

/// Training stage. Transitions exploration → plateau exactly once and never back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exploration,
    Plateau,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Exploration => f.write_str("exploration"),
            Stage::Plateau => f.write_str("plateau"),
        }
    }
}

/// Why the stage/sample gate landed where it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    /// Exploration stage, IDK ratio at or above the floor: boundary off.
    StageDefaultOff,
    /// Exploration stage, IDK ratio below the floor: boundary on.
    ExplorationLowIdk,
    /// Plateau stage: boundary on (before sample-level gating).
    PlateauOn,
    /// Plateau stage but the sample shows high rollout diversity: boundary off.
    HighDiversityOff,
}

/// Stage-level gate outcome. `boundary_active` is true exactly for
/// [`GateReason::ExplorationLowIdk`] and [`GateReason::PlateauOn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub boundary_active: bool,
    pub reason: GateReason,
}

impl GateDecision {
    fn from_reason(reason: GateReason) -> Self {
        let boundary_active = matches!(
            reason,
            GateReason::ExplorationLowIdk | GateReason::PlateauOn
        );
        GateDecision {
            boundary_active,
            reason,
        }
    }
}

/// Rollout-diversity classification for one sample group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diversity {
    High,
    Low,
}

/// Tunable modulator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorParams {
    /// IDK-ratio floor below which the boundary reward activates during exploration.
    pub alpha: f64,
    /// Maximum number of extra rollout draws per group per step.
    pub resample_budget: usize,
    /// Consecutive non-improving evaluations before the plateau transition.
    pub plateau_patience: usize,
    /// Absolute improvement over the running best that counts as progress.
    pub plateau_delta: f64,
}

impl Default for ModulatorParams {
    fn default() -> Self {
        ModulatorParams {
            alpha: 0.05,
            resample_budget: 2,
            plateau_patience: 5,
            plateau_delta: 0.005,
        }
    }
}

const IDK_WINDOW_LEN: usize = 32;

/// Training-stage state machine plus the trackers feeding it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulatorState {
    params: ModulatorParams,
    stage: Stage,
    /// Recent per-batch IDK ratios, newest last.
    idk_ratio_window: VecDeque<f64>,
    /// (step, validation score) pairs in recording order.
    validation_history: Vec<(u64, f64)>,
    best_score: Option<f64>,
    stall_count: usize,
    transition_step: Option<u64>,
}

impl ModulatorState {
    pub fn new(params: ModulatorParams) -> Result<Self, ModulatorError> {
        if !(0.0..=1.0).contains(&params.alpha) {
            return Err(ModulatorError::InvalidParameter {
                field: "alpha",
                message: format!("must be in [0, 1], got {}", params.alpha),
            });
        }
        if params.plateau_patience == 0 {
            return Err(ModulatorError::InvalidParameter {
                field: "plateau_patience",
                message: "must be at least 1".into(),
            });
        }
        if !params.plateau_delta.is_finite() || params.plateau_delta < 0.0 {
            return Err(ModulatorError::InvalidParameter {
                field: "plateau_delta",
                message: format!("must be a non-negative real, got {}", params.plateau_delta),
            });
        }
        Ok(ModulatorState {
            params,
            stage: Stage::Exploration,
            idk_ratio_window: VecDeque::with_capacity(IDK_WINDOW_LEN),
            validation_history: Vec::new(),
            best_score: None,
            stall_count: 0,
            transition_step: None,
        })
    }

    pub fn params(&self) -> &ModulatorParams {
        &self.params
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Step at which the plateau transition happened, if it has.
    pub fn transition_step(&self) -> Option<u64> {
        self.transition_step
    }

    pub fn validation_history(&self) -> &[(u64, f64)] {
        &self.validation_history
    }

    /// Record a validation score. Moves to the plateau stage once the last
    /// `plateau_patience` consecutive evaluations have each improved the running
    /// best by less than `plateau_delta`. Irreversible.
    pub fn record_validation(&mut self, step: u64, score: f64) -> Result<(), ModulatorError> {
        if let Some(&(last, _)) = self.validation_history.last() {
            if step <= last {
                return Err(ModulatorError::NonMonotonicStep { step, last });
            }
        }
        self.validation_history.push((step, score));

        let improved = match self.best_score {
            None => true,
            Some(best) => score >= best + self.params.plateau_delta,
        };
        if improved {
            self.stall_count = 0;
        } else {
            self.stall_count += 1;
        }
        self.best_score = Some(self.best_score.map_or(score, |best| best.max(score)));

        if self.stage == Stage::Exploration && self.stall_count >= self.params.plateau_patience {
            self.stage = Stage::Plateau;
            self.transition_step = Some(step);
        }
        Ok(())
    }

    /// Track a per-batch IDK ratio for logging and inspection.
    pub fn note_batch_idk_ratio(&mut self, ratio: f64) {
        if self.idk_ratio_window.len() == IDK_WINDOW_LEN {
            self.idk_ratio_window.pop_front();
        }
        self.idk_ratio_window.push_back(ratio);
    }

    pub fn idk_ratio_window(&self) -> impl Iterator<Item = f64> + '_ {
        self.idk_ratio_window.iter().copied()
    }

    /// Stage-level gate: in exploration the boundary reward activates only when the
    /// batch IDK ratio drops below `alpha`; in plateau it is on (sample-level gating
    /// may still switch it off per group).
    pub fn stage_gate(&self, batch_idk_ratio: f64) -> GateDecision {
        match self.stage {
            Stage::Exploration if batch_idk_ratio < self.params.alpha => {
                GateDecision::from_reason(GateReason::ExplorationLowIdk)
            }
            Stage::Exploration => GateDecision::from_reason(GateReason::StageDefaultOff),
            Stage::Plateau => GateDecision::from_reason(GateReason::PlateauOn),
        }
    }

    /// Whether an all-failed group deserves another draw of rollouts: plateau stage,
    /// no positive-correctness rollout, no IDK rollout, budget not yet spent.
    pub fn should_resample(&self, group: &GroupRewards, attempts_so_far: usize) -> bool {
        self.stage == Stage::Plateau
            && !group.any_positive_correctness()
            && !group.any_idk()
            && attempts_so_far < self.params.resample_budget
    }
}

/// Classify the rollout diversity of a sample: high when the number of distinct
/// normalized answers reaches half the group size (IDK counts as one value).
pub fn diversity_gate(answers: &[String], group_size: usize) -> Diversity {
    debug_assert_eq!(answers.len(), group_size);
    let mut distinct: Vec<&str> = answers.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if 2 * distinct.len() >= group_size {
        Diversity::High
    } else {
        Diversity::Low
    }
}

/// Compose the stage decision with the sample-level diversity gate and produce the
/// effective rewards for one group. When the result is "off", boundary components
/// are zeroed and totals recomputed; correctness components are never touched.
pub fn apply(
    stage_decision: &GateDecision,
    diversity: Diversity,
    group: &GroupRewards,
) -> (GroupRewards, GateDecision) {
    let effective = match (stage_decision.reason, diversity) {
        (GateReason::PlateauOn, Diversity::High) => {
            GateDecision::from_reason(GateReason::HighDiversityOff)
        }
        _ => *stage_decision,
    };
    let rewards = if effective.boundary_active {
        group.clone()
    } else {
        group.without_boundary()
    };
    (rewards, effective)
}
