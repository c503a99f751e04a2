//! Run configuration: a JSON document with `env`, `policy`, `grpo`, `modulator`,
//! and `run` sections. Every field has a default, so `{}` is a valid config.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modulator::ModulatorParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field {field}: {message}")]
    InvalidField { field: &'static str, message: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Which reward components and gates a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Boundary-aware reward under the adaptive modulator.
    Bapo,
    /// Correctness reward only.
    GrpoOnly,
    /// Fixed +0.5 for IDK answers, no modulator.
    StaticIdk,
    /// No training: evaluate the frozen initial policy with the IDK action enabled.
    ReliablePromptEval,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RunMode::Bapo => "bapo",
            RunMode::GrpoOnly => "grpo_only",
            RunMode::StaticIdk => "static_idk",
            RunMode::ReliablePromptEval => "reliable_prompt_eval",
        };
        f.write_str(name)
    }
}

/// Synthetic environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    pub n_entities: usize,
    pub n_relations: usize,
    /// Fraction of questions whose chain has a knocked-out link.
    pub missing_link_rate: f64,
    /// Probability that a retrieval displaces the true object out of the top-k.
    pub noise_rate: f64,
    /// Fraction of answerable questions with degraded retrieval (hard questions).
    pub hard_question_rate: f64,
    /// Displacement probability on hard questions.
    pub hard_noise_rate: f64,
    pub top_k: usize,
    pub tool_limit: usize,
    pub hops_min: usize,
    pub hops_max: usize,
    pub train_questions: usize,
    pub test_questions: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            n_entities: 25_000,
            n_relations: 12,
            missing_link_rate: 0.3,
            noise_rate: 0.1,
            hard_question_rate: 0.3,
            hard_noise_rate: 0.6,
            top_k: 5,
            tool_limit: 3,
            hops_min: 2,
            hops_max: 3,
            train_questions: 5_000,
            test_questions: 400,
        }
    }
}

/// Initial logits for the toy agent policy. The defaults mimic an instruct model
/// under a reliable prompt: search-happy, answering when it must, refusing rarely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyInit {
    pub search_logit: f64,
    pub answer_logit: f64,
    pub idk_logit: f64,
    /// Logits for the forced-answer contexts at the tool limit.
    pub final_answer_logit: f64,
    pub final_idk_logit: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        PolicyInit {
            search_logit: 1.2,
            answer_logit: -0.2,
            idk_logit: -0.7,
            final_answer_logit: 0.0,
            final_idk_logit: -2.0,
        }
    }
}

/// Policy-update parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoParams {
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub kl_penalty_enabled: bool,
    pub kl_coefficient: f64,
}

impl Default for GrpoParams {
    fn default() -> Self {
        GrpoParams {
            group_size: 8,
            // The objective averages over batch_size × group_size rollouts, so the
            // per-event step at this rate is lr / 512 under the default batch.
            learning_rate: 1.0,
            clip_epsilon: 0.1,
            kl_penalty_enabled: false,
            kl_coefficient: 0.001,
        }
    }
}

/// Modulator parameters plus the validation cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulatorConfig {
    pub alpha: f64,
    pub resample_budget: usize,
    pub plateau_patience: usize,
    pub plateau_delta: f64,
    /// Evaluate on the validation set every this many training steps.
    pub eval_every: usize,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        let params = ModulatorParams::default();
        ModulatorConfig {
            alpha: params.alpha,
            resample_budget: params.resample_budget,
            plateau_patience: params.plateau_patience,
            plateau_delta: params.plateau_delta,
            eval_every: 5,
        }
    }
}

impl ModulatorConfig {
    pub fn params(&self) -> ModulatorParams {
        ModulatorParams {
            alpha: self.alpha,
            resample_budget: self.resample_budget,
            plateau_patience: self.plateau_patience,
            plateau_delta: self.plateau_delta,
        }
    }
}

/// Run-level parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    pub mode: RunMode,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Sampled attempts per test question in the final evaluation.
    pub eval_attempts: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            mode: RunMode::Bapo,
            seed: 17,
            batch_size: 64,
            epochs: 2,
            eval_attempts: 5,
        }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvParams,
    pub policy: PolicyInit,
    pub grpo: GrpoParams,
    pub modulator: ModulatorConfig,
    pub run: RunParams,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn unit_interval(field: &'static str, value: f64) -> Result<(), ConfigError> {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::InvalidField {
                    field,
                    message: format!("must be in [0, 1], got {value}"),
                });
            }
            Ok(())
        }
        fn at_least(field: &'static str, value: usize, min: usize) -> Result<(), ConfigError> {
            if value < min {
                return Err(ConfigError::InvalidField {
                    field,
                    message: format!("must be at least {min}, got {value}"),
                });
            }
            Ok(())
        }
        fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
            if !value.is_finite() || value <= 0.0 {
                return Err(ConfigError::InvalidField {
                    field,
                    message: format!("must be positive, got {value}"),
                });
            }
            Ok(())
        }

        unit_interval("env.missing_link_rate", self.env.missing_link_rate)?;
        unit_interval("env.noise_rate", self.env.noise_rate)?;
        unit_interval("env.hard_question_rate", self.env.hard_question_rate)?;
        unit_interval("env.hard_noise_rate", self.env.hard_noise_rate)?;
        at_least("env.top_k", self.env.top_k, 1)?;
        at_least("env.n_relations", self.env.n_relations, 1)?;
        at_least("env.tool_limit", self.env.tool_limit, 1)?;
        at_least("env.hops_min", self.env.hops_min, 1)?;
        at_least("env.train_questions", self.env.train_questions, 1)?;
        at_least("env.test_questions", self.env.test_questions, 1)?;
        if self.env.hops_max < self.env.hops_min {
            return Err(ConfigError::InvalidField {
                field: "env.hops_max",
                message: format!(
                    "must be at least hops_min ({}), got {}",
                    self.env.hops_min, self.env.hops_max
                ),
            });
        }
        if self.env.hops_max > self.env.tool_limit {
            return Err(ConfigError::InvalidField {
                field: "env.hops_max",
                message: format!(
                    "must not exceed tool_limit ({}), got {}",
                    self.env.tool_limit, self.env.hops_max
                ),
            });
        }

        at_least("grpo.group_size", self.grpo.group_size, 2)?;
        positive("grpo.learning_rate", self.grpo.learning_rate)?;
        positive("grpo.clip_epsilon", self.grpo.clip_epsilon)?;
        if self.grpo.kl_coefficient < 0.0 {
            return Err(ConfigError::InvalidField {
                field: "grpo.kl_coefficient",
                message: format!("must be non-negative, got {}", self.grpo.kl_coefficient),
            });
        }

        unit_interval("modulator.alpha", self.modulator.alpha)?;
        at_least("modulator.plateau_patience", self.modulator.plateau_patience, 1)?;
        at_least("modulator.eval_every", self.modulator.eval_every, 1)?;
        if self.modulator.plateau_delta < 0.0 {
            return Err(ConfigError::InvalidField {
                field: "modulator.plateau_delta",
                message: format!("must be non-negative, got {}", self.modulator.plateau_delta),
            });
        }

        at_least("run.batch_size", self.run.batch_size, 1)?;
        at_least("run.epochs", self.run.epochs, 1)?;
        at_least("run.eval_attempts", self.run.eval_attempts, 1)?;
        Ok(())
    }
}
