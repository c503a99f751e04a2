//! Group-relative advantages and the clipped policy-gradient update for a tabular
//! softmax policy.
//!
//! The policy holds one logit vector per decision context; a trajectory's
//! probability is the product of its decision probabilities, so observations
//! contribute nothing to the log-probability by construction. Advantages normalize
//! rewards within each rollout group (mean zero, unit standard deviation, with a
//! degeneracy guard for uniform groups). The update takes one gradient-ascent step
//! on the mean clipped surrogate, averaging 1/G within each group and uniformly
//! across groups, optionally with a small KL penalty toward the sampling policy.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard deviations at or below this are treated as degenerate (uniform group).
pub const STD_GUARD: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("advantage groups need at least two rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("unknown decision context {context} or action {action}")]
    UnknownContext { context: usize, action: usize },
    #[error("gradient is not finite")]
    NonFiniteGradient,
    #[error("invalid policy parameter {field}: {message}")]
    InvalidParameter {
        field: &'static str,
        message: String,
    },
}

/// Group-normalized advantages plus the statistics they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub per_rollout: Vec<f64>,
    pub group_mean: f64,
    pub group_std: f64,
}

/// Normalize rewards within a group: `(r − mean) / std` with the population
/// standard deviation. A degenerate (uniform-reward) group yields all zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageSet, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    let per_rollout = if std <= STD_GUARD {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    Ok(AdvantageSet {
        per_rollout,
        group_mean: mean,
        group_std: std,
    })
}

/// One recorded decision: which action the agent picked in which context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub context: usize,
    pub action: usize,
}

/// Softmax policy over discrete action templates, one logit vector per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Per-context logits; contexts may have different action counts.
    pub contexts: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
}

impl PolicyParams {
    pub fn new(
        contexts: Vec<Vec<f64>>,
        learning_rate: f64,
        clip_epsilon: f64,
    ) -> Result<Self, GrpoError> {
        if !clip_epsilon.is_finite() || clip_epsilon <= 0.0 {
            return Err(GrpoError::InvalidParameter {
                field: "clip_epsilon",
                message: format!("must be positive, got {clip_epsilon}"),
            });
        }
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(GrpoError::InvalidParameter {
                field: "learning_rate",
                message: format!("must be positive, got {learning_rate}"),
            });
        }
        if contexts.iter().any(|c| c.is_empty()) {
            return Err(GrpoError::InvalidParameter {
                field: "contexts",
                message: "every context needs at least one action".into(),
            });
        }
        Ok(PolicyParams {
            contexts,
            learning_rate,
            clip_epsilon,
        })
    }

    /// A uniform policy (all logits zero) with the given per-context action counts.
    pub fn uniform(
        action_counts: &[usize],
        learning_rate: f64,
        clip_epsilon: f64,
    ) -> Result<Self, GrpoError> {
        Self::new(
            action_counts.iter().map(|&n| vec![0.0; n]).collect(),
            learning_rate,
            clip_epsilon,
        )
    }

    fn logits(&self, context: usize, action: usize) -> Result<&[f64], GrpoError> {
        let logits = self
            .contexts
            .get(context)
            .ok_or(GrpoError::UnknownContext { context, action })?;
        if action >= logits.len() {
            return Err(GrpoError::UnknownContext { context, action });
        }
        Ok(logits)
    }

    /// Action probabilities for one context.
    pub fn probabilities(&self, context: usize) -> Result<Vec<f64>, GrpoError> {
        let logits = self.contexts.get(context).ok_or(GrpoError::UnknownContext {
            context,
            action: 0,
        })?;
        Ok(softmax(logits))
    }

    /// Log-probability of one decision.
    pub fn log_prob(&self, decision: Decision) -> Result<f64, GrpoError> {
        let logits = self.logits(decision.context, decision.action)?;
        Ok(log_softmax(logits)[decision.action])
    }

    /// Sample an action in a context.
    pub fn sample_action<R: Rng>(&self, context: usize, rng: &mut R) -> Result<usize, GrpoError> {
        let probs = self.probabilities(context)?;
        let draw: f64 = rng.gen();
        let mut cumulative = 0.0;
        for (action, p) in probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                return Ok(action);
            }
        }
        Ok(probs.len() - 1)
    }

    /// Highest-probability action (first index on ties).
    pub fn greedy_action(&self, context: usize) -> Result<usize, GrpoError> {
        let probs = self.probabilities(context)?;
        let mut best = 0;
        for (action, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = action;
            }
        }
        Ok(best)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|l| (l - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits.iter().map(|l| l - log_sum).collect()
}

/// Log-probability of a trajectory's recorded decisions under the policy. Only the
/// agent's own decisions contribute; observation content plays no part.
pub fn trajectory_log_prob(
    policy: &PolicyParams,
    decisions: &[Decision],
) -> Result<f64, GrpoError> {
    decisions
        .iter()
        .map(|&d| policy.log_prob(d))
        .sum::<Result<f64, _>>()
}

/// The clipped surrogate for one rollout:
/// `min(ratio · advantage, clip(ratio, 1−ε, 1+ε) · advantage)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    (ratio * advantage).min(clipped)
}

/// Everything the update needs to know about one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutDatum {
    pub decisions: Vec<Decision>,
    /// Log-probability under the sampling-time policy snapshot.
    pub old_log_prob: f64,
    /// Group-normalized advantage from the effective (post-modulator) totals.
    pub advantage: f64,
}

/// Knobs for the objective beyond what [`PolicyParams`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GrpoOptions {
    /// Optional KL penalty toward the sampling policy; `None` omits the term.
    pub kl_coefficient: Option<f64>,
}

struct Evaluation {
    objective: f64,
    /// Same shape as the policy's contexts.
    gradient: Vec<Vec<f64>>,
}

fn evaluate(
    policy: &PolicyParams,
    groups: &[Vec<RolloutDatum>],
    options: &GrpoOptions,
) -> Result<Evaluation, GrpoError> {
    let mut gradient: Vec<Vec<f64>> = policy.contexts.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut objective = 0.0;
    let n_groups = groups.iter().filter(|g| !g.is_empty()).count();
    if n_groups == 0 {
        return Ok(Evaluation {
            objective,
            gradient,
        });
    }
    let group_weight = 1.0 / n_groups as f64;

    for group in groups {
        if group.is_empty() {
            continue;
        }
        let rollout_weight = group_weight / group.len() as f64;
        for rollout in group {
            let new_log_prob = trajectory_log_prob(policy, &rollout.decisions)?;
            let ratio = (new_log_prob - rollout.old_log_prob).exp();
            let advantage = rollout.advantage;

            let unclipped = ratio * advantage;
            let clipped =
                ratio.clamp(1.0 - policy.clip_epsilon, 1.0 + policy.clip_epsilon) * advantage;
            objective += rollout_weight * unclipped.min(clipped);

            // d/dθ min(w·A, clip(w)·A): the unclipped branch contributes A·w·∇logπ;
            // a saturated clipped branch is constant in θ.
            let mut coefficient = if unclipped <= clipped {
                advantage * ratio
            } else {
                0.0
            };

            if let Some(beta) = options.kl_coefficient {
                // k3 estimator of KL(π_new ‖ π_old) per rollout:
                // exp(Δ) − Δ − 1 with Δ = old − new log-prob.
                let delta = rollout.old_log_prob - new_log_prob;
                objective -= rollout_weight * beta * (delta.exp() - delta - 1.0);
                coefficient += beta * (delta.exp() - 1.0);
            }

            if coefficient != 0.0 {
                accumulate_log_prob_gradient(
                    policy,
                    &rollout.decisions,
                    rollout_weight * coefficient,
                    &mut gradient,
                );
            }
        }
    }

    if !objective.is_finite()
        || gradient
            .iter()
            .any(|context| context.iter().any(|g| !g.is_finite()))
    {
        return Err(GrpoError::NonFiniteGradient);
    }
    Ok(Evaluation {
        objective,
        gradient,
    })
}

/// Add `scale · ∇_θ log π(decisions)` into `gradient`.
fn accumulate_log_prob_gradient(
    policy: &PolicyParams,
    decisions: &[Decision],
    scale: f64,
    gradient: &mut [Vec<f64>],
) {
    for decision in decisions {
        let probs = softmax(&policy.contexts[decision.context]);
        let row = &mut gradient[decision.context];
        for (j, p) in probs.iter().enumerate() {
            let indicator = if j == decision.action { 1.0 } else { 0.0 };
            row[j] += scale * (indicator - p);
        }
    }
}

/// The batch objective at the current parameters, without updating anything.
pub fn batch_objective(
    policy: &PolicyParams,
    groups: &[Vec<RolloutDatum>],
    options: &GrpoOptions,
) -> Result<f64, GrpoError> {
    evaluate(policy, groups, options).map(|e| e.objective)
}

/// One gradient-ascent step on the mean clipped surrogate over all rollouts.
/// Returns the objective value at the pre-update parameters for logging.
pub fn policy_update(
    policy: &mut PolicyParams,
    groups: &[Vec<RolloutDatum>],
    options: &GrpoOptions,
) -> Result<f64, GrpoError> {
    let evaluation = evaluate(policy, groups, options)?;
    for (context, row) in policy.contexts.iter_mut().zip(&evaluation.gradient) {
        for (logit, g) in context.iter_mut().zip(row) {
            *logit += policy.learning_rate * g;
        }
    }
    Ok(evaluation.objective)
}

/// The analytic gradient of the batch objective; exposed for gradient checking.
pub fn batch_gradient(
    policy: &PolicyParams,
    groups: &[Vec<RolloutDatum>],
    options: &GrpoOptions,
) -> Result<Vec<Vec<f64>>, GrpoError> {
    evaluate(policy, groups, options).map(|e| e.gradient)
}
