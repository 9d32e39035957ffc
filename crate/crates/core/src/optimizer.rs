//! Group-relative advantages and the clipped surrogate objective, with
//! analytically exact gradients for the tabular policy.
//!
//! Advantages normalize rewards inside one group:
//!
//! ```text
//! A_i = (R_i - mean(R)) / (alpha * std(R) + lambda)
//! ```
//!
//! `alpha = 1, lambda = 0` recovers plain reward standardization; `lambda`
//! floors the denominator so mixed-origin groups with small variance stay
//! finite, and `alpha` rescales the spread contributed by injected members.
//!
//! The objective is the token-mean clipped surrogate
//!
//! ```text
//! J = (1/N) sum_i (1/L_i) sum_t min(r_it * A_i, clip(r_it, 1-eps, 1+eps) * A_i)
//!     - beta * KL(pi || pi_ref)
//! ```
//!
//! with importance ratios `r_it` formed against each member's stored
//! behavior log-probabilities and the KL penalty computed exactly per token
//! against the frozen reference policy, averaged with the same token
//! weighting, and subtracted outside the min. `kl_in_min` moves the
//! penalty inside the min's second argument instead, reproducing the
//! objective's typeset form verbatim for comparison runs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ContextKey, TabularPolicy};
use crate::replay::Group;

/// Which standard deviation the advantage denominator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide squared deviations by `N`.
    #[default]
    Population,
    /// Divide squared deviations by `N - 1`.
    Sample,
}

/// Advantage normalization knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageParams {
    pub alpha: f64,
    pub lambda: f64,
    pub std_mode: StdMode,
}

impl Default for AdvantageParams {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            lambda: 1e-4,
            std_mode: StdMode::Population,
        }
    }
}

impl AdvantageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "lambda must be non-negative and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Surrogate objective knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    /// Clip half-width `epsilon` of the importance ratio.
    pub epsilon: f64,
    /// KL penalty weight `beta` against the frozen reference policy.
    pub beta: f64,
    /// Move the KL term inside the min (the objective's literal typeset
    /// form) instead of subtracting it outside (the standard form).
    pub kl_in_min: bool,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            beta: 0.01,
            kl_in_min: false,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "beta must be non-negative and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Rewards with their group-relative advantages and group statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub group_mean: f64,
    /// Raw group standard deviation, before `alpha` and `lambda`.
    pub group_std: f64,
}

/// Gradient of the objective with respect to every touched logit row.
pub type Gradient = BTreeMap<ContextKey, Vec<f64>>;

/// Computes group-relative advantages.
///
/// All-equal rewards yield exactly zero advantages when `lambda > 0` and a
/// [`Error::DegenerateGroup`] when `lambda == 0`; nothing else divides by
/// zero. Equal-reward detection is exact, so a collapsed group can never
/// produce stray nonzero advantages through rounding.
pub fn group_advantages(rewards: &[f64], params: &AdvantageParams) -> Result<AdvantageBatch> {
    params.validate()?;
    if rewards.is_empty() {
        return Err(Error::Empty { what: "rewards" });
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite { what: "rewards" });
    }
    let n = rewards.len() as f64;
    let all_equal = rewards.iter().all(|&r| r == rewards[0]);
    if all_equal {
        if params.lambda == 0.0 {
            return Err(Error::DegenerateGroup);
        }
        return Ok(AdvantageBatch {
            rewards: rewards.to_vec(),
            advantages: alloc::vec![0.0; rewards.len()],
            group_mean: rewards[0],
            group_std: 0.0,
        });
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let squared: f64 = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum();
    let denom_n = match params.std_mode {
        StdMode::Population => n,
        StdMode::Sample => n - 1.0,
    };
    let std = libm::sqrt(squared / denom_n);
    let scale = params.alpha * std + params.lambda;
    if scale == 0.0 {
        return Err(Error::DegenerateGroup);
    }
    let advantages = rewards.iter().map(|&r| (r - mean) / scale).collect();
    Ok(AdvantageBatch {
        rewards: rewards.to_vec(),
        advantages,
        group_mean: mean,
        group_std: std,
    })
}

/// Evaluates the clipped surrogate objective for one group.
pub fn surrogate_objective(
    policy: &TabularPolicy,
    ref_policy: &TabularPolicy,
    group: &Group,
    advantages: &[f64],
    params: &ObjectiveParams,
) -> Result<f64> {
    evaluate(policy, ref_policy, group, advantages, params, None)
}

/// Computes the exact gradient of the objective with respect to every
/// logit parameter any member token touches.
pub fn objective_gradient(
    policy: &TabularPolicy,
    ref_policy: &TabularPolicy,
    group: &Group,
    advantages: &[f64],
    params: &ObjectiveParams,
) -> Result<Gradient> {
    let mut gradient = Gradient::new();
    evaluate(policy, ref_policy, group, advantages, params, Some(&mut gradient))?;
    Ok(gradient)
}

/// Shared evaluator; fills `gradient` when present.
fn evaluate(
    policy: &TabularPolicy,
    ref_policy: &TabularPolicy,
    group: &Group,
    advantages: &[f64],
    params: &ObjectiveParams,
    mut gradient: Option<&mut Gradient>,
) -> Result<f64> {
    params.validate()?;
    if group.members.is_empty() {
        return Err(Error::Empty { what: "group" });
    }
    if advantages.len() != group.members.len() {
        return Err(Error::LengthMismatch {
            expected: group.members.len(),
            field: "advantages",
            got: advantages.len(),
        });
    }
    let vocab = policy.vocab_size();
    let floor = 1.0 - params.epsilon;
    let ceil = 1.0 + params.epsilon;
    let n = group.members.len() as f64;
    let mut objective = 0.0;

    for (member, &advantage) in group.members.iter().zip(advantages) {
        let record = &member.record;
        record.validate()?;
        let keys = policy.context_keys(group.class, &member.prompt, &record.response);
        let member_scale = 1.0 / (n * record.response.len() as f64);

        for (t, key) in keys.iter().enumerate() {
            let token = record.response[t] as usize;
            if token >= vocab {
                return Err(Error::InvalidConfig(alloc::format!(
                    "response token {token} outside vocabulary of size {vocab}"
                )));
            }
            let (probs, lps) = policy.distribution_and_log_probs(key);
            let ratio = libm::exp(lps[token] - record.behavior_logprobs[t]);
            let unclipped = ratio * advantage;
            let clipped = ratio.clamp(floor, ceil) * advantage;

            let (kl, ref_lps) = if params.beta > 0.0 {
                let ref_lps = ref_policy.log_probs(key);
                let kl = probs
                    .iter()
                    .zip(&lps)
                    .zip(&ref_lps)
                    .map(|((&p, &lp), &rlp)| p * (lp - rlp))
                    .sum::<f64>();
                (kl, Some(ref_lps))
            } else {
                (0.0, None)
            };

            // Select the min branch and note which parts are differentiable:
            // the unclipped surrogate always is, the clipped one only while
            // the ratio sits inside the clip band, and the KL term only
            // when it belongs to the selected expression.
            let (token_objective, surrogate_active, kl_active) = if params.kl_in_min {
                let alternative = clipped - params.beta * kl;
                if unclipped <= alternative {
                    (unclipped, true, false)
                } else {
                    (alternative, ratio > floor && ratio < ceil, true)
                }
            } else {
                let surrogate = unclipped.min(clipped);
                (surrogate - params.beta * kl, unclipped <= clipped, true)
            };
            objective += member_scale * token_objective;

            if let Some(grad) = gradient.as_deref_mut() {
                let row = grad
                    .entry(key.clone())
                    .or_insert_with(|| alloc::vec![0.0; vocab]);
                if surrogate_active {
                    let coeff = member_scale * advantage * ratio;
                    for (v, slot) in row.iter_mut().enumerate() {
                        let indicator = if v == token { 1.0 } else { 0.0 };
                        *slot += coeff * (indicator - probs[v]);
                    }
                }
                if kl_active && params.beta > 0.0 {
                    let ref_lps = ref_lps.as_ref().expect("kl computed when beta > 0");
                    let scale = member_scale * params.beta;
                    for (v, slot) in row.iter_mut().enumerate() {
                        *slot -= scale * probs[v] * ((lps[v] - ref_lps[v]) - kl);
                    }
                }
            }
        }
    }
    Ok(objective)
}

/// Gradient-ascent step: adds `learning_rate * gradient` to every touched
/// logit row, materializing rows from their fallbacks on first touch.
pub fn apply_update(policy: &mut TabularPolicy, gradient: &Gradient, learning_rate: f64) {
    for (key, row) in gradient {
        let logits = policy.logits_mut(key);
        for (z, g) in logits.iter_mut().zip(row) {
            *z += learning_rate * g;
        }
    }
}

/// Sum of absolute gradient entries; zero iff the gradient is zero.
pub fn gradient_l1(gradient: &Gradient) -> f64 {
    gradient
        .values()
        .flat_map(|row| row.iter())
        .map(|g| g.abs())
        .sum()
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
