//! In-context self-reflection (ISR).
//!
//! Queries the policy keeps failing get a second chance inside the same
//! batch: the query is re-posed as `query ⊕ failed-response ⊕ guidance`,
//! letting the policy condition on one of its own recent mistakes plus a
//! fixed guidance suffix. Hardness is judged from buffered history (mean
//! reward over a recent window below a threshold), and reflection variants
//! join the batch alongside the originals, never replacing them.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::buffer::SampleBuffer;
use crate::error::{Error, Result};
use crate::policy::Token;

/// Reflection knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTemplate {
    /// Guidance tokens appended after the sampled failure.
    pub guidance: Vec<Token>,
    /// History window (most recent records) for the hardness test.
    pub history_window: usize,
    /// Hardness threshold tau: a query is hard when its windowed mean
    /// reward exists and falls below this.
    pub hardness_threshold: f64,
    /// Optional cap on augmented-query length; the sampled failure is
    /// tail-truncated to fit, preserving the guidance suffix.
    pub max_query_len: Option<usize>,
}

impl ReflectionTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.guidance.is_empty() {
            return Err(Error::Empty {
                what: "reflection guidance",
            });
        }
        if self.history_window == 0 {
            return Err(Error::InvalidConfig(
                "reflection history window must be at least 1".into(),
            ));
        }
        if !self.hardness_threshold.is_finite() || self.hardness_threshold < 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "hardness threshold must be finite and non-negative, got {}",
                self.hardness_threshold
            )));
        }
        Ok(())
    }
}

/// A query is hard when it has history and that history's windowed mean
/// reward sits below the threshold. No history means not hard yet.
pub fn is_hard(uid: &str, buffer: &SampleBuffer, template: &ReflectionTemplate) -> bool {
    buffer
        .history_mean_reward(uid, template.history_window)
        .is_some_and(|mean| mean < template.hardness_threshold)
}

/// Builds the reflection variant `query ⊕ o_h ⊕ guidance`, where `o_h` is a
/// uniformly sampled historical failure (reward below `failure_threshold`)
/// for this UID. Returns `None` when no failed history exists.
pub fn build_reflection_query<R: Rng + ?Sized>(
    query: &[Token],
    uid: &str,
    buffer: &SampleBuffer,
    template: &ReflectionTemplate,
    failure_threshold: f64,
    rng: &mut R,
) -> Option<Vec<Token>> {
    let failed = buffer.retrieve(uid, |r| r < failure_threshold, 1, rng);
    let sample = failed.first()?;
    let mut kept = sample.response.len();
    if let Some(cap) = template.max_query_len {
        let fixed = query.len() + template.guidance.len();
        kept = kept.min(cap.saturating_sub(fixed));
    }
    let mut augmented = Vec::with_capacity(query.len() + kept + template.guidance.len());
    augmented.extend_from_slice(query);
    augmented.extend_from_slice(&sample.response[..kept]);
    augmented.extend_from_slice(&template.guidance);
    Some(augmented)
}

/// One batch entry handed to reflection: a query UID plus its prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchQuery {
    pub uid: String,
    pub prompt: Vec<Token>,
    /// True for reflection variants appended by [`augment_batch`].
    pub reflected: bool,
}

impl BatchQuery {
    pub fn new(uid: impl Into<String>, prompt: Vec<Token>) -> Self {
        Self {
            uid: uid.into(),
            prompt,
            reflected: false,
        }
    }
}

/// Appends a reflection variant for every hard query in the batch.
///
/// Reflection only runs from the second epoch on (the buffer holds nothing
/// useful earlier); epoch 1 batches return unchanged. Hard queries without
/// failed history are skipped. Originals are always retained, variants are
/// appended after them in batch order.
pub fn augment_batch<R: Rng + ?Sized>(
    batch: &[BatchQuery],
    buffer: &SampleBuffer,
    template: &ReflectionTemplate,
    failure_threshold: f64,
    epoch: u32,
    rng: &mut R,
) -> Result<Vec<BatchQuery>> {
    template.validate()?;
    let mut out: Vec<BatchQuery> = batch.to_vec();
    if epoch <= 1 {
        return Ok(out);
    }
    for query in batch {
        if !is_hard(&query.uid, buffer, template) {
            continue;
        }
        if let Some(prompt) =
            build_reflection_query(&query.prompt, &query.uid, buffer, template, failure_threshold, rng)
        {
            out.push(BatchQuery {
                uid: query.uid.clone(),
                prompt,
                reflected: true,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
