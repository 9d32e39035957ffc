//! Exact tabular softmax policy.
//!
//! The policy conditions on a [`ContextKey`]: the task's class index plus
//! the last `m` tokens of the prompt⊕response stream ahead of the next
//! emission. Keying on a bounded window keeps the table finite while still
//! letting prompt changes (for example reflection guidance appended to a
//! query) steer the first emissions, and it truncates arbitrarily long
//! prompts naturally.
//!
//! Probabilities, log-probabilities, and entropies are computed exactly
//! from the stored logits, which is what makes analytically exact gradients
//! and bit-reproducible runs possible. Transcendentals go through `libm`
//! so results do not depend on the platform's libc.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serr::entropy_nats;

/// Vocabulary token id.
pub type Token = u32;

/// Conditioning context of one emission step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextKey {
    /// Task class index, parsed from the query UID.
    pub class: u32,
    /// Last `m` tokens of prompt⊕response ahead of this step (shorter when
    /// the stream itself is shorter).
    pub window: Vec<Token>,
}

/// Serializable dump of a policy's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub vocab_size: usize,
    pub context_order: usize,
    pub class_defaults: Vec<(u32, Vec<f64>)>,
    pub logits: Vec<(ContextKey, Vec<f64>)>,
}

/// Tabular softmax policy over context keys.
///
/// Contexts without materialized logits fall back to their class default,
/// and classes without a default fall back to all-zero logits (a uniform
/// distribution). Gradient updates materialize a context's row on first
/// touch, starting from that fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    vocab_size: usize,
    context_order: usize,
    logits: BTreeMap<ContextKey, Vec<f64>>,
    class_defaults: BTreeMap<u32, Vec<f64>>,
    zeros: Vec<f64>,
}

impl TabularPolicy {
    /// Creates a policy with uniform distributions everywhere.
    /// Requires `vocab_size >= 4` and `context_order >= 1`.
    pub fn new(vocab_size: usize, context_order: usize) -> Result<Self> {
        if vocab_size < 4 {
            return Err(Error::InvalidConfig(alloc::format!(
                "vocab_size must be at least 4, got {vocab_size}"
            )));
        }
        if context_order == 0 {
            return Err(Error::InvalidConfig(
                "context_order must be at least 1".into(),
            ));
        }
        Ok(Self {
            vocab_size,
            context_order,
            logits: BTreeMap::new(),
            class_defaults: BTreeMap::new(),
            zeros: alloc::vec![0.0; vocab_size],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    /// Number of materialized logit rows.
    pub fn materialized_contexts(&self) -> usize {
        self.logits.len()
    }

    /// Builds the context key for the emission at `response_prefix.len()`.
    pub fn context_key(&self, class: u32, prompt: &[Token], response_prefix: &[Token]) -> ContextKey {
        let m = self.context_order;
        let mut window = Vec::with_capacity(m);
        let need_from_prompt = m.saturating_sub(response_prefix.len());
        if need_from_prompt > 0 {
            let start = prompt.len().saturating_sub(need_from_prompt);
            window.extend_from_slice(&prompt[start..]);
        }
        let take = m - window.len();
        let start = response_prefix.len().saturating_sub(take);
        window.extend_from_slice(&response_prefix[start..]);
        ContextKey { class, window }
    }

    /// Context key of every emission step of a full response.
    pub fn context_keys(&self, class: u32, prompt: &[Token], response: &[Token]) -> Vec<ContextKey> {
        (0..response.len())
            .map(|t| self.context_key(class, prompt, &response[..t]))
            .collect()
    }

    /// Installs explicit logits for one context.
    pub fn set_logits(&mut self, key: ContextKey, logits: Vec<f64>) -> Result<()> {
        self.check_row(&logits)?;
        self.logits.insert(key, logits);
        Ok(())
    }

    /// Installs the fallback logits for every unmaterialized context of a class.
    pub fn set_class_default(&mut self, class: u32, logits: Vec<f64>) -> Result<()> {
        self.check_row(&logits)?;
        self.class_defaults.insert(class, logits);
        Ok(())
    }

    fn check_row(&self, logits: &[f64]) -> Result<()> {
        if logits.len() != self.vocab_size {
            return Err(Error::LengthMismatch {
                expected: self.vocab_size,
                field: "logits",
                got: logits.len(),
            });
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite { what: "logits" });
        }
        Ok(())
    }

    /// Logits governing `key`, falling back to class default then zeros.
    pub fn effective_logits(&self, key: &ContextKey) -> &[f64] {
        if let Some(row) = self.logits.get(key) {
            return row;
        }
        if let Some(row) = self.class_defaults.get(&key.class) {
            return row;
        }
        &self.zeros
    }

    /// Materializes and returns the mutable logit row for `key`.
    pub fn logits_mut(&mut self, key: &ContextKey) -> &mut Vec<f64> {
        if !self.logits.contains_key(key) {
            let row = self.effective_logits(key).to_vec();
            self.logits.insert(key.clone(), row);
        }
        self.logits.get_mut(key).expect("row just materialized")
    }

    /// Softmax probabilities at `key`.
    pub fn distribution(&self, key: &ContextKey) -> Vec<f64> {
        softmax(self.effective_logits(key))
    }

    /// Log-probabilities (`z - logsumexp(z)`) at `key`.
    pub fn log_probs(&self, key: &ContextKey) -> Vec<f64> {
        let z = self.effective_logits(key);
        let lse = log_sum_exp(z);
        z.iter().map(|zi| zi - lse).collect()
    }

    /// Probabilities and log-probabilities in one pass.
    pub fn distribution_and_log_probs(&self, key: &ContextKey) -> (Vec<f64>, Vec<f64>) {
        let lps = self.log_probs(key);
        let probs = lps.iter().map(|&lp| libm::exp(lp)).collect();
        (probs, lps)
    }

    /// Samples one token at `key`, returning the token, its exact
    /// log-probability, and the distribution's exact entropy.
    pub fn sample<R: Rng + ?Sized>(&self, key: &ContextKey, rng: &mut R) -> (Token, f64, f64) {
        let (probs, lps) = self.distribution_and_log_probs(key);
        let entropy = entropy_nats(&probs);
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (v, &p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return (v as Token, lps[v], entropy);
            }
        }
        // Rounding left `cumulative` a hair under 1: emit the last token.
        let last = probs.len() - 1;
        (last as Token, lps[last], entropy)
    }

    /// Dumps all parameters in deterministic (sorted-key) order.
    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            vocab_size: self.vocab_size,
            context_order: self.context_order,
            class_defaults: self
                .class_defaults
                .iter()
                .map(|(&c, row)| (c, row.clone()))
                .collect(),
            logits: self
                .logits
                .iter()
                .map(|(k, row)| (k.clone(), row.clone()))
                .collect(),
        }
    }

    /// Rebuilds a policy from a snapshot.
    pub fn from_snapshot(snapshot: PolicySnapshot) -> Result<Self> {
        let mut policy = Self::new(snapshot.vocab_size, snapshot.context_order)?;
        for (class, row) in snapshot.class_defaults {
            policy.set_class_default(class, row)?;
        }
        for (key, row) in snapshot.logits {
            policy.set_logits(key, row)?;
        }
        Ok(policy)
    }
}

/// `log(sum(exp(z)))` stabilized against overflow.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    debug_assert!(!z.is_empty());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&zi| libm::exp(zi - max)).sum();
    max + libm::log(sum)
}

/// Softmax of a logit row.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|&zi| libm::exp(zi - lse)).collect()
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
