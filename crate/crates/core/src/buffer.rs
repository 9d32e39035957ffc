//! Centralized trajectory archive indexed by query UID.
//!
//! Every rollout of a run is stored here together with its behavior
//! log-probabilities and token-entropy trace, so later steps can re-inject
//! historical successes or failures into fresh groups and rebuild importance
//! ratios against the policy that generated them.
//!
//! The store is a plain value type: operations take `&mut self`, and callers
//! that share it across rollout workers wrap it in a lock. Retrieval
//! randomness comes entirely from the caller-supplied generator, so results
//! are reproducible per named RNG stream regardless of scheduling.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Token;

/// How a stored record entered its training group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Sampled from the current policy for the query itself.
    OnPolicy,
    /// Copied out of the buffer into a later group.
    Replayed,
    /// Sampled from the current policy for a reflection-augmented query.
    Reflection,
}

/// One generated trajectory with everything needed to reuse it off-policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// UID of the query that produced the trajectory. Reflection rollouts
    /// keep the original query's UID so its history stays in one place.
    pub uid: String,
    pub response: Vec<Token>,
    /// Log-probability of each response token under the generating policy.
    pub behavior_logprobs: Vec<f64>,
    /// Exact sampling-distribution entropy at each response position.
    pub token_entropies: Vec<f64>,
    pub reward: f64,
    /// True when generation hit the token limit without a terminal marker.
    pub truncated: bool,
    /// Epoch the trajectory was generated in.
    pub epoch: u32,
    pub origin: Origin,
}

impl SampleRecord {
    /// Rejects records whose parallel fields disagree or whose scalars are
    /// outside their documented ranges.
    pub fn validate(&self) -> Result<()> {
        let n = self.response.len();
        if n == 0 {
            return Err(Error::Empty { what: "response" });
        }
        if self.behavior_logprobs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                field: "behavior_logprobs",
                got: self.behavior_logprobs.len(),
            });
        }
        if self.token_entropies.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                field: "token_entropies",
                got: self.token_entropies.len(),
            });
        }
        if !self.reward.is_finite() {
            return Err(Error::NonFinite { what: "reward" });
        }
        if self.behavior_logprobs.iter().any(|lp| !lp.is_finite()) {
            return Err(Error::NonFinite {
                what: "behavior_logprobs",
            });
        }
        if self
            .token_entropies
            .iter()
            .any(|h| !h.is_finite() || *h < 0.0)
        {
            return Err(Error::NonFinite {
                what: "token_entropies",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Stored {
    seq: u64,
    record: SampleRecord,
}

/// Reward-filterable, capacity-bounded trajectory store.
///
/// When full, insertion first evicts the oldest record of the UID holding
/// the most records (smallest UID on ties), so no single query can crowd
/// out the rest of the archive.
#[derive(Debug, Clone)]
pub struct SampleBuffer {
    by_uid: BTreeMap<String, Vec<Stored>>,
    capacity: usize,
    next_seq: u64,
    len: usize,
}

impl SampleBuffer {
    pub const DEFAULT_CAPACITY: usize = 100_000;

    /// Creates an empty buffer holding at most `capacity` records.
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "buffer capacity must be at least 1, got {capacity}"
            )));
        }
        Ok(Self {
            by_uid: BTreeMap::new(),
            capacity,
            next_seq: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of stored records for one UID.
    pub fn uid_len(&self, uid: &str) -> usize {
        self.by_uid.get(uid).map_or(0, Vec::len)
    }

    /// Validates and stores a record, evicting first if at capacity.
    pub fn insert(&mut self, record: SampleRecord) -> Result<()> {
        record.validate()?;
        if self.len == self.capacity {
            self.evict_one();
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.by_uid
            .entry(record.uid.clone())
            .or_default()
            .push(Stored { seq, record });
        self.len += 1;
        Ok(())
    }

    /// Drops the oldest record of the most-represented UID.
    fn evict_one(&mut self) {
        let mut victim: Option<(&String, usize)> = None;
        for (uid, stored) in &self.by_uid {
            match victim {
                Some((_, best)) if stored.len() <= best => {}
                _ => victim = Some((uid, stored.len())),
            }
        }
        let uid = victim.expect("evict_one called on empty buffer").0.clone();
        let stored = self.by_uid.get_mut(&uid).expect("victim uid present");
        stored.remove(0);
        if stored.is_empty() {
            self.by_uid.remove(&uid);
        }
        self.len -= 1;
    }

    /// Returns up to `limit` records for `uid` whose reward satisfies
    /// `filter`, chosen uniformly without replacement and listed in
    /// insertion order. Fewer than `limit` matches yield all of them; an
    /// unknown UID yields an empty list.
    pub fn retrieve<F, R>(&self, uid: &str, filter: F, limit: usize, rng: &mut R) -> Vec<SampleRecord>
    where
        F: Fn(f64) -> bool,
        R: Rng + ?Sized,
    {
        debug_assert!(limit >= 1, "retrieval limit must be at least 1");
        let Some(stored) = self.by_uid.get(uid) else {
            return Vec::new();
        };
        let matches: Vec<&SampleRecord> = stored
            .iter()
            .map(|s| &s.record)
            .filter(|r| filter(r.reward))
            .collect();
        if matches.len() <= limit {
            return matches.into_iter().cloned().collect();
        }
        let mut picked = rand::seq::index::sample(rng, matches.len(), limit).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| matches[i].clone()).collect()
    }

    /// Mean reward of the `window` most recent records for `uid`, or `None`
    /// when the UID has no history. Shorter histories use every record.
    pub fn history_mean_reward(&self, uid: &str, window: usize) -> Option<f64> {
        debug_assert!(window >= 1, "history window must be at least 1");
        let stored = self.by_uid.get(uid)?;
        let take = stored.len().min(window);
        let sum: f64 = stored[stored.len() - take..]
            .iter()
            .map(|s| s.record.reward)
            .sum();
        Some(sum / take as f64)
    }

    /// All records for one UID, oldest first.
    pub fn records_for(&self, uid: &str) -> Vec<&SampleRecord> {
        self.by_uid
            .get(uid)
            .map(|stored| stored.iter().map(|s| &s.record).collect())
            .unwrap_or_default()
    }

    /// Every record in global insertion order, for persistence.
    pub fn records_in_insertion_order(&self) -> Vec<&SampleRecord> {
        let mut all: Vec<&Stored> = self.by_uid.values().flatten().collect();
        all.sort_unstable_by_key(|s| s.seq);
        all.into_iter().map(|s| &s.record).collect()
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
