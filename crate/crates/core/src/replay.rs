//! Cross-context replay (CCR).
//!
//! Group-relative advantages vanish when a group's rewards are all equal,
//! which is exactly what happens on queries the policy always fails (or
//! always solves). Replay restores the contrast: an all-negative group is
//! topped up with historical successes for the same query, an all-positive
//! group with historical failures, and mixed groups pass through untouched.
//! Injected members keep their stored behavior log-probabilities, so the
//! optimizer can form importance ratios against the policy that generated
//! them; the clip bound is what contains their staleness.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::buffer::{Origin, SampleBuffer, SampleRecord};
use crate::policy::Token;

/// Reward pattern of a group against the positivity threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupClass {
    /// Every member's reward reaches the threshold.
    AllPositive,
    /// Every member's reward falls short of the threshold.
    AllNegative,
    /// Both kinds present.
    Mixed,
}

/// One group member: a trajectory plus how it got here.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMember {
    pub record: SampleRecord,
    /// False for members injected from the buffer.
    pub on_policy: bool,
    /// Prompt the member is evaluated against when recomputing current
    /// policy log-probabilities. On-policy members carry their generation
    /// prompt; injected members carry the query's base prompt, since they
    /// stand in as alternative answers to the current query.
    pub prompt: Vec<Token>,
}

/// A training group for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub uid: String,
    /// Task class index, for policy context keys.
    pub class: u32,
    pub members: Vec<GroupMember>,
    pub classification: GroupClass,
}

/// Outcome of one augmentation attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOutcome {
    /// Records injected from the buffer.
    pub injected: usize,
    /// True when an all-positive or all-negative group found no opposing
    /// sample in the buffer and was returned unchanged.
    pub starved: bool,
}

/// Classifies a reward vector against `positivity`: rewards at or above the
/// threshold count as positive.
pub fn classify(rewards: &[f64], positivity: f64) -> GroupClass {
    debug_assert!(!rewards.is_empty());
    let positives = rewards.iter().filter(|&&r| r >= positivity).count();
    if positives == rewards.len() {
        GroupClass::AllPositive
    } else if positives == 0 {
        GroupClass::AllNegative
    } else {
        GroupClass::Mixed
    }
}

impl Group {
    /// Builds a group from freshly sampled rollouts.
    pub fn from_rollouts(
        uid: String,
        class: u32,
        prompt: &[Token],
        records: Vec<SampleRecord>,
        positivity: f64,
    ) -> Self {
        debug_assert!(!records.is_empty());
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let classification = classify(&rewards, positivity);
        let members = records
            .into_iter()
            .map(|record| GroupMember {
                record,
                on_policy: true,
                prompt: prompt.to_vec(),
            })
            .collect();
        Self {
            uid,
            class,
            members,
            classification,
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.record.reward).collect()
    }

    /// Re-derives the classification from current member rewards.
    pub fn reclassify(&mut self, positivity: f64) {
        self.classification = classify(&self.rewards(), positivity);
    }
}

/// Tops up a one-sided group with opposing samples from the buffer.
///
/// All-negative groups receive up to `k_replay` historical records with
/// reward at or above `positivity`; all-positive groups receive up to
/// `k_replay` records below it. Fewer matches inject what exists; none at
/// all flags the group starved. Mixed groups pass through unchanged.
/// Injected members are marked [`Origin::Replayed`] and evaluated against
/// `base_prompt`, and a successful injection reclassifies the group.
pub fn augment<R: Rng + ?Sized>(
    group: &mut Group,
    buffer: &SampleBuffer,
    k_replay: usize,
    positivity: f64,
    base_prompt: &[Token],
    rng: &mut R,
) -> AugmentOutcome {
    debug_assert!(k_replay >= 1);
    let wanted: Option<alloc::boxed::Box<dyn Fn(f64) -> bool>> = match group.classification {
        GroupClass::Mixed => None,
        GroupClass::AllNegative => Some(alloc::boxed::Box::new(move |r| r >= positivity)),
        GroupClass::AllPositive => Some(alloc::boxed::Box::new(move |r| r < positivity)),
    };
    let Some(filter) = wanted else {
        return AugmentOutcome {
            injected: 0,
            starved: false,
        };
    };
    let pulled = buffer.retrieve(&group.uid, filter, k_replay, rng);
    let injected = pulled.len();
    for mut record in pulled {
        record.origin = Origin::Replayed;
        group.members.push(GroupMember {
            record,
            on_policy: false,
            prompt: base_prompt.to_vec(),
        });
    }
    if injected > 0 {
        group.reclassify(positivity);
    }
    AugmentOutcome {
        injected,
        starved: injected == 0,
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
