//! Outcome rewards for verifiable tasks.
//!
//! A response earns the correctness reward plus an optional length bonus
//! `r_len = max(0, 1 - l / L_max)` when the verifier accepts it, and 0
//! otherwise. The bonus favors concise correct answers and never turns an
//! incorrect response positive.

use crate::error::{Error, Result};
use crate::policy::Token;

/// Scalar knobs of the reward function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    /// Reward for a verified-correct response, before any bonus.
    pub correct_reward: f64,
    /// Length normalizer `L_max` of the bonus term.
    pub length_max: usize,
    /// Whether correct responses receive the length bonus.
    pub length_bonus_enabled: bool,
    /// Ceiling `R_max` of the structural entropy ranking reward; kept here
    /// so the `R_max < correct_reward` ordering is validated in one place.
    pub serr_r_max: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            correct_reward: 1.0,
            length_max: 32,
            length_bonus_enabled: true,
            serr_r_max: 0.5,
        }
    }
}

impl RewardSpec {
    /// Checks the documented ranges: `L_max >= 1` and
    /// `0 < R_max < correct_reward`. The ordering guarantees that ranking
    /// rewards can never outrank a genuine success.
    pub fn validate(&self) -> Result<()> {
        if self.length_max == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "length_max must be at least 1, got {}",
                self.length_max
            )));
        }
        if !self.correct_reward.is_finite() || self.correct_reward <= 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "correct_reward must be positive and finite, got {}",
                self.correct_reward
            )));
        }
        if !(self.serr_r_max > 0.0 && self.serr_r_max < self.correct_reward) {
            return Err(Error::InvalidConfig(alloc::format!(
                "serr_r_max must satisfy 0 < R_max < correct_reward, got {} vs {}",
                self.serr_r_max,
                self.correct_reward
            )));
        }
        Ok(())
    }
}

/// Decides whether a response answers a task.
pub trait Verifier {
    /// True iff the response's terminal answer span equals `gold`.
    fn verify(&self, response: &[Token], gold: &[Token]) -> bool;
}

/// Exact token match: the response must end with the terminator token and
/// the tokens ahead of it must equal the gold answer. Responses without the
/// terminal marker (truncated generations) never verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactMatchVerifier {
    terminator: Token,
}

impl ExactMatchVerifier {
    pub fn new(terminator: Token) -> Self {
        Self { terminator }
    }
}

impl Verifier for ExactMatchVerifier {
    fn verify(&self, response: &[Token], gold: &[Token]) -> bool {
        debug_assert!(!gold.is_empty(), "gold answers must be non-empty");
        match response.split_last() {
            Some((&last, answer)) if last == self.terminator => answer == gold,
            _ => false,
        }
    }
}

/// Length bonus `max(0, 1 - l / L_max)` for a response of `length` tokens.
pub fn length_bonus(length: usize, length_max: usize) -> f64 {
    debug_assert!(length >= 1 && length_max >= 1);
    (1.0 - length as f64 / length_max as f64).max(0.0)
}

/// Total reward of one response: correctness plus bonus, or exactly 0.
pub fn total_reward<V: Verifier>(
    response: &[Token],
    gold: &[Token],
    spec: &RewardSpec,
    verifier: &V,
) -> f64 {
    if !verifier.verify(response, gold) {
        return 0.0;
    }
    let bonus = if spec.length_bonus_enabled {
        length_bonus(response.len(), spec.length_max)
    } else {
        0.0
    };
    spec.correct_reward + bonus
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TERM: Token = 0;

    #[test]
    fn verify_accepts_exact_answer_with_terminator() {
        let v = ExactMatchVerifier::new(TERM);
        assert!(v.verify(&[3, 1, 4, TERM], &[3, 1, 4]));
    }

    #[test]
    fn verify_rejects_permuted_answer() {
        let v = ExactMatchVerifier::new(TERM);
        assert!(!v.verify(&[1, 4, 3, TERM], &[3, 1, 4]));
    }

    #[test]
    fn verify_rejects_truncated_response() {
        // No terminal marker: the generation hit the token limit.
        let v = ExactMatchVerifier::new(TERM);
        assert!(!v.verify(&[3, 1, 4], &[3, 1, 4]));
        assert!(!v.verify(&[], &[3]));
    }

    #[test]
    fn length_bonus_at_half_and_at_limit() {
        assert_eq!(length_bonus(16_384, 32_768), 0.5);
        assert_eq!(length_bonus(32_768, 32_768), 0.0);
        assert_eq!(length_bonus(40_000, 32_768), 0.0);
    }

    #[test]
    fn total_reward_correct_with_bonus() {
        let spec = RewardSpec {
            length_max: 32_768,
            ..RewardSpec::default()
        };
        let v = ExactMatchVerifier::new(TERM);
        let mut response = vec![7; 16_383];
        response.push(TERM);
        let r = total_reward(&response, &response[..16_383], &spec, &v);
        assert_eq!(r, 1.5);
    }

    #[test]
    fn total_reward_incorrect_is_exactly_zero() {
        let spec = RewardSpec::default();
        let v = ExactMatchVerifier::new(TERM);
        assert_eq!(total_reward(&[5, TERM], &[6], &spec, &v), 0.0);
    }

    #[test]
    fn total_reward_bonus_disabled() {
        let spec = RewardSpec {
            length_bonus_enabled: false,
            ..RewardSpec::default()
        };
        let v = ExactMatchVerifier::new(TERM);
        assert_eq!(total_reward(&[6, TERM], &[6], &spec, &v), 1.0);
    }

    #[test]
    fn spec_validation_enforces_reward_ordering() {
        let bad = RewardSpec {
            serr_r_max: 1.0,
            ..RewardSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = RewardSpec {
            length_max: 0,
            ..RewardSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(RewardSpec::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn bonus_is_monotone_nonincreasing_in_length(
            len in 1usize..100_000,
            l_max in 1usize..100_000,
        ) {
            let here = length_bonus(len, l_max);
            let next = length_bonus(len + 1, l_max);
            prop_assert!(next <= here);
            prop_assert!((0.0..=1.0).contains(&here));
        }

        #[test]
        fn incorrect_never_outscores_correct(
            gold in proptest::collection::vec(1u32..10, 1..8),
            wrong_tail in 1u32..10,
        ) {
            let spec = RewardSpec::default();
            let v = ExactMatchVerifier::new(TERM);
            let mut correct = gold.clone();
            correct.push(TERM);
            let mut wrong = gold.clone();
            wrong.push(wrong_tail);
            wrong.push(TERM);
            let r_correct = total_reward(&correct, &gold, &spec, &v);
            let r_wrong = total_reward(&wrong, &gold, &spec, &v);
            prop_assert!(r_correct >= spec.correct_reward);
            prop_assert_eq!(r_wrong, 0.0);
        }
    }
}
