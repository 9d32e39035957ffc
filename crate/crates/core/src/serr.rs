//! Structural entropy ranking reward (SERR).
//!
//! When every response in a group fails, outcome rewards are identical and
//! group-relative advantages vanish. This module restores a learning signal
//! by ranking the group's responses on the *structure* of their token-entropy
//! traces instead of on outcomes:
//!
//! * peak entropy `E_peak`: mean of the top `k` token entropies, with
//!   `k = max(1, floor(p * L))` for a length-`L` trace;
//! * global entropy `E_global`: mean over all `L` token entropies;
//! * dominance: trace `i` dominates trace `j` iff `E_peak(i) > E_peak(j)`
//!   and `E_global(i) < E_global(j)`, both strict;
//! * score `S_i`: number of traces that `i` dominates;
//! * rank reward: the `k`-th highest score receives `R_max * (1 - k/(N-1))`,
//!   tied scores receive the arithmetic mean of the rank slots they occupy.
//!
//! High peak entropy with low global entropy marks a response that commits
//! confidently almost everywhere but deliberates hard at a few forks, which
//! is the profile this ranking pushes the policy toward.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Entropies are accepted as a distribution when they sum to 1 within this.
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Summary of one token-entropy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyProfile {
    /// Mean of the `k_top` largest token entropies.
    pub peak: f64,
    /// Mean over all token entropies.
    pub global: f64,
    /// Number of tokens contributing to `peak`.
    pub k_top: usize,
    /// Trace length.
    pub length: usize,
}

/// Shannon entropy of a discrete distribution, in nats.
///
/// Rejects negative entries and vectors that do not sum to 1 within 1e-9.
/// The `0 ln 0 = 0` convention applies, so one-hot distributions score 0.
pub fn token_entropy(distribution: &[f64]) -> Result<f64> {
    if distribution.is_empty() {
        return Err(Error::Empty {
            what: "probability distribution",
        });
    }
    let mut sum = 0.0;
    for (index, &p) in distribution.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite {
                what: "probability distribution",
            });
        }
        if p < 0.0 {
            return Err(Error::NegativeProbability { value: p, index });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    Ok(entropy_nats(distribution))
}

/// Entropy accumulation shared with the policy backend so that stored and
/// recomputed token entropies agree bit for bit.
pub(crate) fn entropy_nats(distribution: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in distribution {
        if p > 0.0 {
            h -= p * libm::log(p);
        }
    }
    h
}

/// Computes the entropy profile of one trace.
///
/// `selection_ratio` is the fraction `p` of tokens feeding the peak mean;
/// it must lie in `(0, 1]` and the trace must be non-empty.
pub fn profile(entropies: &[f64], selection_ratio: f64) -> Result<EntropyProfile> {
    if entropies.is_empty() {
        return Err(Error::Empty {
            what: "token-entropy trace",
        });
    }
    if !(selection_ratio > 0.0 && selection_ratio <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "selection ratio p must be in (0, 1], got {selection_ratio}"
        )));
    }
    let length = entropies.len();
    let k_top = largest_count(length, selection_ratio);
    let mut sorted: Vec<f64> = entropies.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let peak = mean(&sorted[..k_top]);
    let global = mean(entropies);
    Ok(EntropyProfile {
        peak,
        global,
        k_top,
        length,
    })
}

/// `k = max(1, floor(p * L))`.
fn largest_count(length: usize, selection_ratio: f64) -> usize {
    let k = libm::floor(selection_ratio * length as f64) as usize;
    k.clamp(1, length)
}

fn mean(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    sum / values.len() as f64
}

/// Strict partial order: `a` dominates `b` iff `a.peak > b.peak` and
/// `a.global < b.global`.
pub fn dominates(a: &EntropyProfile, b: &EntropyProfile) -> bool {
    a.peak > b.peak && a.global < b.global
}

/// Dominance score of every profile: `S_i = |{ j != i : i dominates j }|`.
pub fn dominance_scores(profiles: &[EntropyProfile]) -> Vec<usize> {
    profiles
        .iter()
        .map(|a| profiles.iter().filter(|b| dominates(a, b)).count())
        .collect()
}

/// Converts dominance scores to rank rewards in input order.
///
/// The member holding the `k`-th rank slot (0-based, by descending score)
/// earns `r_max * (1 - k / (N - 1))`; members with equal scores share the
/// arithmetic mean of the slots they occupy. A single-member group earns
/// `r_max`. For `N >= 2` the rewards always sum to `r_max * N / 2`.
pub fn rank_rewards(scores: &[usize], r_max: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty {
            what: "dominance scores",
        });
    }
    let n = scores.len();
    if n == 1 {
        return Ok(alloc::vec![r_max]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| scores[j].cmp(&scores[i]));

    let slot_reward = |slot: usize| r_max * (1.0 - slot as f64 / (n - 1) as f64);
    let mut rewards = alloc::vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let tied: f64 = (start..end).map(slot_reward).sum();
        let shared = tied / (end - start) as f64;
        for &member in &order[start..end] {
            rewards[member] = shared;
        }
        start = end;
    }
    Ok(rewards)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
