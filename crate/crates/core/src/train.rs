//! End-to-end training: the epoch/batch loop wiring rollouts, replay,
//! reflection, entropy-rank rewards, advantages, and policy updates
//! together, plus multi-seed comparison across modes.
//!
//! One optimization step processes one batch of queries: reflection
//! variants are appended for persistently hard queries (from the second
//! epoch on), every query gets a group of fresh rollouts, one-sided groups
//! are repaired (entropy-rank rewards for all-failure groups, then replay
//! injection of opposing samples), advantages and the surrogate gradient
//! are computed per group, and the mean gradient over contributing groups
//! is applied once. All fresh rollouts enter the buffer after the step, so
//! replay and hardness checks only ever see history.
//!
//! Baseline modes reuse the same loop: `grpo` turns the three mechanisms
//! off and standardizes rewards with `alpha = 1`; `dapo` additionally
//! drops every group whose members are all-failure or all-success instead
//! of repairing it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::buffer::{Origin, SampleBuffer};
use crate::env::{
    class_of_uid, initial_policy, make_suite, rollout, Difficulty, EnvParams, SuiteCounts, Task,
    TERMINATOR,
};
use crate::error::{Error, Result};
use crate::optimizer::{
    apply_update, group_advantages, objective_gradient, AdvantageParams, Gradient,
    ObjectiveParams, StdMode,
};
use crate::policy::{TabularPolicy, Token};
use crate::reflection::{augment_batch, BatchQuery, ReflectionTemplate};
use crate::replay::{augment, Group, GroupClass};
use crate::reward::{total_reward, ExactMatchVerifier, RewardSpec};
use crate::rng::StreamSeeder;
use crate::serr;

/// Rollouts per task when measuring final solve rates.
pub const EVAL_ROLLOUTS: usize = 32;

/// Training algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full method: entropy-rank rewards, replay, and reflection.
    #[default]
    R3,
    /// Group-standardized advantages only; collapsed groups yield zero.
    Grpo,
    /// Like `grpo`, but all-failure and all-success groups are dropped
    /// from the gradient instead of contributing zeros.
    Dapo,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::R3 => "r3",
            Mode::Grpo => "grpo",
            Mode::Dapo => "dapo",
        }
    }
}

fn default_epochs() -> u32 {
    40
}
fn default_group_size() -> usize {
    8
}
fn default_batch_size() -> usize {
    16
}
fn default_seed() -> u64 {
    17
}
fn default_correct() -> f64 {
    1.0
}
fn default_selection_ratio() -> f64 {
    0.2
}
fn default_replay_k() -> usize {
    2
}
fn default_positivity() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.3
}
fn default_window() -> usize {
    16
}
fn default_alpha() -> f64 {
    1.5
}
fn default_lambda() -> f64 {
    1e-4
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_beta() -> f64 {
    0.01
}
fn default_lr() -> f64 {
    2.0
}

/// `[buffer]` section: replay buffer sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferSection {
    pub capacity: usize,
}

impl Default for BufferSection {
    fn default() -> Self {
        Self {
            capacity: SampleBuffer::DEFAULT_CAPACITY,
        }
    }
}

/// `[reward]` section: verifier reward shaping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Base reward for a verified-correct response.
    pub correct: f64,
    /// Whether correct responses earn the length bonus.
    pub length_bonus: bool,
    /// Length normalizer; defaults to the generation limit.
    pub l_max: Option<usize>,
    /// Ranking-reward ceiling; alias of `serr.r_max`, setting both to
    /// different values is a configuration error.
    pub serr_rmax: Option<f64>,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            correct: default_correct(),
            length_bonus: true,
            l_max: None,
            serr_rmax: None,
        }
    }
}

/// `[serr]` section: entropy-rank rewards for all-failure groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SerrSection {
    /// Fraction of a trace counted as its entropy peak.
    pub p: f64,
    /// Ranking-reward ceiling; see also `reward.serr_rmax`.
    pub r_max: Option<f64>,
}

impl Default for SerrSection {
    fn default() -> Self {
        Self {
            p: default_selection_ratio(),
            r_max: None,
        }
    }
}

/// `[replay]` section: cross-context replay injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    /// Maximum records injected into a one-sided group.
    pub k: usize,
    /// Rewards at or above this count as positive.
    pub positivity_threshold: f64,
}

impl Default for ReplaySection {
    fn default() -> Self {
        Self {
            k: default_replay_k(),
            positivity_threshold: default_positivity(),
        }
    }
}

/// `[reflection]` section: hard-query prompt augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectionSection {
    pub enabled: bool,
    /// Hardness threshold on the windowed mean buffered reward.
    pub tau: f64,
    /// History window for the hardness test.
    pub window: usize,
    /// Guidance tokens; defaults to the environment's reserved pair.
    pub guidance: Option<Vec<Token>>,
    /// Optional cap on augmented-query length.
    pub max_query_len: Option<usize>,
}

impl Default for ReflectionSection {
    fn default() -> Self {
        Self {
            enabled: true,
            tau: default_tau(),
            window: default_window(),
            guidance: None,
            max_query_len: None,
        }
    }
}

/// `[opt]` section: advantage normalization and surrogate objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptSection {
    /// Advantage denominator scale on the group std.
    pub alpha: f64,
    /// Advantage denominator floor; must be positive at train time so
    /// collapsed groups normalize to zero instead of dividing by zero.
    pub lambda: f64,
    /// Importance-ratio clip half-width.
    pub epsilon: f64,
    /// KL penalty weight against the frozen initial policy.
    pub beta: f64,
    /// Gradient-ascent learning rate.
    pub lr: f64,
    pub std_mode: StdMode,
    /// Evaluate the KL term inside the pessimistic min instead of
    /// subtracting it outside.
    pub kl_in_min: bool,
}

impl Default for OptSection {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            lambda: default_lambda(),
            epsilon: default_epsilon(),
            beta: default_beta(),
            lr: default_lr(),
            std_mode: StdMode::Population,
            kl_in_min: false,
        }
    }
}

/// Full training configuration; every field has a default, so an empty
/// TOML document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: u32,
    /// Rollouts per query per step.
    pub group_size: usize,
    /// Queries per optimization step, before reflection variants.
    pub batch_size: usize,
    /// Master seed; fixes every random choice of the run.
    pub seed: u64,
    pub env: EnvParams,
    pub suite: SuiteCounts,
    pub buffer: BufferSection,
    pub reward: RewardSection,
    pub serr: SerrSection,
    pub replay: ReplaySection,
    pub reflection: ReflectionSection,
    pub opt: OptSection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::R3,
            epochs: default_epochs(),
            group_size: default_group_size(),
            batch_size: default_batch_size(),
            seed: default_seed(),
            env: EnvParams::default(),
            suite: SuiteCounts::default(),
            buffer: BufferSection::default(),
            reward: RewardSection::default(),
            serr: SerrSection::default(),
            replay: ReplaySection::default(),
            reflection: ReflectionSection::default(),
            opt: OptSection::default(),
        }
    }
}

impl TrainConfig {
    /// Resolves the ranking-reward ceiling from its two aliased keys.
    fn resolved_r_max(&self) -> Result<f64> {
        match (self.serr.r_max, self.reward.serr_rmax) {
            (Some(a), Some(b)) if a != b => Err(Error::InvalidConfig(alloc::format!(
                "serr.r_max = {a} and reward.serr_rmax = {b} disagree; set only one"
            ))),
            (Some(a), _) => Ok(a),
            (None, Some(b)) => Ok(b),
            (None, None) => Ok(0.5),
        }
    }

    /// Reward parameters with defaults resolved against the environment.
    pub fn reward_spec(&self) -> Result<RewardSpec> {
        let spec = RewardSpec {
            correct_reward: self.reward.correct,
            length_max: self.reward.l_max.unwrap_or(self.env.max_tokens),
            length_bonus_enabled: self.reward.length_bonus,
            serr_r_max: self.resolved_r_max()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reflection template with the guidance default resolved against the
    /// environment's reserved tokens.
    pub fn reflection_template(&self) -> ReflectionTemplate {
        ReflectionTemplate {
            guidance: self
                .reflection
                .guidance
                .clone()
                .unwrap_or_else(|| self.env.guidance_tokens().to_vec()),
            history_window: self.reflection.window,
            hardness_threshold: self.reflection.tau,
            max_query_len: self.reflection.max_query_len,
        }
    }

    /// Advantage parameters for this mode: baselines standardize with
    /// `alpha = 1`, keeping the configured floor.
    pub fn advantage_params(&self) -> AdvantageParams {
        AdvantageParams {
            alpha: match self.mode {
                Mode::R3 => self.opt.alpha,
                Mode::Grpo | Mode::Dapo => 1.0,
            },
            lambda: self.opt.lambda,
            std_mode: self.opt.std_mode,
        }
    }

    pub fn objective_params(&self) -> ObjectiveParams {
        ObjectiveParams {
            epsilon: self.opt.epsilon,
            beta: self.opt.beta,
            kl_in_min: self.opt.kl_in_min,
        }
    }

    /// Checks every section before training touches the policy.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.group_size < 2 {
            return Err(Error::InvalidConfig(
                "group_size must be at least 2: intra-group statistics need two samples".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.env.validate()?;
        if self.suite.total() == 0 {
            return Err(Error::Empty { what: "task suite" });
        }
        if self.buffer.capacity == 0 {
            return Err(Error::InvalidConfig(
                "buffer capacity must be at least 1".into(),
            ));
        }
        self.reward_spec()?;
        if !(self.serr.p.is_finite() && self.serr.p > 0.0 && self.serr.p <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "serr.p must lie in (0, 1], got {}",
                self.serr.p
            )));
        }
        if self.replay.k == 0 {
            return Err(Error::InvalidConfig(
                "replay.k must be at least 1".into(),
            ));
        }
        if !(self.replay.positivity_threshold.is_finite() && self.replay.positivity_threshold > 0.0)
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "replay.positivity_threshold must be positive and finite, got {}",
                self.replay.positivity_threshold
            )));
        }
        let template = self.reflection_template();
        template.validate()?;
        if let Some(&t) = template
            .guidance
            .iter()
            .find(|&&t| (t as usize) >= self.env.vocab_size)
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "reflection guidance token {t} outside vocabulary of size {}",
                self.env.vocab_size
            )));
        }
        AdvantageParams {
            alpha: self.opt.alpha,
            lambda: self.opt.lambda,
            std_mode: self.opt.std_mode,
        }
        .validate()?;
        self.objective_params().validate()?;
        if self.opt.lambda == 0.0 {
            return Err(Error::InvalidConfig(
                "opt.lambda must be positive at train time: collapsed groups would divide by zero"
                    .into(),
            ));
        }
        if !(self.opt.lr.is_finite() && self.opt.lr > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "opt.lr must be positive and finite, got {}",
                self.opt.lr
            )));
        }
        Ok(())
    }
}

/// Per-step training metrics, one JSONL line per optimization step.
///
/// Solve fractions describe the fresh on-policy groups of the step,
/// before any repair; `mean_reward` is the verifier reward over fresh
/// rollouts, and `mean_policy_entropy` averages the stored
/// sampling-distribution entropies over all fresh rollout tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u32,
    pub mean_reward: f64,
    pub solve_all_frac: f64,
    pub solve_none_frac: f64,
    pub mean_policy_entropy: f64,
    pub replay_injections: u32,
    pub reflection_activations: u32,
    pub serr_groups: u32,
    pub starved_groups: u32,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub policy: TabularPolicy,
    pub metrics: Vec<StepMetrics>,
    pub buffer: SampleBuffer,
    /// Post-training solve rate per difficulty stratum, measured with
    /// [`EVAL_ROLLOUTS`] fresh rollouts per task.
    pub final_solve_rates: BTreeMap<Difficulty, f64>,
    pub tasks: Vec<Task>,
}

/// Optimization steps per epoch for a config: batches per suite pass.
pub fn steps_per_epoch(config: &TrainConfig) -> usize {
    config.suite.total().div_ceil(config.batch_size)
}

/// Shuffles the suite for one epoch while keeping every batch's
/// difficulty mix proportional to the suite's.
///
/// Each stratum is shuffled independently, then strata are merged by
/// fractional position (member `j` of a stratum of size `s` sits at
/// `(2j+1)/2s`), compared exactly by cross-multiplication. Equal suite
/// strata therefore interleave round-robin and every batch sees the same
/// difficulty proportions, which keeps per-step metrics comparable across
/// the run.
fn stratified_order(suite: &[Task], epoch: u32, seeder: &StreamSeeder) -> Vec<usize> {
    let mut merged: Vec<(u64, u64, usize, usize)> = Vec::with_capacity(suite.len());
    for (stratum, difficulty) in Difficulty::ALL.iter().enumerate() {
        let mut indices: Vec<usize> = suite
            .iter()
            .enumerate()
            .filter(|(_, task)| task.difficulty == *difficulty)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        let mut rng = seeder.stream("batch-order", &[u64::from(epoch), stratum as u64]);
        indices.shuffle(&mut rng);
        let size = indices.len() as u64;
        for (j, task_index) in indices.into_iter().enumerate() {
            merged.push((2 * j as u64 + 1, size, stratum, task_index));
        }
    }
    merged.sort_by(|a, b| {
        (a.0 * b.1)
            .cmp(&(b.0 * a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    merged.into_iter().map(|(_, _, _, i)| i).collect()
}

/// Replaces an all-failure group's rewards with entropy-rank rewards.
fn apply_entropy_rank_rewards(group: &mut Group, selection_ratio: f64, r_max: f64) -> Result<()> {
    let profiles = group
        .members
        .iter()
        .map(|m| serr::profile(&m.record.token_entropies, selection_ratio))
        .collect::<Result<Vec<_>>>()?;
    let scores = serr::dominance_scores(&profiles);
    let rewards = serr::rank_rewards(&scores, r_max)?;
    for (member, reward) in group.members.iter_mut().zip(rewards) {
        member.record.reward = reward;
    }
    Ok(())
}

/// Runs one full training job; deterministic in the config.
pub fn train(config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    let seeder = StreamSeeder::new(config.seed);
    let suite = make_suite(config.seed, &config.suite, &config.env)?;
    let reference = initial_policy(&suite, &config.env, config.seed)?;
    let mut policy = reference.clone();
    let mut buffer = SampleBuffer::new(config.buffer.capacity)?;
    let verifier = ExactMatchVerifier::new(TERMINATOR);
    let reward_spec = config.reward_spec()?;
    let template = config.reflection_template();
    let advantage_params = config.advantage_params();
    let objective_params = config.objective_params();
    let positivity = config.replay.positivity_threshold;
    let r_max = reward_spec.serr_r_max;

    let mut metrics: Vec<StepMetrics> = Vec::new();
    let mut step: u32 = 0;
    {
        let by_uid: BTreeMap<&str, &Task> =
            suite.iter().map(|t| (t.uid.as_str(), t)).collect();

        for epoch in 1..=config.epochs {
            let order = stratified_order(&suite, epoch, &seeder);
            for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
                step += 1;
                let base: Vec<BatchQuery> = chunk
                    .iter()
                    .map(|&i| BatchQuery::new(suite[i].uid.clone(), suite[i].prompt.clone()))
                    .collect();
                let queries = if config.mode == Mode::R3 && config.reflection.enabled {
                    let mut rng =
                        seeder.stream("reflect", &[u64::from(epoch), batch_index as u64]);
                    augment_batch(&base, &buffer, &template, positivity, epoch, &mut rng)?
                } else {
                    base
                };
                let reflection_activations = (queries.len() - chunk.len()) as u32;

                let mut groups: Vec<Group> = Vec::with_capacity(queries.len());
                for (slot, query) in queries.iter().enumerate() {
                    let task = by_uid[query.uid.as_str()];
                    let mut records = Vec::with_capacity(config.group_size);
                    for g in 0..config.group_size {
                        let mut rng = seeder.stream(
                            "rollout",
                            &[
                                u64::from(epoch),
                                batch_index as u64,
                                slot as u64,
                                g as u64,
                            ],
                        );
                        let mut record = rollout(
                            &policy,
                            task,
                            &query.prompt,
                            config.env.max_tokens,
                            &mut rng,
                        )?;
                        record.reward = total_reward(
                            &record.response,
                            &task.gold_answer,
                            &reward_spec,
                            &verifier,
                        );
                        record.epoch = epoch;
                        if query.reflected {
                            record.origin = Origin::Reflection;
                        }
                        records.push(record);
                    }
                    groups.push(Group::from_rollouts(
                        query.uid.clone(),
                        class_of_uid(&query.uid)?,
                        &query.prompt,
                        records,
                        positivity,
                    ));
                }

                // Solve fractions describe the batch's queries: one fresh
                // group per base query, before reflection variants (which
                // would double-count hard queries) and before any repair.
                let base_groups = &groups[..chunk.len()];
                let base_count = base_groups.len() as f64;
                let solve_all_frac = base_groups
                    .iter()
                    .filter(|g| g.classification == GroupClass::AllPositive)
                    .count() as f64
                    / base_count;
                let solve_none_frac = base_groups
                    .iter()
                    .filter(|g| g.classification == GroupClass::AllNegative)
                    .count() as f64
                    / base_count;
                let mut reward_sum = 0.0;
                let mut rollout_count = 0usize;
                let mut entropy_sum = 0.0;
                let mut token_count = 0usize;
                for group in &groups {
                    for member in &group.members {
                        reward_sum += member.record.reward;
                        rollout_count += 1;
                        for &h in &member.record.token_entropies {
                            entropy_sum += h;
                            token_count += 1;
                        }
                    }
                }

                let mut serr_groups = 0u32;
                let mut replay_injections = 0u32;
                let mut starved_groups = 0u32;
                let mut step_gradient = Gradient::new();

                for (slot, group) in groups.iter_mut().enumerate() {
                    match config.mode {
                        Mode::R3 => {
                            if group.classification == GroupClass::AllNegative {
                                apply_entropy_rank_rewards(group, config.serr.p, r_max)?;
                                serr_groups += 1;
                            }
                            if group.classification != GroupClass::Mixed {
                                let base_prompt = &by_uid[group.uid.as_str()].prompt;
                                let mut rng = seeder.stream(
                                    "replay",
                                    &[u64::from(epoch), batch_index as u64, slot as u64],
                                );
                                let outcome = augment(
                                    group,
                                    &buffer,
                                    config.replay.k,
                                    positivity,
                                    base_prompt,
                                    &mut rng,
                                );
                                replay_injections += outcome.injected as u32;
                                if outcome.starved {
                                    starved_groups += 1;
                                }
                            }
                        }
                        Mode::Grpo => {}
                        Mode::Dapo => {
                            if group.classification != GroupClass::Mixed {
                                continue;
                            }
                        }
                    }
                    let rewards = group.rewards();
                    let batch = group_advantages(&rewards, &advantage_params)?;
                    let gradient = objective_gradient(
                        &policy,
                        &reference,
                        group,
                        &batch.advantages,
                        &objective_params,
                    )?;
                    for (key, row) in gradient {
                        let slot_row = step_gradient
                            .entry(key)
                            .or_insert_with(|| alloc::vec![0.0; row.len()]);
                        for (acc, g) in slot_row.iter_mut().zip(&row) {
                            *acc += g;
                        }
                    }
                }

                // Group gradients are summed, not averaged: every group in
                // the bundled environment touches its own parameter rows,
                // so the sum equals applying each group's update in turn
                // and a query's learning speed does not shrink with batch
                // size.
                if !step_gradient.is_empty() {
                    apply_update(&mut policy, &step_gradient, config.opt.lr);
                }

                for group in groups {
                    for member in group.members {
                        if member.on_policy {
                            buffer.insert(member.record)?;
                        }
                    }
                }

                metrics.push(StepMetrics {
                    step,
                    mean_reward: reward_sum / rollout_count as f64,
                    solve_all_frac,
                    solve_none_frac,
                    mean_policy_entropy: entropy_sum / token_count as f64,
                    replay_injections,
                    reflection_activations,
                    serr_groups,
                    starved_groups,
                });
            }
        }
    }

    let final_solve_rates =
        evaluate_solve_rates(&policy, &suite, &config.env, &seeder, EVAL_ROLLOUTS)?;
    Ok(TrainRun {
        policy,
        metrics,
        buffer,
        final_solve_rates,
        tasks: suite,
    })
}

/// Measures per-stratum solve rates of `policy` with fresh rollouts;
/// strata absent from the suite are absent from the result.
pub fn evaluate_solve_rates(
    policy: &TabularPolicy,
    suite: &[Task],
    params: &EnvParams,
    seeder: &StreamSeeder,
    rollouts_per_task: usize,
) -> Result<BTreeMap<Difficulty, f64>> {
    let verifier = ExactMatchVerifier::new(TERMINATOR);
    let mut counts: BTreeMap<Difficulty, (usize, usize)> = BTreeMap::new();
    for (i, task) in suite.iter().enumerate() {
        let mut rng = seeder.stream("eval", &[i as u64]);
        let entry = counts.entry(task.difficulty).or_insert((0, 0));
        for _ in 0..rollouts_per_task {
            let record = rollout(policy, task, &task.prompt, params.max_tokens, &mut rng)?;
            entry.1 += 1;
            if crate::reward::Verifier::verify(&verifier, &record.response, &task.gold_answer) {
                entry.0 += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|(d, (solved, total))| (d, solved as f64 / total as f64))
        .collect())
}

/// One (config, seed) element of a comparison.
#[derive(Debug, Clone)]
pub struct CompareRun {
    pub config_index: usize,
    pub mode: Mode,
    pub seed: u64,
    pub metrics: Vec<StepMetrics>,
    pub final_solve_rates: BTreeMap<Difficulty, f64>,
}

/// Trains every config under every seed and collects trajectories plus
/// final per-stratum solve rates. Runs are ordered config-major.
pub fn compare(configs: &[TrainConfig], seeds: &[u64]) -> Result<Vec<CompareRun>> {
    if configs.len() < 2 {
        return Err(Error::InvalidConfig(
            "compare needs at least two configurations".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(Error::Empty { what: "seeds" });
    }
    let mut runs = Vec::with_capacity(configs.len() * seeds.len());
    for (config_index, config) in configs.iter().enumerate() {
        for &seed in seeds {
            let mut seeded = config.clone();
            seeded.seed = seed;
            let run = train(&seeded)?;
            runs.push(CompareRun {
                config_index,
                mode: config.mode,
                seed,
                metrics: run.metrics,
                final_solve_rates: run.final_solve_rates,
            });
        }
    }
    Ok(runs)
}

/// Median of a sample; even-sized samples average the middle pair.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            group_size: 4,
            batch_size: 4,
            seed: 11,
            suite: SuiteCounts {
                easy: 2,
                medium: 2,
                hard: 2,
                extreme: 2,
            },
            ..TrainConfig::default()
        }
    }

    fn fresh_initial_policy(config: &TrainConfig) -> TabularPolicy {
        let suite = make_suite(config.seed, &config.suite, &config.env).unwrap();
        initial_policy(&suite, &config.env, config.seed).unwrap()
    }

    #[test]
    fn default_config_validates() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_toml_document_is_the_default_config() {
        let config: TrainConfig = toml::from_str("").unwrap();
        assert_eq!(config, TrainConfig::default());
        config.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = small_config();
        c.epochs = 0;
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.group_size = 1;
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.opt.lambda = 0.0;
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.serr.p = 0.0;
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.serr.r_max = Some(0.4);
        c.reward.serr_rmax = Some(0.5);
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.reward.serr_rmax = Some(1.5);
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.reflection.guidance = Some(vec![99]);
        assert!(c.validate().is_err());

        let mut c = small_config();
        c.replay.k = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn aliased_r_max_keys_agreeing_is_fine() {
        let mut c = small_config();
        c.serr.r_max = Some(0.4);
        c.reward.serr_rmax = Some(0.4);
        c.validate().unwrap();
        assert_eq!(c.reward_spec().unwrap().serr_r_max, 0.4);
    }

    #[test]
    fn grpo_and_dapo_standardize_with_unit_alpha() {
        let mut c = small_config();
        c.opt.alpha = 1.5;
        c.mode = Mode::Grpo;
        assert_eq!(c.advantage_params().alpha, 1.0);
        c.mode = Mode::Dapo;
        assert_eq!(c.advantage_params().alpha, 1.0);
        c.mode = Mode::R3;
        assert_eq!(c.advantage_params().alpha, 1.5);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let config = small_config();
        let a = train(&config).unwrap();
        let b = train(&config).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.final_solve_rates, b.final_solve_rates);
        let ra: Vec<_> = a.buffer.records_in_insertion_order();
        let rb: Vec<_> = b.buffer.records_in_insertion_order();
        assert_eq!(ra, rb);
    }

    #[test]
    fn different_seeds_change_the_run() {
        let mut config = small_config();
        let a = train(&config).unwrap();
        config.seed = 12;
        let b = train(&config).unwrap();
        assert_ne!(a.metrics, b.metrics);
    }

    #[test]
    fn reflection_never_activates_in_epoch_one() {
        for mode in [Mode::R3, Mode::Grpo, Mode::Dapo] {
            let mut config = small_config();
            config.mode = mode;
            let run = train(&config).unwrap();
            let first_epoch = steps_per_epoch(&config);
            for m in &run.metrics[..first_epoch] {
                assert_eq!(m.reflection_activations, 0);
            }
        }
    }

    #[test]
    fn baseline_modes_disable_every_mechanism() {
        for mode in [Mode::Grpo, Mode::Dapo] {
            let mut config = small_config();
            config.mode = mode;
            let run = train(&config).unwrap();
            for m in &run.metrics {
                assert_eq!(m.replay_injections, 0);
                assert_eq!(m.serr_groups, 0);
                assert_eq!(m.reflection_activations, 0);
                assert_eq!(m.starved_groups, 0);
            }
        }
    }

    #[test]
    fn r3_exercises_the_mechanisms_on_hard_suites() {
        let run = train(&small_config()).unwrap();
        let total_serr: u32 = run.metrics.iter().map(|m| m.serr_groups).sum();
        assert!(total_serr > 0);
    }

    #[test]
    fn every_on_policy_rollout_lands_in_the_buffer() {
        let config = small_config();
        let run = train(&config).unwrap();
        let per_step_base = [4usize, 4, 4, 4];
        let mut expected = 0usize;
        for (m, base) in run.metrics.iter().zip(per_step_base.iter().cycle()) {
            expected += (base + m.reflection_activations as usize) * config.group_size;
        }
        assert_eq!(run.buffer.len(), expected);
        for record in run.buffer.records_in_insertion_order() {
            assert_ne!(record.origin, Origin::Replayed);
        }
    }

    #[test]
    fn solve_fractions_stay_in_range() {
        for mode in [Mode::R3, Mode::Grpo, Mode::Dapo] {
            let mut config = small_config();
            config.mode = mode;
            let run = train(&config).unwrap();
            for m in &run.metrics {
                assert!((0.0..=1.0).contains(&m.solve_all_frac));
                assert!((0.0..=1.0).contains(&m.solve_none_frac));
                assert!(m.solve_all_frac + m.solve_none_frac <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn collapsed_suite_freezes_baselines_but_not_r3() {
        // A suite of only extreme tasks never produces a verified success
        // or a mixed group: baselines see zero advantages everywhere
        // (grpo) or drop every group (dapo) and the policy never moves,
        // while entropy-rank rewards give the full method signal anyway.
        let mut config = small_config();
        config.suite = SuiteCounts {
            easy: 0,
            medium: 0,
            hard: 0,
            extreme: 4,
        };
        config.batch_size = 4;
        let initial = fresh_initial_policy(&config);

        config.mode = Mode::Grpo;
        let grpo = train(&config).unwrap();
        assert_eq!(grpo.policy, initial);

        config.mode = Mode::Dapo;
        let dapo = train(&config).unwrap();
        assert_eq!(dapo.policy, initial);

        config.mode = Mode::R3;
        let r3 = train(&config).unwrap();
        assert_ne!(r3.policy, initial);
        assert!(r3.metrics.iter().all(|m| m.solve_none_frac == 1.0));
        // Reflection variants of hard queries form extra all-negative groups.
        assert!(r3
            .metrics
            .iter()
            .all(|m| m.serr_groups == 4 + m.reflection_activations));
        // No success ever lands in the buffer, so replay starves.
        assert!(r3
            .metrics
            .iter()
            .all(|m| m.starved_groups == m.serr_groups));
        assert!(r3.metrics.iter().all(|m| m.replay_injections == 0));
        let activated: u32 = r3.metrics.iter().map(|m| m.reflection_activations).sum();
        assert!(activated > 0);
    }

    #[test]
    fn stratified_order_keeps_batches_mixed() {
        let config = small_config();
        let suite = make_suite(config.seed, &config.suite, &config.env).unwrap();
        let seeder = StreamSeeder::new(config.seed);
        for epoch in 1..=3 {
            let order = stratified_order(&suite, epoch, &seeder);
            assert_eq!(order.len(), 8);
            let mut seen: Vec<usize> = order.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..8).collect::<Vec<_>>());
            for chunk in order.chunks(4) {
                for difficulty in Difficulty::ALL {
                    let hits = chunk
                        .iter()
                        .filter(|&&i| suite[i].difficulty == difficulty)
                        .count();
                    assert_eq!(hits, 1);
                }
            }
        }
    }

    #[test]
    fn final_solve_rates_cover_present_strata() {
        let run = train(&small_config()).unwrap();
        for difficulty in Difficulty::ALL {
            let rate = run.final_solve_rates[&difficulty];
            assert!((0.0..=1.0).contains(&rate));
        }
        assert!(run.final_solve_rates[&Difficulty::Easy] > 0.2);
        assert_eq!(run.final_solve_rates[&Difficulty::Extreme], 0.0);
    }

    #[test]
    fn compare_runs_config_major_with_every_seed() {
        let mut grpo = small_config();
        grpo.mode = Mode::Grpo;
        let runs = compare(&[small_config(), grpo], &[3, 4]).unwrap();
        assert_eq!(runs.len(), 4);
        let shape: Vec<(usize, Mode, u64)> = runs
            .iter()
            .map(|r| (r.config_index, r.mode, r.seed))
            .collect();
        assert_eq!(
            shape,
            vec![
                (0, Mode::R3, 3),
                (0, Mode::R3, 4),
                (1, Mode::Grpo, 3),
                (1, Mode::Grpo, 4),
            ]
        );
    }

    #[test]
    fn compare_rejects_single_config_or_no_seeds() {
        assert!(compare(&[small_config()], &[1]).is_err());
        let mut grpo = small_config();
        grpo.mode = Mode::Grpo;
        assert!(compare(&[small_config(), grpo], &[]).is_err());
    }

    #[test]
    fn median_handles_odd_and_even_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in [Mode::R3, Mode::Grpo, Mode::Dapo] {
            let json = alloc::format!("\"{}\"", mode.as_str());
            let parsed: Mode = serde_json::from_str(&json).unwrap();
            assert_eq!(parsed, mode);
        }
    }
}
