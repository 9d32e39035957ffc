//! Synthetic verifiable sequence tasks with controllable difficulty.
//!
//! Each task is "emit this gold token sequence, then the terminator".
//! Difficulty is implemented purely through the initial policy's logits:
//!
//! * easy and medium tasks bias the gold path so their initial per-rollout
//!   solve probabilities sit near 0.78 and 0.27;
//! * hard tasks keep the gold path below a 1% initial solve probability,
//!   so whole groups fail together until something rescues them;
//! * extreme tasks have gold answers longer than the generation limit and
//!   a suppressed terminator, forcing truncation on every rollout.
//!
//! Every remaining logit gets small seeded noise, which gives trajectories
//! varied token-entropy profiles instead of one flat value per class.
//!
//! Token layout (vocabulary size `V`): terminator 0, answer tokens
//! `1..=V-5`, prompt tokens `V-4..=V-3`, guidance tokens `V-2..=V-1`.
//! Gold answers use answer tokens only, so a response containing prompt or
//! guidance tokens simply fails verification; nothing becomes ambiguous.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{Origin, SampleRecord};
use crate::error::{Error, Result};
use crate::policy::{log_sum_exp, ContextKey, TabularPolicy, Token};
use crate::rng::StreamSeeder;

/// Reserved answer-terminator token.
pub const TERMINATOR: Token = 0;

/// Full-window noise rows are materialized only while the table stays small.
const MAX_MATERIALIZED_WINDOWS: usize = 1024;

/// Uniform logit noise amplitude for non-gold tokens.
const NOISE_AMPLITUDE: f64 = 1.2;

/// Logit pinning extreme-task terminators to effectively zero probability.
const SUPPRESSED_LOGIT: f64 = -30.0;

/// Gold answer length per difficulty (extreme adds to the generation limit).
const EASY_GOLD_LEN: usize = 2;
const MEDIUM_GOLD_LEN: usize = 3;
const HARD_GOLD_LEN: usize = 3;
const EXTREME_EXTRA_LEN: usize = 4;

/// Per-step gold probabilities installed on the gold path. The initial
/// per-rollout solve probability is the per-step value raised to the
/// (gold length + 1) power, the +1 covering the terminator step:
/// easy 0.92^3 ~ 0.78, medium 0.72^4 ~ 0.27, hard 0.266^4 ~ 0.005.
const EASY_STEP_P: f64 = 0.92;
const MEDIUM_STEP_P: f64 = 0.72;
const HARD_STEP_P: f64 = 0.266;

/// Task difficulty stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extreme,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Medium,
        Difficulty::Hard,
        Difficulty::Extreme,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extreme => "extreme",
        }
    }
}

/// One verifiable task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// Query identifier; encodes the class index used for policy contexts.
    pub uid: String,
    pub prompt: Vec<Token>,
    #[serde(rename = "gold")]
    pub gold_answer: Vec<Token>,
    pub difficulty: Difficulty,
}

/// Environment dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    pub vocab_size: usize,
    pub context_order: usize,
    /// Generation limit `T_max`: rollouts stop after this many tokens.
    #[serde(alias = "t_max")]
    pub max_tokens: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            context_order: 2,
            max_tokens: 32,
        }
    }
}

impl EnvParams {
    /// Suite generation needs room for the reserved token ranges and for
    /// non-extreme gold paths to finish inside the generation limit.
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 8 {
            return Err(Error::InvalidConfig(alloc::format!(
                "vocab_size must be at least 8 for task suites, got {}",
                self.vocab_size
            )));
        }
        if self.context_order == 0 {
            return Err(Error::InvalidConfig(
                "context_order must be at least 1".into(),
            ));
        }
        if self.max_tokens < HARD_GOLD_LEN + 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "max_tokens must be at least {}, got {}",
                HARD_GOLD_LEN + 1,
                self.max_tokens
            )));
        }
        Ok(())
    }

    /// Largest answer token (answer tokens are `1..=this`).
    pub fn answer_token_max(&self) -> Token {
        (self.vocab_size - 5) as Token
    }

    /// The two prompt tokens.
    pub fn prompt_tokens(&self) -> [Token; 2] {
        [(self.vocab_size - 4) as Token, (self.vocab_size - 3) as Token]
    }

    /// The two guidance tokens reserved for reflection prompts.
    pub fn guidance_tokens(&self) -> [Token; 2] {
        [(self.vocab_size - 2) as Token, (self.vocab_size - 1) as Token]
    }
}

/// Number of tasks per difficulty stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteCounts {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
    pub extreme: usize,
}

impl Default for SuiteCounts {
    fn default() -> Self {
        Self {
            easy: 16,
            medium: 16,
            hard: 16,
            extreme: 16,
        }
    }
}

impl SuiteCounts {
    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard + self.extreme
    }
}

/// Parses the class index out of a query UID such as `"q17"`.
pub fn class_of_uid(uid: &str) -> Result<u32> {
    let start = uid
        .find(|c: char| c.is_ascii_digit())
        .ok_or_else(|| Error::MalformedUid(uid.into()))?;
    uid[start..]
        .parse::<u32>()
        .map_err(|_| Error::MalformedUid(uid.into()))
}

/// Builds a deterministic task suite: `counts.easy` easy tasks first, then
/// medium, hard, and extreme, with UIDs `q0, q1, ...` in that order.
pub fn make_suite(seed: u64, counts: &SuiteCounts, params: &EnvParams) -> Result<Vec<Task>> {
    params.validate()?;
    if counts.total() == 0 {
        return Err(Error::Empty { what: "task suite" });
    }
    let seeder = StreamSeeder::new(seed);
    let blocks = [
        (Difficulty::Easy, counts.easy),
        (Difficulty::Medium, counts.medium),
        (Difficulty::Hard, counts.hard),
        (Difficulty::Extreme, counts.extreme),
    ];
    let mut suite = Vec::with_capacity(counts.total());
    let mut class: u32 = 0;
    for (difficulty, count) in blocks {
        for _ in 0..count {
            let mut rng = seeder.stream("suite", &[u64::from(class)]);
            suite.push(generate_task(class, difficulty, params, &mut rng));
            class += 1;
        }
    }
    Ok(suite)
}

fn generate_task<R: Rng + ?Sized>(
    class: u32,
    difficulty: Difficulty,
    params: &EnvParams,
    rng: &mut R,
) -> Task {
    let [p0, p1] = params.prompt_tokens();
    let prompt: Vec<Token> = (0..params.context_order)
        .map(|_| if rng.random::<bool>() { p0 } else { p1 })
        .collect();
    let answer_max = params.answer_token_max();
    let gold_answer = match difficulty {
        // Distinct answer tokens keep every gold-path context window unique,
        // so the exact per-step probabilities installed below never collide.
        Difficulty::Easy => distinct_answer_tokens(EASY_GOLD_LEN, answer_max, rng),
        Difficulty::Medium => distinct_answer_tokens(MEDIUM_GOLD_LEN, answer_max, rng),
        Difficulty::Hard => distinct_answer_tokens(HARD_GOLD_LEN, answer_max, rng),
        Difficulty::Extreme => (0..params.max_tokens + EXTREME_EXTRA_LEN)
            .map(|_| rng.random_range(1..=answer_max))
            .collect(),
    };
    Task {
        uid: alloc::format!("q{class}"),
        prompt,
        gold_answer,
        difficulty,
    }
}

fn distinct_answer_tokens<R: Rng + ?Sized>(len: usize, answer_max: Token, rng: &mut R) -> Vec<Token> {
    let pool = answer_max as usize;
    debug_assert!(len <= pool, "gold length exceeds answer token pool");
    rand::seq::index::sample(rng, pool, len)
        .into_iter()
        .map(|i| (i + 1) as Token)
        .collect()
}

/// Builds the initial policy for a suite.
///
/// Every context window over the vocabulary gets a seeded noise row (while
/// the table stays small), each class gets a noise fallback row, and each
/// non-extreme task's gold path gets its exact per-step probability
/// installed on top of the noise. Extreme classes additionally pin the
/// terminator logit low everywhere, so their rollouts always truncate.
pub fn initial_policy(suite: &[Task], params: &EnvParams, seed: u64) -> Result<TabularPolicy> {
    params.validate()?;
    let mut policy = TabularPolicy::new(params.vocab_size, params.context_order)?;
    let seeder = StreamSeeder::new(seed);
    let v = params.vocab_size;
    let window_count = v.checked_pow(params.context_order as u32);
    let materialize_all = window_count.is_some_and(|n| n <= MAX_MATERIALIZED_WINDOWS);

    for task in suite {
        let class = class_of_uid(&task.uid)?;
        let extreme = task.difficulty == Difficulty::Extreme;
        let mut rng = seeder.stream("policy-init", &[u64::from(class)]);

        if materialize_all {
            let mut window = alloc::vec![0 as Token; params.context_order];
            loop {
                let key = ContextKey {
                    class,
                    window: window.clone(),
                };
                policy.set_logits(key, noise_row(v, extreme, &mut rng))?;
                if !next_window(&mut window, v) {
                    break;
                }
            }
        }
        policy.set_class_default(class, noise_row(v, extreme, &mut rng))?;

        if !extreme {
            let step_p = match task.difficulty {
                Difficulty::Easy => EASY_STEP_P,
                Difficulty::Medium => MEDIUM_STEP_P,
                Difficulty::Hard => HARD_STEP_P,
                Difficulty::Extreme => unreachable!(),
            };
            install_gold_path(&mut policy, class, task, step_p)?;
        }
    }
    Ok(policy)
}

fn noise_row<R: Rng + ?Sized>(vocab: usize, extreme: bool, rng: &mut R) -> Vec<f64> {
    (0..vocab)
        .map(|token| {
            if extreme && token as Token == TERMINATOR {
                SUPPRESSED_LOGIT
            } else {
                (rng.random::<f64>() * 2.0 - 1.0) * NOISE_AMPLITUDE
            }
        })
        .collect()
}

/// Lexicographic successor of a window over `0..vocab`; false when wrapped.
fn next_window(window: &mut [Token], vocab: usize) -> bool {
    for slot in window.iter_mut().rev() {
        if (*slot as usize) + 1 < vocab {
            *slot += 1;
            return true;
        }
        *slot = 0;
    }
    false
}

/// Sets the gold continuation's logit at each gold-path context so its
/// probability equals `step_p` exactly: `z_g = logit(step_p) + lse(rest)`.
fn install_gold_path(
    policy: &mut TabularPolicy,
    class: u32,
    task: &Task,
    step_p: f64,
) -> Result<()> {
    let steps = task.gold_answer.len() + 1;
    for t in 0..steps {
        let key = policy.context_key(class, &task.prompt, &task.gold_answer[..t.min(task.gold_answer.len())]);
        let next = if t < task.gold_answer.len() {
            task.gold_answer[t]
        } else {
            TERMINATOR
        };
        let mut row = policy.effective_logits(&key).to_vec();
        let rest: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != next as usize)
            .map(|(_, &z)| z)
            .collect();
        row[next as usize] = libm::log(step_p / (1.0 - step_p)) + log_sum_exp(&rest);
        policy.set_logits(key, row)?;
    }
    Ok(())
}

/// Samples one trajectory for `task` from `policy`, generating from
/// `prompt` (the task's own prompt, or a reflection-augmented variant).
///
/// Generation stops at the terminator token or after `max_tokens` tokens,
/// whichever comes first; hitting the limit marks the record truncated.
/// The returned record carries exact behavior log-probabilities and exact
/// sampling-distribution entropies; reward and epoch are left for the
/// caller to fill in.
pub fn rollout<R: Rng + ?Sized>(
    policy: &TabularPolicy,
    task: &Task,
    prompt: &[Token],
    max_tokens: usize,
    rng: &mut R,
) -> Result<SampleRecord> {
    debug_assert!(max_tokens >= 1);
    let class = class_of_uid(&task.uid)?;
    let mut response: Vec<Token> = Vec::new();
    let mut behavior_logprobs: Vec<f64> = Vec::new();
    let mut token_entropies: Vec<f64> = Vec::new();
    let mut truncated = true;
    while response.len() < max_tokens {
        let key = policy.context_key(class, prompt, &response);
        let (token, logprob, entropy) = policy.sample(&key, rng);
        response.push(token);
        behavior_logprobs.push(logprob);
        token_entropies.push(entropy);
        if token == TERMINATOR {
            truncated = false;
            break;
        }
    }
    Ok(SampleRecord {
        uid: task.uid.clone(),
        response,
        behavior_logprobs,
        token_entropies,
        reward: 0.0,
        truncated,
        epoch: 0,
        origin: Origin::OnPolicy,
    })
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
