//! Group-relative reinforcement learning for verifiable tasks, with three
//! mechanisms layered on a shared replay buffer:
//!
//! * **Cross-context replay** rebalances collapsed groups (all failures or
//!   all successes) by injecting stored trajectories of the opposite sign,
//!   restoring reward variance so advantages carry signal again.
//! * **Self-reflection** detects persistently hard queries from buffered
//!   reward history and rolls out extra attempts on prompts augmented with
//!   a past failure plus guidance tokens.
//! * **Entropy-rank rewards** score all-failure groups by the structure of
//!   their per-token entropy profiles (peaked exploration over diffuse
//!   noise), converting zero-signal groups into dense preference signal.
//!
//! The optimization core is a clipped-surrogate policy gradient with
//! group-standardized advantages and an exact per-token KL penalty against
//! a frozen reference policy. The bundled policy is tabular-softmax over
//! truncated context windows, so every probability, entropy, and gradient
//! in the system is exactly computable and every training run is
//! bit-reproducible from its seed.
//!
//! This crate is `no_std + alloc`; file formats, the CLI, and run
//! orchestration helpers live in the companion `r3-cli` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod buffer;
pub mod env;
pub mod error;
pub mod optimizer;
pub mod policy;
pub mod reflection;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod serr;
pub mod train;

pub use buffer::{Origin, SampleBuffer, SampleRecord};
pub use env::{Difficulty, EnvParams, SuiteCounts, Task};
pub use error::{Error, Result};
pub use optimizer::{
    apply_update, group_advantages, gradient_l1, objective_gradient, surrogate_objective,
    AdvantageBatch, AdvantageParams, Gradient, ObjectiveParams, StdMode,
};
pub use policy::{ContextKey, PolicySnapshot, TabularPolicy, Token};
pub use reflection::{BatchQuery, ReflectionTemplate};
pub use replay::{AugmentOutcome, Group, GroupClass, GroupMember};
pub use reward::{ExactMatchVerifier, RewardSpec, Verifier};
pub use rng::StreamSeeder;
pub use serr::EntropyProfile;
pub use train::{
    compare, evaluate_solve_rates, median, steps_per_epoch, train, CompareRun, Mode, StepMetrics,
    TrainConfig, TrainRun, EVAL_ROLLOUTS,
};
