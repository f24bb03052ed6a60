//! Offline-to-online reinforcement learning with a mode-switching
//! exploration controller, at desk scale.
//!
//! A frozen offline policy exploits; a learnable online policy explores;
//! a Homeostasis trigger on the offline critic's value-promise discrepancy
//! decides when to hand control over, in contiguous fixed-length blocks.
//! The crate ships that controller alongside the policy-expansion,
//! offline-only and buffer-only baselines, tabular expectile-TD learners,
//! synthetic maze/corridor tasks with offline dataset generators, and an
//! experiment harness that emits normalized-return and execution-count
//! metrics as CSV/JSON/SVG.

pub mod benchmarks;
pub mod buffer;
pub mod checkpoint;
pub mod controllers;
pub mod envs;
pub mod error;
pub mod harness;
pub mod homeo;
pub mod learner;
pub mod rng;
pub mod tabular;

pub use buffer::{ReplayBuffer, Transition, UnionBuffer};
pub use checkpoint::Checkpoint;
pub use controllers::{
    Acted, ControllerConfig, ControllerKind, ExecutionCounters, Mode, NonMonoController,
    PexController,
};
pub use envs::{DatasetTier, Env};
pub use error::{Error, Result};
pub use harness::{ExperimentSpec, MetricsRow};
pub use homeo::{HomeoState, PromiseWindow};
pub use learner::{LearnerConfig, OfflineArtifacts, OnlineLearner};
pub use tabular::{Policy, PolicySet, QTable, ValueTable};

/// Environment variable that shifts every seed of a CLI invocation, for
/// sharded CI runs.
pub const SEED_OFFSET_ENV: &str = "SWITCHRL_SEED_OFFSET";
