//! The shipped benchmark suite: two maze variants and one corridor, each at
//! two dataset tiers, with per-task controller settings (the switch rate,
//! explore duration and consultation period are tuned per task, as are the
//! learner's pessimism knobs for sparse versus dense rewards).

use crate::checkpoint::Checkpoint;
use crate::controllers::{ControllerConfig, OffValueMode};
use crate::envs::{
    generate_offline_dataset, optimal_return, parse_env, random_return, DatasetTier,
};
use crate::error::Result;
use crate::learner::{offline_pretrain, LearnerConfig};
use crate::rng::{stream_rng, Stream};

pub const UMAZE_ENV: &str = include_str!("../../../benchmarks/umaze.env");
pub const UMAZE_DIVERSE_ENV: &str = include_str!("../../../benchmarks/umaze_diverse.env");
pub const MEDMAZE_DIVERSE_ENV: &str = include_str!("../../../benchmarks/medmaze_diverse.env");
pub const CORRIDOR_ENV: &str = include_str!("../../../benchmarks/corridor.env");

/// Desk-scale experiment defaults.
pub const OFFLINE_ITERS: u64 = 200_000;
pub const ONLINE_STEPS: u64 = 50_000;
pub const EVAL_INTERVAL: u64 = 500;
pub const EVAL_EPISODES: u32 = 20;
pub const INITIAL_COLLECTION_STEPS: u64 = 500;
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Seed for dataset generation and pre-training.
pub const PRETRAIN_SEED: u64 = 0;

#[derive(Debug, Clone)]
pub struct BenchmarkTask {
    pub name: &'static str,
    pub env_text: &'static str,
    pub tier: DatasetTier,
    pub dataset_size: usize,
    pub offline_iters: u64,
    pub learner: LearnerConfig,
    pub controller_cfg: ControllerConfig,
    pub is_maze: bool,
}

fn maze_learner() -> LearnerConfig {
    LearnerConfig {
        expectile_tau: 0.9,
        inv_temperature: 10.0,
        learning_rate: 0.1,
        batch_size: 256,
        discount: 0.99,
        target_update_speed: 5e-3,
    }
}

fn corridor_learner() -> LearnerConfig {
    LearnerConfig {
        expectile_tau: 0.7,
        inv_temperature: 3.0,
        learning_rate: 0.1,
        batch_size: 256,
        discount: 0.99,
        target_update_speed: 5e-3,
    }
}

fn maze_controller() -> ControllerConfig {
    ControllerConfig {
        rho: 0.9,
        explore_fixed_steps: 300,
        update_timestep: 2,
        promise_k: 3,
        gamma: 0.99,
        pex_alpha: 0.1,
        off_value: OffValueMode::GreedyQ,
    }
}

fn corridor_controller() -> ControllerConfig {
    ControllerConfig {
        rho: 0.9,
        explore_fixed_steps: 300,
        update_timestep: 2,
        promise_k: 3,
        gamma: 0.99,
        pex_alpha: 0.1,
        off_value: OffValueMode::GreedyQ,
    }
}

/// The six tasks of the shipped suite.
pub fn benchmark_suite() -> Vec<BenchmarkTask> {
    vec![
        BenchmarkTask {
            name: "umaze-diverse-random",
            env_text: UMAZE_DIVERSE_ENV,
            tier: DatasetTier::Random,
            dataset_size: 2_000,
            offline_iters: OFFLINE_ITERS,
            learner: maze_learner(),
            controller_cfg: maze_controller(),
            is_maze: true,
        },
        BenchmarkTask {
            name: "umaze-diverse-medium",
            env_text: UMAZE_DIVERSE_ENV,
            tier: DatasetTier::Medium,
            dataset_size: 500,
            offline_iters: OFFLINE_ITERS,
            learner: maze_learner(),
            controller_cfg: maze_controller(),
            is_maze: true,
        },
        BenchmarkTask {
            name: "medmaze-diverse-random",
            env_text: MEDMAZE_DIVERSE_ENV,
            tier: DatasetTier::Random,
            dataset_size: 3_000,
            offline_iters: OFFLINE_ITERS,
            learner: maze_learner(),
            controller_cfg: maze_controller(),
            is_maze: true,
        },
        BenchmarkTask {
            name: "medmaze-diverse-medium",
            env_text: MEDMAZE_DIVERSE_ENV,
            tier: DatasetTier::Medium,
            dataset_size: 1_500,
            offline_iters: OFFLINE_ITERS,
            learner: maze_learner(),
            controller_cfg: maze_controller(),
            is_maze: true,
        },
        BenchmarkTask {
            name: "corridor-random",
            env_text: CORRIDOR_ENV,
            tier: DatasetTier::Random,
            dataset_size: 5_000,
            offline_iters: OFFLINE_ITERS,
            learner: corridor_learner(),
            controller_cfg: corridor_controller(),
            is_maze: false,
        },
        BenchmarkTask {
            name: "corridor-medium",
            env_text: CORRIDOR_ENV,
            tier: DatasetTier::Medium,
            dataset_size: 5_000,
            offline_iters: OFFLINE_ITERS,
            learner: corridor_learner(),
            controller_cfg: corridor_controller(),
            is_maze: false,
        },
    ]
}

/// Pretrains one task into a ready checkpoint.
pub fn pretrain_task(task: &BenchmarkTask) -> Result<Checkpoint> {
    let env = parse_env(task.env_text)?;
    let dataset =
        generate_offline_dataset(env.as_ref(), task.tier, task.dataset_size, PRETRAIN_SEED)?;
    let mut rng = stream_rng(PRETRAIN_SEED, Stream::Sampler);
    let artifacts = offline_pretrain(&dataset, &task.learner, task.offline_iters, &mut rng)?;
    Checkpoint::new(
        task.env_text.to_string(),
        task.tier,
        task.learner,
        task.offline_iters,
        PRETRAIN_SEED,
        artifacts,
        dataset,
        random_return(env.as_ref(), PRETRAIN_SEED),
        optimal_return(env.as_ref()),
    )
}
