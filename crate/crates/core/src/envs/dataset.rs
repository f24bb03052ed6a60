//! Offline dataset generation for the random / medium / medium-replay
//! tiers.
//!
//! * random: uniform-random behavior.
//! * medium: epsilon-greedy (0.3) around the value-iteration-optimal policy
//!   for the first m steps of each episode, uniform afterwards; m is
//!   calibrated so the dataset's mean episode return lands near half the
//!   optimal return.
//! * medium-replay: the complete log of a tabular Q-learning agent trained
//!   from scratch until it reaches the medium level.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{optimal_return, value_iteration_q, DatasetTier, Env};
use crate::buffer::ReplayBuffer;
use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::tabular::QTable;

const MEDIUM_EPSILON: f64 = 0.3;
const MEDIUM_TARGET_FRACTION: f64 = 0.5;
const CALIBRATION_EPISODES: usize = 400;

/// Returns recorded while generating a dataset.
#[derive(Debug, Clone)]
pub struct DatasetStats {
    /// Undiscounted return of every episode, in order.
    pub episode_returns: Vec<f64>,
    /// Length of every episode.
    pub episode_lengths: Vec<usize>,
    /// Whether each episode ended with a terminal transition (as opposed to
    /// the horizon, or the dataset size cap for the final one).
    pub episode_dones: Vec<bool>,
    /// Exact optimal episodic return of the env (for normalization).
    pub optimal_return: f64,
}

impl DatasetStats {
    pub fn mean_return(&self) -> f64 {
        if self.episode_returns.is_empty() {
            return 0.0;
        }
        self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64
    }

    fn close_episode(&mut self, ep_return: f64, length: usize, done: bool) {
        self.episode_returns.push(ep_return);
        self.episode_lengths.push(length);
        self.episode_dones.push(done);
    }
}

/// Generates exactly `size` transitions of the given tier,
/// deterministically in `seed`.
pub fn generate_offline_dataset(
    env: &dyn Env,
    tier: DatasetTier,
    size: usize,
    seed: u64,
) -> Result<ReplayBuffer> {
    generate_offline_dataset_with_stats(env, tier, size, seed).map(|(buffer, _)| buffer)
}

pub fn generate_offline_dataset_with_stats(
    env: &dyn Env,
    tier: DatasetTier,
    size: usize,
    seed: u64,
) -> Result<(ReplayBuffer, DatasetStats)> {
    let mut rng = stream_rng(seed, Stream::Data);
    match tier {
        DatasetTier::Random => {
            let na = env.num_actions();
            collect(env, size, &mut rng, |_, _, rng| rng.random_range(0..na))
        }
        DatasetTier::Medium => {
            let q_star = value_iteration_q(env, 0.99, 1e-10, 1_000_000)?;
            let horizon = calibrate_medium_horizon(env, &q_star, seed);
            let na = env.num_actions();
            collect(env, size, &mut rng, |step, s, rng| {
                medium_action(&q_star, na, horizon, step, s, rng)
            })
        }
        DatasetTier::MediumReplay => replay_log(env, size, seed, &mut rng),
    }
}

fn medium_action(
    q_star: &QTable,
    num_actions: usize,
    horizon: usize,
    step: usize,
    state: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    if step < horizon && rng.random::<f64>() >= MEDIUM_EPSILON {
        q_star.greedy_action(state)
    } else {
        rng.random_range(0..num_actions)
    }
}

/// Picks the truncation horizon m whose behavior policy's mean return is
/// closest to half the optimal return.
fn calibrate_medium_horizon(env: &dyn Env, q_star: &QTable, seed: u64) -> usize {
    let target = MEDIUM_TARGET_FRACTION * optimal_return(env);
    let na = env.num_actions();
    let mut best = (0usize, f64::INFINITY);
    for m in 0..=env.max_episode_steps() {
        let mut behavior_rng = stream_rng(seed ^ 0xca11_b8a7, Stream::Data);
        let mut env_rng = stream_rng(seed ^ 0x00ca_11b8_a7e0, Stream::Data);
        let mean = super::mc_return(
            env,
            |step, s| medium_action(q_star, na, m, step, s, &mut behavior_rng),
            CALIBRATION_EPISODES,
            &mut env_rng,
        );
        let gap = (mean - target).abs();
        if gap < best.1 {
            best = (m, gap);
        }
    }
    best.0
}

/// Runs episodes under `behavior`, pushing transitions until `size` is
/// reached. The final episode may be cut short by the size limit.
fn collect(
    env: &dyn Env,
    size: usize,
    rng: &mut ChaCha8Rng,
    mut behavior: impl FnMut(usize, usize, &mut ChaCha8Rng) -> usize,
) -> Result<(ReplayBuffer, DatasetStats)> {
    let mut buffer = ReplayBuffer::new(env.num_states(), env.num_actions(), size.max(1))?;
    let mut stats = DatasetStats {
        episode_returns: Vec::new(),
        episode_lengths: Vec::new(),
        episode_dones: Vec::new(),
        optimal_return: optimal_return(env),
    };
    'outer: loop {
        let mut s = env.reset(rng);
        let mut ep_return = 0.0;
        let mut ep_len = 0;
        let mut ep_done = false;
        for step in 0..env.max_episode_steps() {
            let a = behavior(step, s, rng);
            let t = env.step(s, a, rng);
            buffer.push(t)?;
            ep_return += t.reward;
            ep_len += 1;
            ep_done = t.done;
            if buffer.len() == size {
                stats.close_episode(ep_return, ep_len, ep_done);
                break 'outer;
            }
            if t.done {
                break;
            }
            s = t.next_state as usize;
        }
        stats.close_episode(ep_return, ep_len, ep_done);
    }
    Ok((buffer, stats))
}

/// Q-learning from scratch, logging every transition, until the running
/// mean return reaches the medium level; keeps collecting under the reached
/// policy until `size` transitions are logged.
fn replay_log(
    env: &dyn Env,
    size: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(ReplayBuffer, DatasetStats)> {
    let target = MEDIUM_TARGET_FRACTION * optimal_return(env);
    let (ns, na) = (env.num_states(), env.num_actions());
    let mut q = QTable::zeros(ns, na);
    let mut buffer = ReplayBuffer::new(ns, na, size.max(1))?;
    let mut stats = DatasetStats {
        episode_returns: Vec::new(),
        episode_lengths: Vec::new(),
        episode_dones: Vec::new(),
        optimal_return: optimal_return(env),
    };
    let mut epsilon = 1.0;
    let mut learning = true;
    let _ = seed;

    let (lr, gamma) = (0.2, 0.99);
    'outer: loop {
        let mut s = env.reset(rng);
        let mut ep_return = 0.0;
        let mut ep_len = 0;
        let mut ep_done = false;
        for _ in 0..env.max_episode_steps() {
            let a = if rng.random::<f64>() < epsilon {
                rng.random_range(0..na)
            } else {
                q.greedy_action(s)
            };
            let t = env.step(s, a, rng);
            buffer.push(t)?;
            ep_return += t.reward;
            ep_len += 1;
            ep_done = t.done;
            if learning {
                let bootstrap = if t.done {
                    0.0
                } else {
                    gamma * q.max_value(t.next_state as usize)
                };
                let updated = q.get(s, a) + lr * (t.reward + bootstrap - q.get(s, a));
                q.set(s, a, updated);
            }
            if buffer.len() == size {
                stats.close_episode(ep_return, ep_len, ep_done);
                break 'outer;
            }
            if t.done {
                break;
            }
            s = t.next_state as usize;
        }
        stats.close_episode(ep_return, ep_len, ep_done);
        if learning {
            epsilon = (epsilon * 0.995).max(0.05);
            let window = 30.min(stats.episode_returns.len());
            let recent: f64 = stats.episode_returns[stats.episode_returns.len() - window..]
                .iter()
                .sum::<f64>()
                / window as f64;
            if stats.episode_returns.len() >= window && recent >= target {
                // Medium level reached: freeze learning, keep logging.
                learning = false;
            }
        }
    }
    Ok((buffer, stats))
}
