//! Synthetic tasks: a sparse-reward grid maze and a dense-reward corridor,
//! with offline-dataset generators for the random / medium / medium-replay
//! tiers and exact planning oracles.

mod corridor;
mod dataset;
mod grid;
mod oracle;

use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::buffer::Transition;
use crate::error::{Error, Result};

pub use corridor::Corridor;
pub use dataset::{generate_offline_dataset, generate_offline_dataset_with_stats, DatasetStats};
pub use grid::GridMaze;
pub use oracle::{
    finite_horizon_table, mc_return, optimal_discounted_return, optimal_return, random_return,
    value_iteration_q, RANDOM_RETURN_EPISODES,
};

/// One stochastic outcome of an action: (probability, reward, next state,
/// episode done).
pub type Outcome = (f64, f64, usize, bool);

/// A finite MDP with exact dynamics.
///
/// Environments are immutable specifications; per-episode simulation state
/// (the current state id, the step counter) is owned by the caller.
pub trait Env {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn max_episode_steps(&self) -> usize;

    /// Draws an initial state.
    fn reset(&self, rng: &mut ChaCha8Rng) -> usize;

    /// Initial state distribution, for planning oracles.
    fn start_distribution(&self) -> Vec<(f64, usize)>;

    /// Exact outcome distribution of (state, action).
    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome>;

    /// The declarative text this environment was parsed from.
    fn descriptor(&self) -> &str;

    /// Executes one step, sampling stochastic dynamics from `rng`.
    fn step(&self, state: usize, action: usize, rng: &mut ChaCha8Rng) -> Transition {
        let outcomes = self.outcomes(state, action);
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        let mut chosen = outcomes.last().copied().expect("non-empty outcomes");
        for o in &outcomes {
            acc += o.0;
            if u < acc {
                chosen = *o;
                break;
            }
        }
        let (_, reward, next_state, done) = chosen;
        Transition {
            state: state as u32,
            action: action as u32,
            reward,
            next_state: next_state as u32,
            done,
        }
    }
}

/// Offline dataset quality levels, mirroring the benchmark naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetTier {
    Random,
    Medium,
    MediumReplay,
}

impl DatasetTier {
    pub const ALL: [DatasetTier; 3] = [
        DatasetTier::Random,
        DatasetTier::Medium,
        DatasetTier::MediumReplay,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            DatasetTier::Random => "random",
            DatasetTier::Medium => "medium",
            DatasetTier::MediumReplay => "medium-replay",
        }
    }
}

impl std::fmt::Display for DatasetTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DatasetTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(DatasetTier::Random),
            "medium" => Ok(DatasetTier::Medium),
            "medium-replay" | "medium_replay" => Ok(DatasetTier::MediumReplay),
            other => Err(Error::InvalidConfig(format!(
                "unknown tier '{other}' (expected random|medium|medium-replay)"
            ))),
        }
    }
}

/// Parses a declarative environment spec.
///
/// The format is line-oriented. Lines containing `=` are `key = value`
/// directives; the remaining non-empty lines form the maze grid (`#` wall,
/// `S` start, `G` goal, `.` free). A `corridor = <length>` directive selects
/// the corridor environment instead of a grid. Recognized directives:
/// `slip`, `max_steps`, `corridor`.
pub fn parse_env(text: &str) -> Result<Box<dyn Env + Send + Sync>> {
    let mut slip: f64 = 0.0;
    let mut max_steps: Option<usize> = None;
    let mut corridor_len: Option<usize> = None;
    let mut grid_rows: Vec<String> = Vec::new();

    for raw in text.lines() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if line.contains('=') {
            let (key, value) = line.split_once('=').unwrap();
            let (key, value) = (key.trim(), value.trim());
            match key {
                "slip" => {
                    slip = value.parse().map_err(|_| bad_directive(key, value))?;
                    if !(0.0..1.0).contains(&slip) {
                        return Err(Error::InvalidEnvSpec(format!("slip {slip} outside [0, 1)")));
                    }
                }
                "max_steps" => {
                    let v: usize = value.parse().map_err(|_| bad_directive(key, value))?;
                    if v == 0 {
                        return Err(Error::InvalidEnvSpec("max_steps must be positive".into()));
                    }
                    max_steps = Some(v);
                }
                "corridor" => {
                    let v: usize = value.parse().map_err(|_| bad_directive(key, value))?;
                    corridor_len = Some(v);
                }
                other => {
                    return Err(Error::InvalidEnvSpec(format!(
                        "unknown directive '{other}'"
                    )));
                }
            }
        } else {
            if !line.chars().all(|c| matches!(c, '#' | 'S' | 'G' | '.')) {
                return Err(Error::InvalidEnvSpec(format!(
                    "grid row contains characters outside #SG.: '{line}'"
                )));
            }
            grid_rows.push(line.to_string());
        }
    }

    match (corridor_len, grid_rows.is_empty()) {
        (Some(len), true) => {
            let max_steps = max_steps.unwrap_or(4 * len);
            Ok(Box::new(Corridor::new(len, max_steps, text.to_string())?))
        }
        (Some(_), false) => Err(Error::InvalidEnvSpec(
            "spec mixes a corridor directive with grid rows".into(),
        )),
        (None, true) => Err(Error::InvalidEnvSpec("spec has no grid rows".into())),
        (None, false) => {
            let default_steps = 4 * (grid_rows.len() + grid_rows[0].len());
            Ok(Box::new(GridMaze::from_rows(
                &grid_rows,
                slip,
                max_steps.unwrap_or(default_steps),
                text.to_string(),
            )?))
        }
    }
}

fn bad_directive(key: &str, value: &str) -> Error {
    Error::InvalidEnvSpec(format!("cannot parse directive {key} = {value}"))
}
