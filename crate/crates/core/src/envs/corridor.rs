//! Dense-reward corridor: reward equals the forward progress made each
//! step. The episode never terminates early; the horizon truncates it.

use rand_chacha::ChaCha8Rng;

use super::{Env, Outcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Corridor {
    length: usize,
    max_episode_steps: usize,
    descriptor: String,
}

impl Corridor {
    pub fn new(length: usize, max_episode_steps: usize, descriptor: String) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidEnvSpec(format!(
                "corridor length {length} < 2"
            )));
        }
        if max_episode_steps == 0 {
            return Err(Error::InvalidEnvSpec("max_steps must be positive".into()));
        }
        Ok(Corridor {
            length,
            max_episode_steps,
            descriptor,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }
}

impl Env for Corridor {
    fn num_states(&self) -> usize {
        self.length
    }

    /// 0 = backward, 1 = forward.
    fn num_actions(&self) -> usize {
        2
    }

    fn max_episode_steps(&self) -> usize {
        self.max_episode_steps
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> usize {
        0
    }

    fn start_distribution(&self) -> Vec<(f64, usize)> {
        vec![(1.0, 0)]
    }

    fn outcomes(&self, state: usize, action: usize) -> Vec<Outcome> {
        let next = match action {
            1 => (state + 1).min(self.length - 1),
            _ => state.saturating_sub(1),
        };
        let progress = next as f64 - state as f64;
        vec![(1.0, progress, next, false)]
    }

    fn descriptor(&self) -> &str {
        &self.descriptor
    }
}
