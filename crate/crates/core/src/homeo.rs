//! Value promise discrepancy and the Homeostasis switching trigger.
//!
//! Homeostasis turns a stream of non-negative scalar surprise signals into
//! Bernoulli switch decisions whose long-run frequency tracks a target rate
//! rho. The signal here is the self-consistency error of the frozen offline
//! value estimate over a k-step window.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to the moving variance before the square root, so a
/// constant signal (zero variance) standardizes to zero instead of dividing
/// by zero.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Cap on the standardized deviation before exponentiation; keeps the
/// transformed average finite under adversarial input scales.
const STANDARDIZED_CAP: f64 = 500.0;

pub const RHO_MIN: f64 = 0.0001;
pub const RHO_MAX: f64 = 0.9;

/// Running statistics of the Homeostasis trigger.
///
/// Serializes to JSON for checkpoint/resume and test fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeoState {
    /// Moving average of the raw signal.
    pub mean: f64,
    /// Moving variance of the raw signal.
    pub var: f64,
    /// Moving average of the standardized-and-exponentiated signal.
    pub plus_mean: f64,
    /// Number of updates applied so far.
    pub t: u64,
    /// Target switch rate.
    pub rho: f64,
}

impl HomeoState {
    pub fn new(rho: f64) -> Result<Self> {
        if !(RHO_MIN..=RHO_MAX).contains(&rho) {
            return Err(Error::InvalidConfig(format!(
                "rho {rho} outside [{RHO_MIN}, {RHO_MAX}]"
            )));
        }
        Ok(HomeoState {
            mean: 0.0,
            var: 1.0,
            plus_mean: 1.0,
            t: 0,
            rho,
        })
    }

    /// Applies one update without sampling, returning the Bernoulli
    /// parameter the decision would be drawn with.
    fn advance(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "homeostasis input must be finite and non-negative, got {x}"
            )));
        }
        self.t += 1;
        let tau = (self.t as f64).min(100.0 / self.rho);
        self.mean = (1.0 - 1.0 / tau) * self.mean + x / tau;
        self.var = (1.0 - 1.0 / tau) * self.var + (x - self.mean).powi(2) / tau;
        let sd = self.var.max(VARIANCE_FLOOR).sqrt();
        let x_plus = ((x - self.mean) / sd).min(STANDARDIZED_CAP).exp();
        self.plus_mean = (1.0 - 1.0 / tau) * self.plus_mean + x_plus / tau;
        let p = (self.rho * x_plus / self.plus_mean).min(1.0);
        debug_assert!((0.0..=1.0).contains(&p), "Bernoulli parameter {p}");
        Ok(p)
    }

    /// One Homeostasis step: folds `x` into the running statistics and draws
    /// the switch decision. `true` means "switch to explore".
    pub fn update(&mut self, x: f64, rng: &mut ChaCha8Rng) -> Result<bool> {
        let p = self.advance(x)?;
        Ok(rng.random::<f64>() < p)
    }

    /// The Bernoulli parameter an input would produce, without committing
    /// the state change.
    pub fn switch_probability(&self, x: f64) -> Result<f64> {
        self.clone().advance(x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("HomeoState serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let state: HomeoState = serde_json::from_str(s).map_err(|e| Error::MalformedFile {
            path: "homeo state json".into(),
            reason: e.to_string(),
        })?;
        if !(RHO_MIN..=RHO_MAX).contains(&state.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho {} out of range",
                state.rho
            )));
        }
        Ok(state)
    }
}

/// Ring of the last k rewards and the k+1 state values bracketing them.
///
/// Pushed once per environment step with the value of the state the step
/// landed in and the reward the step produced; cleared on episode
/// boundaries so windows never straddle a reset.
#[derive(Debug, Clone)]
pub struct PromiseWindow {
    k: usize,
    gamma: f64,
    values: VecDeque<f64>,
    rewards: VecDeque<f64>,
}

impl PromiseWindow {
    pub fn new(k: usize, gamma: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig(
                "promise horizon k must be positive".into(),
            ));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {gamma} outside (0, 1]"
            )));
        }
        Ok(PromiseWindow {
            k,
            gamma,
            values: VecDeque::with_capacity(k + 1),
            rewards: VecDeque::with_capacity(k),
        })
    }

    pub fn horizon(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Appends one step's (value, reward); drops the oldest entries once the
    /// rings are full. `done` marks an episode boundary and clears the
    /// window, so reads report under-filled until k+1 fresh steps arrive.
    pub fn push(&mut self, value: f64, reward: f64, done: bool) {
        if done {
            self.reset();
            return;
        }
        if self.values.len() == self.k + 1 {
            self.values.pop_front();
        }
        self.values.push_back(value);
        if self.rewards.len() == self.k {
            self.rewards.pop_front();
        }
        self.rewards.push_back(reward);
    }

    pub fn reset(&mut self) {
        self.values.clear();
        self.rewards.clear();
    }

    pub fn is_filled(&self) -> bool {
        self.values.len() == self.k + 1
    }

    pub fn oldest_value(&self) -> Option<f64> {
        self.values.front().copied()
    }

    pub fn newest_value(&self) -> Option<f64> {
        self.values.back().copied()
    }

    /// Value promise discrepancy over the window:
    /// |V(s_{t-k}) - sum_i gamma^i R_i - gamma^k V(s_t)|, the rewards taken
    /// oldest-first so the reward adjacent to s_{t-k} carries gamma^0.
    pub fn discrepancy(&self) -> Result<f64> {
        if !self.is_filled() {
            return Err(Error::WindowUnderFilled {
                have: self.values.len().saturating_sub(1),
                need: self.k,
            });
        }
        let v_old = self.values.front().copied().unwrap();
        let v_new = self.values.back().copied().unwrap();
        let mut promised = 0.0;
        let mut discount = 1.0;
        for r in &self.rewards {
            promised += discount * r;
            discount *= self.gamma;
        }
        // discount == gamma^k here.
        Ok((v_old - promised - discount * v_new).abs())
    }
}
