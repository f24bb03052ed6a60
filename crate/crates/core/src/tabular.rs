//! Tabular value functions and softmax policies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy_nats(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// FNV-1a over a byte stream; used for cheap content digests of tables and
/// files (equality checks, not cryptography).
pub fn digest64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", digest64(bytes))
}

/// Dense state-action value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    values: Vec<f64>,
    num_states: usize,
    num_actions: usize,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            values: vec![0.0; num_states * num_actions],
            num_states,
            num_actions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// Greedy state value max_a Q(s, a).
    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest action-id on ties.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    /// Q(s, .) averaged under the given action distribution.
    pub fn expected_value(&self, state: usize, probs: &[f64]) -> f64 {
        self.row(state).iter().zip(probs).map(|(q, p)| q * p).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn digest(&self) -> String {
        digest_hex(&self.le_bytes())
    }
}

/// Dense state value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(num_states: usize) -> Self {
        ValueTable {
            values: vec![0.0; num_states],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn set(&mut self, state: usize, value: f64) {
        self.values[state] = value;
    }

    /// Polyak step toward `source`: v <- (1 - speed) v + speed source.
    pub fn polyak_from(&mut self, source: &ValueTable, speed: f64) {
        for (t, s) in self.values.iter_mut().zip(&source.values) {
            *t = (1.0 - speed) * *t + speed * s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Softmax policy over logits, optionally frozen.
///
/// Logits rather than probabilities, so greedy and softmax views coexist
/// without renormalization drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    logits: Vec<f64>,
    num_states: usize,
    num_actions: usize,
    frozen: bool,
}

impl Policy {
    /// Uniform policy (all-zero logits).
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            logits: vec![0.0; num_states * num_actions],
            num_states,
            num_actions,
            frozen: false,
        }
    }

    pub fn from_logits(logits: Vec<f64>, num_states: usize, num_actions: usize) -> Result<Self> {
        if logits.len() != num_states * num_actions {
            return Err(Error::InvalidConfig(format!(
                "logit table has {} entries, expected {}",
                logits.len(),
                num_states * num_actions
            )));
        }
        if !logits.iter().all(|l| l.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(Policy {
            logits,
            num_states,
            num_actions,
            frozen: false,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Seals the policy; all later mutation attempts error.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn logits_row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// Softmax action distribution at `state`.
    pub fn probs(&self, state: usize) -> Vec<f64> {
        softmax(self.logits_row(state))
    }

    /// Draws one action from softmax(logits[state]). Consumes exactly one
    /// uniform draw from `rng` regardless of the distribution.
    pub fn sample(&self, state: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        if state >= self.num_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                got: state,
                limit: self.num_states,
            });
        }
        let probs = self.probs(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(self.num_actions - 1)
    }

    /// Greedy action by logits, lowest action-id on ties.
    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.logits_row(state))
    }

    /// Overwrites one state's logits. Errors on frozen policies.
    pub fn set_state_logits(&mut self, state: usize, row: &[f64]) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenPolicy);
        }
        if row.len() != self.num_actions {
            return Err(Error::InvalidConfig(format!(
                "logit row has {} entries, expected {}",
                row.len(),
                self.num_actions
            )));
        }
        if !row.iter().all(|l| l.is_finite()) {
            return Err(Error::NonFinite(format!("policy logits for state {state}")));
        }
        let base = state * self.num_actions;
        self.logits[base..base + self.num_actions].copy_from_slice(row);
        Ok(())
    }

    pub fn le_bytes(&self) -> Vec<u8> {
        self.logits.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn digest(&self) -> String {
        digest_hex(&self.le_bytes())
    }
}

/// The policy pair the composite policy acts through: a frozen offline
/// member and a learnable online member.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub offline: Policy,
    pub online: Policy,
}

impl PolicySet {
    pub fn new(offline: Policy, online: Policy) -> Result<Self> {
        if !offline.frozen() {
            return Err(Error::InvalidConfig(
                "offline member of a policy set must be frozen".into(),
            ));
        }
        if online.frozen() {
            return Err(Error::InvalidConfig(
                "online member of a policy set must be learnable".into(),
            ));
        }
        Ok(PolicySet { offline, online })
    }
}
