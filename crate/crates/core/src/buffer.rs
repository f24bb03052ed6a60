//! Transitions and replay buffers.
//!
//! A [`Transition`] is the atom every other module consumes. Buffers are
//! append-only with FIFO eviction; the offline half of a [`UnionBuffer`] is
//! sealed against mutation for the whole online stage.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: u32,
    pub action: u32,
    pub reward: f64,
    pub next_state: u32,
    pub done: bool,
}

impl Transition {
    /// Bytes per encoded record: u32 state, u32 action, f64 reward,
    /// u32 next_state, u8 done, all little-endian.
    pub const ENCODED_LEN: usize = 21;

    pub fn write_record(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.state.to_le_bytes())?;
        w.write_all(&self.action.to_le_bytes())?;
        w.write_all(&self.reward.to_le_bytes())?;
        w.write_all(&self.next_state.to_le_bytes())?;
        w.write_all(&[self.done as u8])
    }

    pub fn read_record(r: &mut impl Read) -> std::io::Result<Self> {
        let mut buf = [0u8; Self::ENCODED_LEN];
        r.read_exact(&mut buf)?;
        Ok(Transition {
            state: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
            action: u32::from_le_bytes(buf[4..8].try_into().unwrap()),
            reward: f64::from_le_bytes(buf[8..16].try_into().unwrap()),
            next_state: u32::from_le_bytes(buf[16..20].try_into().unwrap()),
            done: buf[20] != 0,
        })
    }
}

/// Writes a length-prefixed record stream: u64 record count, then the records.
pub fn write_record_stream<'a>(
    transitions: impl ExactSizeIterator<Item = &'a Transition>,
    w: &mut impl Write,
) -> std::io::Result<()> {
    w.write_all(&(transitions.len() as u64).to_le_bytes())?;
    for t in transitions {
        t.write_record(w)?;
    }
    Ok(())
}

/// Reads back a stream written by [`write_record_stream`].
pub fn read_record_stream(r: &mut impl Read) -> std::io::Result<Vec<Transition>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let count = u64::from_le_bytes(head) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(Transition::read_record(r)?);
    }
    Ok(out)
}

/// FIFO replay buffer over a declared state/action space.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    transitions: VecDeque<Transition>,
    capacity: usize,
    num_states: usize,
    num_actions: usize,
}

impl ReplayBuffer {
    pub fn new(num_states: usize, num_actions: usize, capacity: usize) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || capacity == 0 {
            return Err(Error::InvalidConfig(format!(
                "buffer dims must be positive (states={num_states}, actions={num_actions}, capacity={capacity})"
            )));
        }
        Ok(ReplayBuffer {
            transitions: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
            num_states,
            num_actions,
        })
    }

    /// Appends `t`, evicting the oldest entry when at capacity. Rejects
    /// transitions whose indices exceed the declared space sizes.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state as usize >= self.num_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                got: t.state as usize,
                limit: self.num_states,
            });
        }
        if t.next_state as usize >= self.num_states {
            return Err(Error::IndexOutOfRange {
                what: "next_state",
                got: t.next_state as usize,
                limit: self.num_states,
            });
        }
        if t.action as usize >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                got: t.action as usize,
                limit: self.num_actions,
            });
        }
        if !t.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Oldest-first access.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.transitions.get(index)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// `n` independent uniform draws (with replacement).
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Transition>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n)
            .map(|_| self.transitions[rng.random_range(0..self.transitions.len())])
            .collect())
    }

    pub fn save(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_record_stream(self.transitions.iter(), w)
    }

    pub fn load(
        r: &mut impl Read,
        num_states: usize,
        num_actions: usize,
        capacity: usize,
    ) -> Result<Self> {
        let records = read_record_stream(r).map_err(|e| Error::io("record stream", e))?;
        let mut buf =
            ReplayBuffer::new(num_states, num_actions, capacity.max(records.len().max(1)))?;
        for t in records {
            buf.push(t)?;
        }
        Ok(buf)
    }
}

/// Offline dataset plus growing online buffer, sampled as their union.
#[derive(Debug, Clone)]
pub struct UnionBuffer {
    offline: ReplayBuffer,
    online: ReplayBuffer,
}

impl UnionBuffer {
    pub fn new(offline: ReplayBuffer, online: ReplayBuffer) -> Result<Self> {
        if offline.num_states != online.num_states || offline.num_actions != online.num_actions {
            return Err(Error::InvalidConfig(
                "offline and online buffers disagree on space sizes".into(),
            ));
        }
        Ok(UnionBuffer { offline, online })
    }

    /// The offline half is read-only for the lifetime of the union.
    pub fn offline(&self) -> &ReplayBuffer {
        &self.offline
    }

    pub fn online(&self) -> &ReplayBuffer {
        &self.online
    }

    pub fn push_online(&mut self, t: Transition) -> Result<()> {
        self.online.push(t)
    }

    pub fn total_len(&self) -> usize {
        self.offline.len() + self.online.len()
    }

    /// Indexes the concatenation offline ++ online, oldest-first per half.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        if index < self.offline.len() {
            self.offline.get(index)
        } else {
            self.online.get(index - self.offline.len())
        }
    }

    /// `n` draws, each independently uniform over the union: every stored
    /// transition is equally likely regardless of which half holds it.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Transition>> {
        let total = self.total_len();
        if total == 0 {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n)
            .map(|_| *self.get(rng.random_range(0..total)).unwrap())
            .collect())
    }

    /// Like [`sample`](Self::sample) but also reports how many draws came
    /// from the online half.
    pub fn sample_with_origin(
        &self,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Transition>, usize)> {
        let total = self.total_len();
        if total == 0 {
            return Err(Error::EmptyBuffer);
        }
        let mut online_hits = 0;
        let batch = (0..n)
            .map(|_| {
                let i = rng.random_range(0..total);
                if i >= self.offline.len() {
                    online_hits += 1;
                }
                *self.get(i).unwrap()
            })
            .collect();
        Ok((batch, online_hits))
    }
}
