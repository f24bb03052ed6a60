//! Exact planning oracles: discounted value iteration, finite-horizon
//! backward induction for the episodic optimum, and Monte-Carlo baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Env;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tabular::QTable;

/// Episodes used for the uniform-policy Monte-Carlo baseline.
pub const RANDOM_RETURN_EPISODES: usize = 10_000;

/// Discounted infinite-horizon Q* by synchronous value iteration, run to
/// the given sup-norm residual.
pub fn value_iteration_q(
    env: &dyn Env,
    discount: f64,
    residual: f64,
    max_sweeps: usize,
) -> Result<QTable> {
    let (ns, na) = (env.num_states(), env.num_actions());
    // Cache the model: tabular sweeps hit every pair each iteration.
    let model: Vec<Vec<super::Outcome>> = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| env.outcomes(s, a))
        .collect();
    let mut q = QTable::zeros(ns, na);
    for _ in 0..max_sweeps {
        let mut next = QTable::zeros(ns, na);
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let mut value = 0.0;
                for &(p, r, s2, done) in &model[s * na + a] {
                    let bootstrap = if done {
                        0.0
                    } else {
                        discount * q.max_value(s2)
                    };
                    value += p * (r + bootstrap);
                }
                delta = delta.max((value - q.get(s, a)).abs());
                next.set(s, a, value);
            }
        }
        q = next;
        if delta <= residual {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence(max_sweeps))
}

/// Time-indexed optimal value tables for the env's episode horizon:
/// `tables[h]` maps a state to the best expected undiscounted return
/// achievable with `h` steps remaining.
pub fn finite_horizon_table(env: &dyn Env) -> Vec<Vec<f64>> {
    let (ns, na) = (env.num_states(), env.num_actions());
    let horizon = env.max_episode_steps();
    let mut tables = vec![vec![0.0; ns]];
    for h in 1..=horizon {
        let prev = &tables[h - 1];
        let mut cur = vec![0.0; ns];
        for (s, slot) in cur.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let mut value = 0.0;
                for (p, r, s2, done) in env.outcomes(s, a) {
                    value += p * (r + if done { 0.0 } else { prev[s2] });
                }
                best = best.max(value);
            }
            *slot = best;
        }
        tables.push(cur);
    }
    tables
}

/// Exact optimal expected undiscounted episodic return, by backward
/// induction over the episode horizon, averaged over the start
/// distribution.
pub fn optimal_return(env: &dyn Env) -> f64 {
    let tables = finite_horizon_table(env);
    let last = tables.last().expect("horizon >= 0");
    env.start_distribution()
        .iter()
        .map(|&(p, s)| p * last[s])
        .sum()
}

/// Exact optimal expected discounted return from the start distribution.
pub fn optimal_discounted_return(env: &dyn Env, discount: f64) -> Result<f64> {
    let q = value_iteration_q(env, discount, 1e-10, 1_000_000)?;
    Ok(env
        .start_distribution()
        .iter()
        .map(|&(p, s)| p * q.max_value(s))
        .sum())
}

/// Monte-Carlo mean undiscounted episodic return of a (step, state) ->
/// action policy.
pub fn mc_return(
    env: &dyn Env,
    mut policy: impl FnMut(usize, usize) -> usize,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        for step in 0..env.max_episode_steps() {
            let a = policy(step, s);
            let t = env.step(s, a, rng);
            total += t.reward;
            if t.done {
                break;
            }
            s = t.next_state as usize;
        }
    }
    total / episodes as f64
}

/// Mean return of the uniform-random policy over a fixed-seed Monte-Carlo
/// run; the zero point of the normalized-return scale.
pub fn random_return(env: &dyn Env, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, Stream::Eval);
    let na = env.num_actions();
    let mut action_rng = stream_rng(seed.wrapping_add(1), Stream::Eval);
    mc_return(
        env,
        |_, _| action_rng.random_range(0..na),
        RANDOM_RETURN_EPISODES,
        &mut rng,
    )
}
