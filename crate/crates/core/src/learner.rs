//! Tabular expectile-TD learning: offline pre-training of the frozen
//! (policy, Q, V) triple and per-step online fine-tuning from the union
//! buffer.
//!
//! The value table regresses toward an upper expectile of Q over the data's
//! action distribution, the critic backs up against a Polyak-averaged target
//! of that value table, and policies are extracted by advantage weighting:
//! logit(s, a) = beta * (Q(s, a) - V(s)).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{ReplayBuffer, Transition, UnionBuffer};
use crate::error::{Error, Result};
use crate::tabular::{Policy, QTable, ValueTable};

/// Neural-scale learning rate from the reference hyper-parameter table,
/// kept for provenance; tabular runs rescale it (see
/// [`LearnerConfig::default`]).
pub const REFERENCE_NEURAL_LEARNING_RATE: f64 = 3e-4;

/// Hyper-parameters of the expectile-TD learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Upper expectile for the value regression, in (0.5, 1).
    pub expectile_tau: f64,
    /// Advantage-weighting inverse temperature (beta).
    pub inv_temperature: f64,
    /// Tabular step size.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub discount: f64,
    /// Polyak speed of the target value table used in the Q backup.
    pub target_update_speed: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            expectile_tau: 0.9,
            inv_temperature: 10.0,
            learning_rate: 0.1,
            batch_size: 256,
            discount: 0.99,
            target_update_speed: 5e-3,
        }
    }
}

impl LearnerConfig {
    /// Defaults for dense-reward tasks (weaker pessimism).
    pub fn dense_defaults() -> Self {
        LearnerConfig {
            expectile_tau: 0.7,
            inv_temperature: 3.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expectile_tau > 0.5 && self.expectile_tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "expectile_tau {} outside (0.5, 1)",
                self.expectile_tau
            )));
        }
        if self.inv_temperature <= 0.0 {
            return Err(Error::InvalidConfig(
                "inv_temperature must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount {} outside (0, 1]",
                self.discount
            )));
        }
        if !(self.target_update_speed > 0.0 && self.target_update_speed <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_update_speed {} outside (0, 1]",
                self.target_update_speed
            )));
        }
        Ok(())
    }
}

/// Asymmetric squared loss |tau - 1[u < 0]| u^2.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0 && tau < 1.0);
    let weight = if u < 0.0 { 1.0 - tau } else { tau };
    weight * u * u
}

/// d/du of [`expectile_loss`].
pub fn expectile_grad(u: f64, tau: f64) -> f64 {
    let weight = if u < 0.0 { 1.0 - tau } else { tau };
    2.0 * weight * u
}

/// The frozen product of offline pre-training.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub policy: Policy,
    pub q: QTable,
    pub v: ValueTable,
}

/// One expectile-TD batch applied to (q, v, v_target). Returns an error
/// from the NaN guard with the offending entry named.
fn apply_batch(
    batch: &[Transition],
    q: &mut QTable,
    v: &mut ValueTable,
    v_target: &ValueTable,
    cfg: &LearnerConfig,
) -> Result<()> {
    // Value step: gradient descent on the expectile loss of Q(s,a) - V(s).
    for t in batch {
        let s = t.state as usize;
        let u = q.get(s, t.action as usize) - v.get(s);
        let new_v = v.get(s) + cfg.learning_rate * expectile_grad(u, cfg.expectile_tau);
        if !new_v.is_finite() {
            return Err(Error::NonFinite(format!("V[{s}]")));
        }
        v.set(s, new_v);
    }
    // Critic step: TD backup against the target value table.
    for t in batch {
        let s = t.state as usize;
        let a = t.action as usize;
        let bootstrap = if t.done {
            0.0
        } else {
            cfg.discount * v_target.get(t.next_state as usize)
        };
        let target = t.reward + bootstrap;
        let new_q = q.get(s, a) + cfg.learning_rate * (target - q.get(s, a));
        if !new_q.is_finite() {
            return Err(Error::NonFinite(format!("Q[{s}][{a}]")));
        }
        q.set(s, a, new_q);
    }
    Ok(())
}

/// Advantage-weighted logits beta * (Q(s,a) - V(s)) for one state.
fn advantage_row(q: &QTable, v: &ValueTable, state: usize, beta: f64) -> Vec<f64> {
    q.row(state)
        .iter()
        .map(|qa| beta * (qa - v.get(state)))
        .collect()
}

/// Rebuilds every state's logits from the current tables.
fn extract_policy_logits(policy: &mut Policy, q: &QTable, v: &ValueTable, beta: f64) -> Result<()> {
    for s in 0..q.num_states() {
        policy.set_state_logits(s, &advantage_row(q, v, s, beta))?;
    }
    Ok(())
}

/// Offline pre-training: `iters` expectile-TD batches over the dataset,
/// then advantage-weighted policy extraction. The returned policy is
/// frozen.
pub fn offline_pretrain(
    dataset: &ReplayBuffer,
    cfg: &LearnerConfig,
    iters: u64,
    rng: &mut ChaCha8Rng,
) -> Result<OfflineArtifacts> {
    if dataset.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    let mut q = QTable::zeros(ns, na);
    let mut v = ValueTable::zeros(ns);
    let mut v_target = ValueTable::zeros(ns);
    for i in 0..iters {
        let batch = dataset.sample(cfg.batch_size, rng)?;
        apply_batch(&batch, &mut q, &mut v, &v_target, cfg)
            .map_err(|e| Error::NonFinite(format!("offline iteration {i}: {e}")))?;
        v_target.polyak_from(&v, cfg.target_update_speed);
    }
    let mut policy = Policy::uniform(ns, na);
    extract_policy_logits(&mut policy, &q, &v, cfg.inv_temperature)?;
    Ok(OfflineArtifacts {
        policy: policy.freeze(),
        q,
        v,
    })
}

/// Online fine-tuning state: the learnable critic pair plus its target.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    pub q: QTable,
    pub v: ValueTable,
    v_target: ValueTable,
    cfg: LearnerConfig,
    updates: u64,
}

impl OnlineLearner {
    pub fn new(num_states: usize, num_actions: usize, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(OnlineLearner {
            q: QTable::zeros(num_states, num_actions),
            v: ValueTable::zeros(num_states),
            v_target: ValueTable::zeros(num_states),
            cfg,
            updates: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    /// Number of update batches applied so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One batch of expectile-TD updates from the union buffer, applied to
    /// the online critic and policy only.
    pub fn update(
        &mut self,
        online_policy: &mut Policy,
        union: &UnionBuffer,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let batch = union.sample(self.cfg.batch_size, rng)?;
        apply_batch(&batch, &mut self.q, &mut self.v, &self.v_target, &self.cfg)?;
        self.v_target
            .polyak_from(&self.v, self.cfg.target_update_speed);
        // Only rows the batch touched can have changed advantages.
        let mut touched: Vec<usize> = batch.iter().map(|t| t.state as usize).collect();
        touched.sort_unstable();
        touched.dedup();
        for s in touched {
            online_policy.set_state_logits(
                s,
                &advantage_row(&self.q, &self.v, s, self.cfg.inv_temperature),
            )?;
        }
        self.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn expectile_loss_direct_values() {
        assert_eq!(expectile_loss(0.0, 0.9), 0.0);
        assert!((expectile_loss(2.0, 0.9) - 3.6).abs() < 1e-12);
        assert!((expectile_loss(-2.0, 0.9) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn config_ranges_enforced() {
        assert!(LearnerConfig::default().validate().is_ok());
        assert!(LearnerConfig {
            expectile_tau: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LearnerConfig {
            discount: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    /// Full-coverage dataset for a 2-state deterministic chain: action 0 in
    /// state 0 moves to state 1 with reward 0; state 1 is one step from the
    /// terminal reward 1.
    fn chain_dataset() -> ReplayBuffer {
        let mut data = ReplayBuffer::new(2, 1, 4096).unwrap();
        for _ in 0..512 {
            data.push(Transition {
                state: 0,
                action: 0,
                reward: 0.0,
                next_state: 1,
                done: false,
            })
            .unwrap();
            data.push(Transition {
                state: 1,
                action: 0,
                reward: 1.0,
                next_state: 0,
                done: true,
            })
            .unwrap();
        }
        data
    }

    #[test]
    fn pretrain_recovers_chain_values() {
        // Exact value iteration on the chain: Q(1) = 1, Q(0) = 0.9.
        let cfg = LearnerConfig {
            expectile_tau: 0.9,
            inv_temperature: 10.0,
            learning_rate: 0.1,
            batch_size: 64,
            discount: 0.9,
            target_update_speed: 0.05,
        };
        let mut rng = stream_rng(0, Stream::Sampler);
        let art = offline_pretrain(&chain_dataset(), &cfg, 20_000, &mut rng).unwrap();
        assert!(
            (art.q.get(0, 0) - 0.9).abs() < 1e-3,
            "Q(0,0) = {}",
            art.q.get(0, 0)
        );
        assert!(
            (art.q.get(1, 0) - 1.0).abs() < 1e-3,
            "Q(1,0) = {}",
            art.q.get(1, 0)
        );
        assert!(art.policy.frozen());
    }

    #[test]
    fn pretrain_avoids_out_of_distribution_actions() {
        // Two actions exist but the dataset only ever shows action 0, which
        // pays off; the extracted policy must not prefer the unseen action.
        let mut data = ReplayBuffer::new(2, 2, 2048).unwrap();
        for _ in 0..512 {
            data.push(Transition {
                state: 0,
                action: 0,
                reward: 1.0,
                next_state: 1,
                done: true,
            })
            .unwrap();
            data.push(Transition {
                state: 1,
                action: 0,
                reward: 0.0,
                next_state: 1,
                done: true,
            })
            .unwrap();
        }
        let cfg = LearnerConfig {
            discount: 0.9,
            learning_rate: 0.1,
            batch_size: 64,
            target_update_speed: 0.05,
            ..Default::default()
        };
        let mut rng = stream_rng(1, Stream::Sampler);
        let art = offline_pretrain(&data, &cfg, 10_000, &mut rng).unwrap();
        let probs = art.policy.probs(0);
        assert!(probs[0] >= 0.99, "p(a0) = {}", probs[0]);
    }

    #[test]
    fn tau_half_degenerates_to_mean_regression() {
        // At tau = 0.5 the expectile is the mean: V(s) converges to the
        // dataset-mean of Q(s, a). Constructed directly since validate()
        // enforces the (0.5, 1) operating range.
        let cfg = LearnerConfig {
            expectile_tau: 0.5,
            inv_temperature: 1.0,
            learning_rate: 0.05,
            batch_size: 64,
            discount: 0.9,
            target_update_speed: 0.05,
        };
        // One state, two actions with distinct rewards, both terminal.
        let mut data = ReplayBuffer::new(1, 2, 1024).unwrap();
        for _ in 0..256 {
            for (a, r) in [(0u32, 0.0), (1u32, 2.0)] {
                data.push(Transition {
                    state: 0,
                    action: a,
                    reward: r,
                    next_state: 0,
                    done: true,
                })
                .unwrap();
            }
        }
        let mut rng = stream_rng(2, Stream::Sampler);
        let art = offline_pretrain(&data, &cfg, 30_000, &mut rng).unwrap();
        // Q converges to (0, 2); the symmetric expectile of a balanced
        // batch stream is their mean.
        let batch_mean = (art.q.get(0, 0) + art.q.get(0, 1)) / 2.0;
        assert!(
            (art.v.get(0) - batch_mean).abs() < 0.05,
            "V = {}",
            art.v.get(0)
        );
        assert!((batch_mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_updates_leave_policy_unchanged() {
        let union =
            UnionBuffer::new(chain_dataset(), ReplayBuffer::new(2, 1, 16).unwrap()).unwrap();
        let _ = union;
        let policy = Policy::uniform(2, 1);
        let digest = policy.digest();
        // No update calls: digest is untouched.
        assert_eq!(policy.digest(), digest);
    }

    #[test]
    fn online_updates_converge_to_value_iteration_on_full_coverage_buffer() {
        let cfg = LearnerConfig {
            expectile_tau: 0.9,
            inv_temperature: 10.0,
            learning_rate: 0.1,
            batch_size: 64,
            discount: 0.9,
            target_update_speed: 0.05,
        };
        let union =
            UnionBuffer::new(chain_dataset(), ReplayBuffer::new(2, 1, 16).unwrap()).unwrap();
        let mut learner = OnlineLearner::new(2, 1, cfg).unwrap();
        let mut policy = Policy::uniform(2, 1);
        let mut rng = stream_rng(3, Stream::Sampler);
        for _ in 0..10_000 {
            learner.update(&mut policy, &union, &mut rng).unwrap();
        }
        assert!((learner.q.get(0, 0) - 0.9).abs() <= 0.05);
        assert!((learner.q.get(1, 0) - 1.0).abs() <= 0.05);
        assert_eq!(learner.updates(), 10_000);
    }

    #[test]
    fn online_updates_never_touch_frozen_artifacts() {
        let cfg = LearnerConfig {
            discount: 0.9,
            ..Default::default()
        };
        let mut rng = stream_rng(4, Stream::Sampler);
        let art = offline_pretrain(&chain_dataset(), &cfg, 2_000, &mut rng).unwrap();
        let policy_digest = art.policy.digest();
        let q_digest = art.q.digest();

        let union =
            UnionBuffer::new(chain_dataset(), ReplayBuffer::new(2, 1, 16).unwrap()).unwrap();
        let mut learner = OnlineLearner::new(2, 1, cfg).unwrap();
        let mut online_policy = Policy::uniform(2, 1);
        for _ in 0..500 {
            learner
                .update(&mut online_policy, &union, &mut rng)
                .unwrap();
        }
        assert_eq!(art.policy.digest(), policy_digest);
        assert_eq!(art.q.digest(), q_digest);
    }

    #[test]
    fn critic_distance_to_fixed_point_contracts() {
        // Sup-norm distance to the value-iteration fixed point, averaged
        // over 1k-update windows, never increases beyond batch noise.
        let cfg = LearnerConfig {
            expectile_tau: 0.9,
            inv_temperature: 10.0,
            learning_rate: 0.1,
            batch_size: 64,
            discount: 0.9,
            target_update_speed: 0.05,
        };
        let q_star = [0.9, 1.0]; // exact fixed point of the chain
        let union =
            UnionBuffer::new(chain_dataset(), ReplayBuffer::new(2, 1, 16).unwrap()).unwrap();
        let mut learner = OnlineLearner::new(2, 1, cfg).unwrap();
        let mut policy = Policy::uniform(2, 1);
        let mut rng = stream_rng(6, Stream::Sampler);
        let mut window_means = Vec::new();
        for _ in 0..8 {
            let mut acc = 0.0;
            for _ in 0..1000 {
                learner.update(&mut policy, &union, &mut rng).unwrap();
                let dist = (learner.q.get(0, 0) - q_star[0])
                    .abs()
                    .max((learner.q.get(1, 0) - q_star[1]).abs());
                acc += dist;
            }
            window_means.push(acc / 1000.0);
        }
        for pair in window_means.windows(2) {
            assert!(
                pair[1] <= pair[0] + 5e-3,
                "window means increased: {window_means:?}"
            );
        }
        assert!(window_means.last().unwrap() < &0.05);
    }

    #[test]
    fn pretrain_rejects_empty_dataset() {
        let empty = ReplayBuffer::new(2, 1, 8).unwrap();
        let mut rng = stream_rng(5, Stream::Sampler);
        assert!(matches!(
            offline_pretrain(&empty, &LearnerConfig::default(), 10, &mut rng),
            Err(Error::EmptyBuffer)
        ));
    }

    proptest! {
        #[test]
        fn expectile_asymmetry_identity(
            u in prop_oneof![0.001f64..100.0, -100.0f64..-0.001],
            tau in 0.01f64..0.99,
        ) {
            let ratio = expectile_loss(u, tau) / expectile_loss(-u, tau);
            let want = if u > 0.0 { tau / (1.0 - tau) } else { (1.0 - tau) / tau };
            prop_assert!((ratio - want).abs() <= 1e-12 * want.abs());
        }

        #[test]
        fn expectile_loss_non_negative(u in -1e6f64..1e6, tau in 0.01f64..0.99) {
            prop_assert!(expectile_loss(u, tau) >= 0.0);
        }
    }
}
