//! Action-selection strategies compared by the harness.
//!
//! Four controllers map (policy set, state, internal state) to an action and
//! record which policy acted:
//!
//! * `nonmono` - the mode-switching controller: a frozen offline policy
//!   exploits, a learnable online policy explores, and Homeostasis decides
//!   when to hand over control, in contiguous fixed-length blocks.
//! * `pex` - policy expansion: both policies propose an action every step
//!   and a Boltzmann distribution over the critic's scores picks one.
//! * `offline` - always the frozen offline policy.
//! * `buffer` - always the online policy, trained from the union buffer.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homeo::{HomeoState, PromiseWindow, RHO_MAX, RHO_MIN};
use crate::tabular::{entropy_nats, softmax, Policy, PolicySet, QTable};

/// Which member of the policy set produced an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acted {
    Offline,
    Online,
}

/// Controller phase. `steps_remaining` counts down the fixed exploration
/// window and is positive exactly while that window is open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exploit,
    Explore { steps_remaining: u32 },
}

/// How the scalar state value fed to the promise window is derived from the
/// frozen offline critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffValueMode {
    /// V(s) = max_a Q_off(s, a).
    GreedyQ,
    /// V(s) = E_{a ~ pi_off} Q_off(s, a).
    ExpectedQ,
}

impl FromStr for OffValueMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" | "greedy_q" => Ok(OffValueMode::GreedyQ),
            "expected" | "expected_q" => Ok(OffValueMode::ExpectedQ),
            other => Err(Error::InvalidConfig(format!(
                "unknown off-value mode '{other}' (expected greedy|expected)"
            ))),
        }
    }
}

/// Modulator and trigger settings shared by the controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Homeostasis target switch rate.
    pub rho: f64,
    /// Length of one contiguous exploration window.
    pub explore_fixed_steps: u32,
    /// Period (in environment steps) at which Homeostasis is consulted.
    pub update_timestep: u32,
    /// Promise horizon k.
    pub promise_k: usize,
    /// Discount used inside the promise residual.
    pub gamma: f64,
    /// PEX selection temperature.
    pub pex_alpha: f64,
    /// Offline state-value extraction for the promise signal.
    pub off_value: OffValueMode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            rho: 0.1,
            explore_fixed_steps: 100,
            update_timestep: 10,
            promise_k: 10,
            gamma: 0.99,
            pex_alpha: 0.1,
            off_value: OffValueMode::GreedyQ,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(RHO_MIN..=RHO_MAX).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho {} outside [{RHO_MIN}, {RHO_MAX}]",
                self.rho
            )));
        }
        if self.explore_fixed_steps == 0 {
            return Err(Error::InvalidConfig(
                "explore_fixed_steps must be positive".into(),
            ));
        }
        if self.update_timestep == 0 {
            return Err(Error::InvalidConfig(
                "update_timestep must be positive".into(),
            ));
        }
        if self.promise_k == 0 {
            return Err(Error::InvalidConfig("promise_k must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.pex_alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "pex_alpha {} must be positive",
                self.pex_alpha
            )));
        }
        Ok(())
    }
}

/// Per-policy tally of environment steps taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionCounters {
    pub offline_count: u64,
    pub online_count: u64,
}

impl ExecutionCounters {
    pub fn attribute(&mut self, acted: Acted) {
        match acted {
            Acted::Offline => self.offline_count += 1,
            Acted::Online => self.online_count += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.offline_count + self.online_count
    }
}

/// The mode-switching controller.
///
/// Homeostasis is consulted only in exploit mode at `update_timestep`
/// boundaries, on the promise discrepancy of the frozen offline critic. A
/// firing opens an exploration window of exactly `explore_fixed_steps`
/// online-policy actions starting at the next step; further consultations
/// are suppressed until the window closes.
#[derive(Debug, Clone)]
pub struct NonMonoController {
    pub explore_fixed_steps: u32,
    pub update_timestep: u32,
    pub mode: Mode,
    pub homeo: HomeoState,
    pub window: PromiseWindow,
    switches_this_interval: u64,
    switch_steps: Vec<u64>,
}

impl NonMonoController {
    pub fn new(cfg: &ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NonMonoController {
            explore_fixed_steps: cfg.explore_fixed_steps,
            update_timestep: cfg.update_timestep,
            // Greedy starting mode: exploitation first.
            mode: Mode::Exploit,
            homeo: HomeoState::new(cfg.rho)?,
            window: PromiseWindow::new(cfg.promise_k, cfg.gamma)?,
            switches_this_interval: 0,
            switch_steps: Vec::new(),
        })
    }

    /// Selects the action for step `t` and advances the mode machinery.
    ///
    /// The step acts under the mode it entered with; a Homeostasis firing at
    /// a consultation step takes effect from the next step on. While the
    /// window is under-filled (first k steps of an episode) the consultation
    /// is skipped and the controller stays in its current mode.
    pub fn step(
        &mut self,
        pols: &PolicySet,
        state: usize,
        t: u64,
        policy_rng: &mut ChaCha8Rng,
        homeo_rng: &mut ChaCha8Rng,
    ) -> Result<(usize, Acted)> {
        let (action, acted) = match self.mode {
            Mode::Exploit => (pols.offline.sample(state, policy_rng)?, Acted::Offline),
            Mode::Explore { .. } => (pols.online.sample(state, policy_rng)?, Acted::Online),
        };

        match self.mode {
            Mode::Explore { steps_remaining } => {
                let left = steps_remaining - 1;
                self.mode = if left == 0 {
                    Mode::Exploit
                } else {
                    Mode::Explore {
                        steps_remaining: left,
                    }
                };
            }
            Mode::Exploit => {
                if t.is_multiple_of(self.update_timestep as u64) && self.window.is_filled() {
                    let d = self.window.discrepancy()?;
                    if self.homeo.update(d, homeo_rng)? {
                        self.mode = Mode::Explore {
                            steps_remaining: self.explore_fixed_steps,
                        };
                        self.switches_this_interval += 1;
                        self.switch_steps.push(t);
                    }
                }
            }
        }

        Ok((action, acted))
    }

    /// Feeds the executed transition into the promise window: the offline
    /// value of the state the step landed in, the reward it produced, and
    /// whether the episode ended (which clears the window).
    pub fn observe(&mut self, next_value: f64, reward: f64, episode_ended: bool) {
        self.window.push(next_value, reward, episode_ended);
    }

    /// Switch events since the last call (one metrics interval).
    pub fn take_switches(&mut self) -> u64 {
        std::mem::take(&mut self.switches_this_interval)
    }

    /// Steps at which Homeostasis fired, for trace comparisons.
    pub fn switch_steps(&self) -> &[u64] {
        &self.switch_steps
    }
}

/// Offline state value for the promise signal, per the configured mode.
pub fn offline_state_value(
    q_off: &QTable,
    pi_off: &Policy,
    state: usize,
    mode: OffValueMode,
) -> f64 {
    match mode {
        OffValueMode::GreedyQ => q_off.max_value(state),
        OffValueMode::ExpectedQ => q_off.expected_value(state, &pi_off.probs(state)),
    }
}

/// Boltzmann weights over the proposal set's critic scores:
/// P_w[i] = exp(Q(s, a_i)/alpha) / sum_j exp(Q(s, a_j)/alpha),
/// stabilized by subtracting the max before exponentiation.
pub fn pex_probabilities(q_values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "pex alpha {alpha} must be positive"
        )));
    }
    let scaled: Vec<f64> = q_values.iter().map(|q| q / alpha).collect();
    Ok(softmax(&scaled))
}

/// One PEX selection: given fresh proposals (a_off, a_on), samples the
/// one-hot weight from the Boltzmann distribution over the critic's scores
/// and returns the chosen action with its origin.
pub fn pex_select(
    q: &QTable,
    state: usize,
    proposals: (usize, usize),
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Acted)> {
    let (a_off, a_on) = proposals;
    let probs = pex_probabilities(&[q.get(state, a_off), q.get(state, a_on)], alpha)?;
    let u: f64 = rand::Rng::random(rng);
    if u < probs[0] {
        Ok((a_off, Acted::Offline))
    } else {
        Ok((a_on, Acted::Online))
    }
}

/// Per-step policy expansion over the critic `q`.
#[derive(Debug, Clone)]
pub struct PexController {
    pub alpha: f64,
    last_acted: Option<Acted>,
    switches_this_interval: u64,
}

impl PexController {
    pub fn new(cfg: &ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PexController {
            alpha: cfg.pex_alpha,
            last_acted: None,
            switches_this_interval: 0,
        })
    }

    /// Samples one proposal from each policy, then picks between them by the
    /// Boltzmann distribution over `q`'s scores.
    pub fn step(
        &mut self,
        pols: &PolicySet,
        q: &QTable,
        state: usize,
        policy_rng: &mut ChaCha8Rng,
    ) -> Result<(usize, Acted)> {
        let a_off = pols.offline.sample(state, policy_rng)?;
        let a_on = pols.online.sample(state, policy_rng)?;
        let (action, acted) = pex_select(q, state, (a_off, a_on), self.alpha, policy_rng)?;
        if self.last_acted.is_some_and(|prev| prev != acted) {
            self.switches_this_interval += 1;
        }
        self.last_acted = Some(acted);
        Ok((action, acted))
    }

    pub fn take_switches(&mut self) -> u64 {
        std::mem::take(&mut self.switches_this_interval)
    }
}

/// Baseline (ii): only the frozen offline policy ever acts.
pub fn offline_only_select(
    pols: &PolicySet,
    state: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Acted)> {
    Ok((pols.offline.sample(state, rng)?, Acted::Offline))
}

/// Baseline (iii): only the online policy acts, trained from the union
/// buffer.
pub fn buffer_only_select(
    pols: &PolicySet,
    state: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Acted)> {
    Ok((pols.online.sample(state, rng)?, Acted::Online))
}

/// Mean Shannon entropy (nats) of the policy's action distributions over
/// the given states.
pub fn policy_entropy(p: &Policy, states: &[usize]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidConfig(
            "policy_entropy needs at least one state".into(),
        ));
    }
    let mut sum = 0.0;
    for &s in states {
        if s >= p.num_states() {
            return Err(Error::IndexOutOfRange {
                what: "state",
                got: s,
                limit: p.num_states(),
            });
        }
        sum += entropy_nats(&p.probs(s));
    }
    Ok(sum / states.len() as f64)
}

/// Controller identifiers as exposed on the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    NonMono,
    Pex,
    Offline,
    Buffer,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::NonMono,
        ControllerKind::Pex,
        ControllerKind::Offline,
        ControllerKind::Buffer,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ControllerKind::NonMono => "nonmono",
            ControllerKind::Pex => "pex",
            ControllerKind::Offline => "offline",
            ControllerKind::Buffer => "buffer",
        }
    }

    /// Figure label used in plots.
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::NonMono => "OurModel",
            ControllerKind::Pex => "PEX",
            ControllerKind::Offline => "Offline",
            ControllerKind::Buffer => "Buffer",
        }
    }

    /// Whether the online policy is trained under this controller.
    pub fn trains_online(&self) -> bool {
        !matches!(self, ControllerKind::Offline)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonmono" => Ok(ControllerKind::NonMono),
            "pex" => Ok(ControllerKind::Pex),
            "offline" => Ok(ControllerKind::Offline),
            "buffer" => Ok(ControllerKind::Buffer),
            other => Err(Error::InvalidConfig(format!(
                "unknown controller '{other}' (expected nonmono|pex|offline|buffer)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn two_policy_set() -> PolicySet {
        let offline = Policy::uniform(4, 3).freeze();
        let online = Policy::uniform(4, 3);
        PolicySet::new(offline, online).unwrap()
    }

    fn cfg() -> ControllerConfig {
        ControllerConfig {
            rho: 0.9,
            explore_fixed_steps: 5,
            update_timestep: 2,
            promise_k: 2,
            gamma: 0.9,
            pex_alpha: 1.0,
            off_value: OffValueMode::GreedyQ,
        }
    }

    #[test]
    fn config_validation_rejects_degenerate_values() {
        let mut c = cfg();
        c.explore_fixed_steps = 0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.rho = 0.95;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.update_timestep = 0;
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn never_firing_trigger_leaves_all_steps_offline() {
        let pols = two_policy_set();
        let mut ctl = NonMonoController::new(&cfg()).unwrap();
        let mut prng = stream_rng(0, Stream::Policy);
        let mut hrng = stream_rng(0, Stream::Homeo);
        let mut counters = ExecutionCounters::default();
        // Window never filled: homeostasis never consulted, mode stays
        // exploit, every step acts offline.
        let steps = 100_000;
        for t in 0..steps {
            let (_, acted) = ctl.step(&pols, 0, t, &mut prng, &mut hrng).unwrap();
            counters.attribute(acted);
        }
        assert_eq!(counters.offline_count, steps);
        assert_eq!(counters.online_count, 0);
        assert_eq!(ctl.switch_steps(), &[] as &[u64]);
    }

    #[test]
    fn firing_opens_contiguous_explore_block_from_next_step() {
        let pols = two_policy_set();
        let mut c = cfg();
        c.rho = 0.9;
        c.explore_fixed_steps = 5;
        c.update_timestep = 1;
        let mut ctl = NonMonoController::new(&c).unwrap();
        let mut prng = stream_rng(1, Stream::Policy);
        let mut hrng = stream_rng(1, Stream::Homeo);

        // Fill the window with a wildly inconsistent value pattern so the
        // first consultation sees a large discrepancy.
        for _ in 0..3 {
            ctl.observe(1000.0, 0.0, false);
        }
        // Prime homeostasis statistics with small signals so the large one
        // standardizes far above the running mean.
        let mut acted_seq = Vec::new();
        for t in 0..40u64 {
            let (_, acted) = ctl.step(&pols, 0, t, &mut prng, &mut hrng).unwrap();
            acted_seq.push(acted);
        }
        let fire = ctl.switch_steps().first().copied().expect("homeo fired") as usize;
        // The firing step itself still acts offline; the next
        // explore_fixed_steps steps act online.
        assert_eq!(acted_seq[fire], Acted::Offline);
        for (t, acted) in acted_seq.iter().enumerate().take(fire + 6).skip(fire + 1) {
            assert_eq!(*acted, Acted::Online, "step {t}");
        }
        assert_eq!(acted_seq[fire + 6], Acted::Offline);
    }

    #[test]
    fn explore_blocks_have_exact_length() {
        let pols = two_policy_set();
        let mut c = cfg();
        c.explore_fixed_steps = 7;
        c.update_timestep = 3;
        let mut ctl = NonMonoController::new(&c).unwrap();
        let mut prng = stream_rng(2, Stream::Policy);
        let mut hrng = stream_rng(2, Stream::Homeo);
        let mut seq = Vec::new();
        for t in 0..5000u64 {
            let (_, acted) = ctl.step(&pols, 0, t, &mut prng, &mut hrng).unwrap();
            seq.push(acted);
            // Noisy signal keeps homeostasis firing now and then.
            ctl.observe(if t % 13 == 0 { 50.0 } else { 1.0 }, 0.1, false);
        }
        // Every maximal online run has length exactly 7 (none truncated
        // because the trailing block closes before step 5000 here).
        let mut i = 0;
        let mut blocks = 0;
        while i < seq.len() {
            if seq[i] == Acted::Online {
                let start = i;
                while i < seq.len() && seq[i] == Acted::Online {
                    i += 1;
                }
                let len = i - start;
                if i < seq.len() {
                    assert_eq!(len, 7, "block starting at {start}");
                }
                blocks += 1;
            } else {
                i += 1;
            }
        }
        assert!(blocks > 10, "expected several explore blocks, got {blocks}");
    }

    #[test]
    fn pex_equal_scores_split_evenly() {
        let q = QTable::zeros(1, 3);
        let probs = pex_probabilities(&[q.get(0, 0), q.get(0, 1)], 1.0).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pex_matches_direct_evaluation() {
        // Q = (1, 3), alpha = 1: (1/(1+e^2), e^2/(1+e^2)).
        let probs = pex_probabilities(&[1.0, 3.0], 1.0).unwrap();
        let e2 = 2.0f64.exp();
        assert!((probs[0] - 1.0 / (1.0 + e2)).abs() < 1e-12);
        assert!((probs[1] - e2 / (1.0 + e2)).abs() < 1e-12);
    }

    #[test]
    fn pex_low_temperature_recovers_argmax() {
        let mut q = QTable::zeros(1, 2);
        q.set(0, 0, 1.0);
        q.set(0, 1, 3.0);
        let mut rng = stream_rng(3, Stream::Policy);
        let n = 100_000;
        let mut online = 0;
        for _ in 0..n {
            let (_, acted) = pex_select(&q, 0, (0, 1), 1e-6, &mut rng).unwrap();
            if acted == Acted::Online {
                online += 1;
            }
        }
        assert!(online as f64 / n as f64 >= 0.999);
    }

    #[test]
    fn pex_shift_invariance() {
        let a = pex_probabilities(&[1.0, 3.0], 0.7).unwrap();
        let b = pex_probabilities(&[101.0, 103.0], 0.7).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
        assert!((a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn baseline_selectors_are_definitional() {
        let pols = two_policy_set();
        let mut rng = stream_rng(4, Stream::Policy);
        let mut counters = ExecutionCounters::default();
        for _ in 0..100 {
            let (_, acted) = offline_only_select(&pols, 1, &mut rng).unwrap();
            counters.attribute(acted);
        }
        for _ in 0..50 {
            let (_, acted) = buffer_only_select(&pols, 1, &mut rng).unwrap();
            counters.attribute(acted);
        }
        assert_eq!(counters.offline_count, 100);
        assert_eq!(counters.online_count, 50);
        assert_eq!(counters.total(), 150);
    }

    #[test]
    fn entropy_of_uniform_and_deterministic_policies() {
        let uniform = Policy::uniform(3, 4);
        let h = policy_entropy(&uniform, &[0, 1, 2]).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-9);

        let mut sharp = Policy::uniform(1, 3);
        sharp.set_state_logits(0, &[40.0, 0.0, 0.0]).unwrap();
        assert!(policy_entropy(&sharp, &[0]).unwrap() <= 1e-6);

        let mut skew = Policy::uniform(1, 3);
        skew.set_state_logits(0, &[1.0, 2.0, 3.0]).unwrap();
        let h = policy_entropy(&skew, &[0]).unwrap();
        // Direct computation: -sum p ln p over softmax(1,2,3).
        let p = softmax(&[1.0, 2.0, 3.0]);
        let want: f64 = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        assert!((want - 0.8324).abs() < 1e-4);
        assert!((h - want).abs() < 1e-12);

        assert!(policy_entropy(&uniform, &[]).is_err());
    }

    #[test]
    fn controller_kind_parses_ids() {
        for kind in ControllerKind::ALL {
            assert_eq!(kind.id().parse::<ControllerKind>().unwrap(), kind);
        }
        assert!("sac".parse::<ControllerKind>().is_err());
    }
}
