//! Python bindings: the core types (buffers, policies, the Homeostasis
//! trigger, environments, checkpoints) and the high-level pretrain /
//! online-run operations.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use switchrl::buffer::Transition;
use switchrl::controllers::{pex_probabilities, ControllerConfig, ControllerKind, OffValueMode};
use switchrl::envs::{
    generate_offline_dataset, optimal_return, parse_env, random_return, DatasetTier, Env,
};
use switchrl::harness::{rows_to_csv, run_online_stage, ExperimentSpec, MetricsRow};
use switchrl::learner::{offline_pretrain, LearnerConfig};
use switchrl::rng::{stream_rng, Stream};
use switchrl::tabular;
use switchrl::Checkpoint;

fn err(e: switchrl::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One metrics row as (step, controller, seed, return_norm, offline_count,
/// online_count, entropy_off, entropy_on, switches).
type RowTuple = (u64, String, u64, f64, u64, u64, f64, f64, u64);

/// Transition tuple (state, action, reward, next_state, done).
type TransitionTuple = (u32, u32, f64, u32, bool);

/// Homeostasis trigger with an internally seeded decision stream.
#[pyclass(name = "Homeo")]
struct PyHomeo {
    state: switchrl::HomeoState,
    rng: switchrl::rng::ChaCha8Rng,
}

#[pymethods]
impl PyHomeo {
    #[new]
    fn new(rho: f64, seed: u64) -> PyResult<Self> {
        Ok(PyHomeo {
            state: switchrl::HomeoState::new(rho).map_err(err)?,
            rng: stream_rng(seed, Stream::Homeo),
        })
    }

    /// Feeds one signal, returns the switch decision.
    fn update(&mut self, x: f64) -> PyResult<bool> {
        self.state.update(x, &mut self.rng).map_err(err)
    }

    fn switch_probability(&self, x: f64) -> PyResult<f64> {
        self.state.switch_probability(x).map_err(err)
    }

    fn to_json(&self) -> String {
        self.state.to_json()
    }

    #[getter]
    fn t(&self) -> u64 {
        self.state.t
    }
}

/// Ring buffer feeding the value promise discrepancy.
#[pyclass(name = "PromiseWindow")]
struct PyPromiseWindow {
    inner: switchrl::PromiseWindow,
}

#[pymethods]
impl PyPromiseWindow {
    #[new]
    fn new(k: usize, gamma: f64) -> PyResult<Self> {
        Ok(PyPromiseWindow {
            inner: switchrl::PromiseWindow::new(k, gamma).map_err(err)?,
        })
    }

    #[pyo3(signature = (value, reward, done=false))]
    fn push(&mut self, value: f64, reward: f64, done: bool) {
        self.inner.push(value, reward, done);
    }

    fn is_filled(&self) -> bool {
        self.inner.is_filled()
    }

    fn discrepancy(&self) -> PyResult<f64> {
        self.inner.discrepancy().map_err(err)
    }
}

/// FIFO replay buffer over a declared state/action space.
#[pyclass(name = "ReplayBuffer")]
struct PyReplayBuffer {
    inner: switchrl::ReplayBuffer,
}

#[pymethods]
impl PyReplayBuffer {
    #[new]
    fn new(num_states: usize, num_actions: usize, capacity: usize) -> PyResult<Self> {
        Ok(PyReplayBuffer {
            inner: switchrl::ReplayBuffer::new(num_states, num_actions, capacity).map_err(err)?,
        })
    }

    fn push(
        &mut self,
        state: u32,
        action: u32,
        reward: f64,
        next_state: u32,
        done: bool,
    ) -> PyResult<()> {
        self.inner
            .push(Transition {
                state,
                action,
                reward,
                next_state,
                done,
            })
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Uniform sample of (state, action, reward, next_state, done) tuples.
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<TransitionTuple>> {
        let mut rng = stream_rng(seed, Stream::Sampler);
        Ok(self
            .inner
            .sample(n, &mut rng)
            .map_err(err)?
            .into_iter()
            .map(|t| (t.state, t.action, t.reward, t.next_state, t.done))
            .collect())
    }

    /// Length-prefixed little-endian record stream.
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.inner.save(&mut out).expect("vec write");
        out
    }

    #[staticmethod]
    fn from_bytes(
        data: &[u8],
        num_states: usize,
        num_actions: usize,
        capacity: usize,
    ) -> PyResult<Self> {
        Ok(PyReplayBuffer {
            inner: switchrl::ReplayBuffer::load(&mut &data[..], num_states, num_actions, capacity)
                .map_err(err)?,
        })
    }
}

/// A parsed environment spec.
#[pyclass(name = "Environment")]
struct PyEnvironment {
    inner: Box<dyn Env + Send + Sync>,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyEnvironment {
            inner: parse_env(text).map_err(err)?,
        })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn max_episode_steps(&self) -> usize {
        self.inner.max_episode_steps()
    }

    fn reset(&self, seed: u64) -> usize {
        self.inner.reset(&mut stream_rng(seed, Stream::Env))
    }

    /// One step: returns (reward, next_state, done).
    fn step(&self, state: usize, action: usize, seed: u64) -> (f64, u32, bool) {
        let t = self
            .inner
            .step(state, action, &mut stream_rng(seed, Stream::Env));
        (t.reward, t.next_state, t.done)
    }

    fn optimal_return(&self) -> f64 {
        optimal_return(self.inner.as_ref())
    }

    fn random_return(&self, seed: u64) -> f64 {
        random_return(self.inner.as_ref(), seed)
    }

    /// Generates an offline dataset of the given tier.
    fn generate_dataset(&self, tier: &str, size: usize, seed: u64) -> PyResult<PyReplayBuffer> {
        let tier: DatasetTier = tier.parse().map_err(err)?;
        Ok(PyReplayBuffer {
            inner: generate_offline_dataset(self.inner.as_ref(), tier, size, seed).map_err(err)?,
        })
    }
}

/// Frozen offline artifacts plus everything an online run needs.
#[pyclass(name = "Checkpoint")]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn optimal_return(&self) -> f64 {
        self.inner.optimal_return
    }

    #[getter]
    fn random_return(&self) -> f64 {
        self.inner.random_return
    }

    fn q_value(&self, state: usize, action: usize) -> f64 {
        self.inner.q.get(state, action)
    }

    fn policy_probs(&self, state: usize) -> Vec<f64> {
        self.inner.policy.probs(state)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCheckpoint {
            inner: Checkpoint::load(std::path::Path::new(path)).map_err(err)?,
        })
    }
}

/// Asymmetric squared loss |tau - 1[u < 0]| u^2.
#[pyfunction]
fn expectile_loss(u: f64, tau: f64) -> f64 {
    switchrl::learner::expectile_loss(u, tau)
}

/// Boltzmann weights over proposal scores, stabilized.
#[pyfunction]
fn pex_weights(q_values: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    pex_probabilities(&q_values, alpha).map_err(err)
}

/// Mean softmax entropy (nats) of a logit table over the given states.
#[pyfunction]
fn softmax_entropy(logits: Vec<f64>) -> f64 {
    tabular::entropy_nats(&tabular::softmax(&logits))
}

/// Offline pre-training on a generated dataset.
#[pyfunction]
#[pyo3(signature = (env_text, tier, dataset_size, offline_iters, seed, expectile_tau=0.9, inv_temperature=10.0, learning_rate=0.1, batch_size=256, discount=0.99, target_update_speed=5e-3))]
#[allow(clippy::too_many_arguments)]
fn pretrain(
    env_text: &str,
    tier: &str,
    dataset_size: usize,
    offline_iters: u64,
    seed: u64,
    expectile_tau: f64,
    inv_temperature: f64,
    learning_rate: f64,
    batch_size: usize,
    discount: f64,
    target_update_speed: f64,
) -> PyResult<PyCheckpoint> {
    let env = parse_env(env_text).map_err(err)?;
    let tier: DatasetTier = tier.parse().map_err(err)?;
    let learner = LearnerConfig {
        expectile_tau,
        inv_temperature,
        learning_rate,
        batch_size,
        discount,
        target_update_speed,
    };
    learner.validate().map_err(err)?;
    let dataset = generate_offline_dataset(env.as_ref(), tier, dataset_size, seed).map_err(err)?;
    let mut rng = stream_rng(seed, Stream::Sampler);
    let artifacts = offline_pretrain(&dataset, &learner, offline_iters, &mut rng).map_err(err)?;
    let ckpt = Checkpoint::new(
        env_text.to_string(),
        tier,
        learner,
        offline_iters,
        seed,
        artifacts,
        dataset,
        random_return(env.as_ref(), seed),
        optimal_return(env.as_ref()),
    )
    .map_err(err)?;
    Ok(PyCheckpoint { inner: ckpt })
}

fn rows_to_tuples(rows: &[MetricsRow]) -> Vec<RowTuple> {
    rows.iter()
        .map(|r| {
            (
                r.step,
                r.controller.clone(),
                r.seed,
                r.return_norm,
                r.offline_count,
                r.online_count,
                r.entropy_off,
                r.entropy_on,
                r.switches,
            )
        })
        .collect()
}

/// Runs the online stage for one controller and seed. Returns metric rows
/// as (step, controller, seed, return_norm, offline_count, online_count,
/// entropy_off, entropy_on, switches) tuples.
#[pyfunction]
#[pyo3(signature = (ckpt, controller, seed, online_steps=50_000, eval_interval=500, eval_episodes=20, initial_collection_steps=500, rho=0.1, explore_fixed_steps=100, update_timestep=10, promise_k=10, gamma=0.99, pex_alpha=0.1, off_value="greedy"))]
#[allow(clippy::too_many_arguments)]
fn run_online(
    ckpt: &PyCheckpoint,
    controller: &str,
    seed: u64,
    online_steps: u64,
    eval_interval: u64,
    eval_episodes: u32,
    initial_collection_steps: u64,
    rho: f64,
    explore_fixed_steps: u32,
    update_timestep: u32,
    promise_k: usize,
    gamma: f64,
    pex_alpha: f64,
    off_value: &str,
) -> PyResult<Vec<RowTuple>> {
    let controller: ControllerKind = controller.parse().map_err(err)?;
    let off_value: OffValueMode = off_value.parse().map_err(err)?;
    let spec = ExperimentSpec {
        controller,
        controller_cfg: ControllerConfig {
            rho,
            explore_fixed_steps,
            update_timestep,
            promise_k,
            gamma,
            pex_alpha,
            off_value,
        },
        online_steps,
        eval_interval,
        eval_episodes,
        initial_collection_steps,
        online_buffer_capacity: 1_000_000,
        seeds: vec![seed],
    };
    spec.validate().map_err(err)?;
    let result = run_online_stage(&ckpt.inner, &spec, seed).map_err(err)?;
    Ok(rows_to_tuples(&result.rows))
}

/// CSV encoding of rows produced by `run_online`.
#[pyfunction]
fn rows_csv(rows: Vec<RowTuple>) -> String {
    let rows: Vec<MetricsRow> = rows
        .into_iter()
        .map(
            |(
                step,
                controller,
                seed,
                return_norm,
                offline_count,
                online_count,
                entropy_off,
                entropy_on,
                switches,
            )| {
                MetricsRow {
                    step,
                    controller,
                    seed,
                    return_norm,
                    offline_count,
                    online_count,
                    entropy_off,
                    entropy_on,
                    switches,
                }
            },
        )
        .collect();
    rows_to_csv(&rows)
}

#[pymodule]
fn switchrl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHomeo>()?;
    m.add_class::<PyPromiseWindow>()?;
    m.add_class::<PyReplayBuffer>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(expectile_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pex_weights, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(rows_csv, m)?)?;
    m.add(
        "ROW_FIELDS",
        vec![
            "step",
            "controller",
            "seed",
            "return_norm",
            "offline_count",
            "online_count",
            "entropy_off",
            "entropy_on",
            "switches",
        ],
    )?;
    Ok(())
}
