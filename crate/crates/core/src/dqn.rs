//! A single deep Q-learning agent with experience replay and a target network.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::mlp::{Activation, Example, LossKind, Mask, Network, OutputKind, TrainConfig};

/// One experience tuple. `next_valid` holds the actions that were eligible in
/// `next_state`; an empty list means every action is eligible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub next_valid: Vec<usize>,
}

/// Bounded FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return error::config("replay capacity must be positive");
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.buffer.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Uniform sample of `n` indices with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.buffer.len())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentHyperparams {
    pub replay_capacity: usize,
    pub burning_steps: usize,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub batch_size: usize,
    pub learning_steps: u64,
    pub target_sync_period: u64,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub l2_decay: f64,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            replay_capacity: 10_000,
            burning_steps: 1_000,
            discount: 0.7,
            epsilon_start: 1.0,
            epsilon_min: 0.001,
            batch_size: 32,
            learning_steps: 30_000,
            target_sync_period: 1_000,
            hidden_layers: vec![80, 80],
            learning_rate: 0.01,
            l2_decay: 0.0,
        }
    }
}

impl AgentHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return error::config(format!("discount {} outside [0, 1)", self.discount));
        }
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return error::config(format!(
                "epsilon bounds must satisfy 0 <= min <= start <= 1, got min {} start {}",
                self.epsilon_min, self.epsilon_start
            ));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.target_sync_period == 0 {
            return error::config("replay capacity, batch size and target sync period must be positive");
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return error::config(format!("invalid hidden layers {:?}", self.hidden_layers));
        }
        self.train_config(0).validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2_decay: self.l2_decay,
            rng_seed: seed,
        }
    }

    /// Linearly annealed exploration rate after `step` experience steps.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        decay_epsilon(self.epsilon_start, self.epsilon_min, self.learning_steps, step)
    }
}

/// Linear annealing from `start` to `min` over `horizon` steps, then constant.
pub fn decay_epsilon(start: f64, min: f64, horizon: u64, step: u64) -> f64 {
    if horizon == 0 || step >= horizon {
        return min;
    }
    start - (start - min) * (step as f64 / horizon as f64)
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    online: Network,
    target: Network,
    memory: ReplayMemory,
    hyper: AgentHyperparams,
    train_cfg: TrainConfig,
    step_counter: u64,
    experience_steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentMeta {
    state_dim: usize,
    action_count: usize,
    step_counter: u64,
    experience_steps: u64,
    epsilon: f64,
    hyper: AgentHyperparams,
}

impl DqnAgent {
    pub fn new(state_dim: usize, action_count: usize, hyper: AgentHyperparams, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut dims = vec![state_dim];
        dims.extend(&hyper.hidden_layers);
        dims.push(action_count);
        let online = Network::new(&dims, Activation::Relu, OutputKind::Linear, seed)?;
        let target = online.clone();
        Ok(Self {
            online,
            target,
            memory: ReplayMemory::new(hyper.replay_capacity)?,
            train_cfg: hyper.train_config(seed),
            hyper,
            step_counter: 0,
            experience_steps: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn action_count(&self) -> usize {
        self.online.output_dim()
    }

    pub fn hyper(&self) -> &AgentHyperparams {
        &self.hyper
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Network {
        &mut self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    /// Number of minibatch updates performed so far.
    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    /// Number of transitions this agent has recorded.
    pub fn experience_steps(&self) -> u64 {
        self.experience_steps
    }

    /// Current exploration rate given the agent's own experience count.
    pub fn epsilon(&self) -> f64 {
        self.hyper.epsilon_at(self.experience_steps)
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(s)
    }

    /// Epsilon-greedy choice restricted to `valid`; greedy ties go to the lowest index.
    pub fn select_action(&self, s: &[f64], valid: &[usize], epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
        if valid.is_empty() {
            return Err(Error::Env("no valid actions to choose from".into()));
        }
        if let Some(&bad) = valid.iter().find(|&&a| a >= self.action_count()) {
            return Err(Error::Env(format!(
                "action {bad} outside the agent's {} actions",
                self.action_count()
            )));
        }
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return Ok(valid[rng.gen_range(0..valid.len())]);
        }
        let q = self.online.forward(s)?;
        Ok(masked_argmax(&q, valid))
    }

    /// TD target computed with the frozen target network.
    pub fn q_target(&self, t: &Transition) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward);
        }
        let q = self.target.forward(&t.next_state)?;
        let best = if t.next_valid.is_empty() {
            q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            t.next_valid.iter().map(|&a| q[a]).fold(f64::NEG_INFINITY, f64::max)
        };
        Ok(t.reward + self.hyper.discount * best)
    }

    /// Stores a transition and advances the exploration schedule.
    pub fn record(&mut self, t: Transition) -> Result<()> {
        if t.action >= self.action_count() {
            return Err(Error::Env(format!("transition action {} out of range", t.action)));
        }
        if !t.reward.is_finite() {
            return Err(Error::Env(format!("non-finite reward {}", t.reward)));
        }
        if t.state.len() != self.state_dim() || t.next_state.len() != self.state_dim() {
            return error::input(format!(
                "transition states must have {} features",
                self.state_dim()
            ));
        }
        self.memory.push(t);
        self.experience_steps += 1;
        Ok(())
    }

    pub fn in_burn_in(&self) -> bool {
        self.memory.len() < self.hyper.burning_steps.max(1)
    }

    /// One minibatch update; `None` while the memory is still burning in.
    pub fn train_on_minibatch(&mut self, rng: &mut impl Rng) -> Result<Option<f64>> {
        if self.in_burn_in() {
            return Ok(None);
        }
        let idx = self.memory.sample_indices(self.hyper.batch_size, rng);
        let n_actions = self.action_count();
        let mut targets = Vec::with_capacity(idx.len());
        for &i in &idx {
            let t = &self.memory.buffer[i];
            let mut row = vec![0.0; n_actions];
            row[t.action] = self.q_target(t)?;
            targets.push(row);
        }
        let batch: Vec<Example<'_>> = idx
            .iter()
            .zip(&targets)
            .map(|(&i, row)| {
                let t = &self.memory.buffer[i];
                Example {
                    input: &t.state,
                    target: row,
                    mask: Mask::Single(t.action),
                }
            })
            .collect();
        let loss = self.online.sgd_step(&batch, &self.train_cfg, LossKind::SquaredError)?;
        self.step_counter += 1;
        if self.step_counter.is_multiple_of(self.hyper.target_sync_period) {
            self.sync_target();
        }
        Ok(Some(loss))
    }

    pub fn sync_target(&mut self) {
        self.target
            .copy_weights_from(&self.online)
            .expect("online and target share an architecture");
    }

    /// Writes `online.net`, `target.net` and `agent.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.online.save(&dir.join("online.net"))?;
        self.target.save(&dir.join("target.net"))?;
        let meta = AgentMeta {
            state_dim: self.state_dim(),
            action_count: self.action_count(),
            step_counter: self.step_counter,
            experience_steps: self.experience_steps,
            epsilon: self.epsilon(),
            hyper: self.hyper.clone(),
        };
        std::fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Restores an agent saved with [`DqnAgent::save`]; the replay memory starts empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("agent.json");
        let text = std::fs::read_to_string(&meta_path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", meta_path.display())))?;
        let meta: AgentMeta = serde_json::from_str(&text)?;
        let online = Network::load(&dir.join("online.net"))?;
        let target = Network::load(&dir.join("target.net"))?;
        if online.input_dim() != meta.state_dim
            || online.output_dim() != meta.action_count
            || !online.same_architecture(&target)
        {
            return Err(Error::Checkpoint(format!(
                "networks in {} do not match agent metadata",
                dir.display()
            )));
        }
        Ok(Self {
            online,
            target,
            memory: ReplayMemory::new(meta.hyper.replay_capacity)?,
            train_cfg: meta.hyper.train_config(0),
            hyper: meta.hyper,
            step_counter: meta.step_counter,
            experience_steps: meta.experience_steps,
        })
    }
}

/// Index in `valid` with the largest `q`, preferring the lowest action index on ties.
pub fn masked_argmax(q: &[f64], valid: &[usize]) -> usize {
    let mut best = valid[0];
    for &a in &valid[1..] {
        if q[a] > q[best] || (q[a] == q[best] && a < best) {
            best = a;
        }
    }
    best
}
