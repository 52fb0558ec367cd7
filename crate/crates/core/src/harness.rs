//! Training runs, greedy evaluation of checkpoints and run-to-run comparison.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Architecture, EpisodeOptions, NdqnSystem, SystemConfig, TrainOptions};
use crate::dqn::AgentHyperparams;
use crate::env::{EnvConfig, Simulator};
use crate::error::{Error, Result};
use crate::fixtures::Knowledge;
use crate::metrics::{EpisodeSummary, EvalSummary, MetricsRow, TrainingLog};
use crate::text::Compression;

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Largest absolute success difference still counted as preserved quality.
pub const SUCCESS_TOLERANCE: f64 = 0.05;

const EVAL_SEED_OFFSET: u64 = 1_000_003;
const TRAIN_RNG_SALT: u64 = 0x7261_6e64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced catalog, 20K steps, checkpoints every 500 steps.
    #[default]
    Desk,
    /// Full catalog, 150K steps, 30K-step exploration horizon.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        })
    }
}

impl Preset {
    pub fn env_config(self) -> EnvConfig {
        EnvConfig {
            full_catalog: self == Preset::Full,
            ..EnvConfig::default()
        }
    }

    pub fn hyper(self) -> AgentHyperparams {
        match self {
            Preset::Desk => AgentHyperparams {
                learning_steps: 4_000,
                target_sync_period: 500,
                ..AgentHyperparams::default()
            },
            Preset::Full => AgentHyperparams::default(),
        }
    }

    pub fn budget(self) -> usize {
        match self {
            Preset::Desk => 20_000,
            Preset::Full => 150_000,
        }
    }

    pub fn checkpoint_every(self) -> usize {
        match self {
            Preset::Desk => 500,
            Preset::Full => 5_000,
        }
    }
}

/// One training run. Unset optional fields take the preset's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Architecture,
    pub compression: Compression,
    /// Total environment steps across all agents.
    pub budget: Option<usize>,
    pub seed: u64,
    pub preset: Preset,
    pub output_dir: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    /// Per-agent exploration horizon.
    pub learning_steps: Option<u64>,
    /// Greedy episodes run after training; 0 skips evaluation.
    pub eval_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Architecture::Ndqn,
            compression: Compression::DelexSyn,
            budget: None,
            seed: 7,
            preset: Preset::Desk,
            output_dir: None,
            checkpoint_every: None,
            learning_steps: None,
            eval_episodes: 200,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or_else(|| self.preset.budget())
    }

    pub fn checkpoint_every(&self) -> usize {
        self.checkpoint_every.unwrap_or_else(|| self.preset.checkpoint_every())
    }

    pub fn env_config(&self) -> EnvConfig {
        self.preset.env_config()
    }

    pub fn system_config(&self) -> SystemConfig {
        let mut hyper = self.preset.hyper();
        if let Some(ls) = self.learning_steps {
            hyper.learning_steps = ls;
        }
        SystemConfig {
            architecture: self.mode,
            compression: self.compression,
            hyper,
            ..SystemConfig::default()
        }
    }

    /// Short description such as `ndqn/delex_syn`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.mode, self.compression)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget() == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.checkpoint_every() == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.system_config().hyper.validate()
    }
}

/// Summary written next to the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub config: RunConfig,
    pub budget: usize,
    pub episodes: usize,
    pub elapsed_seconds: f64,
    pub final_row: Option<MetricsRow>,
    pub eval: Option<EvalSummary>,
    /// Input dimension of every agent.
    pub state_dims: Vec<usize>,
    /// Mean reward of the first and last tenth of the training episodes.
    pub reward_trend: Option<(f64, f64)>,
}

impl RunReport {
    pub fn max_state_dim(&self) -> usize {
        self.state_dims.iter().copied().max().unwrap_or(0)
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::NotFound(format!("run report {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Success used for quality comparisons: the greedy evaluation when
    /// present, otherwise the final checkpoint row.
    pub fn success(&self) -> Option<f64> {
        self.eval
            .filter(|e| e.episodes > 0)
            .map(|e| e.avg_success)
            .or_else(|| self.final_row.map(|r| r.avg_success))
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub log: TrainingLog,
    pub system: NdqnSystem,
}

/// Trains one system as configured. With an output directory, writes the
/// metrics CSV, the run report, the effective config and the final checkpoint.
pub fn run_training(config: &RunConfig, knowledge: Arc<Knowledge>) -> Result<RunOutcome> {
    config.validate()?;
    let mut env = Simulator::new(knowledge, config.env_config(), config.seed)?;
    let mut system = NdqnSystem::build(&env, config.system_config(), config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ TRAIN_RNG_SALT);
    let log = system.train(
        &mut env,
        TrainOptions {
            budget: config.budget(),
            checkpoint_every: config.checkpoint_every(),
        },
        &mut rng,
    )?;
    let eval = if config.eval_episodes > 0 {
        let mut eval_env = system.make_env(config.seed.wrapping_add(EVAL_SEED_OFFSET))?;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(EVAL_SEED_OFFSET));
        Some(system.evaluate(&mut eval_env, config.eval_episodes, &mut eval_rng)?)
    } else {
        None
    };
    let report = RunReport {
        label: config.label(),
        config: config.clone(),
        budget: config.budget(),
        episodes: log.episodes.len(),
        elapsed_seconds: log.total_elapsed(),
        final_row: log.final_row().copied(),
        eval,
        state_dims: system.views().iter().map(|v| v.dim()).collect(),
        reward_trend: log.reward_trend(0.1),
    };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        log.write_csv(&dir.join(METRICS_FILE))?;
        std::fs::write(dir.join(CONFIG_FILE), config.to_toml_string()?)?;
        std::fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
        system.save(&dir.join(CHECKPOINT_DIR))?;
    }
    Ok(RunOutcome { report, log, system })
}

/// Accepts a run directory or the checkpoint directory inside it.
pub fn checkpoint_path(path: &Path) -> PathBuf {
    if path.join("system.json").is_file() {
        path.to_path_buf()
    } else {
        path.join(CHECKPOINT_DIR)
    }
}

pub fn load_checkpoint(path: &Path, knowledge: Arc<Knowledge>) -> Result<NdqnSystem> {
    NdqnSystem::load(&checkpoint_path(path), knowledge)
}

/// Greedy evaluation of a saved system.
pub fn evaluate_checkpoint(path: &Path, knowledge: Arc<Knowledge>, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut system = load_checkpoint(path, knowledge)?;
    evaluate_system(&mut system, episodes, seed)
}

pub fn evaluate_system(system: &mut NdqnSystem, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut env = system.make_env(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    system.evaluate(&mut env, episodes, &mut rng)
}

/// Uniformly random choice among the constrained actions, without learning.
pub fn random_policy_baseline(system: &mut NdqnSystem, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut env = system.make_env(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = EpisodeOptions {
        epsilon: Some(1.0),
        ..EpisodeOptions::greedy()
    };
    let mut eps: Vec<EpisodeSummary> = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        eps.push(system.run_episode(&mut env, opts, &mut rng)?.summary());
    }
    Ok(EvalSummary::from_episodes(&eps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub budget: usize,
    pub elapsed_a: f64,
    pub elapsed_b: f64,
    /// `elapsed_b / elapsed_a`: how many times faster A trained than B.
    pub speedup: f64,
    /// Final checkpoint row of B minus that of A.
    pub delta_reward: f64,
    pub delta_success: f64,
    pub delta_length: f64,
    /// Greedy evaluation success of B minus A, when both were evaluated.
    pub delta_eval_success: Option<f64>,
    pub state_dim_a: usize,
    pub state_dim_b: usize,
    /// Success of A and B within [`SUCCESS_TOLERANCE`].
    pub quality_preserved: bool,
}

/// Compares two finished runs; runs with different budgets are refused.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if a.budget != b.budget {
        return Err(Error::Input(format!(
            "cannot compare runs with budgets {} and {}",
            a.budget, b.budget
        )));
    }
    let (ra, rb) = match (a.final_row, b.final_row) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => return Err(Error::Input("both runs need at least one checkpoint row".into())),
    };
    let speedup = if a.elapsed_seconds == b.elapsed_seconds {
        1.0
    } else {
        b.elapsed_seconds / a.elapsed_seconds
    };
    let delta_eval_success = match (a.eval, b.eval) {
        (Some(ea), Some(eb)) if ea.episodes > 0 && eb.episodes > 0 => Some(eb.avg_success - ea.avg_success),
        _ => None,
    };
    let quality_preserved = match (a.success(), b.success()) {
        (Some(sa), Some(sb)) => (sa - sb).abs() <= SUCCESS_TOLERANCE + 1e-12,
        _ => false,
    };
    Ok(Comparison {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        budget: a.budget,
        elapsed_a: a.elapsed_seconds,
        elapsed_b: b.elapsed_seconds,
        speedup,
        delta_reward: rb.avg_reward - ra.avg_reward,
        delta_success: rb.avg_success - ra.avg_success,
        delta_length: rb.avg_length - ra.avg_length,
        delta_eval_success,
        state_dim_a: a.max_state_dim(),
        state_dim_b: b.max_state_dim(),
        quality_preserved,
    })
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "A: {}  B: {}  budget {}", self.label_a, self.label_b, self.budget)?;
        writeln!(
            f,
            "elapsed A {:.2}s  B {:.2}s  speedup (B/A) {:.3}",
            self.elapsed_a, self.elapsed_b, self.speedup
        )?;
        writeln!(
            f,
            "final deltas (B-A): reward {:+.4}  success {:+.4}  length {:+.3}",
            self.delta_reward, self.delta_success, self.delta_length
        )?;
        if let Some(d) = self.delta_eval_success {
            writeln!(f, "greedy success delta (B-A): {d:+.4}")?;
        }
        writeln!(f, "state dims A {}  B {}", self.state_dim_a, self.state_dim_b)?;
        write!(
            f,
            "quality preserved within {:.2}: {}",
            SUCCESS_TOLERANCE,
            if self.quality_preserved { "yes" } else { "no" }
        )
    }
}
