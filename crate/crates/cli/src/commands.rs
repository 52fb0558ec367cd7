use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ndqn_core::controller::Architecture;
use ndqn_core::fixtures::Knowledge;
use ndqn_core::harness::{compare, evaluate_checkpoint, run_training, Preset, RunConfig, RunReport, REPORT_FILE};
use ndqn_core::session::{SessionManager, SessionOptions};
use ndqn_core::text::Compression;
use serde::Serialize;

use crate::server;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ndqn_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ndqn", version, about = "Train, evaluate, compare and serve NDQN dialogue policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one system; writes metrics, report and checkpoint when --output is set.
    Train(RunArgs),
    /// Greedy evaluation of a run directory or checkpoint directory.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Compares two runs. Each argument is a finished run directory or a
    /// config file, trained on the spot; config files run one after another.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Also write the comparison as JSON to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serves checkpoints to chat clients over HTTP.
    Serve(ServeArgs),
}

/// Every field of a run configuration. Flags override the config file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with run configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ndqn or dqn_flat.
    #[arg(long)]
    pub mode: Option<Architecture>,
    /// raw or delex_syn.
    #[arg(long)]
    pub compression: Option<Compression>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// desk or full.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub learning_steps: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.compression {
            cfg.compression = v;
        }
        if let Some(v) = self.budget {
            cfg.budget = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.preset {
            cfg.preset = v;
        }
        if let Some(v) = &self.output {
            cfg.output_dir = Some(v.clone());
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = Some(v);
        }
        if let Some(v) = self.learning_steps {
            cfg.learning_steps = Some(v);
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory whose subdirectories are run or checkpoint directories.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Train a desk-scale system at startup and serve it as `desk`.
    #[arg(long)]
    pub demo: bool,
    /// Pass typed text through the simulated recognition noise.
    #[arg(long)]
    pub noisy: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Fixtures from `NDQN_FIXTURES` when set, built-in otherwise.
pub fn knowledge() -> Result<Arc<Knowledge>, CliError> {
    Ok(Arc::new(Knowledge::from_env()?))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(ndqn_core::Error::from)?);
    Ok(())
}

/// A finished run directory, or a config file trained now.
fn report_for(path: &Path, k: &Arc<Knowledge>) -> Result<RunReport, CliError> {
    if path.is_dir() {
        if !path.join(REPORT_FILE).is_file() {
            return Err(CliError::Usage(format!("{} holds no {REPORT_FILE}", path.display())));
        }
        return Ok(RunReport::load(path)?);
    }
    let cfg = RunConfig::load(path)?;
    eprintln!("training {} ({} steps)", cfg.label(), cfg.budget());
    Ok(run_training(&cfg, k.clone())?.report)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = run_training(&cfg, knowledge()?)?;
            print_json(&out.report)
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => print_json(&evaluate_checkpoint(&checkpoint, knowledge()?, episodes, seed)?),
        Command::Compare { a, b, output } => {
            let k = knowledge()?;
            let ra = report_for(&a, &k)?;
            let rb = report_for(&b, &k)?;
            let cmp = compare(&ra, &rb)?;
            if let Some(path) = output {
                std::fs::write(path, serde_json::to_string_pretty(&cmp).map_err(ndqn_core::Error::from)?)?;
            }
            print_json(&cmp)
        }
        Command::Serve(args) => serve(args),
    }
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let k = knowledge()?;
    let options = SessionOptions {
        noisy: args.noisy,
        seed: args.seed,
    };
    let manager = SessionManager::new(k.clone(), args.checkpoints.clone()).with_options(options);
    if args.demo {
        eprintln!("training the desk demo system");
        let cfg = RunConfig {
            eval_episodes: 0,
            ..RunConfig::default()
        };
        manager.register("desk", run_training(&cfg, k)?.system);
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("serving {:?} on http://{}", manager.checkpoints()?, listener.local_addr()?);
        axum::serve(listener, server::router(Arc::new(manager))).await?;
        Ok(())
    })
}
