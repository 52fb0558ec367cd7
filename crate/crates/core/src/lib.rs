//! Network of deep Q-networks for multi-domain dialogue management.

pub mod classifiers;
pub mod controller;
pub mod domain;
pub mod dqn;
pub mod env;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod metrics;
pub mod mlp;
pub mod session;
pub mod text;

pub use error::{Error, Result};
