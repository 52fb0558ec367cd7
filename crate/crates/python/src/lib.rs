//! Python bindings. Structured results cross the boundary as JSON strings
//! with the same schema as the CLI output and the HTTP server.

use std::path::PathBuf;
use std::sync::Arc;

use ndqn_core::fixtures::Knowledge;
use ndqn_core::harness::{self, RunConfig, RunReport};
use ndqn_core::session::SessionManager;
use ndqn_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(ndqn, NdqnError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotFound(m) => PyKeyError::new_err(m),
        Error::Config(_) | Error::Input(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        other => NdqnError::new_err(other.to_string()),
    }
}

fn to_json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| py_err(e.into()))
}

fn knowledge() -> PyResult<Arc<Knowledge>> {
    Knowledge::from_env().map(Arc::new).map_err(py_err)
}

fn config_from(text: Option<&str>, output_dir: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut cfg = match text {
        Some(t) => RunConfig::from_toml_str(t).map_err(py_err)?,
        None => RunConfig::default(),
    };
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    Ok(cfg)
}

/// Trains one system from TOML config text; returns the run report as JSON.
#[pyfunction]
#[pyo3(signature = (config = None, output_dir = None))]
fn train(py: Python<'_>, config: Option<&str>, output_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = config_from(config, output_dir)?;
    let k = knowledge()?;
    let report = py.detach(|| harness::run_training(&cfg, k).map(|o| o.report)).map_err(py_err)?;
    to_json(&report)
}

/// Greedy evaluation of a saved run; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (checkpoint, episodes = 200, seed = 7))]
fn evaluate(py: Python<'_>, checkpoint: PathBuf, episodes: usize, seed: u64) -> PyResult<String> {
    let k = knowledge()?;
    let summary = py
        .detach(|| harness::evaluate_checkpoint(&checkpoint, k, episodes, seed))
        .map_err(py_err)?;
    to_json(&summary)
}

/// Compares two finished run directories; returns the comparison as JSON.
#[pyfunction]
fn compare(run_a: PathBuf, run_b: PathBuf) -> PyResult<String> {
    let a = RunReport::load(&run_a).map_err(py_err)?;
    let b = RunReport::load(&run_b).map_err(py_err)?;
    to_json(&harness::compare(&a, &b).map_err(py_err)?)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    ndqn_core::text::tokenize(text)
}

/// Returns `(s, z, p_increasing)`.
#[pyfunction]
fn mann_kendall(xs: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let mk = ndqn_core::metrics::mann_kendall(&xs).map_err(py_err)?;
    Ok((mk.s, mk.z, mk.p_increasing))
}

/// Live conversations with trained systems.
#[pyclass]
struct Sessions {
    manager: SessionManager,
    knowledge: Arc<Knowledge>,
}

#[pymethods]
impl Sessions {
    #[new]
    #[pyo3(signature = (checkpoint_root = None))]
    fn new(checkpoint_root: Option<PathBuf>) -> PyResult<Self> {
        let knowledge = knowledge()?;
        Ok(Self {
            manager: SessionManager::new(knowledge.clone(), checkpoint_root),
            knowledge,
        })
    }

    /// Trains a system in memory and serves it under `name`.
    #[pyo3(signature = (name, config = None))]
    fn train_and_register(&self, py: Python<'_>, name: &str, config: Option<&str>) -> PyResult<()> {
        let cfg = config_from(config, None)?;
        let k = self.knowledge.clone();
        let system = py.detach(|| harness::run_training(&cfg, k).map(|o| o.system)).map_err(py_err)?;
        self.manager.register(name, system);
        Ok(())
    }

    fn checkpoints(&self) -> PyResult<Vec<String>> {
        self.manager.checkpoints().map_err(py_err)
    }

    fn create(&self, checkpoint: &str) -> PyResult<String> {
        to_json(&self.manager.create_session(checkpoint).map_err(py_err)?)
    }

    fn post(&self, session_id: &str, text: &str) -> PyResult<String> {
        to_json(&self.manager.post_user_turn(session_id, text).map_err(py_err)?)
    }

    fn transcript(&self, session_id: &str) -> PyResult<String> {
        to_json(&self.manager.transcript(session_id).map_err(py_err)?)
    }
}

#[pymodule]
fn ndqn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NdqnError", m.py().get_type::<NdqnError>())?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(mann_kendall, m)?)?;
    m.add_class::<Sessions>()?;
    Ok(())
}
