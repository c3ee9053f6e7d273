//! Python module `cpg_py`.
//!
//! Wraps the configuration, the CPG builder, the closed loop, the joint
//! decoder, the epoch frame codec and the five experiment commands. Every
//! library error surfaces as `ValueError` carrying the library's message.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use cpg_core::bridge as br;
use cpg_core::config::ExperimentConfig;
use cpg_core::experiments::{self as ex, OutputFile};
use cpg_core::{bursting, cpg, decoder, stimulus, CpgError};

fn err(e: CpgError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn files_dict<'py>(py: Python<'py>, files: &[OutputFile]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for f in files {
        d.set_item(&f.name, PyBytes::new(py, &f.contents))?;
    }
    Ok(d)
}

/// Experiment configuration. `Config()` is the shipped default.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: ExperimentConfig::default() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(&path).map(|inner| Self { inner }).map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn realtime(&self) -> bool {
        self.inner.bridge.realtime
    }

    #[setter]
    fn set_realtime(&mut self, on: bool) {
        self.inner.bridge.realtime = on;
    }
}

/// Summary of the wired CPG network.
#[pyclass(name = "Topology")]
struct PyTopology {
    topology: cpg::CpgTopology,
    #[pyo3(get)]
    n_compartments: usize,
    #[pyo3(get)]
    n_synapses: usize,
}

#[pymethods]
impl PyTopology {
    #[staticmethod]
    fn build(config: &PyConfig) -> PyResult<Self> {
        let c = &config.inner;
        let (net, topology) = cpg::build_cpg(
            c.profile(&c.cpg.triplet_profile).map_err(err)?,
            c.profile(&c.cpg.tibia_profile).map_err(err)?,
            &c.cpg.weights,
        )
        .map_err(err)?;
        Ok(Self { n_compartments: net.compartment_count(), n_synapses: net.synapse_count(), topology })
    }

    #[getter]
    fn n_motor(&self) -> usize {
        self.topology.motor.len()
    }

    /// Motor neuron labels in frame order.
    fn motor_labels(&self) -> Vec<String> {
        self.topology.motor.entries().iter().map(|m| m.label()).collect()
    }

    /// `(name, passed, detail)` per structural check.
    fn checks(&self) -> Vec<(String, bool, String)> {
        cpg::validate_topology(&self.topology)
            .checks
            .into_iter()
            .map(|c| (c.name, c.passed, c.detail))
            .collect()
    }

    fn warnings(&self) -> Vec<String> {
        cpg::validate_topology(&self.topology).warnings
    }

    fn edges_csv(&self) -> String {
        self.topology.edges_csv()
    }
}

/// One spike-count packet crossing the engine/controller boundary.
#[pyclass(name = "EpochFrame", from_py_object)]
#[derive(Clone)]
struct PyEpochFrame {
    inner: br::EpochFrame,
}

#[pymethods]
impl PyEpochFrame {
    #[new]
    fn new(epoch_index: u32, counts: Vec<u16>) -> Self {
        Self { inner: br::EpochFrame { epoch_index, counts } }
    }

    #[getter]
    fn epoch_index(&self) -> u32 {
        self.inner.epoch_index
    }

    #[getter]
    fn counts(&self) -> Vec<u16> {
        self.inner.counts.clone()
    }

    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.encode())
    }

    /// Decodes one frame from the start of `data`; returns it with the
    /// number of bytes consumed.
    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<(Self, usize)> {
        br::EpochFrame::decode(data).map(|(inner, n)| (Self { inner }, n)).map_err(err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("EpochFrame(epoch_index={}, counts={:?})", self.inner.epoch_index, self.inner.counts)
    }
}

/// Result of a closed-loop run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    trace: br::RunTrace,
    metrics: br::BridgeMetrics,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn n_ticks(&self) -> usize {
        self.trace.ticks.len()
    }

    fn speeds(&self) -> Vec<f64> {
        self.trace.speeds()
    }

    fn positions(&self) -> Vec<f64> {
        self.trace.ticks.iter().map(|t| t.body.x).collect()
    }

    fn n_grounded(&self) -> Vec<usize> {
        self.trace.ticks.iter().map(|t| t.body.n_grounded()).collect()
    }

    /// `(tibia, coxa)` angle lists per tick, degrees.
    fn angles(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.trace.ticks.iter().map(|t| (t.angles.tibia.to_vec(), t.angles.coxa.to_vec())).collect()
    }

    fn frames(&self) -> Vec<PyEpochFrame> {
        self.trace.frames.iter().cloned().map(|inner| PyEpochFrame { inner }).collect()
    }

    /// `(step, motor index)` of every motor spike.
    fn motor_spikes(&self) -> Vec<(u32, u16)> {
        self.trace.motor_spikes.clone()
    }

    fn body_csv(&self) -> String {
        self.trace.body_csv()
    }

    fn metrics_csv(&self) -> String {
        self.metrics.to_csv()
    }

    /// Simulated time over wall time.
    fn throughput_ratio(&self) -> PyResult<f64> {
        br::compute_rtf(&self.metrics).map(|s| s.throughput_ratio).map_err(err)
    }
}

/// The CPG coupled to the hexapod model.
#[pyclass(name = "ClosedLoop")]
struct PyClosedLoop {
    inner: br::ClosedLoop,
}

#[pymethods]
impl PyClosedLoop {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&PyConfig>) -> PyResult<Self> {
        let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
        ex::build_closed_loop(&cfg).map(|inner| Self { inner }).map_err(err)
    }

    /// Runs under a constant-rate Poisson drive.
    #[pyo3(signature = (rate_hz, duration_s, seed, threaded = false))]
    fn run(&self, py: Python<'_>, rate_hz: f64, duration_s: f64, seed: u64, threaded: bool) -> PyResult<PyRunResult> {
        let mode = if threaded { br::LoopMode::Threaded } else { br::LoopMode::Sequential };
        let n = (duration_s * 1000.0).round().max(0.0) as usize;
        let (trace, metrics) = py
            .detach(|| {
                let train = stimulus::poisson_train(rate_hz, n, seed)?;
                self.inner.run(&train, duration_s, mode, &[])
            })
            .map_err(err)?;
        Ok(PyRunResult { trace, metrics })
    }
}

/// Sorted spike steps of a Poisson train.
#[pyfunction]
fn poisson_train(rate_hz: f64, n_steps: usize, seed: u64) -> PyResult<Vec<u32>> {
    stimulus::poisson_train(rate_hz, n_steps, seed).map(|t| t.spikes().to_vec()).map_err(err)
}

/// Burst statistics of a spike train as a dict.
#[pyfunction]
fn burst_metrics<'py>(py: Python<'py>, spikes: Vec<u32>, gap_threshold: u32) -> PyResult<Bound<'py, PyDict>> {
    let m = bursting::burst_metrics(&spikes, gap_threshold).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_bursts", m.n_bursts)?;
    d.set_item("onsets", m.burst_onsets)?;
    d.set_item("bursts", m.bursts)?;
    d.set_item("spikes_per_burst", m.spikes_per_burst)?;
    d.set_item("mean_burst_duration", m.mean_burst_duration)?;
    d.set_item("mean_interburst_interval", m.mean_interburst_interval)?;
    Ok(d)
}

/// One decoder update of a joint angle, degrees.
#[pyfunction]
fn decode_step(
    theta: f64,
    n_flexor: u32,
    n_extensor: u32,
    theta_min: f64,
    delta_theta_max: f64,
    tolerance: u32,
) -> PyResult<f64> {
    let cfg = decoder::JointConfig::new(theta_min, delta_theta_max, tolerance).map_err(err)?;
    Ok(decoder::decode_step(decoder::JointState { theta }, n_flexor, n_extensor, &cfg).theta)
}

macro_rules! command {
    ($py_name:ident, $cmd:path) => {
        /// Runs the experiment and returns `{file name: bytes}`.
        #[pyfunction]
        #[pyo3(signature = (config = None))]
        fn $py_name<'py>(py: Python<'py>, config: Option<&PyConfig>) -> PyResult<Bound<'py, PyDict>> {
            let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
            let files = py.detach(|| $cmd(&cfg).map(|o| o.files)).map_err(err)?;
            files_dict(py, &files)
        }
    };
}

command!(burst_trace, ex::cmd_burst_trace);
command!(gait, ex::cmd_gait);
command!(speed_dynamic, ex::cmd_speed_dynamic);
command!(speed_sweep, ex::cmd_speed_sweep);
command!(rtf, ex::cmd_rtf);

#[pymodule]
pub fn cpg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTopology>()?;
    m.add_class::<PyEpochFrame>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyClosedLoop>()?;
    m.add_function(wrap_pyfunction!(poisson_train, m)?)?;
    m.add_function(wrap_pyfunction!(burst_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(decode_step, m)?)?;
    m.add_function(wrap_pyfunction!(burst_trace, m)?)?;
    m.add_function(wrap_pyfunction!(gait, m)?)?;
    m.add_function(wrap_pyfunction!(speed_dynamic, m)?)?;
    m.add_function(wrap_pyfunction!(speed_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(rtf, m)?)?;
    m.add("DEFAULT_CONFIG", cpg_core::config::DEFAULT_CONFIG)?;
    Ok(())
}
