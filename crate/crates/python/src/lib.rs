//! Python bindings for the `dlperf` performance models.
//!
//! Units follow the Rust crate: seconds, bytes, bytes per second.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use dlperf::analytic::{self, IterationEstimate};
use dlperf::comm;
use dlperf::model::{LayerProfile, OverlapPolicy, PhaseProfile};
use dlperf::reference::bundled;
use dlperf::scenario::{run_sweep, run_validate, ScenarioConfig, SweepDimension};
use dlperf::sim::{self, FrontPhases};

create_exception!(dlperf_py, DlperfError, PyException);

/// `(value, gpus, iter_time, speedup, efficiency, exposed_comm)`.
type SweepTuple = (f64, u32, f64, f64, f64, f64);

fn err(e: dlperf::Error) -> PyErr {
    DlperfError::new_err(e.to_string())
}

#[pyclass(name = "PhaseProfile", from_py_object)]
#[derive(Clone)]
struct PyPhaseProfile {
    inner: PhaseProfile,
}

#[pymethods]
impl PyPhaseProfile {
    #[new]
    #[pyo3(signature = (t_io, t_h2d, t_f, t_b, t_u, t_comm = 0.0))]
    fn new(t_io: f64, t_h2d: f64, t_f: f64, t_b: f64, t_u: f64, t_comm: f64) -> PyResult<Self> {
        let inner = PhaseProfile::new(t_io, t_h2d, t_f, t_b, t_u, t_comm);
        inner.validate().into_result().map_err(err)?;
        Ok(PyPhaseProfile { inner })
    }

    #[getter]
    fn t_gpu(&self) -> f64 {
        self.inner.t_gpu()
    }

    fn as_dict(&self) -> BTreeMap<&'static str, f64> {
        self.inner.fields().into_iter().collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "PhaseProfile(t_io={}, t_h2d={}, t_f={}, t_b={}, t_u={}, t_comm={})",
            p.t_io, p.t_h2d, p.t_f, p.t_b, p.t_u, p.t_comm
        )
    }
}

/// Per-layer backward, communication and update times, layer 1 first.
#[pyclass(name = "LayerProfile", from_py_object)]
#[derive(Clone)]
struct PyLayerProfile {
    inner: LayerProfile,
}

#[pymethods]
impl PyLayerProfile {
    #[new]
    #[pyo3(signature = (t_b, t_comm, t_u = Vec::new()))]
    fn new(t_b: Vec<f64>, t_comm: Vec<f64>, t_u: Vec<f64>) -> PyResult<Self> {
        if t_b.len() != t_comm.len() || (!t_u.is_empty() && t_u.len() != t_b.len()) {
            return Err(DlperfError::new_err("t_b, t_comm and t_u must have the same length"));
        }
        let inner = LayerProfile::from_times(&t_b, &t_comm, &t_u);
        dlperf::model::validate_layer_profile(&inner, None)
            .into_result()
            .map_err(err)?;
        Ok(PyLayerProfile { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `"case1"`, `"case2(C=k)"` or `"irregular"`.
    fn overlap_case(&self) -> String {
        analytic::classify_overlap(&self.inner).to_string()
    }

    #[getter]
    fn backward_total(&self) -> f64 {
        self.inner.backward_total()
    }

    #[getter]
    fn comm_total(&self) -> f64 {
        self.inner.comm_total()
    }
}

#[pyclass(name = "Estimate", frozen, skip_from_py_object)]
struct PyEstimate {
    #[pyo3(get)]
    mode: String,
    #[pyo3(get)]
    total: f64,
    /// Exposed seconds per phase.
    #[pyo3(get)]
    terms: BTreeMap<&'static str, f64>,
    #[pyo3(get)]
    hidden_io: f64,
    #[pyo3(get)]
    hidden_comm: f64,
    #[pyo3(get)]
    overlap_case: Option<String>,
}

impl From<IterationEstimate> for PyEstimate {
    fn from(e: IterationEstimate) -> Self {
        PyEstimate {
            mode: e.mode.to_string(),
            total: e.total,
            terms: e.terms.iter().map(|(p, t)| (p.name(), *t)).collect(),
            hidden_io: e.hidden_io,
            hidden_comm: e.hidden_comm,
            overlap_case: e.overlap_case.map(|c| c.to_string()),
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(mode={:?}, total={})", self.mode, self.total)
    }
}

#[pyclass(name = "Trace", frozen, skip_from_py_object)]
struct PyTrace {
    #[pyo3(get)]
    makespan: f64,
    #[pyo3(get)]
    exposed_comm: f64,
    #[pyo3(get)]
    hidden_comm: f64,
    #[pyo3(get)]
    comm_span: (f64, f64),
    /// `(iteration, kind, layer, time)` tuples in event order.
    #[pyo3(get)]
    events: Vec<(usize, &'static str, Option<usize>, f64)>,
    csv: String,
}

impl From<sim::SimTrace> for PyTrace {
    fn from(t: sim::SimTrace) -> Self {
        PyTrace {
            makespan: t.makespan,
            exposed_comm: t.exposed_comm,
            hidden_comm: t.hidden_comm,
            comm_span: t.comm_span,
            events: t
                .events
                .iter()
                .map(|e| (e.iteration, e.kind.name(), e.kind.layer(), e.time))
                .collect(),
            csv: t.to_csv(),
        }
    }
}

#[pymethods]
impl PyTrace {
    fn to_csv(&self) -> String {
        self.csv.clone()
    }
}

#[pyfunction]
fn iter_time_sequential(phases: &PyPhaseProfile) -> PyEstimate {
    analytic::iter_time_sequential(&phases.inner).into()
}

#[pyfunction]
fn iter_time_pipelined_io(phases: &PyPhaseProfile) -> PyEstimate {
    analytic::iter_time_pipelined_io(&phases.inner).into()
}

#[pyfunction]
fn iter_time_overlapped(t_io: f64, t_h2d: f64, t_f: f64, layers: &PyLayerProfile) -> PyResult<PyEstimate> {
    analytic::iter_time_overlapped(t_io, t_h2d, t_f, &layers.inner)
        .map(Into::into)
        .map_err(err)
}

/// Seconds to read `m` samples on each of `n_g` GPUs sharing one cache link.
#[pyfunction]
fn io_time(m: u64, n_g: u32, sample_bytes: f64, b_cache: f64) -> PyResult<f64> {
    analytic::io_time(m, n_g, sample_bytes, b_cache).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (grad_bytes, p, bandwidth, latency = 0.0, efficiency = 1.0))]
fn allreduce_time(grad_bytes: f64, p: u32, bandwidth: f64, latency: f64, efficiency: f64) -> PyResult<f64> {
    comm::allreduce_time(grad_bytes, p, bandwidth, latency, efficiency).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (grad_bytes, p, server_bandwidth, latency = 0.0))]
fn ps_time(grad_bytes: f64, p: u32, server_bandwidth: f64, latency: f64) -> PyResult<f64> {
    comm::ps_time(grad_bytes, p, server_bandwidth, latency).map_err(err)
}

fn sim_policy(comm_overlap: bool) -> OverlapPolicy {
    OverlapPolicy {
        comm_overlap,
        ..OverlapPolicy::sequential()
    }
}

/// Event-driven schedule of one iteration with I/O not prefetched.
#[pyfunction]
#[pyo3(signature = (t_io, t_h2d, t_f, layers, comm_overlap = true))]
fn simulate_iteration(t_io: f64, t_h2d: f64, t_f: f64, layers: &PyLayerProfile, comm_overlap: bool) -> PyResult<PyTrace> {
    let front = FrontPhases::new(t_io, t_h2d, t_f);
    sim::simulate_iteration(&front, &layers.inner, &sim_policy(comm_overlap))
        .map(Into::into)
        .map_err(err)
}

/// Mean iteration time over `n_iters` back-to-back iterations, first excluded.
#[pyfunction]
#[pyo3(signature = (t_io, t_h2d, t_f, layers, comm_overlap = true, n_iters = 50))]
fn steady_state_iter_time(
    t_io: f64,
    t_h2d: f64,
    t_f: f64,
    layers: &PyLayerProfile,
    comm_overlap: bool,
    n_iters: usize,
) -> PyResult<f64> {
    let front = FrontPhases::new(t_io, t_h2d, t_f);
    sim::steady_state_iter_time(&front, &layers.inner, &sim_policy(comm_overlap), n_iters)
        .map(|s| s.mean)
        .map_err(err)
}

/// A scenario file: phases, policy, cluster and scale list.
#[pyclass(name = "Scenario", frozen, skip_from_py_object)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ScenarioConfig::load(path).map(|inner| PyScenario { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (text, source = "<string>"))]
    fn from_toml(text: &str, source: &str) -> PyResult<Self> {
        ScenarioConfig::from_toml_str(text, source)
            .map(|inner| PyScenario { inner })
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn scales(&self) -> Vec<u32> {
        self.inner.scale_list()
    }

    /// Returns `(estimate, speedup, efficiency)` at `gpus`.
    fn estimate(&self, gpus: u32) -> PyResult<(PyEstimate, f64, f64)> {
        let e = self.inner.estimate_at(gpus).map_err(err)?;
        Ok((e.estimate.into(), e.speedup.speedup, e.speedup.efficiency))
    }

    /// Returns `(trace, steady_state_mean)` at `gpus`.
    fn simulate(&self, gpus: u32) -> PyResult<(PyTrace, f64)> {
        let run = self.inner.simulate_at(gpus).map_err(err)?;
        Ok((run.trace.into(), run.steady.mean))
    }

    /// Rows of `(value, gpus, iter_time, speedup, efficiency, exposed_comm)`
    /// in input order.
    #[pyo3(signature = (dimension, values, gpus = None))]
    fn sweep(&self, dimension: &str, values: Vec<f64>, gpus: Option<u32>) -> PyResult<Vec<SweepTuple>> {
        let dim: SweepDimension = dimension.parse().map_err(DlperfError::new_err)?;
        let rows = run_sweep(&self.inner, dim, &values, gpus).map_err(err)?;
        Ok(rows
            .iter()
            .map(|r| (r.value, r.gpus, r.iter_time, r.speedup, r.efficiency, r.exposed_comm))
            .collect())
    }
}

/// Validates scenarios against the bundled reference data. Returns
/// `(rows, mean_rel_error, max_rel_error)`; each row is
/// `(scenario, metric, predicted, measured, rel_error)`.
#[allow(clippy::type_complexity)]
#[pyfunction]
fn validate(
    scenarios: Vec<PyRef<'_, PyScenario>>,
) -> PyResult<(Vec<(String, String, f64, Option<f64>, Option<f64>)>, Option<f64>, Option<f64>)> {
    let configs: Vec<ScenarioConfig> = scenarios.iter().map(|s| s.inner.clone()).collect();
    let report = run_validate(&bundled(), &configs).map_err(err)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            (
                r.scenario.to_string(),
                r.metric.to_string(),
                r.predicted,
                r.measured.map(|m| m.mean),
                r.rel_error,
            )
        })
        .collect();
    Ok((rows, report.mean_rel_error(), report.max_rel_error()))
}

#[pymodule]
fn dlperf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DlperfError", m.py().get_type::<DlperfError>())?;
    m.add_class::<PyPhaseProfile>()?;
    m.add_class::<PyLayerProfile>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(iter_time_sequential, m)?)?;
    m.add_function(wrap_pyfunction!(iter_time_pipelined_io, m)?)?;
    m.add_function(wrap_pyfunction!(iter_time_overlapped, m)?)?;
    m.add_function(wrap_pyfunction!(io_time, m)?)?;
    m.add_function(wrap_pyfunction!(allreduce_time, m)?)?;
    m.add_function(wrap_pyfunction!(ps_time, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_iter_time, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
