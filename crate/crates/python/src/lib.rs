//! Python bindings for `itemchurn`.
//!
//! Structured results cross the boundary as plain dicts and lists built from
//! the same JSON the Rust bundle serialises to.

use std::path::PathBuf;

use itemchurn::synth::{generate_greedy, SynthSpec};
use itemchurn::{compute_item_accuracy, GreedyRun, PairInput, PipelineInput, TrialFormat};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: itemchurn::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_object<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_object<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(json_err)
}

fn format(name: &str) -> PyResult<TrialFormat> {
    match name {
        "jsonl" => Ok(TrialFormat::Jsonl),
        "csv" => Ok(TrialFormat::Csv),
        other => Err(PyValueError::new_err(format!("unknown format {other:?}, expected 'jsonl' or 'csv'"))),
    }
}

/// Per-model trials in item-by-sample form.
#[pyclass(name = "TrialSet", module = "itemchurn_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrialSet {
    inner: itemchurn::TrialSet,
}

#[pymethods]
impl PyTrialSet {
    #[staticmethod]
    #[pyo3(signature = (text, k, format = "jsonl"))]
    fn parse(text: &str, k: usize, format: &str) -> PyResult<Self> {
        let fmt = self::format(format)?;
        let inner = itemchurn::parse_trials(text.as_bytes(), fmt, k).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf, k: usize) -> PyResult<Self> {
        let inner = itemchurn::model::read_trial_file(&path, k).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn item_ids(&self) -> Vec<String> {
        self.inner.item_ids().map(String::from).collect()
    }

    /// Per-item accuracy rows; `p` is None when no sample is valid.
    fn accuracy(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &compute_item_accuracy(&self.inner).rows)
    }

    #[pyo3(signature = (format = "jsonl"))]
    fn dumps(&self, format: &str) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write(&mut buf, self::format(format)?).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("TrialSet(model_id={:?}, items={}, k={})", self.inner.model_id(), self.inner.len(), self.inner.k())
    }
}

/// Single-shot greedy outcomes, one per item.
#[pyclass(name = "GreedyRun", module = "itemchurn_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyGreedyRun {
    inner: GreedyRun,
}

#[pymethods]
impl PyGreedyRun {
    #[staticmethod]
    #[pyo3(signature = (text, format = "jsonl"))]
    fn parse(text: &str, format: &str) -> PyResult<Self> {
        let inner = itemchurn::parse_greedy(text.as_bytes(), self::format(format)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn model_id(&self) -> &str {
        &self.inner.model_id
    }

    fn outcomes(&self) -> Vec<(String, bool)> {
        self.inner.outcomes.iter().map(|(id, c)| (id.clone(), *c)).collect()
    }
}

#[pyfunction]
#[pyo3(signature = (trials, n_splits = 1000, seed = 42))]
fn split_half_reliability(py: Python<'_>, trials: &PyTrialSet, n_splits: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let est = py
        .detach(|| itemchurn::reliability::split_half_reliability(&trials.inner, n_splits, seed))
        .map_err(to_py)?;
    to_object(py, &est)
}

#[pyfunction]
fn icc_2_1(trials: &PyTrialSet) -> PyResult<f64> {
    itemchurn::reliability::icc_2_1(&trials.inner).map_err(to_py)
}

#[pyfunction]
fn spearman_brown(r_half: f64) -> PyResult<f64> {
    itemchurn::reliability::spearman_brown(r_half).map_err(to_py)
}

#[pyfunction]
fn prophecy(r: f64, factor: f64) -> f64 {
    itemchurn::reliability::prophecy(r, factor)
}

#[pyfunction]
#[pyo3(signature = (r_k, k, targets = vec![0.8, 0.9]))]
fn prophecy_k(py: Python<'_>, r_k: f64, k: usize, targets: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_object(py, &itemchurn::reliability::prophecy_k(r_k, k, &targets).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (sem_v1, sem_v2, threshold = 1.96))]
fn pair_measurement(py: Python<'_>, sem_v1: f64, sem_v2: f64, threshold: f64) -> PyResult<Py<PyAny>> {
    to_object(py, &itemchurn::rci::pair_measurement(sem_v1, sem_v2, threshold).map_err(to_py)?)
}

/// Category label for an RCI value; the threshold is strict.
#[pyfunction]
#[pyo3(signature = (rci, threshold = 1.96))]
fn categorize(rci: f64, threshold: f64) -> &'static str {
    itemchurn::rci::categorize(rci, threshold).label()
}

fn pair_input(v1: &PyTrialSet, v2: &PyTrialSet, greedy: Option<(PyGreedyRun, PyGreedyRun)>) -> PairInput {
    PairInput { v1: v1.inner.clone(), v2: v2.inner.clone(), greedy: greedy.map(|(a, b)| (a.inner, b.inner)) }
}

/// Full analysis of one or two model pairs; returns the result bundle.
///
/// `config` is a dict of analysis options; missing keys take defaults.
#[pyfunction]
#[pyo3(signature = (v1, v2, greedy = None, second = None, config = None))]
fn analyze(
    py: Python<'_>,
    v1: &PyTrialSet,
    v2: &PyTrialSet,
    greedy: Option<(PyGreedyRun, PyGreedyRun)>,
    second: Option<(PyTrialSet, PyTrialSet)>,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyAny>> {
    let cfg: itemchurn::AnalysisConfig = match config {
        Some(d) => from_object(py, d.as_any())?,
        None => Default::default(),
    };
    let input = PipelineInput {
        pair: pair_input(v1, v2, greedy),
        second: second.map(|(a, b)| pair_input(&a, &b, None)),
    };
    let bundle = py.detach(|| itemchurn::analyze(&input, &cfg)).map_err(to_py)?;
    to_object(py, &bundle)
}

/// Markdown report for a bundle dict returned by `analyze`.
#[pyfunction]
fn render_report(py: Python<'_>, bundle: &Bound<'_, PyDict>) -> PyResult<String> {
    let bundle: itemchurn::Bundle = from_object(py, bundle.as_any())?;
    Ok(itemchurn::report::render_markdown(&bundle))
}

/// Synthetic pair from a spec dict; returns (v1, v2, truth) and, when
/// `greedy` is set, a fourth element with the two greedy runs.
#[pyfunction]
#[pyo3(signature = (spec, greedy = false))]
fn generate_pair(py: Python<'_>, spec: &Bound<'_, PyDict>, greedy: bool) -> PyResult<Py<PyAny>> {
    let spec: SynthSpec = from_object(py, spec.as_any())?;
    let (v1, v2, truth) = itemchurn::synth::generate_pair(&spec).map_err(to_py)?;
    let v1 = Py::new(py, PyTrialSet { inner: v1 })?;
    let v2 = Py::new(py, PyTrialSet { inner: v2 })?;
    let runs = greedy.then(|| generate_greedy(&spec, &truth));
    let truth = to_object(py, &truth)?;
    if let Some((g1, g2)) = runs {
        let runs = (PyGreedyRun { inner: g1 }, PyGreedyRun { inner: g2 });
        Ok((v1, v2, truth, runs).into_pyobject(py)?.into_any().unbind())
    } else {
        Ok((v1, v2, truth).into_pyobject(py)?.into_any().unbind())
    }
}

#[pymodule]
fn itemchurn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrialSet>()?;
    m.add_class::<PyGreedyRun>()?;
    m.add_function(wrap_pyfunction!(split_half_reliability, m)?)?;
    m.add_function(wrap_pyfunction!(icc_2_1, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_brown, m)?)?;
    m.add_function(wrap_pyfunction!(prophecy, m)?)?;
    m.add_function(wrap_pyfunction!(prophecy_k, m)?)?;
    m.add_function(wrap_pyfunction!(pair_measurement, m)?)?;
    m.add_function(wrap_pyfunction!(categorize, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pair, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
