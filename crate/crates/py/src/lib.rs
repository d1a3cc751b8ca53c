//! Python bindings: analyze a bundle, draft a report from suggestions,
//! finalize, render and replay it.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde_json::json;
use stepwise_core::model::{Action, ActionKind, Bounds, ComponentKey, GridCell, ScreenDims, ShotAddress};
use stepwise_core::reporting::{self, BugReport, ReportFormat};
use stepwise_core::ripper::{self, RipConfig};
use stepwise_core::suggestion::{self, Orientation, StepComponent};
use stepwise_core::{
    AppBundle, EventFlowGraph, ReplayOutcome, ReportDraft, ReportHeader, ReproStep, StateFingerprint, StaticAppModel,
};

create_exception!(stepwise, StepwiseError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    StepwiseError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Grid cell of a rectangle's center, e.g. "Middle Center".
#[pyfunction]
#[pyo3(signature = (left, top, right, bottom, width = 1200, height = 1920))]
fn grid_cell(left: i32, top: i32, right: i32, bottom: i32, width: u32, height: u32) -> PyResult<String> {
    let bounds = Bounds::new(left, top, right, bottom).map_err(value_err)?;
    stepwise_core::grid_cell(bounds, ScreenDims::new(width, height))
        .map(|c| c.to_string())
        .map_err(value_err)
}

#[pyclass(name = "Analysis", frozen)]
struct PyAnalysis {
    inner: Arc<stepwise_core::Analysis>,
}

#[pymethods]
impl PyAnalysis {
    #[getter]
    fn app_id(&self) -> &str {
        &self.inner.graph.app_id
    }

    #[getter]
    fn app_version(&self) -> &str {
        &self.inner.graph.app_version
    }

    /// "K/T activities".
    #[getter]
    fn coverage(&self) -> String {
        self.inner.coverage.to_string()
    }

    #[getter]
    fn state_count(&self) -> usize {
        self.inner.graph.states.len()
    }

    #[getter]
    fn transition_count(&self) -> usize {
        self.inner.graph.transitions.len()
    }

    #[getter]
    fn complete(&self) -> bool {
        self.inner.graph.complete
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Fingerprints of the ripped states, in discovery order.
    fn states(&self) -> Vec<String> {
        self.inner.graph.states.keys().map(|f| f.to_string()).collect()
    }

    fn graph_text(&self) -> String {
        self.inner.graph.to_canonical_string()
    }

    fn static_model_text(&self) -> String {
        self.inner.static_model.to_canonical_string()
    }

    /// Screenshot document bytes by content address.
    fn shot(&self, address: &str) -> PyResult<Vec<u8>> {
        let addr = ShotAddress::parse(address).ok_or_else(|| value_err(format!("bad address {address:?}")))?;
        self.inner
            .shots
            .get(&addr)
            .cloned()
            .ok_or_else(|| err(format!("no shot {address}")))
    }

    /// Writes the analysis into a store directory.
    fn save(&self, store: PathBuf) -> PyResult<()> {
        let store = stepwise_core::Store::open(store).map_err(err)?;
        self.inner.save(&store).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "<Analysis {} {}: {} states, {}>",
            self.inner.graph.app_id,
            self.inner.graph.app_version,
            self.inner.graph.states.len(),
            self.inner.coverage
        )
    }
}

#[pyfunction]
#[pyo3(signature = (bundle, max_depth = 20, max_steps = 10_000))]
fn analyze(bundle: PathBuf, max_depth: usize, max_steps: usize) -> PyResult<PyAnalysis> {
    let analysis = stepwise_core::analyze(&bundle, &RipConfig { max_depth, max_steps }).map_err(err)?;
    Ok(PyAnalysis {
        inner: Arc::new(analysis),
    })
}

fn make_action(kind: &str, text: Option<String>) -> PyResult<Action> {
    let kind: ActionKind = kind.parse().map_err(value_err)?;
    let value = match (kind, text) {
        (ActionKind::Type, Some(t)) => json!({ "kind": "type", "text": t }),
        (ActionKind::Swipe, Some(d)) => json!({ "kind": "swipe", "direction": d }),
        (ActionKind::Type | ActionKind::Swipe, None) => {
            return Err(value_err(format!("{kind} needs text (typed input or swipe direction)")))
        }
        (k, _) => json!({ "kind": k.as_str() }),
    };
    serde_json::from_value(value).map_err(value_err)
}

#[pyclass(name = "Draft")]
struct PyDraft {
    analysis: Arc<stepwise_core::Analysis>,
    inner: ReportDraft,
}

impl PyDraft {
    fn graph(&self) -> &EventFlowGraph {
        &self.analysis.graph
    }

    fn model(&self) -> &StaticAppModel {
        &self.analysis.static_model
    }

    fn push(&mut self, action: Action, component: StepComponent, notes: String) -> PyResult<()> {
        let step = ReproStep {
            step_num: self.inner.steps.len() as u32 + 1,
            action,
            component,
            activity_name: String::new(),
            notes,
        };
        self.inner = suggestion::record_step(&self.analysis.graph, &self.inner, step).map_err(err)?;
        Ok(())
    }
}

#[pymethods]
impl PyDraft {
    #[new]
    #[pyo3(signature = (analysis, title, reporter_name = String::new(), device = String::new(), orientation = "portrait", description = String::new()))]
    fn new(
        analysis: &PyAnalysis,
        title: String,
        reporter_name: String,
        device: String,
        orientation: &str,
        description: String,
    ) -> PyResult<Self> {
        let orientation: Orientation = orientation.parse().map_err(value_err)?;
        let header = ReportHeader {
            reporter_name,
            device,
            orientation,
            title,
            description,
        };
        let inner = ReportDraft::new("py-draft", &analysis.inner.graph, header).map_err(err)?;
        Ok(PyDraft {
            analysis: Arc::clone(&analysis.inner),
            inner,
        })
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.inner.steps.len()
    }

    /// Believed state fingerprints, or None when every known state is possible.
    fn belief(&self) -> Option<Vec<String>> {
        match &self.inner.belief {
            stepwise_core::BeliefState::AllKnown => None,
            stepwise_core::BeliefState::Candidates { states } => Some(states.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn suggest_actions(&self) -> Vec<String> {
        suggestion::suggest_actions(self.graph(), &self.inner.belief)
            .into_iter()
            .map(|k| k.as_str().to_string())
            .collect()
    }

    /// Candidate components as dicts with `key`, `label`, `component_type`,
    /// `text`, `relative_location`, `activity_name`, `crop` and `states`.
    fn suggest_components<'py>(&self, py: Python<'py>, action: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kind: ActionKind = action.parse().map_err(value_err)?;
        suggestion::suggest_components(self.graph(), &self.inner.belief, kind)
            .into_iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("key", c.key().to_string())?;
                d.set_item("label", &c.label)?;
                d.set_item("component_type", &c.descriptor.component_type)?;
                d.set_item("text", &c.descriptor.text)?;
                d.set_item("relative_location", c.descriptor.relative_location.to_string())?;
                d.set_item("activity_name", &c.descriptor.activity_name)?;
                d.set_item("crop", c.crop_address.as_ref().map(|a| a.as_str().to_string()))?;
                d.set_item("states", c.states.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
                Ok(d)
            })
            .collect()
    }

    /// Confirmation screenshots as dicts with `state` and `shot`.
    fn candidate_shots<'py>(&self, py: Python<'py>, action: &str, key: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kind: ActionKind = action.parse().map_err(value_err)?;
        let key: ComponentKey = key.parse().map_err(value_err)?;
        suggestion::candidate_screenshots(self.graph(), &self.inner.belief, kind, &key)
            .map_err(err)?
            .into_iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("state", s.state.to_string())?;
                d.set_item("shot", s.address().as_str())?;
                Ok(d)
            })
            .collect()
    }

    /// Records a step confirmed on an offered screenshot.
    #[pyo3(signature = (action, key, state, shot, text = None, notes = String::new()))]
    fn add_step(
        &mut self,
        action: &str,
        key: &str,
        state: &str,
        shot: &str,
        text: Option<String>,
        notes: String,
    ) -> PyResult<()> {
        let component = StepComponent::Resolved {
            key: key.parse().map_err(value_err)?,
            state: state.parse::<StateFingerprint>().map_err(value_err)?,
            shot: ShotAddress::parse(shot).ok_or_else(|| value_err(format!("bad address {shot:?}")))?,
        };
        self.push(make_action(action, text)?, component, notes)
    }

    /// Records a step for a component the suggestions did not offer.
    #[pyo3(signature = (action, component_type, relative_location, component_text = None, text = None, notes = String::new()))]
    fn add_manual_step(
        &mut self,
        action: &str,
        component_type: String,
        relative_location: &str,
        component_text: Option<String>,
        text: Option<String>,
        notes: String,
    ) -> PyResult<()> {
        let component = StepComponent::Manual {
            component_type,
            text: component_text,
            relative_location: relative_location.parse::<GridCell>().map_err(value_err)?,
        };
        self.push(make_action(action, text)?, component, notes)
    }

    fn delete_step(&mut self, step_num: u32) -> PyResult<()> {
        self.inner = suggestion::delete_step(self.graph(), &self.inner, step_num).map_err(err)?;
        Ok(())
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("drafts serialize")
    }

    fn finalize(&self, report_id: &str) -> PyResult<PyReport> {
        let report = reporting::finalize(&self.inner, self.graph(), self.model(), report_id, chrono::Utc::now())
            .map_err(err)?;
        Ok(PyReport { inner: report })
    }
}

#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: BugReport,
}

#[pymethods]
impl PyReport {
    #[staticmethod]
    fn from_structured(text: &str) -> PyResult<Self> {
        Ok(PyReport {
            inner: reporting::parse_structured(text).map_err(err)?,
        })
    }

    #[getter]
    fn report_id(&self) -> &str {
        &self.inner.report_id
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.inner.steps.len()
    }

    #[pyo3(signature = (format = "structured"))]
    fn render(&self, format: &str) -> PyResult<String> {
        let format: ReportFormat = format.parse().map_err(value_err)?;
        Ok(reporting::render(&self.inner, format))
    }

    fn is_replayable(&self, analysis: &PyAnalysis) -> bool {
        reporting::is_replayable(&self.inner, &analysis.inner.graph)
    }

    /// Replays on the bundle's simulated device. Returns a dict with
    /// `status` and, on failure, `step_num`.
    #[pyo3(signature = (analysis, bundle = None))]
    fn replay<'py>(&self, py: Python<'py>, analysis: &PyAnalysis, bundle: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
        let script = reporting::to_script(&self.inner, &analysis.inner.graph).map_err(err)?;
        let root = bundle.unwrap_or_else(|| analysis.inner.bundle_root.clone());
        let mut device = ripper::simulate(&AppBundle::open(root).map_err(err)?).map_err(err)?;
        let d = PyDict::new(py);
        match reporting::replay(&script, &mut device) {
            ReplayOutcome::Success => d.set_item("status", "success")?,
            ReplayOutcome::Divergence {
                step_num,
                expected,
                observed,
            } => {
                d.set_item("status", "divergence")?;
                d.set_item("step_num", step_num)?;
                d.set_item("expected", expected.to_string())?;
                d.set_item("observed", observed.to_string())?;
            }
            ReplayOutcome::DriverFailure { step_num, message } => {
                d.set_item("status", "driver-failure")?;
                d.set_item("step_num", step_num)?;
                d.set_item("message", message)?;
            }
        }
        Ok(d)
    }
}

#[pymodule]
fn stepwise(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StepwiseError", m.py().get_type::<StepwiseError>())?;
    m.add_function(wrap_pyfunction!(grid_cell, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_class::<PyAnalysis>()?;
    m.add_class::<PyDraft>()?;
    m.add_class::<PyReport>()?;
    Ok(())
}
