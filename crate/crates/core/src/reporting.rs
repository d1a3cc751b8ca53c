//! Finalized bug reports: rendering, replayability and replay.

use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, ComponentKey, EventFlowGraph, GridCell, ShotAddress, StateFingerprint, Transition,
};
use crate::primer::StaticAppModel;
use crate::ripper::{DeviceDriver, PerformOutcome};
use crate::screenshot::{crop_address, escape_xml};
use crate::suggestion::{ReportDraft, ReportHeader, StepComponent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is invalid: {}", .0.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    Validation(Vec<FieldError>),
    #[error("step {step_num} references component {key} missing from the graph")]
    StaleStep { step_num: u32, key: ComponentKey },
    #[error("unknown report format {0:?}; expected structured or web-page")]
    UnknownFormat(String),
    #[error("report is not replayable: {0}")]
    NotReplayable(String),
    #[error("structured report: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportComponent {
    Resolved {
        key: ComponentKey,
        state: StateFingerprint,
        component_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        relative_location: GridCell,
        source_units: Vec<String>,
        crop: ShotAddress,
        full_shot: ShotAddress,
    },
    Manual {
        component_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        relative_location: GridCell,
    },
}

impl ReportComponent {
    pub fn component_type(&self) -> &str {
        match self {
            ReportComponent::Resolved { component_type, .. }
            | ReportComponent::Manual { component_type, .. } => component_type,
        }
    }

    pub fn relative_location(&self) -> GridCell {
        match self {
            ReportComponent::Resolved {
                relative_location, ..
            }
            | ReportComponent::Manual {
                relative_location, ..
            } => *relative_location,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            ReportComponent::Resolved { text, .. } | ReportComponent::Manual { text, .. } => {
                text.as_deref()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportStep {
    pub step_num: u32,
    pub action: Action,
    pub activity_name: String,
    pub component: ReportComponent,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub report_id: String,
    pub app_id: String,
    pub app_version: String,
    pub header: ReportHeader,
    pub steps: Vec<ReportStep>,
    /// Full-screen shots of the resolved steps, in step order.
    pub full_shots: Vec<ShotAddress>,
    pub created_at: DateTime<Utc>,
}

impl BugReport {
    pub fn is_fully_resolved(&self) -> bool {
        self.steps
            .iter()
            .all(|s| matches!(s.component, ReportComponent::Resolved { .. }))
    }
}

/// Snapshots a draft into a report under the given id.
pub fn finalize(
    draft: &ReportDraft,
    graph: &EventFlowGraph,
    static_model: &StaticAppModel,
    report_id: impl Into<String>,
    created_at: DateTime<Utc>,
) -> Result<BugReport, ReportError> {
    let mut problems = Vec::new();
    if draft.header.title.trim().is_empty() {
        problems.push(FieldError {
            field: "title".into(),
            message: "title must not be empty".into(),
        });
    }
    if draft.steps.is_empty() {
        problems.push(FieldError {
            field: "steps".into(),
            message: "at least one step is required".into(),
        });
    }
    if !problems.is_empty() {
        return Err(ReportError::Validation(problems));
    }

    let mut steps = Vec::with_capacity(draft.steps.len());
    let mut full_shots = Vec::new();
    for step in &draft.steps {
        let component = match &step.component {
            StepComponent::Manual {
                component_type,
                text,
                relative_location,
            } => ReportComponent::Manual {
                component_type: component_type.clone(),
                text: text.clone(),
                relative_location: *relative_location,
            },
            StepComponent::Resolved { key, state, shot } => {
                let stale = || ReportError::StaleStep {
                    step_num: step.step_num,
                    key: key.clone(),
                };
                let screen = graph.state(state).ok_or_else(stale)?;
                let c = screen.component(key).ok_or_else(stale)?;
                let source_units = static_model
                    .find(&c.activity_name, &c.resource_id)
                    .map(|s| s.source_units.clone())
                    .unwrap_or_else(|| c.source_units.clone());
                full_shots.push(shot.clone());
                ReportComponent::Resolved {
                    key: key.clone(),
                    state: *state,
                    component_type: c.component_type.clone(),
                    text: c.text.clone(),
                    relative_location: c.relative_location,
                    source_units,
                    crop: crop_address(screen, key).ok_or_else(stale)?,
                    full_shot: shot.clone(),
                }
            }
        };
        steps.push(ReportStep {
            step_num: step.step_num,
            action: step.action.clone(),
            activity_name: step.activity_name.clone(),
            component,
            notes: step.notes.clone(),
        });
    }
    Ok(BugReport {
        report_id: report_id.into(),
        app_id: draft.app_id.clone(),
        app_version: draft.app_version.clone(),
        header: draft.header.clone(),
        steps,
        full_shots,
        created_at: created_at.trunc_subsecs(0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    WebPage,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(ReportFormat::Structured),
            "web-page" => Ok(ReportFormat::WebPage),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn render(report: &BugReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::WebPage => render_web_page(report),
    }
}

/// Renders with a format token, rejecting unknown tokens.
pub fn render_as(report: &BugReport, format: &str) -> Result<String, ReportError> {
    Ok(render(report, format.parse()?))
}

pub fn parse_structured(s: &str) -> Result<BugReport, ReportError> {
    Ok(serde_json::from_str(s)?)
}

fn shot_path(a: &ShotAddress) -> String {
    format!("shots/{a}.svg")
}

fn render_web_page(r: &BugReport) -> String {
    let e = escape_xml;
    let h = &r.header;
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html xmlns=\"http://www.w3.org/1999/xhtml\" lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n");
    let _ = writeln!(out, "<title>{}: {}</title>", e(&r.report_id), e(&h.title));
    out.push_str("<style>body{font-family:sans-serif;margin:2em}section{margin-bottom:2em}#preliminary,#steps{border-left:4px solid #2d6cdf;padding-left:1em}#gallery{border-left:4px solid #2f9e44;padding-left:1em}.step-image{max-height:80px;vertical-align:middle}.gallery-entry img{max-width:240px}</style>\n</head>\n<body>\n");
    let _ = writeln!(out, "<h1>Report {}</h1>", e(&r.report_id));

    out.push_str("<section class=\"report-section\" id=\"preliminary\">\n<h2>Preliminary Information</h2>\n<dl>\n");
    let fields = [
        ("Title", h.title.clone()),
        ("Reporter", h.reporter_name.clone()),
        ("Device", h.device.clone()),
        (
            "Orientation",
            serde_json::to_value(h.orientation)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        ),
        ("App", format!("{} {}", r.app_id, r.app_version)),
        ("Created", r.created_at.to_rfc3339()),
        ("Description", h.description.clone()),
    ];
    for (k, v) in fields {
        let _ = writeln!(out, "<dt>{k}</dt><dd>{}</dd>", e(&v));
    }
    out.push_str("</dl>\n</section>\n");

    out.push_str("<section class=\"report-section\" id=\"steps\">\n<h2>Steps to Reproduce</h2>\n<ol>\n");
    for s in &r.steps {
        let _ = write!(out, "<li class=\"step\" data-step=\"{}\">", s.step_num);
        let _ = write!(out, "<span class=\"step-action\">{}</span> ", e(&s.action.to_string()));
        let _ = write!(out, "<span class=\"step-type\">{}</span> ", e(s.component.component_type()));
        if let Some(t) = s.component.text() {
            let _ = write!(out, "<span class=\"step-text\">{}</span> ", e(t));
        }
        let _ = write!(
            out,
            "<span class=\"step-location\">{}</span> ",
            s.component.relative_location()
        );
        match &s.component {
            ReportComponent::Resolved {
                source_units, crop, ..
            } => {
                let sources = if source_units.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", source_units.join(", "))
                };
                let _ = write!(
                    out,
                    "<span class=\"step-source\">{}{}</span> ",
                    e(&s.activity_name),
                    e(&sources)
                );
                let _ = write!(
                    out,
                    "<img class=\"step-image\" src=\"{}\" alt=\"component for step {}\"/>",
                    shot_path(crop),
                    s.step_num
                );
            }
            ReportComponent::Manual {
                component_type,
                text,
                relative_location,
            } => {
                out.push_str("<span class=\"step-source\">unknown</span> ");
                let _ = write!(
                    out,
                    "<span class=\"step-image manual\">{} \"{}\" at {}</span>",
                    e(component_type),
                    e(text.as_deref().unwrap_or("")),
                    relative_location
                );
            }
        }
        if !s.notes.is_empty() {
            let _ = write!(out, "<p class=\"step-notes\">{}</p>", e(&s.notes));
        }
        out.push_str("</li>\n");
    }
    out.push_str("</ol>\n</section>\n");

    out.push_str("<section class=\"report-section\" id=\"gallery\">\n<h2>Screenshots</h2>\n");
    for (i, a) in r.full_shots.iter().enumerate() {
        let _ = writeln!(
            out,
            "<figure class=\"gallery-entry\"><img src=\"{}\" alt=\"screen {}\"/><figcaption>Screen {}</figcaption></figure>",
            shot_path(a),
            i + 1,
            i + 1
        );
    }
    out.push_str("</section>\n</body>\n</html>\n");
    out
}

/// The recorded transitions the report's steps chain through, starting from
/// the main state, or a description of the first step that breaks it.
fn transition_chain<'g>(report: &BugReport, graph: &'g EventFlowGraph) -> Result<Vec<&'g Transition>, String> {
    if report.app_id != graph.app_id || report.app_version != graph.app_version {
        return Err("report and graph describe different apps".into());
    }
    let mut current = graph.main_state;
    let mut chain = Vec::with_capacity(report.steps.len());
    for s in &report.steps {
        let ReportComponent::Resolved { key, state, .. } = &s.component else {
            return Err(format!("step {} was entered manually", s.step_num));
        };
        if *state != current {
            return Err(format!("step {} was confirmed on an unexpected screen", s.step_num));
        }
        let t = graph
            .transition(&current, s.action.kind(), key)
            .ok_or_else(|| format!("no recorded transition for step {}", s.step_num))?;
        chain.push(t);
        current = t.to;
    }
    Ok(chain)
}

pub fn is_replayable(report: &BugReport, graph: &EventFlowGraph) -> bool {
    transition_chain(report, graph).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub action: Action,
    pub component: ComponentKey,
    /// Screen expected after this entry.
    pub expect: StateFingerprint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub app_id: String,
    pub app_version: String,
    pub entries: Vec<ScriptEntry>,
    pub expected_final: StateFingerprint,
}

impl ReplayScript {
    /// A script with no entries; replay only checks the cold-start screen.
    pub fn empty(graph: &EventFlowGraph) -> Self {
        ReplayScript {
            app_id: graph.app_id.clone(),
            app_version: graph.app_version.clone(),
            entries: Vec::new(),
            expected_final: graph.main_state,
        }
    }
}

pub fn to_script(report: &BugReport, graph: &EventFlowGraph) -> Result<ReplayScript, ReportError> {
    let chain = transition_chain(report, graph).map_err(ReportError::NotReplayable)?;
    let mut script = ReplayScript::empty(graph);
    for (step, t) in report.steps.iter().zip(chain) {
        script.entries.push(ScriptEntry {
            action: step.action.clone(),
            component: t.component.clone(),
            expect: t.to,
        });
        script.expected_final = t.to;
    }
    Ok(script)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ReplayOutcome {
    Success,
    Divergence {
        step_num: u32,
        expected: StateFingerprint,
        observed: StateFingerprint,
    },
    DriverFailure {
        step_num: u32,
        message: String,
    },
}

/// Cold-launches the app and executes the script, comparing the screen
/// after every entry. Step 0 denotes the launch itself.
pub fn replay<D: DeviceDriver + ?Sized>(script: &ReplayScript, driver: &mut D) -> ReplayOutcome {
    let fail = |step_num: u32, e: &dyn std::fmt::Display| ReplayOutcome::DriverFailure {
        step_num,
        message: e.to_string(),
    };
    if let Err(e) = driver.launch_app(true) {
        return fail(0, &e);
    }
    let mut observed = match driver.current_screen() {
        Ok(s) => s.fingerprint,
        Err(e) => return fail(0, &e),
    };
    for (i, entry) in script.entries.iter().enumerate() {
        let step_num = i as u32 + 1;
        match driver.perform(&entry.action, &entry.component) {
            Ok(PerformOutcome::InApp) => {}
            Ok(PerformOutcome::External) => {
                if let Err(e) = driver.press_back() {
                    return fail(step_num, &e);
                }
            }
            Ok(PerformOutcome::AppExited) => return fail(step_num, &"app exited to the home screen"),
            Err(e) => return fail(step_num, &e),
        }
        observed = match driver.current_screen() {
            Ok(s) => s.fingerprint,
            Err(e) => return fail(step_num, &e),
        };
        if observed != entry.expect {
            return ReplayOutcome::Divergence {
                step_num,
                expected: entry.expect,
                observed,
            };
        }
    }
    if observed != script.expected_final {
        return ReplayOutcome::Divergence {
            step_num: script.entries.len() as u32,
            expected: script.expected_final,
            observed,
        };
    }
    ReplayOutcome::Success
}
