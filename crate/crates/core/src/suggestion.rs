//! Step-wise auto-completion over a ripped event-flow graph.
//!
//! A draft report is a stream of confirmed steps. The engine folds those
//! steps into a [`BeliefState`]: the set of graph states the reporter's app
//! could be in right now. Suggestions are drawn from the believed states and
//! the states one recorded transition away from them. Steps entered through
//! the manual "not in this list" path, or confirmed on a state the graph has
//! no successor for, widen the belief to every known state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, ActionKind, ComponentDescriptor, ComponentKey, EventFlowGraph, GridCell, ShotAddress,
    StateFingerprint,
};
use crate::primer::{component_types, StaticAppModel};
use crate::screenshot::{augmented_in, crop_address, AugmentedShot};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuggestError {
    #[error("graph has no states")]
    EmptyGraph,
    #[error("expected step number {expected}, got {got}")]
    Sequencing { expected: u32, got: u32 },
    #[error("component {key} is not offered on the believed screens")]
    StaleSuggestion { key: ComponentKey },
    #[error("state {0} is not in the graph")]
    UnknownState(StateFingerprint),
    #[error("screenshot {0} does not show the confirmed component")]
    ShotMismatch(ShotAddress),
    #[error("no step {0}")]
    StepNotFound(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BeliefState {
    /// States in graph discovery order.
    Candidates { states: Vec<StateFingerprint> },
    /// Model gap: any known state is possible.
    AllKnown,
}

impl BeliefState {
    pub fn contains(&self, fp: &StateFingerprint) -> bool {
        match self {
            BeliefState::Candidates { states } => states.contains(fp),
            BeliefState::AllKnown => true,
        }
    }

    pub fn is_all_known(&self) -> bool {
        matches!(self, BeliefState::AllKnown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Portrait,
    Landscape,
}

impl std::str::FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "portrait" => Ok(Orientation::Portrait),
            "landscape" => Ok(Orientation::Landscape),
            o => Err(format!("orientation must be portrait or landscape, got {o:?}")),
        }
    }
}

/// Fields 1-5 of the report form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub reporter_name: String,
    pub device: String,
    pub orientation: Orientation,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepComponent {
    /// Picked from the suggestions and confirmed on an augmented screenshot.
    Resolved {
        key: ComponentKey,
        state: StateFingerprint,
        shot: ShotAddress,
    },
    /// Entered by hand when the component was not offered.
    Manual {
        component_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        relative_location: GridCell,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproStep {
    pub step_num: u32,
    pub action: Action,
    pub component: StepComponent,
    /// Activity of the confirmed screen; empty for manual steps.
    #[serde(default)]
    pub activity_name: String,
    #[serde(default)]
    pub notes: String,
}

impl ReproStep {
    pub fn is_manual(&self) -> bool {
        matches!(self.component, StepComponent::Manual { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDraft {
    pub draft_id: String,
    pub app_id: String,
    pub app_version: String,
    pub header: ReportHeader,
    pub steps: Vec<ReproStep>,
    pub belief: BeliefState,
    /// Report id once the draft has been finalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized_as: Option<String>,
}

impl ReportDraft {
    pub fn new(
        draft_id: impl Into<String>,
        graph: &EventFlowGraph,
        header: ReportHeader,
    ) -> Result<Self, SuggestError> {
        Ok(ReportDraft {
            draft_id: draft_id.into(),
            app_id: graph.app_id.clone(),
            app_version: graph.app_version.clone(),
            header,
            steps: Vec::new(),
            belief: initial_belief(graph)?,
            finalized_as: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateComponent {
    pub descriptor: ComponentDescriptor,
    pub label: String,
    pub crop_address: Option<ShotAddress>,
    /// Considered states showing this component, in discovery order.
    pub states: Vec<StateFingerprint>,
}

impl CandidateComponent {
    pub fn key(&self) -> ComponentKey {
        self.descriptor.key()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfirmationShot {
    pub state: StateFingerprint,
    pub shot: AugmentedShot,
}

impl ConfirmationShot {
    pub fn address(&self) -> ShotAddress {
        self.shot.address()
    }
}

/// Cold start: the reporter begins on the app's first screen.
pub fn initial_belief(graph: &EventFlowGraph) -> Result<BeliefState, SuggestError> {
    if !graph.states.contains_key(&graph.main_state) {
        return Err(SuggestError::EmptyGraph);
    }
    Ok(BeliefState::Candidates {
        states: vec![graph.main_state],
    })
}

fn in_discovery_order(graph: &EventFlowGraph, states: impl IntoIterator<Item = StateFingerprint>) -> Vec<StateFingerprint> {
    let set: BTreeSet<(usize, StateFingerprint)> = states
        .into_iter()
        .filter_map(|fp| graph.discovery_index(&fp).map(|i| (i, fp)))
        .collect();
    set.into_iter().map(|(_, fp)| fp).collect()
}

/// Believed states plus their recorded one-step successors.
pub fn considered_states(graph: &EventFlowGraph, belief: &BeliefState) -> Vec<StateFingerprint> {
    match belief {
        BeliefState::AllKnown => graph.states.keys().copied().collect(),
        BeliefState::Candidates { states } => {
            let successors = states
                .iter()
                .flat_map(|fp| graph.transitions_from(fp).map(|t| t.to));
            in_discovery_order(graph, states.iter().copied().chain(successors))
        }
    }
}

pub fn suggest_actions(graph: &EventFlowGraph, belief: &BeliefState) -> Vec<ActionKind> {
    match belief {
        BeliefState::AllKnown => ActionKind::ALL.to_vec(),
        BeliefState::Candidates { states } => {
            let kinds: BTreeSet<ActionKind> = states
                .iter()
                .filter_map(|fp| graph.state(fp))
                .flat_map(|s| s.components.iter())
                .flat_map(|c| c.supported_actions.iter().copied())
                .collect();
            kinds.into_iter().collect()
        }
    }
}

fn base_label(c: &ComponentDescriptor) -> String {
    format!(
        "{} \"{}\" at {}",
        c.component_type,
        c.display_text(),
        c.relative_location
    )
}

pub fn suggest_components(
    graph: &EventFlowGraph,
    belief: &BeliefState,
    kind: ActionKind,
) -> Vec<CandidateComponent> {
    let mut out: Vec<CandidateComponent> = Vec::new();
    for fp in considered_states(graph, belief) {
        let state = &graph.states[&fp];
        for c in state.components.iter().filter(|c| c.supports(kind)) {
            let key = c.key();
            match out.iter_mut().find(|x| x.key() == key) {
                Some(existing) => existing.states.push(fp),
                None => out.push(CandidateComponent {
                    descriptor: c.clone(),
                    label: base_label(c),
                    crop_address: crop_address(state, &key),
                    states: vec![fp],
                }),
            }
        }
    }
    // identical (type, text) entries are told apart as "Option N"
    let group_of = |c: &CandidateComponent| {
        (
            c.descriptor.component_type.clone(),
            c.descriptor.display_text().to_string(),
        )
    };
    let groups: Vec<_> = out.iter().map(group_of).collect();
    for i in 0..out.len() {
        let size = groups.iter().filter(|g| **g == groups[i]).count();
        if size > 1 {
            let n = groups[..=i].iter().filter(|g| **g == groups[i]).count();
            out[i].label = format!("{} (Option {n})", out[i].label);
        }
    }
    out
}

/// One augmented full-screen shot per considered state showing `key`.
pub fn candidate_screenshots(
    graph: &EventFlowGraph,
    belief: &BeliefState,
    kind: ActionKind,
    key: &ComponentKey,
) -> Result<Vec<ConfirmationShot>, SuggestError> {
    let shots: Vec<ConfirmationShot> = considered_states(graph, belief)
        .into_iter()
        .filter(|fp| graph.states[fp].component(key).is_some_and(|c| c.supports(kind)))
        .filter_map(|fp| {
            augmented_in(graph, &fp, key).map(|shot| ConfirmationShot { state: fp, shot })
        })
        .collect();
    if shots.is_empty() {
        return Err(SuggestError::StaleSuggestion { key: key.clone() });
    }
    Ok(shots)
}

/// Belief after one step, given only the graph and the step itself.
fn advance(graph: &EventFlowGraph, step: &ReproStep) -> BeliefState {
    match &step.component {
        StepComponent::Manual { .. } => BeliefState::AllKnown,
        StepComponent::Resolved { key, state, .. } => {
            let kind = step.action.kind();
            let matching: Vec<StateFingerprint> = graph
                .transitions_from(state)
                .filter(|t| t.action.kind() == kind && &t.component == key)
                .map(|t| t.to)
                .collect();
            let states = in_discovery_order(graph, matching);
            if states.is_empty() {
                BeliefState::AllKnown
            } else {
                BeliefState::Candidates { states }
            }
        }
    }
}

/// Belief after applying `steps` from a cold start.
pub fn refold(graph: &EventFlowGraph, steps: &[ReproStep]) -> Result<BeliefState, SuggestError> {
    let mut belief = initial_belief(graph)?;
    for s in steps {
        belief = advance(graph, s);
    }
    Ok(belief)
}

fn validate_resolved(graph: &EventFlowGraph, step: &ReproStep) -> Result<String, SuggestError> {
    let StepComponent::Resolved { key, state, shot } = &step.component else {
        return Ok(String::new());
    };
    let screen = graph.state(state).ok_or(SuggestError::UnknownState(*state))?;
    let component = screen
        .component(key)
        .filter(|c| c.supports(step.action.kind()))
        .ok_or_else(|| SuggestError::StaleSuggestion { key: key.clone() })?;
    let expected = augmented_in(graph, state, &component.key())
        .map(|a| a.address())
        .ok_or_else(|| SuggestError::StaleSuggestion { key: key.clone() })?;
    if &expected != shot {
        return Err(SuggestError::ShotMismatch(shot.clone()));
    }
    Ok(screen.activity_name.clone())
}

/// Appends a step and advances the belief.
pub fn record_step(
    graph: &EventFlowGraph,
    draft: &ReportDraft,
    mut step: ReproStep,
) -> Result<ReportDraft, SuggestError> {
    let expected = draft.steps.len() as u32 + 1;
    if step.step_num != expected {
        return Err(SuggestError::Sequencing {
            expected,
            got: step.step_num,
        });
    }
    step.activity_name = validate_resolved(graph, &step)?;
    let mut next = draft.clone();
    next.belief = advance(graph, &step);
    next.steps.push(step);
    Ok(next)
}

/// Removes a step, renumbers the rest and refolds the belief.
pub fn delete_step(
    graph: &EventFlowGraph,
    draft: &ReportDraft,
    step_num: u32,
) -> Result<ReportDraft, SuggestError> {
    let pos = draft
        .steps
        .iter()
        .position(|s| s.step_num == step_num)
        .ok_or(SuggestError::StepNotFound(step_num))?;
    let mut next = draft.clone();
    next.steps.remove(pos);
    for (i, s) in next.steps.iter_mut().enumerate() {
        s.step_num = i as u32 + 1;
    }
    next.belief = refold(graph, &next.steps)?;
    Ok(next)
}

/// Component types the manual-entry form may offer.
pub fn manual_entry_vocabulary(model: &StaticAppModel) -> Vec<String> {
    component_types(model)
}
