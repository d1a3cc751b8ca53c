//! A deterministic in-process device driven by a bundle's behavior model.
//!
//! Each behavior state is rendered once from the static layouts plus the
//! state's overrides. Every driver call is appended to a text call log, one
//! line per call:
//!
//! ```text
//! launch cold | launch warm
//! screen <activity>/<window>        (or `screen !` when not in the app)
//! perform <action> <key> -> in_app | external | app_exited | error
//! back
//! at_home true | false
//! ```

use std::collections::HashMap;
use std::fs;

use indexmap::IndexMap;
use thiserror::Error;

use super::behavior::{BehaviorError, BehaviorModel, Target};
use super::driver::{DeviceDriver, DriverError, PerformOutcome};
use crate::model::{assign_object_indices, Action, ActionKind, ComponentKey, ScreenState};
use crate::primer::{self, AppBundle, PrimerError, StaticAppModel};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("bundle has no behavior.model")]
    MissingBehavior,
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Primer(#[from] PrimerError),
    #[error("model malformed: {0}")]
    ModelMalformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Location {
    App(String),
    /// Another app is in front; back returns to the given state.
    External(String),
    Home { last: String },
}

#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    initial: String,
    screens: IndexMap<String, ScreenState>,
    table: HashMap<(String, ComponentKey, ActionKind), Target>,
    location: Location,
    log: Vec<String>,
}

/// Builds a simulated device for a bundle.
pub fn simulate(bundle: &AppBundle) -> Result<SimulatedDevice, SimulationError> {
    let rel = bundle.behavior.as_ref().ok_or(SimulationError::MissingBehavior)?;
    let path = bundle.root.join(rel);
    let text = fs::read_to_string(&path).map_err(|source| PrimerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let behavior = BehaviorModel::parse(&text)?;
    let model = primer::parse_opened(bundle)?;
    SimulatedDevice::new(&model, &behavior)
}

impl SimulatedDevice {
    pub fn new(model: &StaticAppModel, behavior: &BehaviorModel) -> Result<Self, SimulationError> {
        let mut screens = IndexMap::new();
        for (id, spec) in &behavior.states {
            if !model.activities.contains(&spec.activity) {
                return Err(SimulationError::ModelMalformed(format!(
                    "state {id} uses undeclared activity {:?}",
                    spec.activity
                )));
            }
            let mut components = Vec::new();
            for window in &spec.show {
                for c in model.window_components(&spec.activity, window) {
                    if spec.hidden.contains(&c.resource_id) {
                        continue;
                    }
                    let mut c = c.clone();
                    if let Some(t) = spec.text_overrides.get(&c.resource_id) {
                        c.text = Some(t.clone());
                    }
                    c.source_units.clear();
                    components.push(c);
                }
            }
            for rid in spec.hidden.iter().chain(spec.text_overrides.keys()) {
                if model.find(&spec.activity, rid).is_none() {
                    return Err(SimulationError::ModelMalformed(format!(
                        "state {id} overrides undeclared component {rid:?}"
                    )));
                }
            }
            assign_object_indices(&mut components);
            let mut keys = std::collections::HashSet::new();
            if let Some(dup) = components.iter().map(|c| c.key()).find(|k| !keys.insert(k.clone())) {
                return Err(SimulationError::ModelMalformed(format!(
                    "state {id} shows two components keyed {dup}"
                )));
            }
            let screen = ScreenState::new(&spec.activity, &spec.window, model.screen_dims, components);
            screens.insert(id.clone(), screen);
        }

        let mut table = HashMap::new();
        for ((state, cref, kind), target) in &behavior.table {
            let screen = &screens[state];
            let component = screen
                .components
                .iter()
                .find(|c| {
                    c.resource_id == cref.resource_id
                        && cref.index.is_none_or(|i| c.object_index == i)
                })
                .ok_or_else(|| {
                    SimulationError::ModelMalformed(format!(
                        "transition from {state} references {cref}, which that state does not show"
                    ))
                })?;
            table.insert((state.clone(), component.key(), *kind), target.clone());
        }

        Ok(SimulatedDevice {
            initial: behavior.initial.clone(),
            screens,
            table,
            location: Location::Home {
                last: behavior.initial.clone(),
            },
            log: Vec::new(),
        })
    }

    pub fn call_log(&self) -> &[String] {
        &self.log
    }

    pub fn clear_log(&mut self) {
        self.log.clear();
    }

    /// Rendered screen of a behavior state.
    pub fn screen_of(&self, state_id: &str) -> Option<&ScreenState> {
        self.screens.get(state_id)
    }

    pub fn state_ids(&self) -> impl Iterator<Item = &str> {
        self.screens.keys().map(String::as_str)
    }

    pub fn initial_state(&self) -> &str {
        &self.initial
    }

    /// Behavior-state id the device currently shows, if the app is in front.
    pub fn current_state_id(&self) -> Option<&str> {
        match &self.location {
            Location::App(s) => Some(s),
            _ => None,
        }
    }

    /// Where an action would lead from a state, following the table; `None`
    /// means the action is absorbed and the state is unchanged.
    pub fn target(&self, state_id: &str, key: &ComponentKey, kind: ActionKind) -> Option<&Target> {
        self.table.get(&(state_id.to_string(), key.clone(), kind))
    }

    fn perform_inner(&mut self, action: &Action, key: &ComponentKey) -> Result<PerformOutcome, DriverError> {
        let state = match &self.location {
            Location::App(s) => s.clone(),
            Location::External(_) => return Err(DriverError::NotInApp("external app in front".into())),
            Location::Home { .. } => return Err(DriverError::NotInApp("on home screen".into())),
        };
        let component = self.screens[&state]
            .component(key)
            .ok_or_else(|| DriverError::UnknownComponent(key.clone()))?;
        let kind = action.kind();
        if !component.supports(kind) {
            return Err(DriverError::Unsupported {
                key: key.clone(),
                action: kind,
            });
        }
        match self.table.get(&(state.clone(), key.clone(), kind)).cloned() {
            None => Ok(PerformOutcome::InApp),
            Some(Target::State(next)) => {
                self.location = Location::App(next);
                Ok(PerformOutcome::InApp)
            }
            Some(Target::External) => {
                self.location = Location::External(state);
                Ok(PerformOutcome::External)
            }
            Some(Target::Home) => {
                self.location = Location::Home { last: state };
                Ok(PerformOutcome::AppExited)
            }
        }
    }
}

impl DeviceDriver for SimulatedDevice {
    fn launch_app(&mut self, cold: bool) -> Result<(), DriverError> {
        self.log.push(format!("launch {}", if cold { "cold" } else { "warm" }));
        self.location = match (&self.location, cold) {
            (_, true) => Location::App(self.initial.clone()),
            (Location::Home { last }, false) | (Location::External(last), false) => {
                Location::App(last.clone())
            }
            (loc, false) => loc.clone(),
        };
        Ok(())
    }

    fn current_screen(&mut self) -> Result<ScreenState, DriverError> {
        match &self.location {
            Location::App(s) => {
                let screen = self.screens[s].clone();
                self.log
                    .push(format!("screen {}/{}", screen.activity_name, screen.window_id));
                Ok(screen)
            }
            _ => {
                self.log.push("screen !".into());
                Err(DriverError::NotInApp("no app screen to capture".into()))
            }
        }
    }

    fn perform(&mut self, action: &Action, key: &ComponentKey) -> Result<PerformOutcome, DriverError> {
        let result = self.perform_inner(action, key);
        let tag = match &result {
            Ok(PerformOutcome::InApp) => "in_app",
            Ok(PerformOutcome::External) => "external",
            Ok(PerformOutcome::AppExited) => "app_exited",
            Err(_) => "error",
        };
        self.log.push(format!("perform {} {key} -> {tag}", action.kind()));
        result
    }

    fn press_back(&mut self) -> Result<(), DriverError> {
        self.log.push("back".into());
        if let Location::External(s) = &self.location {
            self.location = Location::App(s.clone());
        }
        Ok(())
    }

    fn at_home(&mut self) -> Result<bool, DriverError> {
        let home = matches!(self.location, Location::Home { .. });
        self.log.push(format!("at_home {home}"));
        Ok(home)
    }
}
