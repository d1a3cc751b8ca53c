//! Dynamic analysis: depth-first GUI ripping over a [`DeviceDriver`].
//!
//! The ripper cold-launches the app, then fires a click on every clickable
//! component of each newly discovered state in document order, recursing
//! into new states. States are deduplicated globally by fingerprint. An
//! action that would leave the app is answered with a back press; if the app
//! drops to the home screen it is relaunched and the DFS path to the current
//! frontier is replayed from the root.

pub mod behavior;
pub mod driver;
pub mod sim;

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

pub use behavior::{BehaviorError, BehaviorModel, ComponentRef, StateSpec, Target};
pub use driver::{DeviceDriver, DriverError, PerformOutcome};
pub use sim::{simulate, SimulatedDevice, SimulationError};

use crate::model::{
    Action, ActionKind, ComponentKey, EventFlowGraph, ScreenState, ShotAddress, StateFingerprint,
    Transition, Unexplored,
};
use crate::primer::StaticAppModel;
use crate::screenshot::render_screen;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RipConfig {
    pub max_depth: usize,
    pub max_steps: usize,
}

impl Default for RipConfig {
    fn default() -> Self {
        RipConfig {
            max_depth: 20,
            max_steps: 10_000,
        }
    }
}

impl RipConfig {
    /// Only clicks are fired during exploration.
    pub const ACTIONS_TO_FIRE: [ActionKind; 1] = [ActionKind::Click];
}

#[derive(Debug, Error)]
pub enum RipError {
    #[error("could not launch the app: {0}")]
    Launch(#[source] DriverError),
    #[error("driver failed mid-rip: {source}")]
    Driver {
        #[source]
        source: DriverError,
        partial: Box<EventFlowGraph>,
    },
    #[error("replaying the DFS path did not restore state {expected}")]
    Restore {
        expected: StateFingerprint,
        partial: Box<EventFlowGraph>,
    },
}

impl RipError {
    /// The graph built before the failure, when one exists.
    pub fn partial(&self) -> Option<&EventFlowGraph> {
        match self {
            RipError::Launch(_) => None,
            RipError::Driver { partial, .. } | RipError::Restore { partial, .. } => Some(partial),
        }
    }
}

enum Failure {
    Driver(DriverError),
    Restore(StateFingerprint),
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        Failure::Driver(e)
    }
}

struct Session<'a, D: ?Sized> {
    driver: &'a mut D,
    model: &'a StaticAppModel,
    config: RipConfig,
    graph: EventFlowGraph,
    fired: usize,
}

impl<D: DeviceDriver + ?Sized> Session<'_, D> {
    fn observe(&mut self) -> Result<ScreenState, DriverError> {
        let mut screen = self.driver.current_screen()?;
        for c in &mut screen.components {
            if let Some(s) = self.model.find(&c.activity_name, &c.resource_id) {
                c.source_units = s.source_units.clone();
            }
        }
        screen.screenshot_ref = Some(render_screen(&screen).address());
        Ok(screen)
    }

    fn shot(&self, fp: &StateFingerprint) -> ShotAddress {
        self.graph.states[fp]
            .screenshot_ref
            .clone()
            .expect("ripped states carry a screenshot")
    }

    fn clickable(&self, fp: &StateFingerprint) -> Vec<ComponentKey> {
        self.graph.states[fp]
            .components
            .iter()
            .filter(|c| c.supports(ActionKind::Click))
            .map(|c| c.key())
            .collect()
    }

    fn defer(&mut self, state: StateFingerprint, component: ComponentKey) {
        self.graph.complete = false;
        let entry = Unexplored {
            state,
            component,
            action: ActionKind::Click,
        };
        if !self.graph.unexplored.contains(&entry) {
            self.graph.unexplored.push(entry);
        }
    }

    fn replay_path(&mut self, path: &[ComponentKey]) -> Result<(), Failure> {
        self.driver.launch_app(true)?;
        for key in path {
            match self.driver.perform(&Action::Click, key)? {
                PerformOutcome::InApp => {}
                PerformOutcome::External => self.driver.press_back()?,
                PerformOutcome::AppExited => {
                    return Err(Failure::Driver(DriverError::Other(format!(
                        "app exited while replaying {key}"
                    ))))
                }
            }
        }
        Ok(())
    }

    /// Brings the device back to `fp`, replaying the DFS path if needed.
    fn ensure_at(&mut self, fp: StateFingerprint, path: &[ComponentKey]) -> Result<(), Failure> {
        if !self.driver.at_home()? && self.driver.current_screen()?.fingerprint == fp {
            return Ok(());
        }
        self.replay_path(path)?;
        if self.driver.current_screen()?.fingerprint != fp {
            return Err(Failure::Restore(fp));
        }
        Ok(())
    }

    fn explore(
        &mut self,
        fp: StateFingerprint,
        depth: usize,
        path: &mut Vec<ComponentKey>,
    ) -> Result<(), Failure> {
        for key in self.clickable(&fp) {
            if self.fired >= self.config.max_steps {
                self.defer(fp, key);
                continue;
            }
            self.ensure_at(fp, path)?;
            let outcome = self.driver.perform(&Action::Click, &key)?;
            self.fired += 1;
            let (to_state, external) = match outcome {
                PerformOutcome::InApp => (self.observe()?, false),
                PerformOutcome::External => {
                    self.driver.press_back()?;
                    (self.observe()?, true)
                }
                PerformOutcome::AppExited => {
                    // nothing to record; the next ensure_at replays the path
                    self.driver.launch_app(true)?;
                    continue;
                }
            };
            let to = to_state.fingerprint;
            let is_new = !self.graph.states.contains_key(&to);
            if is_new {
                self.graph.states.insert(to, to_state);
            }
            let transition = Transition {
                from: fp,
                action: Action::Click,
                component: key.clone(),
                to,
                before_shot: self.shot(&fp),
                after_shot: self.shot(&to),
                external,
            };
            self.graph.transitions.push(transition);
            if is_new {
                if depth + 1 < self.config.max_depth {
                    path.push(key);
                    self.explore(to, depth + 1, path)?;
                    path.pop();
                } else {
                    for k in self.clickable(&to) {
                        self.defer(to, k);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rips the app behind `driver` into an event-flow graph.
///
/// Budget exhaustion is not an error: the graph comes back with
/// `complete == false` and the skipped actions listed in `unexplored`.
pub fn rip<D: DeviceDriver + ?Sized>(
    driver: &mut D,
    static_model: &StaticAppModel,
    config: &RipConfig,
) -> Result<EventFlowGraph, RipError> {
    driver.launch_app(true).map_err(RipError::Launch)?;
    let mut session = Session {
        driver,
        model: static_model,
        config: *config,
        graph: EventFlowGraph {
            app_id: static_model.app_id.clone(),
            app_version: static_model.app_version.clone(),
            main_state: StateFingerprint::from_bytes([0; 32]),
            states: IndexMap::new(),
            transitions: Vec::new(),
            unexplored: Vec::new(),
            complete: true,
        },
        fired: 0,
    };
    let main = session.observe().map_err(RipError::Launch)?;
    let main_fp = main.fingerprint;
    session.graph.main_state = main_fp;
    session.graph.states.insert(main_fp, main);

    let result = if config.max_depth == 0 {
        for k in session.clickable(&main_fp) {
            session.defer(main_fp, k);
        }
        Ok(())
    } else {
        session.explore(main_fp, 0, &mut Vec::new())
    };
    let graph = session.graph;
    match result {
        Ok(()) => Ok(graph),
        Err(Failure::Driver(source)) => Err(RipError::Driver {
            source,
            partial: Box::new(graph),
        }),
        Err(Failure::Restore(expected)) => Err(RipError::Restore {
            expected,
            partial: Box::new(graph),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub visited: usize,
    pub total: usize,
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} activities", self.visited, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("static model declares no activities")]
    NoActivities,
    #[error("graph is for {graph}, static model for {model}")]
    AppMismatch { graph: String, model: String },
}

/// Distinct activities reached by the rip over activities declared statically.
pub fn activity_coverage(
    graph: &EventFlowGraph,
    static_model: &StaticAppModel,
) -> Result<Coverage, CoverageError> {
    if static_model.activities.is_empty() {
        return Err(CoverageError::NoActivities);
    }
    if graph.app_id != static_model.app_id {
        return Err(CoverageError::AppMismatch {
            graph: graph.app_id.clone(),
            model: static_model.app_id.clone(),
        });
    }
    Ok(Coverage {
        visited: graph.activities().len(),
        total: static_model.activities.len(),
    })
}
