//! Analyze an app bundle into an event-flow model and use it to
//! auto-complete, render and replay step-wise bug reports.
//!
//! The flow is: [`primer`] reads the bundle's declared components,
//! [`ripper`] explores the app depth-first on a [`ripper::DeviceDriver`],
//! [`screenshot`] renders every state, [`suggestion`] tracks where a
//! reporter is while they enter steps, and [`reporting`] turns the finished
//! draft into a report and, when every step chains through recorded
//! transitions, a replay script.

pub mod model;
pub mod pipeline;
pub mod primer;
pub mod reporting;
pub mod ripper;
pub mod screenshot;
pub mod store;
pub mod suggestion;
pub mod testkit;

pub use model::{
    grid_cell, Action, ActionKind, Bounds, ComponentDescriptor, ComponentKey, EventFlowGraph,
    GridCell, ScreenDims, ScreenState, ShotAddress, StateFingerprint, Transition,
};
pub use pipeline::{analyze, Analysis, AnalyzeError};
pub use primer::{parse_bundle, AppBundle, StaticAppModel};
pub use reporting::{BugReport, ReplayOutcome, ReplayScript};
pub use ripper::{rip, simulate, RipConfig, SimulatedDevice};
pub use store::Store;
pub use suggestion::{BeliefState, ReportDraft, ReportHeader, ReproStep};
