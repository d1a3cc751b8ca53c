use thiserror::Error;

use crate::model::{Action, ActionKind, ComponentKey, ScreenState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriverError {
    #[error("no component {0} on the current screen")]
    UnknownComponent(ComponentKey),
    #[error("component {key} does not support {action}")]
    Unsupported { key: ComponentKey, action: ActionKind },
    #[error("app is not in the foreground ({0})")]
    NotInApp(String),
    #[error("driver failure: {0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerformOutcome {
    /// The app is still in the foreground, possibly on a new screen.
    InApp,
    /// The action would have opened another app.
    External,
    /// The app exited to the home screen.
    AppExited,
}

/// What the ripper and the replayer need from a device.
///
/// `current_screen` returns a fingerprinted state without a screenshot
/// reference; callers attach screenshots themselves.
pub trait DeviceDriver {
    fn launch_app(&mut self, cold: bool) -> Result<(), DriverError>;
    fn current_screen(&mut self) -> Result<ScreenState, DriverError>;
    /// Must fail on a key that is not on the current screen.
    fn perform(&mut self, action: &Action, key: &ComponentKey) -> Result<PerformOutcome, DriverError>;
    fn press_back(&mut self) -> Result<(), DriverError>;
    fn at_home(&mut self) -> Result<bool, DriverError>;
}
