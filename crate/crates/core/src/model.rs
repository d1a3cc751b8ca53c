//! Shared domain types: geometry, component descriptors, screen states and
//! the event-flow graph built by the ripper.
//!
//! Everything here is an immutable value once constructed. Screen states
//! carry a [`StateFingerprint`] computed over a canonical serialization so
//! that revisits can be detected regardless of document order.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate bounds {0}")]
    Degenerate(Bounds),
    #[error("screen dimensions must be positive, got {0}")]
    EmptyScreen(ScreenDims),
    #[error("bounds {bounds} fall outside the frame {frame}")]
    OutOfFrame { bounds: Bounds, frame: Bounds },
    #[error("cannot parse bounds {0:?}; expected `left,top,right,bottom`")]
    Syntax(String),
}

/// Integer rectangle in screen pixels, `left`/`top` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    /// Builds bounds, rejecting zero or negative area.
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Result<Self, GeometryError> {
        let b = Bounds {
            left,
            top,
            right,
            bottom,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.left < self.right && self.top < self.bottom {
            Ok(())
        } else {
            Err(GeometryError::Degenerate(*self))
        }
    }

    pub fn width(&self) -> i64 {
        self.right as i64 - self.left as i64
    }

    pub fn height(&self) -> i64 {
        self.bottom as i64 - self.top as i64
    }

    pub fn contains(&self, other: &Bounds) -> bool {
        self.left <= other.left
            && self.top <= other.top
            && other.right <= self.right
            && other.bottom <= self.bottom
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.left, self.top, self.right, self.bottom)
    }
}

impl FromStr for Bounds {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<i32> = s
            .split(',')
            .map(|p| p.trim().parse::<i32>())
            .collect::<Result<_, _>>()
            .map_err(|_| GeometryError::Syntax(s.to_string()))?;
        match parts[..] {
            [l, t, r, b] => Bounds::new(l, t, r, b),
            _ => Err(GeometryError::Syntax(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: u32,
    pub height: u32,
}

impl ScreenDims {
    pub const fn new(width: u32, height: u32) -> Self {
        ScreenDims { width, height }
    }

    pub fn frame(&self) -> Bounds {
        Bounds {
            left: 0,
            top: 0,
            right: self.width as i32,
            bottom: self.height as i32,
        }
    }
}

impl Default for ScreenDims {
    /// Portrait tablet profile.
    fn default() -> Self {
        ScreenDims::new(1200, 1920)
    }
}

impl fmt::Display for ScreenDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridRow {
    Top,
    Middle,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridColumn {
    Left,
    Center,
    Right,
}

/// One of the nine relative screen locations, rendered as e.g. "Top Center".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub row: GridRow,
    pub column: GridColumn,
}

impl GridCell {
    pub const ALL: [GridCell; 9] = {
        use GridColumn::*;
        use GridRow::*;
        [
            GridCell { row: Top, column: Left },
            GridCell { row: Top, column: Center },
            GridCell { row: Top, column: Right },
            GridCell { row: Middle, column: Left },
            GridCell { row: Middle, column: Center },
            GridCell { row: Middle, column: Right },
            GridCell { row: Bottom, column: Left },
            GridCell { row: Bottom, column: Center },
            GridCell { row: Bottom, column: Right },
        ]
    };

    pub const fn new(row: GridRow, column: GridColumn) -> Self {
        GridCell { row, column }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = match self.row {
            GridRow::Top => "Top",
            GridRow::Middle => "Middle",
            GridRow::Bottom => "Bottom",
        };
        let column = match self.column {
            GridColumn::Left => "Left",
            GridColumn::Center => "Center",
            GridColumn::Right => "Right",
        };
        write!(f, "{row} {column}")
    }
}

impl FromStr for GridCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GridCell::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown relative location {s:?}"))
    }
}

impl Serialize for GridCell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GridCell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Classifies a component by its center point on a 3x3 grid of equal thirds.
///
/// Intervals are half-open (`[0, w/3)`, `[w/3, 2w/3)`, `[2w/3, w]`), so a
/// center lying exactly on a boundary belongs to the cell below/right of it.
/// The comparison is done on doubled integer coordinates to stay exact.
pub fn grid_cell(bounds: Bounds, dims: ScreenDims) -> Result<GridCell, GeometryError> {
    bounds.validate()?;
    if dims.width == 0 || dims.height == 0 {
        return Err(GeometryError::EmptyScreen(dims));
    }
    let cx2 = bounds.left as i64 + bounds.right as i64;
    let cy2 = bounds.top as i64 + bounds.bottom as i64;
    let (w, h) = (dims.width as i64, dims.height as i64);
    // center < k*w/3  <=>  3 * cx2 < 2 * k * w
    let column = if 3 * cx2 < 2 * w {
        GridColumn::Left
    } else if 3 * cx2 < 4 * w {
        GridColumn::Center
    } else {
        GridColumn::Right
    };
    let row = if 3 * cy2 < 2 * h {
        GridRow::Top
    } else if 3 * cy2 < 4 * h {
        GridRow::Middle
    } else {
        GridRow::Bottom
    };
    Ok(GridCell { row, column })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Click,
    LongClick,
    Type,
    Swipe,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Click,
        ActionKind::LongClick,
        ActionKind::Type,
        ActionKind::Swipe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::LongClick => "long-click",
            ActionKind::Type => "type",
            ActionKind::Swipe => "swipe",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "click" | "tap" => Ok(ActionKind::Click),
            "long-click" | "long-touch" => Ok(ActionKind::LongClick),
            "type" => Ok(ActionKind::Type),
            "swipe" => Ok(ActionKind::Swipe),
            other => Err(format!("unknown action kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwipeDirection {
    Up,
    Down,
    Left,
    Right,
}

/// A gesture, with the typed text or swipe direction where the kind needs one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Action {
    Click,
    LongClick,
    Type { text: String },
    Swipe { direction: SwipeDirection },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click => ActionKind::Click,
            Action::LongClick => ActionKind::LongClick,
            Action::Type { .. } => ActionKind::Type,
            Action::Swipe { .. } => ActionKind::Swipe,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Type { text } => write!(f, "type {text:?}"),
            Action::Swipe { direction } => write!(f, "swipe {direction:?}"),
            other => f.write_str(other.kind().as_str()),
        }
    }
}

/// Identifies a component as `(activity, resource_id, object_index)`.
///
/// The textual form is `activity::resource_id#index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentKey {
    pub activity: String,
    pub resource_id: String,
    pub object_index: u32,
}

impl ComponentKey {
    pub fn new(activity: impl Into<String>, resource_id: impl Into<String>, object_index: u32) -> Self {
        ComponentKey {
            activity: activity.into(),
            resource_id: resource_id.into(),
            object_index,
        }
    }
}

impl fmt::Display for ComponentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}#{}", self.activity, self.resource_id, self.object_index)
    }
}

impl FromStr for ComponentKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed component key {s:?}; expected activity::id#index");
        let (rest, index) = s.rsplit_once('#').ok_or_else(bad)?;
        let (activity, resource_id) = rest.split_once("::").ok_or_else(bad)?;
        let object_index: u32 = index.parse().map_err(|_| bad())?;
        if activity.is_empty() || resource_id.is_empty() || object_index == 0 {
            return Err(bad());
        }
        Ok(ComponentKey::new(activity, resource_id, object_index))
    }
}

impl Serialize for ComponentKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One GUI component as seen statically or on a ripped screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDescriptor {
    pub component_type: String,
    pub resource_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub bounds: Bounds,
    pub relative_location: GridCell,
    pub activity_name: String,
    pub window_id: String,
    pub object_index: u32,
    pub supported_actions: BTreeSet<ActionKind>,
    #[serde(default)]
    pub source_units: Vec<String>,
}

impl ComponentDescriptor {
    pub fn key(&self) -> ComponentKey {
        ComponentKey::new(&self.activity_name, &self.resource_id, self.object_index)
    }

    pub fn supports(&self, kind: ActionKind) -> bool {
        self.supported_actions.contains(&kind)
    }

    /// Text shown for the component: its display text, else its resource id.
    pub fn display_text(&self) -> &str {
        self.text.as_deref().unwrap_or(&self.resource_id)
    }
}

/// Assigns 1-based object indices within each `(component_type, text)` group,
/// in slice order.
pub fn assign_object_indices(components: &mut [ComponentDescriptor]) {
    let mut seen: std::collections::HashMap<(String, Option<String>), u32> = Default::default();
    for c in components.iter_mut() {
        let n = seen
            .entry((c.component_type.clone(), c.text.clone()))
            .or_insert(0);
        *n += 1;
        c.object_index = *n;
    }
}

/// Lowercase-hex content address of a screenshot document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShotAddress(String);

impl ShotAddress {
    pub fn of(bytes: &[u8]) -> Self {
        ShotAddress(hex::encode(Sha256::digest(bytes)))
    }

    /// Accepts a 64-digit lowercase hex string.
    pub fn parse(s: &str) -> Option<Self> {
        let ok = s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| ShotAddress(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ShotAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateFingerprint([u8; 32]);

impl StateFingerprint {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        StateFingerprint(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for StateFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for StateFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateFingerprint({})", self.short())
    }
}

impl FromStr for StateFingerprint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| format!("bad fingerprint {s:?}: {e}"))?;
        Ok(StateFingerprint(out))
    }
}

impl Serialize for StateFingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateFingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fingerprinted GUI state: one activity window and its visible components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenState {
    pub activity_name: String,
    pub window_id: String,
    pub screen_dims: ScreenDims,
    pub components: Vec<ComponentDescriptor>,
    pub fingerprint: StateFingerprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot_ref: Option<ShotAddress>,
}

impl ScreenState {
    pub fn new(
        activity_name: impl Into<String>,
        window_id: impl Into<String>,
        screen_dims: ScreenDims,
        components: Vec<ComponentDescriptor>,
    ) -> Self {
        let mut state = ScreenState {
            activity_name: activity_name.into(),
            window_id: window_id.into(),
            screen_dims,
            components,
            fingerprint: StateFingerprint([0; 32]),
            screenshot_ref: None,
        };
        state.fingerprint = fingerprint(&state);
        state
    }

    pub fn component(&self, key: &ComponentKey) -> Option<&ComponentDescriptor> {
        self.components.iter().find(|c| &c.key() == key)
    }
}

#[derive(Serialize)]
struct CanonicalComponent<'a> {
    activity: &'a str,
    window: &'a str,
    resource_id: &'a str,
    object_index: u32,
    component_type: &'a str,
    text: Option<&'a str>,
    bounds: Bounds,
    actions: &'a BTreeSet<ActionKind>,
}

#[derive(Serialize)]
struct CanonicalState<'a> {
    activity: &'a str,
    window: &'a str,
    dims: ScreenDims,
    components: Vec<CanonicalComponent<'a>>,
}

/// Canonical byte serialization a fingerprint is computed over.
///
/// Components are sorted by `(activity, window, resource_id, object_index)`;
/// the screenshot reference and source-unit links are excluded.
pub fn canonical_state_bytes(state: &ScreenState) -> Vec<u8> {
    let mut components: Vec<CanonicalComponent<'_>> = state
        .components
        .iter()
        .map(|c| CanonicalComponent {
            activity: &c.activity_name,
            window: &c.window_id,
            resource_id: &c.resource_id,
            object_index: c.object_index,
            component_type: &c.component_type,
            text: c.text.as_deref(),
            bounds: c.bounds,
            actions: &c.supported_actions,
        })
        .collect();
    components.sort_by(|a, b| {
        (a.activity, a.window, a.resource_id, a.object_index)
            .cmp(&(b.activity, b.window, b.resource_id, b.object_index))
    });
    let canonical = CanonicalState {
        activity: &state.activity_name,
        window: &state.window_id,
        dims: state.screen_dims,
        components,
    };
    serde_json::to_vec(&canonical).expect("canonical state serializes")
}

pub fn fingerprint(state: &ScreenState) -> StateFingerprint {
    StateFingerprint(Sha256::digest(canonical_state_bytes(state)).into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateFingerprint,
    pub action: Action,
    pub component: ComponentKey,
    pub to: StateFingerprint,
    pub before_shot: ShotAddress,
    pub after_shot: ShotAddress,
    #[serde(default)]
    pub external: bool,
}

/// An action the ripper saw on a discovered state but did not fire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unexplored {
    pub state: StateFingerprint,
    pub component: ComponentKey,
    pub action: ActionKind,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("main state {0} is not among the graph states")]
    MissingMain(StateFingerprint),
    #[error("transition endpoint {0} is not among the graph states")]
    DanglingTransition(StateFingerprint),
    #[error("state stored under {key} has fingerprint {actual}")]
    KeyMismatch {
        key: StateFingerprint,
        actual: StateFingerprint,
    },
}

/// The app execution model: states in discovery order plus click transitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlowGraph {
    pub app_id: String,
    pub app_version: String,
    pub main_state: StateFingerprint,
    pub states: IndexMap<StateFingerprint, ScreenState>,
    pub transitions: Vec<Transition>,
    pub unexplored: Vec<Unexplored>,
    /// False when a depth or step budget cut the exploration short.
    pub complete: bool,
}

impl EventFlowGraph {
    pub fn state(&self, fp: &StateFingerprint) -> Option<&ScreenState> {
        self.states.get(fp)
    }

    pub fn main(&self) -> &ScreenState {
        &self.states[&self.main_state]
    }

    pub fn discovery_index(&self, fp: &StateFingerprint) -> Option<usize> {
        self.states.get_index_of(fp)
    }

    pub fn transitions_from<'a>(
        &'a self,
        fp: &'a StateFingerprint,
    ) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| &t.from == fp)
    }

    /// Recorded transition for `(from, action kind, component)`, if any.
    pub fn transition(
        &self,
        from: &StateFingerprint,
        kind: ActionKind,
        component: &ComponentKey,
    ) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| &t.from == from && t.action.kind() == kind && &t.component == component)
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.states.values().map(|s| s.activity_name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !self.states.contains_key(&self.main_state) {
            return Err(GraphError::MissingMain(self.main_state));
        }
        for (key, state) in &self.states {
            if key != &state.fingerprint {
                return Err(GraphError::KeyMismatch {
                    key: *key,
                    actual: state.fingerprint,
                });
            }
        }
        for t in &self.transitions {
            for end in [&t.from, &t.to] {
                if !self.states.contains_key(end) {
                    return Err(GraphError::DanglingTransition(*end));
                }
            }
        }
        Ok(())
    }

    /// UTF-8 JSON with stable key order and LF line endings.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_canonical_str(s: &str) -> Result<Self, GraphError> {
        let graph: EventFlowGraph = serde_json::from_str(s)?;
        graph.validate()?;
        Ok(graph)
    }
}
