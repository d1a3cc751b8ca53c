//! The `behavior.model` transition table that drives the simulated device.
//!
//! ```text
//! behavior-model v1
//! initial <state>
//! state <state> <Activity> <window> [show=<window>,<window>...]
//! hide <state> <resource_id>
//! text <state> <resource_id> <replacement text...>
//! on <state> <action> <resource_id>[#index] -> <state> | EXTERNAL | HOME
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. A state shows the
//! components of its own window unless `show=` lists the windows to stack,
//! top-most first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::ActionKind;

pub const HEADER: &str = "behavior-model v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("behavior.model:{line}: {message}")]
pub struct BehaviorError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpec {
    pub activity: String,
    pub window: String,
    pub show: Vec<String>,
    pub hidden: BTreeSet<String>,
    pub text_overrides: BTreeMap<String, String>,
}

/// Reference to a component on a rendered state: resource id plus an
/// optional object index (first match when absent).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentRef {
    pub resource_id: String,
    pub index: Option<u32>,
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}#{i}", self.resource_id),
            None => f.write_str(&self.resource_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    State(String),
    External,
    Home,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::State(s) => f.write_str(s),
            Target::External => f.write_str("EXTERNAL"),
            Target::Home => f.write_str("HOME"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorModel {
    pub initial: String,
    pub states: IndexMap<String, StateSpec>,
    pub table: BTreeMap<(String, ComponentRef, ActionKind), Target>,
}

impl BehaviorModel {
    pub fn parse(text: &str) -> Result<Self, BehaviorError> {
        let err = |line: usize, message: String| BehaviorError { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        match lines.next() {
            Some((_, HEADER)) => {}
            Some((n, other)) => {
                return Err(err(n, format!("expected header {HEADER:?}, found {other:?}")))
            }
            None => return Err(err(1, "empty behavior model".into())),
        }

        let mut initial: Option<(usize, String)> = None;
        let mut states: IndexMap<String, StateSpec> = IndexMap::new();
        // state references are checked once every state is declared
        let mut pending: Vec<(usize, String)> = Vec::new();
        let mut overrides: Vec<(usize, String, String, Option<String>)> = Vec::new();
        let mut table = BTreeMap::new();

        for (n, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "initial" if words.len() == 2 => {
                    if initial.is_some() {
                        return Err(err(n, "initial declared twice".into()));
                    }
                    initial = Some((n, words[1].to_string()));
                }
                "state" if (4..=5).contains(&words.len()) => {
                    let window = words[3].to_string();
                    let show = match words.get(4) {
                        None => vec![window.clone()],
                        Some(w) => match w.strip_prefix("show=") {
                            Some(list) => list.split(',').map(str::to_string).collect(),
                            None => return Err(err(n, format!("unexpected {w:?}"))),
                        },
                    };
                    let spec = StateSpec {
                        activity: words[2].to_string(),
                        window,
                        show,
                        hidden: BTreeSet::new(),
                        text_overrides: BTreeMap::new(),
                    };
                    if states.insert(words[1].to_string(), spec).is_some() {
                        return Err(err(n, format!("state {} declared twice", words[1])));
                    }
                }
                "hide" if words.len() == 3 => {
                    overrides.push((n, words[1].into(), words[2].into(), None));
                }
                "text" if words.len() >= 4 => {
                    let text = line
                        .splitn(4, char::is_whitespace)
                        .nth(3)
                        .unwrap_or_default()
                        .trim()
                        .to_string();
                    overrides.push((n, words[1].into(), words[2].into(), Some(text)));
                }
                "on" if words.len() == 6 && words[4] == "->" => {
                    let kind: ActionKind = words[2].parse().map_err(|e| err(n, e))?;
                    let component = parse_ref(words[3]).map_err(|e| err(n, e))?;
                    let target = match words[5] {
                        "EXTERNAL" => Target::External,
                        "HOME" => Target::Home,
                        s => {
                            pending.push((n, s.to_string()));
                            Target::State(s.to_string())
                        }
                    };
                    pending.push((n, words[1].to_string()));
                    let key = (words[1].to_string(), component, kind);
                    if table.contains_key(&key) {
                        return Err(err(n, format!("duplicate transition for {} {} {}", key.0, kind, key.1)));
                    }
                    table.insert(key, target);
                }
                other => return Err(err(n, format!("unrecognized directive {other:?}"))),
            }
        }

        let (init_line, initial) = initial.ok_or_else(|| err(1, "no initial state".into()))?;
        pending.push((init_line, initial.clone()));
        for (n, s) in &pending {
            if !states.contains_key(s) {
                return Err(err(*n, format!("unknown state {s:?}")));
            }
        }
        for (n, state, id, text) in overrides {
            let spec = states
                .get_mut(&state)
                .ok_or_else(|| err(n, format!("unknown state {state:?}")))?;
            match text {
                None => {
                    spec.hidden.insert(id);
                }
                Some(t) => {
                    spec.text_overrides.insert(id, t);
                }
            }
        }
        Ok(BehaviorModel {
            initial,
            states,
            table,
        })
    }

    /// Serializes back to the text format; `parse(to_text())` is an identity.
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\ninitial {}\n", self.initial);
        for (id, s) in &self.states {
            out.push_str(&format!("state {id} {} {}", s.activity, s.window));
            if s.show != [s.window.clone()] {
                out.push_str(&format!(" show={}", s.show.join(",")));
            }
            out.push('\n');
        }
        for (id, s) in &self.states {
            for h in &s.hidden {
                out.push_str(&format!("hide {id} {h}\n"));
            }
            for (rid, t) in &s.text_overrides {
                out.push_str(&format!("text {id} {rid} {t}\n"));
            }
        }
        for ((state, component, kind), target) in &self.table {
            out.push_str(&format!("on {state} {kind} {component} -> {target}\n"));
        }
        out
    }
}

fn parse_ref(s: &str) -> Result<ComponentRef, String> {
    match s.rsplit_once('#') {
        Some((id, idx)) => {
            let index: u32 = idx
                .parse()
                .ok()
                .filter(|i| *i > 0)
                .ok_or_else(|| format!("bad object index in {s:?}"))?;
            Ok(ComponentRef {
                resource_id: id.to_string(),
                index: Some(index),
            })
        }
        None => Ok(ComponentRef {
            resource_id: s.to_string(),
            index: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
behavior-model v1
initial a
state a Main w1 show=w1,w0
state b Main w0
hide b ok
text b title Hello world
on a click ok -> b
on b click link#2 -> EXTERNAL
on b long-click quit -> HOME
";

    #[test]
    fn parses_all_directives() {
        let m = BehaviorModel::parse(SAMPLE).unwrap();
        assert_eq!(m.initial, "a");
        assert_eq!(m.states["a"].show, vec!["w1", "w0"]);
        assert!(m.states["b"].hidden.contains("ok"));
        assert_eq!(m.states["b"].text_overrides["title"], "Hello world");
        assert_eq!(m.table.len(), 3);
        let key = (
            "b".to_string(),
            ComponentRef {
                resource_id: "link".into(),
                index: Some(2),
            },
            ActionKind::Click,
        );
        assert_eq!(m.table[&key], Target::External);
    }

    #[test]
    fn text_form_round_trips() {
        let m = BehaviorModel::parse(SAMPLE).unwrap();
        assert_eq!(BehaviorModel::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_models() {
        let cases = [
            ("initial a\n", "header"),
            ("behavior-model v2\n", "header"),
            ("behavior-model v1\nstate a M w0\n", "no initial"),
            ("behavior-model v1\ninitial z\nstate a M w0\n", "unknown initial"),
            ("behavior-model v1\ninitial a\nstate a M w0\non a click x -> q\n", "unknown target"),
            (
                "behavior-model v1\ninitial a\nstate a M w0\non a click x -> a\non a click x -> HOME\n",
                "duplicate key",
            ),
            ("behavior-model v1\ninitial a\nstate a M w0\nfly a\n", "directive"),
        ];
        for (text, why) in cases {
            assert!(BehaviorModel::parse(text).is_err(), "{why}");
        }
    }

    #[test]
    fn error_carries_line_number() {
        let e = BehaviorModel::parse("behavior-model v1\ninitial a\nstate a M w0\n\non a jump x -> a\n")
            .unwrap_err();
        assert_eq!(e.line, 5);
    }
}
