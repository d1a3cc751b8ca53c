//! Fixture locations and seeded generators for bundles and reporter traces.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{ActionKind, ComponentKey};
use crate::ripper::{SimulatedDevice, Target};

/// The `minidoc` example app shipped under `fixtures/`.
pub fn minidoc_path() -> PathBuf {
    fixtures_dir().join("minidoc")
}

/// Five declared activities, only the first reachable by clicking.
pub fn five_screens_path() -> PathBuf {
    fixtures_dir().join("five-screens")
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// An in-memory bundle ready to be written to disk.
#[derive(Debug, Clone)]
pub struct GeneratedApp {
    pub app_id: String,
    pub manifest: String,
    pub files: Vec<(String, String)>,
    pub behavior: String,
    pub sources: String,
}

impl GeneratedApp {
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let put = |rel: &str, body: &str| -> io::Result<()> {
            let p = dir.join(rel);
            fs::create_dir_all(p.parent().expect("relative path has a parent"))?;
            fs::write(p, body)
        };
        put("manifest.toml", &self.manifest)?;
        for (rel, body) in &self.files {
            put(rel, body)?;
        }
        put("behavior.model", &self.behavior)?;
        put("sources/index", &self.sources)
    }
}

const TEXTS: [&str; 6] = ["OK", "Cancel", "Next", "Save", "Open", "Back"];

struct Widget {
    tag: &'static str,
    id: String,
    text: Option<&'static str>,
    bounds: (i32, i32, i32, i32),
}

fn widget<R: Rng>(rng: &mut R, id: String, slot: i32, top0: i32) -> Widget {
    let roll: f64 = rng.gen();
    let tag = if roll < 0.7 {
        "Button"
    } else if roll < 0.85 {
        "EditText"
    } else {
        "CheckBox"
    };
    let text = if rng.gen_bool(0.9) {
        Some(*TEXTS.choose(rng).expect("non-empty"))
    } else {
        None
    };
    let left = rng.gen_range(0..600);
    let width = rng.gen_range(120..=600);
    let top = top0 + slot * 260;
    Widget {
        tag,
        id,
        text,
        bounds: (left, top, left + width, top + 200),
    }
}

fn layout_xml(activity: &str, window: &str, widgets: &[Widget]) -> String {
    let mut s = format!("<layout activity=\"{activity}\" window=\"{window}\">\n");
    for w in widgets {
        let (l, t, r, b) = w.bounds;
        let text = w.text.map(|t| format!(" text=\"{t}\"")).unwrap_or_default();
        let _ = writeln!(s, "  <{} id=\"{}\"{text} bounds=\"{l},{t},{r},{b}\"/>", w.tag, w.id);
    }
    s.push_str("</layout>\n");
    s
}

/// A random app: up to 8 activities, up to 6 components per screen, some
/// activities with a dialog window on top. Every behavior state maps to a
/// distinct `(activity, window)` pair so distinct states render distinctly.
pub fn random_app<R: Rng>(rng: &mut R, app_id: &str) -> GeneratedApp {
    let n = rng.gen_range(1..=8);
    let mut files = Vec::new();
    let mut states: Vec<(String, Vec<(String, &'static str)>)> = Vec::new();
    let mut state_lines = String::new();
    let mut sources = String::new();

    for i in 0..n {
        let activity = format!("A{i}");
        let has_dialog = rng.gen_bool(0.25);
        let base_count = rng.gen_range(1..=if has_dialog { 4 } else { 6 });
        let base: Vec<Widget> = (0..base_count)
            .map(|j| widget(rng, format!("a{i}_c{j}"), j, 20))
            .collect();
        files.push((format!("layouts/a{i}.xml"), layout_xml(&activity, "w0", &base)));
        let base_ids: Vec<(String, &'static str)> = base.iter().map(|w| (w.id.clone(), w.tag)).collect();
        for w in base.iter().filter(|_| rng.gen_bool(0.3)) {
            let _ = writeln!(sources, "{}: {activity}Screen.src", w.id);
        }
        if has_dialog {
            let dialog: Vec<Widget> = (0..rng.gen_range(1..=2))
                .map(|j| widget(rng, format!("a{i}_d{j}"), j, 1300))
                .collect();
            files.push((format!("layouts/a{i}_dialog.xml"), layout_xml(&activity, "w1", &dialog)));
            let mut shown: Vec<(String, &'static str)> = dialog.iter().map(|w| (w.id.clone(), w.tag)).collect();
            shown.extend(base_ids.iter().cloned());
            let _ = writeln!(state_lines, "state s{i}d {activity} w1 show=w1,w0");
            states.push((format!("s{i}d"), shown));
        }
        let _ = writeln!(state_lines, "state s{i} {activity} w0");
        states.push((format!("s{i}"), base_ids));
    }

    let initial = states
        .iter()
        .find(|(s, _)| s.starts_with("s0"))
        .map(|(s, _)| s.clone())
        .expect("activity 0 always exists");
    let ids: Vec<String> = states.iter().map(|(s, _)| s.clone()).collect();
    let mut table = String::new();
    for (state, shown) in &states {
        for (id, tag) in shown {
            let roll: f64 = rng.gen();
            let target = if roll < 0.55 {
                Some(ids.choose(rng).expect("non-empty").clone())
            } else if roll < 0.70 {
                None
            } else if roll < 0.78 {
                Some("EXTERNAL".to_string())
            } else if roll < 0.85 {
                Some("HOME".to_string())
            } else {
                Some(state.clone())
            };
            if let Some(t) = target {
                let _ = writeln!(table, "on {state} click {id} -> {t}");
            }
            // typed input can move the app too; clicks never discover these
            if *tag == "EditText" && rng.gen_bool(0.5) {
                let t = ids.choose(rng).expect("non-empty");
                let _ = writeln!(table, "on {state} type {id} -> {t}");
            }
        }
    }

    let behavior = format!("behavior-model v1\ninitial {initial}\n{state_lines}{table}");
    let manifest = format!(
        "app_id = \"{app_id}\"\napp_version = \"1.0\"\nmain_activity = \"A0\"\n\n[device]\nname = \"tablet-portrait\"\nwidth = 1200\nheight = 1920\n"
    );
    GeneratedApp {
        app_id: app_id.to_string(),
        manifest,
        files,
        behavior,
        sources,
    }
}

/// One ground-truth step taken on the simulated device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub state: String,
    pub component: ComponentKey,
    pub next: String,
}

/// Samples a click-only path from cold start that never leaves to the home
/// screen. Behavior-model lookups give the true next state.
pub fn sample_click_trace<R: Rng>(device: &SimulatedDevice, rng: &mut R, max_len: usize) -> Vec<TraceStep> {
    let len = rng.gen_range(1..=max_len.max(1));
    let mut state = device.initial_state().to_string();
    let mut trace = Vec::with_capacity(len);
    for _ in 0..len {
        let screen = device.screen_of(&state).expect("state exists");
        let options: Vec<ComponentKey> = screen
            .components
            .iter()
            .filter(|c| c.supports(ActionKind::Click))
            .map(|c| c.key())
            .filter(|k| device.target(&state, k, ActionKind::Click) != Some(&Target::Home))
            .collect();
        let Some(component) = options.choose(rng).cloned() else {
            break;
        };
        let next = match device.target(&state, &component, ActionKind::Click) {
            Some(Target::State(t)) => t.clone(),
            _ => state.clone(),
        };
        trace.push(TraceStep {
            state: state.clone(),
            component,
            next: next.clone(),
        });
        state = next;
    }
    trace
}
