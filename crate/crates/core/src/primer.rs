//! Static analysis of an app bundle.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.toml        app id/version, main activity, device profile
//! layouts/*.xml        one file per activity window
//! menus/*.xml          same schema, attached to an activity
//! sources/index        resource_id: path, path ...
//! behavior.model       transition table for the simulated device
//! ```
//!
//! Files are merged in lexicographic path order and components keep their
//! document order inside each file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    assign_object_indices, grid_cell, ActionKind, Bounds, ComponentDescriptor, ScreenDims,
};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SOURCES_INDEX: &str = "sources/index";
pub const BEHAVIOR_FILE: &str = "behavior.model";

#[derive(Debug, Error)]
pub enum PrimerError {
    #[error("bundle malformed: {0}")]
    BundleMalformed(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u32,
        message: String,
    },
    #[error("{file}:{line}: duplicate resource id {id:?} in activity {activity} window {window}")]
    DuplicateId {
        file: String,
        line: u32,
        activity: String,
        window: String,
        id: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PrimerError + '_ {
    move |source| PrimerError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    #[serde(default = "default_device_name")]
    pub name: String,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
}

fn default_device_name() -> String {
    "tablet-portrait".into()
}
fn default_width() -> u32 {
    ScreenDims::default().width
}
fn default_height() -> u32 {
    ScreenDims::default().height
}

impl Default for DeviceProfile {
    fn default() -> Self {
        DeviceProfile {
            name: default_device_name(),
            width: default_width(),
            height: default_height(),
        }
    }
}

impl DeviceProfile {
    pub fn dims(&self) -> ScreenDims {
        ScreenDims::new(self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub app_id: String,
    pub app_version: String,
    pub main_activity: String,
    /// Activities declared without (or in addition to) layout files.
    #[serde(default)]
    pub activities: Vec<String>,
    #[serde(default)]
    pub device: DeviceProfile,
}

/// An opened bundle directory with its file inventory.
#[derive(Debug, Clone)]
pub struct AppBundle {
    pub root: PathBuf,
    pub manifest: Manifest,
    /// Layout and menu files, sorted by path relative to the root.
    pub ui_files: Vec<PathBuf>,
    pub sources_index: Option<PathBuf>,
    pub behavior: Option<PathBuf>,
}

impl AppBundle {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, PrimerError> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(PrimerError::BundleMalformed(format!(
                "{} is not a directory",
                root.display()
            )));
        }
        let manifest_path = root.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(PrimerError::BundleMalformed(format!(
                "missing {MANIFEST_FILE} in {}",
                root.display()
            )));
        }
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| PrimerError::Parse {
            file: MANIFEST_FILE.into(),
            line: e
                .span()
                .map(|s| line_of_offset(&text, s.start))
                .unwrap_or(1),
            message: e.message().to_string(),
        })?;
        if manifest.device.width == 0 || manifest.device.height == 0 {
            return Err(PrimerError::BundleMalformed(
                "device profile has zero width or height".into(),
            ));
        }

        let mut ui_files = Vec::new();
        for dir in ["layouts", "menus"] {
            let dir = root.join(dir);
            if !dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = entry.map_err(io_err(&dir))?.path();
                if path.extension().is_some_and(|e| e == "xml") {
                    ui_files.push(path.strip_prefix(&root).unwrap().to_path_buf());
                }
            }
        }
        ui_files.sort();

        let sources_index = Some(PathBuf::from(SOURCES_INDEX)).filter(|p| root.join(p).is_file());
        let behavior = Some(PathBuf::from(BEHAVIOR_FILE)).filter(|p| root.join(p).is_file());
        Ok(AppBundle {
            root,
            manifest,
            ui_files,
            sources_index,
            behavior,
        })
    }

    pub fn dims(&self) -> ScreenDims {
        self.manifest.device.dims()
    }
}

fn line_of_offset(text: &str, offset: usize) -> u32 {
    text[..offset.min(text.len())].matches('\n').count() as u32 + 1
}

/// Components declared by one layout or menu file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutFile {
    pub activity: String,
    pub window: String,
    pub components: Vec<(ComponentDescriptor, u32)>,
}

fn default_actions(component_type: &str) -> BTreeSet<ActionKind> {
    let mut actions = BTreeSet::from([ActionKind::Click]);
    if component_type == "EditText" {
        actions.insert(ActionKind::Type);
    }
    actions
}

/// Parses one layout/menu document. Components come back in document order
/// with the source line of each element; object indices are not yet assigned.
pub fn parse_layout(text: &str, file: &str, dims: ScreenDims) -> Result<LayoutFile, PrimerError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| PrimerError::Parse {
        file: file.into(),
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row;
    let schema_err = |node: roxmltree::Node, message: String| PrimerError::Parse {
        file: file.into(),
        line: line_of(node),
        message,
    };

    let root = doc.root_element();
    let default_window = match root.tag_name().name() {
        "layout" => "w0",
        "menu" => "menu",
        other => {
            return Err(schema_err(
                root,
                format!("root element must be <layout> or <menu>, found <{other}>"),
            ))
        }
    };
    let activity = root
        .attribute("activity")
        .filter(|a| !a.is_empty())
        .ok_or_else(|| schema_err(root, "root element needs an activity attribute".into()))?
        .to_string();
    let window = root.attribute("window").unwrap_or(default_window).to_string();

    let mut components = Vec::new();
    for node in root.descendants().filter(|n| n.is_element() && *n != root) {
        let component_type = node.tag_name().name().to_string();
        let resource_id = node
            .attribute("id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema_err(node, format!("<{component_type}> is missing id")))?
            .to_string();
        let bounds: Bounds = node
            .attribute("bounds")
            .ok_or_else(|| schema_err(node, format!("{resource_id}: missing bounds")))?
            .parse()
            .map_err(|e| schema_err(node, format!("{resource_id}: {e}")))?;
        let supported_actions = match node.attribute("actions") {
            None => default_actions(&component_type),
            Some(list) => list
                .split([',', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<ActionKind>())
                .collect::<Result<_, _>>()
                .map_err(|e| schema_err(node, format!("{resource_id}: {e}")))?,
        };
        let relative_location =
            grid_cell(bounds, dims).map_err(|e| schema_err(node, format!("{resource_id}: {e}")))?;
        components.push((
            ComponentDescriptor {
                component_type,
                resource_id,
                text: node.attribute("text").map(str::to_string),
                bounds,
                relative_location,
                activity_name: activity.clone(),
                window_id: window.clone(),
                object_index: 0,
                supported_actions,
                source_units: Vec::new(),
            },
            line_of(node),
        ));
    }
    Ok(LayoutFile {
        activity,
        window,
        components,
    })
}

/// The universe of GUI components declared by a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticAppModel {
    pub app_id: String,
    pub app_version: String,
    pub main_activity: String,
    pub screen_dims: ScreenDims,
    pub activities: Vec<String>,
    pub components: Vec<ComponentDescriptor>,
    pub type_vocabulary: BTreeSet<String>,
}

impl StaticAppModel {
    /// Components of one activity window, in merged document order.
    pub fn window_components<'a>(
        &'a self,
        activity: &'a str,
        window: &'a str,
    ) -> impl Iterator<Item = &'a ComponentDescriptor> + 'a {
        self.components
            .iter()
            .filter(move |c| c.activity_name == activity && c.window_id == window)
    }

    pub fn find(&self, activity: &str, resource_id: &str) -> Option<&ComponentDescriptor> {
        self.components
            .iter()
            .find(|c| c.activity_name == activity && c.resource_id == resource_id)
    }

    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("static model serializes");
        s.push('\n');
        s
    }

    pub fn from_canonical_str(s: &str) -> Result<Self, PrimerError> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn parse_bundle(path: impl AsRef<Path>) -> Result<StaticAppModel, PrimerError> {
    let bundle = AppBundle::open(path)?;
    parse_opened(&bundle)
}

/// Builds the static model from an already opened bundle.
pub fn parse_opened(bundle: &AppBundle) -> Result<StaticAppModel, PrimerError> {
    let dims = bundle.dims();
    // (activity, window) groups in first-seen order; ids checked per group
    let mut groups: Vec<((String, String), Vec<ComponentDescriptor>)> = Vec::new();
    let mut seen_ids: HashSet<(String, String, String)> = HashSet::new();
    let mut activities: BTreeSet<String> = bundle.manifest.activities.iter().cloned().collect();

    for rel in &bundle.ui_files {
        let path = bundle.root.join(rel);
        let file = rel.to_string_lossy().replace('\\', "/");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let layout = parse_layout(&text, &file, dims)?;
        activities.insert(layout.activity.clone());
        let group_key = (layout.activity.clone(), layout.window.clone());
        let idx = match groups.iter().position(|(k, _)| *k == group_key) {
            Some(i) => i,
            None => {
                groups.push((group_key, Vec::new()));
                groups.len() - 1
            }
        };
        for (component, line) in layout.components {
            let id_key = (
                layout.activity.clone(),
                layout.window.clone(),
                component.resource_id.clone(),
            );
            if !seen_ids.insert(id_key) {
                return Err(PrimerError::DuplicateId {
                    file,
                    line,
                    activity: layout.activity,
                    window: layout.window,
                    id: component.resource_id,
                });
            }
            groups[idx].1.push(component);
        }
    }

    let main = &bundle.manifest.main_activity;
    if !groups.iter().any(|((a, _), _)| a == main) {
        return Err(PrimerError::BundleMalformed(format!(
            "main activity {main:?} has no layout file"
        )));
    }

    let mut components = Vec::new();
    for (_, mut group) in groups {
        assign_object_indices(&mut group);
        components.extend(group);
    }
    let type_vocabulary = components.iter().map(|c| c.component_type.clone()).collect();
    Ok(StaticAppModel {
        app_id: bundle.manifest.app_id.clone(),
        app_version: bundle.manifest.app_version.clone(),
        main_activity: main.clone(),
        screen_dims: dims,
        activities: activities.into_iter().collect(),
        components,
        type_vocabulary,
    })
}

/// Parses `sources/index`: `resource_id: path, path` per line, `#` comments.
pub fn parse_sources_index(text: &str) -> (BTreeMap<String, Vec<String>>, Vec<String>) {
    let mut index: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once(':') {
            Some((id, paths)) if !id.trim().is_empty() => {
                let entry = index.entry(id.trim().to_string()).or_default();
                entry.extend(
                    paths
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(str::to_string),
                );
            }
            _ => warnings.push(format!("{SOURCES_INDEX}:{}: unparseable line {raw:?}", n + 1)),
        }
    }
    (index, warnings)
}

/// Fills each component's `source_units` from the bundle's sources index.
///
/// Index entries naming unknown resource ids are reported as warnings.
pub fn link_sources(
    mut model: StaticAppModel,
    bundle: &AppBundle,
) -> Result<(StaticAppModel, Vec<String>), PrimerError> {
    let Some(rel) = &bundle.sources_index else {
        for c in &mut model.components {
            c.source_units.clear();
        }
        return Ok((model, Vec::new()));
    };
    let path = bundle.root.join(rel);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let (index, mut warnings) = parse_sources_index(&text);
    let known: HashSet<&str> = model.components.iter().map(|c| c.resource_id.as_str()).collect();
    for id in index.keys() {
        if !known.contains(id.as_str()) {
            warnings.push(format!("{SOURCES_INDEX}: unknown resource id {id:?}"));
        }
    }
    for c in &mut model.components {
        c.source_units = index.get(&c.resource_id).cloned().unwrap_or_default();
    }
    Ok((model, warnings))
}

pub fn component_types(model: &StaticAppModel) -> Vec<String> {
    model.type_vocabulary.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, rel: &str, body: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::File::create(p).unwrap().write_all(body.as_bytes()).unwrap();
    }

    const MANIFEST: &str = "app_id = \"t\"\napp_version = \"1\"\nmain_activity = \"Main\"\n";

    #[test]
    fn manifest_only_with_empty_layout() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), MANIFEST_FILE, MANIFEST);
        write(dir.path(), "layouts/main.xml", r#"<layout activity="Main"/>"#);
        let m = parse_bundle(dir.path()).unwrap();
        assert_eq!(m.activities, vec!["Main"]);
        assert!(m.components.is_empty());
        assert!(component_types(&m).is_empty());
    }

    #[test]
    fn missing_manifest_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "layouts/main.xml", r#"<layout activity="Main"/>"#);
        assert!(matches!(
            parse_bundle(dir.path()),
            Err(PrimerError::BundleMalformed(_))
        ));
    }

    #[test]
    fn xml_error_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), MANIFEST_FILE, MANIFEST);
        write(
            dir.path(),
            "layouts/main.xml",
            "<layout activity=\"Main\">\n  <Button id=\"a\" bounds=\"0,0,10,10\">\n</layout>\n",
        );
        match parse_bundle(dir.path()) {
            Err(PrimerError::Parse { file, line, .. }) => {
                assert_eq!(file, "layouts/main.xml");
                assert_eq!(line, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_in_one_window_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), MANIFEST_FILE, MANIFEST);
        write(
            dir.path(),
            "layouts/main.xml",
            "<layout activity=\"Main\">\n<Button id=\"a\" bounds=\"0,0,10,10\"/>\n<Button id=\"a\" bounds=\"0,20,10,30\"/>\n</layout>",
        );
        match parse_bundle(dir.path()) {
            Err(PrimerError::DuplicateId { id, line, .. }) => {
                assert_eq!(id, "a");
                assert_eq!(line, 3);
            }
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn same_id_in_two_activities_gives_two_components() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), MANIFEST_FILE, MANIFEST);
        write(
            dir.path(),
            "layouts/main.xml",
            r#"<layout activity="Main"><Button id="btn_ok" text="OK" bounds="0,0,10,10"/></layout>"#,
        );
        write(
            dir.path(),
            "layouts/viewer.xml",
            r#"<layout activity="Viewer"><Button id="btn_ok" text="OK" bounds="0,0,10,10"/></layout>"#,
        );
        let m = parse_bundle(dir.path()).unwrap();
        let keys: Vec<String> = m.components.iter().map(|c| c.key().to_string()).collect();
        assert_eq!(keys, vec!["Main::btn_ok#1", "Viewer::btn_ok#1"]);
    }

    #[test]
    fn missing_bounds_and_bad_root_are_schema_errors() {
        let dims = ScreenDims::default();
        assert!(parse_layout(r#"<layout activity="M"><Button id="a"/></layout>"#, "f", dims).is_err());
        assert!(parse_layout(r#"<screen activity="M"/>"#, "f", dims).is_err());
        assert!(parse_layout(r#"<layout/>"#, "f", dims).is_err());
        assert!(parse_layout(
            r#"<layout activity="M"><Button id="a" bounds="5,5,5,9"/></layout>"#,
            "f",
            dims
        )
        .is_err());
    }

    #[test]
    fn unknown_types_and_explicit_actions_are_kept() {
        let layout = parse_layout(
            r#"<menu activity="M"><FancyDial id="d" bounds="0,0,50,50" actions="swipe,long-click"/></menu>"#,
            "menus/m.xml",
            ScreenDims::default(),
        )
        .unwrap();
        let (c, _) = &layout.components[0];
        assert_eq!(layout.window, "menu");
        assert_eq!(c.component_type, "FancyDial");
        assert_eq!(
            c.supported_actions,
            BTreeSet::from([ActionKind::LongClick, ActionKind::Swipe])
        );
    }

    #[test]
    fn sources_index_parsing() {
        let (idx, warnings) = parse_sources_index("# c\nbtn_ok: A.src, B.src\n\nnonsense\n");
        assert_eq!(idx["btn_ok"], vec!["A.src", "B.src"]);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn vocabulary_is_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), MANIFEST_FILE, MANIFEST);
        write(
            dir.path(),
            "layouts/main.xml",
            r#"<layout activity="Main">
                <Button id="a" bounds="0,0,10,10"/>
                <Button id="b" bounds="0,20,10,30"/>
                <Button id="c" bounds="0,40,10,50"/>
            </layout>"#,
        );
        let m = parse_bundle(dir.path()).unwrap();
        assert_eq!(component_types(&m), vec!["Button"]);
    }
}
