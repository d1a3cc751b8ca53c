use std::fs;

use stepwise_core::primer::{self, AppBundle, PrimerError};
use stepwise_core::testkit::{five_screens_path, minidoc_path};
use stepwise_core::{ComponentKey, GridCell};

fn linked(path: &std::path::Path) -> (primer::StaticAppModel, Vec<String>) {
    let bundle = AppBundle::open(path).unwrap();
    let model = primer::parse_opened(&bundle).unwrap();
    primer::link_sources(model, &bundle).unwrap()
}

#[test]
fn minidoc_declares_two_activities_and_four_components() {
    let model = primer::parse_bundle(minidoc_path()).unwrap();
    assert_eq!(model.activities, ["Main", "Viewer"]);
    assert_eq!(model.components.len(), 4);
    assert_eq!(primer::component_types(&model), ["Button", "EditText"]);
    assert_eq!(model.main_activity, "Main");
}

#[test]
fn minidoc_grid_cells() {
    let model = primer::parse_bundle(minidoc_path()).unwrap();
    let cell = |id: &str| {
        let c = model.components.iter().find(|c| c.resource_id == id).unwrap();
        c.relative_location.to_string()
    };
    assert_eq!(cell("btn_ok"), "Middle Center");
    assert_eq!(cell("btn_open"), "Top Center");
}

#[test]
fn sources_are_linked_by_resource_id() {
    let (model, warnings) = linked(&minidoc_path());
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(model.find("Main", "btn_ok").unwrap().source_units, ["MainScreen.src"]);
    assert_eq!(model.find("Viewer", "btn_go").unwrap().source_units, ["ViewerScreen.src"]);
}

#[test]
fn unknown_ids_in_sources_index_warn() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&minidoc_path(), dir.path());
    fs::write(dir.path().join("sources/index"), "btn_ok: A.src\nbtn_ghost: B.src\n").unwrap();
    let (model, warnings) = linked(dir.path());
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("btn_ghost"));
    assert!(model.find("Viewer", "btn_go").unwrap().source_units.is_empty());
}

#[test]
fn same_id_in_two_activities_gives_two_components() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join("layouts")).unwrap();
    fs::write(root.join("manifest.toml"), "app_id = \"x\"\napp_version = \"1\"\nmain_activity = \"Main\"\n").unwrap();
    for a in ["Main", "Viewer"] {
        fs::write(
            root.join(format!("layouts/{a}.xml")),
            format!("<layout activity=\"{a}\"><Button id=\"btn_ok\" bounds=\"0,0,10,10\"/></layout>"),
        )
        .unwrap();
    }
    let model = primer::parse_bundle(root).unwrap();
    let keys: Vec<ComponentKey> = model.components.iter().map(|c| c.key()).collect();
    assert_eq!(
        keys,
        [ComponentKey::new("Main", "btn_ok", 1), ComponentKey::new("Viewer", "btn_ok", 1)]
    );
}

#[test]
fn five_screens_declares_five_activities() {
    let model = primer::parse_bundle(five_screens_path()).unwrap();
    assert_eq!(model.activities.len(), 5);
}

#[test]
fn missing_manifest_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(primer::parse_bundle(dir.path()), Err(PrimerError::BundleMalformed(_))));
}

#[test]
fn static_model_round_trips() {
    let (model, _) = linked(&minidoc_path());
    let text = model.to_canonical_string();
    let back = primer::StaticAppModel::from_canonical_str(&text).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_canonical_string(), text);
    assert!(GridCell::ALL.contains(&back.components[0].relative_location));
}

fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            fs::create_dir_all(&dest).unwrap();
            copy_dir(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}
