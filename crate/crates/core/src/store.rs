//! Plain-directory persistence.
//!
//! ```text
//! <root>/apps/<app_id>/<version>/static.model
//! <root>/apps/<app_id>/<version>/graph.efg
//! <root>/apps/<app_id>/<version>/bundle.path
//! <root>/apps/<app_id>/<version>/shots/<address>.svg
//! <root>/drafts/<draft_id>.json
//! <root>/drafts/.counter
//! <root>/reports/<report_id>.json
//! <root>/reports/.counter-<app_id>
//! <root>/idempotency/<scope>/<token>
//! ```
//!
//! Every document is written to a temporary file in the target directory and
//! renamed into place, so readers see either the old or the new document.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use crate::model::{EventFlowGraph, GraphError, ShotAddress};
use crate::primer::{PrimerError, StaticAppModel};
use crate::reporting::{parse_structured, render, BugReport, ReportError, ReportFormat};
use crate::screenshot::ShotSet;
use crate::suggestion::ReportDraft;

pub const STATIC_MODEL_FILE: &str = "static.model";
pub const GRAPH_FILE: &str = "graph.efg";
pub const BUNDLE_PATH_FILE: &str = "bundle.path";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: corrupt document: {message}")]
    Corrupt { path: String, message: String },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Identifiers become path components, so only a conservative alphabet is allowed.
fn check_id(id: &str) -> Result<&str, StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(id)
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    counter_lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["apps", "drafts", "reports", "idempotency"] {
            let d = root.join(dir);
            fs::create_dir_all(&d).map_err(io_at(&d))?;
        }
        Ok(Store {
            root,
            counter_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn app_dir(&self, app_id: &str, version: &str) -> Result<PathBuf, StoreError> {
        Ok(self.root.join("apps").join(check_id(app_id)?).join(check_id(version)?))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let dir = path.parent().expect("store paths have a parent");
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(dir)
            .map_err(io_at(dir))?;
        tmp.write_all(bytes).map_err(io_at(path))?;
        tmp.as_file().sync_all().map_err(io_at(path))?;
        tmp.persist(path).map_err(|e| StoreError::Io {
            path: path.display().to_string(),
            source: e.error,
        })?;
        Ok(())
    }

    fn read(&self, path: &Path, kind: &'static str, id: &str) -> Result<String, StoreError> {
        match fs::read_to_string(path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound {
                kind,
                id: id.to_string(),
            }),
            Err(e) => Err(io_at(path)(e)),
        }
    }

    fn corrupt(path: &Path, e: impl std::fmt::Display) -> StoreError {
        StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    // --- shots ---

    /// Stores screenshot bytes under their content address; idempotent.
    pub fn put_shot(&self, app_id: &str, version: &str, bytes: &[u8]) -> Result<ShotAddress, StoreError> {
        let address = ShotAddress::of(bytes);
        let path = self.app_dir(app_id, version)?.join("shots").join(format!("{address}.svg"));
        if !path.exists() {
            self.write_atomic(&path, bytes)?;
        }
        Ok(address)
    }

    pub fn put_shots(&self, app_id: &str, version: &str, shots: &ShotSet) -> Result<(), StoreError> {
        for bytes in shots.values() {
            self.put_shot(app_id, version, bytes)?;
        }
        Ok(())
    }

    /// Looks a shot up across every stored app version.
    pub fn get_shot(&self, address: &ShotAddress) -> Result<Vec<u8>, StoreError> {
        for (app, version) in self.list_apps()? {
            let path = self
                .app_dir(&app, &version)?
                .join("shots")
                .join(format!("{address}.svg"));
            if let Ok(bytes) = fs::read(&path) {
                return Ok(bytes);
            }
        }
        Err(StoreError::NotFound {
            kind: "shot",
            id: address.to_string(),
        })
    }

    // --- analysis products ---

    pub fn save_static_model(&self, model: &StaticAppModel) -> Result<(), StoreError> {
        let path = self.app_dir(&model.app_id, &model.app_version)?.join(STATIC_MODEL_FILE);
        self.write_atomic(&path, model.to_canonical_string().as_bytes())
    }

    pub fn load_static_model(&self, app_id: &str, version: &str) -> Result<StaticAppModel, StoreError> {
        let path = self.app_dir(app_id, version)?.join(STATIC_MODEL_FILE);
        let text = self.read(&path, "app", &format!("{app_id}/{version}"))?;
        StaticAppModel::from_canonical_str(&text).map_err(|e: PrimerError| Self::corrupt(&path, e))
    }

    pub fn save_graph(&self, graph: &EventFlowGraph) -> Result<(), StoreError> {
        let path = self.app_dir(&graph.app_id, &graph.app_version)?.join(GRAPH_FILE);
        self.write_atomic(&path, graph.to_canonical_string().as_bytes())
    }

    pub fn load_graph(&self, app_id: &str, version: &str) -> Result<EventFlowGraph, StoreError> {
        let path = self.app_dir(app_id, version)?.join(GRAPH_FILE);
        let text = self.read(&path, "app", &format!("{app_id}/{version}"))?;
        EventFlowGraph::from_canonical_str(&text).map_err(|e: GraphError| Self::corrupt(&path, e))
    }

    /// Remembers where the analyzed bundle lives, for later replays.
    pub fn save_bundle_path(&self, app_id: &str, version: &str, bundle: &Path) -> Result<(), StoreError> {
        let path = self.app_dir(app_id, version)?.join(BUNDLE_PATH_FILE);
        let abs = bundle.canonicalize().unwrap_or_else(|_| bundle.to_path_buf());
        self.write_atomic(&path, format!("{}\n", abs.display()).as_bytes())
    }

    pub fn load_bundle_path(&self, app_id: &str, version: &str) -> Result<PathBuf, StoreError> {
        let path = self.app_dir(app_id, version)?.join(BUNDLE_PATH_FILE);
        let text = self.read(&path, "bundle path", &format!("{app_id}/{version}"))?;
        Ok(PathBuf::from(text.trim_end()))
    }

    /// Analyzed `(app_id, version)` pairs, sorted.
    pub fn list_apps(&self) -> Result<Vec<(String, String)>, StoreError> {
        let apps = self.root.join("apps");
        let mut out = Vec::new();
        for app in fs::read_dir(&apps).map_err(io_at(&apps))? {
            let app = app.map_err(io_at(&apps))?;
            if !app.path().is_dir() {
                continue;
            }
            for ver in fs::read_dir(app.path()).map_err(io_at(&app.path()))? {
                let ver = ver.map_err(io_at(&app.path()))?;
                if ver.path().join(GRAPH_FILE).is_file() {
                    out.push((
                        app.file_name().to_string_lossy().into_owned(),
                        ver.file_name().to_string_lossy().into_owned(),
                    ));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    // --- drafts ---

    fn draft_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.root.join("drafts").join(format!("{}.json", check_id(id)?)))
    }

    pub fn save_draft(&self, draft: &ReportDraft) -> Result<(), StoreError> {
        let path = self.draft_path(&draft.draft_id)?;
        let mut text = serde_json::to_string_pretty(draft).expect("draft serializes");
        text.push('\n');
        self.write_atomic(&path, text.as_bytes())
    }

    pub fn load_draft(&self, id: &str) -> Result<ReportDraft, StoreError> {
        let path = self.draft_path(id)?;
        let text = self.read(&path, "draft", id)?;
        serde_json::from_str(&text).map_err(|e| Self::corrupt(&path, e))
    }

    // --- reports ---

    fn report_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.root.join("reports").join(format!("{}.json", check_id(id)?)))
    }

    fn bump_counter(&self, path: &Path) -> Result<u64, StoreError> {
        let _guard = self.counter_lock.lock().unwrap_or_else(|p| p.into_inner());
        let current: u64 = match fs::read_to_string(path) {
            Ok(s) => s.trim().parse().map_err(|e| Self::corrupt(path, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io_at(path)(e)),
        };
        let next = current + 1;
        self.write_atomic(path, format!("{next}\n").as_bytes())?;
        Ok(next)
    }

    /// Allocates the next id for `app_id`, e.g. `minidoc-0001`.
    pub fn next_report_id(&self, app_id: &str) -> Result<String, StoreError> {
        check_id(app_id)?;
        let n = self.bump_counter(&self.root.join("reports").join(format!(".counter-{app_id}")))?;
        Ok(format!("{app_id}-{n:04}"))
    }

    /// Allocates the next draft id, e.g. `draft-0001`.
    pub fn next_draft_id(&self) -> Result<String, StoreError> {
        let n = self.bump_counter(&self.root.join("drafts").join(".counter"))?;
        Ok(format!("draft-{n:04}"))
    }

    pub fn save_report(&self, report: &BugReport) -> Result<(), StoreError> {
        let path = self.report_path(&report.report_id)?;
        self.write_atomic(&path, render(report, ReportFormat::Structured).as_bytes())
    }

    pub fn load_report(&self, id: &str) -> Result<BugReport, StoreError> {
        let path = self.report_path(id)?;
        let text = self.read(&path, "report", id)?;
        parse_structured(&text).map_err(|e: ReportError| Self::corrupt(&path, e))
    }

    // --- idempotency records ---

    pub fn idempotent_response(&self, scope: &str, token: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.root.join("idempotency").join(check_id(scope)?).join(check_id(token)?);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_at(&path)(e)),
        }
    }

    pub fn record_idempotent_response(&self, scope: &str, token: &str, body: &[u8]) -> Result<(), StoreError> {
        let path = self.root.join("idempotency").join(check_id(scope)?).join(check_id(token)?);
        self.write_atomic(&path, body)
    }
}
