//! Primer, ripper and screenshotter chained into one analysis run.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::EventFlowGraph;
use crate::primer::{self, AppBundle, PrimerError, StaticAppModel};
use crate::ripper::{self, activity_coverage, Coverage, CoverageError, RipConfig, RipError, SimulationError};
use crate::screenshot::{capture_graph, ShotSet};
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Primer(#[from] PrimerError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Rip(#[from] RipError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub bundle_root: PathBuf,
    pub static_model: StaticAppModel,
    pub graph: EventFlowGraph,
    pub shots: ShotSet,
    /// Non-fatal findings, e.g. sources-index entries for unknown ids.
    pub warnings: Vec<String>,
    pub coverage: Coverage,
}

impl Analysis {
    pub fn save(&self, store: &Store) -> Result<(), StoreError> {
        let (app, ver) = (&self.static_model.app_id, &self.static_model.app_version);
        store.put_shots(app, ver, &self.shots)?;
        store.save_static_model(&self.static_model)?;
        store.save_graph(&self.graph)?;
        store.save_bundle_path(app, ver, &self.bundle_root)
    }
}

/// Parses, links and rips the bundle on its simulated device.
pub fn analyze(path: impl AsRef<Path>, config: &RipConfig) -> Result<Analysis, AnalyzeError> {
    let bundle = AppBundle::open(path.as_ref())?;
    let parsed = primer::parse_opened(&bundle)?;
    let (static_model, warnings) = primer::link_sources(parsed, &bundle)?;
    let mut device = ripper::simulate(&bundle)?;
    let graph = ripper::rip(&mut device, &static_model, config)?;
    let coverage = activity_coverage(&graph, &static_model)?;
    let shots = capture_graph(&graph);
    Ok(Analysis {
        bundle_root: bundle.root,
        static_model,
        graph,
        shots,
        warnings,
        coverage,
    })
}
