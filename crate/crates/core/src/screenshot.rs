//! Deterministic SVG screenshots of screen states, with highlight and crop.
//!
//! Documents are kept as structured values and serialized on demand, so a
//! crop only moves the viewport and an augmentation only adds one element
//! on top of the untouched base layer.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    Bounds, ComponentDescriptor, ComponentKey, EventFlowGraph, GeometryError, ScreenDims,
    ScreenState, ShotAddress, StateFingerprint,
};

pub const HIGHLIGHT_STROKE_WIDTH: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShotError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DrawnComponent {
    key: ComponentKey,
    component_type: String,
    label: String,
    bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreenshotDoc {
    dims: ScreenDims,
    viewport: Bounds,
    components: Vec<DrawnComponent>,
    highlight: Option<Bounds>,
}

pub(crate) fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

impl ScreenshotDoc {
    pub fn dims(&self) -> ScreenDims {
        self.dims
    }

    pub fn viewport(&self) -> Bounds {
        self.viewport
    }

    pub fn highlight(&self) -> Option<Bounds> {
        self.highlight
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn to_svg(&self) -> String {
        let v = self.viewport;
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"{} {} {} {}\">",
            v.width(),
            v.height(),
            v.left,
            v.top,
            v.width(),
            v.height()
        );
        let _ = writeln!(
            out,
            "<rect class=\"border\" x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\" stroke=\"#202020\" stroke-width=\"4\"/>",
            self.dims.width, self.dims.height
        );
        for c in &self.components {
            let b = c.bounds;
            let _ = writeln!(
                out,
                "<g class=\"component\" data-key=\"{}\" data-type=\"{}\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#e6e9ef\" stroke=\"#5a6270\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"28\" text-anchor=\"middle\" dominant-baseline=\"middle\">{}</text></g>",
                escape_xml(&c.key.to_string()),
                escape_xml(&c.component_type),
                b.left,
                b.top,
                b.width(),
                b.height(),
                (b.left as i64 + b.right as i64) / 2,
                (b.top as i64 + b.bottom as i64) / 2,
                escape_xml(&c.label)
            );
        }
        if let Some(h) = self.highlight {
            let _ = writeln!(
                out,
                "<rect class=\"highlight\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#e0201b\" stroke-width=\"{HIGHLIGHT_STROKE_WIDTH}\"/>",
                h.left,
                h.top,
                h.width(),
                h.height()
            );
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.to_svg().into_bytes()
    }

    pub fn address(&self) -> ShotAddress {
        ShotAddress::of(self.to_svg().as_bytes())
    }
}

/// Full-screen render of a state. Labels use the component text, falling
/// back to the resource id.
pub fn render_screen(state: &ScreenState) -> ScreenshotDoc {
    ScreenshotDoc {
        dims: state.screen_dims,
        viewport: state.screen_dims.frame(),
        components: state
            .components
            .iter()
            .map(|c| DrawnComponent {
                key: c.key(),
                component_type: c.component_type.clone(),
                label: c.display_text().to_string(),
                bounds: c.bounds,
            })
            .collect(),
        highlight: None,
    }
}

/// A full-screen shot with the target component outlined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedShot {
    pub doc: ScreenshotDoc,
    pub component: ComponentKey,
}

impl AugmentedShot {
    pub fn address(&self) -> ShotAddress {
        self.doc.address()
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.doc.bytes()
    }
}

fn check_in_frame(frame: Bounds, bounds: Bounds) -> Result<(), ShotError> {
    bounds.validate()?;
    if !frame.contains(&bounds) {
        return Err(GeometryError::OutOfFrame { bounds, frame }.into());
    }
    Ok(())
}

/// Outlines `component` on `shot`; an existing highlight is replaced.
pub fn augment(shot: &ScreenshotDoc, component: &ComponentDescriptor) -> Result<AugmentedShot, ShotError> {
    check_in_frame(shot.dims.frame(), component.bounds)?;
    let mut doc = shot.clone();
    doc.highlight = Some(component.bounds);
    Ok(AugmentedShot {
        doc,
        component: component.key(),
    })
}

/// Restricts the viewport of `shot` to the component's bounds.
pub fn crop(shot: &ScreenshotDoc, component: &ComponentDescriptor) -> Result<ScreenshotDoc, ShotError> {
    check_in_frame(shot.viewport, component.bounds)?;
    let mut doc = shot.clone();
    doc.viewport = component.bounds;
    Ok(doc)
}

/// Content-addressed screenshot bytes.
pub type ShotSet = BTreeMap<ShotAddress, Vec<u8>>;

fn insert(set: &mut ShotSet, doc: &ScreenshotDoc) -> ShotAddress {
    let bytes = doc.bytes();
    let address = ShotAddress::of(&bytes);
    set.entry(address.clone()).or_insert(bytes);
    address
}

/// Every shot derivable from a graph: one full render per state plus a
/// crop and an augmented full shot for each in-frame component.
pub fn capture_graph(graph: &EventFlowGraph) -> ShotSet {
    let mut set = ShotSet::new();
    for state in graph.states.values() {
        let full = render_screen(state);
        insert(&mut set, &full);
        for c in &state.components {
            if let Ok(cropped) = crop(&full, c) {
                insert(&mut set, &cropped);
            }
            if let Ok(aug) = augment(&full, c) {
                insert(&mut set, &aug.doc);
            }
        }
    }
    set
}

/// Address of the crop of `key` on the given state.
pub fn crop_address(state: &ScreenState, key: &ComponentKey) -> Option<ShotAddress> {
    let c = state.component(key)?;
    crop(&render_screen(state), c).ok().map(|d| d.address())
}

/// Augmented full shot of `key` on the given state.
pub fn augmented_for(state: &ScreenState, key: &ComponentKey) -> Option<AugmentedShot> {
    let c = state.component(key)?;
    augment(&render_screen(state), c).ok()
}

/// Augmented shot for `key` on the graph state `fp`.
pub fn augmented_in(graph: &EventFlowGraph, fp: &StateFingerprint, key: &ComponentKey) -> Option<AugmentedShot> {
    augmented_for(graph.state(fp)?, key)
}
