//! Scenes of labelled point-cloud segments, their geometric properties, and
//! the synthetic corpus generator that stands in for annotated scans.

mod dataset;
mod generate;
mod io;
mod predicates;
mod props;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{split_counts, Dataset, Manifest, SplitName, DATASET_SCHEMA};
pub use generate::{generate_scene, generate_scene_stream, generate_scenes, Archetype, GeneratorConfig};
pub(crate) use io::check_schema;
pub use io::{load_scene, save_scene, scene_from_json, scene_to_json, SCENE_SCHEMA};
pub use predicates::{
    derive_gt_predicates, footprints_overlap, min_point_distance, Predicate, PredicateRules,
};
pub use props::{canonical_basis, compute_segment_properties, Frame, SegmentProperties, BOX_INFLATION};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub node_classes: Vec<String>,
    /// Index 0 is reserved for "no relation".
    pub edge_classes: Vec<String>,
}

impl Default for LabelSpace {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        LabelSpace {
            node_classes: s(&["floor", "wall", "table", "chair", "shelf", "box", "lamp", "ball"]),
            edge_classes: s(&["none", "supported-by", "close-by", "bigger-than", "same-class-as"]),
        }
    }
}

impl LabelSpace {
    pub fn validate(&self) -> Result<()> {
        if self.node_classes.is_empty() {
            return Err(Error::Config("label space has no node classes".into()));
        }
        if self.edge_classes.len() < 2 {
            return Err(Error::Config("label space needs \"none\" plus at least one predicate".into()));
        }
        for names in [&self.node_classes, &self.edge_classes] {
            let mut sorted: Vec<&String> = names.iter().collect();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("duplicate class name {}", w[0])));
            }
        }
        Ok(())
    }

    pub fn num_node_classes(&self) -> usize {
        self.node_classes.len()
    }

    pub fn num_edge_classes(&self) -> usize {
        self.edge_classes.len()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_classes.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: u32,
    pub points: Vec<Point>,
    pub colors: Vec<Point>,
    pub gt_class: usize,
}

/// Ground-truth triplet `(subject, predicate, object)` by segment id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GtEdge {
    pub source: u32,
    pub predicate: usize,
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub labels: LabelSpace,
    pub segments: Vec<Segment>,
    pub gt_edges: Vec<GtEdge>,
}

impl Scene {
    /// Check the structural invariants: unique ids, referential integrity,
    /// no self-edges, classes in range, enough finite points per segment.
    pub fn validate(&self) -> Result<()> {
        self.labels.validate()?;
        let mut ids = std::collections::HashSet::new();
        for seg in &self.segments {
            if !ids.insert(seg.id) {
                return Err(Error::Validation(format!("duplicate segment id {}", seg.id)));
            }
            if seg.gt_class >= self.labels.num_node_classes() {
                return Err(Error::Validation(format!(
                    "segment {} has class {} outside {} node classes",
                    seg.id,
                    seg.gt_class,
                    self.labels.num_node_classes()
                )));
            }
            if seg.points.len() < 8 {
                return Err(Error::Validation(format!(
                    "segment {} has {} points (need at least 8)",
                    seg.id,
                    seg.points.len()
                )));
            }
            if seg.colors.len() != seg.points.len() {
                return Err(Error::Validation(format!(
                    "segment {} has {} colors for {} points",
                    seg.id,
                    seg.colors.len(),
                    seg.points.len()
                )));
            }
            if seg.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("segment {} has non-finite coordinates", seg.id)));
            }
        }
        for e in &self.gt_edges {
            for id in [e.source, e.target] {
                if !ids.contains(&id) {
                    return Err(Error::Validation(format!("edge references missing segment id {id}")));
                }
            }
            if e.source == e.target {
                return Err(Error::Validation(format!("self-edge on segment {}", e.source)));
            }
            if e.predicate == 0 || e.predicate >= self.labels.num_edge_classes() {
                return Err(Error::Validation(format!(
                    "edge {}→{} has invalid predicate {}",
                    e.source, e.target, e.predicate
                )));
            }
        }
        Ok(())
    }

    pub fn segment_index(&self, id: u32) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }
}

/// Rigid motion `p ↦ R·p + T` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Transform {
    pub const ORTHONORMAL_TOL: f64 = 1e-12;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if off > Self::ORTHONORMAL_TOL || (det - 1.0).abs() > Self::ORTHONORMAL_TOL {
            return Err(Error::Validation(format!(
                "not a proper rotation (|RᵀR − I| = {off:e}, det = {det})"
            )));
        }
        Ok(Transform { rotation, translation })
    }

    pub fn identity() -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        Transform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about the vertical (z) axis, then translation.
    pub fn yaw(angle: f64, t: Vector3<f64>) -> Self {
        let (s, c) = angle.sin_cos();
        Transform {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn is_pure_translation(&self) -> bool {
        self.rotation == Matrix3::identity()
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn apply_vec(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        let q = self.apply_vec(&Vector3::new(p[0], p[1], p[2]));
        [q.x, q.y, q.z]
    }
}

/// Move every point of the scene; labels, colors, and ground truth are kept.
pub fn apply_transform(scene: &Scene, t: &Transform) -> Scene {
    let mut out = scene.clone();
    for seg in &mut out.segments {
        for p in &mut seg.points {
            *p = t.apply_point(p);
        }
    }
    out
}
