use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GtEdge, LabelSpace, Point, Scene, Segment};
use crate::error::{Error, Result};

pub const SCENE_SCHEMA: &str = "esgnn-scene/1";

#[derive(Deserialize)]
struct Header {
    schema: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    id: u32,
    class: usize,
    points: Vec<Point>,
    colors: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    schema: String,
    id: String,
    node_classes: Vec<String>,
    edge_classes: Vec<String>,
    segments: Vec<SegmentFile>,
    gt_edges: Vec<(u32, usize, u32)>,
}

/// Check the `schema` field of a JSON document before anything else is read.
pub(crate) fn check_schema(text: &str, context: &str, expected: &str) -> Result<()> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::parse(context, &e))?;
    match header.schema {
        Some(s) if s == expected => Ok(()),
        Some(s) => Err(Error::Version { found: s, expected: expected.into() }),
        None => Err(Error::Version { found: "<missing>".into(), expected: expected.into() }),
    }
}

pub fn scene_to_json(scene: &Scene) -> String {
    let file = SceneFile {
        schema: SCENE_SCHEMA.into(),
        id: scene.id.clone(),
        node_classes: scene.labels.node_classes.clone(),
        edge_classes: scene.labels.edge_classes.clone(),
        segments: scene
            .segments
            .iter()
            .map(|s| SegmentFile {
                id: s.id,
                class: s.gt_class,
                points: s.points.clone(),
                colors: s.colors.clone(),
            })
            .collect(),
        gt_edges: scene.gt_edges.iter().map(|e| (e.source, e.predicate, e.target)).collect(),
    };
    serde_json::to_string(&file).expect("scene serialization cannot fail")
}

/// Parse and validate a scene document. `context` names the source in errors.
pub fn scene_from_json(text: &str, context: &str) -> Result<Scene> {
    check_schema(text, context, SCENE_SCHEMA)?;
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::parse(context, &e))?;
    let scene = Scene {
        id: file.id,
        labels: LabelSpace {
            node_classes: file.node_classes,
            edge_classes: file.edge_classes,
        },
        segments: file
            .segments
            .into_iter()
            .map(|s| Segment {
                id: s.id,
                points: s.points,
                colors: s.colors,
                gt_class: s.class,
            })
            .collect(),
        gt_edges: file
            .gt_edges
            .into_iter()
            .map(|(source, predicate, target)| GtEdge { source, predicate, target })
            .collect(),
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    std::fs::write(path, scene_to_json(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scene_from_json(&text, &path.display().to_string())
}
