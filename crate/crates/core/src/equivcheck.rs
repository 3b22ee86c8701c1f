//! Symmetry verification: transformed inputs must give identical predictions
//! and correspondingly transformed coordinates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gnn::{stack_forward, LayerStackConfig, StackOutput, StackParams, PRESET_NAMES};
use crate::graphbuild::{FeatureGraph, GraphInputs, Mode};
use crate::heads::{classify_edges, classify_nodes, HeadParams};
use crate::model::Model;
use crate::numcore::{softmax_rows, ParamSet, Tape, Tensor};
use crate::scene::{apply_transform, Scene, Transform};

/// Translation components are drawn from `[-TRANSLATION_RANGE, TRANSLATION_RANGE]` (m).
pub const TRANSLATION_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    So3,
    Yaw,
    Translation,
}

impl Family {
    pub fn rotates(self) -> bool {
        self != Family::Translation
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::So3 => "so3",
            Family::Yaw => "yaw",
            Family::Translation => "translation",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "so3" => Ok(Family::So3),
            "yaw" => Ok(Family::Yaw),
            "translation" => Ok(Family::Translation),
            _ => Err(Error::Config(format!("unknown transform family {s:?} (so3, yaw, translation)"))),
        }
    }
}

/// Draw a transform of the given family from an existing generator.
pub fn sample_transform<R: Rng>(rng: &mut R, family: Family) -> Transform {
    let t = Vector3::from_fn(|_, _| rng.gen_range(-TRANSLATION_RANGE..=TRANSLATION_RANGE));
    match family {
        Family::Translation => Transform::translation_only(t),
        Family::Yaw => Transform::yaw(rng.gen_range(0.0..std::f64::consts::TAU), t),
        Family::So3 => loop {
            // a normalized Gaussian quaternion is uniform on SO(3)
            let q = Quaternion::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if q.norm() > 1e-6 {
                let r = *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix();
                if let Ok(tr) = Transform::new(r, t) {
                    break tr;
                }
            }
        },
    }
}

/// Deterministic transform for `seed`.
pub fn random_transform(seed: u64, family: Family) -> Transform {
    sample_transform(&mut ChaCha8Rng::seed_from_u64(seed), family)
}

/// Outcome of comparing predictions on a scene and on its transformed copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub scene_id: String,
    pub family: Option<Family>,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub tol: f64,
    /// Whether both copies produced the same edge list; when false the
    /// probability comparison covers nodes only.
    pub edges_match: bool,
    pub max_node_prob_dev: f64,
    pub max_edge_prob_dev: f64,
    pub max_prob_dev: f64,
    pub argmax_ok: bool,
    pub max_coord_dev: f64,
    pub pass: bool,
}

impl InvarianceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn argmaxes(probs: &[f64], classes: usize) -> Vec<usize> {
    probs.chunks(classes).map(crate::metrics::argmax).collect()
}

fn transform_corners(t: &Transform, x: &[f64]) -> Vec<f64> {
    x.chunks(3)
        .flat_map(|c| {
            let v = t.apply_vec(&Vector3::new(c[0], c[1], c[2]));
            [v.x, v.y, v.z]
        })
        .collect()
}

/// Run the full pipeline on `scene` and on `t(scene)` and compare.
/// Only strict-mode models make this claim for rotations; asking it of a
/// paper-literal model is refused.
pub fn assert_prediction_invariance(
    model: &Model,
    scene: &Scene,
    t: &Transform,
    family: Option<Family>,
    tol: f64,
) -> Result<InvarianceReport> {
    if model.config.mode == Mode::PaperLiteral && !t.is_pure_translation() {
        return Err(Error::Refused(
            "paper-literal mode uses world-frame features, which are not rotation invariant; \
             use a strict-mode checkpoint or the translation family"
                .into(),
        ));
    }
    let moved = apply_transform(scene, t);
    let mode = model.config.mode;
    let ga = GraphInputs::build(scene, mode, model.config.use_color)?;
    let gb = GraphInputs::build(&moved, mode, model.config.use_color)?;
    let pa = model.predict(&ga)?;
    let pb = model.predict(&gb)?;
    let edges_match = ga.edges == gb.edges;
    let max_node_prob_dev = max_dev(&pa.node_probs, &pb.node_probs);
    let max_edge_prob_dev = if edges_match { max_dev(&pa.edge_probs, &pb.edge_probs) } else { f64::INFINITY };
    let mut argmax_ok = argmaxes(&pa.node_probs, pa.num_node_classes) == argmaxes(&pb.node_probs, pb.num_node_classes);
    if edges_match {
        argmax_ok &= argmaxes(&pa.edge_probs, pa.num_edge_classes) == argmaxes(&pb.edge_probs, pb.num_edge_classes);
    }
    let max_coord_dev = max_dev(&transform_corners(t, &pa.x), &pb.x);
    let max_prob_dev = max_node_prob_dev.max(max_edge_prob_dev);
    let r = t.rotation();
    Ok(InvarianceReport {
        scene_id: scene.id.clone(),
        family,
        rotation: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
        translation: [t.translation().x, t.translation().y, t.translation().z],
        tol,
        edges_match,
        max_node_prob_dev,
        max_edge_prob_dev,
        max_prob_dev,
        argmax_ok,
        max_coord_dev,
        pass: edges_match && max_prob_dev < tol && argmax_ok && max_coord_dev < tol,
    })
}

/// `per_scene` transforms of `family` for every scene, drawn from
/// `seed + k` for the k-th (scene, transform) pair.
pub fn scene_invariance_trials(
    model: &Model,
    scenes: &[Scene],
    family: Family,
    per_scene: usize,
    seed: u64,
    tol: f64,
    exec: Exec,
) -> Result<Vec<InvarianceReport>> {
    exec.map_range(scenes.len() * per_scene, |k| {
        let t = random_transform(seed.wrapping_add(k as u64), family);
        assert_prediction_invariance(model, &scenes[k / per_scene], &t, Some(family), tol)
    })
    .into_iter()
    .collect()
}

pub const SUITE_CSV_HEADER: &str = "seed,family,max_prob_dev,argmax_ok,max_coord_dev";

/// One (seed, family) trial of the layer suite, maximized over presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub seed: u64,
    pub family: Family,
    pub max_prob_dev: f64,
    pub argmax_ok: bool,
    pub max_coord_dev: f64,
    /// Largest deviation of the final `h` and `e`.
    pub max_feature_dev: f64,
    /// FAN-only presets must leave `x` bitwise unchanged.
    pub fan_x_untouched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub tol: f64,
    pub rows: Vec<SuiteRow>,
    pub pass: bool,
}

impl SuiteRow {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_prob_dev < tol
            && self.argmax_ok
            && self.max_coord_dev < tol
            && self.max_feature_dev < tol
            && self.fan_x_untouched
    }
}

impl SuiteSummary {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUITE_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:e},{},{:e}\n",
                r.seed, r.family, r.max_prob_dev, r.argmax_ok, r.max_coord_dev
            ));
        }
        out
    }

    pub fn max_feature_dev(&self) -> f64 {
        self.rows.iter().map(|r| r.max_feature_dev).fold(0.0, f64::max)
    }

    pub fn max_coord_dev(&self) -> f64 {
        self.rows.iter().map(|r| r.max_coord_dev).fold(0.0, f64::max)
    }
}

const SUITE_NODES: usize = 6;
const SUITE_EDGE_PROB: f64 = 0.5;
const SUITE_NODE_CLASSES: usize = 8;
const SUITE_EDGE_CLASSES: usize = 5;

fn synthetic_graph(rng: &mut ChaCha8Rng, cfg: &LayerStackConfig) -> Result<FeatureGraph> {
    let n = SUITE_NODES;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(SUITE_EDGE_PROB) {
                edges.push((i, j));
            }
        }
    }
    let m = edges.len();
    let mut sample = |k: usize, s: f64| (0..k).map(|_| rng.gen_range(-s..s)).collect::<Vec<f64>>();
    Ok(FeatureGraph {
        node_ids: (0..n as u32).collect(),
        h: Tensor::new(vec![n, cfg.d_h], sample(n * cfg.d_h, 1.0))?,
        x: Tensor::new(vec![n, 2, 3], sample(n * 6, 2.0))?,
        edges,
        e: Tensor::new(vec![m, cfg.d_e], sample(m * cfg.d_e, 1.0))?,
    })
}

fn heads_probs(ps: &ParamSet, heads: &HeadParams, out: &StackOutput) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let (n, dh) = out.graph.h.as_matrix_dims();
    let (m, de) = (out.graph.edges.len(), out.graph.e.len() / out.graph.edges.len().max(1));
    let h = tape.constant(n, dh, out.graph.h.data().to_vec())?;
    let e = tape.constant(m, de, out.graph.e.data().to_vec())?;
    let embed = match &out.coord_embed {
        Some(c) => Some(tape.constant(m, c.len() / m.max(1), c.data().to_vec())?),
        None => None,
    };
    let nl = classify_nodes(&mut tape, ps, heads, h)?;
    let el = classify_edges(&mut tape, ps, heads, e, embed)?;
    Ok((
        softmax_rows(tape.value(nl), SUITE_NODE_CLASSES),
        softmax_rows(tape.value(el), SUITE_EDGE_CLASSES),
    ))
}

/// Direct stack-level check on random synthetic graphs: for every seed, each
/// preset is run on a graph and on its transformed copy. `canary` corrupts
/// every EGCL layer and must make the suite fail.
pub fn layer_equivariance_suite(
    seeds: u64,
    family: Family,
    tol: f64,
    canary: bool,
    exec: Exec,
) -> Result<SuiteSummary> {
    let rows = exec
        .map_range(seeds as usize, |k| -> Result<SuiteRow> {
            let seed = k as u64;
            let t = random_transform(seed, family);
            let mut row = SuiteRow {
                seed,
                family,
                max_prob_dev: 0.0,
                argmax_ok: true,
                max_coord_dev: 0.0,
                max_feature_dev: 0.0,
                fan_x_untouched: true,
            };
            for (p, name) in PRESET_NAMES.iter().enumerate() {
                let mut cfg = LayerStackConfig::preset(name)?;
                cfg.canary = canary;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64 + 1);
                let mut ps = ParamSet::new();
                let stack = StackParams::build(&mut ps, &cfg, &mut rng)?;
                let heads = HeadParams::build(
                    &mut ps,
                    cfg.d_h,
                    cfg.d_e,
                    cfg.hidden,
                    SUITE_NODE_CLASSES,
                    SUITE_EDGE_CLASSES,
                    cfg.concat_coord_to_edge,
                    &mut rng,
                )?;
                let g = synthetic_graph(&mut rng, &cfg)?;
                let moved = FeatureGraph { x: Tensor::new(vec![SUITE_NODES, 2, 3], transform_corners(&t, g.x.data()))?, ..g.clone() };
                let a = stack_forward(&ps, &stack, &cfg, &g)?;
                let b = stack_forward(&ps, &stack, &cfg, &moved)?;
                if !cfg.has_egcl() {
                    row.fan_x_untouched &= a.graph.x == g.x && b.graph.x == moved.x;
                }
                row.max_feature_dev = row
                    .max_feature_dev
                    .max(max_dev(a.graph.h.data(), b.graph.h.data()))
                    .max(max_dev(a.graph.e.data(), b.graph.e.data()));
                row.max_coord_dev = row.max_coord_dev.max(max_dev(&transform_corners(&t, a.graph.x.data()), b.graph.x.data()));
                let (na, ea) = heads_probs(&ps, &heads, &a)?;
                let (nb, eb) = heads_probs(&ps, &heads, &b)?;
                row.max_prob_dev = row.max_prob_dev.max(max_dev(&na, &nb)).max(max_dev(&ea, &eb));
                row.argmax_ok &= argmaxes(&na, SUITE_NODE_CLASSES) == argmaxes(&nb, SUITE_NODE_CLASSES)
                    && argmaxes(&ea, SUITE_EDGE_CLASSES) == argmaxes(&eb, SUITE_EDGE_CLASSES);
            }
            Ok(row)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.passes(tol));
    Ok(SuiteSummary { tol, rows, pass })
}
