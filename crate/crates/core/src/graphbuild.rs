//! Initial feature graph of a scene: neighbor edges, node features and corner
//! coordinates, edge features.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_prepared, prepare_points, EncoderParams};
use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Tape, Tensor};
use crate::scene::{compute_segment_properties, Frame, Scene, Segment, SegmentProperties};

/// Neighbor radius (m).
pub const NEIGHBOR_DISTANCE: f64 = 0.5;
/// Width of the geometric block appended to the latent: σ, ln b, ln ν, ln l.
pub const GEOMETRIC_WIDTH: usize = 8;
pub const EDGE_FEATURE_WIDTH: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Rotation-invariant construction: canonical-frame properties and
    /// encoder input, point-set distance neighbors, centroid-distance norm.
    Strict,
    /// World-frame features exactly as written; translation invariant only.
    PaperLiteral,
}

impl Mode {
    pub fn frame(self) -> Frame {
        match self {
            Mode::Strict => Frame::Canonical,
            Mode::PaperLiteral => Frame::World,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Strict => "strict",
            Mode::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "paper-literal" => Ok(Mode::PaperLiteral),
            _ => Err(Error::Config(format!("unknown mode {s:?} (strict, paper-literal)"))),
        }
    }
}

/// Values of the initial graph. `h` is `n × (d_p + 8)`, `x` is `n × 2 × 3`,
/// `e` is `m × 11`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    pub node_ids: Vec<u32>,
    pub h: Tensor,
    pub x: Tensor,
    pub edges: Vec<(usize, usize)>,
    pub e: Tensor,
}

fn aabb(points: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Axis-aligned box gap `√Σ max(0, gap_axis)²` between two point sets.
pub fn aabb_gap(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let (alo, ahi) = aabb(a);
    let (blo, bhi) = aabb(b);
    (0..3)
        .map(|k| (blo[k] - ahi[k]).max(alo[k] - bhi[k]).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Directed neighbor pairs in `(i, j)` lexicographic order; both directions
/// are present whenever the distance test passes.
pub fn build_neighbor_graph(segments: &[Segment], mode: Mode) -> Vec<(usize, usize)> {
    let n = segments.len();
    let mut adjacent = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let near = match mode {
                Mode::PaperLiteral => aabb_gap(&segments[i].points, &segments[j].points) < NEIGHBOR_DISTANCE,
                Mode::Strict => {
                    crate::scene::min_point_distance(&segments[i].points, &segments[j].points) < NEIGHBOR_DISTANCE
                }
            };
            adjacent[i * n + j] = near;
            adjacent[j * n + i] = near;
        }
    }
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| adjacent[i * n + j])
        .collect()
}

fn positive_ln(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::Domain(format!("{what} = {v} must be positive")))
    }
}

/// `[σ, ln b, ln ν, ln l]`.
pub fn geometric_features(prop: &SegmentProperties) -> Result<[f64; GEOMETRIC_WIDTH]> {
    let mut out = [0.0; GEOMETRIC_WIDTH];
    for k in 0..3 {
        out[k] = prop.std[k];
        out[3 + k] = positive_ln(prop.bbox_size[k], "box size")?;
    }
    out[6] = positive_ln(prop.volume, "volume")?;
    out[7] = positive_ln(prop.max_length, "max length")?;
    Ok(out)
}

/// Initial node feature `h = [latent, σ, ln b, ln ν, ln l]` and the corner
/// pair `x` (row-major 2×3).
pub fn init_node_features(prop: &SegmentProperties, latent: &[f64]) -> Result<(Vec<f64>, [f64; 6])> {
    let mut h = latent.to_vec();
    h.extend_from_slice(&geometric_features(prop)?);
    Ok((h, corner_pair(prop)))
}

pub fn corner_pair(prop: &SegmentProperties) -> [f64; 6] {
    let [a, b] = &prop.corners;
    [a.x, a.y, a.z, b.x, b.y, b.z]
}

/// `r_ij = [Δp̄, Δσ, Δb, ln l_i − ln l_j, ln ν_i − ln ν_j]`; strict mode
/// replaces `Δp̄` by `(‖Δp̄‖, 0, 0)`.
pub fn init_edge_features(pi: &SegmentProperties, pj: &SegmentProperties, mode: Mode) -> Result<[f64; EDGE_FEATURE_WIDTH]> {
    let mut r = [0.0; EDGE_FEATURE_WIDTH];
    let dp = pi.centroid - pj.centroid;
    match mode {
        Mode::PaperLiteral => r[..3].copy_from_slice(dp.as_slice()),
        Mode::Strict => r[0] = dp.norm(),
    }
    for k in 0..3 {
        r[3 + k] = pi.std[k] - pj.std[k];
        r[6 + k] = pi.bbox_size[k] - pj.bbox_size[k];
    }
    r[9] = positive_ln(pi.max_length, "max length")? - positive_ln(pj.max_length, "max length")?;
    r[10] = positive_ln(pi.volume, "volume")? - positive_ln(pj.volume, "volume")?;
    Ok(r)
}

/// Everything about a scene's graph that does not depend on parameters,
/// computed once and reused across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInputs {
    pub scene_id: String,
    pub mode: Mode,
    pub node_ids: Vec<u32>,
    /// Prepared encoder rows of all segments, stacked.
    pub points: Vec<f64>,
    /// Segment index of every prepared row.
    pub owner: Vec<usize>,
    /// `n × 8` geometric block.
    pub geometric: Vec<f64>,
    /// `n × 6` corner coordinates.
    pub x: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    /// `m × 11` edge features.
    pub r: Vec<f64>,
    pub node_classes: Vec<usize>,
    /// Ground-truth predicates of every materialized edge (empty: "none").
    pub edge_labels: Vec<Vec<usize>>,
    /// Ground-truth triplets by node index, `(subject, predicate, object)`.
    pub triplets: Vec<(usize, usize, usize)>,
}

impl GraphInputs {
    pub fn build(scene: &Scene, mode: Mode, use_color: bool) -> Result<GraphInputs> {
        let frame = mode.frame();
        let n = scene.segments.len();
        let props: Vec<SegmentProperties> = scene
            .segments
            .iter()
            .map(|s| compute_segment_properties(s, frame))
            .collect::<Result<_>>()?;
        let mut points = Vec::new();
        let mut owner = Vec::new();
        let mut geometric = Vec::with_capacity(n * GEOMETRIC_WIDTH);
        let mut x = Vec::with_capacity(n * 6);
        for (k, (seg, prop)) in scene.segments.iter().zip(&props).enumerate() {
            points.extend(prepare_points(seg, frame, use_color)?);
            owner.extend(std::iter::repeat_n(k, seg.points.len()));
            geometric.extend_from_slice(&geometric_features(prop)?);
            x.extend_from_slice(&corner_pair(prop));
        }
        let edges = build_neighbor_graph(&scene.segments, mode);
        let mut r = Vec::with_capacity(edges.len() * EDGE_FEATURE_WIDTH);
        for &(i, j) in &edges {
            r.extend_from_slice(&init_edge_features(&props[i], &props[j], mode)?);
        }

        let index: BTreeMap<u32, usize> = scene.segments.iter().enumerate().map(|(k, s)| (s.id, k)).collect();
        let lookup = |id: u32| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Data(format!("scene {}: edge references missing segment id {id}", scene.id)))
        };
        let mut triplets = Vec::with_capacity(scene.gt_edges.len());
        for e in &scene.gt_edges {
            triplets.push((lookup(e.source)?, e.predicate, lookup(e.target)?));
        }
        triplets.sort_unstable();
        triplets.dedup();
        let edge_pos: BTreeMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let mut edge_labels = vec![Vec::new(); edges.len()];
        for &(s, p, o) in &triplets {
            if let Some(&k) = edge_pos.get(&(s, o)) {
                edge_labels[k].push(p);
            }
        }
        Ok(GraphInputs {
            scene_id: scene.id.clone(),
            mode,
            node_ids: scene.segments.iter().map(|s| s.id).collect(),
            points,
            owner,
            geometric,
            x,
            edges,
            r,
            node_classes: scene.segments.iter().map(|s| s.gt_class).collect(),
            edge_labels,
            triplets,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1).collect()
    }
}

/// Value-level initial graph of a scene under the given encoder weights.
pub fn assemble_graph(scene: &Scene, params: &ParamSet, encoder: &EncoderParams, mode: Mode) -> Result<FeatureGraph> {
    let inputs = GraphInputs::build(scene, mode, encoder.use_color)?;
    let n = inputs.num_nodes();
    let d_p = encoder.latent_dim();
    let latent = if n == 0 {
        Vec::new()
    } else {
        let mut tape = Tape::new();
        let z = encode_prepared(&mut tape, params, encoder, &inputs.points, &inputs.owner, n)?;
        tape.value(z).to_vec()
    };
    let width = d_p + GEOMETRIC_WIDTH;
    let mut h = Vec::with_capacity(n * width);
    for k in 0..n {
        h.extend_from_slice(&latent[k * d_p..(k + 1) * d_p]);
        h.extend_from_slice(&inputs.geometric[k * GEOMETRIC_WIDTH..(k + 1) * GEOMETRIC_WIDTH]);
    }
    let m = inputs.num_edges();
    Ok(FeatureGraph {
        node_ids: inputs.node_ids,
        h: Tensor::new(vec![n, width], h)?,
        x: Tensor::new(vec![n, 2, 3], inputs.x)?,
        edges: inputs.edges,
        e: Tensor::new(vec![m, EDGE_FEATURE_WIDTH], inputs.r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{apply_transform, generate_scene, GeneratorConfig, LabelSpace, Transform};
    use nalgebra::{Matrix3, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(id: u32, lo: [f64; 3], side: f64) -> Segment {
        let steps = 4;
        let mut pts = Vec::new();
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    if [a, b, c].iter().any(|&k| k == 0 || k == steps) {
                        let f = |k: usize, t: usize| lo[k] + side * t as f64 / steps as f64;
                        pts.push([f(0, a), f(1, b), f(2, c)]);
                    }
                }
            }
        }
        let n = pts.len();
        Segment { id, points: pts, colors: vec![[0.5; 3]; n], gt_class: 0 }
    }

    fn props(b: [f64; 3], std: [f64; 3], centroid: [f64; 3]) -> SegmentProperties {
        SegmentProperties {
            centroid: Vector3::from(centroid),
            std: Vector3::from(std),
            bbox_size: Vector3::from(b),
            max_length: b.iter().copied().fold(0.0, f64::max),
            volume: b.iter().product(),
            corners: [Vector3::zeros(), Vector3::from(b)],
            frame: Frame::World,
            basis: Matrix3::identity(),
        }
    }

    fn brute_min_distance(a: &Segment, b: &Segment) -> f64 {
        let mut best = f64::INFINITY;
        for p in &a.points {
            for q in &b.points {
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt());
            }
        }
        best
    }

    #[test]
    fn cubes_with_small_gap_are_neighbors() {
        let segs = [cube(0, [0.0; 3], 1.0), cube(1, [1.3, 0.0, 0.0], 1.0)];
        assert!((brute_min_distance(&segs[0], &segs[1]) - 0.3).abs() < 1e-12);
        for mode in [Mode::Strict, Mode::PaperLiteral] {
            assert_eq!(build_neighbor_graph(&segs, mode), vec![(0, 1), (1, 0)]);
        }
    }

    #[test]
    fn cubes_with_large_gap_are_not_neighbors() {
        let segs = [cube(0, [0.0; 3], 1.0), cube(1, [1.6, 0.0, 0.0], 1.0)];
        assert!(brute_min_distance(&segs[0], &segs[1]) > 0.5);
        for mode in [Mode::Strict, Mode::PaperLiteral] {
            assert!(build_neighbor_graph(&segs, mode).is_empty());
        }
    }

    #[test]
    fn single_segment_has_no_edges() {
        assert!(build_neighbor_graph(&[cube(0, [0.0; 3], 1.0)], Mode::Strict).is_empty());
    }

    #[test]
    fn unit_box_has_zero_log_block() {
        let (h, _) = init_node_features(&props([1.0; 3], [0.5; 3], [0.0; 3]), &[]).unwrap();
        assert_eq!(&h[3..], &[0.0; 5]);
    }

    #[test]
    fn log_block_formula() {
        let (h, _) = init_node_features(&props([1.0, 2.0, 4.0], [0.5; 3], [0.0; 3]), &[0.0; 4]).unwrap();
        let expected = [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 2f64.ln(), 4f64.ln(), 8f64.ln(), 4f64.ln()];
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_shifts_log_volume_and_length() {
        let a = geometric_features(&props([0.3, 0.7, 1.1], [0.1; 3], [0.0; 3])).unwrap();
        let b = geometric_features(&props([0.6, 1.4, 2.2], [0.2; 3], [0.0; 3])).unwrap();
        assert!((b[6] - a[6] - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((b[7] - a[7] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_positive_size_is_domain_error() {
        let mut p = props([1.0; 3], [0.5; 3], [0.0; 3]);
        p.volume = 0.0;
        assert!(matches!(init_node_features(&p, &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn edge_features_identity_antisymmetry_and_norm() {
        let a = props([1.0, 2.0, 0.5], [0.3, 0.4, 0.1], [3.0, 4.0, 0.0]);
        let b = props([0.5, 0.5, 0.5], [0.1, 0.2, 0.3], [0.0, 0.0, 0.0]);
        assert_eq!(init_edge_features(&a, &a, Mode::PaperLiteral).unwrap(), [0.0; 11]);
        let ab = init_edge_features(&a, &b, Mode::PaperLiteral).unwrap();
        let ba = init_edge_features(&b, &a, Mode::PaperLiteral).unwrap();
        for k in 0..11 {
            assert_eq!(ab[k], -ba[k]);
        }
        let strict = init_edge_features(&a, &b, Mode::Strict).unwrap();
        assert_eq!(&strict[..3], &[5.0, 0.0, 0.0]);
        assert_eq!(&strict[3..], &ab[3..]);
    }

    fn scene_of(segments: Vec<Segment>) -> Scene {
        Scene { id: "s".into(), labels: LabelSpace::default(), segments, gt_edges: vec![] }
    }

    fn encoder(seed: u64) -> (ParamSet, EncoderParams) {
        let mut ps = ParamSet::new();
        let enc = EncoderParams::build(&mut ps, &[16], 8, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (ps, enc)
    }

    #[test]
    fn two_close_segments_make_two_edges() {
        let (ps, enc) = encoder(0);
        let mut b = cube(1, [1.2, 0.0, 0.0], 0.5);
        for p in &mut b.points {
            p[2] *= 1.7;
        }
        let g = assemble_graph(&scene_of(vec![cube(0, [0.0; 3], 1.0), b]), &ps, &enc, Mode::Strict).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 0)]);
        assert_eq!(g.h.shape(), &[2, 16]);
        assert_eq!(g.e.shape(), &[2, 11]);
        assert_eq!(g.x.shape(), &[2, 2, 3]);
    }

    #[test]
    fn isolated_segments_give_valid_edgeless_graph() {
        let (ps, enc) = encoder(1);
        let g = assemble_graph(
            &scene_of(vec![cube(0, [0.0; 3], 1.0), cube(1, [5.0, 0.0, 0.0], 1.0)]),
            &ps,
            &enc,
            Mode::PaperLiteral,
        )
        .unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.e.shape(), &[0, 11]);
    }

    fn max_dev(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn strict_graph_is_invariant_and_corners_move() {
        let (ps, enc) = encoder(2);
        let cfg = GeneratorConfig::default();
        for seed in 0..10 {
            let s = generate_scene(&cfg, seed).unwrap();
            let t = crate::equivcheck::random_transform(100 + seed, crate::equivcheck::Family::So3);
            let base = assemble_graph(&s, &ps, &enc, Mode::Strict).unwrap();
            let moved = assemble_graph(&apply_transform(&s, &t), &ps, &enc, Mode::Strict).unwrap();
            assert_eq!(base.edges, moved.edges);
            assert!(max_dev(base.h.data(), moved.h.data()) < 1e-9);
            assert!(max_dev(base.e.data(), moved.e.data()) < 1e-9);
            let expected: Vec<f64> = base
                .x
                .data()
                .chunks(3)
                .flat_map(|c| {
                    let v = t.apply_vec(&Vector3::new(c[0], c[1], c[2]));
                    [v.x, v.y, v.z]
                })
                .collect();
            assert!(max_dev(&expected, moved.x.data()) < 1e-9);
        }
    }

    #[test]
    fn paper_literal_graph_is_translation_invariant() {
        let (ps, enc) = encoder(3);
        let s = generate_scene(&GeneratorConfig::default(), 11).unwrap();
        let t = Transform::translation_only(Vector3::new(-4.0, 2.5, 1.0));
        let base = assemble_graph(&s, &ps, &enc, Mode::PaperLiteral).unwrap();
        let moved = assemble_graph(&apply_transform(&s, &t), &ps, &enc, Mode::PaperLiteral).unwrap();
        assert_eq!(base.edges, moved.edges);
        assert!(max_dev(base.h.data(), moved.h.data()) < 1e-12);
        assert!(max_dev(base.e.data(), moved.e.data()) < 1e-12);
    }

    #[test]
    fn edge_labels_follow_ground_truth() {
        let s = generate_scene(&GeneratorConfig::default(), 5).unwrap();
        let g = GraphInputs::build(&s, Mode::Strict, false).unwrap();
        for (k, &(i, j)) in g.edges.iter().enumerate() {
            let expected: Vec<usize> = s
                .gt_edges
                .iter()
                .filter(|e| e.source == s.segments[i].id && e.target == s.segments[j].id)
                .map(|e| e.predicate)
                .collect();
            assert_eq!(g.edge_labels[k], expected);
        }
    }
}
