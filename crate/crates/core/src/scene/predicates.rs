use serde::{Deserialize, Serialize};

use super::{compute_segment_properties, Frame, GtEdge, Point, Segment};

/// Edge classes of the default label space, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    None = 0,
    SupportedBy = 1,
    CloseBy = 2,
    BiggerThan = 3,
    SameClassAs = 4,
}

impl Predicate {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Thresholds for the synthetic relation rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredicateRules {
    /// Max |bottom(i) − top(j)| for i to rest on j (m).
    pub support_gap: f64,
    /// Min point-to-point distance below which two segments are close (m).
    pub close_distance: f64,
    /// Volume ratio above which i is bigger than j.
    pub bigger_ratio: f64,
}

impl Default for PredicateRules {
    fn default() -> Self {
        PredicateRules {
            support_gap: 0.02,
            close_distance: 0.5,
            bigger_ratio: 2.0,
        }
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Minimum Euclidean distance between two point sets (brute force).
pub fn min_point_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(dist2(p, q));
        }
    }
    best.sqrt()
}

/// True as soon as some pair of points is closer than `threshold`.
pub(crate) fn any_within(a: &[Point], b: &[Point], threshold: f64) -> bool {
    let t2 = threshold * threshold;
    a.iter().any(|p| b.iter().any(|q| dist2(p, q) < t2))
}

type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no repeated end.
fn convex_hull(points: &[Point]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn project(poly: &[P2], axis: P2) -> (f64, f64) {
    poly.iter()
        .map(|p| p[0] * axis[0] + p[1] * axis[1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn separated_along_edges(a: &[P2], b: &[P2]) -> bool {
    if a.len() < 2 {
        return false;
    }
    (0..a.len()).any(|k| {
        let p = a[k];
        let q = a[(k + 1) % a.len()];
        let axis = [-(q[1] - p[1]), q[0] - p[0]];
        let (alo, ahi) = project(a, axis);
        let (blo, bhi) = project(b, axis);
        ahi < blo || bhi < alo
    })
}

/// Whether the horizontal (xy) convex hulls of two point sets intersect.
pub fn footprints_overlap(a: &[Point], b: &[Point]) -> bool {
    let ha = convex_hull(a);
    let hb = convex_hull(b);
    if ha.is_empty() || hb.is_empty() {
        return false;
    }
    if ha.len() == 1 && hb.len() == 1 {
        return ha[0] == hb[0];
    }
    !separated_along_edges(&ha, &hb) && !separated_along_edges(&hb, &ha)
}

fn z_range(points: &[Point]) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])))
}

fn mean_z(points: &[Point]) -> f64 {
    points.iter().map(|p| p[2]).sum::<f64>() / points.len().max(1) as f64
}

/// Rule-based ground truth for every ordered pair of segments.
///
/// * supported-by: bottom of i within `support_gap` of the top of j, i above j,
///   and their xy footprints overlap;
/// * close-by: min point distance below `close_distance` and not supported-by;
/// * bigger-than: canonical box volume ratio above `bigger_ratio`;
/// * same-class-as: equal classes and neither is bigger than the other.
pub fn derive_gt_predicates(segments: &[Segment], rules: &PredicateRules) -> Vec<GtEdge> {
    let volumes: Vec<Option<f64>> = segments
        .iter()
        .map(|s| compute_segment_properties(s, Frame::Canonical).ok().map(|p| p.volume))
        .collect();
    let zr: Vec<(f64, f64)> = segments.iter().map(|s| z_range(&s.points)).collect();
    let zm: Vec<f64> = segments.iter().map(|s| mean_z(&s.points)).collect();
    let bigger = |i: usize, j: usize| match (volumes[i], volumes[j]) {
        (Some(vi), Some(vj)) => vi > rules.bigger_ratio * vj,
        _ => false,
    };

    let mut out = Vec::new();
    for (i, si) in segments.iter().enumerate() {
        for (j, sj) in segments.iter().enumerate() {
            if i == j {
                continue;
            }
            let edge = |p: Predicate| GtEdge {
                source: si.id,
                predicate: p.index(),
                target: sj.id,
            };
            let supported = (zr[i].0 - zr[j].1).abs() <= rules.support_gap
                && zm[i] > zm[j]
                && footprints_overlap(&si.points, &sj.points);
            if supported {
                out.push(edge(Predicate::SupportedBy));
            } else if any_within(&si.points, &sj.points, rules.close_distance) {
                out.push(edge(Predicate::CloseBy));
            }
            let i_bigger = bigger(i, j);
            if i_bigger {
                out.push(edge(Predicate::BiggerThan));
            }
            if si.gt_class == sj.gt_class && !i_bigger && !bigger(j, i) {
                out.push(edge(Predicate::SameClassAs));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Transform;
    use nalgebra::Vector3;

    /// Corner-and-face-centre samples of an axis-aligned box.
    fn box_points(lo: [f64; 3], hi: [f64; 3]) -> Vec<Point> {
        let mut pts = Vec::new();
        let steps = 3;
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    let on_face = [a, b, c].iter().any(|&k| k == 0 || k == steps);
                    if on_face {
                        let f = |k: usize, t: usize| lo[k] + (hi[k] - lo[k]) * t as f64 / steps as f64;
                        pts.push([f(0, a), f(1, b), f(2, c)]);
                    }
                }
            }
        }
        pts
    }

    fn segment(id: u32, class: usize, points: Vec<Point>) -> Segment {
        let n = points.len();
        Segment { id, points, colors: vec![[0.5; 3]; n], gt_class: class }
    }

    fn has(edges: &[GtEdge], s: u32, p: Predicate, t: u32) -> bool {
        edges.contains(&GtEdge { source: s, predicate: p.index(), target: t })
    }

    #[test]
    fn far_equal_cubes_have_no_relations() {
        let a = segment(0, 1, box_points([0.0; 3], [1.0; 3]));
        let b = segment(1, 2, box_points([11.0, 0.0, 0.0], [12.0, 1.0, 1.0]));
        assert!(derive_gt_predicates(&[a, b], &PredicateRules::default()).is_empty());
    }

    #[test]
    fn cube_resting_on_slab() {
        let slab = segment(0, 0, box_points([-1.0, -1.0, -0.1], [1.0, 1.0, 0.0]));
        let cube = segment(1, 5, box_points([-0.25, -0.25, 0.0], [0.25, 0.25, 0.5]));
        let edges = derive_gt_predicates(&[slab.clone(), cube.clone()], &PredicateRules::default());
        assert!(has(&edges, 1, Predicate::SupportedBy, 0));
        assert!(!has(&edges, 0, Predicate::SupportedBy, 1));
        // the reverse direction is only "close"
        assert!(has(&edges, 0, Predicate::CloseBy, 1));
        assert!(!has(&edges, 1, Predicate::CloseBy, 0));

        // brute-force check of the stated thresholds
        let bottom = cube.points.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let top = slab.points.iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max);
        assert!((bottom - top).abs() <= 0.02);
    }

    #[test]
    fn bigger_than_is_asymmetric() {
        // volumes 3 : 1
        let a = segment(0, 1, box_points([0.0; 3], [3.0, 1.0, 1.0]));
        let b = segment(1, 1, box_points([20.0, 0.0, 0.0], [21.0, 1.0, 1.0]));
        let edges = derive_gt_predicates(&[a, b], &PredicateRules::default());
        assert!(has(&edges, 0, Predicate::BiggerThan, 1));
        assert!(!has(&edges, 1, Predicate::BiggerThan, 0));
        assert!(!has(&edges, 0, Predicate::SameClassAs, 1));
    }

    #[test]
    fn same_class_when_volumes_comparable() {
        let a = segment(0, 3, box_points([0.0; 3], [1.0; 3]));
        let b = segment(1, 3, box_points([1.3, 0.0, 0.0], [2.3, 1.2, 1.0]));
        let edges = derive_gt_predicates(&[a, b], &PredicateRules::default());
        assert!(has(&edges, 0, Predicate::SameClassAs, 1));
        assert!(has(&edges, 1, Predicate::SameClassAs, 0));
        assert!(has(&edges, 0, Predicate::CloseBy, 1));
    }

    #[test]
    fn relations_invariant_under_yaw_and_translation() {
        let segs = vec![
            // distinct extents everywhere: a repeated covariance eigenvalue
            // leaves the canonical box orientation undetermined
            segment(0, 0, box_points([-1.0, -0.8, -0.1], [1.0, 0.8, 0.0])),
            segment(1, 5, box_points([-0.25, -0.2, 0.0], [0.25, 0.2, 0.45])),
            segment(2, 3, box_points([0.5, 0.3, 0.0], [1.0, 0.9, 0.8])),
            segment(3, 5, box_points([-1.5, 1.0, 0.0], [-1.25, 1.4, 0.32])),
        ];
        let base = derive_gt_predicates(&segs, &PredicateRules::default());
        for k in 0..8 {
            let t = Transform::yaw(0.37 * k as f64 + 0.1, Vector3::new(1.5, -2.0, 0.75 * k as f64));
            let moved: Vec<Segment> = segs
                .iter()
                .map(|s| segment(s.id, s.gt_class, s.points.iter().map(|p| t.apply_point(p)).collect()))
                .collect();
            assert_eq!(derive_gt_predicates(&moved, &PredicateRules::default()), base, "yaw step {k}");
        }
    }

    #[test]
    fn footprint_overlap_cases() {
        let a = box_points([0.0; 3], [1.0; 3]);
        let b = box_points([0.5, 0.5, 2.0], [1.5, 1.5, 3.0]);
        let c = box_points([1.2, 0.0, 0.0], [2.0, 1.0, 1.0]);
        assert!(footprints_overlap(&a, &b));
        assert!(!footprints_overlap(&a, &c));
    }

    #[test]
    fn min_distance_brute_force() {
        let a = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let b = vec![[1.0, 0.3, 0.4], [5.0, 5.0, 5.0]];
        assert!((min_point_distance(&a, &b) - 0.5).abs() < 1e-15);
    }
}
