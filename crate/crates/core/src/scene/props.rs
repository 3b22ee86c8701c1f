use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::{Point, Segment};
use crate::error::{Error, Result};

/// Half-width added on each side of a box extent so that planar segments
/// never produce a zero size.
pub const BOX_INFLATION: f64 = 1e-6;

/// Second eigenvalue below this fraction of the first means the points are
/// (numerically) collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    World,
    Canonical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentProperties {
    pub centroid: Vector3<f64>,
    pub std: Vector3<f64>,
    pub bbox_size: Vector3<f64>,
    pub max_length: f64,
    pub volume: f64,
    /// `(min, min, min)` and `(max, max, max)` box corners in world coordinates.
    pub corners: [Vector3<f64>; 2],
    pub frame: Frame,
    /// Columns are the box axes in world coordinates (identity for `World`).
    pub basis: Matrix3<f64>,
}

fn to_vec(p: &Point) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

fn centroid(points: &[Point]) -> Vector3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + to_vec(p));
    sum / points.len() as f64
}

fn covariance(points: &[Point], c: &Vector3<f64>) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = to_vec(p) - c;
        cov += d * d.transpose();
    }
    cov / points.len() as f64
}

/// PCA eigenbasis of a point cloud, columns ordered by descending variance.
///
/// The first two axes point towards the heavier tail of the cloud (positive
/// third central moment); the third is their cross product, so the basis is a
/// proper rotation that co-rotates with the points.
pub fn canonical_basis(points: &[Point], c: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let eig = SymmetricEigen::new(covariance(points, c));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if lambda[0] <= 0.0 || lambda[1] <= COLLINEAR_RATIO * lambda[0] {
        return Err(Error::Degenerate {
            segment: -1,
            reason: format!("rank-deficient covariance (eigenvalues {lambda:?})"),
        });
    }
    let mut axes = [Vector3::zeros(); 2];
    for (slot, &k) in order.iter().take(2).enumerate() {
        let v: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
        let third: f64 = points.iter().map(|p| (to_vec(p) - c).dot(&v).powi(3)).sum::<f64>() / points.len() as f64;
        let scale = lambda[slot].powf(1.5);
        let sign = if third.abs() > 1e-9 * scale {
            third.signum()
        } else {
            // Symmetric along this axis: fall back to the largest-component rule.
            let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
            if big < 0.0 { -1.0 } else { 1.0 }
        };
        axes[slot] = v * sign;
    }
    let third = axes[0].cross(&axes[1]);
    Ok(Matrix3::from_columns(&[axes[0], axes[1], third]))
}

pub fn compute_segment_properties(seg: &Segment, frame: Frame) -> Result<SegmentProperties> {
    let degenerate = |reason: String| Error::Degenerate {
        segment: i64::from(seg.id),
        reason,
    };
    if seg.points.len() < 8 {
        return Err(degenerate(format!("{} points (need at least 8)", seg.points.len())));
    }
    let c = centroid(&seg.points);
    let basis = match canonical_basis(&seg.points, &c) {
        Ok(b) => match frame {
            Frame::Canonical => b,
            Frame::World => Matrix3::identity(),
        },
        Err(Error::Degenerate { reason, .. }) => return Err(degenerate(reason)),
        Err(e) => return Err(e),
    };

    let n = seg.points.len() as f64;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut sq = Vector3::zeros();
    for p in &seg.points {
        let q = basis.transpose() * (to_vec(p) - c);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
        sq += q.component_mul(&q);
    }
    let std = (sq / n).map(f64::sqrt);
    lo.add_scalar_mut(-BOX_INFLATION);
    hi.add_scalar_mut(BOX_INFLATION);
    let bbox_size = hi - lo;
    let max_length = bbox_size.max();
    let volume = bbox_size.x * bbox_size.y * bbox_size.z;
    Ok(SegmentProperties {
        centroid: c,
        std,
        bbox_size,
        max_length,
        volume,
        corners: [c + basis * lo, c + basis * hi],
        frame,
        basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Transform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn seg(points: Vec<Point>) -> Segment {
        let n = points.len();
        Segment {
            id: 0,
            points,
            colors: vec![[0.0; 3]; n],
            gt_class: 0,
        }
    }

    fn unit_cube() -> Segment {
        seg((0..8)
            .map(|k| [(k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64])
            .collect())
    }

    fn random_blob(rng: &mut ChaCha8Rng, n: usize) -> Segment {
        let scale = [1.3, 0.6, 0.25];
        seg((0..n)
            .map(|_| {
                let mut p = [0.0; 3];
                for k in 0..3 {
                    let z: f64 = rng.sample(StandardNormal);
                    p[k] = scale[k] * z + 0.1 * z * z;
                }
                p
            })
            .collect())
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Transform {
        let q: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        let t = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        Transform::new(*uq.to_rotation_matrix().matrix(), t).unwrap()
    }

    #[test]
    fn unit_cube_world_frame() {
        let p = compute_segment_properties(&unit_cube(), Frame::World).unwrap();
        assert_eq!(p.centroid, Vector3::new(0.5, 0.5, 0.5));
        for k in 0..3 {
            assert!((p.bbox_size[k] - (1.0 + 2e-6)).abs() < 1e-15);
            assert!((p.std[k] - 0.5).abs() < 1e-15);
        }
        assert!((p.max_length - 1.0).abs() < 1e-5);
        assert!((p.volume - 1.0).abs() < 1e-5);
        assert!((p.corners[0] - Vector3::repeat(-1e-6)).norm() < 1e-15);
        assert!((p.corners[1] - Vector3::repeat(1.0 + 1e-6)).norm() < 1e-15);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let s = seg((0..10).map(|k| [k as f64, 2.0 * k as f64, 0.0]).collect());
        assert!(matches!(
            compute_segment_properties(&s, Frame::World),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn too_few_points_are_degenerate() {
        let s = seg(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(compute_segment_properties(&s, Frame::Canonical).is_err());
    }

    #[test]
    fn translation_moves_only_the_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_blob(&mut rng, 64);
        let shift = [0.7, -3.0, 2.2];
        let moved = seg(s.points.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect());
        for frame in [Frame::World, Frame::Canonical] {
            let a = compute_segment_properties(&s, frame).unwrap();
            let b = compute_segment_properties(&moved, frame).unwrap();
            assert!((b.centroid - a.centroid - Vector3::from(shift)).norm() < 1e-12);
            assert!((a.std - b.std).norm() < 1e-12);
            assert!((a.bbox_size - b.bbox_size).norm() < 1e-12);
            assert!((a.volume - b.volume).abs() < 1e-12);
            assert!((a.max_length - b.max_length).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_properties_invariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = random_blob(&mut rng, 48);
            let t = random_rotation(&mut rng);
            let moved = seg(s.points.iter().map(|p| t.apply_point(p)).collect());
            let a = compute_segment_properties(&s, Frame::Canonical).unwrap();
            let b = compute_segment_properties(&moved, Frame::Canonical).unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-300);
            for k in 0..3 {
                assert!(rel(a.std[k], b.std[k]) < 1e-9);
                assert!(rel(a.bbox_size[k], b.bbox_size[k]) < 1e-9);
            }
            assert!(rel(a.volume, b.volume) < 1e-9);
            assert!(rel(a.max_length, b.max_length) < 1e-9);
            for c in 0..2 {
                let expected = t.apply_vec(&a.corners[c]);
                assert!((expected - b.corners[c]).norm() < 1e-9, "corner {c} drifted");
            }
        }
    }

    #[test]
    fn canonical_basis_is_proper_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_blob(&mut rng, 40);
        let p = compute_segment_properties(&s, Frame::Canonical).unwrap();
        assert!((p.basis.determinant() - 1.0).abs() < 1e-12);
        assert!((p.basis.transpose() * p.basis - Matrix3::identity()).abs().max() < 1e-12);
        assert!(p.bbox_size[0] >= p.bbox_size[2]);
    }
}
