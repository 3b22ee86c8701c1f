//! Permutation-invariant point-cloud encoder: a shared per-point MLP followed
//! by an elementwise max over the points of each segment.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{mlp_forward, Activation, MlpParams, ParamSet, Tape, Var};
use crate::scene::{canonical_basis, Frame, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub mlp: MlpParams,
    pub use_color: bool,
}

impl EncoderParams {
    /// Per-point widths `in → hidden… → latent`, ReLU after every layer.
    pub fn build<R: Rng>(
        params: &mut ParamSet,
        hidden: &[usize],
        latent: usize,
        use_color: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![Self::input_width(use_color)];
        dims.extend_from_slice(hidden);
        dims.push(latent);
        let mlp = MlpParams::build(params, "encoder", &dims, Activation::Relu, 1.0, rng)?;
        Ok(EncoderParams { mlp, use_color })
    }

    pub fn input_width(use_color: bool) -> usize {
        if use_color { 6 } else { 3 }
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.out_dim()
    }
}

/// Encoder input rows for one segment: points sorted into a canonical order,
/// centered on their centroid and, in the canonical frame, rotated into the
/// segment's PCA basis. Colors are appended unchanged when requested.
pub fn prepare_points(seg: &Segment, frame: Frame, use_color: bool) -> Result<Vec<f64>> {
    if seg.points.is_empty() {
        return Err(Error::Contract(format!("segment {} has no points to encode", seg.id)));
    }
    let mut order: Vec<usize> = (0..seg.points.len()).collect();
    let key = |k: usize| -> [f64; 6] {
        let p = seg.points[k];
        let c = seg.colors.get(k).copied().unwrap_or([0.0; 3]);
        [p[0], p[1], p[2], c[0], c[1], c[2]]
    };
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<[f64; 3]> = order.iter().map(|&k| seg.points[k]).collect();
    let n = sorted.len() as f64;
    let c = sorted.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / n;
    let basis = match frame {
        Frame::World => None,
        Frame::Canonical => Some(canonical_basis(&sorted, &c).map_err(|e| match e {
            Error::Degenerate { reason, .. } => Error::Degenerate { segment: i64::from(seg.id), reason },
            other => other,
        })?),
    };
    let width = EncoderParams::input_width(use_color);
    let mut out = Vec::with_capacity(sorted.len() * width);
    for (&k, p) in order.iter().zip(&sorted) {
        let d = Vector3::from(*p) - c;
        let q = match &basis {
            Some(b) => b.transpose() * d,
            None => d,
        };
        out.extend_from_slice(q.as_slice());
        if use_color {
            out.extend_from_slice(&seg.colors[k]);
        }
    }
    Ok(out)
}

/// Encode many segments at once. `points` holds prepared rows of all
/// segments stacked; `owner[r]` is the segment of row `r`. Returns the
/// `num_segments × latent` matrix of pooled features.
pub fn encode_prepared(
    tape: &mut Tape,
    params: &ParamSet,
    encoder: &EncoderParams,
    points: &[f64],
    owner: &[usize],
    num_segments: usize,
) -> Result<Var> {
    let width = encoder.mlp.in_dim();
    if points.len() != owner.len() * width {
        return Err(Error::dims("encode_prepared", &[owner.len(), width], &[points.len()]));
    }
    let mut counts = vec![0usize; num_segments];
    for &o in owner {
        if o >= num_segments {
            return Err(Error::Index { index: o, len: num_segments });
        }
        counts[o] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Contract("cannot encode a segment with no points".into()));
    }
    let x = tape.constant(owner.len(), width, points.to_vec())?;
    let per_point = mlp_forward(tape, params, &encoder.mlp, x)?;
    tape.segment_max(per_point, owner, num_segments)
}

/// Latent vector of a single segment.
pub fn encode_segment(params: &ParamSet, encoder: &EncoderParams, seg: &Segment, frame: Frame) -> Result<Vec<f64>> {
    let prepared = prepare_points(seg, frame, encoder.use_color)?;
    let rows = seg.points.len();
    let mut tape = Tape::new();
    let out = encode_prepared(&mut tape, params, encoder, &prepared, &vec![0; rows], 1)?;
    Ok(tape.value(out).to_vec())
}
