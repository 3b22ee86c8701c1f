//! Message-passing layers (FAN-GCL and EGCL) and the configurable stacks.
//!
//! Coordinates are carried as an `n × 6` matrix: two corner channels of three
//! components each, updated identically.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphbuild::FeatureGraph;
use crate::numcore::{mlp_forward, Activation, MlpParams, ParamSet, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "FAN")]
    Fan,
    #[serde(rename = "EGCL")]
    Egcl,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Fan => "FAN",
            LayerKind::Egcl => "EGCL",
        })
    }
}

pub const PRESET_NAMES: [&str; 5] = ["sgfn", "esgnn1", "esgnn2", "esgnn1x", "esgnn2x"];

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStackConfig {
    pub layers: Vec<LayerKind>,
    pub concat_coord_to_edge: bool,
    pub heads: usize,
    pub d_h: usize,
    pub d_e: usize,
    /// Hidden width of every update MLP.
    pub hidden: usize,
    /// Divide the coordinate sum by the node degree.
    #[serde(default)]
    pub coord_norm: bool,
    /// Deliberately break equivariance by adding raw coordinates into `h`
    /// inside every EGCL. Exists only to prove the symmetry tests are live.
    #[serde(default, skip_serializing_if = "is_false")]
    pub canary: bool,
}

impl LayerStackConfig {
    pub fn new(layers: Vec<LayerKind>, concat_coord_to_edge: bool) -> Self {
        LayerStackConfig {
            layers,
            concat_coord_to_edge,
            heads: 4,
            d_h: 64,
            d_e: 64,
            hidden: 64,
            coord_norm: false,
            canary: false,
        }
    }

    /// Named ablation variant: `sgfn` ①, `esgnn1` ②, `esgnn2` ③, `esgnn1x` ④,
    /// `esgnn2x` ⑤.
    pub fn preset(name: &str) -> Result<Self> {
        use LayerKind::{Egcl, Fan};
        let (layers, concat) = match name {
            "sgfn" => (vec![Fan, Fan], false),
            "esgnn1" => (vec![Fan, Egcl], false),
            "esgnn2" => (vec![Fan, Fan, Egcl, Egcl], false),
            "esgnn1x" => (vec![Fan, Egcl], true),
            "esgnn2x" => (vec![Fan, Fan, Egcl, Egcl], true),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?}; valid presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(LayerStackConfig::new(layers, concat))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("layer stack is empty".into()));
        }
        if self.d_h == 0 || self.d_e == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(Error::Config("layer widths and head count must be positive".into()));
        }
        if !self.d_h.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_h = {} is not divisible by {} heads",
                self.d_h, self.heads
            )));
        }
        Ok(())
    }

    pub fn has_egcl(&self) -> bool {
        self.layers.contains(&LayerKind::Egcl)
    }
}

impl FromStr for LayerStackConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerStackConfig::preset(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanGclParams {
    /// `[h_i, t] → d_h` attention logits.
    pub att: MlpParams,
    /// `[e_ij, h_j] → d_h` target projection.
    pub target: MlpParams,
    /// `[h_i, max message] → d_h`.
    pub node: MlpParams,
    /// `[h_i, e_ij, h_j] → d_e`.
    pub edge: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgclParams {
    /// `[h_i, h_j, d0², d1², e_ij] → d_e`.
    pub edge: MlpParams,
    /// `[h_i, Σ e'_ij] → d_h`.
    pub node: MlpParams,
    /// `e'_ij → 1`, shared by both corner channels.
    pub coord: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Fan(FanGclParams),
    Egcl(EgclParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackParams {
    pub layers: Vec<LayerParams>,
}

/// Scale applied to the final φ_coord layer at initialization so the first
/// coordinate updates are small.
const COORD_INIT_GAIN: f64 = 1e-2;

fn mlp<R: Rng>(params: &mut ParamSet, name: &str, dims: &[usize], rng: &mut R) -> Result<MlpParams> {
    MlpParams::build(params, name, dims, Activation::None, 1.0, rng)
}

impl FanGclParams {
    pub fn build<R: Rng>(params: &mut ParamSet, prefix: &str, cfg: &LayerStackConfig, rng: &mut R) -> Result<Self> {
        let (dh, de, hid) = (cfg.d_h, cfg.d_e, cfg.hidden);
        Ok(FanGclParams {
            att: mlp(params, &format!("{prefix}.att"), &[2 * dh, hid, dh], rng)?,
            target: mlp(params, &format!("{prefix}.target"), &[de + dh, hid, dh], rng)?,
            node: mlp(params, &format!("{prefix}.node"), &[2 * dh, hid, dh], rng)?,
            edge: mlp(params, &format!("{prefix}.edge"), &[2 * dh + de, hid, de], rng)?,
        })
    }
}

impl EgclParams {
    pub fn build<R: Rng>(params: &mut ParamSet, prefix: &str, cfg: &LayerStackConfig, rng: &mut R) -> Result<Self> {
        let (dh, de, hid) = (cfg.d_h, cfg.d_e, cfg.hidden);
        let coord = mlp(params, &format!("{prefix}.coord"), &[de, hid, 1], rng)?;
        let last = &coord.layers()[coord.layers().len() - 1];
        for id in [last.weight, last.bias] {
            params.get_mut(id).data_mut().iter_mut().for_each(|w| *w *= COORD_INIT_GAIN);
        }
        Ok(EgclParams {
            edge: mlp(params, &format!("{prefix}.edge"), &[2 * dh + 2 + de, hid, de], rng)?,
            node: mlp(params, &format!("{prefix}.node"), &[dh + de, hid, dh], rng)?,
            coord,
        })
    }
}

impl StackParams {
    pub fn build<R: Rng>(params: &mut ParamSet, cfg: &LayerStackConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let layers = cfg
            .layers
            .iter()
            .enumerate()
            .map(|(i, kind)| match kind {
                LayerKind::Fan => FanGclParams::build(params, &format!("layer{i}.fan"), cfg, rng).map(LayerParams::Fan),
                LayerKind::Egcl => EgclParams::build(params, &format!("layer{i}.egcl"), cfg, rng).map(LayerParams::Egcl),
            })
            .collect::<Result<_>>()?;
        Ok(StackParams { layers })
    }
}

/// Edge structure shared by every layer of one forward pass.
#[derive(Debug, Clone)]
pub struct Topology {
    pub num_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `1 / deg(i)` for the source of every edge.
    inv_degree: Vec<f64>,
}

impl Topology {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(i, j) in edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::Index { index: i.max(j), len: num_nodes });
            }
            if i == j {
                return Err(Error::Validation(format!("self-edge on node {i}")));
            }
            degree[i] += 1;
        }
        Ok(Topology {
            num_nodes,
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
            inv_degree: edges.iter().map(|e| 1.0 / degree[e.0] as f64).collect(),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Node features `h`, coordinates `x` (`n × 6`) and edge features `e` on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GraphVars {
    pub h: Var,
    pub x: Var,
    pub e: Var,
}

/// Feature-wise attention messages for a batch of edges: `t = MLP_t([e, h_j])`,
/// `α = blockwise softmax(MLP_att([h_i, t]))`, message `α ⊙ t`.
pub fn fan_message_tape(
    tape: &mut Tape,
    params: &ParamSet,
    layer: &FanGclParams,
    heads: usize,
    h_i: Var,
    e: Var,
    h_j: Var,
) -> Result<Var> {
    let d_h = layer.target.out_dim();
    if heads == 0 || !d_h.is_multiple_of(heads) {
        return Err(Error::Config(format!("d_h = {d_h} is not divisible by {heads} heads")));
    }
    let te = tape.concat_cols(&[e, h_j])?;
    let t = mlp_forward(tape, params, &layer.target, te)?;
    let q = tape.concat_cols(&[h_i, t])?;
    let logits = mlp_forward(tape, params, &layer.att, q)?;
    let alpha = tape.block_softmax(logits, d_h / heads)?;
    tape.mul(alpha, t)
}

pub fn fan_gcl_tape(
    tape: &mut Tape,
    params: &ParamSet,
    layer: &FanGclParams,
    cfg: &LayerStackConfig,
    topo: &Topology,
    g: GraphVars,
) -> Result<GraphVars> {
    let h_i = tape.gather_rows(g.h, &topo.src)?;
    let h_j = tape.gather_rows(g.h, &topo.dst)?;
    let msg = fan_message_tape(tape, params, layer, cfg.heads, h_i, g.e, h_j)?;
    let agg = tape.segment_max(msg, &topo.src, topo.num_nodes)?;
    let node_in = tape.concat_cols(&[g.h, agg])?;
    let h = mlp_forward(tape, params, &layer.node, node_in)?;
    let edge_in = tape.concat_cols(&[h_i, g.e, h_j])?;
    let e = mlp_forward(tape, params, &layer.edge, edge_in)?;
    Ok(GraphVars { h, x: g.x, e })
}

/// Per-edge squared distances of the two corner channels (`m × 2`) and the
/// coordinate differences `x_i − x_j` (`m × 6`).
fn corner_distances(tape: &mut Tape, topo: &Topology, x: Var) -> Result<(Var, Var)> {
    let x_i = tape.gather_rows(x, &topo.src)?;
    let x_j = tape.gather_rows(x, &topo.dst)?;
    let diff = tape.sub(x_i, x_j)?;
    let sq = tape.mul(diff, diff)?;
    Ok((tape.block_sum(sq, 3)?, diff))
}

pub fn egcl_tape(
    tape: &mut Tape,
    params: &ParamSet,
    layer: &EgclParams,
    cfg: &LayerStackConfig,
    topo: &Topology,
    g: GraphVars,
) -> Result<GraphVars> {
    let n = topo.num_nodes;
    let h_i = tape.gather_rows(g.h, &topo.src)?;
    let h_j = tape.gather_rows(g.h, &topo.dst)?;
    let (d2, diff) = corner_distances(tape, topo, g.x)?;
    let edge_in = tape.concat_cols(&[h_i, h_j, d2, g.e])?;
    let e = mlp_forward(tape, params, &layer.edge, edge_in)?;

    let phi = mlp_forward(tape, params, &layer.coord, e)?;
    let phi = if cfg.coord_norm {
        let inv = tape.constant(topo.num_edges(), 1, topo.inv_degree.clone())?;
        tape.mul(phi, inv)?
    } else {
        phi
    };
    let velocity = tape.mul_col(diff, phi)?;
    let shift = tape.scatter_add_rows(velocity, &topo.src, n)?;
    let x = tape.add(g.x, shift)?;

    let agg = tape.scatter_add_rows(e, &topo.src, n)?;
    let node_in = tape.concat_cols(&[g.h, agg])?;
    let dh = mlp_forward(tape, params, &layer.node, node_in)?;
    let mut h = tape.add(g.h, dh)?;
    if cfg.canary {
        let ones = tape.constant(6, cfg.d_h, vec![1.0; 6 * cfg.d_h])?;
        let leak = tape.matmul(g.x, ones)?;
        h = tape.add(h, leak)?;
    }
    Ok(GraphVars { h, x, e })
}

/// `[‖x_i⁽⁰⁾ − x_j⁽⁰⁾‖², ‖x_i⁽¹⁾ − x_j⁽¹⁾‖², ‖c_i − c_j‖]` per edge, where `c`
/// is the midpoint of a node's two corners.
pub fn coord_embed_tape(tape: &mut Tape, topo: &Topology, x: Var) -> Result<Var> {
    let (d2, diff) = corner_distances(tape, topo, x)?;
    let mut half = vec![0.0; 18];
    for k in 0..3 {
        half[k * 3 + k] = 0.5;
        half[(k + 3) * 3 + k] = 0.5;
    }
    let avg = tape.constant(6, 3, half)?;
    let dc = tape.matmul(diff, avg)?;
    let sq = tape.mul(dc, dc)?;
    let s = tape.block_sum(sq, 3)?;
    let dist = tape.sqrt(s)?;
    tape.concat_cols(&[d2, dist])
}

/// Apply the layers in order. Returns the final graph and, for the X
/// variants, the coordinate embedding computed from the final `x`.
pub fn stack_tape(
    tape: &mut Tape,
    params: &ParamSet,
    stack: &StackParams,
    cfg: &LayerStackConfig,
    topo: &Topology,
    mut g: GraphVars,
) -> Result<(GraphVars, Option<Var>)> {
    if stack.layers.len() != cfg.layers.len() {
        return Err(Error::Config(format!(
            "stack has {} parameter blocks for {} configured layers",
            stack.layers.len(),
            cfg.layers.len()
        )));
    }
    for (i, (layer, kind)) in stack.layers.iter().zip(&cfg.layers).enumerate() {
        let (hr, hc) = tape.dims(g.h);
        let (er, ec) = tape.dims(g.e);
        let (xr, xc) = tape.dims(g.x);
        if hc != cfg.d_h || ec != cfg.d_e || xc != 6 || hr != topo.num_nodes || xr != hr || er != topo.num_edges() {
            return Err(Error::Config(format!(
                "layer {i} ({kind}) expects h n×{}, x n×6, e m×{} on {} nodes / {} edges; got h {hr}×{hc}, x {xr}×{xc}, e {er}×{ec}",
                cfg.d_h,
                cfg.d_e,
                topo.num_nodes,
                topo.num_edges()
            )));
        }
        g = match (layer, kind) {
            (LayerParams::Fan(p), LayerKind::Fan) => fan_gcl_tape(tape, params, p, cfg, topo, g),
            (LayerParams::Egcl(p), LayerKind::Egcl) => egcl_tape(tape, params, p, cfg, topo, g),
            _ => Err(Error::Config(format!("layer {i}: parameters do not match kind {kind}"))),
        }
        .map_err(|e| match e {
            Error::Config(m) if !m.starts_with("layer ") => Error::Config(format!("layer {i} ({kind}): {m}")),
            Error::Dimension { op, left, right } => {
                Error::Config(format!("layer {i} ({kind}): dimension mismatch in {op}: {left:?} vs {right:?}"))
            }
            other => other,
        })?;
    }
    let embed = if cfg.concat_coord_to_edge {
        Some(coord_embed_tape(tape, topo, g.x)?)
    } else {
        None
    };
    Ok((g, embed))
}

fn graph_inputs(tape: &mut Tape, g: &FeatureGraph) -> Result<(Topology, GraphVars)> {
    let n = g.node_ids.len();
    let topo = Topology::new(n, &g.edges)?;
    let (hr, hc) = g.h.as_matrix_dims();
    let (er, ec) = g.e.as_matrix_dims();
    if hr != n || g.x.len() != n * 6 || er != g.edges.len() {
        return Err(Error::Validation(format!(
            "graph tensors disagree with {n} nodes / {} edges",
            g.edges.len()
        )));
    }
    let h = tape.constant(n, hc, g.h.data().to_vec())?;
    let x = tape.constant(n, 6, g.x.data().to_vec())?;
    let e = tape.constant(er, ec, g.e.data().to_vec())?;
    Ok((topo, GraphVars { h, x, e }))
}

fn graph_outputs(tape: &Tape, template: &FeatureGraph, g: GraphVars) -> Result<FeatureGraph> {
    let n = template.node_ids.len();
    let (_, hc) = tape.dims(g.h);
    let (m, ec) = tape.dims(g.e);
    Ok(FeatureGraph {
        node_ids: template.node_ids.clone(),
        h: Tensor::new(vec![n, hc], tape.value(g.h).to_vec())?,
        x: Tensor::new(vec![n, 2, 3], tape.value(g.x).to_vec())?,
        edges: template.edges.clone(),
        e: Tensor::new(vec![m, ec], tape.value(g.e).to_vec())?,
    })
}

/// Message for a single edge, by value.
pub fn fan_message(
    params: &ParamSet,
    layer: &FanGclParams,
    heads: usize,
    h_i: &[f64],
    e_ij: &[f64],
    h_j: &[f64],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let hi = tape.constant(1, h_i.len(), h_i.to_vec())?;
    let e = tape.constant(1, e_ij.len(), e_ij.to_vec())?;
    let hj = tape.constant(1, h_j.len(), h_j.to_vec())?;
    let m = fan_message_tape(&mut tape, params, layer, heads, hi, e, hj)?;
    Ok(tape.value(m).to_vec())
}

pub fn fan_gcl_forward(
    params: &ParamSet,
    layer: &FanGclParams,
    cfg: &LayerStackConfig,
    g: &FeatureGraph,
) -> Result<FeatureGraph> {
    let mut tape = Tape::new();
    let (topo, vars) = graph_inputs(&mut tape, g)?;
    let out = fan_gcl_tape(&mut tape, params, layer, cfg, &topo, vars)?;
    graph_outputs(&tape, g, out)
}

pub fn egcl_forward(params: &ParamSet, layer: &EgclParams, cfg: &LayerStackConfig, g: &FeatureGraph) -> Result<FeatureGraph> {
    let mut tape = Tape::new();
    let (topo, vars) = graph_inputs(&mut tape, g)?;
    let out = egcl_tape(&mut tape, params, layer, cfg, &topo, vars)?;
    graph_outputs(&tape, g, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackOutput {
    pub graph: FeatureGraph,
    /// `m × 3`, present only when the configuration concatenates it.
    pub coord_embed: Option<Tensor>,
}

pub fn stack_forward(
    params: &ParamSet,
    stack: &StackParams,
    cfg: &LayerStackConfig,
    g: &FeatureGraph,
) -> Result<StackOutput> {
    let mut tape = Tape::new();
    let (topo, vars) = graph_inputs(&mut tape, g)?;
    let (out, embed) = stack_tape(&mut tape, params, stack, cfg, &topo, vars)?;
    let coord_embed = match embed {
        Some(v) => Some(Tensor::new(vec![topo.num_edges(), 3], tape.value(v).to_vec())?),
        None => None,
    };
    Ok(StackOutput {
        graph: graph_outputs(&tape, g, out)?,
        coord_embed,
    })
}
