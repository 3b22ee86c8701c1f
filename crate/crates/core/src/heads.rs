//! Node and edge classifiers and the joint cross-entropy objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{mlp_forward, Activation, MlpParams, ParamSet, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub node: MlpParams,
    pub edge: MlpParams,
    pub concat_coord_to_edge: bool,
}

/// Width of the coordinate embedding appended to edge features.
pub const COORD_EMBED_WIDTH: usize = 3;

impl HeadParams {
    #[allow(clippy::too_many_arguments)]
    pub fn build<R: Rng>(
        params: &mut ParamSet,
        d_h: usize,
        d_e: usize,
        hidden: usize,
        node_classes: usize,
        edge_classes: usize,
        concat_coord_to_edge: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let edge_in = d_e + if concat_coord_to_edge { COORD_EMBED_WIDTH } else { 0 };
        Ok(HeadParams {
            node: MlpParams::build(params, "head.node", &[d_h, hidden, node_classes], Activation::None, 1.0, rng)?,
            edge: MlpParams::build(params, "head.edge", &[edge_in, hidden, edge_classes], Activation::None, 1.0, rng)?,
            concat_coord_to_edge,
        })
    }
}

/// Raw node logits `n × |C_node|`.
pub fn classify_nodes(tape: &mut Tape, params: &ParamSet, heads: &HeadParams, h: Var) -> Result<Var> {
    mlp_forward(tape, params, &heads.node, h)
}

/// Raw edge logits `m × |C_edge|` from `e` or `[e, coord_embed]`.
pub fn classify_edges(
    tape: &mut Tape,
    params: &ParamSet,
    heads: &HeadParams,
    e: Var,
    coord_embed: Option<Var>,
) -> Result<Var> {
    let input = match (heads.concat_coord_to_edge, coord_embed) {
        (true, Some(c)) => tape.concat_cols(&[e, c])?,
        (false, None) => e,
        (true, None) => return Err(Error::Config("edge head expects a coordinate embedding".into())),
        (false, Some(_)) => {
            return Err(Error::Config("coordinate embedding supplied but the edge head does not concatenate it".into()))
        }
    };
    mlp_forward(tape, params, &heads.edge, input)
}

/// Loss options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub node_class: Option<Vec<f64>>,
    pub edge_class: Option<Vec<f64>>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 1.0, node_class: None, edge_class: None }
    }
}

impl LossWeights {
    /// Inverse-frequency weights `total / (K · count_c)`; unseen classes get 0.
    pub fn inverse_frequency(counts: &[usize]) -> Vec<f64> {
        let total: usize = counts.iter().sum();
        let k = counts.len() as f64;
        counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { total as f64 / (k * c as f64) })
            .collect()
    }
}

/// One training target per (edge, predicate); unlabeled edges train "none".
pub fn expand_edge_targets(edge_labels: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (k, labels) in edge_labels.iter().enumerate() {
        if labels.is_empty() {
            rows.push(k);
            targets.push(0);
        } else {
            for &p in labels {
                rows.push(k);
                targets.push(p);
            }
        }
    }
    (rows, targets)
}

/// `L = CE(nodes) + λ·CE(edges)`. Multi-predicate edges contribute one
/// target per predicate. Without edges the edge term is absent.
pub fn joint_loss(
    tape: &mut Tape,
    node_logits: Var,
    edge_logits: Var,
    node_targets: &[usize],
    edge_labels: &[Vec<usize>],
    weights: &LossWeights,
) -> Result<Var> {
    let (n, cn) = tape.dims(node_logits);
    let (m, ce) = tape.dims(edge_logits);
    if node_targets.len() != n || edge_labels.len() != m {
        return Err(Error::Data(format!(
            "{} node labels for {n} nodes, {} edge labels for {m} edges",
            node_targets.len(),
            edge_labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Data("no labelled nodes".into()));
    }
    if let Some(&bad) = node_targets.iter().find(|&&t| t >= cn) {
        return Err(Error::Data(format!("node label {bad} outside {cn} classes")));
    }
    if let Some(&bad) = edge_labels.iter().flatten().find(|&&p| p >= ce || p == 0) {
        return Err(Error::Data(format!("edge label {bad} is not a predicate of {ce} classes")));
    }
    let node_loss = tape.weighted_cross_entropy(node_logits, node_targets, weights.node_class.as_deref())?;
    if m == 0 {
        return Ok(node_loss);
    }
    let (rows, targets) = expand_edge_targets(edge_labels);
    let expanded = tape.gather_rows(edge_logits, &rows)?;
    let edge_loss = tape.weighted_cross_entropy(expanded, &targets, weights.edge_class.as_deref())?;
    let scaled = tape.scale(edge_loss, weights.lambda);
    tape.add(node_loss, scaled)
}
