//! Full network: encoder, input projections, layer stack, classification heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_prepared, EncoderParams};
use crate::error::{Error, Result};
use crate::gnn::{stack_tape, GraphVars, LayerStackConfig, StackParams, Topology};
use crate::graphbuild::{GraphInputs, Mode, EDGE_FEATURE_WIDTH, GEOMETRIC_WIDTH};
use crate::heads::{classify_edges, classify_nodes, joint_loss, HeadParams, LossWeights};
use crate::numcore::{mlp_forward, softmax_rows, Activation, MlpParams, ParamSet, Tape, Var};
use crate::scene::LabelSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: String,
    pub mode: Mode,
    pub stack: LayerStackConfig,
    pub latent: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: usize,
    pub use_color: bool,
    pub labels: LabelSpace,
}

impl ModelConfig {
    /// Default widths: latent 64 (encoder 3→32→64), `d_h = d_e = 64`, 4 heads.
    pub fn from_preset(preset: &str, mode: Mode, labels: LabelSpace) -> Result<Self> {
        Ok(ModelConfig {
            preset: preset.to_string(),
            mode,
            stack: LayerStackConfig::preset(preset)?,
            latent: 64,
            encoder_hidden: vec![32],
            head_hidden: 64,
            use_color: false,
            labels,
        })
    }

    /// Narrow widths for finite-difference checks.
    pub fn compact(preset: &str, mode: Mode, labels: LabelSpace) -> Result<Self> {
        let mut cfg = ModelConfig::from_preset(preset, mode, labels)?;
        cfg.latent = 8;
        cfg.encoder_hidden = vec![8];
        cfg.head_hidden = 8;
        cfg.stack.d_h = 12;
        cfg.stack.d_e = 8;
        cfg.stack.hidden = 8;
        cfg.stack.heads = 2;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        self.labels.validate()?;
        if self.latent == 0 || self.head_hidden == 0 || self.encoder_hidden.contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub encoder: EncoderParams,
    pub node_proj: MlpParams,
    pub edge_proj: MlpParams,
    pub stack: StackParams,
    pub heads: HeadParams,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub node_logits: Var,
    pub edge_logits: Var,
    pub h: Var,
    pub x: Var,
    pub e: Var,
}

/// Softmax outputs and final coordinates of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub node_probs: Vec<f64>,
    pub edge_probs: Vec<f64>,
    pub num_node_classes: usize,
    pub num_edge_classes: usize,
    pub x: Vec<f64>,
}

impl Model {
    /// Build all parameters in a fixed order from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = EncoderParams::build(&mut params, &config.encoder_hidden, config.latent, config.use_color, &mut rng)?;
        let s = &config.stack;
        let node_proj = MlpParams::build(
            &mut params,
            "proj.node",
            &[config.latent + GEOMETRIC_WIDTH, s.d_h],
            Activation::None,
            1.0,
            &mut rng,
        )?;
        let edge_proj =
            MlpParams::build(&mut params, "proj.edge", &[EDGE_FEATURE_WIDTH, s.d_e], Activation::None, 1.0, &mut rng)?;
        let stack = StackParams::build(&mut params, s, &mut rng)?;
        let heads = HeadParams::build(
            &mut params,
            s.d_h,
            s.d_e,
            config.head_hidden,
            config.labels.num_node_classes(),
            config.labels.num_edge_classes(),
            s.concat_coord_to_edge,
            &mut rng,
        )?;
        Ok(Model { config, params, encoder, node_proj, edge_proj, stack, heads })
    }

    pub fn forward(&self, tape: &mut Tape, g: &GraphInputs) -> Result<ForwardVars> {
        self.forward_with(tape, &self.params, g)
    }

    /// Forward pass reading weights from `params` (same layout as `self.params`).
    pub fn forward_with(&self, tape: &mut Tape, params: &ParamSet, g: &GraphInputs) -> Result<ForwardVars> {
        if g.mode != self.config.mode {
            return Err(Error::Config(format!(
                "graph built in {} mode for a {} model",
                g.mode, self.config.mode
            )));
        }
        let n = g.num_nodes();
        let m = g.num_edges();
        if n == 0 {
            return Err(Error::Data(format!("scene {} has no segments", g.scene_id)));
        }
        let topo = Topology::new(n, &g.edges)?;
        let latent = encode_prepared(tape, params, &self.encoder, &g.points, &g.owner, n)?;
        let geo = tape.constant(n, GEOMETRIC_WIDTH, g.geometric.clone())?;
        let h0 = tape.concat_cols(&[latent, geo])?;
        let h = mlp_forward(tape, params, &self.node_proj, h0)?;
        let r = tape.constant(m, EDGE_FEATURE_WIDTH, g.r.clone())?;
        let e = mlp_forward(tape, params, &self.edge_proj, r)?;
        let x = tape.constant(n, 6, g.x.clone())?;
        let (out, embed) = stack_tape(tape, params, &self.stack, &self.config.stack, &topo, GraphVars { h, x, e })?;
        let node_logits = classify_nodes(tape, params, &self.heads, out.h)?;
        let edge_logits = classify_edges(tape, params, &self.heads, out.e, embed)?;
        Ok(ForwardVars { node_logits, edge_logits, h: out.h, x: out.x, e: out.e })
    }

    pub fn loss(&self, tape: &mut Tape, g: &GraphInputs, weights: &LossWeights) -> Result<Var> {
        self.loss_with(tape, &self.params, g, weights)
    }

    pub fn loss_with(&self, tape: &mut Tape, params: &ParamSet, g: &GraphInputs, weights: &LossWeights) -> Result<Var> {
        let f = self.forward_with(tape, params, g)?;
        joint_loss(tape, f.node_logits, f.edge_logits, &g.node_classes, &g.edge_labels, weights)
    }

    pub fn predict(&self, g: &GraphInputs) -> Result<Prediction> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, g)?;
        Ok(self.prediction(&tape, &f))
    }

    /// Prediction and joint loss from a single forward pass.
    pub fn predict_and_loss(&self, g: &GraphInputs, weights: &LossWeights) -> Result<(Prediction, f64)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, g)?;
        let loss = joint_loss(&mut tape, f.node_logits, f.edge_logits, &g.node_classes, &g.edge_labels, weights)?;
        Ok((self.prediction(&tape, &f), tape.scalar(loss)))
    }

    fn prediction(&self, tape: &Tape, f: &ForwardVars) -> Prediction {
        let cn = self.config.labels.num_node_classes();
        let ce = self.config.labels.num_edge_classes();
        Prediction {
            node_probs: softmax_rows(tape.value(f.node_logits), cn),
            edge_probs: softmax_rows(tape.value(f.edge_logits), ce),
            num_node_classes: cn,
            num_edge_classes: ce,
            x: tape.value(f.x).to_vec(),
        }
    }
}

impl Prediction {
    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_probs[i * self.num_node_classes..(i + 1) * self.num_node_classes]
    }

    pub fn edge_row(&self, k: usize) -> &[f64] {
        &self.edge_probs[k * self.num_edge_classes..(k + 1) * self.num_edge_classes]
    }
}
