//! Training loop, evaluation, checkpoints and gradient verification.

mod checkpoint;
mod gradcheck;
mod history;

pub use checkpoint::{AdamRecord, Checkpoint, RngState, TensorRecord, CHECKPOINT_SCHEMA};
pub use gradcheck::{gradcheck, tiny_scene, GradcheckReport};
pub use history::{HistoryRow, TrainHistory, HISTORY_CSV_HEADER};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gnn::LayerStackConfig;
use crate::graphbuild::{GraphInputs, Mode};
use crate::heads::{expand_edge_targets, LossWeights};
use crate::metrics::{score_scene, MetricsReport, SceneScores, Tally};
use crate::model::{Model, ModelConfig};
use crate::numcore::{adam_step, AdamConfig, AdamState, Tape};
use crate::scene::{LabelSpace, Scene};

/// Preset name recorded for an explicit layer stack.
pub const CUSTOM_PRESET: &str = "custom";

/// Stream of the shuffling generator (the model init uses stream 0).
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub preset: String,
    pub mode: Mode,
    pub epochs: u64,
    /// Scenes drawn per epoch; `None` uses the whole training split.
    pub scenes_per_epoch: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub eval_every: u64,
    /// Extra evaluation steps on top of the cadence.
    pub eval_at: Vec<u64>,
    pub class_weighting: bool,
    pub lambda: f64,
    /// Narrow widths (as used by the gradient check).
    pub compact: bool,
    /// Explicit layer stack replacing the preset's (preset name "custom").
    pub stack: Option<LayerStackConfig>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub canary: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: "esgnn1".into(),
            mode: Mode::Strict,
            epochs: 30,
            scenes_per_epoch: None,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 50,
            eval_at: Vec::new(),
            class_weighting: false,
            lambda: 1.0,
            compact: false,
            stack: None,
            canary: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.scenes_per_epoch == Some(0) {
            return Err(Error::Config("scenes_per_epoch must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }

    pub fn model_config(&self, labels: LabelSpace) -> Result<ModelConfig> {
        let base = if self.stack.is_some() { "sgfn" } else { self.preset.as_str() };
        let mut cfg = if self.compact {
            ModelConfig::compact(base, self.mode, labels)?
        } else {
            ModelConfig::from_preset(base, self.mode, labels)?
        };
        if let Some(stack) = &self.stack {
            stack.validate()?;
            cfg.preset = CUSTOM_PRESET.into();
            cfg.stack.layers = stack.layers.clone();
            cfg.stack.concat_coord_to_edge = stack.concat_coord_to_edge;
            if !self.compact {
                cfg.stack = stack.clone();
            }
        }
        cfg.stack.canary = self.canary;
        Ok(cfg)
    }
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::Degenerate { .. } | Error::Domain(_) | Error::EmptySet)
}

/// Build graph inputs for every scene, skipping degenerate ones with a
/// warning. Returns the graphs and the number skipped.
pub fn build_graphs(scenes: &[Scene], mode: Mode, use_color: bool, exec: Exec) -> Result<(Vec<GraphInputs>, usize)> {
    let built = exec.map(scenes, |s| GraphInputs::build(s, mode, use_color));
    let mut graphs = Vec::with_capacity(scenes.len());
    let mut skipped = 0;
    for (scene, g) in scenes.iter().zip(built) {
        match g {
            Ok(g) => graphs.push(g),
            Err(e) if is_degenerate(&e) => {
                warn!("skipping scene {}: {e}", scene.id);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((graphs, skipped))
}

fn common_labels(scenes: &[&Scene]) -> Result<LabelSpace> {
    let first = scenes.first().ok_or_else(|| Error::Data("training split is empty".into()))?;
    if let Some(s) = scenes.iter().find(|s| s.labels != first.labels) {
        return Err(Error::Data(format!("scene {} uses a different label space", s.id)));
    }
    Ok(first.labels.clone())
}

fn class_weights(graphs: &[GraphInputs], labels: &LabelSpace, lambda: f64, enabled: bool) -> LossWeights {
    if !enabled {
        return LossWeights { lambda, ..Default::default() };
    }
    let mut node = vec![0; labels.num_node_classes()];
    let mut edge = vec![0; labels.num_edge_classes()];
    for g in graphs {
        g.node_classes.iter().for_each(|&c| node[c] += 1);
        expand_edge_targets(&g.edge_labels).1.iter().for_each(|&c| edge[c] += 1);
    }
    LossWeights {
        lambda,
        node_class: Some(LossWeights::inverse_frequency(&node)),
        edge_class: Some(LossWeights::inverse_frequency(&edge)),
    }
}

/// Metrics and mean loss of `model` over pre-built graphs. Scenes are scored
/// in parallel and reduced in input order.
pub fn evaluate_graphs(
    model: &Model,
    graphs: &[GraphInputs],
    split: &str,
    weights: &LossWeights,
    exec: Exec,
) -> Result<MetricsReport> {
    let labels = &model.config.labels;
    if graphs.is_empty() {
        return Ok(MetricsReport::empty(split, labels.num_node_classes(), labels.num_edge_classes()));
    }
    let per_scene = exec.map(graphs, |g| -> Result<(Tally, f64)> {
        let (pred, loss) = model.predict_and_loss(g, weights)?;
        Ok((score_scene(&SceneScores::new(&pred, g))?, loss))
    });
    let mut tally: Option<Tally> = None;
    let mut loss_sum = 0.0;
    for r in per_scene {
        let (t, loss) = r?;
        loss_sum += loss;
        match tally.as_mut() {
            None => tally = Some(t),
            Some(acc) => acc.merge(&t)?,
        }
    }
    let tally = tally.expect("non-empty");
    Ok(MetricsReport::from_tally(split, graphs.len(), tally, Some(loss_sum / graphs.len() as f64)))
}

/// Evaluate a checkpoint on scenes. Parameters are never modified.
pub fn evaluate(ckpt: &Checkpoint, scenes: &[Scene], split: &str, exec: Exec) -> Result<MetricsReport> {
    let (model, _) = ckpt.restore()?;
    if let Some(s) = scenes.iter().find(|s| s.labels != model.config.labels) {
        return Err(Error::Checkpoint(format!(
            "scene {} label space ({} node / {} edge classes) does not match the checkpoint ({} / {})",
            s.id,
            s.labels.num_node_classes(),
            s.labels.num_edge_classes(),
            model.config.labels.num_node_classes(),
            model.config.labels.num_edge_classes()
        )));
    }
    let (graphs, skipped) = build_graphs(scenes, model.config.mode, model.config.use_color, exec)?;
    if skipped > 0 {
        warn!("{skipped} degenerate scene(s) left out of the {split} evaluation");
    }
    let mut report = evaluate_graphs(&model, &graphs, split, &ckpt.loss_weights, exec)?;
    report.step = ckpt.step;
    report.epoch = ckpt.epoch;
    Ok(report)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    /// Training loss of every optimizer step taken by this run.
    pub step_losses: Vec<f64>,
    pub skipped: usize,
}

struct Trainer {
    config: TrainConfig,
    model: Model,
    adam: AdamState,
    rng: ChaCha8Rng,
    weights: LossWeights,
    train: Vec<GraphInputs>,
    val: Vec<GraphInputs>,
    step: u64,
    epoch: u64,
    skipped: usize,
    exec: Exec,
}

impl Trainer {
    fn prepare(
        config: &TrainConfig,
        train: &[Scene],
        val: &[Scene],
        exec: Exec,
    ) -> Result<(LabelSpace, Vec<GraphInputs>, Vec<GraphInputs>, usize)> {
        config.validate()?;
        let all: Vec<&Scene> = train.iter().chain(val).collect();
        let labels = common_labels(&all)?;
        if train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        if val.is_empty() {
            warn!("validation split is empty; its history rows carry the empty marker");
        }
        let (train_graphs, skipped) = build_graphs(train, config.mode, false, exec)?;
        if 2 * skipped > train.len() {
            return Err(Error::Data(format!(
                "{skipped} of {} training scenes are degenerate (more than half)",
                train.len()
            )));
        }
        let (val_graphs, val_skipped) = build_graphs(val, config.mode, false, exec)?;
        if 2 * val_skipped > val.len() {
            return Err(Error::Data(format!(
                "{val_skipped} of {} validation scenes are degenerate (more than half)",
                val.len()
            )));
        }
        Ok((labels, train_graphs, val_graphs, skipped + val_skipped))
    }

    fn new(config: &TrainConfig, train: &[Scene], val: &[Scene], exec: Exec) -> Result<Self> {
        let (labels, train, val, skipped) = Trainer::prepare(config, train, val, exec)?;
        let model = Model::new(config.model_config(labels)?, config.seed)?;
        let adam = AdamState::new(&model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(SHUFFLE_STREAM);
        let weights = class_weights(&train, &model.config.labels, config.lambda, config.class_weighting);
        Ok(Trainer { config: config.clone(), model, adam, rng, weights, train, val, step: 0, epoch: 0, skipped, exec })
    }

    fn resume(ckpt: &Checkpoint, epochs: u64, train: &[Scene], val: &[Scene], exec: Exec) -> Result<Self> {
        let config = TrainConfig { epochs, ..ckpt.train.clone() };
        let (labels, train, val, skipped) = Trainer::prepare(&config, train, val, exec)?;
        let (model, adam) = ckpt.restore()?;
        if model.config.labels != labels {
            return Err(Error::Checkpoint("dataset label space differs from the checkpoint".into()));
        }
        Ok(Trainer {
            config,
            model,
            adam,
            rng: ckpt.rng.restore()?,
            weights: ckpt.loss_weights.clone(),
            train,
            val,
            step: ckpt.step,
            epoch: ckpt.epoch,
            skipped,
            exec,
        })
    }

    fn record(&self, history: &mut TrainHistory) -> Result<()> {
        for (split, graphs) in [("train", &self.train), ("val", &self.val)] {
            let mut r = evaluate_graphs(&self.model, graphs, split, &self.weights, self.exec)?;
            r.step = self.step;
            r.epoch = self.epoch;
            history.push(HistoryRow::from_report(&r))?;
        }
        info!(
            "step {} epoch {}: train loss {:?}",
            self.step,
            self.epoch,
            history.rows.iter().rev().find(|r| r.split == "train").and_then(|r| r.loss)
        );
        Ok(())
    }

    fn train_step(&mut self, k: usize) -> Result<f64> {
        let g = &self.train[k];
        self.model.params.zero_grad();
        let mut tape = Tape::new();
        let loss = self.model.loss(&mut tape, g, &self.weights)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Data(format!("non-finite loss at step {} (scene {})", self.step + 1, g.scene_id)));
        }
        tape.backward(loss, &mut self.model.params)?;
        // parameters the loss never reaches (the last EGCL coordinate MLP
        // without the coordinate embedding) have an exact zero gradient
        for t in self.model.params.tensors_mut().filter(|t| t.grad().is_none()) {
            let zeros = vec![0.0; t.len()];
            t.accumulate_grad(&zeros);
        }
        adam_step(&mut self.model.params, &self.config.adam, &mut self.adam)?;
        self.step += 1;
        Ok(value)
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let mut history = TrainHistory::default();
        let mut step_losses = Vec::new();
        if self.step == 0 {
            self.record(&mut history)?;
        }
        let per_epoch = self.config.scenes_per_epoch.unwrap_or(self.train.len()).min(self.train.len());
        while self.epoch < self.config.epochs {
            let mut order: Vec<usize> = (0..self.train.len()).collect();
            order.shuffle(&mut self.rng);
            self.epoch += 1;
            for &k in &order[..per_epoch] {
                step_losses.push(self.train_step(k)?);
                if self.step.is_multiple_of(self.config.eval_every) || self.config.eval_at.contains(&self.step) {
                    self.record(&mut history)?;
                }
            }
        }
        if history.last_step() != Some(self.step) {
            self.record(&mut history)?;
        }
        let checkpoint = Checkpoint::capture(
            &self.model,
            &self.adam,
            &self.config,
            &self.weights,
            self.step,
            self.epoch,
            RngState::capture(self.config.seed, &self.rng),
        )?;
        Ok(TrainOutcome { checkpoint, history, step_losses, skipped: self.skipped })
    }
}

/// Train from scratch. Batch size is one scene; the run is a pure function
/// of `(config, train, val)`.
pub fn train(config: &TrainConfig, train: &[Scene], val: &[Scene], exec: Exec) -> Result<TrainOutcome> {
    Trainer::new(config, train, val, exec)?.run()
}

/// Continue a checkpointed run until `epochs` total epochs are done.
pub fn resume(ckpt: &Checkpoint, epochs: u64, train: &[Scene], val: &[Scene], exec: Exec) -> Result<TrainOutcome> {
    Trainer::resume(ckpt, epochs, train, val, exec)?.run()
}
