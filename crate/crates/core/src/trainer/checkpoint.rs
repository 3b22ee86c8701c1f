use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::heads::LossWeights;
use crate::model::{Model, ModelConfig};
use crate::numcore::{AdamState, ParamSet};
use crate::scene::check_schema;

pub const CHECKPOINT_SCHEMA: &str = "esgnn-ckpt/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

/// Position of the shuffling generator: ChaCha8 seeded from `seed` on
/// `stream`, advanced to `word_pos` (decimal, it is a u128).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub preset: String,
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss_weights: LossWeights,
    pub params: BTreeMap<String, TensorRecord>,
    pub adam: AdamRecord,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        adam: &AdamState,
        train: &TrainConfig,
        loss_weights: &LossWeights,
        step: u64,
        epoch: u64,
        rng: RngState,
    ) -> Result<Self> {
        let mut params = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (k, (name, t)) in model.params.iter().enumerate() {
            if t.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint(format!("parameter {name} is not finite")));
            }
            params.insert(name.to_string(), TensorRecord { shape: t.shape().to_vec(), data: t.data().to_vec() });
            m.insert(name.to_string(), adam.m[k].clone());
            v.insert(name.to_string(), adam.v[k].clone());
        }
        Ok(Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            preset: model.config.preset.clone(),
            step,
            epoch,
            model: model.config.clone(),
            train: train.clone(),
            loss_weights: loss_weights.clone(),
            params,
            adam: AdamRecord { step: adam.step, m, v },
            rng,
        })
    }

    /// Rebuild the model and optimizer state. Any missing, extra or
    /// misshaped tensor is a checkpoint error.
    pub fn restore(&self) -> Result<(Model, AdamState)> {
        if self.preset != self.model.preset {
            return Err(Error::Checkpoint(format!(
                "preset {} does not match model config preset {}",
                self.preset, self.model.preset
            )));
        }
        let mut model = Model::new(self.model.clone(), 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut adam = AdamState::new(&model.params);
        adam.step = self.adam.step;
        load_params(&mut model.params, &self.params)?;
        for (k, (name, t)) in model.params.iter().enumerate() {
            for (store, buf) in [(&self.adam.m, &mut adam.m[k]), (&self.adam.v, &mut adam.v[k])] {
                let saved = store
                    .get(name)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state missing for {name}")))?;
                if saved.len() != t.len() {
                    return Err(Error::Checkpoint(format!("optimizer state for {name} has the wrong length")));
                }
                buf.copy_from_slice(saved);
            }
        }
        if self.adam.m.len() != model.params.len() || self.adam.v.len() != model.params.len() {
            return Err(Error::Checkpoint("optimizer state has entries for unknown parameters".into()));
        }
        Ok((model, adam))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        check_schema(text, context, CHECKPOINT_SCHEMA)?;
        serde_json::from_str(text).map_err(|e| Error::parse(context, &e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text, &path.display().to_string())
    }
}

fn load_params(params: &mut ParamSet, saved: &BTreeMap<String, TensorRecord>) -> Result<()> {
    if saved.len() != params.len() {
        let unknown: Vec<&String> = saved.keys().filter(|k| params.id_of(k).is_none()).collect();
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {} (unknown: {unknown:?})",
            saved.len(),
            params.len()
        )));
    }
    for (name, rec) in saved {
        let id = params
            .id_of(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let t = params.get_mut(id);
        if t.shape() != rec.shape.as_slice() || rec.data.len() != t.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                rec.shape,
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(&rec.data);
    }
    Ok(())
}
