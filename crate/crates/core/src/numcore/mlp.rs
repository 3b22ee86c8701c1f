use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One affine layer `y = act(x·W + b)` with `W: in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Linear>,
}

impl MlpParams {
    /// Wrap existing layers, checking that consecutive widths chain.
    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "MLP layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Allocate an MLP with widths `dims[0] → … → dims[last]`. Hidden layers
    /// use ReLU; the last layer uses `last_activation`. Weights and biases are
    /// uniform in `±gain/√fan_in`.
    pub fn build<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        dims: &[usize],
        last_activation: Activation,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("MLP {name} needs at least two widths")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = if fan_in == 0 { 0.0 } else { gain / (fan_in as f64).sqrt() };
            let mut sample = |n: usize| -> Vec<f64> {
                (0..n)
                    .map(|_| if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 })
                    .collect()
            };
            let weight = Tensor::new(vec![fan_in, fan_out], sample(fan_in * fan_out))?;
            let bias = Tensor::new(vec![fan_out], sample(fan_out))?;
            let is_last = i == dims.len() - 2;
            layers.push(Linear {
                weight: params.add(format!("{name}.{i}.weight"), weight)?,
                bias: params.add(format!("{name}.{i}.bias"), bias)?,
                in_dim: fan_in,
                out_dim: fan_out,
                activation: if is_last { last_activation } else { Activation::Relu },
            });
        }
        MlpParams::from_layers(layers)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Overwrite every weight and bias of this MLP with zeros.
    pub fn zero_out(&self, params: &mut ParamSet) {
        for l in &self.layers {
            params.get_mut(l.weight).data_mut().fill(0.0);
            params.get_mut(l.bias).data_mut().fill(0.0);
        }
    }
}

pub fn mlp_forward(tape: &mut Tape, params: &ParamSet, mlp: &MlpParams, x: Var) -> Result<Var> {
    let (_, width) = tape.dims(x);
    if width != mlp.in_dim() {
        return Err(Error::Config(format!(
            "MLP expects input width {} but got {width}",
            mlp.in_dim()
        )));
    }
    let mut h = x;
    for layer in &mlp.layers {
        let w = tape.param(params, layer.weight);
        let b = tape.param(params, layer.bias);
        let z = tape.matmul(h, w)?;
        h = tape.add_row(z, b)?;
        if layer.activation == Activation::Relu {
            h = tape.relu(h);
        }
    }
    Ok(h)
}
