use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one per parameter tensor in [`ParamSet`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, params: &ParamSet) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, t), (m, v))| m.len() == t.len() && v.len() == t.len())
    }
}

/// Apply one bias-corrected Adam update in place.
pub fn adam_step(params: &mut ParamSet, config: &AdamConfig, state: &mut AdamState) -> Result<()> {
    if !state.matches(params) {
        return Err(Error::Contract("optimizer state does not match parameters".into()));
    }
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(Error::Contract(format!("parameter {name} has no gradient")));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (k, tensor) in params.tensors_mut().enumerate() {
        let grad = tensor.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, p) in tensor.data_mut().iter_mut().enumerate() {
            let g = grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn scalar_set(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = scalar_set(0.5);
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(&p);
        st.m[0][0] = 1.0;
        st.v[0][0] = 1.0;
        p.tensors_mut().next().unwrap().accumulate_grad(&[0.0]);
        let before = p.iter().next().unwrap().1.data()[0];
        adam_step(&mut p, &cfg, &mut st).unwrap();
        // m̂ = 0.9·1/(1-0.9) is non-zero, so a prior momentum still moves w; with fresh
        // state the parameter must stay put.
        assert!(st.m[0][0] < 1.0 && st.v[0][0] < 1.0);
        let mut fresh = scalar_set(0.5);
        let mut st2 = AdamState::new(&fresh);
        fresh.tensors_mut().next().unwrap().accumulate_grad(&[0.0]);
        adam_step(&mut fresh, &cfg, &mut st2).unwrap();
        assert_eq!(fresh.iter().next().unwrap().1.data()[0], before);
        assert_eq!(st2.m[0][0], 0.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_set(1.0);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut st = AdamState::new(&p);
        p.tensors_mut().next().unwrap().accumulate_grad(&[1.0]);
        adam_step(&mut p, &cfg, &mut st).unwrap();
        let w = p.iter().next().unwrap().1.data()[0];
        assert!((1.0 - w - 0.1).abs() < 1e-6, "moved by {}", 1.0 - w);
    }

    #[test]
    fn descends_on_square() {
        let mut p = scalar_set(1.0);
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let mut st = AdamState::new(&p);
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let w = p.iter().next().unwrap().1.data()[0];
            p.zero_grad();
            p.tensors_mut().next().unwrap().accumulate_grad(&[2.0 * w]);
            adam_step(&mut p, &cfg, &mut st).unwrap();
            let next = p.iter().next().unwrap().1.data()[0].abs();
            assert!(next < prev, "{next} !< {prev}");
            prev = next;
        }
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut p = scalar_set(1.0);
        let mut st = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &AdamConfig::default(), &mut st),
            Err(Error::Contract(_))
        ));
    }
}
