use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graphbuild::{GraphInputs, Mode};
use crate::heads::LossWeights;
use crate::model::{Model, ModelConfig};
use crate::numcore::{ParamSet, Tape};
use crate::scene::{generate_scene_stream, GeneratorConfig, Scene};

/// Below this step size central differences are dominated by roundoff.
const TINY_EPS: f64 = 1e-8;
/// Denominator floor: central differences at eps ~1e-5 carry ~1e-10 absolute
/// roundoff on an O(1) loss.
const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub preset: String,
    pub seed: u64,
    pub eps: f64,
    pub nodes: usize,
    pub edges: usize,
    pub scalars: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// A 3–5 segment scene with at least one edge, derived from `seed`.
pub fn tiny_scene(seed: u64) -> Result<Scene> {
    let cfg = GeneratorConfig { min_objects: 3, max_objects: 5, points_per_segment: 16, ..Default::default() };
    for stream in 0..64 {
        let scene = generate_scene_stream(&cfg, seed, stream, &format!("tiny-{seed}"))?;
        let n = scene.segments.len();
        if (3..=5).contains(&n) && GraphInputs::build(&scene, Mode::Strict, false)?.num_edges() > 0 {
            return Ok(scene);
        }
    }
    Err(Error::Data(format!("no 3-5 segment scene with an edge for seed {seed}")))
}

fn loss_at(model: &Model, params: &ParamSet, g: &GraphInputs, w: &LossWeights) -> Result<f64> {
    let mut tape = Tape::new();
    let l = model.loss_with(&mut tape, params, g, w)?;
    Ok(tape.scalar(l))
}

/// Compare analytic joint-loss gradients with central differences on every
/// parameter scalar of a compact-width model.
pub fn gradcheck(preset: &str, seed: u64, eps: f64, exec: Exec) -> Result<GradcheckReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if eps < TINY_EPS {
        warn!("eps {eps:e} is below {TINY_EPS:e}; finite differences will be roundoff-dominated");
    }
    let scene = tiny_scene(seed)?;
    let cfg = ModelConfig::compact(preset, Mode::Strict, scene.labels.clone())?;
    let mut model = Model::new(cfg, seed)?;
    let g = GraphInputs::build(&scene, Mode::Strict, false)?;
    let w = LossWeights::default();

    model.params.zero_grad();
    let mut tape = Tape::new();
    let loss = model.loss(&mut tape, &g, &w)?;
    tape.backward(loss, &mut model.params)?;

    let addresses = model.params.scalar_addresses();
    let model = &model;
    let errs = exec.map(&addresses, |&(id, k)| -> Result<(f64, f64, f64)> {
        let analytic = model.params.get(id).grad().map_or(0.0, |g| g[k]);
        let orig = model.params.get(id).data()[k];
        let mut p = model.params.clone();
        p.get_mut(id).data_mut()[k] = orig + eps;
        let up = loss_at(model, &p, &g, &w)?;
        p.get_mut(id).data_mut()[k] = orig - eps;
        let down = loss_at(model, &p, &g, &w)?;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        Ok((rel, analytic, numeric))
    });
    let mut report = GradcheckReport {
        preset: preset.to_string(),
        seed,
        eps,
        nodes: g.num_nodes(),
        edges: g.num_edges(),
        scalars: addresses.len(),
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (&(id, k), r) in addresses.iter().zip(errs) {
        let (rel, a, n) = r?;
        if rel > report.max_rel_err || report.worst_param.is_empty() {
            report.max_rel_err = rel;
            report.worst_param = format!("{}[{k}]", model.params.name(id));
            report.worst_analytic = a;
            report.worst_numeric = n;
        }
    }
    Ok(report)
}
