use std::path::Path;

use esgnn_core::equivcheck::{
    layer_equivariance_suite, scene_invariance_trials, SuiteRow, SuiteSummary,
};
use esgnn_core::gnn::{LayerKind, LayerStackConfig};
use esgnn_core::numcore::AdamConfig;
use esgnn_core::scene::{Dataset, GeneratorConfig, SplitName};
use esgnn_core::trainer::{self, Checkpoint, TrainConfig};
use esgnn_core::{Error, Exec};
use log::{info, warn};

use crate::{EquivArgs, EvalArgs, Failure, GenDataArgs, GradcheckArgs, TrainArgs};

/// Gradients must agree to this relative error.
const GRADCHECK_TOL: f64 = 1e-4;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Core(Error::Io { path: path.to_path_buf(), source: e }))
}

pub fn gen_data(a: &GenDataArgs) -> Result<(), Failure> {
    let cfg = GeneratorConfig { min_objects: a.min_objects, max_objects: a.max_objects, ..Default::default() };
    let ds = Dataset::create(&a.out, &cfg, a.seed, a.scenes, a.split, a.force, Exec::Parallel)?;
    let m = &ds.manifest;
    println!(
        "wrote {} scenes to {} (train {}, val {}, test {})",
        a.scenes,
        a.out.display(),
        m.train.len(),
        m.val.len(),
        m.test.len()
    );
    Ok(())
}

fn parse_layers(names: &[String]) -> Result<Vec<LayerKind>, Failure> {
    names
        .iter()
        .map(|n| match n.trim().to_ascii_uppercase().as_str() {
            "FAN" => Ok(LayerKind::Fan),
            "EGCL" => Ok(LayerKind::Egcl),
            other => Err(Failure::Usage(format!("unknown layer {other:?} (FAN, EGCL)"))),
        })
        .collect()
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let ds = Dataset::load(&a.data)?;
    let train_scenes = ds.split(SplitName::Train, Exec::Parallel)?;
    let val_scenes = ds.split(SplitName::Val, Exec::Parallel)?;
    if train_scenes.is_empty() {
        return Err(Failure::Empty(format!("dataset {} has an empty training split", a.data.display())));
    }
    let outcome = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            trainer::resume(&ckpt, a.epochs, &train_scenes, &val_scenes, Exec::Parallel)?
        }
        None => {
            let stack = match &a.layers {
                Some(names) => Some(LayerStackConfig::new(parse_layers(names)?, a.concat_coord_embed)),
                None => None,
            };
            let cfg = TrainConfig {
                preset: a.preset.clone(),
                mode: a.mode,
                epochs: a.epochs,
                scenes_per_epoch: a.scenes_per_epoch,
                adam: AdamConfig { lr: a.lr, ..Default::default() },
                seed: a.seed,
                eval_every: a.eval_every,
                class_weighting: a.class_weighting,
                compact: a.compact,
                stack,
                canary: a.inject_canary,
                ..Default::default()
            };
            trainer::train(&cfg, &train_scenes, &val_scenes, Exec::Parallel)?
        }
    };
    outcome.checkpoint.save(&a.out)?;
    outcome.history.save_csv(&a.history)?;
    if outcome.skipped > 0 {
        warn!("{} degenerate scene(s) were skipped", outcome.skipped);
    }
    let last = outcome.history.split("val").last().cloned();
    println!(
        "trained {} to step {} (epoch {}); val node recall {}, edge recall {}",
        outcome.checkpoint.preset,
        outcome.checkpoint.step,
        outcome.checkpoint.epoch,
        esgnn_core::metrics::fmt_opt(last.as_ref().and_then(|r| r.node_recall)),
        esgnn_core::metrics::fmt_opt(last.as_ref().and_then(|r| r.edge_recall)),
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let ds = Dataset::load(&a.data)?;
    let scenes = ds.split(a.split, Exec::Parallel)?;
    let report = trainer::evaluate(&ckpt, &scenes, a.split.as_str(), Exec::Parallel)?;
    let json = report.to_json()?;
    println!("{json}");
    if let Some(p) = &a.json {
        write(p, &json)?;
    }
    if let Some(p) = &a.csv {
        write(p, &report.to_csv())?;
    }
    if report.empty {
        return Err(Failure::Empty(format!("split {} has no scenes to evaluate", a.split)));
    }
    Ok(())
}

pub fn equiv_test(a: &EquivArgs) -> Result<(), Failure> {
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", a.tol)));
    }
    if a.trials == 0 {
        warn!("--trials 0: nothing to check, passing vacuously");
    }
    let summary = match (&a.ckpt, &a.data) {
        (Some(ckpt_path), Some(data)) => {
            let ckpt = Checkpoint::load(ckpt_path)?;
            let (mut model, _) = ckpt.restore()?;
            model.config.stack.canary |= a.inject_canary;
            let scenes = Dataset::load(data)?.split(a.split, Exec::Parallel)?;
            if scenes.is_empty() && a.trials > 0 {
                return Err(Failure::Empty(format!("split {} has no scenes", a.split)));
            }
            let trials = a.trials as usize;
            let picked: Vec<_> = (0..trials).map(|k| scenes[k % scenes.len()].clone()).collect();
            let reports = scene_invariance_trials(&model, &picked, a.family, 1, a.seed, a.tol, Exec::Parallel)?;
            let rows: Vec<SuiteRow> = reports
                .iter()
                .enumerate()
                .map(|(k, r)| SuiteRow {
                    seed: a.seed + k as u64,
                    family: a.family,
                    max_prob_dev: r.max_prob_dev,
                    argmax_ok: r.argmax_ok && r.edges_match,
                    max_coord_dev: r.max_coord_dev,
                    max_feature_dev: 0.0,
                    fan_x_untouched: true,
                })
                .collect();
            let pass = reports.iter().all(|r| r.pass);
            SuiteSummary { tol: a.tol, rows, pass }
        }
        _ => layer_equivariance_suite(a.trials, a.family, a.tol, a.inject_canary, Exec::Parallel)?,
    };
    let csv = summary.to_csv();
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    let failed = summary.rows.iter().filter(|r| !r.passes(a.tol)).count();
    info!("{} trials, {failed} failed", summary.rows.len());
    if !summary.pass {
        return Err(Failure::Verification(format!(
            "{failed} of {} trials exceeded tolerance {:e}",
            summary.rows.len(),
            a.tol
        )));
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let r = trainer::gradcheck(&a.preset, a.seed, a.eps, Exec::Parallel)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serialization cannot fail"));
    println!("max relative error {:e}", r.max_rel_err);
    if r.max_rel_err >= GRADCHECK_TOL {
        return Err(Failure::Verification(format!(
            "max relative error {:e} at {} is not below {GRADCHECK_TOL:e}",
            r.max_rel_err, r.worst_param
        )));
    }
    Ok(())
}
