//! Recall and R@x for objects, predicates and relationship triplets.
//!
//! Everything is micro-averaged. Ranks break ties toward the lower class
//! index (lexicographic order for triplets), so results never depend on
//! sort stability.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graphbuild::GraphInputs;
use crate::model::Prediction;

/// Class 0 of the edge label space.
pub const NONE_PREDICATE: usize = 0;
/// x values reported for objects, predicates and triplets.
pub const OBJ_X: [usize; 2] = [1, 3];
pub const PRED_X: [usize; 2] = [1, 2];
pub const TRIPLET_X: [usize; 2] = [1, 3];

const SUM_TOL: f64 = 1e-9;

fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Domain("empty class distribution".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Domain("class distribution has a negative or non-finite entry".into()));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::Domain(format!("class distribution sums to {s}")));
    }
    Ok(())
}

fn check_x(x: usize) -> Result<()> {
    if x == 0 {
        return Err(Error::Config("R@x needs x >= 1".into()));
    }
    Ok(())
}

/// Fraction of positions where `predictions[i] == gt[i]`; `None` when empty.
pub fn recall(predictions: &[usize], gt: &[usize]) -> Result<Option<f64>> {
    if predictions.len() != gt.len() {
        return Err(Error::dims("recall", &[predictions.len()], &[gt.len()]));
    }
    if gt.is_empty() {
        return Ok(None);
    }
    let hits = predictions.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(Some(hits as f64 / gt.len() as f64))
}

/// Highest-probability class, lower index on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = c;
        }
    }
    best
}

/// Number of classes ranked strictly ahead of `gt`.
pub fn class_rank(probs: &[f64], gt: usize) -> usize {
    let pg = probs[gt];
    probs
        .iter()
        .enumerate()
        .filter(|&(c, &p)| p > pg || (p == pg && c < gt))
        .count()
}

/// Whether `gt` is among the `x` most probable classes (x clamped to |C|).
pub fn r_at_x_class(probs: &[f64], gt: usize, x: usize) -> Result<bool> {
    check_x(x)?;
    check_distribution(probs)?;
    if gt >= probs.len() {
        return Err(Error::Index { index: gt, len: probs.len() });
    }
    Ok(class_rank(probs, gt) < x.min(probs.len()))
}

/// Set-valued ground truth: hit when any of `gts` is within the top `x`.
pub fn r_at_x_set(probs: &[f64], gts: &[usize], x: usize) -> Result<bool> {
    for &g in gts {
        if r_at_x_class(probs, g, x)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Triplet confidence.
pub fn triplet_score(p_subj: f64, p_pred: f64, p_obj: f64) -> f64 {
    p_subj * p_pred * p_obj
}

/// Candidates ranked ahead of `gt = (subject, predicate, object)` among all
/// class triplets whose predicate is not "none".
pub fn triplet_rank(subj: &[f64], pred: &[f64], obj: &[f64], gt: (usize, usize, usize)) -> usize {
    let (gs, gp, go) = gt;
    let target = triplet_score(subj[gs], pred[gp], obj[go]);
    let mut ahead = 0;
    for (a, &pa) in subj.iter().enumerate() {
        for (b, &pb) in pred.iter().enumerate().skip(NONE_PREDICATE + 1) {
            for (c, &pc) in obj.iter().enumerate() {
                let s = triplet_score(pa, pb, pc);
                if s > target || (s == target && (a, b, c) < gt) {
                    ahead += 1;
                }
            }
        }
    }
    ahead
}

/// Whether the gt triplet is among the `x` highest-scoring candidates.
pub fn r_at_x_triplet(subj: &[f64], pred: &[f64], obj: &[f64], gt: (usize, usize, usize), x: usize) -> Result<bool> {
    check_x(x)?;
    for d in [subj, pred, obj] {
        check_distribution(d)?;
    }
    let (gs, gp, go) = gt;
    for (c, len) in [(gs, subj.len()), (gp, pred.len()), (go, obj.len())] {
        if c >= len {
            return Err(Error::Index { index: c, len });
        }
    }
    if gp == NONE_PREDICATE {
        return Err(Error::Domain("ground-truth triplet with the none predicate".into()));
    }
    if pred.len() < 2 {
        return Err(Error::Domain("predicate space has no real predicate".into()));
    }
    let candidates = subj.len() * (pred.len() - 1) * obj.len();
    Ok(triplet_rank(subj, pred, obj, gt) < x.min(candidates))
}

/// Per-scene scores and labels in graph index space.
#[derive(Debug, Clone, Copy)]
pub struct SceneScores<'a> {
    pub node_probs: &'a [f64],
    pub edge_probs: &'a [f64],
    pub num_node_classes: usize,
    pub num_edge_classes: usize,
    pub node_gt: &'a [usize],
    pub edges: &'a [(usize, usize)],
    pub edge_labels: &'a [Vec<usize>],
    /// `(subject, predicate, object)` by node index.
    pub triplets: &'a [(usize, usize, usize)],
}

impl<'a> SceneScores<'a> {
    pub fn new(pred: &'a Prediction, g: &'a GraphInputs) -> Self {
        SceneScores {
            node_probs: &pred.node_probs,
            edge_probs: &pred.edge_probs,
            num_node_classes: pred.num_node_classes,
            num_edge_classes: pred.num_edge_classes,
            node_gt: &g.node_classes,
            edges: &g.edges,
            edge_labels: &g.edge_labels,
            triplets: &g.triplets,
        }
    }

    fn node(&self, i: usize) -> &'a [f64] {
        &self.node_probs[i * self.num_node_classes..(i + 1) * self.num_node_classes]
    }

    fn edge(&self, k: usize) -> &'a [f64] {
        &self.edge_probs[k * self.num_edge_classes..(k + 1) * self.num_edge_classes]
    }

    fn validate(&self) -> Result<()> {
        let n = self.node_gt.len();
        let m = self.edges.len();
        if self.num_node_classes == 0 || self.num_edge_classes == 0 {
            return Err(Error::Config("label spaces must be non-empty".into()));
        }
        if self.node_probs.len() != n * self.num_node_classes
            || self.edge_probs.len() != m * self.num_edge_classes
            || self.edge_labels.len() != m
        {
            return Err(Error::dims(
                "scene scores",
                &[self.node_probs.len(), self.edge_probs.len(), self.edge_labels.len()],
                &[n * self.num_node_classes, m * self.num_edge_classes, m],
            ));
        }
        let endpoints = self.edges.iter().flat_map(|&(s, t)| [s, t]);
        if let Some(bad) = endpoints.chain(self.triplets.iter().flat_map(|t| [t.0, t.2])).find(|&v| v >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        Ok(())
    }
}

/// Integer hit counts; sums are exact, so aggregation order never matters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub objects: usize,
    pub obj_hits: [usize; 2],
    pub obj_argmax_hits: usize,
    pub related_edges: usize,
    pub pred_hits: [usize; 2],
    pub rel_argmax_hits: usize,
    pub triplets: usize,
    pub triplet_hits: [usize; 2],
    pub missing_edge_triplets: usize,
    pub obj_support: Vec<usize>,
    pub obj_class_hits: Vec<usize>,
    pub pred_support: Vec<usize>,
    pub pred_class_hits: Vec<usize>,
}

impl Tally {
    fn sized(nc: usize, ec: usize) -> Self {
        Tally {
            obj_support: vec![0; nc],
            obj_class_hits: vec![0; nc],
            pred_support: vec![0; ec],
            pred_class_hits: vec![0; ec],
            ..Default::default()
        }
    }

    pub fn merge(&mut self, other: &Tally) -> Result<()> {
        if self.obj_support.len() != other.obj_support.len() || self.pred_support.len() != other.pred_support.len() {
            return Err(Error::Config("tallies over different label spaces".into()));
        }
        self.objects += other.objects;
        self.related_edges += other.related_edges;
        self.triplets += other.triplets;
        self.missing_edge_triplets += other.missing_edge_triplets;
        self.obj_argmax_hits += other.obj_argmax_hits;
        self.rel_argmax_hits += other.rel_argmax_hits;
        for k in 0..2 {
            self.obj_hits[k] += other.obj_hits[k];
            self.pred_hits[k] += other.pred_hits[k];
            self.triplet_hits[k] += other.triplet_hits[k];
        }
        for (a, b) in [
            (&mut self.obj_support, &other.obj_support),
            (&mut self.obj_class_hits, &other.obj_class_hits),
            (&mut self.pred_support, &other.pred_support),
            (&mut self.pred_class_hits, &other.pred_class_hits),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }
}

/// Count hits for one scene.
pub fn score_scene(s: &SceneScores) -> Result<Tally> {
    s.validate()?;
    let mut t = Tally::sized(s.num_node_classes, s.num_edge_classes);
    for (i, &gt) in s.node_gt.iter().enumerate() {
        let probs = s.node(i);
        if gt >= s.num_node_classes {
            return Err(Error::Index { index: gt, len: s.num_node_classes });
        }
        t.objects += 1;
        t.obj_support[gt] += 1;
        for (k, &x) in OBJ_X.iter().enumerate() {
            t.obj_hits[k] += r_at_x_class(probs, gt, x)? as usize;
        }
        if argmax(probs) == gt {
            t.obj_argmax_hits += 1;
            t.obj_class_hits[gt] += 1;
        }
    }
    for (k, labels) in s.edge_labels.iter().enumerate() {
        if labels.is_empty() {
            continue;
        }
        let probs = s.edge(k);
        t.related_edges += 1;
        for (j, &x) in PRED_X.iter().enumerate() {
            t.pred_hits[j] += r_at_x_set(probs, labels, x)? as usize;
        }
        t.rel_argmax_hits += labels.contains(&argmax(probs)) as usize;
    }
    let lookup: HashMap<(usize, usize), usize> = s.edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    for &(i, p, j) in s.triplets {
        if p >= s.num_edge_classes || p == NONE_PREDICATE {
            return Err(Error::Domain(format!("triplet predicate {p} is not a real predicate")));
        }
        t.triplets += 1;
        t.pred_support[p] += 1;
        let Some(&k) = lookup.get(&(i, j)) else {
            t.missing_edge_triplets += 1;
            continue;
        };
        let edge = s.edge(k);
        if argmax(edge) == p {
            t.pred_class_hits[p] += 1;
        }
        for (q, &x) in TRIPLET_X.iter().enumerate() {
            t.triplet_hits[q] += r_at_x_triplet(s.node(i), edge, s.node(j), (s.node_gt[i], p, s.node_gt[j]), x)? as usize;
        }
    }
    Ok(t)
}

/// Headline numbers plus the raw tally. `None` values mark empty
/// denominators and serialize as `null` / `empty`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub step: u64,
    pub epoch: u64,
    pub scenes: usize,
    pub empty: bool,
    pub loss: Option<f64>,
    pub obj_recall: Option<f64>,
    pub rel_recall: Option<f64>,
    pub obj_r_at_1: Option<f64>,
    pub obj_r_at_3: Option<f64>,
    pub pred_r_at_1: Option<f64>,
    pub pred_r_at_2: Option<f64>,
    pub triplet_r_at_1: Option<f64>,
    pub triplet_r_at_3: Option<f64>,
    pub tally: Tally,
}

/// CSV header of a report row: the history columns followed by R@x.
pub const REPORT_CSV_HEADER: &str =
    "step,epoch,split,loss,node_recall,edge_recall,obj_r1,obj_r3,pred_r1,pred_r2,triplet_r1,triplet_r3";

/// Marker written in place of a value with an empty denominator.
pub const EMPTY_MARKER: &str = "empty";

fn ratio(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| EMPTY_MARKER.to_string(), |x| format!("{x}"))
}

impl MetricsReport {
    pub fn from_tally(split: &str, scenes: usize, tally: Tally, loss: Option<f64>) -> Self {
        let t = &tally;
        MetricsReport {
            split: split.to_string(),
            step: 0,
            epoch: 0,
            scenes,
            empty: t.objects == 0,
            loss,
            obj_recall: ratio(t.obj_argmax_hits, t.objects),
            rel_recall: ratio(t.rel_argmax_hits, t.related_edges),
            obj_r_at_1: ratio(t.obj_hits[0], t.objects),
            obj_r_at_3: ratio(t.obj_hits[1], t.objects),
            pred_r_at_1: ratio(t.pred_hits[0], t.related_edges),
            pred_r_at_2: ratio(t.pred_hits[1], t.related_edges),
            triplet_r_at_1: ratio(t.triplet_hits[0], t.triplets),
            triplet_r_at_3: ratio(t.triplet_hits[1], t.triplets),
            tally,
        }
    }

    /// Report with the empty marker and no counts.
    pub fn empty(split: &str, num_node_classes: usize, num_edge_classes: usize) -> Self {
        MetricsReport::from_tally(split, 0, Tally::sized(num_node_classes, num_edge_classes), None)
    }

    pub fn values(&self) -> [Option<f64>; 8] {
        [
            self.obj_recall,
            self.rel_recall,
            self.obj_r_at_1,
            self.obj_r_at_3,
            self.pred_r_at_1,
            self.pred_r_at_2,
            self.triplet_r_at_1,
            self.triplet_r_at_3,
        ]
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string(), self.epoch.to_string(), self.split.clone(), fmt_opt(self.loss)];
        cols.extend(self.values().iter().map(|v| fmt_opt(*v)));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Validation(format!("report serialization: {e}")))
    }
}

/// Score scenes (in parallel under `exec`) and reduce in input order.
pub fn aggregate(split: &str, scenes: &[SceneScores], classes: (usize, usize), exec: Exec) -> Result<MetricsReport> {
    let tallies = exec.map(scenes, score_scene);
    let mut total = Tally::sized(classes.0, classes.1);
    for t in tallies {
        total.merge(&t?)?;
    }
    Ok(MetricsReport::from_tally(split, scenes.len(), total, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        assert_eq!(recall(&[1, 2, 3], &[1, 2, 3]).unwrap(), Some(1.0));
        assert_eq!(recall(&[0, 0], &[1, 2]).unwrap(), Some(0.0));
        assert_eq!(recall(&[1, 2, 3, 0], &[1, 2, 3, 4]).unwrap(), Some(0.75));
        assert_eq!(recall(&[], &[]).unwrap(), None);
        assert!(recall(&[1], &[]).is_err());
    }

    #[test]
    fn class_r_at_x_examples() {
        let p = [0.5, 0.3, 0.2];
        assert!(!r_at_x_class(&p, 1, 1).unwrap());
        assert!(r_at_x_class(&p, 1, 2).unwrap());
        assert!(r_at_x_class(&p, 2, 3).unwrap());
        assert!(r_at_x_class(&p, 2, 99).unwrap());
        assert!(r_at_x_class(&p, 0, 0).is_err());
        assert!(r_at_x_class(&[0.5, 0.4], 0, 1).is_err());
        assert!(r_at_x_class(&p, 3, 1).is_err());
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let p = [0.1, 0.45, 0.45];
        assert!(r_at_x_class(&p, 1, 1).unwrap());
        assert!(!r_at_x_class(&p, 2, 1).unwrap());
        assert_eq!(argmax(&p), 1);
    }

    #[test]
    fn uniform_triplet_rank_is_lexicographic_position() {
        let n = [0.125; 8];
        let e = [0.2; 5];
        // (s, p, o) sits after s·32 + (p−1)·8 + o candidates
        for (gt, expected) in [((0, 1, 0), 0), ((0, 1, 5), 5), ((2, 3, 1), 2 * 32 + 2 * 8 + 1), ((7, 4, 7), 255)] {
            assert_eq!(triplet_rank(&n, &e, &n, gt), expected);
            assert_eq!(r_at_x_triplet(&n, &e, &n, gt, 1).unwrap(), expected == 0);
            assert!(r_at_x_triplet(&n, &e, &n, gt, 256).unwrap());
        }
        assert!(r_at_x_triplet(&n, &e, &n, (0, 0, 0), 1).is_err());
    }

    #[test]
    fn one_hot_triplet_hits_at_one() {
        let mut s = [0.0; 4];
        s[2] = 1.0;
        let mut p = [0.0; 3];
        p[1] = 1.0;
        let mut o = [0.0; 4];
        o[3] = 1.0;
        assert!(r_at_x_triplet(&s, &p, &o, (2, 1, 3), 1).unwrap());
        assert!(!r_at_x_triplet(&s, &p, &o, (2, 2, 3), 1).unwrap());
    }

    fn fixture() -> (Vec<f64>, Vec<f64>, Vec<usize>, Vec<(usize, usize)>, Vec<Vec<usize>>, Vec<(usize, usize, usize)>) {
        let node_probs = vec![0.7, 0.2, 0.1, 0.1, 0.3, 0.6, 0.3, 0.3, 0.4];
        let edge_probs = vec![0.1, 0.6, 0.3, 0.5, 0.2, 0.3];
        let node_gt = vec![0, 2, 1];
        let edges = vec![(0, 1), (1, 2)];
        let edge_labels = vec![vec![1], vec![]];
        let triplets = vec![(0, 1, 1), (2, 2, 0)];
        (node_probs, edge_probs, node_gt, edges, edge_labels, triplets)
    }

    #[test]
    fn scene_tally_counts_by_hand() {
        let (np, ep, ng, edges, el, tr) = fixture();
        let s = SceneScores {
            node_probs: &np,
            edge_probs: &ep,
            num_node_classes: 3,
            num_edge_classes: 3,
            node_gt: &ng,
            edges: &edges,
            edge_labels: &el,
            triplets: &tr,
        };
        let t = score_scene(&s).unwrap();
        assert_eq!(t.objects, 3);
        // node 2: gt 1, probs (0.3, 0.3, 0.4) → rank 2
        assert_eq!(t.obj_argmax_hits, 2);
        assert_eq!(t.obj_hits, [2, 3]);
        assert_eq!(t.related_edges, 1);
        assert_eq!(t.pred_hits, [1, 1]);
        assert_eq!(t.triplets, 2);
        assert_eq!(t.missing_edge_triplets, 1);
        assert_eq!(t.pred_support, vec![0, 1, 1]);
        let r = MetricsReport::from_tally("val", 1, t, Some(0.5));
        assert_eq!(r.triplet_r_at_1, Some(0.5));
        assert!(!r.empty);
        assert_eq!(r.csv_row().split(',').count(), REPORT_CSV_HEADER.split(',').count());
    }

    #[test]
    fn empty_report_uses_marker() {
        let r = MetricsReport::empty("test", 8, 5);
        assert!(r.empty);
        assert!(r.values().iter().all(Option::is_none));
        assert!(r.csv_row().ends_with("empty,empty,empty,empty,empty,empty,empty,empty"));
        let j: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(j["obj_recall"].is_null());
        assert_eq!(j["empty"], true);
    }

    #[test]
    fn mismatched_scores_are_rejected() {
        let (np, ep, ng, edges, el, tr) = fixture();
        let s = SceneScores {
            node_probs: &np[..6],
            edge_probs: &ep,
            num_node_classes: 3,
            num_edge_classes: 3,
            node_gt: &ng,
            edges: &edges,
            edge_labels: &el,
            triplets: &tr,
        };
        assert!(matches!(score_scene(&s), Err(Error::Dimension { .. })));
    }
}
