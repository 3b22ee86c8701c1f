//! Plain-loop reference implementations shared by the integration tests.
#![allow(dead_code)]

use esgnn_core::gnn::{EgclParams, FanGclParams, LayerStackConfig};
use esgnn_core::graphbuild::FeatureGraph;
use esgnn_core::numcore::{Activation, MlpParams, ParamSet, Tensor};
use esgnn_core::scene::Transform;
use nalgebra::Vector3;
use rand::Rng;

pub fn mlp_eval(ps: &ParamSet, mlp: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in mlp.layers() {
        assert_eq!(h.len(), l.in_dim);
        let w = ps.get(l.weight).data();
        let b = ps.get(l.bias).data();
        let mut out = Vec::with_capacity(l.out_dim);
        for j in 0..l.out_dim {
            let mut acc = b[j];
            for i in 0..l.in_dim {
                acc += h[i] * w[i * l.out_dim + j];
            }
            out.push(if l.activation == Activation::Relu { acc.max(0.0) } else { acc });
        }
        h = out;
    }
    h
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn fan_message_oracle(ps: &ParamSet, p: &FanGclParams, heads: usize, hi: &[f64], e: &[f64], hj: &[f64]) -> Vec<f64> {
    let t = mlp_eval(ps, &p.target, &cat(&[e, hj]));
    let logits = mlp_eval(ps, &p.att, &cat(&[hi, &t]));
    let block = t.len() / heads;
    let mut out = Vec::with_capacity(t.len());
    for b in 0..heads {
        let a = softmax(&logits[b * block..(b + 1) * block]);
        for k in 0..block {
            out.push(a[k] * t[b * block + k]);
        }
    }
    out
}

fn rows(t: &Tensor, width: usize) -> Vec<Vec<f64>> {
    t.data().chunks(width.max(1)).map(|c| c.to_vec()).collect()
}

/// Returns `(h', e')`.
pub fn fan_gcl_oracle(ps: &ParamSet, p: &FanGclParams, cfg: &LayerStackConfig, g: &FeatureGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.node_ids.len();
    let h = rows(&g.h, cfg.d_h);
    let e = rows(&g.e, cfg.d_e);
    let mut h_out = Vec::new();
    for i in 0..n {
        let mut agg: Option<Vec<f64>> = None;
        for (k, &(s, t)) in g.edges.iter().enumerate() {
            if s != i {
                continue;
            }
            let m = fan_message_oracle(ps, p, cfg.heads, &h[s], &e[k], &h[t]);
            agg = Some(match agg {
                None => m,
                Some(a) => a.iter().zip(&m).map(|(x, y)| x.max(*y)).collect(),
            });
        }
        let agg = agg.unwrap_or_else(|| vec![0.0; cfg.d_h]);
        h_out.push(mlp_eval(ps, &p.node, &cat(&[&h[i], &agg])));
    }
    let e_out = g
        .edges
        .iter()
        .enumerate()
        .map(|(k, &(s, t))| mlp_eval(ps, &p.edge, &cat(&[&h[s], &e[k], &h[t]])))
        .collect();
    (h_out, e_out)
}

/// Returns `(h', x', e')`.
pub fn egcl_oracle(
    ps: &ParamSet,
    p: &EgclParams,
    cfg: &LayerStackConfig,
    g: &FeatureGraph,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.node_ids.len();
    let h = rows(&g.h, cfg.d_h);
    let x = rows(&g.x, 6);
    let e = rows(&g.e, cfg.d_e);
    let mut e_out = Vec::new();
    for (k, &(s, t)) in g.edges.iter().enumerate() {
        let d: Vec<f64> = (0..2)
            .map(|c| (0..3).map(|a| (x[s][3 * c + a] - x[t][3 * c + a]).powi(2)).sum())
            .collect();
        e_out.push(mlp_eval(ps, &p.edge, &cat(&[&h[s], &h[t], &d, &e[k]])));
    }
    let mut deg = vec![0usize; n];
    for &(s, _) in &g.edges {
        deg[s] += 1;
    }
    let mut x_out = x.clone();
    let mut agg = vec![vec![0.0; cfg.d_e]; n];
    for (k, &(s, t)) in g.edges.iter().enumerate() {
        let mut phi = mlp_eval(ps, &p.coord, &e_out[k])[0];
        if cfg.coord_norm {
            phi /= deg[s] as f64;
        }
        for a in 0..6 {
            x_out[s][a] += (x[s][a] - x[t][a]) * phi;
        }
        for a in 0..cfg.d_e {
            agg[s][a] += e_out[k][a];
        }
    }
    let mut h_out = Vec::new();
    for i in 0..n {
        let dh = mlp_eval(ps, &p.node, &cat(&[&h[i], &agg[i]]));
        let mut hi: Vec<f64> = h[i].iter().zip(&dh).map(|(a, b)| a + b).collect();
        if cfg.canary {
            let leak: f64 = x[i].iter().sum();
            hi.iter_mut().for_each(|v| *v += leak);
        }
        h_out.push(hi);
    }
    (h_out, x_out, e_out)
}

pub fn random_graph<R: Rng>(rng: &mut R, n: usize, d_h: usize, d_e: usize, edge_prob: f64) -> FeatureGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(edge_prob) {
                edges.push((i, j));
            }
        }
    }
    let m = edges.len();
    let mut sample = |k: usize, s: f64| (0..k).map(|_| rng.gen_range(-s..s)).collect::<Vec<f64>>();
    FeatureGraph {
        node_ids: (0..n as u32).collect(),
        h: Tensor::new(vec![n, d_h], sample(n * d_h, 1.0)).unwrap(),
        x: Tensor::new(vec![n, 2, 3], sample(n * 6, 2.0)).unwrap(),
        edges,
        e: Tensor::new(vec![m, d_e], sample(m * d_e, 1.0)).unwrap(),
    }
}

pub fn transform_corners(t: &Transform, x: &[f64]) -> Vec<f64> {
    x.chunks(3)
        .flat_map(|c| {
            let v = t.apply_vec(&Vector3::new(c[0], c[1], c[2]));
            [v.x, v.y, v.z]
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn flatten(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

/// Probabilities built from small integer weights so exact ties are common.
pub fn tie_prone_distribution<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0..4) as f64).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.iter().map(|v| v / s).collect();
        }
    }
}

/// Sort every class by (probability desc, index asc) and test the first x.
pub fn brute_class_hit(probs: &[f64], gt: usize, x: usize) -> bool {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    order.iter().take(x).any(|&c| c == gt)
}

/// Enumerate every (subject, predicate ≠ 0, object) candidate, sort and test.
pub fn brute_triplet_hit(s: &[f64], p: &[f64], o: &[f64], gt: (usize, usize, usize), x: usize) -> bool {
    let mut cands = Vec::new();
    for a in 0..s.len() {
        for b in 1..p.len() {
            for c in 0..o.len() {
                cands.push((s[a] * p[b] * o[c], (a, b, c)));
            }
        }
    }
    cands.sort_by(|u, v| v.0.partial_cmp(&u.0).unwrap().then(u.1.cmp(&v.1)));
    cands.iter().take(x).any(|c| c.1 == gt)
}

/// Random small instances checked against the brute-force rankers.
/// Returns (agreements, instances).
pub fn metric_oracle_trials(seed: u64, instances: usize) -> (usize, usize) {
    use esgnn_core::metrics::{r_at_x_class, r_at_x_triplet};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..instances {
        let cn = rng.gen_range(1..=8);
        let ce = rng.gen_range(2..=5);
        let s = tie_prone_distribution(&mut rng, cn);
        let p = tie_prone_distribution(&mut rng, ce);
        let o = tie_prone_distribution(&mut rng, cn);
        let gt = (rng.gen_range(0..cn), rng.gen_range(1..ce), rng.gen_range(0..cn));
        let x = rng.gen_range(1..=cn * (ce - 1) * cn + 2);
        let xc = rng.gen_range(1..=cn + 1);
        let ok = r_at_x_triplet(&s, &p, &o, gt, x).unwrap() == brute_triplet_hit(&s, &p, &o, gt, x)
            && r_at_x_class(&s, gt.0, xc).unwrap() == brute_class_hit(&s, gt.0, xc)
            && r_at_x_class(&p, gt.1, xc).unwrap() == brute_class_hit(&p, gt.1, xc);
        agree += ok as usize;
    }
    (agree, instances)
}
