mod common;

use common::*;
use esgnn_core::exec::Exec;
use esgnn_core::metrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_instances_match_brute_force() {
    let (agree, total) = metric_oracle_trials(4, 1000);
    assert_eq!(agree, total);
}

#[test]
fn uniform_triplets_hit_one_in_256_at_x1() {
    let n = [0.125; 8];
    let e = [0.2; 5];
    let mut hits = 0;
    for s in 0..8 {
        for p in 1..5 {
            for o in 0..8 {
                hits += r_at_x_triplet(&n, &e, &n, (s, p, o), 1).unwrap() as usize;
                assert_eq!(
                    r_at_x_triplet(&n, &e, &n, (s, p, o), 3).unwrap(),
                    brute_triplet_hit(&n, &e, &n, (s, p, o), 3)
                );
            }
        }
    }
    assert_eq!(hits, 1);
}

struct OwnedScene {
    node_probs: Vec<f64>,
    edge_probs: Vec<f64>,
    node_gt: Vec<usize>,
    edges: Vec<(usize, usize)>,
    edge_labels: Vec<Vec<usize>>,
    triplets: Vec<(usize, usize, usize)>,
}

const CN: usize = 5;
const CE: usize = 4;

fn random_scene(rng: &mut ChaCha8Rng) -> OwnedScene {
    let n = rng.gen_range(1..7);
    let node_gt: Vec<usize> = (0..n).map(|_| rng.gen_range(0..CN)).collect();
    let node_probs: Vec<f64> = (0..n).flat_map(|_| tie_prone_distribution(rng, CN)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
    let edge_probs: Vec<f64> = edges.iter().flat_map(|_| tie_prone_distribution(rng, CE)).collect();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for p in 1..CE {
                if i != j && rng.gen_bool(0.2) {
                    triplets.push((i, p, j));
                }
            }
        }
    }
    let edge_labels = edges
        .iter()
        .map(|&(i, j)| triplets.iter().filter(|t| t.0 == i && t.2 == j).map(|t| t.1).collect())
        .collect();
    OwnedScene { node_probs, edge_probs, node_gt, edges, edge_labels, triplets }
}

impl OwnedScene {
    fn scores(&self) -> SceneScores<'_> {
        SceneScores {
            node_probs: &self.node_probs,
            edge_probs: &self.edge_probs,
            num_node_classes: CN,
            num_edge_classes: CE,
            node_gt: &self.node_gt,
            edges: &self.edges,
            edge_labels: &self.edge_labels,
            triplets: &self.triplets,
        }
    }

    fn brute_tally(&self) -> (usize, [usize; 2], usize, [usize; 2], usize, [usize; 2], usize) {
        let node = |i: usize| &self.node_probs[i * CN..(i + 1) * CN];
        let edge = |k: usize| &self.edge_probs[k * CE..(k + 1) * CE];
        let mut obj = [0, 0];
        for (i, &g) in self.node_gt.iter().enumerate() {
            obj[0] += brute_class_hit(node(i), g, 1) as usize;
            obj[1] += brute_class_hit(node(i), g, 3) as usize;
        }
        let mut related = 0;
        let mut pred = [0, 0];
        for (k, labels) in self.edge_labels.iter().enumerate() {
            if !labels.is_empty() {
                related += 1;
                pred[0] += labels.iter().any(|&l| brute_class_hit(edge(k), l, 1)) as usize;
                pred[1] += labels.iter().any(|&l| brute_class_hit(edge(k), l, 2)) as usize;
            }
        }
        let mut trip = [0, 0];
        let mut missing = 0;
        for &(i, p, j) in &self.triplets {
            match self.edges.iter().position(|&e| e == (i, j)) {
                None => missing += 1,
                Some(k) => {
                    let gt = (self.node_gt[i], p, self.node_gt[j]);
                    trip[0] += brute_triplet_hit(node(i), edge(k), node(j), gt, 1) as usize;
                    trip[1] += brute_triplet_hit(node(i), edge(k), node(j), gt, 3) as usize;
                }
            }
        }
        (self.node_gt.len(), obj, related, pred, self.triplets.len(), trip, missing)
    }
}

#[test]
fn scene_tallies_match_brute_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let sc = random_scene(&mut rng);
        let t = score_scene(&sc.scores()).unwrap();
        let (objects, obj, related, pred, triplets, trip, missing) = sc.brute_tally();
        assert_eq!(
            (t.objects, t.obj_hits, t.related_edges, t.pred_hits, t.triplets, t.triplet_hits, t.missing_edge_triplets),
            (objects, obj, related, pred, triplets, trip, missing)
        );
        assert_eq!(t.obj_support.iter().sum::<usize>(), objects);
        assert_eq!(t.pred_support.iter().sum::<usize>(), triplets);
    }
}

#[test]
fn aggregation_ignores_scene_order_and_strategy() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let scenes: Vec<OwnedScene> = (0..40).map(|_| random_scene(&mut rng)).collect();
    let fwd: Vec<SceneScores> = scenes.iter().map(OwnedScene::scores).collect();
    let rev: Vec<SceneScores> = scenes.iter().rev().map(OwnedScene::scores).collect();
    let a = aggregate("val", &fwd, (CN, CE), Exec::Parallel).unwrap();
    let b = aggregate("val", &rev, (CN, CE), Exec::Sequential).unwrap();
    assert_eq!(a, b);
    for v in a.values() {
        let v = v.unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn empty_split_aggregates_to_marker() {
    let r = aggregate("test", &[], (CN, CE), Exec::Parallel).unwrap();
    assert!(r.empty);
    assert_eq!(r, MetricsReport::empty("test", CN, CE));
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("positive mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|v| v / s).collect())
    })
}

proptest! {
    #[test]
    fn r_at_x_is_monotone_in_x(probs in distribution(6), gt in 0usize..6, x in 1usize..8, y in 1usize..8) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(r_at_x_class(&probs, gt, lo).unwrap() <= r_at_x_class(&probs, gt, hi).unwrap());
        prop_assert!(r_at_x_class(&probs, gt, 6).unwrap());
    }

    #[test]
    fn triplet_r_at_x_is_monotone(
        s in distribution(4), p in distribution(3), o in distribution(4),
        gt in (0usize..4, 1usize..3, 0usize..4), x in 1usize..40, y in 1usize..40,
    ) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(r_at_x_triplet(&s, &p, &o, gt, lo).unwrap() <= r_at_x_triplet(&s, &p, &o, gt, hi).unwrap());
    }

    #[test]
    fn r_at_1_equals_recall_without_ties(rows in prop::collection::vec((distribution(5), 0usize..5), 1..20)) {
        let tie_free = rows.iter().all(|(p, _)| {
            let mut s = p.clone();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            s[0] != s[1]
        });
        prop_assume!(tie_free);
        let preds: Vec<usize> = rows.iter().map(|(p, _)| argmax(p)).collect();
        let gt: Vec<usize> = rows.iter().map(|(_, g)| *g).collect();
        let hits = rows.iter().filter(|(p, g)| r_at_x_class(p, *g, 1).unwrap()).count();
        prop_assert_eq!(recall(&preds, &gt).unwrap().unwrap(), hits as f64 / rows.len() as f64);
    }
}
