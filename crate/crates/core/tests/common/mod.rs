#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treesym::data::{Dataset, NormalizationSpec};
use treesym::gbdt::{Ensemble, Node, Objective, Tree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Thresholds on a coarse grid so that ties and shared thresholds occur.
fn threshold(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.random_range(1..40u32)) / 40.0
}

fn build(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node<f64>>, n_features: usize, depth: usize) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { score: 0.0 });
    if depth > 0 && (id == 0 || rng.random_bool(0.7)) {
        let feature = rng.random_range(0..n_features);
        let threshold = threshold(rng);
        let left = build(rng, nodes, n_features, depth - 1);
        let right = build(rng, nodes, n_features, depth - 1);
        nodes[id] = Node::Split { feature, threshold, left, right };
    } else {
        nodes[id] = Node::Leaf { score: rng.random_range(-1.0..1.0) };
    }
    id
}

pub fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, max_depth: usize, class: usize) -> Tree<f64> {
    let mut nodes = Vec::new();
    build(rng, &mut nodes, n_features, max_depth);
    Tree::new(nodes, class).unwrap()
}

/// Binary ensemble with up to `max_trees` trees of depth up to `max_depth`
/// over `n_features` features.
pub fn random_binary(rng: &mut ChaCha8Rng, max_trees: usize, max_depth: usize, n_features: usize) -> Ensemble<f64> {
    let n_trees = rng.random_range(1..=max_trees);
    let trees = (0..n_trees)
        .map(|_| {
            let depth = rng.random_range(1..=max_depth);
            random_tree(rng, n_features, depth, 0)
        })
        .collect();
    Ensemble::new(
        trees,
        2,
        n_features,
        Objective::BinaryLogistic,
        0.0,
        NormalizationSpec::identity(n_features),
    )
    .unwrap()
}

/// Softmax ensemble, `rounds` trees per class in round-major order.
pub fn random_softmax(rng: &mut ChaCha8Rng, n_classes: usize, rounds: usize, depth: usize, n_features: usize) -> Ensemble<f64> {
    let trees = (0..rounds * n_classes)
        .map(|i| random_tree(rng, n_features, depth, i % n_classes))
        .collect();
    Ensemble::new(
        trees,
        n_classes,
        n_features,
        Objective::Softmax,
        0.0,
        NormalizationSpec::identity(n_features),
    )
    .unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Two Gaussian-ish blobs on `d` features, class 1 shifted up.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset<f64> {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let centre = if y == 1 { 0.65 } else { 0.35 };
        rows.push((0..d).map(|_| (centre + rng.random_range(-0.3..0.3f64)).clamp(0.0, 1.0)).collect::<Vec<_>>());
        labels.push(y);
    }
    Dataset::from_rows(&rows, labels, 2, None).unwrap()
}
