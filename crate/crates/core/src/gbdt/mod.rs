//! XGBoost-style gradient-boosted decision trees.
//!
//! Split nodes test `x[feature] < threshold`: values strictly below the
//! threshold go left and values equal to or above it go right.

mod serialize;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::NormalizationSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use serialize::{deserialize, load_model, save_model, serialize};
pub use train::{train, train_with_history, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "binary:logistic")]
    BinaryLogistic,
    #[serde(rename = "multi:softmax")]
    Softmax,
}

impl Objective {
    pub fn for_classes(n_classes: usize) -> Self {
        if n_classes <= 2 {
            Objective::BinaryLogistic
        } else {
            Objective::Softmax
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::BinaryLogistic => "binary:logistic",
            Objective::Softmax => "multi:softmax",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary:logistic" => Ok(Objective::BinaryLogistic),
            "multi:softmax" => Ok(Objective::Softmax),
            _ => Err(Error::Schema(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node<S> {
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
    },
    Leaf {
        score: S,
    },
}

/// A leaf reached by routing: its node index and score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf<S> {
    pub id: usize,
    pub score: S,
}

/// Binary tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<S> {
    nodes: Vec<Node<S>>,
    class_index: usize,
}

impl<S: Scalar> Tree<S> {
    /// Validates that every node except the root is the child of exactly
    /// one split and that all nodes are reachable from the root.
    pub fn new(nodes: Vec<Node<S>>, class_index: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Schema("tree without nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for node in &nodes {
            match *node {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::Schema("non-finite threshold".into()));
                    }
                    for child in [left, right] {
                        if child == 0 || child >= nodes.len() {
                            return Err(Error::Schema(format!("invalid child index {child}")));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Leaf { score } => {
                    if !score.is_finite() {
                        return Err(Error::Schema("non-finite leaf score".into()));
                    }
                }
            }
        }
        if parents.iter().skip(1).any(|&p| p != 1) {
            return Err(Error::Schema("every non-root node needs exactly one parent".into()));
        }
        let tree = Self { nodes, class_index };
        // With one parent per node, reachability rules out cycles.
        let mut seen = vec![false; tree.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Schema("cycle in tree".into()));
            }
            if let Node::Split { left, right, .. } = tree.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Schema("unreachable nodes in tree".into()));
        }
        Ok(tree)
    }

    pub fn leaf(score: S, class_index: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { score }],
            class_index,
        }
    }

    /// Single split on `feature` at `threshold` with the given leaf scores.
    pub fn stump(feature: usize, threshold: S, left: S, right: S, class_index: usize) -> Self {
        Self {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { score: left },
                Node::Leaf { score: right },
            ],
            class_index,
        }
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node<S>>, class_index: usize) -> Self {
        Self { nodes, class_index }
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    /// Follows the split conditions from the root: `v < t` left, `v >= t` right.
    pub fn route(&self, x: &[S]) -> Leaf<S> {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
                Node::Leaf { score } => return Leaf { id: i, score },
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    /// Node indices of all leaves, in arena order.
    pub fn leaf_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf { .. }))
            .map(|(i, _)| i)
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk<S>(nodes: &[Node<S>], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Additive tree ensemble with its objective and input normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<S> {
    trees: Vec<Tree<S>>,
    n_classes: usize,
    n_features: usize,
    objective: Objective,
    base_score: S,
    normalizer: NormalizationSpec<S>,
}

impl<S: Scalar> Ensemble<S> {
    pub fn new(
        trees: Vec<Tree<S>>,
        n_classes: usize,
        n_features: usize,
        objective: Objective,
        base_score: S,
        normalizer: NormalizationSpec<S>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Schema("n_classes must be at least 2".into()));
        }
        if objective == Objective::BinaryLogistic && n_classes != 2 {
            return Err(Error::Schema("binary objective needs exactly 2 classes".into()));
        }
        if normalizer.n_features() != n_features {
            return Err(Error::Schema(format!(
                "normalizer covers {} features, model has {n_features}",
                normalizer.n_features()
            )));
        }
        let n_margins = match objective {
            Objective::BinaryLogistic => 1,
            Objective::Softmax => n_classes,
        };
        for (i, tree) in trees.iter().enumerate() {
            if tree.class_index >= n_margins {
                return Err(Error::Schema(format!(
                    "tree {i} has class_index {} but the model has {n_margins} outputs",
                    tree.class_index
                )));
            }
            if objective == Objective::Softmax && tree.class_index != i % n_classes {
                return Err(Error::Schema(format!(
                    "softmax trees must come in rounds of {n_classes}; tree {i} has class {}",
                    tree.class_index
                )));
            }
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    if *feature >= n_features {
                        return Err(Error::Schema(format!(
                            "tree {i} splits on feature {feature} of {n_features}"
                        )));
                    }
                }
            }
        }
        if !base_score.is_finite() {
            return Err(Error::Schema("non-finite base_score".into()));
        }
        Ok(Self {
            trees,
            n_classes,
            n_features,
            objective,
            base_score,
            normalizer,
        })
    }

    pub fn trees(&self) -> &[Tree<S>] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn base_score(&self) -> S {
        self.base_score
    }

    pub fn normalizer(&self) -> &NormalizationSpec<S> {
        &self.normalizer
    }

    pub fn with_normalizer(mut self, normalizer: NormalizationSpec<S>) -> Result<Self> {
        if normalizer.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: normalizer.n_features(),
            });
        }
        self.normalizer = normalizer;
        Ok(self)
    }

    /// Length of the margin vector: 1 for binary logistic, `n_classes` for softmax.
    pub fn n_margins(&self) -> usize {
        match self.objective {
            Objective::BinaryLogistic => 1,
            Objective::Softmax => self.n_classes,
        }
    }

    fn check_dim(&self, x: &[S]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Raw margins: `base_score` plus the reached leaf scores of every
    /// tree contributing to each output. `x` must already be normalized.
    pub fn predict_margin(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_dim(x)?;
        let mut m = vec![S::zero(); self.n_margins()];
        self.margins_into(x, &mut m);
        Ok(m)
    }

    pub fn predict_label(&self, x: &[S]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.label_of(x))
    }

    pub(crate) fn margins_into(&self, x: &[S], out: &mut [S]) {
        out.fill(self.base_score);
        for tree in &self.trees {
            out[tree.class_index] += tree.route(x).score;
        }
    }

    /// Label without the dimension check; `x.len()` must equal `n_features`.
    pub(crate) fn label_of(&self, x: &[S]) -> usize {
        match self.objective {
            Objective::BinaryLogistic => {
                let mut m = self.base_score;
                for tree in &self.trees {
                    m += tree.route(x).score;
                }
                decide_label(self.objective, &[m])
            }
            Objective::Softmax => {
                let mut m = vec![S::zero(); self.n_classes];
                self.margins_into(x, &mut m);
                decide_label(self.objective, &m)
            }
        }
    }

    /// Difference between the true-class margin and the best competing
    /// one. Negative (or zero for a binary label 0) means misclassified.
    pub fn class_margin(&self, x: &[S], y: usize) -> S {
        let mut m = vec![S::zero(); self.n_margins()];
        self.margins_into(x, &mut m);
        margin_gap(self.objective, &m, y)
    }

    /// Normalizes a raw feature vector with the model's stored normalizer.
    pub fn normalize(&self, raw: &[S]) -> Result<Vec<S>> {
        self.normalizer.apply_row(raw)
    }

    /// Total number of split nodes across all trees.
    pub fn count_split_conditions(&self) -> usize {
        self.trees.iter().map(Tree::n_splits).sum()
    }

    /// Distinct thresholds per feature, ascending.
    pub fn thresholds_per_feature(&self) -> BTreeMap<usize, Vec<S>> {
        let mut map: BTreeMap<usize, Vec<S>> = BTreeMap::new();
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split {
                    feature, threshold, ..
                } = *node
                {
                    map.entry(feature).or_default().push(threshold);
                }
            }
        }
        for ts in map.values_mut() {
            ts.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
            ts.dedup();
        }
        map
    }
}

/// Classification rule shared by prediction and the attack search:
/// binary label 1 iff margin >= 0; multiclass argmax, lowest index on ties.
pub fn decide_label<S: Scalar>(objective: Objective, margins: &[S]) -> usize {
    match objective {
        Objective::BinaryLogistic => usize::from(margins[0] >= S::zero()),
        Objective::Softmax => {
            let mut best = 0;
            for (k, &m) in margins.iter().enumerate().skip(1) {
                if m > margins[best] {
                    best = k;
                }
            }
            best
        }
    }
}

pub(crate) fn margin_gap<S: Scalar>(objective: Objective, margins: &[S], y: usize) -> S {
    match objective {
        Objective::BinaryLogistic => {
            if y == 1 {
                margins[0]
            } else {
                -margins[0]
            }
        }
        Objective::Softmax => {
            let other = margins
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != y)
                .map(|(_, &m)| m)
                .fold(S::neg_infinity(), S::max);
            margins[y] - other
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(trees: Vec<Tree<f64>>, n_features: usize) -> Ensemble<f64> {
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

    #[test]
    fn equality_routes_right() {
        let t = Tree::stump(0, 0.5, -1.0, 2.0, 0);
        assert_eq!(t.route(&[0.5]).score, 2.0);
        assert_eq!(t.route(&[0.49999]).score, -1.0);
        let leaf = Tree::leaf(0.7, 0);
        assert_eq!(leaf.route(&[0.0]), Leaf { id: 0, score: 0.7 });
        assert_eq!(leaf.route(&[1.0]).score, 0.7);
    }

    #[test]
    fn margins_and_labels() {
        let e = binary(vec![], 1);
        assert_eq!(e.predict_margin(&[0.3]).unwrap(), vec![0.0]);
        assert_eq!(e.predict_label(&[0.3]).unwrap(), 1);

        let soft = Ensemble::<f64>::new(
            vec![],
            3,
            1,
            Objective::Softmax,
            0.25,
            NormalizationSpec::identity(1),
        )
        .unwrap();
        assert_eq!(soft.predict_margin(&[0.3]).unwrap(), vec![0.25; 3]);

        let e = binary(vec![Tree::stump(0, 0.5, -1.0, 2.0, 0)], 1);
        assert_eq!(e.predict_margin(&[0.9]).unwrap(), vec![2.0]);
        assert_eq!(e.predict_label(&[0.9]).unwrap(), 1);
        assert_eq!(e.predict_label(&[0.1]).unwrap(), 0);
        assert!(matches!(
            e.predict_margin(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn label_rules() {
        assert_eq!(decide_label(Objective::BinaryLogistic, &[0.0f64]), 1);
        assert_eq!(decide_label(Objective::BinaryLogistic, &[-1e-12f64]), 0);
        assert_eq!(decide_label(Objective::Softmax, &[2.0f64, 5.0, 1.0]), 1);
        assert_eq!(decide_label(Objective::Softmax, &[3.0f64, 3.0]), 0);
        assert_eq!(margin_gap(Objective::Softmax, &[2.0f64, 5.0, 1.0], 0), -3.0);
        assert_eq!(margin_gap(Objective::BinaryLogistic, &[0.5f64], 0), -0.5);
    }

    #[test]
    fn split_counts() {
        let e = binary(vec![Tree::leaf(0.1, 0), Tree::leaf(0.2, 0)], 2);
        assert_eq!(e.count_split_conditions(), 0);
        let full = Tree::new(
            vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Split { feature: 1, threshold: 0.3, left: 3, right: 4 },
                Node::Split { feature: 1, threshold: 0.7, left: 5, right: 6 },
                Node::Leaf { score: 1.0 },
                Node::Leaf { score: 2.0 },
                Node::Leaf { score: 3.0 },
                Node::Leaf { score: 4.0 },
            ],
            0,
        )
        .unwrap();
        assert_eq!(full.depth(), 2);
        assert_eq!(binary(vec![full], 2).count_split_conditions(), 3);
    }

    #[test]
    fn thresholds_are_deduplicated() {
        let e = binary(vec![Tree::stump(2, 0.5, -1.0, 1.0, 0)], 3);
        let t = e.thresholds_per_feature();
        assert_eq!(t.len(), 1);
        assert_eq!(t[&2], vec![0.5]);
        let e = binary(
            vec![Tree::stump(0, 0.5, -1.0, 1.0, 0), Tree::stump(0, 0.5, -2.0, 2.0, 0)],
            1,
        );
        assert_eq!(e.thresholds_per_feature()[&0], vec![0.5]);
        assert!(binary(vec![], 1).thresholds_per_feature().is_empty());
    }

    #[test]
    fn tree_validation() {
        let bad = Tree::<f64>::new(
            vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 1 },
                Node::Leaf { score: 1.0 },
            ],
            0,
        );
        assert!(bad.is_err());
        let bad = Tree::<f64>::new(vec![Node::Leaf { score: f64::NAN }], 0);
        assert!(bad.is_err());
    }

    #[test]
    fn softmax_round_order_is_enforced() {
        let trees = vec![Tree::leaf(0.0, 1), Tree::leaf(0.0, 0)];
        let e = Ensemble::<f64>::new(
            trees,
            2 + 1,
            1,
            Objective::Softmax,
            0.0,
            NormalizationSpec::identity(1),
        );
        assert!(e.is_err());
    }
}
