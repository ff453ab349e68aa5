use super::Norm;
use crate::gbdt::{decide_label, Ensemble, Node};
use crate::scalar::Scalar;

/// Axis-aligned region `lower[f] <= x[f] < upper[f]`, matching the routing
/// rule. Unbounded sides hold infinities. Points are further restricted to
/// the unit cube when projected.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox<S> {
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<S: Scalar> AxisBox<S> {
    pub fn unbounded(n_features: usize) -> Self {
        Self {
            lower: vec![S::neg_infinity(); n_features],
            upper: vec![S::infinity(); n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.lower.len()
    }

    pub fn restrict(&mut self, feature: usize, lower: S, upper: S) {
        self.lower[feature] = self.lower[feature].max(lower);
        self.upper[feature] = self.upper[feature].min(upper);
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| lo <= v && v < hi)
    }

    /// Closed range of admissible values on one axis inside `[0, 1]`.
    pub fn axis_range(&self, feature: usize) -> Option<(S, S)> {
        axis_range(self.lower[feature], self.upper[feature])
    }

    pub fn is_empty(&self) -> bool {
        (0..self.n_features()).any(|f| self.axis_range(f).is_none())
    }

    /// Closest point of the box (within the unit cube) to `x0`, per axis.
    /// For L2 and L∞ alike the per-axis clamp is the nearest point.
    pub fn project(&self, x0: &[S]) -> Option<Vec<S>> {
        x0.iter()
            .enumerate()
            .map(|(f, &v)| self.axis_range(f).map(|(lo, hi)| v.max(lo).min(hi)))
            .collect()
    }

    pub fn distance(&self, x0: &[S], norm: Norm) -> Option<f64> {
        self.project(x0).map(|p| norm.distance(x0, &p))
    }
}

/// Admissible closed range for `lower <= v < upper` with `v` in `[0, 1]`.
pub(crate) fn axis_range<S: Scalar>(lower: S, upper: S) -> Option<(S, S)> {
    let lo = lower.max(S::zero());
    let hi = if upper > S::one() {
        S::one()
    } else {
        S::below(upper)
    };
    (lo <= hi).then_some((lo, hi))
}

/// One leaf of one tree with the bounds its root path imposes.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafInfo<S> {
    pub node: usize,
    pub score: S,
    /// `(feature, lower, upper)`, one entry per constrained feature.
    pub bounds: Vec<(usize, S, S)>,
}

/// Leaf ordinals, one per tree, indexing [`LeafBoxes`] leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeafTuple(pub Vec<usize>);

/// Per-tree leaf regions of an ensemble, computed once per model.
#[derive(Debug, Clone)]
pub struct LeafBoxes<S> {
    pub n_features: usize,
    pub trees: Vec<Vec<LeafInfo<S>>>,
    pub class_of_tree: Vec<usize>,
    /// Ordinal of each arena node that is a leaf, per tree.
    ordinal: Vec<Vec<usize>>,
}

impl<S: Scalar> LeafBoxes<S> {
    pub fn new(ens: &Ensemble<S>) -> Self {
        let mut trees = Vec::with_capacity(ens.trees().len());
        let mut ordinal = Vec::with_capacity(ens.trees().len());
        for tree in ens.trees() {
            let nodes = tree.nodes();
            let mut leaves = Vec::new();
            let mut ord = vec![usize::MAX; nodes.len()];
            let mut stack: Vec<(usize, Vec<(usize, S, S)>)> = vec![(0, Vec::new())];
            while let Some((i, bounds)) = stack.pop() {
                match nodes[i] {
                    Node::Leaf { score } => {
                        ord[i] = leaves.len();
                        leaves.push(LeafInfo {
                            node: i,
                            score,
                            bounds,
                        });
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let mut r = bounds.clone();
                        tighten(&mut r, feature, threshold, S::infinity());
                        let mut l = bounds;
                        tighten(&mut l, feature, S::neg_infinity(), threshold);
                        stack.push((right, r));
                        stack.push((left, l));
                    }
                }
            }
            trees.push(leaves);
            ordinal.push(ord);
        }
        Self {
            n_features: ens.n_features(),
            trees,
            class_of_tree: ens.trees().iter().map(|t| t.class_index()).collect(),
            ordinal,
        }
    }

    /// Leaves reached by `x`.
    pub fn tuple_of(&self, ens: &Ensemble<S>, x: &[S]) -> LeafTuple {
        LeafTuple(
            ens.trees()
                .iter()
                .zip(&self.ordinal)
                .map(|(t, ord)| ord[t.route(x).id])
                .collect(),
        )
    }

    /// Intersection of the tuple's leaf regions.
    pub fn tuple_box(&self, tuple: &LeafTuple) -> AxisBox<S> {
        let mut b = AxisBox::unbounded(self.n_features);
        for (leaves, &k) in self.trees.iter().zip(&tuple.0) {
            for &(f, lo, hi) in &leaves[k].bounds {
                b.restrict(f, lo, hi);
            }
        }
        b
    }

    /// Label the ensemble assigns to every point of the tuple's region.
    pub fn tuple_label(&self, ens: &Ensemble<S>, tuple: &LeafTuple) -> usize {
        let mut m = vec![ens.base_score(); ens.n_margins()];
        for ((leaves, &k), &c) in self.trees.iter().zip(&tuple.0).zip(&self.class_of_tree) {
            m[c] += leaves[k].score;
        }
        decide_label(ens.objective(), &m)
    }
}

fn tighten<S: Scalar>(bounds: &mut Vec<(usize, S, S)>, feature: usize, lo: S, hi: S) {
    match bounds.iter_mut().find(|b| b.0 == feature) {
        Some(b) => {
            b.1 = b.1.max(lo);
            b.2 = b.2.min(hi);
        }
        None => bounds.push((feature, lo, hi)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::fixtures::stump;
    use crate::data::NormalizationSpec;
    use crate::gbdt::{Objective, Tree};

    fn two_tree() -> Ensemble<f64> {
        let a = Tree::new(
            vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { score: -1.0 },
                Node::Split { feature: 1, threshold: 0.3, left: 3, right: 4 },
                Node::Leaf { score: 0.5 },
                Node::Leaf { score: 2.0 },
            ],
            0,
        )
        .unwrap();
        let b = Tree::stump(0, 0.25, -0.5, 0.25, 0);
        Ensemble::new(
            vec![a, b],
            2,
            2,
            Objective::BinaryLogistic,
            0.0,
            NormalizationSpec::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn leaf_regions_follow_routing() {
        let e = two_tree();
        let lb = LeafBoxes::new(&e);
        assert_eq!(lb.trees[0].len(), 3);
        // every grid point routes to a tuple whose box contains it
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [i as f64 / 20.0, j as f64 / 20.0];
                let t = lb.tuple_of(&e, &x);
                let b = lb.tuple_box(&t);
                assert!(b.contains(&x), "{x:?}");
                assert_eq!(lb.tuple_label(&e, &t), e.predict_label(&x).unwrap());
            }
        }
    }

    #[test]
    fn contradictory_leaves_give_an_empty_box() {
        let e = two_tree();
        let lb = LeafBoxes::new(&e);
        // tree 0 right side (x0 >= 0.5) with tree 1 left side (x0 < 0.25)
        let right = lb.trees[0].iter().position(|l| l.node == 3).unwrap();
        let left = lb.trees[1].iter().position(|l| l.node == 1).unwrap();
        assert!(lb.tuple_box(&LeafTuple(vec![right, left])).is_empty());
    }

    #[test]
    fn projection_respects_strict_upper_bounds() {
        let lb = LeafBoxes::new(&stump());
        let right = lb.trees[0].iter().position(|l| l.node == 2).unwrap();
        let left = lb.trees[0].iter().position(|l| l.node == 1).unwrap();
        let b = lb.tuple_box(&LeafTuple(vec![right]));
        assert_eq!(b.project(&[0.2]).unwrap(), vec![0.5]);
        let b = lb.tuple_box(&LeafTuple(vec![left]));
        let p = b.project(&[0.9]).unwrap();
        assert!(p[0] < 0.5 && 0.5 - p[0] <= 1e-9 + 1e-15);
        assert_eq!(b.project(&[0.2]).unwrap(), vec![0.2]);
    }
}
