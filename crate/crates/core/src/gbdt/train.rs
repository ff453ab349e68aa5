use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ensemble, Node, Objective, Tree};
use crate::data::{Dataset, NormalizationSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Boosting rounds; each round adds one tree per output.
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Exact greedy training draws no random numbers; the seed is kept so
    /// configs stay stable if subsampling is ever added.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_rounds: 10,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn new(n_rounds: usize, max_depth: usize) -> Self {
        Self {
            n_rounds,
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_rounds == 0 {
            return bad("n_rounds must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !(self.min_child_weight > 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be positive");
        }
        Ok(())
    }
}

/// Mean training loss before the first round and after every round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub losses: Vec<f64>,
}

pub fn train<S: Scalar>(data: &Dataset<S>, cfg: &TrainConfig) -> Result<Ensemble<S>> {
    train_with_history(data, cfg).map(|(e, _)| e)
}

pub fn train_with_history<S: Scalar>(
    data: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<(Ensemble<S>, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = data.n_classes();
    if let Some(&bad) = data.labels().iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes,
        });
    }
    let objective = Objective::for_classes(n_classes);
    let n_out = match objective {
        Objective::BinaryLogistic => 1,
        Objective::Softmax => n_classes,
    };
    let n = data.n_rows();
    let columns = Columns::new(data);
    let params = Params {
        eta: S::lit(cfg.learning_rate),
        lambda: S::lit(cfg.lambda),
        gamma: S::lit(cfg.gamma),
        min_child_weight: S::lit(cfg.min_child_weight),
        max_depth: cfg.max_depth,
    };

    let base_score = S::zero();
    let mut margins = vec![base_score; n * n_out];
    let mut losses = vec![mean_loss(objective, &margins, data.labels(), n_out)];
    let mut trees = Vec::with_capacity(cfg.n_rounds * n_out);
    let mut grad = vec![S::zero(); n];
    let mut hess = vec![S::zero(); n];
    let mut probs = vec![S::zero(); n_out];

    for _ in 0..cfg.n_rounds {
        // Gradients for every output come from the margins at round start.
        let snapshot = margins.clone();
        for k in 0..n_out {
            for i in 0..n {
                let m = &snapshot[i * n_out..(i + 1) * n_out];
                let y = data.label(i);
                let (g, h) = match objective {
                    Objective::BinaryLogistic => {
                        let p = sigmoid(m[0]);
                        let t = if y == 1 { S::one() } else { S::zero() };
                        (p - t, p * (S::one() - p))
                    }
                    Objective::Softmax => {
                        softmax_into(m, &mut probs);
                        let p = probs[k];
                        let t = if y == k { S::one() } else { S::zero() };
                        (p - t, p * (S::one() - p))
                    }
                };
                grad[i] = g;
                // Keeps hessian sums positive when probabilities saturate.
                hess[i] = h.max(S::lit(1e-16));
            }
            let (tree, leaf_of_row) = build_tree(&columns, &grad, &hess, &params, k);
            for (i, &leaf) in leaf_of_row.iter().enumerate() {
                if let Node::Leaf { score } = tree.nodes()[leaf] {
                    margins[i * n_out + k] += score;
                }
            }
            trees.push(tree);
        }
        losses.push(mean_loss(objective, &margins, data.labels(), n_out));
    }

    let ensemble = Ensemble::new(
        trees,
        n_classes,
        data.n_features(),
        objective,
        base_score,
        NormalizationSpec::identity(data.n_features()),
    )?;
    Ok((ensemble, TrainHistory { losses }))
}

fn sigmoid<S: Scalar>(m: S) -> S {
    if m >= S::zero() {
        S::one() / (S::one() + (-m).exp())
    } else {
        let e = m.exp();
        e / (S::one() + e)
    }
}

fn softmax_into<S: Scalar>(m: &[S], out: &mut [S]) {
    let max = m.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &v) in out.iter_mut().zip(m) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn mean_loss<S: Scalar>(objective: Objective, margins: &[S], labels: &[usize], n_out: usize) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let m = &margins[i * n_out..(i + 1) * n_out];
            match objective {
                Objective::BinaryLogistic => {
                    // log(1 + exp(-z)) with z the signed margin
                    let z = if y == 1 { m[0].as_f64() } else { -m[0].as_f64() };
                    if z > 0.0 {
                        (-z).exp().ln_1p()
                    } else {
                        -z + z.exp().ln_1p()
                    }
                }
                Objective::Softmax => {
                    let max = m.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + m.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
                    lse - m[y].as_f64()
                }
            }
        })
        .sum();
    total / labels.len() as f64
}

struct Params<S> {
    eta: S,
    lambda: S,
    gamma: S,
    min_child_weight: S,
    max_depth: usize,
}

/// Per-feature row order sorted by value, computed once per training call.
struct Columns<'a, S> {
    data: &'a Dataset<S>,
    order: Vec<Vec<u32>>,
    values: Vec<Vec<S>>,
}

impl<'a, S: Scalar> Columns<'a, S> {
    fn new(data: &'a Dataset<S>) -> Self {
        let n = data.n_rows();
        let (order, values) = (0..data.n_features())
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    let va = data.row(a as usize)[f];
                    let vb = data.row(b as usize)[f];
                    va.partial_cmp(&vb).expect("finite features").then(a.cmp(&b))
                });
                let vals = idx.iter().map(|&i| data.row(i as usize)[f]).collect();
                (idx, vals)
            })
            .unzip();
        Self {
            data,
            order,
            values,
        }
    }
}

#[derive(Clone, Copy)]
struct Scan<S> {
    g: S,
    h: S,
    last: S,
    seen: bool,
    gain: S,
    threshold: Option<S>,
}

const UNASSIGNED: u32 = u32::MAX;

/// Level-wise exact greedy construction of one tree. Returns the tree and
/// the leaf node index each training row ends in.
fn build_tree<S: Scalar>(
    cols: &Columns<'_, S>,
    grad: &[S],
    hess: &[S],
    p: &Params<S>,
    class_index: usize,
) -> (Tree<S>, Vec<usize>) {
    let n = cols.data.n_rows();
    let root = grad
        .iter()
        .zip(hess)
        .fold((S::zero(), S::zero()), |(g, h), (&gi, &hi)| (g + gi, h + hi));
    let mut nodes: Vec<Node<S>> = vec![Node::Leaf { score: S::zero() }];
    let mut sums: Vec<(S, S)> = vec![root];
    let mut position = vec![0u32; n];
    let mut frontier = vec![0usize];
    let mut depth = 0;

    while !frontier.is_empty() {
        let mut slot_of = vec![UNASSIGNED; nodes.len()];
        let best = if depth < p.max_depth {
            for (s, &node) in frontier.iter().enumerate() {
                slot_of[node] = s as u32;
            }
            find_splits(cols, grad, hess, p, &position, &slot_of, &frontier, &sums)
        } else {
            vec![None; frontier.len()]
        };

        let mut next = Vec::new();
        let mut split_of: Vec<Option<(usize, S, u32, u32)>> = vec![None; nodes.len()];
        for (&node, choice) in frontier.iter().zip(best) {
            match choice {
                Some((feature, threshold)) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { score: S::zero() });
                    nodes.push(Node::Leaf { score: S::zero() });
                    sums.push((S::zero(), S::zero()));
                    sums.push((S::zero(), S::zero()));
                    nodes[node] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    split_of[node] = Some((feature, threshold, left as u32, right as u32));
                    next.push(left);
                    next.push(right);
                }
                None => {
                    let (g, h) = sums[node];
                    nodes[node] = Node::Leaf {
                        score: -p.eta * g / (h + p.lambda),
                    };
                }
            }
        }
        if next.is_empty() {
            break;
        }
        for (row, pos) in position.iter_mut().enumerate() {
            if let Some((feature, threshold, left, right)) = split_of[*pos as usize] {
                let v = cols.data.row(row)[feature];
                *pos = if v < threshold { left } else { right };
                // Children are summed in row order so leaf weights do not
                // depend on the scan order of the winning feature.
                let s = &mut sums[*pos as usize];
                s.0 += grad[row];
                s.1 += hess[row];
            }
        }
        frontier = next;
        depth += 1;
    }
    let leaves = position.into_iter().map(|q| q as usize).collect();
    (Tree::from_nodes_unchecked(nodes, class_index), leaves)
}

/// Best split per frontier node: scans every feature's sorted rows once,
/// evaluating each midpoint between consecutive distinct values.
#[allow(clippy::too_many_arguments)]
fn find_splits<S: Scalar>(
    cols: &Columns<'_, S>,
    grad: &[S],
    hess: &[S],
    p: &Params<S>,
    position: &[u32],
    slot_of: &[u32],
    frontier: &[usize],
    sums: &[(S, S)],
) -> Vec<Option<(usize, S)>> {
    let totals: Vec<(S, S)> = frontier.iter().map(|&node| sums[node]).collect();
    let half = S::lit(0.5);
    let parent_score: Vec<S> = totals
        .iter()
        .map(|&(g, h)| g * g / (h + p.lambda))
        .collect();

    let per_feature: Vec<Vec<Scan<S>>> = (0..cols.order.len())
        .into_par_iter()
        .map(|f| {
            let mut scans = vec![
                Scan {
                    g: S::zero(),
                    h: S::zero(),
                    last: S::zero(),
                    seen: false,
                    gain: S::zero(),
                    threshold: None,
                };
                frontier.len()
            ];
            for (&row, &v) in cols.order[f].iter().zip(&cols.values[f]) {
                let slot = slot_of[position[row as usize] as usize];
                if slot == UNASSIGNED {
                    continue;
                }
                let slot = slot as usize;
                let st = &mut scans[slot];
                if st.seen && v > st.last {
                    let (gt, ht) = totals[slot];
                    let (gl, hl) = (st.g, st.h);
                    let (gr, hr) = (gt - gl, ht - hl);
                    if hl >= p.min_child_weight && hr >= p.min_child_weight {
                        let gain = half
                            * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda)
                                - parent_score[slot])
                            - p.gamma;
                        if gain > st.gain {
                            let mut t = st.last + (v - st.last) * half;
                            if t <= st.last {
                                t = v;
                            }
                            st.gain = gain;
                            st.threshold = Some(t);
                        }
                    }
                }
                st.g += grad[row as usize];
                st.h += hess[row as usize];
                st.last = v;
                st.seen = true;
            }
            scans
        })
        .collect();

    let mut best: Vec<Option<(usize, S)>> = vec![None; frontier.len()];
    let mut best_gain = vec![S::zero(); frontier.len()];
    for (f, scans) in per_feature.iter().enumerate() {
        for (slot, st) in scans.iter().enumerate() {
            if let Some(t) = st.threshold {
                if st.gain > best_gain[slot] {
                    best_gain[slot] = st.gain;
                    best[slot] = Some((f, t));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset<f64> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..50 {
            rows.push(vec![0.2]);
            labels.push(0);
            rows.push(vec![0.8]);
            labels.push(1);
        }
        Dataset::from_rows(&rows, labels, 2, None).unwrap()
    }

    #[test]
    fn toy_split_matches_hand_computation() {
        let e = train(&toy(), &TrainConfig::new(1, 3)).unwrap();
        let tree = &e.trees()[0];
        // At margin 0: p = 0.5, so each side has |G| = 50 * 0.5 = 25 and
        // H = 50 * 0.25 = 12.5; weight = 0.3 * 25 / 13.5.
        let w = 0.3 * 25.0 / 13.5;
        match tree.nodes() {
            [Node::Split { feature: 0, threshold, left, right }, ..] => {
                assert_eq!(*threshold, 0.5);
                let Node::Leaf { score: l } = tree.nodes()[*left] else { panic!() };
                let Node::Leaf { score: r } = tree.nodes()[*right] else { panic!() };
                assert!((l + w).abs() < 1e-12, "{l}");
                assert!((r - w).abs() < 1e-12, "{r}");
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(tree.n_splits(), 1);
    }

    #[test]
    fn single_sample_gives_a_leaf() {
        let d = Dataset::from_rows(&[vec![0.3, 0.7]], vec![1], 2, None).unwrap();
        let e = train(&d, &TrainConfig::new(3, 4)).unwrap();
        assert_eq!(e.count_split_conditions(), 0);
        assert_eq!(e.trees().len(), 3);
    }

    #[test]
    fn softmax_rounds_are_round_major() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 29.0]).collect();
        let labels = (0..30).map(|i| i / 10).collect();
        let d = Dataset::from_rows(&rows, labels, 3, None).unwrap();
        let (e, hist) = train_with_history(&d, &TrainConfig::new(4, 2)).unwrap();
        assert_eq!(e.objective(), Objective::Softmax);
        let classes: Vec<usize> = e.trees().iter().map(|t| t.class_index()).collect();
        assert_eq!(classes, vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]);
        assert!(hist.losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let correct = d
            .rows()
            .zip(d.labels())
            .filter(|(x, &y)| e.predict_label(x).unwrap() == y)
            .count();
        assert_eq!(correct, 30);
    }

    #[test]
    fn depth_limit_and_errors() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64 / 63.0]).collect();
        let labels = (0..64).map(|i| i % 2).collect();
        let d = Dataset::from_rows(&rows, labels, 2, None).unwrap();
        let e = train(&d, &TrainConfig::new(2, 2)).unwrap();
        assert!(e.trees().iter().all(|t| t.depth() <= 2));

        let empty = Dataset::<f64>::new(vec![], vec![], 1, 2, None).unwrap();
        assert!(matches!(train(&empty, &TrainConfig::default()), Err(Error::EmptyDataset)));
        assert!(train(&d, &TrainConfig::new(0, 2)).is_err());
    }

    #[test]
    fn ties_prefer_the_lowest_feature() {
        // Both features separate the classes identically.
        let rows = vec![vec![0.1, 0.1], vec![0.9, 0.9]];
        let mut all = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..20 {
            all.extend(rows.iter().cloned());
            labels.extend([0, 1]);
        }
        let d = Dataset::from_rows(&all, labels, 2, None).unwrap();
        let e = train(&d, &TrainConfig::new(1, 1)).unwrap();
        assert!(matches!(e.trees()[0].nodes()[0], Node::Split { feature: 0, .. }));
    }
}
