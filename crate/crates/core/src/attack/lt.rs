use rand::Rng;

use super::boxes::axis_range;
use super::{AttackConfig, AttackResult, Budgeted, LeafBoxes, LeafTuple, Norm};
use crate::gbdt::{decide_label, margin_gap, Ensemble};
use crate::scalar::Scalar;

/// Leaf-tuple local search.
///
/// Starting from adversarial points (random probes and a greedy descent on
/// the class margin), repeatedly moves to the hamming-1 neighbour tuple whose
/// region, projected from `x0`, is still adversarial and closest to `x0`.
/// Only full model evaluations count as queries; neighbour tuples are scored
/// from the leaf values directly.
pub fn lt_attack<S: Scalar>(
    ens: &Ensemble<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> AttackResult<S> {
    let mut q = Budgeted::new(ens, cfg.max_queries);
    match q.label(x0) {
        None => return AttackResult::failed(y0, q.used()),
        Some(l) if l != y0 => return AttackResult::found(x0, x0.to_vec(), y0, l, q.used()),
        Some(_) => {}
    }
    let boxes = LeafBoxes::new(ens);
    let search = Neighbourhood::new(ens, &boxes, x0, y0, cfg.norm);
    let mut rng = cfg.rng();
    let d = x0.len();

    let descent = search.descend(boxes.tuple_of(ens, x0), cfg.lt.max_steps);
    // Keep half the budget for the final checks of the local searches.
    let probe_budget = (10 * d as u64).min(cfg.max_queries / 2);
    let mut probes: Vec<(f64, Vec<S>)> = Vec::new();
    let mut probe = vec![S::zero(); d];
    for _ in 0..probe_budget {
        for v in probe.iter_mut() {
            *v = S::lit(rng.random::<f64>());
        }
        match q.is_adversarial(&probe, y0) {
            Some(true) => probes.push((cfg.norm.distance(x0, &probe), probe.clone())),
            Some(false) => {}
            None => break,
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let starts: Vec<Vec<S>> = descent
        .into_iter()
        .chain(probes.into_iter().map(|(_, p)| p))
        .take(cfg.lt.n_restarts + 1)
        .collect();
    if starts.is_empty() {
        return AttackResult::failed(y0, q.used());
    }

    let mut best: Option<(f64, Vec<S>)> = None;
    for start in starts {
        let tuple = boxes.tuple_of(ens, &start);
        let (dist, point) = search.local_search(tuple, cfg.lt.max_steps, cfg.lt.max_no_improve);
        if best.as_ref().is_none_or(|b| dist < b.0) {
            best = Some((dist, point));
        }
    }
    let (_, point) = best.expect("at least one start");
    match q.label(&point) {
        Some(l) => AttackResult::found(x0, point, y0, l, q.used()),
        // budget spent: the point is adversarial by construction
        None => {
            let l = ens.label_of(&point);
            AttackResult::found(x0, point, y0, l, q.used())
        }
    }
}

struct Neighbourhood<'a, S> {
    ens: &'a Ensemble<S>,
    boxes: &'a LeafBoxes<S>,
    x0: &'a [S],
    y0: usize,
    norm: Norm,
    /// Largest number of bounds any leaf carries.
    max_bounds: usize,
}

/// A scored hamming-1 move: replace the leaf of `tree` by `leaf`.
#[derive(Clone, Copy)]
struct Move<S> {
    tree: usize,
    leaf: usize,
    dist: f64,
    gap: S,
}

impl<'a, S: Scalar> Neighbourhood<'a, S> {
    fn new(
        ens: &'a Ensemble<S>,
        boxes: &'a LeafBoxes<S>,
        x0: &'a [S],
        y0: usize,
        norm: Norm,
    ) -> Self {
        let max_bounds = boxes
            .trees
            .iter()
            .flat_map(|t| t.iter().map(|l| l.bounds.len()))
            .max()
            .unwrap_or(0);
        Self {
            ens,
            boxes,
            x0,
            y0,
            norm,
            max_bounds,
        }
    }

    fn margins(&self, tuple: &LeafTuple) -> Vec<S> {
        let mut m = vec![self.ens.base_score(); self.ens.n_margins()];
        for (t, &k) in tuple.0.iter().enumerate() {
            m[self.boxes.class_of_tree[t]] += self.boxes.trees[t][k].score;
        }
        m
    }

    /// Greedy walk that lowers the class margin until the label flips.
    fn descend(&self, mut tuple: LeafTuple, max_steps: usize) -> Option<Vec<S>> {
        let mut gap = margin_gap(self.ens.objective(), &self.margins(&tuple), self.y0);
        for _ in 0..max_steps {
            let best = self.scan(&tuple, |m: &Scored<S>, cur: Option<&Move<S>>| {
                cur.is_none_or(|c| m.gap < c.gap || (m.gap == c.gap && m.dist < c.dist))
            })?;
            if best.gap >= gap {
                return None;
            }
            gap = best.gap;
            tuple.0[best.tree] = best.leaf;
            if decide_label(self.ens.objective(), &self.margins(&tuple)) != self.y0 {
                return self.boxes.tuple_box(&tuple).project(self.x0);
            }
        }
        None
    }

    /// Hamming-1 descent on the distance to `x0`, restricted to
    /// adversarial tuples. `tuple` must be adversarial.
    fn local_search(
        &self,
        mut tuple: LeafTuple,
        max_steps: usize,
        max_no_improve: usize,
    ) -> (f64, Vec<S>) {
        let mut point = self
            .boxes
            .tuple_box(&tuple)
            .project(self.x0)
            .expect("start tuple contains its point");
        let mut dist = self.norm.distance(self.x0, &point);
        let mut stale = 0;
        for _ in 0..max_steps {
            let adversarial = |m: &Scored<S>, cur: Option<&Move<S>>| {
                m.adversarial && cur.is_none_or(|c| m.dist < c.dist)
            };
            let Some(best) = self.scan(&tuple, adversarial) else {
                break;
            };
            let mut next = tuple.clone();
            next.0[best.tree] = best.leaf;
            let p = self
                .boxes
                .tuple_box(&next)
                .project(self.x0)
                .expect("scan only yields feasible tuples");
            let dp = self.norm.distance(self.x0, &p);
            if dp < dist {
                dist = dp;
                point = p;
                tuple = next;
                stale = 0;
            } else {
                stale += 1;
                if stale >= max_no_improve {
                    break;
                }
                tuple = next;
            }
        }
        (dist, point)
    }

    /// Scores every feasible hamming-1 neighbour of `tuple` and returns
    /// the one `better(candidate, current_best)` prefers.
    fn scan(
        &self,
        tuple: &LeafTuple,
        better: impl Fn(&Scored<S>, Option<&Move<S>>) -> bool,
    ) -> Option<Move<S>> {
        let n_trees = tuple.0.len();
        let d = self.x0.len();
        // prefix[i] = intersection of the leaves of trees < i
        let mut prefix_lo = vec![vec![S::neg_infinity(); d]; n_trees + 1];
        let mut prefix_hi = vec![vec![S::infinity(); d]; n_trees + 1];
        for i in 0..n_trees {
            let (lo, hi) = (prefix_lo[i].clone(), prefix_hi[i].clone());
            prefix_lo[i + 1] = lo;
            prefix_hi[i + 1] = hi;
            for &(f, a, b) in &self.boxes.trees[i][tuple.0[i]].bounds {
                prefix_lo[i + 1][f] = prefix_lo[i + 1][f].max(a);
                prefix_hi[i + 1][f] = prefix_hi[i + 1][f].min(b);
            }
        }
        let margins = self.margins(tuple);
        let objective = self.ens.objective();
        let mut suffix_lo = vec![S::neg_infinity(); d];
        let mut suffix_hi = vec![S::infinity(); d];
        let mut lower = vec![S::zero(); d];
        let mut upper = vec![S::zero(); d];
        let mut contrib = vec![0.0f64; d];
        let mut best: Option<Move<S>> = None;
        let mut m = margins.clone();

        for i in (0..n_trees).rev() {
            let mut total = 0.0;
            for f in 0..d {
                lower[f] = prefix_lo[i][f].max(suffix_lo[f]);
                upper[f] = prefix_hi[i][f].min(suffix_hi[f]);
                let (a, b) = axis_range(lower[f], upper[f]).expect("current tuple is feasible");
                let v = self.x0[f].max(a).min(b);
                contrib[f] = (v - self.x0[f]).abs().as_f64();
                total = match self.norm {
                    Norm::L2 => total + contrib[f] * contrib[f],
                    Norm::Linf => f64::max(total, contrib[f]),
                };
            }
            let top = match self.norm {
                Norm::Linf => top_k(&contrib, self.max_bounds + 1),
                Norm::L2 => Vec::new(),
            };
            let c = self.boxes.class_of_tree[i];
            let current = &self.boxes.trees[i][tuple.0[i]];
            'leaves: for (k, leaf) in self.boxes.trees[i].iter().enumerate() {
                if k == tuple.0[i] {
                    continue;
                }
                let mut acc = match self.norm {
                    Norm::L2 => total,
                    Norm::Linf => 0.0,
                };
                for &(f, a, b) in &leaf.bounds {
                    let Some((lo, hi)) = axis_range(lower[f].max(a), upper[f].min(b)) else {
                        continue 'leaves;
                    };
                    let v = self.x0[f].max(lo).min(hi);
                    let cf = (v - self.x0[f]).abs().as_f64();
                    acc = match self.norm {
                        Norm::L2 => acc - contrib[f] * contrib[f] + cf * cf,
                        Norm::Linf => acc.max(cf),
                    };
                }
                let dist = match self.norm {
                    Norm::L2 => acc.max(0.0).sqrt(),
                    Norm::Linf => {
                        let rest = top
                            .iter()
                            .find(|(_, f)| leaf.bounds.iter().all(|b| b.0 != *f))
                            .map_or(0.0, |(v, _)| *v);
                        acc.max(rest)
                    }
                };
                m[c] = margins[c] - current.score + leaf.score;
                let scored = Scored {
                    adversarial: decide_label(objective, &m) != self.y0,
                    dist,
                    gap: margin_gap(objective, &m, self.y0),
                };
                m[c] = margins[c];
                if better(&scored, best.as_ref()) {
                    best = Some(Move {
                        tree: i,
                        leaf: k,
                        dist,
                        gap: scored.gap,
                    });
                }
            }
            for &(f, a, b) in &current.bounds {
                suffix_lo[f] = suffix_lo[f].max(a);
                suffix_hi[f] = suffix_hi[f].min(b);
            }
        }
        best
    }
}

/// Candidate as seen by the selection rule.
struct Scored<S> {
    adversarial: bool,
    dist: f64,
    gap: S,
}

/// The `k` largest values with their indices, descending.
fn top_k(values: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, &v) in values.iter().enumerate() {
        if top.len() < k || v > top[top.len() - 1].0 {
            let at = top.partition_point(|&(u, _)| u >= v);
            top.insert(at, (v, i));
            top.truncate(k);
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::fixtures::stump;
    use crate::attack::exact_oracle;

    #[test]
    fn stump_is_solved_exactly() {
        let e = stump();
        for norm in [Norm::L2, Norm::Linf] {
            let r = lt_attack(&e, &[0.2], 0, &AttackConfig::default().with_norm(norm));
            assert!(r.success);
            assert_eq!(r.norm(norm), 0.5 - 0.2);
            assert_eq!(r.adversarial.unwrap(), vec![0.5]);
        }
    }

    #[test]
    fn top_k_keeps_largest() {
        assert_eq!(top_k(&[0.1, 0.5, 0.3, 0.5], 2), vec![(0.5, 1), (0.5, 3)]);
        assert_eq!(top_k(&[0.1], 3), vec![(0.1, 0)]);
    }

    #[test]
    fn never_beats_the_oracle() {
        use crate::data::NormalizationSpec;
        use crate::gbdt::{Node, Objective, Tree};
        let a = Tree::new(
            vec![
                Node::Split { feature: 0, threshold: 0.4, left: 1, right: 2 },
                Node::Split { feature: 1, threshold: 0.6, left: 3, right: 4 },
                Node::Leaf { score: 1.0 },
                Node::Leaf { score: -1.0 },
                Node::Leaf { score: 0.3 },
            ],
            0,
        )
        .unwrap();
        let b = Tree::stump(1, 0.2, -0.8, 0.4, 0);
        let e = Ensemble::new(vec![a, b], 2, 2, Objective::BinaryLogistic, 0.0, NormalizationSpec::identity(2)).unwrap();
        let x0 = [0.1, 0.1];
        let y0 = e.predict_label(&x0).unwrap();
        for norm in [Norm::L2, Norm::Linf] {
            let lt = lt_attack(&e, &x0, y0, &AttackConfig::default().with_norm(norm));
            let ex = exact_oracle(&e, &x0, y0, norm).unwrap();
            assert!(lt.success && ex.success);
            assert!(ex.norm(norm) <= lt.norm(norm) + 1e-12);
            assert_ne!(e.predict_label(lt.adversarial.as_ref().unwrap()).unwrap(), y0);
        }
    }
}
