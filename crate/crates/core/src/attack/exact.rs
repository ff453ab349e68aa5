use super::boxes::axis_range;
use super::{AttackResult, LeafBoxes, Norm};
use crate::error::{Error, Result};
use crate::gbdt::{decide_label, Ensemble, Objective};
use crate::scalar::Scalar;

/// Largest threshold grid [`exact_oracle`] will enumerate.
pub const GRID_CELL_LIMIT: u128 = 10_000_000;

const DEFAULT_NODE_BUDGET: u64 = 200_000_000;

/// Number of cells in the grid induced by every ensemble threshold.
pub fn grid_cell_count<S: Scalar>(ens: &Ensemble<S>) -> u128 {
    ens.thresholds_per_feature()
        .values()
        .map(|ts| ts.len() as u128 + 1)
        .fold(1u128, |acc, k| acc.saturating_mul(k))
}

/// Exact minimal perturbation by enumerating every threshold-grid cell.
///
/// The prediction is constant on each cell, so the nearest point of the
/// nearest misclassified cell is optimal. Refuses grids above
/// [`GRID_CELL_LIMIT`] cells.
pub fn exact_oracle<S: Scalar>(
    ens: &Ensemble<S>,
    x0: &[S],
    y0: usize,
    norm: Norm,
) -> Result<AttackResult<S>> {
    check_dim(ens, x0)?;
    let cells = grid_cell_count(ens);
    if cells > GRID_CELL_LIMIT {
        return Err(Error::GridTooLarge {
            cells,
            limit: GRID_CELL_LIMIT,
        });
    }
    let l0 = ens.label_of(x0);
    if l0 != y0 {
        return Ok(AttackResult::found(x0, x0.to_vec(), y0, l0, 1));
    }

    // Per constrained axis: the closest admissible value in each interval
    // and its distance from x0.
    let axes: Vec<(usize, Vec<(S, f64)>)> = ens
        .thresholds_per_feature()
        .into_iter()
        .map(|(f, ts)| {
            let mut bounds = Vec::with_capacity(ts.len() + 2);
            bounds.push(S::neg_infinity());
            bounds.extend(ts);
            bounds.push(S::infinity());
            let options = bounds
                .windows(2)
                .filter_map(|w| axis_range(w[0], w[1]))
                .map(|(lo, hi)| {
                    let v = x0[f].max(lo).min(hi);
                    (v, (v - x0[f]).abs().as_f64())
                })
                .collect();
            (f, options)
        })
        .collect();
    if axes.iter().any(|(_, o)| o.is_empty()) {
        return Ok(AttackResult::failed(y0, 1));
    }

    let mut queries = 1u64;
    let mut digits = vec![0usize; axes.len()];
    let mut point = x0.to_vec();
    let mut best: Option<(f64, Vec<S>, usize)> = None;
    loop {
        let dist = match norm {
            Norm::L2 => axes
                .iter()
                .zip(&digits)
                .map(|((_, o), &k)| o[k].1 * o[k].1)
                .sum::<f64>()
                .sqrt(),
            Norm::Linf => axes
                .iter()
                .zip(&digits)
                .map(|((_, o), &k)| o[k].1)
                .fold(0.0, f64::max),
        };
        if best.as_ref().is_none_or(|b| dist < b.0) {
            for ((f, o), &k) in axes.iter().zip(&digits) {
                point[*f] = o[k].0;
            }
            queries += 1;
            let l = ens.label_of(&point);
            if l != y0 {
                best = Some((dist, point.clone(), l));
            }
        }
        // mixed-radix increment
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(match best {
                    Some((_, p, l)) => AttackResult::found(x0, p, y0, l, queries),
                    None => AttackResult::failed(y0, queries),
                });
            }
            digits[i] += 1;
            if digits[i] < axes[i].1.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Exact minimal perturbation by depth-first search over leaf tuples with
/// distance and score-bound pruning. Works on ensembles far beyond the grid
/// limit; errors once `node_budget` search nodes are spent.
pub fn exact_search<S: Scalar>(
    ens: &Ensemble<S>,
    x0: &[S],
    y0: usize,
    norm: Norm,
    node_budget: Option<u64>,
) -> Result<AttackResult<S>> {
    check_dim(ens, x0)?;
    let l0 = ens.label_of(x0);
    if l0 != y0 {
        return Ok(AttackResult::found(x0, x0.to_vec(), y0, l0, 1));
    }
    let boxes = LeafBoxes::new(ens);
    let n_out = ens.n_margins();
    let n_trees = boxes.trees.len();
    // Suffix sums of per-class extreme leaf scores.
    let mut rem_max = vec![vec![S::zero(); n_out]; n_trees + 1];
    let mut rem_min = vec![vec![S::zero(); n_out]; n_trees + 1];
    for t in (0..n_trees).rev() {
        let c = boxes.class_of_tree[t];
        let hi = boxes.trees[t].iter().map(|l| l.score).fold(S::neg_infinity(), S::max);
        let lo = boxes.trees[t].iter().map(|l| l.score).fold(S::infinity(), S::min);
        rem_max[t] = rem_max[t + 1].clone();
        rem_min[t] = rem_min[t + 1].clone();
        rem_max[t][c] += hi;
        rem_min[t][c] += lo;
    }
    let d = x0.len();
    let mut st = Search {
        boxes: &boxes,
        objective: ens.objective(),
        x0,
        y0,
        norm,
        lower: vec![S::neg_infinity(); d],
        upper: vec![S::infinity(); d],
        contrib: vec![0.0; d],
        margins: vec![ens.base_score(); n_out],
        rem_max,
        rem_min,
        best: f64::INFINITY,
        best_point: None,
        nodes: 0,
        budget: node_budget.unwrap_or(DEFAULT_NODE_BUDGET),
    };
    st.dfs(0, 0.0)?;
    Ok(match st.best_point {
        Some(p) => {
            let l = ens.label_of(&p);
            debug_assert_ne!(l, y0);
            AttackResult::found(x0, p, y0, l, 2)
        }
        None => AttackResult::failed(y0, 1),
    })
}

fn check_dim<S: Scalar>(ens: &Ensemble<S>, x0: &[S]) -> Result<()> {
    if x0.len() != ens.n_features() {
        return Err(Error::DimensionMismatch {
            expected: ens.n_features(),
            got: x0.len(),
        });
    }
    Ok(())
}

struct Search<'a, S> {
    boxes: &'a LeafBoxes<S>,
    objective: Objective,
    x0: &'a [S],
    y0: usize,
    norm: Norm,
    lower: Vec<S>,
    upper: Vec<S>,
    /// Per-axis distance from x0 to the current box.
    contrib: Vec<f64>,
    margins: Vec<S>,
    rem_max: Vec<Vec<S>>,
    rem_min: Vec<Vec<S>>,
    best: f64,
    best_point: Option<Vec<S>>,
    nodes: u64,
    budget: u64,
}

impl<S: Scalar> Search<'_, S> {
    /// `acc` is the squared L2 sum or the L∞ max of `contrib`.
    fn dfs(&mut self, t: usize, acc: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::SearchBudget(self.budget));
        }
        if t == self.boxes.trees.len() {
            if decide_label(self.objective, &self.margins) != self.y0 {
                let dist = self.finish(acc);
                if dist < self.best {
                    self.best = dist;
                    self.best_point = Some(self.project());
                }
            }
            return Ok(());
        }
        if !self.can_flip(t) {
            return Ok(());
        }
        let c = self.boxes.class_of_tree[t];
        let mut options: Vec<(f64, usize)> = Vec::new();
        for (k, leaf) in self.boxes.trees[t].iter().enumerate() {
            let mut next = acc;
            let mut feasible = true;
            for &(f, lo, hi) in &leaf.bounds {
                let lo = self.lower[f].max(lo);
                let hi = self.upper[f].min(hi);
                match axis_range(lo, hi) {
                    None => {
                        feasible = false;
                        break;
                    }
                    Some((a, b)) => {
                        let v = self.x0[f].max(a).min(b);
                        let cf = (v - self.x0[f]).abs().as_f64();
                        next = self.combine(next, self.contrib[f], cf);
                    }
                }
            }
            if feasible && self.finish(next) < self.best {
                options.push((next, k));
            }
        }
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (next, k) in options {
            if self.finish(next) >= self.best {
                break;
            }
            let leaf = &self.boxes.trees[t][k];
            let saved: Vec<(usize, S, S, f64)> = leaf
                .bounds
                .iter()
                .map(|&(f, _, _)| (f, self.lower[f], self.upper[f], self.contrib[f]))
                .collect();
            for &(f, lo, hi) in &leaf.bounds {
                self.lower[f] = self.lower[f].max(lo);
                self.upper[f] = self.upper[f].min(hi);
                let (a, b) = axis_range(self.lower[f], self.upper[f]).expect("feasible");
                let v = self.x0[f].max(a).min(b);
                self.contrib[f] = (v - self.x0[f]).abs().as_f64();
            }
            self.margins[c] += leaf.score;
            let r = self.dfs(t + 1, next);
            self.margins[c] -= leaf.score;
            for (f, lo, hi, cf) in saved {
                self.lower[f] = lo;
                self.upper[f] = hi;
                self.contrib[f] = cf;
            }
            r?;
        }
        Ok(())
    }

    fn combine(&self, acc: f64, old: f64, new: f64) -> f64 {
        match self.norm {
            Norm::L2 => acc - old * old + new * new,
            Norm::Linf => acc.max(new),
        }
    }

    fn finish(&self, acc: f64) -> f64 {
        match self.norm {
            Norm::L2 => acc.max(0.0).sqrt(),
            Norm::Linf => acc,
        }
    }

    /// Whether the remaining trees could still move the label off `y0`.
    fn can_flip(&self, t: usize) -> bool {
        let (hi, lo) = (&self.rem_max[t], &self.rem_min[t]);
        match self.objective {
            Objective::BinaryLogistic => {
                if self.y0 == 1 {
                    self.margins[0] + lo[0] < S::zero()
                } else {
                    self.margins[0] + hi[0] >= S::zero()
                }
            }
            Objective::Softmax => {
                let floor = self.margins[self.y0] + lo[self.y0];
                (0..self.margins.len())
                    .filter(|&c| c != self.y0)
                    .any(|c| self.margins[c] + hi[c] >= floor)
            }
        }
    }

    fn project(&self) -> Vec<S> {
        (0..self.x0.len())
            .map(|f| {
                let (a, b) = axis_range(self.lower[f], self.upper[f]).expect("feasible box");
                self.x0[f].max(a).min(b)
            })
            .collect()
    }
}
