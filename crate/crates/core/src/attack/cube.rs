use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_unit, AttackConfig, AttackResult, Budgeted, Classifier};
use crate::scalar::Scalar;

/// L∞ random search on the vertices `x0 ± eps`, with bisection over `eps`.
///
/// At a fixed `eps` each iteration resamples a random subset of
/// coordinates; with a scoring classifier the move is kept when the class
/// margin drops, otherwise only label flips count. The reported point is the
/// one found at the smallest successful `eps`.
pub fn cube_attack<S: Scalar>(
    clf: &dyn Classifier<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> AttackResult<S> {
    let mut q = Budgeted::new(clf, cfg.max_queries);
    let mut rng = cfg.rng();
    match q.label(x0) {
        None => return AttackResult::failed(y0, q.used()),
        Some(l) if l != y0 => return AttackResult::found(x0, x0.to_vec(), y0, l, q.used()),
        Some(_) => {}
    }
    let d = x0.len();
    let p = cfg.cube.subset_prob.unwrap_or((1.0 / d as f64).max(0.1));

    let mut best = None;
    let (mut lo, mut hi) = (0.0, cfg.cube.initial_eps);
    if let Some(found) = search(&mut q, &mut rng, x0, y0, hi, p, cfg.cube.n_iters) {
        best = Some(found);
    } else if hi < 1.0 {
        lo = hi;
        hi = 1.0;
        best = search(&mut q, &mut rng, x0, y0, hi, p, cfg.cube.n_iters);
    }
    let Some(mut best) = best else {
        return AttackResult::failed(y0, q.used());
    };
    while hi - lo > cfg.cube.eps_tolerance && !q.exhausted() {
        let mid = 0.5 * (lo + hi);
        match search(&mut q, &mut rng, x0, y0, mid, p, cfg.cube.n_iters) {
            Some(found) => {
                best = found;
                hi = mid;
            }
            None => lo = mid,
        }
    }
    AttackResult::found(x0, best.0, y0, best.1, q.used())
}

/// Random search at fixed `eps`; returns the first misclassified vertex.
fn search<S: Scalar>(
    q: &mut Budgeted<'_, S>,
    rng: &mut ChaCha8Rng,
    x0: &[S],
    y0: usize,
    eps: f64,
    p: f64,
    n_iters: u64,
) -> Option<(Vec<S>, usize)> {
    let eps = S::lit(eps);
    let vertex = |f: usize, up: bool| if up { x0[f] + eps } else { x0[f] - eps };
    let mut x: Vec<S> = (0..x0.len()).map(|f| vertex(f, rng.random_bool(0.5))).collect();
    clamp_unit(&mut x);
    let mut score = match evaluate(q, &x, y0)? {
        Eval::Adversarial(l) => return Some((x, l)),
        Eval::Score(s) => s,
    };
    let mut cand = x.clone();
    for _ in 0..n_iters {
        cand.copy_from_slice(&x);
        let mut changed = false;
        for f in 0..x0.len() {
            if rng.random_bool(p) {
                cand[f] = vertex(f, rng.random_bool(0.5));
                changed = true;
            }
        }
        if !changed {
            let f = rng.random_range(0..x0.len());
            cand[f] = vertex(f, rng.random_bool(0.5));
        }
        clamp_unit(&mut cand);
        match evaluate(q, &cand, y0)? {
            Eval::Adversarial(l) => return Some((cand, l)),
            Eval::Score(Some(s)) if score.is_some_and(|cur| s < cur) => {
                score = Some(s);
                x.copy_from_slice(&cand);
            }
            Eval::Score(_) => {}
        }
    }
    None
}

enum Eval<S> {
    Adversarial(usize),
    Score(Option<S>),
}

/// One budgeted evaluation. With scores, a label query is only spent when
/// the margin does not settle the label.
fn evaluate<S: Scalar>(q: &mut Budgeted<'_, S>, x: &[S], y0: usize) -> Option<Eval<S>> {
    if q.has_margin() {
        let gap = q.margin(x, y0)?.expect("classifier reports margins");
        if gap > S::zero() {
            return Some(Eval::Score(Some(gap)));
        }
    }
    let l = q.label(x)?;
    Some(if l != y0 {
        Eval::Adversarial(l)
    } else {
        Eval::Score(None)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::fixtures::{constant, stump};
    use crate::attack::LabelFn;

    #[test]
    fn stump_bisection_finds_point_three() {
        let e = stump();
        let r = cube_attack(&e, &[0.2], 0, &AttackConfig::default());
        assert!(r.success);
        assert!((r.linf - 0.3).abs() <= 1e-3, "{}", r.linf);
        assert!(r.linf >= 0.3 - 1e-12);
        assert!(r.queries <= 20_000);
    }

    #[test]
    fn hard_label_mode_also_works() {
        let e = stump();
        let f = LabelFn::new(1, |x: &[f64]| e.predict_label(x).unwrap());
        let r = cube_attack(&f, &[0.2], 0, &AttackConfig::default());
        assert!(r.success && (r.linf - 0.3).abs() <= 1e-3);
    }

    #[test]
    fn constant_classifier_is_unattackable() {
        let r = cube_attack(&constant(3), &[0.2, 0.4, 0.6], 0, &AttackConfig::default());
        assert!(!r.success);
        assert!(r.adversarial.is_none());
        assert!(r.queries <= 20_000);
    }

    #[test]
    fn reruns_are_reproducible() {
        let e = stump();
        let cfg = AttackConfig::default().with_seed(7);
        assert_eq!(cube_attack(&e, &[0.2], 0, &cfg), cube_attack(&e, &[0.2], 0, &cfg));
    }
}
