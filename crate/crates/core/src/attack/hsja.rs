use rand::Rng;
use rand_distr::StandardNormal;

use super::{clamp_unit, AttackConfig, AttackResult, Budgeted, Classifier, Norm};
use crate::scalar::Scalar;

/// Outcome of [`boundary_bisect`]: `point` is adversarial with `label`,
/// `benign` is the last point found on the source side.
#[derive(Debug, Clone)]
pub struct Bisection<S> {
    pub point: Vec<S>,
    pub label: usize,
    pub benign: Vec<S>,
}

/// Bisects between `x0` (classified `y0`) and an adversarial point until
/// the bracket is narrower than `tol` of the segment. L2 blends linearly;
/// L∞ shrinks an L∞ ball around `x0` and clips the adversarial point into it.
pub fn boundary_bisect<S: Scalar>(
    q: &mut Budgeted<'_, S>,
    x0: &[S],
    y0: usize,
    adversarial: &[S],
    adv_label: usize,
    norm: Norm,
    tol: f64,
) -> Bisection<S> {
    let radius = norm.distance(x0, adversarial);
    let at = |alpha: f64| -> Vec<S> {
        let a = S::lit(alpha);
        match norm {
            Norm::L2 => x0
                .iter()
                .zip(adversarial)
                .map(|(&o, &v)| o + a * (v - o))
                .collect(),
            Norm::Linf => {
                let r = S::lit(alpha * radius);
                x0.iter()
                    .zip(adversarial)
                    .map(|(&o, &v)| v.max(o - r).min(o + r))
                    .collect()
            }
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut out = Bisection {
        point: adversarial.to_vec(),
        label: adv_label,
        benign: x0.to_vec(),
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        let Some(l) = q.label(&p) else {
            break;
        };
        if l != y0 {
            hi = mid;
            out.point = p;
            out.label = l;
        } else {
            lo = mid;
            out.benign = p;
        }
    }
    out
}

/// Boundary attack with Monte-Carlo normal estimates and geometric steps,
/// using only labels.
pub fn hsja_attack<S: Scalar>(
    clf: &dyn Classifier<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> AttackResult<S> {
    let mut q = Budgeted::new(clf, cfg.max_queries);
    match q.label(x0) {
        None => return AttackResult::failed(y0, q.used()),
        Some(l) if l != y0 => return AttackResult::found(x0, x0.to_vec(), y0, l, q.used()),
        Some(_) => {}
    }
    let hc = &cfg.hsja;
    let norm = cfg.norm;
    let mut rng = cfg.rng();
    let d = x0.len();

    let mut start = None;
    let mut probe = vec![S::zero(); d];
    for _ in 0..(10 * d).max(1000) {
        for v in probe.iter_mut() {
            *v = S::lit(rng.random::<f64>());
        }
        match q.label(&probe) {
            Some(l) if l != y0 => {
                start = Some((probe.clone(), l));
                break;
            }
            Some(_) => {}
            None => break,
        }
    }
    let Some((adv, label)) = start else {
        return AttackResult::failed(y0, q.used());
    };
    let mut cur = boundary_bisect(&mut q, x0, y0, &adv, label, norm, hc.tolerance);
    let mut dist = norm.distance(x0, &cur.point);
    let mut best = (dist, cur.point.clone(), cur.label);

    for it in 1..=hc.max_iters {
        if q.exhausted() || dist == 0.0 {
            break;
        }
        // The boundary lies within one bracket width of `cur.point`; probes
        // must reach past it along a random direction.
        let width = norm.distance(&cur.benign, &cur.point);
        let delta = (2.0 * (d as f64).sqrt() * width).max(1e-6);
        let n = ((hc.initial_gradient_samples as f64 * (it as f64).sqrt()) as usize)
            .min(hc.max_gradient_samples);
        let mut us = Vec::with_capacity(n);
        let mut phis = Vec::with_capacity(n);
        for _ in 0..n {
            let u: Vec<f64> = match norm {
                Norm::L2 => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
                Norm::Linf => (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if un == 0.0 {
                continue;
            }
            let u: Vec<f64> = u.iter().map(|v| v / un).collect();
            let mut p: Vec<S> = cur
                .point
                .iter()
                .zip(&u)
                .map(|(&a, &ui)| a + S::lit(delta * ui))
                .collect();
            clamp_unit(&mut p);
            let Some(adv) = q.is_adversarial(&p, y0) else {
                break;
            };
            phis.push(if adv { 1.0 } else { -1.0 });
            us.push(u);
        }
        if us.is_empty() {
            break;
        }
        let mean = phis.iter().sum::<f64>() / phis.len() as f64;
        let baseline = if mean.abs() == 1.0 { 0.0 } else { mean };
        let mut grad = vec![0.0; d];
        for (u, phi) in us.iter().zip(&phis) {
            for (g, &ui) in grad.iter_mut().zip(u) {
                *g += (phi - baseline) * ui;
            }
        }
        let dir: Vec<f64> = match norm {
            Norm::L2 => {
                let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gn == 0.0 {
                    continue;
                }
                grad.iter().map(|v| v / gn).collect()
            }
            Norm::Linf => grad.iter().map(|v| v.signum() * f64::from(*v != 0.0)).collect(),
        };

        let mut eps = dist / (it as f64).sqrt();
        let mut stepped = None;
        while eps > 1e-12 {
            let mut p: Vec<S> = cur
                .point
                .iter()
                .zip(&dir)
                .map(|(&a, &g)| a + S::lit(eps * g))
                .collect();
            clamp_unit(&mut p);
            match q.label(&p) {
                Some(l) if l != y0 => {
                    stepped = Some((p, l));
                    break;
                }
                Some(_) => eps *= 0.5,
                None => break,
            }
        }
        let Some((p, l)) = stepped else {
            continue;
        };
        cur = boundary_bisect(&mut q, x0, y0, &p, l, norm, hc.tolerance);
        dist = norm.distance(x0, &cur.point);
        if dist < best.0 {
            best = (dist, cur.point.clone(), cur.label);
        }
    }
    AttackResult::found(x0, best.1, y0, best.2, q.used())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::fixtures::{constant, stump};

    #[test]
    fn stump_distance_within_tolerance() {
        let e = stump();
        for norm in [Norm::L2, Norm::Linf] {
            let r = hsja_attack(&e, &[0.2], 0, &AttackConfig::default().with_norm(norm));
            assert!(r.success);
            assert!((r.l2 - 0.3).abs() <= 1e-2, "{}", r.l2);
            assert!(r.queries <= 20_000);
        }
    }

    #[test]
    fn bisection_brackets_the_boundary() {
        let e = stump();
        let mut q = Budgeted::new(&e, 1000);
        let tol = 1e-3;
        let b = boundary_bisect(&mut q, &[0.2], 0, &[0.9], 1, Norm::L2, tol);
        assert_eq!(e.predict_label(&b.point).unwrap(), 1);
        assert_eq!(e.predict_label(&b.benign).unwrap(), 0);
        assert!(b.point[0] - b.benign[0] <= tol * 0.7 + 1e-15);
    }

    #[test]
    fn constant_classifier_fails() {
        let r = hsja_attack(&constant(2), &[0.1, 0.9], 0, &AttackConfig::default());
        assert!(!r.success);
        assert!(r.queries <= 20_000);
    }
}
