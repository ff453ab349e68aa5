use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{clamp_unit, AttackConfig, AttackResult, Budgeted, Classifier, Norm};
use crate::scalar::Scalar;

/// Number of step-size halvings tried before an iteration counts as stalled.
const LINE_SEARCH_TRIES: usize = 8;
/// Consecutive stalled iterations that end the search.
const MAX_STALLS: usize = 4;
/// Multiplicative steps of the local boundary search around a hint.
const LOCAL_STEPS: usize = 30;

/// Zeroth-order optimization of the boundary distance `g(θ)` with
/// finite-difference gradient estimates.
pub fn opt_attack<S: Scalar>(
    clf: &dyn Classifier<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> AttackResult<S> {
    run(clf, x0, y0, cfg, Estimator::FiniteDifference)
}

/// As [`opt_attack`], but each sampled direction contributes only the sign
/// of the change in `g`, read from one label query at the current radius.
pub fn signopt_attack<S: Scalar>(
    clf: &dyn Classifier<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
) -> AttackResult<S> {
    run(clf, x0, y0, cfg, Estimator::Sign)
}

#[derive(Clone, Copy, PartialEq)]
enum Estimator {
    FiniteDifference,
    Sign,
}

fn run<S: Scalar>(
    clf: &dyn Classifier<S>,
    x0: &[S],
    y0: usize,
    cfg: &AttackConfig,
    estimator: Estimator,
) -> AttackResult<S> {
    let mut q = Budgeted::new(clf, cfg.max_queries);
    match q.label(x0) {
        None => return AttackResult::failed(y0, q.used()),
        Some(l) if l != y0 => return AttackResult::found(x0, x0.to_vec(), y0, l, q.used()),
        Some(_) => {}
    }
    let mut rng = cfg.rng();
    let oc = &cfg.opt;
    let ray = Ray {
        x0,
        y0,
        norm: cfg.norm,
        tol: oc.tolerance,
    };
    let d = x0.len();

    // Start direction: best of the random directions and the direction
    // towards the first adversarial random probe.
    let mut candidates: Vec<Vec<f64>> = (0..oc.n_init_directions)
        .map(|_| gaussian(&mut rng, d))
        .collect();
    let mut probe = vec![S::zero(); d];
    for _ in 0..10 * d {
        for v in probe.iter_mut() {
            *v = S::lit(rng.random::<f64>());
        }
        match q.is_adversarial(&probe, y0) {
            Some(true) => {
                candidates.push(x0.iter().zip(&probe).map(|(&a, &b)| (b - a).as_f64()).collect());
                break;
            }
            Some(false) => {}
            None => break,
        }
    }
    let mut best: Option<(Vec<f64>, Boundary<S>)> = None;
    for dir in candidates {
        let Some(theta) = normalize(&dir, cfg.norm) else {
            continue;
        };
        let cap = best.as_ref().map(|b| b.1.lambda);
        if let Some(b) = ray.coarse(&mut q, &theta, cap) {
            if best.as_ref().is_none_or(|cur| b.lambda < cur.1.lambda) {
                best = Some((theta, b));
            }
        }
    }
    let Some((mut theta, mut g)) = best else {
        return AttackResult::failed(y0, q.used());
    };

    let mut stalls = 0;
    let mut beta = oc.beta;
    for _ in 0..oc.max_iters {
        if q.exhausted() {
            break;
        }
        let us: Vec<Vec<f64>> = (0..oc.n_directions)
            .map(|_| normalize(&gaussian(&mut rng, d), Norm::L2).expect("nonzero sample"))
            .collect();
        let est = match estimator {
            Estimator::Sign => sign_gradient_estimate(&mut q, &ray, &theta, g.lambda, &us, beta),
            Estimator::FiniteDifference => {
                let mut est = vec![0.0; d];
                for u in &us {
                    let Some(t2) = normalize(&axpy(&theta, beta, u), cfg.norm) else {
                        continue;
                    };
                    let g2 = ray.local(&mut q, &t2, g.lambda).map_or(g.lambda * 2.0, |b| b.lambda);
                    let coef = (g2 - g.lambda) / beta;
                    for (e, &ui) in est.iter_mut().zip(u) {
                        *e += coef * ui / us.len() as f64;
                    }
                }
                est
            }
        };
        let mut step = oc.initial_step;
        let mut improved = false;
        for _ in 0..LINE_SEARCH_TRIES {
            if q.exhausted() {
                break;
            }
            let Some(cand) = normalize(&axpy(&theta, -step, &est), cfg.norm) else {
                break;
            };
            if let Some(b) = ray.local(&mut q, &cand, g.lambda) {
                if b.lambda < g.lambda {
                    theta = cand;
                    g = b;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if improved {
            stalls = 0;
        } else {
            stalls += 1;
            beta = (beta * 0.5).max(1e-6);
            if stalls >= MAX_STALLS {
                break;
            }
        }
    }
    AttackResult::found(x0, g.point, y0, g.label, q.used())
}

/// Sign-only directional estimate `Σ sign(g(θ + βu) − g(θ)) u / |us|`.
///
/// Each sign is read from a single query: the perturbed direction at the
/// current radius `g_theta` is adversarial exactly when `g` would shrink.
pub fn sign_gradient_estimate<S: Scalar>(
    q: &mut Budgeted<'_, S>,
    ray: &Ray<'_, S>,
    theta: &[f64],
    g_theta: f64,
    us: &[Vec<f64>],
    beta: f64,
) -> Vec<f64> {
    let mut est = vec![0.0; theta.len()];
    for u in us {
        let Some(t2) = normalize(&axpy(theta, beta, u), ray.norm) else {
            continue;
        };
        let Some(adv) = q.is_adversarial(&ray.point(&t2, g_theta), ray.y0) else {
            break;
        };
        let sign = if adv { -1.0 } else { 1.0 };
        for (e, &ui) in est.iter_mut().zip(u) {
            *e += sign * ui / us.len() as f64;
        }
    }
    est
}

/// Rays from `x0`: `x0 + λθ` clamped to the unit cube.
pub struct Ray<'a, S> {
    pub x0: &'a [S],
    pub y0: usize,
    pub norm: Norm,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
}

/// First adversarial radius found along a direction, with its point.
#[derive(Debug, Clone)]
struct Boundary<S> {
    lambda: f64,
    point: Vec<S>,
    label: usize,
}

impl<S: Scalar> Ray<'_, S> {
    pub fn point(&self, theta: &[f64], lambda: f64) -> Vec<S> {
        let mut p: Vec<S> = self
            .x0
            .iter()
            .zip(theta)
            .map(|(&a, &t)| a + S::lit(lambda * t))
            .collect();
        clamp_unit(&mut p);
        p
    }

    /// Radius past which every moving coordinate is clamped.
    fn lambda_max(&self, theta: &[f64]) -> f64 {
        self.x0
            .iter()
            .zip(theta)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&a, &t)| {
                let a = a.as_f64();
                if t > 0.0 {
                    (1.0 - a) / t
                } else {
                    a / -t
                }
            })
            .fold(0.0, f64::max)
    }

    /// Boundary along `theta` from scratch: ten coarse steps up to the
    /// clamp radius (or `cap`), then bisection.
    fn coarse(&self, q: &mut Budgeted<'_, S>, theta: &[f64], cap: Option<f64>) -> Option<Boundary<S>> {
        let lmax = self.lambda_max(theta);
        let top = cap.map_or(lmax, |c| c.min(lmax));
        if top <= 0.0 {
            return None;
        }
        let mut lo = 0.0;
        for k in 1..=10 {
            let hi = top * k as f64 / 10.0;
            let p = self.point(theta, hi);
            let l = q.label(&p)?;
            if l != self.y0 {
                return self.bisect(q, theta, lo, Boundary { lambda: hi, point: p, label: l });
            }
            lo = hi;
        }
        None
    }

    /// Boundary along `theta` near a known radius `hint`.
    fn local(&self, q: &mut Budgeted<'_, S>, theta: &[f64], hint: f64) -> Option<Boundary<S>> {
        let lmax = self.lambda_max(theta);
        let mut lambda = hint.min(lmax);
        let p = self.point(theta, lambda);
        let l = q.label(&p)?;
        if l != self.y0 {
            let mut hi = Boundary { lambda, point: p, label: l };
            let mut lo = 0.0;
            for _ in 0..LOCAL_STEPS {
                let next = hi.lambda * 0.99;
                let p = self.point(theta, next);
                let l = q.label(&p)?;
                if l == self.y0 {
                    lo = next;
                    break;
                }
                hi = Boundary { lambda: next, point: p, label: l };
            }
            return self.bisect(q, theta, lo, hi);
        }
        for _ in 0..LOCAL_STEPS {
            let lo = lambda;
            if lo >= lmax {
                return None;
            }
            lambda = (lambda * 1.01).min(lmax);
            let p = self.point(theta, lambda);
            let l = q.label(&p)?;
            if l != self.y0 {
                return self.bisect(q, theta, lo, Boundary { lambda, point: p, label: l });
            }
        }
        None
    }

    /// Bisection keeping `lo` benign and `hi` adversarial.
    fn bisect(
        &self,
        q: &mut Budgeted<'_, S>,
        theta: &[f64],
        mut lo: f64,
        mut hi: Boundary<S>,
    ) -> Option<Boundary<S>> {
        while hi.lambda - lo > self.tol {
            let mid = 0.5 * (lo + hi.lambda);
            let p = self.point(theta, mid);
            let Some(l) = q.label(&p) else {
                break;
            };
            if l != self.y0 {
                hi = Boundary { lambda: mid, point: p, label: l };
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(&xi, &yi)| xi + a * yi).collect()
}

/// Scales to unit length in `norm`; `None` for the zero vector.
fn normalize(v: &[f64], norm: Norm) -> Option<Vec<f64>> {
    let n = match norm {
        Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::Linf => v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
    };
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::fixtures::{constant, stump};
    use crate::attack::LabelFn;

    #[test]
    fn opt_recovers_stump_distance() {
        let e = stump();
        let r = opt_attack(&e, &[0.2], 0, &AttackConfig::default());
        assert!(r.success);
        assert!((r.l2 - 0.3).abs() <= 1e-3, "{}", r.l2);
        assert!(r.queries <= 20_000);
    }

    #[test]
    fn signopt_recovers_stump_distance() {
        let e = stump();
        for norm in [Norm::L2, Norm::Linf] {
            let r = signopt_attack(&e, &[0.2], 0, &AttackConfig::default().with_norm(norm));
            assert!(r.success);
            assert!((r.l2 - 0.3).abs() <= 5e-3, "{}", r.l2);
        }
    }

    #[test]
    fn pointing_away_from_the_boundary_is_infinite() {
        let e = stump();
        let ray = Ray { x0: &[0.2], y0: 0, norm: Norm::L2, tol: 1e-4 };
        let mut q = Budgeted::new(&e, 1000);
        assert!(ray.coarse(&mut q, &[-1.0], None).is_none());
        let b = ray.coarse(&mut q, &[1.0], None).unwrap();
        assert!((b.lambda - 0.3).abs() <= 1e-4 && b.lambda >= 0.3);
    }

    #[test]
    fn constant_classifier_fails() {
        let c = constant(2);
        assert!(!opt_attack(&c, &[0.3, 0.6], 0, &AttackConfig::default()).success);
        let r = signopt_attack(&c, &[0.3, 0.6], 0, &AttackConfig::default());
        assert!(!r.success && r.queries <= 20_000);
    }

    #[test]
    fn orthogonal_samples_give_a_null_step() {
        // depends on feature 0 only; samples along ±e1 cancel out
        let f = LabelFn::new(2, |x: &[f64]| usize::from(x[0] >= 0.5));
        let ray = Ray { x0: &[0.2, 0.5], y0: 0, norm: Norm::L2, tol: 1e-4 };
        let mut q = Budgeted::new(&f, 100);
        let us = vec![vec![0.0, 1.0], vec![0.0, -1.0]];
        let est = sign_gradient_estimate(&mut q, &ray, &[1.0, 0.0], 0.3 + 1e-4, &us, 0.01);
        assert_eq!(est, vec![0.0, 0.0]);
        assert_eq!(q.used(), 2);
    }

    #[test]
    fn budget_is_respected() {
        let e = stump();
        let mut cfg = AttackConfig::default();
        cfg.max_queries = 50;
        let r = signopt_attack(&e, &[0.2], 0, &cfg);
        assert!(r.queries <= 50);
    }
}
